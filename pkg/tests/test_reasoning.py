from __future__ import annotations

import pytest

from kgqa.embedding import HashedEmbedder
from kgqa.extraction import TripleKey, build_key_set
from kgqa.kg_store import Triple
from kgqa.llm import RES_TEMPLATE, ScriptRule, ScriptedBackend
from kgqa.mindmap import single_node_map
from kgqa.reasoning import (
    ABSTENTION_PHRASE,
    Outcome,
    ReasoningAborted,
    ReasoningConfig,
    RetrievedTripleSet,
    VerifiedAnswer,
    answer_node,
    detect_abstention,
    rethink_node,
    serialize_evidence,
    serialize_verified,
    solve,
    verify_answer,
)
from kgqa.retrieval import filter_by_similarity


def no_evidence() -> RetrievedTripleSet:
    return RetrievedTripleSet(kept=(), candidate_count=0, epsilon=0.7)


def beckham_evidence() -> RetrievedTripleSet:
    t = Triple.from_surface("David Beckham", "recruited_by", "Alex Ferguson")
    keys = build_key_set([TripleKey("David Beckham", "recruited_by", "Alex Ferguson")])
    return filter_by_similarity({t}, keys, HashedEmbedder(), 0.5)


def res_backend(reply: str) -> ScriptedBackend:
    return ScriptedBackend([ScriptRule(patterns=("answer the questions",), reply=reply)])


def ver_backend(reply: str) -> ScriptedBackend:
    return ScriptedBackend([ScriptRule(patterns=("logical verification",), reply=reply)])


class TestDetectAbstention:
    def test_canonical_phrase(self):
        assert detect_abstention("Insufficient information, I don't know")

    def test_curly_apostrophe(self):
        assert detect_abstention("I don’t know")

    def test_ordinary_answer(self):
        assert not detect_abstention("Alex Ferguson")


class TestAnswerNode:
    def test_bracketed_answer_extracted(self):
        backend = res_backend("[Alex Ferguson]")
        answer = answer_node("Who recruited David Beckham?", beckham_evidence(), [], backend)
        assert answer == "Alex Ferguson"

    def test_abstention_reply_passed_through(self):
        backend = res_backend(f"[{ABSTENTION_PHRASE}]")
        answer = answer_node("Q?", no_evidence(), [], backend)
        assert detect_abstention(answer)

    def test_no_brackets_returns_raw_with_warning(self):
        warnings: list[str] = []
        backend = res_backend("raw completion text")
        answer = answer_node("Q?", no_evidence(), [], backend, warnings=warnings)
        assert answer == "raw completion text"
        assert warnings

    def test_reasoning_temperature_zero(self):
        backend = res_backend("[x]")
        answer_node("Q?", no_evidence(), [], backend)
        assert backend.records[0].temperature == 0.0

    def test_prompt_contains_evidence_and_verified(self):
        backend = res_backend("[x]")
        verified = [VerifiedAnswer(question="prior?", answer="prior answer", node="0.0")]
        answer_node("Q?", beckham_evidence(), verified, backend)
        prompt = backend.records[0].prompt
        assert "(David Beckham, recruited_by, Alex Ferguson)" in prompt
        assert "Q: prior?" in prompt and "A: prior answer" in prompt


class TestVerifyAnswer:
    def test_right(self):
        assert verify_answer("Q?", "a", no_evidence(), [], ver_backend("[right]")) is True

    def test_wrong_case_insensitive(self):
        assert verify_answer("Q?", "a", no_evidence(), [], ver_backend("[WRONG]")) is False

    def test_unparseable_verdict_conservative(self):
        warnings: list[str] = []
        verdict = verify_answer("Q?", "a", no_evidence(), [], ver_backend("maybe"), warnings=warnings)
        assert verdict is False
        assert warnings

    def test_answer_bound_in_prompt(self):
        backend = ver_backend("[right]")
        verify_answer("Q?", "my candidate", no_evidence(), [], backend)
        assert "Answer: my candidate" in backend.records[0].prompt


class TestRethinkNode:
    def test_bracketed_rethink(self):
        backend = ScriptedBackend([ScriptRule(patterns=("re-think",), reply="[Carabao Cup]")])
        assert rethink_node("Q?", no_evidence(), [], backend) == "Carabao Cup"

    def test_abstention_rethink(self):
        backend = ScriptedBackend(
            [ScriptRule(patterns=("re-think",), reply=f"[{ABSTENTION_PHRASE}]")]
        )
        assert detect_abstention(rethink_node("Q?", no_evidence(), [], backend))

    def test_rethink_after_true_verdict_is_contract_violation(self):
        backend = ScriptedBackend([ScriptRule(patterns=("re-think",), reply="[x]")])
        with pytest.raises(ValueError):
            rethink_node("Q?", no_evidence(), [], backend, verdict=True)


class TestSerializers:
    def test_evidence_lines_and_cap(self):
        ev = beckham_evidence()
        assert serialize_evidence(ev) == "(David Beckham, recruited_by, Alex Ferguson)"
        assert serialize_evidence(no_evidence()) == "None"

    def test_verified_lines(self):
        vs = [VerifiedAnswer("q1?", "a1", "0.0"), VerifiedAnswer("q2?", "a2", "0.1")]
        text = serialize_verified(vs)
        assert text == "Q: q1?\nA: a1\nQ: q2?\nA: a2"
        assert serialize_verified([]) == "None"


def scripted_session(rules: list[ScriptRule]) -> ScriptedBackend:
    return ScriptedBackend(rules)


class TestSolve:
    def test_single_node_map(self):
        m = single_node_map("Q?")
        backend = scripted_session(
            [
                ScriptRule(patterns=("answer the questions",), reply="[final]"),
                ScriptRule(patterns=("logical verification",), reply="[right]"),
            ]
        )
        trace = solve(m, no_evidence(), backend, backend)
        assert len(trace.records) == 1
        assert trace.final_answer == "final"
        assert trace.verify_calls == 1
        assert trace.rethink_calls == 0

    def test_wrong_verdict_triggers_single_rethink(self):
        m = single_node_map("Q?")
        backend = scripted_session(
            [
                ScriptRule(patterns=("answer the questions",), reply="[first guess]"),
                ScriptRule(patterns=("logical verification",), reply="[wrong]"),
                ScriptRule(patterns=("re-think",), reply="[Carabao Cup]"),
            ]
        )
        trace = solve(m, no_evidence(), backend, backend)
        record = trace.records[0]
        assert record.verdict is False
        assert record.rethink == "Carabao Cup"
        assert record.final == "Carabao Cup"
        assert trace.final_answer == "Carabao Cup"
        assert trace.rethink_calls == 1

    def test_verification_disabled_forces_true(self):
        m = single_node_map("Q?")
        backend = scripted_session(
            [ScriptRule(patterns=("answer the questions",), reply="[a]")]
        )
        trace = solve(m, no_evidence(), backend, backend, ReasoningConfig(verification_enabled=False))
        assert trace.verify_calls == 0
        assert trace.rethink_calls == 0
        assert trace.records[0].verdict is True
        assert trace.records[0].rethink is None

    def test_abstained_outcome(self):
        m = single_node_map("Q?")
        backend = scripted_session(
            [
                ScriptRule(patterns=("answer the questions",), reply=f"[{ABSTENTION_PHRASE}]"),
                ScriptRule(patterns=("logical verification",), reply="[right]"),
            ]
        )
        trace = solve(m, no_evidence(), backend, backend)
        assert trace.records[0].outcome is Outcome.ABSTAINED
        assert detect_abstention(trace.final_answer)

    def test_verified_set_grows_in_order(self, golden_backend, fixture_graph):
        from kgqa.mindmap import DecompositionConfig, build_mind_map
        from conftest import BECKHAM_QUESTION, SUB_Q1

        m = build_mind_map(BECKHAM_QUESTION, golden_backend, DecompositionConfig())
        trace = solve(m, no_evidence(), golden_backend, golden_backend)
        # root's reasoning prompt must carry both verified leaf answers
        res_prompts = [
            r.prompt
            for r in golden_backend.records
            if RES_TEMPLATE.head in r.prompt
        ]
        assert f"Q: {SUB_Q1}" in res_prompts[-1]
        assert "A: Alex Ferguson" in res_prompts[-1]
        assert trace.final_answer == "1986–2013"

    def test_backend_error_carries_partial_trace(self):
        from kgqa.mindmap import MindMap, MindMapNode, NodeState

        nodes = {
            "0": MindMapNode("0", "root?", 0, NodeState.CONTINUE, children=["0.0", "0.1"]),
            "0.0": MindMapNode("0.0", "left?", 1, NodeState.END, parent="0"),
            "0.1": MindMapNode("0.1", "right?", 1, NodeState.END, parent="0"),
        }
        m = MindMap(nodes=nodes, root="0")
        backend = scripted_session(
            [
                ScriptRule(patterns=("answer the questions", "Input: left?"), reply="[ok]"),
                ScriptRule(patterns=("logical verification", "Input: left?"), reply="[right]"),
                # no rule for "right?" -> script miss
            ]
        )
        with pytest.raises(ReasoningAborted) as exc:
            solve(m, no_evidence(), backend, backend)
        assert len(exc.value.partial_trace.records) == 1
