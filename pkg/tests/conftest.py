from __future__ import annotations

from pathlib import Path

import pytest

from kgqa.kg_store import KnowledgeGraph, load_graph_file
from kgqa.llm import ScriptedBackend, parse_script

FIXTURES = Path(__file__).parent / "fixtures"

BECKHAM_QUESTION = (
    "The football manager who recruited David Beckham managed "
    "Manchester United during what timeframe?"
)
BECKHAM_ANSWER = "1986–2013"
SUB_Q1 = "Who recruited David Beckham?"
SUB_Q2 = "When did that manager coach Manchester United?"


@pytest.fixture
def fixture_graph() -> KnowledgeGraph:
    return load_graph_file(str(FIXTURES / "beckham_graph.tsv"))


def golden_rules():
    with open(FIXTURES / "beckham_script.jsonl", encoding="utf-8") as f:
        return parse_script(f.readlines())


@pytest.fixture
def golden_backend() -> ScriptedBackend:
    # fresh backend per test so recorded requests start empty
    return ScriptedBackend(golden_rules())
