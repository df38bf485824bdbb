"""LLM backend port: prompt templates, scripted replay backend, HTTP backend.

Two temperature presets exist. Exploration (decomposition and key
extraction) runs at 0.4; reasoning, verification, and rethinking run at 0.
The scripted backend records every request it serves, so tests can assert
on the exact call sequence and temperatures.
"""
from __future__ import annotations

import json
import os
import re
import string
import threading
from dataclasses import dataclass
from typing import Optional, Protocol, runtime_checkable

import requests

EXPLORATION_TEMPERATURE = 0.4
REASONING_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 1024

ENV_LLM_URL = "COGGRAG_LLM_URL"
ENV_LLM_KEY = "COGGRAG_LLM_KEY"


class PromptBindingError(KeyError):
    """A template slot was left unbound at render time."""


@dataclass(frozen=True)
class PromptTemplate:
    """A named prompt with fixed head/instruction text and ``${slot}`` holes."""

    name: str
    head: str
    instruction: str
    body: str

    @property
    def slots(self) -> tuple[str, ...]:
        found = []
        for match in string.Template.pattern.finditer(self.body):
            name = match.group("named") or match.group("braced")
            if name and name not in found:
                found.append(name)
        return tuple(found)

    def render(self, **bindings: str) -> str:
        missing = [s for s in self.slots if s not in bindings]
        if missing:
            raise PromptBindingError(
                f"template '{self.name}' missing binding for slot '{missing[0]}'"
            )
        return string.Template(self.body).substitute(bindings)


_DEC_HEAD = (
    "Your task is to decompose the given question Q into sub-questions. "
    "You should based on the specific logic of the question to determine "
    "the number of sub-questions and output them sequentially."
)
_DEC_INSTRUCTION = (
    "Please only output the decomposed sub-questions as a string in list format, "
    "where each element represents the text of a sub-question, in the form of "
    '{["subq1", "subq2", "subq3"]}. For each sub-question, if you consider the '
    "sub-question to be sufficiently simple and no further decomposition is needed, "
    'then output "End.", otherwise, output "Continue." Please strictly follow the '
    "format of the example below when answering the question.\n"
    "Here are some examples:"
)
_DEC_EXAMPLES = """Input: "What year did Guns N Roses perform a promo for a movie starring Arnold Schwarzenegger as a former New York Police detective?"
Output: [
    {"Sub-question": "What movie starring Arnold Schwarzenegger as a former New York Police detective is being referred to?", "State": "Continue."},
    {"Sub-question": "In what year did Guns N Roses perform a promo for the movie mentioned in sub-question #1?", "State": "End."}
]

Input: "What is the name of the fight song of the university whose main campus is in Lawrence, Kansas and whose branch campuses are in the Kansas City metropolitan area?"
Output: [
    {"Sub-question": "Which university has its main campus in Lawrence, Kansas and branch campuses in the Kansas City metropolitan area?", "State": "End."},
    {"Sub-question": "What is the name of the fight song of the university identified in sub-question #1?", "State": "End."}
]

Input: "Are the Laleli Mosque and Esma Sultan Mansion located in the same neighborhood?"
Output: [
    {"Sub-question": "Where is the Laleli Mosque located?", "State": "End."},
    {"Sub-question": "Where is the Esma Sultan Mansion located?", "State": "End."},
    {"Sub-question": "Are the locations of the Laleli Mosque and the Esma Sultan Mansion in the same neighborhood?", "State": "End."}
]"""

DEC_TEMPLATE = PromptTemplate(
    name="dec",
    head=_DEC_HEAD,
    instruction=_DEC_INSTRUCTION,
    body=(
        f"{_DEC_HEAD}\n\n{_DEC_INSTRUCTION}\n\n{_DEC_EXAMPLES}\n\n"
        "Input: ${question}\nOutput:"
    ),
)

_EXT_LOCAL_HEAD = (
    "Your task is to extract the entities (such as people, places, organizations, "
    "etc.) and relations (representing behaviors or properties between entities, "
    "such as verbs, attributes, or categories, etc.) involved in the input "
    "questions. These entities and relations can help answer the input questions."
)
_EXT_LOCAL_INSTRUCTION = (
    "Please extract entities and relations in one of the following forms: entity, "
    "tuples, or triples from the given input List. Entity means that only an "
    "entity, i.e. <entity>. Tuples means that an entity and a relation, i.e. "
    "<entity-relation>. Triples means that complete triples, i.e. "
    "<entity-relation-entity>. Please strictly follow the format of the example "
    "below when answering the question."
)

EXT_LOCAL_TEMPLATE = PromptTemplate(
    name="ext_local",
    head=_EXT_LOCAL_HEAD,
    instruction=_EXT_LOCAL_INSTRUCTION,
    body=f"{_EXT_LOCAL_HEAD}\n\n{_EXT_LOCAL_INSTRUCTION}\n\nInput: ${{mind_map}}\nOutput:",
)

_EXT_GLOBAL_HEAD = "Your task is to extract the subgraphs involved in a set of input questions."
_EXT_GLOBAL_INSTRUCTION = (
    "Please extract and organize information from a set of input questions into "
    "structured subgraphs. Each subgraph represents a group of triples (subject, "
    "relation, object) that share common entities and capture the logical "
    "relationships between the questions. Here are some examples:"
)
_EXT_GLOBAL_EXAMPLE = """Input: ["What is the capital of France?", "Who is the president of France?", "What is the population of Paris?"]
Output: [("France", "capital", "Paris"), ("France", "president", "Current President"), ("Paris", "population", "Population Number")]"""

EXT_GLOBAL_TEMPLATE = PromptTemplate(
    name="ext_global",
    head=_EXT_GLOBAL_HEAD,
    instruction=_EXT_GLOBAL_INSTRUCTION,
    body=(
        f"{_EXT_GLOBAL_HEAD}\n\n{_EXT_GLOBAL_INSTRUCTION}\n\n{_EXT_GLOBAL_EXAMPLE}\n\n"
        "Input: ${mind_map}\nOutput:"
    ),
)

_RES_HEAD = (
    "Your task is to answer the questions with the provided completed reasoning "
    "and input knowledge."
)
_BRACKET_INSTRUCTION = "Please note that the response must be included in square brackets [xxx]."

RES_TEMPLATE = PromptTemplate(
    name="res",
    head=_RES_HEAD,
    instruction=_BRACKET_INSTRUCTION,
    body=(
        f"{_RES_HEAD}\n\n{_BRACKET_INSTRUCTION}\n\n"
        "The completed reasoning: ${reasoning}\n\n"
        "The knowledge graph: ${knowledge}\n\n"
        "Input: ${question}\nOutput:"
    ),
)

_VER_HEAD = (
    "You are a logical verification assistant. Your task is to check whether the "
    "answer to a given question is logically consistent with the provided "
    "completed reasoning and input knowledge. If the answer is consistent, "
    'respond with "right". If the answer is inconsistent, respond with "wrong".'
)

VER_TEMPLATE = PromptTemplate(
    name="ver",
    head=_VER_HEAD,
    instruction=_BRACKET_INSTRUCTION,
    body=(
        f"{_VER_HEAD}\n\n{_BRACKET_INSTRUCTION}\n\n"
        "The completed reasoning: ${reasoning}\n\n"
        "The knowledge graph: ${knowledge}\n\n"
        "Answer: ${answer}\n\n"
        "Input: ${question}\nOutput:"
    ),
)

_RETHINK_HEAD = (
    "You are a reasoning and knowledge integration assistant. Your task is to "
    "re-think a question that was previously answered incorrectly by the "
    "self-verification model. Use the provided completed reasoning and input "
    "knowledge to generate a new answer."
)
_RETHINK_INSTRUCTION = (
    'Please note, if the knowledge is insufficient to answer the question, respond '
    'with "Insufficient information, I don\'t know". The response must be included '
    "in square brackets [xxx]."
)

RETHINK_TEMPLATE = PromptTemplate(
    name="rethink",
    head=_RETHINK_HEAD,
    instruction=_RETHINK_INSTRUCTION,
    body=(
        f"{_RETHINK_HEAD}\n\n{_RETHINK_INSTRUCTION}\n\n"
        "The completed reasoning: ${reasoning}\n\n"
        "The knowledge graph: ${knowledge}\n\n"
        "Input: ${question}\nOutput:"
    ),
)

TEMPLATES: dict[str, PromptTemplate] = {
    t.name: t
    for t in (
        DEC_TEMPLATE,
        EXT_LOCAL_TEMPLATE,
        EXT_GLOBAL_TEMPLATE,
        RES_TEMPLATE,
        VER_TEMPLATE,
        RETHINK_TEMPLATE,
    )
}


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


class BackendError(RuntimeError):
    """A backend failed to produce a completion."""


class ScriptMissError(BackendError):
    """No scripted rule matched the prompt."""


@runtime_checkable
class LLMBackend(Protocol):
    identity: str

    def generate(self, request: GenerationRequest) -> str: ...


def infer_template_name(prompt: str) -> str:
    """Best-effort template identification from a rendered prompt's head."""
    for name, template in TEMPLATES.items():
        if template.head in prompt:
            return name
    return "unknown"


@dataclass(frozen=True)
class ScriptRule:
    """An ordered matching rule: all substrings (or the regex) must hit."""

    reply: str
    patterns: tuple[str, ...] = ()
    regex: Optional[str] = None

    def matches(self, prompt: str) -> bool:
        if self.regex is not None:
            if not re.search(self.regex, prompt, re.DOTALL):
                return False
        return all(p in prompt for p in self.patterns)


class ScriptedBackend:
    """Deterministic backend that replays canned rules, first match wins.

    Every request served is appended to ``records`` so tests can audit the
    full call sequence.
    """

    def __init__(self, rules: list[ScriptRule], identity: str = "scripted"):
        self.rules = list(rules)
        self.identity = identity
        self.records: list[GenerationRequest] = []
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> str:
        with self._lock:
            self.records.append(request)
        for rule in self.rules:
            if rule.matches(request.prompt):
                return rule.reply
        raise ScriptMissError(
            f"no scripted reply for '{infer_template_name(request.prompt)}' prompt"
        )


def parse_script(lines: "list[str]", source: str = "<script>") -> list[ScriptRule]:
    """Parse a line-delimited script: each record {match | regex, reply}."""
    rules: list[ScriptRule] = []
    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{source}: line {line_number}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict) or "reply" not in record:
            raise ValueError(f"{source}: line {line_number}: record must have a 'reply'")
        match = record.get("match")
        if match is None:
            patterns: tuple[str, ...] = ()
        elif isinstance(match, str):
            patterns = (match,)
        elif isinstance(match, list) and all(isinstance(m, str) for m in match):
            patterns = tuple(match)
        else:
            raise ValueError(
                f"{source}: line {line_number}: 'match' must be a string or list of strings"
            )
        regex = record.get("regex")
        if regex is not None:
            if not isinstance(regex, str):
                raise ValueError(f"{source}: line {line_number}: 'regex' must be a string")
            re.compile(regex)
        if not patterns and regex is None:
            raise ValueError(
                f"{source}: line {line_number}: record needs 'match' or 'regex'"
            )
        rules.append(ScriptRule(reply=str(record["reply"]), patterns=patterns, regex=regex))
    return rules


def load_script(path: str) -> ScriptedBackend:
    with open(path, "r", encoding="utf-8") as f:
        return ScriptedBackend(parse_script(f.readlines(), source=path))


class HTTPBackend:
    """Chat-completion backend over HTTP with bounded retries."""

    def __init__(
        self,
        base_url: str,
        api_key: Optional[str] = None,
        model: str = "default",
        identity: str = "http",
        max_retries: int = 3,
        timeout: float = 120.0,
    ):
        self.base_url = base_url
        self.api_key = api_key
        self.model = model
        self.identity = identity
        self.max_retries = max_retries
        self.timeout = timeout

    @classmethod
    def from_env(cls, model: str = "default", identity: str = "http") -> "HTTPBackend":
        url = os.environ.get(ENV_LLM_URL)
        if not url:
            raise BackendError(f"{ENV_LLM_URL} is not set; no HTTP backend available")
        return cls(base_url=url, api_key=os.environ.get(ENV_LLM_KEY), model=model, identity=identity)

    def generate(self, request: GenerationRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last_error: Optional[Exception] = None
        for _ in range(self.max_retries):
            try:
                response = requests.post(
                    self.base_url, json=payload, headers=headers, timeout=self.timeout
                )
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise BackendError(f"HTTP backend failed after {self.max_retries} attempts: {last_error}")


_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")


def extract_bracketed(text: str) -> Optional[str]:
    """Content of the first well-formed ``[...]`` span, trimmed; None if absent."""
    match = _BRACKET_RE.search(text)
    if match is None:
        return None
    return match.group(1).strip()
