"""Tree-structured mind map built by recursive top-down question decomposition.

Each node carries (question, depth, state). Decomposition recurses until
every leaf is an End node or the depth cap is hit; a completed map is
immutable in practice and traversed bottom-up for reasoning.
"""
from __future__ import annotations

import ast
import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .kg_store import normalize
from .llm import (
    DEC_TEMPLATE,
    DEFAULT_MAX_TOKENS,
    EXPLORATION_TEMPERATURE,
    GenerationRequest,
    LLMBackend,
)


class NodeState(Enum):
    CONTINUE = "Continue"
    END = "End"

    @classmethod
    def parse(cls, text: str) -> "NodeState":
        cleaned = text.strip().strip(".!,;:\"'").lower()
        if cleaned == "continue":
            return cls.CONTINUE
        return cls.END


@dataclass
class MindMapNode:
    id: str
    question: str
    depth: int
    state: NodeState
    parent: Optional[str] = None
    children: list[str] = field(default_factory=list)


@dataclass
class MindMap:
    nodes: dict[str, MindMapNode]
    root: str

    def node(self, node_id: str) -> MindMapNode:
        return self.nodes[node_id]

    def questions(self) -> list[str]:
        """All node questions in pre-order, root first."""
        out: list[str] = []
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            out.append(node.question)
            stack.extend(reversed(node.children))
        return out

    def to_records(self) -> list[dict]:
        """Flat per-node records in pre-order, for trace files."""
        out: list[dict] = []
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            out.append(
                {
                    "id": node.id,
                    "question": node.question,
                    "depth": node.depth,
                    "state": node.state.value,
                }
            )
            stack.extend(reversed(node.children))
        return out


@dataclass
class DecompositionConfig:
    max_depth: int = 3
    max_parse_retries: int = 1
    exploration_temperature: float = EXPLORATION_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_parse_retries < 0:
            raise ValueError("max_parse_retries must be >= 0")


def _first_bracketed_block(text: str) -> Optional[str]:
    """The first balanced ``[...]`` region, brackets included."""
    start = text.find("[")
    if start < 0:
        return None
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "[":
            depth += 1
        elif text[i] == "]":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def parse_decomposition_reply(text: str) -> Optional[list[tuple[str, NodeState]]]:
    """Parse the bracketed sub-question list; None when unparseable.

    Accepts records shaped {"Sub-question": ..., "State": ...} (keys matched
    case-insensitively) as well as plain question strings, which default to
    End. An empty list parses to [] and is handled by the caller.
    """
    block = _first_bracketed_block(text)
    if block is None:
        return None
    data = None
    for loader in (json.loads, ast.literal_eval):
        try:
            data = loader(block)
            break
        except (ValueError, SyntaxError):
            continue
    if not isinstance(data, list):
        return None
    result: list[tuple[str, NodeState]] = []
    for item in data:
        if isinstance(item, str):
            question, state = item, NodeState.END
        elif isinstance(item, dict):
            lowered = {str(k).lower().replace("-", "").replace("_", ""): v for k, v in item.items()}
            raw_q = lowered.get("subquestion") or lowered.get("question")
            if not isinstance(raw_q, str):
                return None
            question = raw_q
            raw_state = lowered.get("state")
            state = NodeState.parse(raw_state) if isinstance(raw_state, str) else NodeState.END
        else:
            return None
        if question.strip():
            result.append((question.strip(), state))
    return result


def decompose_question(
    question: str,
    backend: LLMBackend,
    cfg: DecompositionConfig,
    warnings: Optional[list[str]] = None,
) -> list[tuple[str, NodeState]]:
    """One decomposition step; falls back to [(question, End)] when the
    backend's output stays unparseable after the configured retries."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    prompt = DEC_TEMPLATE.render(question=question)
    for _ in range(1 + cfg.max_parse_retries):
        reply = backend.generate(
            GenerationRequest(
                prompt=prompt,
                temperature=cfg.exploration_temperature,
                max_tokens=cfg.max_tokens,
            )
        )
        parsed = parse_decomposition_reply(reply)
        if parsed:
            return parsed
    if warnings is not None:
        warnings.append(f"decomposition unparseable for question: {question!r}; treated as atomic")
    return [(question.strip(), NodeState.END)]


def single_node_map(question: str) -> MindMap:
    root = MindMapNode(id="0", question=question.strip(), depth=0, state=NodeState.END)
    return MindMap(nodes={"0": root}, root="0")


def build_mind_map(
    question: str,
    backend: LLMBackend,
    cfg: DecompositionConfig,
    warnings: Optional[list[str]] = None,
) -> MindMap:
    """Recursively decompose ``question`` into a mind map.

    Nodes at the depth cap are forced to End. A decomposition that returns a
    single sub-question identical to its parent makes no progress and ends
    the branch.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    root = MindMapNode(id="0", question=question.strip(), depth=0, state=NodeState.END)
    nodes = {root.id: root}
    queue: deque[MindMapNode] = deque([root])
    while queue:
        node = queue.popleft()
        if node.depth >= cfg.max_depth:
            node.state = NodeState.END
            continue
        subs = decompose_question(node.question, backend, cfg, warnings)
        if len(subs) == 1 and normalize(subs[0][0]) == normalize(node.question):
            node.state = NodeState.END
            continue
        node.state = NodeState.CONTINUE
        for index, (sub_question, sub_state) in enumerate(subs):
            child = MindMapNode(
                id=f"{node.id}.{index}",
                question=sub_question,
                depth=node.depth + 1,
                state=NodeState.END,
                parent=node.id,
            )
            nodes[child.id] = child
            node.children.append(child.id)
            if sub_state is NodeState.CONTINUE and child.depth < cfg.max_depth:
                queue.append(child)
    return MindMap(nodes=nodes, root=root.id)


def bottom_up_order(m: MindMap) -> list[str]:
    """Post-order node ids: every node strictly after all its descendants."""
    order: list[str] = []
    stack: list[tuple[str, bool]] = [(m.root, False)]
    while stack:
        node_id, expanded = stack.pop()
        if expanded:
            order.append(node_id)
            continue
        stack.append((node_id, True))
        for child_id in reversed(m.nodes[node_id].children):
            stack.append((child_id, False))
    return order
