"""Command-line surface: ingest, ask, bench, script-check."""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .evaluation import load_dataset, run_benchmark
from .kg_store import GraphParseError, load_graph_file
from .llm import BackendError, HTTPBackend, load_script
from .pipeline import Backends, load_config, run_pipeline, write_trace


class CLIError(RuntimeError):
    pass


def _build_backends(script_path: Optional[str], cfg) -> Backends:
    if script_path:
        backend = load_script(script_path)
        return Backends.scripted(backend, dimension=cfg.embedding_dim)
    http = HTTPBackend.from_env(model=cfg.model)
    return Backends.scripted(http, dimension=cfg.embedding_dim)


def cmd_ingest(args: argparse.Namespace) -> int:
    graph = load_graph_file(args.graph)
    print(f"loaded {graph.triple_count} triples, {graph.entity_count} entities")
    return 0


def cmd_ask(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    graph = load_graph_file(args.graph)
    backends = _build_backends(args.script, cfg)
    result = run_pipeline(args.question, graph, cfg, backends)
    print(result.final_answer)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            write_trace(f, result, cfg, graph)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    graph = load_graph_file(args.graph)
    backends = _build_backends(args.script, cfg)
    with open(args.dataset, "r", encoding="utf-8") as f:
        dataset = load_dataset(f.readlines())

    def pipeline(question: str):
        return run_pipeline(question, graph, cfg, backends).trace

    report = run_benchmark(dataset, pipeline, workers=args.workers)
    rows = [
        ("examples", str(len(report.per_example))),
        ("rouge_l", f"{report.rouge_l:.4f}"),
        ("em", f"{report.em:.4f}"),
        ("f1", f"{report.f1:.4f}"),
        ("correct_rate", f"{report.correct_rate:.4f}"),
        ("missing_rate", f"{report.missing_rate:.4f}"),
        ("hallucination_rate", f"{report.hallucination_rate:.4f}"),
        ("mean_latency_s", f"{report.mean_latency:.4f}"),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            for r in report.per_example:
                f.write(
                    json.dumps(
                        {
                            "id": r.id,
                            "question": r.question,
                            "prediction": r.prediction,
                            "em": r.em,
                            "rouge_l": r.rouge_l,
                            "f1": r.f1,
                            "category": r.category.value,
                            "latency": r.latency,
                            "error": r.error,
                        },
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                )
                f.write("\n")
    return 0


def cmd_script_check(args: argparse.Namespace) -> int:
    backend = load_script(args.script)
    print(f"script ok: {len(backend.rules)} rules")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgqa", description="Knowledge-graph question answering")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a graph file and report counts")
    p.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("ask", help="answer a single question")
    p.add_argument("--graph", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--config")
    p.add_argument("--trace", help="write the full trace record to this path")
    p.add_argument("--script", help="use a scripted backend from this file")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("bench", help="run a benchmark over a QA dataset")
    p.add_argument("--graph", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--config")
    p.add_argument("--report", help="write per-example records to this path")
    p.add_argument("--script", help="use a scripted backend from this file")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("script-check", help="validate a scripted-backend file")
    p.add_argument("--script", required=True)
    p.set_defaults(func=cmd_script_check)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, GraphParseError, BackendError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
