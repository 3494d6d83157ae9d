"""Command-line entry point.

    astrodiag kg build --docs DIR --out kg.json [--embeddings embeddings.json]
    astrodiag wordlist build --docs DIR --out wordlists.json
    astrodiag askrag run --kg kg.json --wordlists wordlists.json --out subkgs/
    astrodiag diagnose --image IMG --out report.json
    astrodiag eval --reports DIR --truth truth.json --out scores.json

Exit status: 0 on success (a diagnosis that finds errors is a success), 1 on
operational failure, 2 on bad input or configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .askrag.driver import build_agent_subgraphs
from .astrosight.pipeline import Pipeline, load_pipeline
from .astrosight.roster import default_pipeline
from .backends import BackendError, MockBackend, OpenAICompatBackend
from .config import HYPERPARAMETERS, ConfigError, RunConfig, load_config
from .diagnosis import diagnose
from .evalharness import aggregate, judge, load_truth, rubric_echo
from .kg import GraphError, dumps_json, load_embeddings, load_graph, save_embeddings, save_graph
from .kgbuild import build_root_graph, embed_graph, read_documents
from .rwb import DiagnosisReport, save_report
from .wordlist import extract_keywords, load_wordlists, save_wordlists, synthesize_wordlists

logger = logging.getLogger("astrodiag")


class UsageError(Exception):
    """Bad input; exit status 2."""


def _hyperparameter_help() -> str:
    lines = ["hyperparameters (set in --config JSON or with --set name=value):"]
    for name, (symbol, text) in HYPERPARAMETERS.items():
        tag = f" ({symbol})" if symbol else ""
        lines.append(f"  {name}{tag}: {text}")
    return "\n".join(lines)


def _parse_set(items: Sequence[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects name=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    overrides = _parse_set(args.set or [])
    if args.backend:
        overrides["backend"] = args.backend
    if args.jobs:
        overrides["jobs"] = args.jobs
    if getattr(args, "mock", None):
        overrides["paths"] = {**cfg.paths, "mock": str(Path(args.mock).resolve())}
    if overrides:
        data = cfg.echo() | overrides
        cfg = RunConfig.from_dict(data, base_dir=cfg.base_dir)
    return cfg


def _backend(cfg: RunConfig):
    if cfg.backend == "live":
        return OpenAICompatBackend.from_env(max_in_flight=cfg.jobs)
    mock = cfg.path("mock")
    if mock is not None:
        if not mock.is_file():
            raise UsageError(f"mock script {mock} not found")
        return MockBackend.from_file(mock)
    return MockBackend(dim=cfg.embed_dim)


def _pipeline(cfg: RunConfig, override: str | None = None) -> Pipeline:
    path = Path(override) if override else cfg.path("agents")
    return load_pipeline(path) if path is not None else default_pipeline()


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"no {what} given (flag or config paths.{what})")
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


# -- commands -----------------------------------------------------------------------


def cmd_kg_build(args: argparse.Namespace) -> int:
    cfg = _config(args)
    docs_dir = Path(args.docs) if args.docs else cfg.path("docs")
    docs = read_documents(_require(docs_dir, "docs"))
    if not docs:
        raise UsageError(f"no non-empty .txt/.md documents in {docs_dir}")
    backend = _backend(cfg)
    graph = build_root_graph(docs, backend)
    save_graph(graph, args.out)
    if args.embeddings:
        save_embeddings(embed_graph(graph, backend), args.embeddings)
    print(f"wrote {args.out}: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
    return 0


def cmd_wordlist_build(args: argparse.Namespace) -> int:
    cfg = _config(args)
    docs_dir = Path(args.docs) if args.docs else cfg.path("docs")
    docs = read_documents(_require(docs_dir, "docs"))
    library = extract_keywords([t for _, t in docs], cfg.max_keywords)
    if len(library) == 0:
        raise UsageError("no keywords could be extracted")
    wordlists = synthesize_wordlists(
        library, _pipeline(cfg, args.agents), _backend(cfg), max_layers=cfg.max_layers, jobs=cfg.jobs
    )
    save_wordlists(wordlists, args.out)
    print(f"wrote {args.out}: {len(wordlists)} wordlists")
    return 0


def cmd_askrag_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    kg_path = _require(Path(args.kg) if args.kg else cfg.path("kg"), "kg")
    wl_path = _require(Path(args.wordlists) if args.wordlists else cfg.path("wordlists"), "wordlists")
    pipeline = _pipeline(cfg, args.agents)
    root = load_graph(kg_path)
    backend = _backend(cfg)
    emb_path = Path(args.embeddings) if args.embeddings else cfg.path("embeddings")
    embeds = load_embeddings(emb_path) if emb_path is not None else embed_graph(root, backend)
    wordlists = load_wordlists(wl_path)
    missing = sorted(set(pipeline.agent_ids) - {w.agent_id for w in wordlists})
    if missing:
        raise UsageError(f"wordlists missing agents: {', '.join(missing)}")
    result = build_agent_subgraphs(root, embeds, wordlists, pipeline, cfg.driver(), backend, backend)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for agent_id, graph in sorted(result.subgraphs.items()):
        save_graph(graph, out / f"{agent_id}.json")
    (out / "decisions.json").write_text(
        dumps_json([d.to_dict() for d in result.decisions]), encoding="utf-8"
    )
    manifest = {
        "config_echo": cfg.echo(),
        "anchors": result.anchors,
        "log": result.log,
    }
    (out / "run.json").write_text(dumps_json(manifest), encoding="utf-8")
    print(f"wrote {len(result.subgraphs)} subgraphs and {len(result.decisions)} decisions to {out}")
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    cfg = _config(args)
    image = Path(args.image)
    try:
        with image.open("rb") as fh:
            fh.read(1)
    except OSError as exc:
        raise UsageError(f"cannot read image {image}: {exc}") from exc
    pipeline = _pipeline(cfg, args.agents)
    sub_dir = Path(args.subkgs) if args.subkgs else cfg.path("subkgs")
    sub_dir = _require(sub_dir, "subkgs")
    subkgs = {}
    for agent_id in pipeline.agent_ids:
        p = sub_dir / f"{agent_id}.json"
        if not p.is_file():
            raise UsageError(f"missing sub-knowledge-graph {p}")
        subkgs[agent_id] = load_graph(p)
    backend = _backend(cfg)
    report = diagnose(
        args.image, pipeline, subkgs, cfg.rwb(), backend, backend,
        config_echo=cfg.echo(), jobs=cfg.jobs,
    )
    save_report(report, args.out)
    print(f"wrote {args.out}: {len(report.errors)} error(s)")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args)
    reports_dir = Path(args.reports)
    files = sorted(reports_dir.glob("*.json")) if reports_dir.is_dir() else []
    if not files:
        raise UsageError(f"no report files in {reports_dir}")
    truths = {Path(t.image).name: t for t in load_truth(args.truth)}
    backend = _backend(cfg)
    scored, per_image, skipped = [], {}, []
    for f in files:
        report = DiagnosisReport.from_dict(json.loads(f.read_text(encoding="utf-8")))
        truth = truths.get(Path(report.image).name)
        if truth is None:
            skipped.append(f.name)
            logger.warning("%s: no ground truth for image %s, skipped", f.name, report.image)
            continue
        triple = judge(report, truth, backend)
        scored.append((truth.category, triple))
        per_image[Path(report.image).name] = triple.to_dict()
    if not scored:
        raise UsageError("no report matched the ground truth")
    grid = aggregate(scored)
    payload = grid.to_dict() | {
        "per_image": per_image,
        "skipped": skipped,
        "rubrics": dict(rubric_echo()),
        "config_echo": cfg.echo(),
    }
    Path(args.out).write_text(dumps_json(payload), encoding="utf-8")
    print(f"wrote {args.out}: {len(scored)} scored, {len(skipped)} skipped")
    return 0


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--backend", choices=["mock", "live"], help="override config backend")
    common.add_argument("--mock", help="mock script JSON (implies nothing about --backend)")
    common.add_argument("--jobs", type=int, help="bound on concurrent backend calls")
    common.add_argument("--set", action="append", metavar="NAME=VALUE", help="override a hyperparameter")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="astrodiag",
        description="Astronomical image quality diagnosis.",
        epilog=_hyperparameter_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = {"formatter_class": argparse.RawDescriptionHelpFormatter, "epilog": _hyperparameter_help()}

    kg = sub.add_parser("kg", help="root knowledge graph").add_subparsers(dest="action", required=True)
    p = kg.add_parser("build", parents=[common], help="extract kg.json from documents", **fmt)
    p.add_argument("--docs")
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", help="also write node embeddings here")
    p.set_defaults(func=cmd_kg_build)

    wl = sub.add_parser("wordlist", help="relevant wordlists").add_subparsers(dest="action", required=True)
    p = wl.add_parser("build", parents=[common], help="extract keywords and synthesize wordlists", **fmt)
    p.add_argument("--docs")
    p.add_argument("--agents")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_wordlist_build)

    ar = sub.add_parser("askrag", help="agent sub-knowledge-graphs").add_subparsers(dest="action", required=True)
    p = ar.add_parser("run", parents=[common], help="partition/aggregate the root graph per agent", **fmt)
    p.add_argument("--kg")
    p.add_argument("--wordlists")
    p.add_argument("--embeddings")
    p.add_argument("--agents")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_askrag_run)

    p = sub.add_parser("diagnose", parents=[common], help="diagnose one image", **fmt)
    p.add_argument("--image", required=True)
    p.add_argument("--subkgs")
    p.add_argument("--agents")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("eval", parents=[common], help="judge reports against ground truth", **fmt)
    p.add_argument("--reports", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError, GraphError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
