"""Single entry point: `miko <subcommand>`.

Every subcommand runs offline against the mock backend profile; HTTP
profiles pull credentials from MIKO_* environment variables. Flag
values override config-file values. Exit codes: 0 success, 1
operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import annotation, corpus, evalbench
from .config import Config, build_gateway, load_config
from .distiller import PIPELINE_VERSION, DistillOptions, run_pipeline
from .errors import MikoError
from .kb import KnowledgeBase
from .prompts import TemplateSet


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="path to a TOML-like config file")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--strict", action="store_true",
                        help="fail fast instead of counting and skipping")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miko")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a dataset file into the generic corpus format")
    _add_common(p)
    p.add_argument("--source", required=True)
    p.add_argument("--dataset", required=True,
                   choices=[d.value for d in corpus.Dataset])
    p.add_argument("--format", default="jsonl", choices=["jsonl", "tsv", "csv"])
    p.add_argument("--out", required=True, help="output corpus jsonl path")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--multimodal", dest="multimodal", action="store_true",
                      default=None, help="drop posts without an image reference")
    mode.add_argument("--keep-text-only", dest="multimodal", action="store_false",
                      help="keep posts without an image reference")

    p = sub.add_parser("distill", help="run the three-stage pipeline into a KB")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="KB directory")
    p.add_argument("--backend", default="mock", help='backend profile ("mock" or "http")')
    p.add_argument("--seed", type=int, default=0, help="seed for the mock backend")
    p.add_argument("--parallel", type=int, default=None)
    p.add_argument("--image-root", default=None)
    p.add_argument("--verify-images", action="store_true")
    p.add_argument("--per-source-keyinfo", action="store_true",
                   help="extract key information per source instead of merged")
    p.add_argument("--max-failure-rate", type=float, default=0.5,
                   help="exit nonzero when more than this fraction of posts fail")

    p = sub.add_parser("kb-stats", help="per-relation record counts of a KB")
    _add_common(p)
    p.add_argument("--kb", required=True)

    p = sub.add_parser("sample", help="reproducibly sample an annotation pool")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("annotate-serve", help="serve the annotation API and UI")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--static", default=None, help="UI bundle directory")
    p.add_argument("--images", default=None, help="directory served at /images")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--annotators", default=None,
                   help="optional allowlist file, one annotator id per line")
    p.add_argument("--agreement", default="mean", choices=["mean", "majority"])

    p = sub.add_parser("aggregate", help="aggregate scores and report eligibility")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", default=None, help="write aggregates JSON here")
    p.add_argument("--distribution", default=None,
                   help="write typicality-score distribution CSV here")
    p.add_argument("--agreement", default="mean", choices=["mean", "majority"])

    p = sub.add_parser("export-benchmark", help="export admitted gold intentions")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--agreement", default="mean", choices=["mean", "majority"])

    p = sub.add_parser("eval", help="score candidate intentions against the benchmark")
    _add_common(p)
    p.add_argument("--candidates", required=True)
    p.add_argument("--benchmark", required=True)
    p.add_argument("--backend", default="mock", help='embedding profile ("mock" or "http")')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=16, help="mock embedding dimension")
    p.add_argument("--missing", default="skip", choices=["skip", "zero"])
    p.add_argument("--micro", action="store_true",
                   help="average over pairs instead of relations")
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)

    p = sub.add_parser("export-instructions", help="write fine-tuning conversations")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--template-dir", default=None)

    p = sub.add_parser("augment", help="append KB artifacts to posts for training")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--variant", required=True,
                   help="text | text+imgdes | text+inte | text+imgdes+inte")
    p.add_argument("--sep", default=evalbench.DEFAULT_SEPARATOR)
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="binary classification metrics from jsonl files")
    _add_common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)

    return parser


def _read_labels(path: str) -> list[int]:
    labels = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                labels.append(int(json.loads(line)["label"]))
    return labels


def _load_service(args, config: Config) -> annotation.AnnotationService:
    pool = annotation.load_pool(args.pool)
    allowlist = None
    annotators_file = getattr(args, "annotators", None)
    if annotators_file:
        allowlist = {line.strip() for line in Path(annotators_file).read_text(
            encoding="utf-8").splitlines() if line.strip()}
    return annotation.AnnotationService(
        pool, events_path=args.events, allowlist=allowlist,
        agreement=getattr(args, "agreement", "mean"))


def _emit(payload: dict):
    print(json.dumps(payload, indent=2, ensure_ascii=False))


def cmd_ingest(args, config: Config) -> int:
    posts, manifest = corpus.ingest(
        args.source, args.dataset, args.format,
        multimodal=args.multimodal, strict=args.strict or config.strict)
    corpus.write_corpus_jsonl(posts, args.out)
    corpus.write_manifest(manifest, str(args.out) + ".manifest.json")
    _emit(manifest.to_json())
    return 0


def cmd_distill(args, config: Config) -> int:
    posts = corpus.load_posts(args.corpus)
    if not posts:
        print("error: corpus is empty", file=sys.stderr)
        return 1
    gw = build_gateway(config, args.backend, seed=args.seed)
    kb = KnowledgeBase.create(args.out, meta={
        "pipeline_version": PIPELINE_VERSION,
        "template_versions": TemplateSet(config.template_dir).versions,
        "seed": args.seed,
        "backend_profile": args.backend,
    })
    strict = args.strict or config.strict
    opts = DistillOptions(
        templates=TemplateSet(config.template_dir),
        llm_model=config.backend("llm").model_id or "mock-llm",
        mllm_model=config.backend("mllm").model_id or "mock-mllm",
        caption_temperature=config.caption_temperature,
        keyinfo_temperature=config.keyinfo_temperature,
        intention_temperature=config.intention_temperature,
        parallel=args.parallel if args.parallel is not None else config.parallel,
        strict=strict,
        image_root=args.image_root,
        verify_images=args.verify_images,
        merged_keyinfo=not args.per_source_keyinfo,
    )
    report = run_pipeline(posts, gw, kb, opts)
    payload = report.to_json()
    Path(args.out, "report.json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _emit(payload)
    failure_rate = report.posts_failed / report.posts_total
    if failure_rate > args.max_failure_rate:
        print(f"error: failure rate {failure_rate:.2f} exceeds "
              f"{args.max_failure_rate}", file=sys.stderr)
        return 1
    return 0


def cmd_kb_stats(args, config: Config) -> int:
    kb = KnowledgeBase(args.kb)
    _emit(kb.stats().to_json())
    return 0


def cmd_sample(args, config: Config) -> int:
    kb = KnowledgeBase(args.kb)
    posts = corpus.load_posts(args.corpus)
    tasks = annotation.sample_pool(kb, posts, args.n, args.seed)
    annotation.write_pool(tasks, args.out, args.seed)
    _emit({"pool": args.out, "n": len(tasks), "seed": args.seed})
    return 0


def cmd_annotate_serve(args, config: Config) -> int:
    import uvicorn

    from .server import create_app

    service = _load_service(args, config)
    app = create_app(service, static_dir=None)
    if args.images:
        from fastapi.staticfiles import StaticFiles
        app.mount("/images", StaticFiles(directory=args.images), name="images")
    if args.static:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=args.static, html=True), name="ui")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_aggregate(args, config: Config) -> int:
    service = _load_service(args, config)
    aggregates = [agg.to_json() for agg in service.aggregate()]
    payload = {
        "aggregates": aggregates,
        "eligible": sum(1 for a in aggregates if a["eligible"]),
        "pending_review": sum(1 for a in aggregates if a["review_status"] == "pending"),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if args.distribution:
        annotation.write_score_distribution_csv(
            service.score_distribution(), args.distribution)
    _emit(payload)
    return 0


def cmd_export_benchmark(args, config: Config) -> int:
    service = _load_service(args, config)
    manifest = service.export_benchmark(args.out)
    _emit(manifest)
    return 0


def cmd_eval(args, config: Config) -> int:
    gw = build_gateway(config, args.backend, seed=args.seed, embed_dim=args.dim)
    candidates = evalbench.load_candidates(args.candidates)
    benchmark = evalbench.load_benchmark_file(args.benchmark)
    prefixes = TemplateSet(config.template_dir).prefixes
    report = evalbench.evaluate(
        candidates, benchmark, gw,
        missing=args.missing,
        average="micro" if args.micro else "macro",
        prefixes=prefixes,
    )
    if args.out:
        evalbench.write_report(report, args.out, args.csv)
    elif args.csv:
        evalbench.write_report(report, Path(args.csv).with_suffix(".json"), args.csv)
    _emit(report.to_json())
    return 0


def cmd_export_instructions(args, config: Config) -> int:
    kb = KnowledgeBase(args.kb)
    posts = corpus.load_posts(args.corpus)
    templates = TemplateSet(args.template_dir or config.template_dir)
    count = evalbench.export_instructions(kb, posts, args.out, templates)
    _emit({"out": args.out, "conversations": count})
    return 0


def cmd_augment(args, config: Config) -> int:
    kb = KnowledgeBase(args.kb)
    posts = corpus.load_posts(args.corpus)
    items = evalbench.augment(
        posts, kb, args.variant,
        separator=args.sep, strict=args.strict or config.strict)
    evalbench.write_augmented(items, args.out, args.sep)
    _emit({"out": args.out, "count": len(items),
           "skipped": len(posts) - len(items)})
    return 0


def cmd_metrics(args, config: Config) -> int:
    golds = _read_labels(args.gold)
    preds = _read_labels(args.pred)
    _emit(evalbench.classification_metrics(golds, preds))
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "distill": cmd_distill,
    "kb-stats": cmd_kb_stats,
    "sample": cmd_sample,
    "annotate-serve": cmd_annotate_serve,
    "aggregate": cmd_aggregate,
    "export-benchmark": cmd_export_benchmark,
    "eval": cmd_eval,
    "export-instructions": cmd_export_instructions,
    "augment": cmd_augment,
    "metrics": cmd_metrics,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except MikoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
