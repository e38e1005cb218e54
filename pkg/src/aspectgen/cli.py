"""Command-line entry point: `aspectgen <command> [flags]`."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from . import pipeline as pl
from .errors import AspectGenError, ConfigError, EvalError
from .evalsuite import COHORTS, EvalReport

log = logging.getLogger("aspectgen")

COMMANDS = ("ingest", "split", "segment", "train-ctr", "train", "generate", "evaluate", "ablate",
            "report", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="flat key=value configuration file")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--out", help="output directory")
    shared.add_argument("--lambda", dest="lam", type=float, help="composite loss weight")
    shared.add_argument("--dataset", help="JSONL item file (default: bundled synthetic corpus)")
    shared.add_argument("--rules", help="aspect rule file (default: bundled rules)")
    shared.add_argument("--ratings", help="JSONL rating records for NDCG")
    shared.add_argument("--checkpoint", help="checkpoint directory (default: OUT/checkpoint)")
    shared.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; may be repeated")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aspectgen",
                                     description="Aspect-wise product description enhancement.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[shared])
        if name == "ablate":
            p.add_argument("--mode", choices=("rerank", "retrain"))
        if name == "report":
            p.add_argument("report", nargs="?", help="report file (default: OUT/report.txt)")
            p.add_argument("--ablation", help="ablation CSV (default: OUT/ablation.csv if present)")
    return parser


def resolve_config(args) -> pl.RunConfig:
    cfg = pl.RunConfig.from_file(args.config) if args.config else pl.RunConfig()
    pairs = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    for key, val in (("seed", args.seed), ("out", args.out), ("lambda", args.lam),
                     ("dataset", args.dataset), ("rules", args.rules), ("ratings", args.ratings),
                     ("checkpoint", args.checkpoint)):
        if val is not None:
            pairs[key] = val
    return cfg.with_overrides(pairs)


def _fmt(x):
    return "n/a" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.4f}"


def format_report(report: EvalReport, ablation_rows=None) -> str:
    lines = [f"{'cohort':<10} {'items':>6} {'mean BM25':>10} {'NDCG@10':>8}"]
    counts = report.counts()
    for c in COHORTS:
        lines.append(f"{c:<10} {counts[c]:>6} {_fmt(report.mean_bm25(c)):>10} "
                     f"{_fmt(report.ndcg.get(c)):>8}")
    if "config_hash" in report.meta:
        lines.append(f"config_hash {report.meta['config_hash']}")
    if ablation_rows:
        best = max(ablation_rows, key=lambda r: (r.mean, -r.lam))
        lines.append(f"ablation peak: lambda={best.lam!r} mean={best.mean:.4f} std={best.std:.4f}")
    return "\n".join(lines) + "\n"


def cmd_report(report_path, ablation_path=None) -> str:
    report = EvalReport.load(report_path)
    rows = None
    if ablation_path and os.path.exists(ablation_path):
        try:
            rows = pl.read_ablation_csv(ablation_path)
        except (OSError, ValueError, IndexError, StopIteration) as exc:
            raise EvalError(f"unreadable ablation table {ablation_path}: {exc}") from None
    return format_report(report, rows)


def run_command(command, cfg: pl.RunConfig, args=None) -> str:
    """Execute one command; returns the text to print."""
    if command == "report":
        path = getattr(args, "report", None) or os.path.join(cfg.out, "report.txt")
        abl = getattr(args, "ablation", None) or os.path.join(cfg.out, "ablation.csv")
        return cmd_report(path, abl)
    if command == "pipeline":
        return format_report(pl.cmd_pipeline(cfg))
    if command == "ablate":
        rows = pl.cmd_ablate(cfg, getattr(args, "mode", None))
        return "".join(f"lambda={r.lam!r} mean={r.mean:.4f} std={r.std:.4f}\n" for r in rows)

    run = pl.Run(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    if command == "ingest":
        s = pl.stage_ingest(run)
        return f"{s['items']} items, {s['empty_descriptions']} with empty descriptions\n"
    if command == "split":
        s = pl.stage_split(run)
        return f"train {len(s.train)} / test {len(s.test)}, median CTR {s.median_ctr:.6f}\n"
    if command == "segment":
        pl.stage_segment(run)
        return f"segmented {len(run.items)} descriptions\n"
    if command == "train-ctr":
        m = pl.stage_train_ctr(run)
        return "weights " + " ".join(f"{w:.4f}" for w in m.weights) + f" bias {m.bias:.4f}\n"
    if command == "train":
        params, vocab, manifest_hash = pl.stage_train(run)
        return f"vocab {len(vocab)}, manifest {manifest_hash[:12]}\n"
    if command == "generate":
        outs = pl.stage_generate(run)
        return f"enhanced {len(outs)} items\n"
    if command == "evaluate":
        return format_report(pl.stage_evaluate(run))
    raise ConfigError(f"unknown command {command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        sys.stdout.write(run_command(args.command, cfg, args))
    except AspectGenError as exc:
        print(f"aspectgen {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
