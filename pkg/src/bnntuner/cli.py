"""Command-line front end: tune, run, compare, gen-model, validate.

Exit codes: 0 success, 2 usage (argparse), 3 I/O, 4 parse, 5 validation,
6 incomplete profile table, 7 model-hash mismatch, 1 anything else.
Every command takes --json for machine-readable reports.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import modelio
from .backends import ExecutionEngine
from .errors import (
    BnnTunerError,
    IncompleteTable,
    LabelOutOfRange,
    ModelHashMismatch,
    ParseError,
    UnsupportedVersion,
    ValidationFailed,
)
from .mapper import (
    BASELINE_STRATEGIES,
    baseline_assignments,
    batch_sweep,
    per_batch_assignments,
    select_plan,
)
from .model import ModelSpec, layer_display_name, model_digest
from .modelio import ARCHITECTURES
from .profiler import DEFAULT_REPS, DEFAULT_WARMUPS, profile_model

EXIT_OK = 0
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_VALIDATION = 5
EXIT_INCOMPLETE = 6
EXIT_HASH = 7
EXIT_OTHER = 1


def _engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help="worker pool size (default: hardware parallelism)")
    p.add_argument("--window-rows", type=int, default=1,
                   help="output rows per Window-axis work item (default 1)")
    p.add_argument("--fuse-transfers", action="store_true",
                   help="skip staging copies between consecutive parallel layers "
                        "(not paper-faithful; off by default)")


def _profile_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reps", type=int, default=DEFAULT_REPS,
                   help=f"timed repetitions per cell (default {DEFAULT_REPS})")
    p.add_argument("--warmups", type=int, default=DEFAULT_WARMUPS,
                   help=f"discarded warmup runs per cell (default {DEFAULT_WARMUPS})")
    p.add_argument("--batch-lower", type=int, default=0, help="lower batch exponent (2**n)")
    p.add_argument("--batch-upper", type=int, default=7, help="upper batch exponent (2**n)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnntuner",
        description="Profile a binarized network's layers across eight execution "
                    "backends and batch sizes, pick the fastest per-layer mapping, "
                    "and run or compare the resulting plan.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="profile the model and emit plan/profile/summary files")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--data", required=True, help="test dataset CSV path")
    p.add_argument("--outpath", default=".", help="directory for plan.json/profile.json/summary.md")
    _profile_flags(p)
    _engine_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("run", help="execute a tuned plan over a dataset")
    p.add_argument("--plan", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--outpath", default=".", help="directory for predictions.csv")
    _engine_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="measure CPU-only / naive-X / full-XYZ / efficient "
                                       "end-to-end at every batch size")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--outpath", default=".", help="directory for compare.csv/compare.md")
    _profile_flags(p)
    _engine_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-model", help="write a synthetic model with seeded random weights")
    p.add_argument("--arch", required=True, choices=ARCHITECTURES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--force", action="store_true", help="overwrite an existing file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("validate", help="check a model file against the structural invariants")
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    return parser


def _load_inputs(args) -> tuple[ModelSpec, "modelio.IntTensor", list[int]]:
    model = modelio.load_model(args.model)
    images, labels = modelio.load_dataset(args.data, model.input.shape, model.num_classes)
    return model, images, labels


def _emit(args, report: dict, text: str) -> None:
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(text)


def _mapping_table(model: ModelSpec, rows: dict[str, list]) -> str:
    """Markdown table with layer shorthands as columns, one row per label."""
    names = [layer_display_name(layer) for layer in model.layers]
    lines = ["| " + " | ".join([""] + names) + " |",
             "|" + "---|" * (len(names) + 1)]
    for label, configs in rows.items():
        lines.append("| " + " | ".join([label] + [c.value for c in configs]) + " |")
    return "\n".join(lines)


def cmd_tune(args) -> int:
    model, images, labels = _load_inputs(args)
    if images.dims[0] == 0:
        raise ParseError(f"{args.data}: tuning needs a nonempty dataset")
    sweep = batch_sweep(args.batch_lower, args.batch_upper)
    outdir = Path(args.outpath)
    outdir.mkdir(parents=True, exist_ok=True)
    with ExecutionEngine(args.threads, args.window_rows, args.fuse_transfers) as engine:
        table = profile_model(engine, model, images, sweep, args.warmups, args.reps)
    table.per_batch_argmin = per_batch_assignments(table, model)
    plan = select_plan(table, model)

    plan_path = outdir / "plan.json"
    profile_path = outdir / "profile.json"
    summary_path = outdir / "summary.md"
    modelio.save_plan(plan, plan_path)
    modelio.save_profile(table, profile_path)

    n = images.dims[0]
    per_image_ms = plan.predicted_per_image_ns() / 1e6
    rows = {f"batch {b}{' *' if b == plan.batch_size else ''}": cfgs
            for b, cfgs in table.per_batch_argmin.items()}
    summary = "\n".join([
        f"# Tuning summary: {model.name}",
        "",
        f"- model hash: `{plan.model_hash}`",
        f"- workers: {plan.workers}, batch sizes swept: {list(table.meta.batch_sizes)}",
        f"- chosen batch size: **{plan.batch_size}**",
        f"- predicted per-image latency: {per_image_ms:.3f} ms "
        f"({per_image_ms * n / 1e3:.3f} s over the {n}-image dataset)",
        "",
        "Winning configuration per layer at each batch size (* = chosen):",
        "",
        _mapping_table(model, rows),
        "",
    ])
    summary_path.write_text(summary)

    report = {
        "model": model.name,
        "model_hash": plan.model_hash,
        "chosen_batch_size": plan.batch_size,
        "assignments": [c.value for c in plan.assignments],
        "predicted_per_image_ms": per_image_ms,
        "files": {"plan": str(plan_path), "profile": str(profile_path), "summary": str(summary_path)},
    }
    _emit(args, report, summary)
    return EXIT_OK


def cmd_run(args) -> int:
    model, images, labels = _load_inputs(args)
    plan = modelio.load_plan(args.plan, expected_model_hash=model_digest(model))
    if images.dims[0] == 0:
        raise ParseError(f"{args.data}: refusing to run on an empty dataset")
    threads = args.threads if args.threads is not None else plan.workers
    warning = None
    if threads != plan.workers:
        warning = (f"plan was tuned at workers={plan.workers} but running with "
                   f"workers={threads}; measured times will not match predictions")
        print(f"warning: {warning}", file=sys.stderr)
    outdir = Path(args.outpath)
    outdir.mkdir(parents=True, exist_ok=True)
    with ExecutionEngine(threads, args.window_rows, args.fuse_transfers) as engine:
        result = engine.run_model(model, images, plan.assignments, plan.batch_size)
    accuracy = result.accuracy(labels)
    n = images.dims[0]

    pred_path = outdir / "predictions.csv"
    with open(pred_path, "w") as f:
        f.write("index,label,prediction\n")
        for i, (lab, pred) in enumerate(zip(labels, result.predictions)):
            f.write(f"{i},{lab},{pred}\n")

    per_layer = [
        {
            "layer": i + 1,
            "name": layer_display_name(layer),
            "config": cfg.value,
            "overhead_ms": result.overhead_ns[i] / 1e6,
            "compute_ms": result.compute_ns[i] / 1e6,
        }
        for i, (layer, cfg) in enumerate(zip(model.layers, plan.assignments))
    ]
    report = {
        "model": model.name,
        "batch_size": plan.batch_size,
        "workers": threads,
        "images": n,
        "wall_s": result.wall_ns / 1e9,
        "per_image_ms": result.wall_ns / n / 1e6,
        "accuracy": accuracy,
        "per_layer": per_layer,
        "predictions_file": str(pred_path),
    }
    if warning:
        report["warning"] = warning
    lines = [
        f"model: {model.name}",
        f"plan: batch_size={plan.batch_size}, workers={threads}",
        f"images: {n}; wall time: {report['wall_s']:.3f} s ({report['per_image_ms']:.3f} ms/image)",
        f"accuracy: {accuracy:.4f}",
        "per-layer (config, overhead ms, compute ms):",
    ]
    for row in per_layer:
        lines.append(f"  {row['layer']:>2} {row['name']:<8} {row['config']:<4} "
                     f"{row['overhead_ms']:>10.3f} {row['compute_ms']:>10.3f}")
    lines.append(f"predictions written to {pred_path}")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


def cmd_compare(args) -> int:
    model, images, labels = _load_inputs(args)
    if images.dims[0] == 0:
        raise ParseError(f"{args.data}: comparison needs a nonempty dataset")
    sweep = batch_sweep(args.batch_lower, args.batch_upper)
    n = images.dims[0]
    outdir = Path(args.outpath)
    outdir.mkdir(parents=True, exist_ok=True)

    with ExecutionEngine(args.threads, args.window_rows, args.fuse_transfers) as engine:
        table = profile_model(engine, model, images, sweep, args.warmups, args.reps)
        argmin = per_batch_assignments(table, model)
        plan = select_plan(table, model)
        strategies = list(BASELINE_STRATEGIES) + ["efficient"]
        measured: dict[str, dict[int, float]] = {s: {} for s in strategies}
        for b in sweep:
            for strategy in BASELINE_STRATEGIES:
                assignments = baseline_assignments(model, strategy)
                measured[strategy][b] = engine.run_model(model, images, assignments, b).wall_ns / 1e9
            measured["efficient"][b] = engine.run_model(model, images, argmin[b], b).wall_ns / 1e9

    csv_lines = ["batch," + ",".join(strategies)]
    md_lines = ["| batch | " + " | ".join(strategies) + " | winner |",
                "|" + "---|" * (len(strategies) + 2)]
    for b in sweep:
        row = [measured[s][b] for s in strategies]
        winner = strategies[int(np.argmin(row))]
        csv_lines.append(f"{b}," + ",".join(f"{v:.6f}" for v in row))
        md_lines.append(f"| {b} | " + " | ".join(f"{v:.3f}s" for v in row) + f" | {winner} |")

    predicted_scaled_s = plan.predicted_per_image_ns() * n / 1e9
    csv_path = outdir / "compare.csv"
    md_path = outdir / "compare.md"
    csv_path.write_text("\n".join(csv_lines) + "\n")
    text = "\n".join([
        f"# Strategy comparison: {model.name} ({n} images, workers={table.meta.workers})",
        "",
        "\n".join(md_lines),
        "",
        f"- efficient plan chose batch size {plan.batch_size}",
        f"- predicted total at chosen batch (scaled to dataset): {predicted_scaled_s:.3f} s",
        f"- measured efficient at chosen batch: {measured['efficient'][plan.batch_size]:.3f} s",
        "",
    ])
    md_path.write_text(text)

    report = {
        "model": model.name,
        "images": n,
        "batch_sizes": sweep,
        "measured_s": {s: {str(b): measured[s][b] for b in sweep} for s in strategies},
        "chosen_batch_size": plan.batch_size,
        "predicted_total_s_at_chosen_batch": predicted_scaled_s,
        "measured_efficient_s_at_chosen_batch": measured["efficient"][plan.batch_size],
        "files": {"csv": str(csv_path), "markdown": str(md_path)},
    }
    _emit(args, report, text)
    return EXIT_OK


def cmd_gen_model(args) -> int:
    out = Path(args.out)
    if out.exists() and not args.force:
        print(f"error: {out} exists; pass --force to overwrite", file=sys.stderr)
        return EXIT_IO
    model = modelio.export_synthetic_model(args.arch, args.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    modelio.save_model(model, out)
    report = {
        "arch": args.arch,
        "seed": args.seed,
        "layers": len(model.layers),
        "model_hash": model_digest(model),
        "path": str(out),
    }
    _emit(args, report, f"wrote {args.arch} model ({len(model.layers)} layers) to {out}\n"
                        f"hash: {report['model_hash']}")
    return EXIT_OK


def cmd_validate(args) -> int:
    model = modelio.load_model(args.model)  # raises ValidationFailed on violations
    report = {
        "model": model.name,
        "layers": len(model.layers),
        "valid": True,
        "model_hash": model_digest(model),
    }
    _emit(args, report, f"ok: {model.name} ({len(model.layers)} layers) is well formed")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationFailed as e:
        print("validation failed:", file=sys.stderr)
        for violation in e.violations:
            print(f"  - {violation}", file=sys.stderr)
        return EXIT_VALIDATION
    except IncompleteTable as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except ModelHashMismatch as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_HASH
    except (ParseError, LabelOutOfRange, UnsupportedVersion) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except BnnTunerError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    raise SystemExit(main())
