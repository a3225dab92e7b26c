"""Command-line entry point.

Commands: generate | train | evaluate | ablate | compare. Exit codes:
0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .config import load_experiment_config
from .errors import (
    CheckpointError,
    CohortFormatError,
    ConfigError,
    NumericError,
    SchemaError,
)
from .evaluation import format_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True):
    parser.add_argument("--config", required=config_required, help="experiment config JSON")
    parser.add_argument("--profile", choices=("paper", "desk"), help="dimension preset override")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--strategy", help="strategy override")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--overwrite", action="store_true", help="replace existing artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthtd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic cohort")
    gen.add_argument("--spec", required=True, help="synthetic spec JSON")
    gen.add_argument("--out", required=True, help="cohort JSONL output path")
    gen.add_argument("--latents", required=True, help="ground-truth latents JSONL output path")
    gen.add_argument("--schema", help="schema JSON output path (default: schema.json next to --out)")
    gen.add_argument("--seed", type=int, help="seed override")
    gen.add_argument("--any-as-or", action="store_true", dest="any_as_or",
                     help="derive the first task as the OR of the others")
    gen.add_argument("--overwrite", action="store_true")

    tr = sub.add_parser("train", help="run one experiment (generate/load, split, train, evaluate)")
    _add_common(tr)

    ev = sub.add_parser("evaluate", help="evaluate a checkpoint on the config's held-out split")
    _add_common(ev)
    ev.add_argument("--checkpoint", required=True, help="checkpoint file (.otd)")

    ab = sub.add_parser("ablate", help="train the four-rung ablation ladder over seeds")
    _add_common(ab)
    ab.add_argument("--seeds", help="comma-separated seed list (default 1,2,3,4,5)")

    cp = sub.add_parser("compare", help="train all six strategies over seeds")
    _add_common(cp)
    cp.add_argument("--seeds", help="comma-separated seed list (default 1,2,3,4,5)")

    return parser


def _overrides_from(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for key in ("profile", "seed", "strategy"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "seeds", None):
        try:
            overrides["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--seeds must be a comma-separated integer list, got {args.seeds!r}")
    return overrides


def _cmd_generate(args: argparse.Namespace) -> int:
    from .cohort import write_cohort, write_schema
    from .synthetic import SyntheticSpec, generate_synthetic, write_latents

    spec_path = Path(args.spec)
    if not spec_path.exists():
        raise ConfigError(f"spec file not found: {spec_path}")
    try:
        doc = json.loads(spec_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{spec_path}: invalid JSON ({e.msg})") from e
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.any_as_or:
        doc["any_as_or"] = True
    try:
        spec = SyntheticSpec.from_dict(doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid synthetic spec: {e}") from e

    out_path = Path(args.out)
    schema_path = Path(args.schema) if args.schema else out_path.parent / "schema.json"
    latents_path = Path(args.latents)
    for p in (out_path, schema_path, latents_path):
        if p.exists() and not args.overwrite:
            raise ConfigError(f"{p} already exists; pass --overwrite to replace")
        p.parent.mkdir(parents=True, exist_ok=True)

    cohort, latents = generate_synthetic(spec)
    write_cohort(cohort, out_path)
    write_schema(cohort.schema, schema_path)
    write_latents(latents, latents_path)
    prevalences = {t: round(cohort.prevalence(t), 4) for t in spec.task_names}
    print(f"wrote {len(cohort)} records to {out_path}")
    print(f"schema: {schema_path}; latents: {latents_path}")
    print(f"prevalences: {prevalences}")
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    from .experiment import run_experiment

    cfg = load_experiment_config(args.config, _overrides_from(args))
    result = run_experiment(cfg, overwrite=args.overwrite)
    print(f"run artifacts in {result.run_dir}")
    print(format_report(result.report))
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    from .experiment import evaluate_checkpoint

    cfg = load_experiment_config(args.config, _overrides_from(args))
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir) / "evaluation"
    report = evaluate_checkpoint(cfg, args.checkpoint, out_dir, overwrite=args.overwrite)
    print(f"evaluation artifacts in {out_dir}")
    print(format_report(report))
    return EXIT_OK


def _print_summary(summary: dict, label: str) -> None:
    print(f"{label} summary (mean +- std over seeds):")
    for variant, metrics in summary.items():
        auc_m = metrics["macro_auc"]
        ap_m = metrics["macro_auprc"]
        print(
            f"  {variant:<18} AUC {auc_m['mean']:.4f} +- {auc_m['std']:.4f}   "
            f"AUPRC {ap_m['mean']:.4f} +- {ap_m['std']:.4f}"
        )


def _cmd_ablate(args: argparse.Namespace) -> int:
    from .experiment import run_ablation

    cfg = load_experiment_config(args.config, _overrides_from(args))
    _rows, summary, csv_path = run_ablation(cfg, overwrite=args.overwrite)
    _print_summary(summary, "ablation")
    print(f"table: {csv_path}")
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    from .experiment import run_compare

    cfg = load_experiment_config(args.config, _overrides_from(args))
    _rows, summary, csv_path = run_compare(cfg, overwrite=args.overwrite)
    _print_summary(summary, "strategy comparison")
    print(f"table: {csv_path}")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, SchemaError, CohortFormatError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
