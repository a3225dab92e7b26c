"""Experiment orchestration: single runs, the ablation ladder and the
strategy comparison.

Every run is fully determined by (config, seed): torch is seeded before
model construction, batch order comes from the train seed, and a single
compute thread is used so repeated runs produce byte-identical history logs.
Artifacts land in ``<out_dir>/<run_id>/``; multi-run commands additionally
write summary tables and figures at the output root. Existing artifacts are
never clobbered unless overwrite is requested.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .cohort import Cohort, load_cohort, load_schema, stratified_split
from .config import ExperimentConfig
from .errors import ConfigError
from .evaluation import EvaluationReport, evaluate, write_curve_files, write_report
from .plots import save_comparison_figure, save_curve_figures, save_history_figure
from .strategies import STRATEGIES, ModelConfig, StrategyConfig, build_strategy
from .synthetic import generate_synthetic
from .training import EpochRecord, train, write_history
from .vitals import augment_cohort

ABLATION_RUNGS = ("a_base", "b_global_token", "c_decomposition", "d_orthogonality")


@dataclass
class RunResult:
    run_dir: Path
    report: EvaluationReport
    history: list[EpochRecord]
    checkpoint_path: Path


def _ensure_run_dir(run_dir: Path, overwrite: bool) -> Path:
    if run_dir.exists() and any(run_dir.iterdir()):
        if not overwrite:
            raise ConfigError(
                f"output directory {run_dir} already holds artifacts; pass --overwrite to replace"
            )
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _guard_file(path: Path, overwrite: bool) -> Path:
    if path.exists() and not overwrite:
        raise ConfigError(f"{path} already exists; pass --overwrite to replace")
    return path


def load_base_cohort(cfg: ExperimentConfig) -> Cohort:
    """Load or generate the raw cohort and fold in the vital features."""
    if cfg.data.synthetic is not None:
        cohort, _latents = generate_synthetic(cfg.data.synthetic)
    else:
        schema = load_schema(cfg.data.schema_path)
        cohort = load_cohort(cfg.data.cohort_path, schema)
    return augment_cohort(cohort, cfg.vitals)


def split_cohort(cfg: ExperimentConfig, cohort: Cohort, seed: int) -> tuple[Cohort, Cohort]:
    split_seed = cfg.split.seed if cfg.split.seed is not None else seed
    return stratified_split(
        cohort,
        train_fraction=cfg.split.train_fraction,
        stratify_task=cfg.split.stratify_task,
        seed=split_seed,
    )


def execute_run(
    cfg: ExperimentConfig,
    model_config: ModelConfig,
    train_cohort: Cohort,
    test_cohort: Cohort,
    run_dir: Path,
    seed: int,
    overwrite: bool = False,
) -> RunResult:
    """Train one model and write the full artifact set into ``run_dir``."""
    torch.set_num_threads(1)
    _ensure_run_dir(run_dir, overwrite)

    torch.manual_seed(seed)
    model = build_strategy(train_cohort.schema, model_config)
    train_config = replace(cfg.train, seed=seed)
    history = train(
        model,
        train_cohort,
        train_config,
        cfg.loss,
        model_config.text,
        val_cohort=test_cohort,
    )
    report = evaluate(model, test_cohort, model_config.text)

    resolved = dict(cfg.to_dict())
    resolved["seed"] = seed
    resolved["strategy"] = model_config.strategy.to_dict()
    resolved["fusion"] = model_config.fusion.to_dict()
    (run_dir / "config.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    ckpt_path = run_dir / "checkpoint.otd"
    save_checkpoint(
        model,
        ckpt_path,
        schema=train_cohort.schema,
        model_config=model_config,
        vitals_spec=cfg.vitals,
        schedule_step=len(history),
        seed=seed,
    )
    write_history(history, run_dir / "history.jsonl")
    write_report(report, run_dir / "report.json")
    write_curve_files(report, run_dir)
    save_curve_figures(report, run_dir)
    save_history_figure(history, run_dir / "history.png")
    return RunResult(run_dir=run_dir, report=report, history=history, checkpoint_path=ckpt_path)


def run_experiment(cfg: ExperimentConfig, overwrite: bool = False) -> RunResult:
    """generate/load -> split -> train -> evaluate, with artifacts."""
    base = load_base_cohort(cfg)
    train_c, test_c = split_cohort(cfg, base, cfg.seed)
    run_id = cfg.run_id or f"{cfg.strategy.name}_{cfg.profile}_seed{cfg.seed}"
    run_dir = Path(cfg.out_dir) / run_id
    return execute_run(cfg, cfg.model_config(), train_c, test_c, run_dir, cfg.seed, overwrite)


def _rung_model_config(cfg: ExperimentConfig, rung: str) -> tuple[ModelConfig, float]:
    """Model config and ortho weight for one ablation rung."""
    base = cfg.model_config()
    if rung == "a_base":
        mc = ModelConfig(
            strategy=StrategyConfig("hard_sharing"),
            fusion=replace(base.fusion, use_global_token=False),
            decomp=base.decomp,
            tabular=base.tabular,
            text=base.text,
        )
        return mc, 0.0
    if rung == "b_global_token":
        return replace(base, strategy=StrategyConfig("hard_sharing")), 0.0
    if rung == "c_decomposition":
        return replace(base, strategy=StrategyConfig("orthtd")), 0.0
    if rung == "d_orthogonality":
        return replace(base, strategy=StrategyConfig("orthtd")), cfg.loss.lambda_ortho
    raise ValueError(f"unknown ablation rung {rung!r}")


def _summarize(rows: list[dict], key: str, metrics: tuple[str, ...]) -> dict:
    summary: dict = {}
    for variant in dict.fromkeys(r[key] for r in rows):
        variant_rows = [r for r in rows if r[key] == variant]
        summary[variant] = {}
        for metric in metrics:
            vals = [r[metric] for r in variant_rows if r[metric] is not None]
            if vals:
                mean = float(np.mean(vals))
                std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            else:
                mean, std = float("nan"), float("nan")
            summary[variant][metric] = {"mean": mean, "std": std}
    return summary


def _write_rows(rows: list[dict], fieldnames: list[str], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _multi_run(
    cfg: ExperimentConfig,
    variants: list[tuple[str, ModelConfig, float]],
    label: str,
    overwrite: bool,
) -> tuple[list[dict], dict, Path]:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = _guard_file(out_dir / f"{label}.csv", overwrite)
    summary_path = _guard_file(out_dir / f"{label}_summary.json", overwrite)
    fig_path = _guard_file(out_dir / f"{label}.png", overwrite)

    base = load_base_cohort(cfg)
    rows: list[dict] = []
    for seed in cfg.seeds:
        train_c, test_c = split_cohort(cfg, base, seed)
        for name, model_config, lam in variants:
            run_cfg = replace(cfg, loss=replace(cfg.loss, lambda_ortho=lam))
            run_dir = out_dir / f"{name}_seed{seed}"
            result = execute_run(
                run_cfg, model_config, train_c, test_c, run_dir, seed, overwrite
            )
            rows.append(
                {
                    "variant": name,
                    "seed": seed,
                    "macro_auc": result.report.macro_auc,
                    "macro_auprc": result.report.macro_auprc,
                    "macro_brier": result.report.macro_brier,
                    "final_ortho": result.history[-1].ortho,
                }
            )

    metrics = ("macro_auc", "macro_auprc", "macro_brier", "final_ortho")
    summary = _summarize(rows, "variant", metrics)
    _write_rows(rows, ["variant", "seed", *metrics], csv_path)
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    save_comparison_figure(summary, fig_path, title=label)
    return rows, summary, csv_path


def run_ablation(cfg: ExperimentConfig, overwrite: bool = False) -> tuple[list[dict], dict, Path]:
    """Train the four-rung ladder on identical data/seeds.

    Rungs: (a) fusion without the global token + hard sharing, (b) + global
    token, (c) + task decomposition (ortho weight 0), (d) + orthogonality.
    """
    variants = []
    for rung in ABLATION_RUNGS:
        model_config, lam = _rung_model_config(cfg, rung)
        variants.append((rung, model_config, lam))
    return _multi_run(cfg, variants, "ablation", overwrite)


def run_compare(cfg: ExperimentConfig, overwrite: bool = False) -> tuple[list[dict], dict, Path]:
    """Train all six strategies on identical data/seeds."""
    variants = []
    for name in STRATEGIES:
        strategy = StrategyConfig(name=name, experts=cfg.strategy.experts)
        model_config = replace(cfg.model_config(), strategy=strategy)
        lam = cfg.loss.lambda_ortho if name == "orthtd" else 0.0
        variants.append((name, model_config, lam))
    return _multi_run(cfg, variants, "compare", overwrite)


def evaluate_checkpoint(
    cfg: ExperimentConfig,
    checkpoint_path: str | Path,
    out_dir: str | Path,
    overwrite: bool = False,
) -> EvaluationReport:
    """Evaluate a stored model on the config's held-out split."""
    torch.set_num_threads(1)
    model, ckpt_schema, model_config, vitals_spec, _header = load_checkpoint(checkpoint_path)
    run_cfg = replace(cfg, vitals=vitals_spec)
    base = load_base_cohort(run_cfg)
    if base.schema != ckpt_schema:
        raise ConfigError(
            "checkpoint schema does not match the configured data "
            "(feature groups or tasks differ)"
        )
    _train_c, test_c = split_cohort(run_cfg, base, run_cfg.seed)
    out = Path(out_dir)
    _ensure_run_dir(out, overwrite)
    report = evaluate(model, test_c, model_config.text)
    write_report(report, out / "report.json")
    write_curve_files(report, out)
    save_curve_figures(report, out)
    return report
