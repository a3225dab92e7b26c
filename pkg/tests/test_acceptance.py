"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``. The training-based
criteria (4-7) exercise the desk profile end to end and dominate the
runtime; the whole module is sized for a laptop-class CPU.
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from orthtd.config import parse_experiment_config
from orthtd.decomposition import DecompConfig, PredictionHead, Projection, ortho_loss
from orthtd.encoders import TabularEncoderConfig, TextEncoderConfig
from orthtd.evaluation import evaluate
from orthtd.experiment import (
    _rung_model_config,
    evaluate_checkpoint,
    load_base_cohort,
    run_experiment,
    split_cohort,
)
from orthtd.fusion import FusionConfig
from orthtd.gradcheck import finite_diff_check
from orthtd.losses import (
    LossConfig,
    asymmetric_loss,
    asymmetric_loss_elementwise,
    combined_loss,
    uncertainty_weighted_loss,
)
from orthtd.metrics import auc, auprc, curves, trapezoid_area
from orthtd.ops import (
    LayerNorm,
    TransformerEncoderBlock,
    affine,
    gelu,
    layer_norm,
    row_cosine,
)
from orthtd.strategies import (
    STRATEGIES,
    ModelConfig,
    StrategyConfig,
    build_strategy,
)
from orthtd.synthetic import SyntheticSpec, generate_synthetic
from orthtd.training import train

from test_metrics import pairwise_auc_oracle, prefix_ap_oracle

SEEDS = (1, 2, 3, 4, 5)


def report(criterion: int, message: str):
    print(f"\nACCEPTANCE CRITERION {criterion} PASS: {message}")


# ---------------------------------------------------------------------------
# Criterion 1: finite-difference gradient suite over every differentiable op.
# ---------------------------------------------------------------------------


def _g(seed):
    return torch.Generator().manual_seed(seed)


def _rand(*shape, seed, scale=1.0):
    return (scale * torch.randn(*shape, generator=_g(seed), dtype=torch.float64)).requires_grad_(True)


def make_affine(seed):
    x = _rand(3, 4, seed=seed)
    w = _rand(4, 2, seed=seed + 1)
    b = _rand(2, seed=seed + 2)
    return lambda: (affine(x, w, b) ** 2).mean(), [x, w, b]


def make_gelu(seed):
    x = _rand(12, seed=seed, scale=2.0)
    return lambda: gelu(x).sum(), [x]


def make_layer_norm(seed):
    x = _rand(3, 5, seed=seed, scale=2.0)
    gain = _rand(5, seed=seed + 1)
    bias = _rand(5, seed=seed + 2)
    return lambda: (layer_norm(x, gain, bias) ** 3).mean(), [x, gain, bias]


def make_attention_block(seed):
    torch.manual_seed(seed)
    block = TransformerEncoderBlock(dim=4, heads=2).double()
    x = _rand(2, 3, 4, seed=seed + 1)
    return lambda: (block(x) ** 2).mean(), [x] + list(block.parameters())


def make_row_cosine(seed):
    a = _rand(4, 5, seed=seed)
    b = _rand(4, 5, seed=seed + 1)
    return lambda: row_cosine(a, b).abs().mean(), [a, b]


def make_projection(seed):
    torch.manual_seed(seed)
    proj = Projection(6, 4).double()
    x = _rand(3, 6, seed=seed + 1)
    return lambda: (proj(x) ** 2).mean(), [x] + list(proj.parameters())


def make_head(seed):
    torch.manual_seed(seed)
    head = PredictionHead(6, 3).double()
    x = _rand(4, 6, seed=seed + 1)
    return lambda: head(x).sum(), [x] + list(head.parameters())


def make_asl(seed):
    # keep probabilities away from the margin kink (|p - m| >> fd eps)
    theta = (torch.rand(6, generator=_g(seed), dtype=torch.float64) * 4.0 - 2.0).requires_grad_(True)
    y = (torch.rand(6, generator=_g(seed + 1)) < 0.5).double()
    cfg = LossConfig()
    return lambda: asymmetric_loss(torch.sigmoid(theta), y, cfg), [theta]


def make_combined(seed):
    tl = _rand(4, seed=seed).abs().detach().requires_grad_(True)
    ortho = _rand(1, seed=seed + 1).abs().detach().requires_grad_(True)
    return lambda: combined_loss(tl, ortho.squeeze(), 0.1), [tl, ortho]


def make_uncertainty(seed):
    tl = (_rand(3, seed=seed).abs() + 0.1).detach().requires_grad_(True)
    s = _rand(3, seed=seed + 1).detach().requires_grad_(True)
    return lambda: uncertainty_weighted_loss(tl, s), [tl, s]


def make_cross_stitch(seed):
    feats = _rand(2, 3, 4, seed=seed)
    alpha = torch.tensor([[0.9, 0.1], [0.1, 0.9]], dtype=torch.float64, requires_grad=True)
    target = torch.randn(2, 3, 4, generator=_g(seed + 1), dtype=torch.float64)

    def f():
        mixed = torch.einsum("ji,ibd->jbd", alpha, feats)
        return ((mixed - target) ** 2).mean()

    return f, [alpha, feats]


def make_mmoe(seed):
    torch.manual_seed(seed)
    experts = torch.nn.ModuleList([Projection(4, 4).double() for _ in range(2)])
    gates = torch.nn.Linear(4, 2).double()
    h = _rand(3, 4, seed=seed + 1)

    def f():
        ex = torch.stack([e(h) for e in experts], dim=0)
        w = torch.softmax(gates(h), dim=-1)
        feat = torch.einsum("be,ebd->bd", w, ex)
        return (feat**2).mean()

    return f, [h] + list(experts.parameters()) + list(gates.parameters())


GRADIENT_SUITE = {
    "affine": make_affine,
    "gelu": make_gelu,
    "layer_norm": make_layer_norm,
    "attention_block": make_attention_block,
    "row_cosine": make_row_cosine,
    "projection": make_projection,
    "prediction_head": make_head,
    "asymmetric_loss": make_asl,
    "combined_loss": make_combined,
    "uncertainty_loss": make_uncertainty,
    "cross_stitch": make_cross_stitch,
    "mmoe": make_mmoe,
}


def test_criterion_1_gradient_suite():
    start = time.time()
    worst = {}
    for name, builder in GRADIENT_SUITE.items():
        errs = []
        for trial in range(20):
            f, params = builder(seed=1000 * trial + hash(name) % 997)
            err = finite_diff_check(f, params)
            errs.append(err)
        worst[name] = max(errs)
        assert worst[name] < 1e-4, f"{name}: max rel err {worst[name]:.2e}"
    elapsed = time.time() - start
    assert elapsed < 120.0, f"gradient suite took {elapsed:.0f}s"
    summary = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(1, f"20 randomized instances per op, all rel err < 1e-4 in {elapsed:.0f}s ({summary})")


# ---------------------------------------------------------------------------
# Criterion 2: metric oracles.
# ---------------------------------------------------------------------------


def test_criterion_2_metric_oracles():
    rng = np.random.default_rng(42)
    checked = 0
    for i in range(200):
        n = int(rng.integers(4, 201))
        if i % 2 == 0:
            scores = rng.integers(0, 5, size=n).astype(np.float64) / 4.0  # tie-heavy
        else:
            scores = rng.normal(size=n)
        labels = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(np.int64)
        if labels.sum() == 0:
            labels[int(rng.integers(0, n))] = 1
        if labels.sum() == n:
            labels[int(rng.integers(0, n))] = 0
        assert auc(scores, labels) == pairwise_auc_oracle(scores, labels)
        assert auprc(scores, labels) == prefix_ap_oracle(scores, labels)
        cs = curves(scores, labels)
        assert abs(trapezoid_area(cs.roc) - auc(scores, labels)) <= 1e-12
        checked += 1
    report(2, f"auc/auprc match brute-force oracles exactly on {checked} instances; "
              "ROC trapezoid equals auc to 1e-12")


# ---------------------------------------------------------------------------
# Criterion 3: loss identities.
# ---------------------------------------------------------------------------


def test_criterion_3_loss_identities():
    g = torch.Generator().manual_seed(7)
    p = torch.rand(10_000, generator=g, dtype=torch.float64) * 0.998 + 0.001
    y = (torch.rand(10_000, generator=g, dtype=torch.float64) < 0.3).double()
    bce_cfg = LossConfig(gamma_pos=0.0, gamma_neg=0.0, margin=0.0)
    ours = asymmetric_loss_elementwise(p, y, bce_cfg)
    ref = -(y * torch.log(p) + (1 - y) * torch.log(1 - p))
    max_dev = (ours - ref).abs().max().item()
    assert max_dev <= 1e-12

    tl = torch.rand(4, generator=g, dtype=torch.float64)
    slope_dev = 0.0
    for lam in (0.0, 0.1, 0.3, 1.7):
        o1 = torch.rand((), generator=g, dtype=torch.float64)
        o2 = torch.rand((), generator=g, dtype=torch.float64)
        delta = (combined_loss(tl, o2, lam) - combined_loss(tl, o1, lam)).item()
        slope_dev = max(slope_dev, abs(delta - lam * (o2 - o1).item()))
    assert slope_dev <= 1e-12

    tl3 = torch.rand(5, generator=g, dtype=torch.float64)
    plain = uncertainty_weighted_loss(tl3, torch.zeros(5, dtype=torch.float64)).item()
    assert abs(plain - tl3.sum().item()) <= 1e-12
    report(3, f"ASL(0,0,0) == BCE to {max_dev:.1e} on 1e4 points; combined loss affine "
              f"in the penalty (slope dev {slope_dev:.1e}); uncertainty(s=0) == plain sum")


# ---------------------------------------------------------------------------
# Criteria 4-6: training behavior on synthetic cohorts (desk profile).
# ---------------------------------------------------------------------------


def desk_config(synthetic: dict, **blocks) -> "ExperimentConfig":
    doc = {"out_dir": "unused", "profile": "desk", "data": {"synthetic": synthetic}}
    doc.update(blocks)
    return parse_experiment_config(doc)


def train_rung(cfg, base, rung, seed, lam_override=None):
    model_config, lam = _rung_model_config(cfg, rung)
    if lam_override is not None:
        lam = lam_override
    train_c, test_c = split_cohort(cfg, base, seed)
    torch.manual_seed(seed)
    model = build_strategy(train_c.schema, model_config)
    history = train(
        model,
        train_c,
        replace(cfg.train, seed=seed),
        replace(cfg.loss, lambda_ortho=lam),
        cfg.text,
    )
    return model, history, test_c


def test_criterion_4_orthogonality_behavior():
    start = time.time()
    cfg = desk_config({"n_patients": 4000, "text_length": 16, "seed": 100})
    base = load_base_cohort(cfg)
    finals = {"d": [], "c": []}
    for seed in SEEDS:
        _m, hist_d, _t = train_rung(cfg, base, "d_orthogonality", seed)
        finals["d"].append(hist_d[-1].ortho)
        _m, hist_c, _t = train_rung(cfg, base, "c_decomposition", seed)
        finals["c"].append(hist_c[-1].ortho)
    mean_d = float(np.mean(finals["d"]))
    mean_c = float(np.mean(finals["c"]))
    elapsed = time.time() - start
    assert mean_d < 0.05, f"lambda=0.1 mean final ortho {mean_d:.4f}"
    assert mean_c > 0.15, f"lambda=0 mean final |cosine| {mean_c:.4f}"
    assert elapsed < 900.0, f"criterion 4 took {elapsed:.0f}s"
    report(4, f"with lambda=0.1 mean final L_ortho {mean_d:.4f} < 0.05; unpenalized "
              f"mean |cosine| {mean_c:.4f} > 0.15 (5 seeds, {elapsed:.0f}s)")


def test_criterion_6_no_signal_null():
    cfg = desk_config(
        {
            "n_patients": 5000,
            "text_length": 16,
            "seed": 300,
            "target_prevalence": [0.25, 0.2, 0.15, 0.1],
            "shared_signal_weight": 0.0,
            "specific_signal_weight": 0.0,
        },
        train={"epochs": 6},
    )
    base = load_base_cohort(cfg)
    train_c, test_c = split_cohort(cfg, base, cfg.seed)
    results = {}
    for name in STRATEGIES:
        model_config = replace(cfg.model_config(), strategy=StrategyConfig(name))
        torch.manual_seed(cfg.seed)
        model = build_strategy(train_c.schema, model_config)
        lam = cfg.loss.lambda_ortho if name == "orthtd" else 0.0
        train(model, train_c, cfg.train, replace(cfg.loss, lambda_ortho=lam), cfg.text)
        rep = evaluate(model, test_c, cfg.text, with_curves=False)
        results[name] = rep.macro_auc
        assert 0.45 <= rep.macro_auc <= 0.55, f"{name}: macro AUC {rep.macro_auc:.4f}"
    summary = ", ".join(f"{k} {v:.3f}" for k, v in results.items())
    report(6, f"zero-signal macro AUC within [0.45, 0.55] for every strategy ({summary})")


# ---------------------------------------------------------------------------
# Criterion 7: determinism and persistence.
# ---------------------------------------------------------------------------


def test_criterion_7_determinism_and_persistence(tmp_path):
    def config_for(out_dir):
        return parse_experiment_config(
            {
                "out_dir": str(out_dir),
                "profile": "desk",
                "seed": 9,
                "data": {
                    "synthetic": {
                        "n_patients": 300,
                        "text_length": 8,
                        "vocab_size": 40,
                        "target_prevalence": [0.3, 0.25, 0.2, 0.15],
                        "seed": 77,
                    }
                },
                "fusion": {"d_hidden": 16, "layers": 1, "heads": 2},
                "text": {"embed_dim": 8, "layers": 1, "heads": 2},
                "train": {"epochs": 3, "batch_size": 64},
            }
        )

    r1 = run_experiment(config_for(tmp_path / "a"))
    r2 = run_experiment(config_for(tmp_path / "b"))
    h1 = (r1.run_dir / "history.jsonl").read_bytes()
    h2 = (r2.run_dir / "history.jsonl").read_bytes()
    assert h1 == h2, "history logs differ between identical runs"

    stored = json.loads((r1.run_dir / "report.json").read_text())
    eval_report = evaluate_checkpoint(
        config_for(tmp_path / "a"), r1.checkpoint_path, tmp_path / "eval"
    )
    assert eval_report.to_dict() == stored, "checkpoint round-trip changed the report"
    report(7, "identical config+seed produced byte-identical history logs; "
              "checkpoint save/load reproduced the evaluation report exactly")


# ---------------------------------------------------------------------------
# Criterion 8: prevalence calibration at n = 10000.
# ---------------------------------------------------------------------------


def test_criterion_8_prevalence_calibration():
    spec = SyntheticSpec(n_patients=10_000, seed=2024)
    cohort, _ = generate_synthetic(spec)
    deviations = {}
    for name, target in zip(spec.task_names, spec.target_prevalence):
        dev = abs(cohort.prevalence(name) - target)
        deviations[name] = dev
        assert dev <= 0.005, f"{name}: |empirical - target| = {dev:.4f}"
    summary = ", ".join(f"{k} {v:.4f}" for k, v in deviations.items())
    report(8, f"targets 12.8/10.9/0.9/1.5% hit within +-0.5 pp at n=10000 (devs: {summary})")
