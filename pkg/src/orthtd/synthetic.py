"""Synthetic multimodal cohorts with known shared/task-specific latent structure.

Every patient draws a shared latent vector plus one latent vector per task.
All modalities are deterministic functions of those latents and the seed:
continuous features are random linear mixes, categoricals are quantile
buckets of mixes, text is sampled from a latent-conditioned unigram
distribution, and vitals are latent-shifted noisy sinusoids. Task labels are
Bernoulli in a logistic model whose intercepts are bisection-calibrated so
the realized prevalence matches the requested target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohort import Cohort, FeatureSchema, PatientRecord
from .errors import NumericError

# Reserved token ids; the generator only emits ids >= first_content_token.
CLS_TOKEN_ID = 0
PAD_TOKEN_ID = 1
FIRST_CONTENT_TOKEN = 2

# Vital-series shape constants (not part of the calibrated contract).
_VITAL_BASE = 80.0
_VITAL_AMPLITUDE = 12.0
_VITAL_SHIFT = 8.0
_VITAL_NOISE = 2.0
_VITAL_PERIOD_MIN = 30.0
_VITAL_STEP_MIN = 5.0

_PREVALENCE_TOL = 0.005
_MAX_BISECT_ITERS = 100


@dataclass(frozen=True)
class SyntheticSpec:
    n_patients: int = 4000
    shared_latent_dim: int = 4
    specific_latent_dim: int = 3
    task_names: tuple[str, ...] = ("any_epco", "ppc", "aki", "icu")
    target_prevalence: tuple[float, ...] = (0.128, 0.109, 0.009, 0.015)
    shared_signal_weight: float = 2.0
    specific_signal_weight: float = 2.0
    feature_noise_std: float = 0.5
    vocab_size: int = 120
    seed: int = 0
    n_categorical: int = 6
    n_continuous: int = 10
    n_text_fields: int = 1
    text_length: int = 24
    n_vital_channels: int = 2
    vital_points: int = 13
    missing_rate: float = 0.0
    any_as_or: bool = False

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValueError("n_patients must be positive")
        if len(self.target_prevalence) != len(self.task_names):
            raise ValueError("target_prevalence must align with task_names")
        for p in self.target_prevalence:
            if not 0.0 < p < 1.0:
                raise ValueError(f"target prevalence {p} outside (0, 1)")
        if self.shared_signal_weight < 0 or self.specific_signal_weight < 0:
            raise ValueError("signal weights must be non-negative")
        if self.vocab_size < FIRST_CONTENT_TOKEN + 2:
            raise ValueError("vocab_size too small for reserved ids plus content")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing_rate must be in [0, 1)")

    @property
    def num_tasks(self) -> int:
        return len(self.task_names)

    def to_dict(self) -> dict:
        return {
            "n_patients": self.n_patients,
            "shared_latent_dim": self.shared_latent_dim,
            "specific_latent_dim": self.specific_latent_dim,
            "task_names": list(self.task_names),
            "target_prevalence": list(self.target_prevalence),
            "shared_signal_weight": self.shared_signal_weight,
            "specific_signal_weight": self.specific_signal_weight,
            "feature_noise_std": self.feature_noise_std,
            "vocab_size": self.vocab_size,
            "seed": self.seed,
            "n_categorical": self.n_categorical,
            "n_continuous": self.n_continuous,
            "n_text_fields": self.n_text_fields,
            "text_length": self.text_length,
            "n_vital_channels": self.n_vital_channels,
            "vital_points": self.vital_points,
            "missing_rate": self.missing_rate,
            "any_as_or": self.any_as_or,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec keys: {sorted(unknown)}")
        kwargs = dict(doc)
        for key in ("task_names", "target_prevalence"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class GroundTruthLatents:
    """Latents aligned 1:1 with the generated records.

    ``shared_directions``/``specific_directions`` are the unit vectors whose
    dot products with the latents drive each task's label logit.
    """

    task_names: tuple[str, ...]
    z_shared: np.ndarray  # (n, s)
    z_specific: np.ndarray  # (K, n, t)
    intercepts: np.ndarray  # (K,), NaN where not calibrated
    shared_directions: np.ndarray  # (K, s)
    specific_directions: np.ndarray  # (K, t)


def synthetic_schema(spec: SyntheticSpec) -> FeatureSchema:
    cats = tuple((f"cat{i + 1}", 2 + i % 4) for i in range(spec.n_categorical))
    conts = tuple(f"num{i + 1}" for i in range(spec.n_continuous))
    texts = tuple(
        (f"note{i + 1}" if spec.n_text_fields > 1 else "note", spec.text_length)
        for i in range(spec.n_text_fields)
    )
    units = ("mmHg", "bpm", "pct", "C")
    vitals = tuple((f"vital{i + 1}", units[i % len(units)]) for i in range(spec.n_vital_channels))
    return FeatureSchema(
        categorical_features=cats,
        continuous_features=conts,
        text_fields=texts,
        vital_channels=vitals,
        task_names=spec.task_names,
    )


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _calibrate_intercept(
    scores: np.ndarray, uniforms: np.ndarray, target: float
) -> tuple[float, np.ndarray]:
    """Bisect the intercept so the realized Bernoulli draw hits the target
    prevalence within the tolerance. The draw uses fixed per-patient uniforms,
    which makes the empirical prevalence monotone in the intercept."""

    def draw(b: float) -> np.ndarray:
        probs = 1.0 / (1.0 + np.exp(-(scores + b)))
        return uniforms < probs

    lo, hi = -60.0, 60.0
    best_b, best_diff, best_labels = 0.0, np.inf, None
    for _ in range(_MAX_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        labels = draw(mid)
        diff = float(labels.mean()) - target
        if abs(diff) < best_diff:
            best_b, best_diff, best_labels = mid, abs(diff), labels
        if abs(diff) <= 0.5 / scores.size:
            break
        if diff < 0:
            lo = mid
        else:
            hi = mid
    if best_diff > _PREVALENCE_TOL:
        raise NumericError(
            f"prevalence calibration failed: best |empirical - target| = {best_diff:.4f} "
            f"exceeds {_PREVALENCE_TOL} (infeasible signal weights?)"
        )
    return best_b, best_labels


def _sample_rows(cum_probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Per-row categorical sampling: uniforms (n, L) against cum_probs (n, V)."""
    n, length = uniforms.shape
    n_vocab = cum_probs.shape[1]
    out = np.empty((n, length), dtype=np.int64)
    for j in range(length):
        idx = (uniforms[:, j][:, None] > cum_probs).sum(axis=1)
        out[:, j] = np.minimum(idx, n_vocab - 1)
    return out


def generate_synthetic(spec: SyntheticSpec) -> tuple[Cohort, GroundTruthLatents]:
    """Deterministically generate a cohort plus its ground-truth latents."""
    schema = synthetic_schema(spec)
    rng = np.random.default_rng(spec.seed)
    n, s, t, k_tasks = spec.n_patients, spec.shared_latent_dim, spec.specific_latent_dim, spec.num_tasks

    z_shared = rng.standard_normal((n, s))
    z_specific = rng.standard_normal((k_tasks, n, t))
    z_full = np.concatenate([z_shared] + [z_specific[k] for k in range(k_tasks)], axis=1)
    d_full = z_full.shape[1]

    # Continuous features: fixed random linear mixes plus noise.
    mix_cont = rng.standard_normal((d_full, spec.n_continuous)) / np.sqrt(d_full)
    x_cont = z_full @ mix_cont + spec.feature_noise_std * rng.standard_normal((n, spec.n_continuous))

    # Categorical features: quantile-bucketed mixes.
    cards = schema.cardinalities
    cat_ids = np.empty((n, spec.n_categorical), dtype=np.int64)
    for j, card in enumerate(cards):
        mix = _unit(rng, d_full)
        u = z_full @ mix + spec.feature_noise_std * rng.standard_normal(n)
        edges = np.quantile(u, np.arange(1, card) / card)
        cat_ids[:, j] = np.searchsorted(edges, u, side="right")

    # Text: latent-conditioned unigram distribution over the content vocab.
    n_content = spec.vocab_size - FIRST_CONTENT_TOKEN
    text_tokens = {}
    for name, length in schema.text_fields:
        w_text = rng.standard_normal((d_full, n_content)) / np.sqrt(d_full)
        logits = 2.0 * (z_full @ w_text)
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        cum = np.cumsum(probs, axis=1)
        draws = _sample_rows(cum, rng.random((n, length)))
        text_tokens[name] = draws + FIRST_CONTENT_TOKEN

    # Vitals: latent-shifted noisy sinusoids on a fixed time grid.
    times = np.arange(spec.vital_points) * _VITAL_STEP_MIN
    vital_values = {}
    for channel, _unit_name in schema.vital_channels:
        w_vital = _unit(rng, d_full)
        shift = _VITAL_SHIFT * (z_full @ w_vital)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=n)
        wave = _VITAL_AMPLITUDE * np.sin(
            2.0 * np.pi * times[None, :] / _VITAL_PERIOD_MIN + phase[:, None]
        )
        noise = _VITAL_NOISE * rng.standard_normal((n, spec.vital_points))
        vital_values[channel] = _VITAL_BASE + shift[:, None] + wave + noise

    # Labels: logistic in the latents, intercept calibrated per task.
    labels = np.empty((n, k_tasks), dtype=np.int64)
    intercepts = np.full(k_tasks, np.nan)
    shared_dirs = np.empty((k_tasks, s))
    specific_dirs = np.empty((k_tasks, t))
    for k in range(k_tasks):
        shared_dirs[k] = _unit(rng, s)
        specific_dirs[k] = _unit(rng, t)
        scores = spec.shared_signal_weight * (z_shared @ shared_dirs[k])
        scores = scores + spec.specific_signal_weight * (z_specific[k] @ specific_dirs[k])
        uniforms = rng.random(n)
        if spec.any_as_or and k == 0:
            continue  # derived below once the other tasks are drawn
        intercepts[k], drawn = _calibrate_intercept(scores, uniforms, spec.target_prevalence[k])
        labels[:, k] = drawn.astype(np.int64)
    if spec.any_as_or:
        if k_tasks < 2:
            raise ValueError("any_as_or requires at least two tasks")
        labels[:, 0] = labels[:, 1:].max(axis=1)

    # Optional missingness on raw continuous features.
    miss = (
        rng.random((n, spec.n_continuous)) < spec.missing_rate
        if spec.missing_rate > 0.0
        else np.zeros((n, spec.n_continuous), dtype=bool)
    )

    cont_names = schema.continuous_features
    cat_names = schema.categorical_names
    records = []
    for i in range(n):
        cont = {
            name: (0.0 if miss[i, j] else float(x_cont[i, j]))
            for j, name in enumerate(cont_names)
        }
        missing = frozenset(name for j, name in enumerate(cont_names) if miss[i, j])
        rec = PatientRecord(
            categorical_ids={name: int(cat_ids[i, j]) for j, name in enumerate(cat_names)},
            continuous_values=cont,
            continuous_missing=missing,
            text_tokens={
                name: tuple(int(v) for v in text_tokens[name][i]) for name, _ in schema.text_fields
            },
            vital_series={
                ch: tuple((float(tm), float(v)) for tm, v in zip(times, vital_values[ch][i]))
                for ch, _ in schema.vital_channels
            },
            labels={name: int(labels[i, k]) for k, name in enumerate(spec.task_names)},
        )
        records.append(rec)

    cohort = Cohort(schema=schema, records=tuple(records), provenance="synthetic")
    truth = GroundTruthLatents(
        task_names=spec.task_names,
        z_shared=z_shared,
        z_specific=z_specific,
        intercepts=intercepts,
        shared_directions=shared_dirs,
        specific_directions=specific_dirs,
    )
    return cohort, truth


def write_latents(truth: GroundTruthLatents, path: str | Path) -> None:
    """Line-delimited latents: a leading meta line with the calibrated
    intercepts, then one line per patient."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        meta = {
            "kind": "meta",
            "intercepts": {
                name: (None if np.isnan(b) else float(b))
                for name, b in zip(truth.task_names, truth.intercepts)
            },
        }
        fh.write(json.dumps(meta) + "\n")
        for i in range(truth.z_shared.shape[0]):
            row = {
                "kind": "patient",
                "z_shared": [float(v) for v in truth.z_shared[i]],
                "z_specific": {
                    name: [float(v) for v in truth.z_specific[k, i]]
                    for k, name in enumerate(truth.task_names)
                },
            }
            fh.write(json.dumps(row) + "\n")
