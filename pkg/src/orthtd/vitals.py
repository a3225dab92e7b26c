"""Fold physiological time series into named continuous features.

Each channel yields summary statistics plus threshold-exposure features
(time-weighted mean excursion depth beyond a threshold and fraction of time
beyond it, both by trapezoidal weighting). The generated features are
appended to the schema's continuous feature list, so downstream encoders see
vitals as part of the tabular modality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort, FeatureSchema, PatientRecord

STATISTICS = ("mean", "min", "max", "std", "last")


@dataclass(frozen=True)
class Threshold:
    value: float
    direction: str  # "below" or "above"

    def __post_init__(self):
        if self.direction not in ("below", "above"):
            raise ValueError(f"threshold direction must be below/above, got {self.direction!r}")

    @property
    def tag(self) -> str:
        v = f"{self.value:g}".replace("-", "m").replace(".", "p")
        return f"{self.direction}{v}"


@dataclass(frozen=True)
class VitalFeatureSpec:
    """Per-channel statistic and threshold families.

    ``thresholds`` maps channel name -> tuple of Threshold. Channels without
    an entry get ``default_thresholds``.
    """

    statistics: tuple[str, ...] = STATISTICS
    thresholds: dict[str, tuple[Threshold, ...]] = field(default_factory=dict)
    default_thresholds: tuple[Threshold, ...] = (Threshold(65.0, "below"),)

    def __post_init__(self):
        bad = set(self.statistics) - set(STATISTICS)
        if bad:
            raise ValueError(f"unknown vital statistics: {sorted(bad)}")

    def thresholds_for(self, channel: str) -> tuple[Threshold, ...]:
        return self.thresholds.get(channel, self.default_thresholds)

    def feature_names(self, channel: str) -> list[str]:
        names = [f"{channel}_{s}" for s in self.statistics]
        for thr in self.thresholds_for(channel):
            names.append(f"{channel}_{thr.tag}_depth")
            names.append(f"{channel}_{thr.tag}_frac")
        return names

    def to_dict(self) -> dict:
        return {
            "statistics": list(self.statistics),
            "thresholds": {
                ch: [[t.value, t.direction] for t in ts] for ch, ts in self.thresholds.items()
            },
            "default_thresholds": [[t.value, t.direction] for t in self.default_thresholds],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "VitalFeatureSpec":
        return cls(
            statistics=tuple(doc.get("statistics", STATISTICS)),
            thresholds={
                ch: tuple(Threshold(float(v), str(d)) for v, d in ts)
                for ch, ts in doc.get("thresholds", {}).items()
            },
            default_thresholds=tuple(
                Threshold(float(v), str(d))
                for v, d in doc.get("default_thresholds", [[65.0, "below"]])
            ),
        )


def _excursion(values: np.ndarray, thr: Threshold) -> np.ndarray:
    if thr.direction == "below":
        return np.maximum(thr.value - values, 0.0)
    return np.maximum(values - thr.value, 0.0)


def extract_vital_features(
    series: tuple[tuple[float, float], ...], spec: VitalFeatureSpec, channel: str
) -> dict[str, float]:
    """Compute the named features for one channel's (time, value) series.

    Empty series yield all-zero features (the caller marks them missing).
    A single point has zero duration: exposure depth is the instantaneous
    excursion and the fraction is 0/1 depending on the point itself.
    """
    names = spec.feature_names(channel)
    if not series:
        return {n: 0.0 for n in names}

    times = np.array([t for t, _ in series], dtype=np.float64)
    values = np.array([v for _, v in series], dtype=np.float64)
    if times.size > 1 and not (np.diff(times) > 0).all():
        raise ValueError(f"vital channel {channel!r}: timestamps must strictly increase")

    out: dict[str, float] = {}
    stat_fns = {
        "mean": lambda v: float(v.mean()),
        "min": lambda v: float(v.min()),
        "max": lambda v: float(v.max()),
        "std": lambda v: float(v.std()),
        "last": lambda v: float(v[-1]),
    }
    for s in spec.statistics:
        out[f"{channel}_{s}"] = stat_fns[s](values)

    duration = float(times[-1] - times[0])
    for thr in spec.thresholds_for(channel):
        exc = _excursion(values, thr)
        beyond = (exc > 0.0).astype(np.float64)
        if duration > 0.0:
            depth = float(np.trapezoid(exc, times) / duration)
            frac = float(np.trapezoid(beyond, times) / duration)
        else:
            depth = float(exc[0])
            frac = float(beyond[0])
        out[f"{channel}_{thr.tag}_depth"] = depth
        out[f"{channel}_{thr.tag}_frac"] = frac
    return out


def augmented_continuous_names(schema: FeatureSchema, spec: VitalFeatureSpec) -> list[str]:
    names = list(schema.continuous_features)
    for channel, _unit in schema.vital_channels:
        names.extend(spec.feature_names(channel))
    return names


def augment_schema(schema: FeatureSchema, spec: VitalFeatureSpec) -> FeatureSchema:
    """Schema with vital features appended to the continuous group."""
    return FeatureSchema(
        categorical_features=schema.categorical_features,
        continuous_features=tuple(augmented_continuous_names(schema, spec)),
        text_fields=schema.text_fields,
        vital_channels=schema.vital_channels,
        task_names=schema.task_names,
    )


def augment_record(rec: PatientRecord, schema: FeatureSchema, spec: VitalFeatureSpec) -> PatientRecord:
    cont = dict(rec.continuous_values)
    missing = set(rec.continuous_missing)
    for channel, _unit in schema.vital_channels:
        feats = extract_vital_features(rec.vital_series[channel], spec, channel)
        cont.update(feats)
        if not rec.vital_series[channel]:
            missing.update(feats)
    return PatientRecord(
        categorical_ids=rec.categorical_ids,
        continuous_values=cont,
        continuous_missing=frozenset(missing),
        text_tokens=rec.text_tokens,
        vital_series=rec.vital_series,
        labels=rec.labels,
    )


def augment_cohort(cohort: Cohort, spec: VitalFeatureSpec) -> Cohort:
    """Cohort whose schema and records carry the extracted vital features.

    Values are finite for any non-empty series; an empty series produces
    zeros flagged through the standard continuous missing mask.
    """
    schema = augment_schema(cohort.schema, spec)
    records = tuple(augment_record(r, cohort.schema, spec) for r in cohort.records)
    return Cohort(schema=schema, records=records, provenance=cohort.provenance)
