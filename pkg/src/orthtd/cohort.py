"""Multimodal patient data model: schema, records, cohort file IO and splits.

A cohort file is line-delimited JSON, one record per line, keyed by schema
names. Masked continuous values and missing task labels are written as null;
vital series are arrays of [time_minutes, value] pairs. The schema itself
lives in a separate JSON document (see ``load_schema``/``write_schema``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import CohortFormatError, SchemaError


@dataclass(frozen=True)
class FeatureSchema:
    """Inventory of the four feature groups plus the task list."""

    categorical_features: tuple[tuple[str, int], ...]
    continuous_features: tuple[str, ...]
    text_fields: tuple[tuple[str, int], ...]
    vital_channels: tuple[tuple[str, str], ...]
    task_names: tuple[str, ...]

    def __post_init__(self):
        names = list(self.categorical_names) + list(self.continuous_features)
        names += [n for n, _ in self.text_fields]
        names += [n for n, _ in self.vital_channels]
        names += list(self.task_names)
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"duplicate feature names across groups: {sorted(dupes)}")
        if len(self.task_names) < 1:
            raise SchemaError("schema needs at least one task")
        for name, card in self.categorical_features:
            if card < 2:
                raise SchemaError(f"categorical feature {name!r} has cardinality {card} < 2")
        for name, max_len in self.text_fields:
            if max_len < 1:
                raise SchemaError(f"text field {name!r} has max_token_length {max_len} < 1")

    @property
    def categorical_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.categorical_features)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.categorical_features)

    @property
    def num_tasks(self) -> int:
        return len(self.task_names)

    def to_dict(self) -> dict:
        return {
            "categorical_features": [list(p) for p in self.categorical_features],
            "continuous_features": list(self.continuous_features),
            "text_fields": [list(p) for p in self.text_fields],
            "vital_channels": [list(p) for p in self.vital_channels],
            "task_names": list(self.task_names),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        expected = {
            "categorical_features",
            "continuous_features",
            "text_fields",
            "vital_channels",
            "task_names",
        }
        unknown = set(doc) - expected
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        missing = expected - set(doc)
        if missing:
            raise SchemaError(f"schema document is missing keys: {sorted(missing)}")
        return cls(
            categorical_features=tuple((str(n), int(c)) for n, c in doc["categorical_features"]),
            continuous_features=tuple(str(n) for n in doc["continuous_features"]),
            text_fields=tuple((str(n), int(m)) for n, m in doc["text_fields"]),
            vital_channels=tuple((str(n), str(u)) for n, u in doc["vital_channels"]),
            task_names=tuple(str(n) for n in doc["task_names"]),
        )


@dataclass(frozen=True)
class PatientRecord:
    """One patient row. Masked continuous values are stored as 0.0 and listed
    in ``continuous_missing``; a task absent from ``labels`` has no label."""

    categorical_ids: dict[str, int]
    continuous_values: dict[str, float]
    continuous_missing: frozenset[str]
    text_tokens: dict[str, tuple[int, ...]]
    vital_series: dict[str, tuple[tuple[float, float], ...]]
    labels: dict[str, int]

    def label_present(self, task: str) -> bool:
        return task in self.labels


@dataclass(frozen=True)
class Cohort:
    schema: FeatureSchema
    records: tuple[PatientRecord, ...]
    provenance: str = "ingested"

    def __post_init__(self):
        if not self.records:
            raise CohortFormatError("cohort is empty")

    def __len__(self) -> int:
        return len(self.records)

    def labels_for(self, task: str) -> np.ndarray:
        """Labels for one task, -1 where missing."""
        if task not in self.schema.task_names:
            raise KeyError(f"unknown task {task!r}")
        return np.array([r.labels.get(task, -1) for r in self.records], dtype=np.int64)

    def prevalence(self, task: str) -> float:
        y = self.labels_for(task)
        present = y >= 0
        if not present.any():
            raise ValueError(f"task {task!r} has no labels")
        return float(y[present].mean())


def _validate_record(rec: dict, schema: FeatureSchema, line_no: int) -> PatientRecord:
    known = set(schema.categorical_names) | set(schema.continuous_features)
    known |= {n for n, _ in schema.text_fields} | {n for n, _ in schema.vital_channels}
    known |= set(schema.task_names)
    unknown = set(rec) - known
    if unknown:
        raise CohortFormatError(f"line {line_no}: unknown field name {sorted(unknown)[0]!r}")
    missing = known - set(rec)
    if missing:
        raise CohortFormatError(f"line {line_no}: record is missing field {sorted(missing)[0]!r}")

    cat: dict[str, int] = {}
    for name, card in schema.categorical_features:
        v = rec[name]
        if not isinstance(v, int) or isinstance(v, bool):
            raise CohortFormatError(f"line {line_no}: categorical {name!r} must be an integer")
        if not 0 <= v < card:
            raise CohortFormatError(
                f"line {line_no}: categorical {name!r} id {v} out of range [0, {card})"
            )
        cat[name] = v

    cont: dict[str, float] = {}
    cont_missing: set[str] = set()
    for name in schema.continuous_features:
        v = rec[name]
        if v is None:
            cont[name] = 0.0
            cont_missing.add(name)
        else:
            v = float(v)
            if not math.isfinite(v):
                raise CohortFormatError(f"line {line_no}: continuous {name!r} is not finite")
            cont[name] = v

    text: dict[str, tuple[int, ...]] = {}
    for name, _max_len in schema.text_fields:
        seq = rec[name]
        if not isinstance(seq, list) or any(not isinstance(t, int) or t < 0 for t in seq):
            raise CohortFormatError(
                f"line {line_no}: text field {name!r} must be a list of non-negative token ids"
            )
        text[name] = tuple(seq)

    vitals: dict[str, tuple[tuple[float, float], ...]] = {}
    for name, _unit in schema.vital_channels:
        series = rec[name]
        if not isinstance(series, list):
            raise CohortFormatError(f"line {line_no}: vital channel {name!r} must be a list")
        pts = []
        prev_t = -math.inf
        for p in series:
            if not isinstance(p, list) or len(p) != 2:
                raise CohortFormatError(
                    f"line {line_no}: vital channel {name!r} points must be [time, value] pairs"
                )
            t, v = float(p[0]), float(p[1])
            if t <= prev_t:
                raise CohortFormatError(
                    f"line {line_no}: vital channel {name!r} timestamps must strictly increase"
                )
            prev_t = t
            pts.append((t, v))
        vitals[name] = tuple(pts)

    labels: dict[str, int] = {}
    for name in schema.task_names:
        v = rec[name]
        if v is None:
            continue
        if v not in (0, 1) or isinstance(v, bool):
            raise CohortFormatError(f"line {line_no}: label {name!r} must be 0, 1 or null")
        labels[name] = int(v)

    return PatientRecord(
        categorical_ids=cat,
        continuous_values=cont,
        continuous_missing=frozenset(cont_missing),
        text_tokens=text,
        vital_series=vitals,
        labels=labels,
    )


def load_cohort(path: str | Path, schema: FeatureSchema) -> Cohort:
    """Read a line-delimited record file, validating every record against the
    schema. Records are kept in file order."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise CohortFormatError(f"line {line_no}: malformed record ({e.msg})") from e
            if not isinstance(doc, dict):
                raise CohortFormatError(f"line {line_no}: record must be a JSON object")
            records.append(_validate_record(doc, schema, line_no))
    if not records:
        raise CohortFormatError(f"{path}: file contains no records")
    return Cohort(schema=schema, records=tuple(records), provenance="ingested")


def _record_to_dict(rec: PatientRecord, schema: FeatureSchema) -> dict:
    doc: dict = {}
    for name in schema.categorical_names:
        doc[name] = rec.categorical_ids[name]
    for name in schema.continuous_features:
        doc[name] = None if name in rec.continuous_missing else rec.continuous_values[name]
    for name, _ in schema.text_fields:
        doc[name] = list(rec.text_tokens[name])
    for name, _ in schema.vital_channels:
        doc[name] = [[t, v] for t, v in rec.vital_series[name]]
    for name in schema.task_names:
        doc[name] = rec.labels.get(name)
    return doc


def write_cohort(cohort: Cohort, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in cohort.records:
            fh.write(json.dumps(_record_to_dict(rec, cohort.schema)) + "\n")


def load_schema(path: str | Path) -> FeatureSchema:
    with Path(path).open("r", encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def write_schema(schema: FeatureSchema, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


def stratified_split(
    cohort: Cohort,
    train_fraction: float = 0.7,
    stratify_task: Optional[str] = None,
    seed: int = 0,
) -> tuple[Cohort, Cohort]:
    """Split into disjoint train/test cohorts, stratifying on one task.

    Within each class of the stratification task the train side receives
    round(class_count * train_fraction) records, chosen by a seeded shuffle.
    Records keep their input order inside each split.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    task = stratify_task if stratify_task is not None else cohort.schema.task_names[0]
    y = cohort.labels_for(task)
    for cls in (0, 1):
        if not (y == cls).any():
            raise ValueError(f"stratify task {task!r} has an empty class {cls}")

    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    for cls in (0, 1, -1):  # -1 groups label-missing records
        idx = np.flatnonzero(y == cls)
        if idx.size == 0:
            continue
        n_train = int(round(idx.size * train_fraction))
        picked = rng.permutation(idx)[:n_train]
        train_idx.extend(picked.tolist())

    train_set = set(train_idx)
    train_records = tuple(r for i, r in enumerate(cohort.records) if i in train_set)
    test_records = tuple(r for i, r in enumerate(cohort.records) if i not in train_set)
    if not train_records or not test_records:
        raise ValueError("split produced an empty side; adjust train_fraction")
    prov = cohort.provenance
    return (
        Cohort(schema=cohort.schema, records=train_records, provenance=prov),
        Cohort(schema=cohort.schema, records=test_records, provenance=prov),
    )
