import json

import numpy as np
import pytest

from orthtd.cohort import (
    Cohort,
    FeatureSchema,
    load_cohort,
    load_schema,
    stratified_split,
    write_cohort,
    write_schema,
)
from orthtd.errors import CohortFormatError, SchemaError

from conftest import make_record


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def valid_line(schema, **over):
    doc = {
        "color": 1,
        "size": 0,
        "age": 61.5,
        "bmi": 24.0,
        "note": [5, 7],
        "map": [[0.0, 82.0], [5.0, 79.5]],
        "outcome_a": 1,
        "outcome_b": 0,
    }
    doc.update(over)
    return json.dumps(doc)


def test_load_three_records(tmp_path, tiny_schema):
    path = tmp_path / "cohort.jsonl"
    write_lines(path, [valid_line(tiny_schema) for _ in range(3)])
    cohort = load_cohort(path, tiny_schema)
    assert len(cohort) == 3
    assert cohort.records[0].categorical_ids["color"] == 1
    assert cohort.records[0].labels == {"outcome_a": 1, "outcome_b": 0}


def test_categorical_at_cardinality_rejected(tmp_path, tiny_schema):
    path = tmp_path / "cohort.jsonl"
    write_lines(path, [valid_line(tiny_schema), valid_line(tiny_schema, color=3)])
    with pytest.raises(CohortFormatError) as err:
        load_cohort(path, tiny_schema)
    assert "line 2" in str(err.value)
    assert "color" in str(err.value)


def test_masked_continuous_stored_as_zero(tmp_path, tiny_schema):
    path = tmp_path / "cohort.jsonl"
    write_lines(path, [valid_line(tiny_schema, age=None)])
    cohort = load_cohort(path, tiny_schema)
    rec = cohort.records[0]
    assert rec.continuous_values["age"] == 0.0
    assert "age" in rec.continuous_missing
    assert "bmi" not in rec.continuous_missing


def test_malformed_line_reports_number(tmp_path, tiny_schema):
    path = tmp_path / "cohort.jsonl"
    write_lines(path, [valid_line(tiny_schema), "{not json"])
    with pytest.raises(CohortFormatError, match="line 2"):
        load_cohort(path, tiny_schema)


def test_unknown_field_rejected(tmp_path, tiny_schema):
    path = tmp_path / "cohort.jsonl"
    doc = json.loads(valid_line(tiny_schema))
    doc["mystery"] = 1
    write_lines(path, [json.dumps(doc)])
    with pytest.raises(CohortFormatError, match="mystery"):
        load_cohort(path, tiny_schema)


def test_missing_field_rejected(tmp_path, tiny_schema):
    doc = json.loads(valid_line(tiny_schema))
    del doc["bmi"]
    path = tmp_path / "cohort.jsonl"
    write_lines(path, [json.dumps(doc)])
    with pytest.raises(CohortFormatError, match="bmi"):
        load_cohort(path, tiny_schema)


def test_empty_file_rejected(tmp_path, tiny_schema):
    path = tmp_path / "cohort.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(CohortFormatError, match="no records"):
        load_cohort(path, tiny_schema)


def test_non_monotone_vitals_rejected(tmp_path, tiny_schema):
    path = tmp_path / "cohort.jsonl"
    write_lines(path, [valid_line(tiny_schema, map=[[5.0, 80.0], [5.0, 81.0]])])
    with pytest.raises(CohortFormatError, match="strictly increase"):
        load_cohort(path, tiny_schema)


def test_missing_label_is_null(tmp_path, tiny_schema):
    path = tmp_path / "cohort.jsonl"
    write_lines(path, [valid_line(tiny_schema, outcome_b=None)])
    cohort = load_cohort(path, tiny_schema)
    assert not cohort.records[0].label_present("outcome_b")
    assert cohort.records[0].label_present("outcome_a")


def test_roundtrip_identity(tmp_path, tiny_cohort):
    path = tmp_path / "cohort.jsonl"
    write_cohort(tiny_cohort, path)
    again = load_cohort(path, tiny_cohort.schema)
    assert again.records == tiny_cohort.records
    # rewriting yields byte-identical files
    path2 = tmp_path / "cohort2.jsonl"
    write_cohort(again, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_schema_roundtrip(tmp_path, tiny_schema):
    path = tmp_path / "schema.json"
    write_schema(tiny_schema, path)
    assert load_schema(path) == tiny_schema


def test_schema_invariants():
    with pytest.raises(SchemaError, match="duplicate"):
        FeatureSchema(
            categorical_features=(("x", 3),),
            continuous_features=("x",),
            text_fields=(),
            vital_channels=(),
            task_names=("t",),
        )
    with pytest.raises(SchemaError, match="cardinality"):
        FeatureSchema(
            categorical_features=(("x", 1),),
            continuous_features=(),
            text_fields=(),
            vital_channels=(),
            task_names=("t",),
        )
    with pytest.raises(SchemaError, match="task"):
        FeatureSchema(
            categorical_features=(("x", 2),),
            continuous_features=(),
            text_fields=(),
            vital_channels=(),
            task_names=(),
        )


def make_labelled_cohort(schema, n_pos, n_neg):
    records = []
    for i in range(n_pos + n_neg):
        records.append(make_record(schema, labels=(1 if i < n_pos else 0, 0)))
    return Cohort(schema=schema, records=tuple(records), provenance="ingested")


def test_split_stratification_counts(tiny_schema):
    cohort = make_labelled_cohort(tiny_schema, 10, 90)
    train, test = stratified_split(cohort, 0.7, "outcome_a", seed=3)
    train_y = train.labels_for("outcome_a")
    assert (train_y == 1).sum() == 7
    assert (train_y == 0).sum() == 63
    assert len(train) + len(test) == 100


def test_split_default_fraction_is_70_30(tiny_schema):
    import inspect

    sig = inspect.signature(stratified_split)
    assert sig.parameters["train_fraction"].default == 0.7


def test_split_deterministic(tiny_cohort):
    a = stratified_split(tiny_cohort, 0.5, "outcome_a", seed=11)
    b = stratified_split(tiny_cohort, 0.5, "outcome_a", seed=11)
    assert a[0].records == b[0].records
    assert a[1].records == b[1].records
    c = stratified_split(tiny_cohort, 0.5, "outcome_a", seed=12)
    assert c[0].records != a[0].records  # overwhelmingly likely for 16 records


def test_split_partition_multiset(tiny_cohort):
    train, test = stratified_split(tiny_cohort, 0.6, "outcome_a", seed=5)
    combined = sorted(
        [repr(r) for r in train.records + test.records]
    )
    assert combined == sorted(repr(r) for r in tiny_cohort.records)


def test_split_empty_class_rejected(tiny_schema):
    records = tuple(make_record(tiny_schema, labels=(1, 0)) for _ in range(10))
    cohort = Cohort(schema=tiny_schema, records=records, provenance="ingested")
    with pytest.raises(ValueError, match="empty class"):
        stratified_split(cohort, 0.7, "outcome_a", seed=0)


def test_split_fraction_bounds(tiny_cohort):
    with pytest.raises(ValueError):
        stratified_split(tiny_cohort, 1.0, "outcome_a", seed=0)
    with pytest.raises(ValueError):
        stratified_split(tiny_cohort, 0.0, "outcome_a", seed=0)


def test_empty_cohort_rejected(tiny_schema):
    with pytest.raises(CohortFormatError):
        Cohort(schema=tiny_schema, records=(), provenance="ingested")
