import numpy as np
import pytest
import torch

from orthtd.cohort import Cohort, FeatureSchema, PatientRecord


@pytest.fixture
def tiny_schema():
    return FeatureSchema(
        categorical_features=(("color", 3), ("size", 2)),
        continuous_features=("age", "bmi"),
        text_fields=(("note", 6),),
        vital_channels=(("map", "mmHg"),),
        task_names=("outcome_a", "outcome_b"),
    )


def make_record(schema, color=0, size=0, age=50.0, bmi=22.0, tokens=(5, 7, 9),
                series=((0.0, 80.0), (5.0, 78.0)), labels=(0, 1), missing=()):
    label_map = {
        name: v for name, v in zip(schema.task_names, labels) if v is not None
    }
    return PatientRecord(
        categorical_ids={"color": color, "size": size},
        continuous_values={"age": 0.0 if "age" in missing else age,
                           "bmi": 0.0 if "bmi" in missing else bmi},
        continuous_missing=frozenset(missing),
        text_tokens={"note": tuple(tokens)},
        vital_series={"map": tuple(series)},
        labels=label_map,
    )


@pytest.fixture
def tiny_cohort(tiny_schema):
    rng = np.random.default_rng(0)
    records = []
    for i in range(16):
        records.append(
            make_record(
                tiny_schema,
                color=int(rng.integers(0, 3)),
                size=int(rng.integers(0, 2)),
                age=float(rng.normal(55, 10)),
                bmi=float(rng.normal(24, 3)),
                tokens=tuple(int(t) for t in rng.integers(2, 40, size=4)),
                labels=(int(rng.random() < 0.4), int(rng.random() < 0.3)),
            )
        )
    return Cohort(schema=tiny_schema, records=tuple(records), provenance="ingested")


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def float64_dtype():
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)
