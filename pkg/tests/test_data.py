import io

import numpy as np
import pytest

from lagmm import (
    CsvSchema,
    DuplicateObservation,
    EmptyInput,
    InvalidDataset,
    LongitudinalDataset,
    MissingCell,
    NonNumeric,
    OutcomeKind,
    emit_csv,
    load_csv,
)
from lagmm.data import validate
from lagmm.simulate import Setting1Params, gen_setting1

MINIMAL = "id,time,y,x\n1,1,0.5,1.0\n1,2,1.5,2.0\n2,1,-0.5,0.0\n2,2,0.0,1.0\n"


def test_load_minimal_panel():
    ds = load_csv(MINIMAL)
    assert ds.n_subjects == 2
    assert ds.n_times == 2
    assert ds.covariate_names == ("x",)
    assert ds.outcomes[0, 1] == 1.5
    assert ds.covariate("x")[1, 0] == 0.0


def test_load_accepts_bytes_and_streams():
    ds_bytes = load_csv(MINIMAL.encode("utf-8"))
    ds_stream = load_csv(io.StringIO(MINIMAL))
    assert ds_bytes.equals(ds_stream)


def test_missing_cell_is_an_error():
    text = "id,time,y,x\n1,1,0.5,1.0\n1,2,1.5,2.0\n2,1,-0.5,0.0\n"
    with pytest.raises(MissingCell, match="'2'.*'2'"):
        load_csv(text)


def test_non_numeric_value_names_the_row():
    text = "id,time,y,x\n1,1,abc,1.0\n1,2,1.5,2.0\n"
    with pytest.raises(NonNumeric, match="row 2"):
        load_csv(text)


def test_nan_and_inf_rejected():
    text = "id,time,y,x\n1,1,nan,1.0\n1,2,1.5,2.0\n"
    with pytest.raises(NonNumeric):
        load_csv(text)


def test_duplicate_observation():
    text = "id,time,y,x\n1,1,0.5,1.0\n1,1,0.7,1.0\n1,2,1.5,2.0\n"
    with pytest.raises(DuplicateObservation, match="row 3"):
        load_csv(text)


def test_empty_inputs():
    with pytest.raises(EmptyInput):
        load_csv("id,time,y,x\n")
    with pytest.raises(EmptyInput):
        load_csv("")


def test_missing_required_column():
    with pytest.raises(InvalidDataset, match="'y'"):
        load_csv("id,time,outcome\n1,1,2.0\n")


def test_single_occasion_rejected():
    text = "id,time,y,x\n1,1,0.5,1.0\n2,1,0.7,1.0\n"
    with pytest.raises(InvalidDataset, match="T >= 2"):
        load_csv(text)


def test_row_order_never_matters():
    shuffled = "id,time,y,x\n2,2,0.0,1.0\n1,2,1.5,2.0\n2,1,-0.5,0.0\n1,1,0.5,1.0\n"
    assert load_csv(MINIMAL).equals(load_csv(shuffled))


def test_numeric_aware_subject_and_time_ordering():
    text = "id,time,y\n10,2,3.0\n10,1,2.0\n2,1,0.0\n2,2,1.0\n"
    ds = load_csv(text, CsvSchema(covariates=()))
    assert ds.subject_ids == ("2", "10")
    assert ds.outcomes[0, 0] == 0.0 and ds.outcomes[1, 1] == 3.0


def test_arbitrary_time_labels_map_to_ranks():
    text = "id,time,y,x\n1,w2,1.5,2.0\n1,w1,0.5,1.0\n2,w1,-0.5,0.0\n2,w2,0.0,1.0\n"
    assert load_csv(text).equals(load_csv(MINIMAL))


def test_mismatched_time_labels_are_missing_cells():
    text = "id,time,y,x\n1,w1,0.5,1.0\n1,w2,1.5,2.0\n2,w1,-0.5,0.0\n2,w3,0.0,1.0\n"
    with pytest.raises(MissingCell):
        load_csv(text)


def test_round_trip_is_identity():
    ds = gen_setting1(Setting1Params(n=7, n_times=4, seed=321))
    again = load_csv(emit_csv(ds))
    assert again.equals(ds)


def test_round_trip_preserves_awkward_floats():
    y = np.array([[0.1, 1.0 / 3.0], [-1e-17, 2.0**52 + 0.5]])
    x = np.array([[[5e-324, 1.2345678901234567], [0.0, -0.0]]])
    ds = LongitudinalDataset(y, x, ("x",))
    again = load_csv(emit_csv(ds))
    assert again.equals(ds)


def test_custom_schema_round_trip():
    schema = CsvSchema(subject="pid", time="wave", outcome="score", covariates=("bmi",))
    ds = load_csv("pid,wave,score,bmi\n1,1,0.5,20.0\n1,2,1.5,21.0\n", schema)
    assert ds.covariate_names == ("bmi",)
    assert load_csv(emit_csv(ds, schema), schema).equals(ds)


def test_validate_clean_panel():
    ds = load_csv(MINIMAL)
    assert validate(ds, OutcomeKind.CONTINUOUS) == []


def test_validate_binary_violation():
    ds = LongitudinalDataset(np.array([[0.0, 2.0]]), np.zeros((0, 1, 2)), ())
    violations = validate(ds, OutcomeKind.BINARY)
    assert any("non-binary" in v for v in violations)
    assert validate(ds, OutcomeKind.CONTINUOUS) == []


def test_validate_single_occasion():
    ds = LongitudinalDataset(np.array([[1.0], [2.0]]), np.zeros((0, 2, 1)), ())
    violations = validate(ds, OutcomeKind.CONTINUOUS)
    assert any("T must be >= 2" in v for v in violations)


def test_validate_reports_every_violation():
    ds = LongitudinalDataset(np.array([[np.nan], [2.0]]), np.zeros((0, 2, 1)), ())
    violations = validate(ds, OutcomeKind.BINARY)
    assert len(violations) >= 2


def test_dataset_shape_checks():
    with pytest.raises(InvalidDataset):
        LongitudinalDataset(np.zeros((2, 3)), np.zeros((1, 2, 4)), ("x",))
    with pytest.raises(InvalidDataset):
        LongitudinalDataset(np.zeros((2, 3)), np.zeros((2, 2, 3)), ("x",))
    with pytest.raises(KeyError):
        LongitudinalDataset(np.zeros((2, 3)), np.zeros((1, 2, 3)), ("x",)).covariate("z")
