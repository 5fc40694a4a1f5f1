import numpy as np
import pytest

import proxidose as px
from proxidose.errors import ConfigError, DataError


def test_from_columns_and_roles():
    ds = px.Dataset.from_columns(
        [
            ("A_1", "a", [1.0, 2.0]),
            ("Y_1", "y", [3.0, 4.0]),
            ("X_1", "x", [5.0, 6.0]),
        ]
    )
    assert ds.n == 2
    assert ds.treatments == ("A_1",)
    assert ds.outcomes == ("Y_1",)
    assert ds.covariates == ("X_1",)
    assert np.array_equal(ds.column("Y_1"), [3.0, 4.0])


def test_rejects_non_finite_values():
    with pytest.raises(DataError):
        px.Dataset.from_columns([("A", "a", [1.0, np.nan])])
    with pytest.raises(DataError):
        px.Dataset.from_columns([("A", "a", [np.inf, 1.0])])


def test_rejects_ragged_and_bad_roles():
    with pytest.raises(DataError):
        px.Dataset.from_columns([("A", "a", [1.0]), ("Y", "y", [1.0, 2.0])])
    with pytest.raises(DataError):
        px.Dataset.from_columns([("A", "q", [1.0])])
    with pytest.raises(DataError):
        px.Dataset.from_columns([("A", "a", [1.0]), ("A", "y", [2.0])])


def test_values_are_immutable():
    ds = px.Dataset.from_columns([("A", "a", [1.0, 2.0])])
    with pytest.raises(ValueError):
        ds.values[0, 0] = 9.0


def test_csv_roundtrip_is_bit_exact(tmp_path, synthetic_spec):
    ds = px.sample(synthetic_spec, 64, 3)
    path = tmp_path / "data.csv"
    ds.to_csv(path)
    back = px.Dataset.from_csv(path)
    assert back.names == ds.names
    assert back.roles == ds.roles
    assert np.array_equal(back.values, ds.values)  # 17 digits round-trip doubles


def test_csv_header_carries_roles(tmp_path):
    ds = px.Dataset.from_columns([("dose", "a", [0.5]), ("resp", "y", [1.5])])
    path = tmp_path / "d.csv"
    ds.to_csv(path)
    assert path.read_text().splitlines()[0] == "dose:a,resp:y"


def test_csv_rejects_untagged_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("dose,resp:y\n0.5,1.5\n")
    with pytest.raises(ConfigError):
        px.Dataset.from_csv(path)


def test_missing_column_lookup():
    ds = px.Dataset.from_columns([("A", "a", [1.0])])
    with pytest.raises(ConfigError):
        ds.column("B")
