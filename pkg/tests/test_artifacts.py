"""
Tests for CSV/JSON artifacts and configuration hashing.
"""

import csv
import json
import math

import numpy as np
import pytest

from artifacts import (
    SCHEMA_VERSION,
    calibration_record,
    canonical_json,
    config_hash,
    map_rows,
    run_timestamp,
    write_csv,
    write_json,
)


def test_config_hash_ignores_key_order() -> None:
    first = config_hash({"a": 1, "b": [1.0, 2.0]})
    second = config_hash({"b": [1.0, 2.0], "a": 1})

    assert first == second
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_canonical_json_handles_numpy_and_non_finite() -> None:
    text = canonical_json(
        {
            "x": np.float64(0.5),
            "v": np.arange(2),
            "n": math.nan,
            "i": -math.inf,
            "z": 1j,
        }
    )

    assert json.loads(text) == {
        "i": "-inf",
        "n": None,
        "v": [0, 1],
        "x": 0.5,
        "z": {"im": 1.0, "re": 0.0},
    }


def test_write_csv_layout(tmp_path) -> None:
    path = write_csv(
        tmp_path / "sub" / "table.csv",
        ["m", "mean"],
        [(1, 0.1), (np.int64(5), np.float64(1 / 3))],
        "abc",
    )

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# config_hash=abc"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["m", "mean"]
    assert rows[2] == ["5", repr(1 / 3)]


def test_write_csv_rejects_ragged_rows(tmp_path) -> None:
    with pytest.raises(ValueError, match="row 0"):
        write_csv(tmp_path / "t.csv", ["a", "b"], [(1,)], "abc")


def test_write_json_document(tmp_path) -> None:
    path = write_json(tmp_path / "s.json", "zz", {"zz_mhz": np.float64(0.7)}, "abc")
    document = json.loads(path.read_text(encoding="utf-8"))

    assert document["schema_version"] == SCHEMA_VERSION
    assert document["kind"] == "zz"
    assert document["config_hash"] == "abc"
    assert document["zz_mhz"] == pytest.approx(0.7)


def test_identical_inputs_give_identical_files(tmp_path) -> None:
    payload = {"values": [0.1, 0.2], "label": "run"}
    first = write_json(tmp_path / "a.json", "k", payload, config_hash(payload))
    second = write_json(tmp_path / "b.json", "k", payload, config_hash(payload))

    assert first.read_bytes() == second.read_bytes()


def test_map_rows_varies_x_fastest() -> None:
    values = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    rows = map_rows([0.1, 0.2, 0.3], [10.0, 20.0], values)

    assert rows[:4] == [
        (0.1, 10.0, 1.0),
        (0.2, 10.0, 2.0),
        (0.3, 10.0, 3.0),
        (0.1, 20.0, 4.0),
    ]


def test_run_timestamp_honours_source_date_epoch(monkeypatch) -> None:
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")

    assert run_timestamp() == "1970-01-01T00:00:00Z"


def test_calibration_record(monkeypatch) -> None:
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "86400")
    record = calibration_record(
        "adiabatic",
        {"v_b": 0.19, "duration": 3e-8},
        [([0.19, 30.0], 0.01), ([0.195, 30.0], 0.008)],
        {"fidelity": 0.992},
    )

    assert record["gate"] == "adiabatic"
    assert record["objective_trace"][1] == {"point": [0.195, 30.0], "value": 0.008}
    assert record["timestamp"] == "1970-01-02T00:00:00Z"
