from __future__ import annotations

import numpy as np
import pytest

from scsfri.errors import InputError
from scsfri.results import ResultTable, coefficient_table, read_coefficients, render_table, write_table


def _table() -> ResultTable:
    table = ResultTable(name="demo", columns=("P", "snr_db", "rmse"))
    table.add(4, 20.0, 0.1)
    table.add(8, 25.5, float("nan"))
    return table


def test_csv_has_schema_header_and_provenance_columns() -> None:
    text = render_table(_table(), "csv", seed=3, config_hash="abc")

    lines = text.splitlines()
    assert lines[0] == "# schema: scsfri/demo/v1"
    assert lines[1] == "P,snr_db,rmse,seed,config_hash"
    assert lines[2] == "4,20.0,0.1,3,abc"
    assert lines[3] == "8,25.5,nan,3,abc"


def test_dat_format_comments_the_header() -> None:
    text = render_table(_table(), "dat", seed=0, config_hash="h")

    lines = text.splitlines()
    assert lines[0].startswith("# schema:")
    assert lines[1] == "# P snr_db rmse seed config_hash"
    assert lines[2] == "4 20.0 0.1 0 h"


def test_rows_must_match_columns() -> None:
    with pytest.raises(InputError):
        _table().add(1, 2.0)
    with pytest.raises(InputError):
        render_table(_table(), "json", seed=0, config_hash="h")  # type: ignore[arg-type]


def test_written_coefficients_read_back(tmp_path) -> None:
    grid = np.arange(-2, 3) - 0.5
    coeffs = np.array([[1 + 2j, -0.5j], [0.1, 3.0], [2j, 1 - 1j], [0.0, 0.25], [1e-17, -7.0]])

    path = write_table(coefficient_table(coeffs, grid), tmp_path / "out", seed=0, config_hash="h")

    assert path.name == "coefficients.csv"
    read_grid, read_coeffs = read_coefficients(path)
    np.testing.assert_array_equal(read_grid, grid)
    np.testing.assert_array_equal(read_coeffs, coeffs)


def test_read_coefficients_reports_malformed_files(tmp_path) -> None:
    missing_entry = tmp_path / "missing.csv"
    missing_entry.write_text("m,antenna,re,im\n0,0,1,0\n0,1,1,0\n1,0,1,0\n", encoding="utf-8")
    bad_value = tmp_path / "bad.csv"
    bad_value.write_text("m,antenna,re,im\n0,0,x,0\n", encoding="utf-8")
    empty = tmp_path / "empty.csv"
    empty.write_text("# schema: scsfri/coefficients/v1\nm,antenna,re,im\n", encoding="utf-8")

    for path in (missing_entry, bad_value, empty, tmp_path / "absent.csv"):
        with pytest.raises(InputError):
            read_coefficients(path)
