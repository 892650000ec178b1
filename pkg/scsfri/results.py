"""Result tables written as versioned CSV or gnuplot-style ``.dat`` files."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt

from scsfri.errors import InputError
from scsfri.numerics import ComplexMatrix

logger = logging.getLogger(__name__)

OutputFormat = Literal["csv", "dat"]
SCHEMA_VERSION = "v1"
Cell = int | float | str


@dataclass
class ResultTable:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple[Cell, ...]] = field(default_factory=list)

    def add(self, *values: Cell) -> None:
        if len(values) != len(self.columns):
            raise InputError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(values)

    def column(self, name: str) -> list[Cell]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]


def format_cell(value: Cell) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_table(table: ResultTable, fmt: OutputFormat = "csv", *, seed: int, config_hash: str) -> str:
    header = [*table.columns, "seed", "config_hash"]
    rows = [[format_cell(v) for v in row] + [str(seed), config_hash] for row in table.rows]
    schema = f"# schema: scsfri/{table.name}/{SCHEMA_VERSION}\n"

    if fmt == "dat":
        lines = [schema, "# " + " ".join(header) + "\n"]
        lines.extend(" ".join(row) + "\n" for row in rows)
        return "".join(lines)
    if fmt != "csv":
        raise InputError(f"unknown output format {fmt!r}")

    buffer = io.StringIO()
    buffer.write(schema)
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_table(
    table: ResultTable,
    out_dir: str | Path,
    fmt: OutputFormat = "csv",
    *,
    seed: int,
    config_hash: str,
) -> Path:
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{table.name}.{fmt}"
    path.write_text(render_table(table, fmt, seed=seed, config_hash=config_hash), encoding="utf-8")
    logger.info("wrote %d rows to %s", len(table.rows), path)
    return path


def coefficient_table(coeffs: ComplexMatrix, grid: npt.ArrayLike, name: str = "coefficients") -> ResultTable:
    table = ResultTable(name=name, columns=("m", "antenna", "re", "im"))
    positions = np.asarray(grid, dtype=np.float64)
    for i, m in enumerate(positions):
        for p in range(coeffs.shape[1]):
            table.add(float(m), p, float(coeffs[i, p].real), float(coeffs[i, p].imag))
    return table


def read_coefficients(path: str | Path) -> tuple[npt.NDArray[np.float64], ComplexMatrix]:
    """Grid and Q×P coefficients from a ``m, antenna, re, im`` CSV."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read coefficients {path}: {exc}") from exc

    lines = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    entries: dict[tuple[float, int], complex] = {}
    try:
        for record in csv.DictReader(lines):
            key = (float(record["m"]), int(record["antenna"]))
            entries[key] = complex(float(record["re"]), float(record["im"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed coefficients file {path}: {exc}") from exc

    if not entries:
        raise InputError(f"no coefficients in {path}")
    grid = np.array(sorted({m for m, _ in entries}))
    antennas = sorted({p for _, p in entries})
    if antennas != list(range(len(antennas))):
        raise InputError("antenna indices must be 0..P-1")
    try:
        coeffs = np.array([[entries[(m, p)] for p in antennas] for m in grid], dtype=np.complex128)
    except KeyError as exc:
        raise InputError(f"missing coefficient for (m, antenna) = {exc.args[0]}") from exc
    return grid, coeffs
