from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]

SMALL_CONFIG = """
trials = 3
snr_db = [20.0]

[experiment_a]
antennas = [2]

[[experiment_a.variants]]
method = "esprit"
cadzow_iters = 1
"""


def run_cli(args: list[str], env: dict[str, str] | None = None) -> subprocess.CompletedProcess[str]:
    return subprocess.run(
        [sys.executable, "-m", "scsfri.cli", *args],
        cwd=ROOT,
        env=env if env is not None else os.environ.copy(),
        capture_output=True,
        text=True,
        check=False,
    )


def test_wht_map_prints_paired_indices() -> None:
    result = run_cli(["wht-map", "2", "1"])
    assert result.returncode == 0, result.stderr

    payload = json.loads(result.stdout)
    assert payload["wht"] == [3, 4]
    assert payload["dft"] == [2, 4]
    assert payload["residual"] < 1e-10


def test_wht_map_rejects_invalid_orders() -> None:
    result = run_cli(["wht-map", "3", "3"])

    assert result.returncode == 2
    assert "ell" in result.stderr


def test_simulate_then_estimate(tmp_path) -> None:
    out = tmp_path / "run"
    simulate_result = run_cli(["simulate", "--snr", "40", "--seed", "4", "--out", str(out)])
    assert simulate_result.returncode == 0, simulate_result.stderr

    payload = json.loads(simulate_result.stdout)
    assert sorted(Path(p).name for p in payload["files"]) == ["channel.csv", "coefficients.csv", "samples.csv"]
    assert (out / "coefficients.csv").read_text(encoding="utf-8").startswith("# schema: scsfri/coefficients/v1")

    estimate_result = run_cli(["estimate", str(out / "coefficients.csv"), "--K", "4"])
    assert estimate_result.returncode == 0, estimate_result.stderr

    estimate = json.loads(estimate_result.stdout)
    assert len(estimate["toas"]) == 4
    assert all(0.0 <= t < 511 * 50e-9 / 8 for t in estimate["toas"])
    assert len(estimate["amplitudes"]) == 4 and len(estimate["amplitudes"][0]) == 5


def test_same_seed_writes_identical_files(tmp_path) -> None:
    first, second = tmp_path / "first", tmp_path / "second"

    for out in (first, second):
        result = run_cli(["simulate", "--seed", "11", "--out", str(out), "--format", "dat"])
        assert result.returncode == 0, result.stderr

    for name in ("channel.dat", "samples.dat", "coefficients.dat"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_crb_and_experiment_write_tables(tmp_path) -> None:
    config = tmp_path / "small.toml"
    config.write_text(SMALL_CONFIG, encoding="utf-8")

    crb_result = run_cli(["crb", "--config", str(config), "--out", str(tmp_path)])
    assert crb_result.returncode == 0, crb_result.stderr
    assert (tmp_path / "crb.csv").is_file()

    env = os.environ.copy()
    env["SCSFRI_THREADS"] = "2"
    experiment_result = run_cli(
        ["experiment", "a", "--config", str(config), "--trials", "2", "--out", str(tmp_path)], env
    )
    assert experiment_result.returncode == 0, experiment_result.stderr
    assert json.loads(experiment_result.stdout)["rows"] == 2

    lines = (tmp_path / "experiment_a.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# schema: scsfri/experiment_a/v1"
    assert lines[1].endswith(",seed,config_hash")
    assert len(lines) == 4


def test_output_directory_defaults_to_environment(tmp_path) -> None:
    env = os.environ.copy()
    env["SCSFRI_OUT_DIR"] = str(tmp_path / "env-out")

    result = run_cli(["crb"], env)

    assert result.returncode == 0, result.stderr
    assert (tmp_path / "env-out" / "crb.csv").is_file()


def test_config_and_input_errors_exit_with_code_2(tmp_path) -> None:
    bad = tmp_path / "bad.toml"
    bad.write_text("unknown = 1\n", encoding="utf-8")

    assert run_cli(["crb", "--config", str(bad), "--out", str(tmp_path)]).returncode == 2
    assert run_cli(["crb", "--seed", "-1", "--out", str(tmp_path)]).returncode == 2
    assert run_cli(["estimate", str(tmp_path / "missing.csv")]).returncode == 2
    assert run_cli(["experiment", "z"]).returncode == 2

    env = os.environ.copy()
    env["SCSFRI_THREADS"] = "0"
    result = run_cli(["wht-map", "2", "1"], env)
    assert result.returncode == 2
    assert "SCSFRI_THREADS" in result.stderr


def test_experiment_reruns_are_byte_identical(tmp_path) -> None:
    config = tmp_path / "small.toml"
    config.write_text(SMALL_CONFIG, encoding="utf-8")
    first, second = tmp_path / "first", tmp_path / "second"

    for out in (first, second):
        result = run_cli(["experiment", "a", "--config", str(config), "--seed", "5", "--out", str(out)])
        assert result.returncode == 0, result.stderr

    assert (first / "experiment_a.csv").read_bytes() == (second / "experiment_a.csv").read_bytes()
