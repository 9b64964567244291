"""
Basic tests for main entry point.
"""

import json
import tomllib
from pathlib import Path
from unittest.mock import Mock, patch

import pytest

import main as cli
from config import CZSettings, SimulationSettings, load_run_config
from main import build_parser, execute, main

DEVICE_TOML = Path(__file__).resolve().parent.parent / "device.toml"

SMALL_RUN = """
[device]
omega_max_ghz = [4.508, 4.701, 5.419]
alpha_mhz = [-290.0, -306.0, -124.0]
idle_ghz = [4.283, 4.679, 5.419]
g_1c_mhz = 100.0
g_2c_mhz = 100.0
g_12_mhz = 5.0

[run.chevron]
bias = { start = 0.0, stop = 0.2, num = 3 }
tau_ns = { start = 0.0, stop = 40.0, num = 5 }
resonance_ghz = 4.110

[run.zz]
coupler_ghz = { start = 5.0, stop = 5.4, num = 3 }
"""


def _small_config(tmp_path: Path, out: str, **kwargs):
    path = tmp_path / "device.toml"
    path.write_text(SMALL_RUN, encoding="utf-8")
    return load_run_config(
        path, SimulationSettings(), output_dir=tmp_path / out, **kwargs
    )


def test_parser_defaults() -> None:
    args = build_parser().parse_args(["zz"])

    assert args.config == Path("device.toml")
    assert args.shots == "exact"
    assert args.decoherence is False
    assert args.threads == 1


def test_parser_flags() -> None:
    args = build_parser().parse_args(
        ["--seed", "7", "--shots", "500", "--decoherence", "on", "rb"]
    )

    assert args.seed == 7
    assert args.shots == 500
    assert args.decoherence is True
    assert args.subcommand == "rb"


@pytest.mark.parametrize(
    "argv",
    [["--shots", "0", "rb"], ["--decoherence", "yes", "rb"], ["teleport"]],
)
def test_parser_rejects_bad_arguments(argv) -> None:
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(argv)

    assert info.value.code == 2


def test_main_missing_config_exits_2(tmp_path) -> None:
    """main() should exit with code 2 when the device file cannot be read."""
    with pytest.raises(SystemExit) as info:
        main(["--config", str(tmp_path / "absent.toml"), "zz"])

    assert info.value.code == 2


@patch("main.execute")
def test_main_passes_exit_code(mock_execute: Mock, tmp_path) -> None:
    """main() should exit with the status returned by execute()."""
    mock_execute.return_value = 0

    with pytest.raises(SystemExit) as info:
        main(["--config", str(DEVICE_TOML), "--out", str(tmp_path), "zz"])

    assert info.value.code == 0
    config, subcommand = mock_execute.call_args.args
    assert subcommand == "zz"
    assert config.output_dir == tmp_path


def test_rb_without_seed_is_config_error(tmp_path) -> None:
    config = load_run_config(DEVICE_TOML, SimulationSettings(), output_dir=tmp_path)

    assert execute(config, "rb") == 2
    assert not (tmp_path / "rb.csv").exists()


def test_zz_run_writes_artifacts(tmp_path) -> None:
    config = _small_config(tmp_path, "out")

    assert execute(config, "zz") == 0

    document = json.loads((tmp_path / "out" / "zz.json").read_text(encoding="utf-8"))
    assert document["kind"] == "zz"
    assert document["idle_ghz"][0] == pytest.approx(4.283)
    assert abs(document["zz_mhz"]) == pytest.approx(0.73, rel=0.4)
    lines = (tmp_path / "out" / "zz.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == f"# config_hash={document['config_hash']}"
    assert lines[1] == "coupler_ghz,zz_mhz"
    assert len(lines) == 5


def test_chevron_artifacts_are_reproducible(tmp_path) -> None:
    first = _small_config(tmp_path, "a", seed=3)
    second = _small_config(tmp_path, "b", seed=3)

    assert execute(first, "chevron") == 0
    assert execute(second, "chevron") == 0

    for name in ("chevron.csv", "chevron.json"):
        first_bytes = (tmp_path / "a" / name).read_bytes()
        assert first_bytes == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "chevron.csv").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 2 + 3 * 5


def test_runtime_failure_writes_diagnostics(tmp_path, monkeypatch) -> None:
    def failing(*args) -> None:
        raise RuntimeError("integration exploded")

    monkeypatch.setitem(cli.RUNNERS, "zz", failing)
    config = _small_config(tmp_path, "out")

    assert execute(config, "zz") == 1

    error = json.loads((tmp_path / "out" / "zz_error.json").read_text(encoding="utf-8"))
    assert error["error_type"] == "RuntimeError"
    assert error["message"] == "integration exploded"


@patch("main.logger")
def test_unwritable_diagnostics_are_logged(
    mock_logger: Mock, tmp_path, monkeypatch
) -> None:
    def failing(*args) -> None:
        raise RuntimeError("integration exploded")

    def read_only(*args, **kwargs):
        raise PermissionError("read-only file system")

    monkeypatch.setitem(cli.RUNNERS, "zz", failing)
    monkeypatch.setattr(cli, "write_json", read_only)
    config = _small_config(tmp_path, "out")

    assert execute(config, "zz") == 1

    mock_logger.warning.assert_called_once()
    extra = mock_logger.warning.call_args.kwargs["extra"]
    assert extra["main.application_error.error_type"] == "PermissionError"
    assert extra["main.application_error.message"] == "diagnostics not written"
    assert not (tmp_path / "out" / "zz_error.json").exists()


def test_project_version_matches_pyproject() -> None:
    with (DEVICE_TOML.parent / "pyproject.toml").open("rb") as handle:
        project = tomllib.load(handle)["project"]

    assert cli._project_version() == (project["name"], project["version"])


@patch("main.logger")
@patch("main.execute")
def test_main_logs_start_banner(
    mock_execute: Mock, mock_logger: Mock, tmp_path
) -> None:
    mock_execute.return_value = 0

    with pytest.raises(SystemExit):
        main(["--config", str(DEVICE_TOML), "--out", str(tmp_path), "zz"])

    extra = mock_logger.info.call_args_list[0].kwargs["extra"]
    assert extra["main.start.project"] == "tunable-coupler-cz-sim"


@patch("main.calibrate_conditional_phase")
def test_resolve_cz_keeps_explicit_amplitude(mock_calibrate: Mock, tmp_path) -> None:
    config = _small_config(tmp_path, "out")
    settings = CZSettings(v_b=0.18)

    assert cli._resolve_cz(config, settings, Mock()) is settings
    mock_calibrate.assert_not_called()


@patch("main.calibrate_conditional_phase")
def test_resolve_cz_calibrates_missing_amplitude(
    mock_calibrate: Mock, tmp_path
) -> None:
    mock_calibrate.return_value = 0.2
    config = _small_config(tmp_path, "out")

    resolved = cli._resolve_cz(config, CZSettings(), Mock())

    assert resolved.v_b == pytest.approx(0.2)
    _, schedule_for, grid = mock_calibrate.call_args.args
    assert schedule_for(0.2).total_duration == pytest.approx(30e-9)
    assert grid[-1] == pytest.approx(0.22)
