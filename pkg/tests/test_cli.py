import json
import os
import shutil
import tempfile

import pandas as pd
import pytest

from quartic_beam_lab import cli
from quartic_beam_lab.cli import *
from quartic_beam_lab.config import RunConfig, load_config
from quartic_beam_lab.errors import SpectralSingularityError
from quartic_beam_lab.potential import Potential
from quartic_beam_lab.settings import Settings


@pytest.fixture
def temp_dir():
    temp_dir = tempfile.mkdtemp()
    print(f"Created temp directory: {temp_dir}")
    yield temp_dir
    # Clean up the temp directory
    print(f"Cleaning up temp directory: {temp_dir}")
    shutil.rmtree(temp_dir)


def write_config(temp_dir, data):
    path = os.path.join(temp_dir, "run.json")
    with open(path, 'w') as f:
        json.dump(data, f)
    return path


def small_run(temp_dir, **sections):
    data = {
        "schema": 1,
        "grid": {"radius": 4.0, "order": 6},
        "propagator": {"cloud_size": 5, "t_min": 10.0, "t_max": 100.0, "t_points": 6},
        "output": {"dir": temp_dir},
    }
    data.update(sections)
    return write_config(temp_dir, data)


def test_defaults():
    config = load_config()
    assert config.schema_version == 1
    assert config.grid.radius == 8.0
    assert config.propagator.budget.n_cap == 4096


def test_overrides(temp_dir):
    path = small_run(temp_dir)
    config = load_config(path, coupling=2.5, mode="sine_over_sqrt", order=None)
    assert config.potential.coupling == 2.5
    assert config.propagator.mode.value == "sine_over_sqrt"
    assert config.grid.order == 6
    with pytest.raises(KeyError):
        load_config(path, depth=3.0)


def test_config_rejects_unknown_section(temp_dir):
    path = write_config(temp_dir, {"schema": 1, "engine": {}})
    with pytest.raises(ValueError):
        load_config(path)


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("QBL_THREADS", "0")
    monkeypatch.setenv("QBL_LOG_LEVEL", "DEBUG")
    settings = Settings()
    assert settings.threads == 1
    assert settings.log_level == "DEBUG"


def test_invalid_config_exits_2(temp_dir):
    path = write_config(temp_dir, {"schema": 1, "grid": {"radius": -1.0}})
    assert run(['classify', '--config', path]) == EXIT_INVALID


def test_missing_config_exits_2(temp_dir):
    assert run(['classify', '--config', os.path.join(temp_dir, "missing.json")]) == EXIT_INVALID


def test_invalid_override_exits_2(temp_dir):
    path = small_run(temp_dir)
    assert run(['classify', '--config', path, '--t-min', '500']) == EXIT_INVALID


def test_classify_writes_report(temp_dir):
    path = small_run(temp_dir)
    assert run(['classify', '--config', path]) == EXIT_OK
    with open(os.path.join(temp_dir, "classify.json")) as f:
        report = json.load(f)
    assert report['classification'] == "Regular"
    assert 'ladder' not in report


def test_propagate_free_writes_samples(temp_dir):
    path = small_run(temp_dir)
    assert run(['propagate', '--config', path, '--free']) == EXIT_OK
    samples = pd.read_csv(os.path.join(temp_dir, "propagate.csv"))
    assert len(samples) == 5 * 6
    assert list(samples.columns)[:3] == ['t', 'x1', 'x2']
    curve = pd.read_csv(os.path.join(temp_dir, "propagate-curve.csv"))
    assert list(curve.columns) == ['t', 'sup_abs', 'n_warn']
    with open(os.path.join(temp_dir, "propagate.json")) as f:
        assert json.load(f)['fit']['slope'] == pytest.approx(-1.5, abs=0.05)


def test_json_only_output(temp_dir):
    path = small_run(temp_dir, output={"dir": temp_dir, "formats": ["json"]})
    assert run(['propagate', '--config', path, '--free']) == EXIT_OK
    assert os.path.exists(os.path.join(temp_dir, "propagate.json"))
    assert not os.path.exists(os.path.join(temp_dir, "propagate.csv"))


def test_born_check(temp_dir):
    path = small_run(temp_dir)
    assert run(['born-check', '--config', path]) == EXIT_OK
    with open(os.path.join(temp_dir, "born-check.json")) as f:
        report = json.load(f)
    assert report['max_residual'] < 1e-10 * max(report['max_kernel'], 1.0)


def test_singularity_exits_3(temp_dir, monkeypatch, capsys):
    def singular(*args, **kwargs):
        raise SpectralSingularityError(0.125)

    monkeypatch.setattr(cli, "assemble_spectral", singular)
    path = small_run(temp_dir)
    assert run(['classify', '--config', path]) == EXIT_SINGULAR
    assert "lambda=0.125" in capsys.readouterr().out


def test_unexpected_failure_exits_1(temp_dir, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "assemble_spectral", broken)
    path = small_run(temp_dir)
    assert run(['classify', '--config', path]) == EXIT_UNEXPECTED


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        parse_arguments(['diagonalize'])


def test_run_config_round_trip():
    config = RunConfig.model_validate({"schema": 1, "potential": {"family": "CompactBump", "depth": -2.0}})
    again = RunConfig.model_validate(config.model_dump(by_alias=True))
    assert again == config


def test_vanishing_potential_exits_2(temp_dir, capsys):
    path = small_run(temp_dir, potential={"amplitude": 0.0})
    assert run(['classify', '--config', path]) == EXIT_INVALID
    assert "vanishes on the grid" in capsys.readouterr().err


def test_free_check_defaults(temp_dir):
    assert run(['free-check', '--out', temp_dir]) == EXIT_OK
    with open(os.path.join(temp_dir, "free-check.json")) as f:
        report = json.load(f)
    assert report['halfwave_max_relative_error'] < 1e-3


def test_scan_coupling_csv_header(temp_dir):
    path = small_run(temp_dir, scan={"c_min": 0.5, "c_max": 40.0, "steps": 8})
    assert run(['scan-coupling', '--config', path]) == EXIT_OK
    with open(os.path.join(temp_dir, "scan-coupling.csv")) as f:
        assert f.readline().strip() == "c,sigma_min,sigma_max"


def test_identical_configs_write_identical_csv(temp_dir):
    path = small_run(temp_dir, scan={"c_min": 0.5, "c_max": 40.0, "steps": 8})
    outputs = []
    for name in ("first", "second"):
        out = os.path.join(temp_dir, name)
        assert run(['scan-coupling', '--config', path, '--out', out]) == EXIT_OK
        with open(os.path.join(out, "scan-coupling.csv"), 'rb') as f:
            outputs.append(f.read())
    assert outputs[0] == outputs[1]


def test_decay_report_defaults_to_weak_well(temp_dir):
    config = load_config(small_run(temp_dir), DEFAULT_POTENTIALS['decay-report'])
    assert config.potential.amplitude == -0.01
    assert load_config(small_run(temp_dir)).potential == Potential()
    explicit = small_run(temp_dir, potential={"depth": -2.0})
    assert load_config(explicit, DEFAULT_POTENTIALS['decay-report']).potential.amplitude == -2.0
