"""Pytest file for the command line driver"""

import json
import os

import pytest

from scripts.main import CONFIG_PATH, EXIT_CONFIG, EXIT_OK, RunConfig, load_config, main
from tn.constants import OUTPUT_ROOT_ENV
from tn.exceptions import ConfigError


def test_default_config():
    """The shipped defaults describe an Ising plaquette run on the oracle"""
    config = load_config(CONFIG_PATH)
    assert (config.model, config.beta, config.backend) == ("ising", 0.3, "oracle")
    assert (config.lx, config.ly, config.geometry) == (4, 4, "plaquette")
    assert config.delta is None
    assert config.chi_scan == [] and config.embed == []
    assert config.trivial and not config.xlsx


def test_overrides_take_precedence():
    """Command-line values replace file values, None leaves them alone"""
    config = load_config(CONFIG_PATH, {"backend": "genfunc", "chi": 8, "beta": None})
    assert config.backend == "genfunc" and config.chi == 8
    assert config.beta == 0.3


@pytest.mark.parametrize("overrides", [
    {"basis": "su2-39", "geometry": "pair"},
    {"chi_scan": [8, 16]},
    {"delta": -1e-3},
    {"momentum": "pi/2,0"},
    {"embed": ["plaquette"]},
])
def test_invalid_settings(overrides):
    """Inconsistent settings are configuration errors"""
    with pytest.raises(ConfigError):
        load_config(CONFIG_PATH, overrides)


def test_malformed_config_file(tmp_path):
    """Unparseable values and missing files raise"""
    path = tmp_path / "bad.ini"
    path.write_text("[backend]\nlx = four\n", encoding="UTF-8")
    with pytest.raises(ConfigError):
        load_config(str(path))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"))


def test_output_root(monkeypatch, tmp_path):
    """Relative output directories are placed under the output root"""
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert RunConfig(output="run").directory == os.path.join(str(tmp_path), "run")
    assert RunConfig(output="/abs").directory == "/abs"


def test_configuration_exit_code(tmp_path):
    """A configuration error exits with 1"""
    assert main(["extract", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    assert main(["extract", "--chi-scan", "8", "--output", str(tmp_path)]) == EXIT_CONFIG


def test_extract_verify_export(tmp_path):
    """A site extraction on a 3×3 torus verifies and exports"""
    out = str(tmp_path / "run")
    common = ["--torus", "3x3", "--geometry", "site", "--output", out]
    assert main(["extract", *common]) == EXIT_OK
    solutions = os.path.join(out, "solutions.json")
    with open(solutions, encoding="UTF-8") as file:
        data = json.load(file)
    assert data["provenance"] == {"backend": "oracle", "torus": "3x3", "method": "rdm"}
    assert data["deflation"]["subspaces"] == {"trivial": 1}
    assert len(data["spectrum"]) == 4

    assert main(["verify", solutions, *common, "--checks", "variance"]) == EXIT_OK
    with open(os.path.join(out, "verify.json"), encoding="UTF-8") as file:
        assert json.load(file)["checks"]["variance"]["same_torus"]

    export = str(tmp_path / "plots")
    assert main(["spectrum-export", solutions, "--output", export, "--bins", "4"]) == EXIT_OK
    with open(os.path.join(export, "spectra.csv"), encoding="UTF-8") as file:
        assert file.readline().startswith("# ")
    with open(os.path.join(export, "spectra.json"), encoding="UTF-8") as file:
        assert len(json.load(file)["spectra"]) == 4
