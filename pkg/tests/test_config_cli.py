import json

import numpy as np
import pytest

from quatcalderon.cli import build_parser, main
from quatcalderon.config import DEFAULTS, ConfigError, RunConfig
from quatcalderon.grid import load_field

SMALL = {"grid": {"n": 16}}


def _run(tmp_path, name, cfg, *args):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([args[0], "--config", str(path), "--out", str(out), *args[1:]]), out


def test_defaults_materialize():
    cfg = RunConfig.load()
    assert cfg.data == DEFAULTS
    assert cfg.grid.n == 32
    assert cfg.suites[0] == "algebra" and len(cfg.suites) == 7
    assert cfg.rule(16).R == 16.0


def test_schema_error_names_path():
    with pytest.raises(ConfigError) as exc:
        RunConfig.load(overrides={"grid": {"n": 15}})
    assert exc.value.path == "grid/n"
    with pytest.raises(ConfigError) as exc:
        RunConfig.load(overrides={"unknown": 1})
    assert exc.value.path == "<root>"


def test_phantom_override_replaces_bumps():
    cfg = RunConfig.load(overrides={"phantom": {"bumps": []}})
    assert cfg.phantom.bumps == ()


def test_phantom_command_writes_manifest(tmp_path):
    code, out = _run(tmp_path, "ph", SMALL, "phantom")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["grid"] == {"n": 16, "box": 1.5}
    assert man["config"]["solver"] == DEFAULTS["solver"]
    assert 0.6 < man["results"]["min_re_gamma"] < 0.8
    gamma, _ = load_field(out / "gamma.qf")
    assert np.isclose(np.min(gamma.sc.real), man["results"]["min_re_gamma"])


def test_empty_phantom_has_zero_potential(tmp_path):
    code, out = _run(tmp_path, "empty", {**SMALL, "phantom": {"bumps": []}}, "phantom")
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["results"]["q2_spectral_vs_analytic"] == 0


def test_invalid_config_exit_code(tmp_path):
    code, _ = _run(tmp_path, "bad", {"grid": {"nn": 3}}, "phantom")
    assert code == 2
    assert main(["phantom", "--config", str(tmp_path / "missing.json")]) == 2


def test_positivity_exit_code(tmp_path):
    cfg = {**SMALL, "phantom": {"bumps": [{"center": [0, 0, 0], "radius": 0.5, "amplitude": 1.2}]}}
    assert _run(tmp_path, "pos", cfg, "phantom")[0] == 3


def test_non_contractive_exit_code(tmp_path, capsys):
    cfg = {
        "grid": {"n": 16},
        "phantom": {"bumps": [{"center": [0, 0, 0], "radius": 0.8, "amplitude": -100}]},
        "forward": {"ks": [[0, 0, 1]]},
    }
    assert _run(tmp_path, "neg", cfg, "forward")[0] == 4
    assert "non-contractive at k" in capsys.readouterr().err


def test_forward_is_deterministic(tmp_path):
    cfg = {**SMALL, "forward": {"ks": [[0, 0, 16]], "xis": [[1, 0, 0], [0, 1, 1]]}}
    c1, o1 = _run(tmp_path, "f1", cfg, "forward")
    c2, o2 = _run(tmp_path, "f2", cfg, "forward", "--threads", "2")
    assert c1 == c2 == 0
    assert (o1 / "table.csv").read_bytes() == (o2 / "table.csv").read_bytes()
    res = json.loads((o1 / "manifest.json").read_text())["results"]
    assert res["rows"] == 2


def test_verify_pass_and_tampered_tolerance(tmp_path):
    assert _run(tmp_path, "v1", {}, "verify", "--suite", "algebra")[0] == 0
    code, out = _run(tmp_path, "v2", {"verify": {"tolerances": {"algebra.inverse": 0}}}, "verify", "--suite", "algebra")
    assert code == 1
    assert json.loads((out / "verify.json").read_text())["passed"] is False


def test_r_values_flag_parsing():
    args = build_parser().parse_args(["sweep", "--r-values", "8,16"])
    assert args.r_values == "8,16"
    from quatcalderon.cli import _overrides

    assert _overrides(args)["recon"]["r_values"] == [8.0, 16.0]
    with pytest.raises(ConfigError):
        _overrides(build_parser().parse_args(["sweep", "--r-values", "8,x"]))


def test_reconstruct_command(tmp_path):
    cfg = {"grid": {"n": 16}, "recon": {"R": 8, "n_radial": 1, "n_angular": 4, "xi_max": 4}}
    code, out = _run(tmp_path, "rec", cfg, "reconstruct")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["xi_origin"] == "skipped"
    assert (out / "qhat.csv").exists()
    assert load_field(out / "gamma_recovered.qf")[0].grid.n == 16
