from __future__ import annotations

import json

import numpy as np
import pytest

from reflected_ou import catalog
from reflected_ou.cli import main
from reflected_ou.config import load_config, parse_config
from reflected_ou.errors import ConfigError


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_minimal_config_fills_defaults():
    cfg = parse_config({"schema_version": 1, "seed": 5})
    assert cfg.build_model().dim == 1
    assert cfg.build_body().contains(np.zeros(1))


@pytest.mark.parametrize("data, where", [
    ({"schema_version": 1, "seed": 1, "bogus": 2}, "bogus"),
    ({"schema_version": 1, "seed": 1, "scheme": {"eps": [1e-2, 1e-1]}}, "scheme.eps"),
    ({"schema_version": 1, "seed": 1, "scheme": {"eps": [1e-1, 1e-1]}}, "scheme.eps"),
    ({"schema_version": 2, "seed": 1}, "schema_version"),
    ({"schema_version": 1}, "seed"),
    ({"schema_version": 1, "seed": -1}, "seed"),
    ({"schema_version": 1, "seed": 1, "model": {"alphas": [1.0], "preset": "constant"}}, "model"),
])
def test_invalid_configs_name_the_field(data, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(data)


def test_unknown_check_parameter_is_rejected(tmp_path):
    cfg = _write(tmp_path, {"schema_version": 1, "seed": 0,
                            "suite": [{"check": "ibp_nu", "params": {"nonsense": 1}}]})
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_seed_exits_with_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, {"schema_version": 1})
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err


def test_command_line_seed_overrides_config(tmp_path):
    cfg = load_config(_write(tmp_path, {"schema_version": 1, "seed": 3}), {"seed": 11})
    assert cfg.seed == 11


def test_empty_suite_writes_manifest(tmp_path):
    cfg = _write(tmp_path, {"schema_version": 1, "seed": 0})
    out = tmp_path / "run"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["checks"] == [] and man["seed"] == 0
    assert json.loads((out / "reports.json").read_text()) == []


def test_list_shows_anchors(capsys):
    assert main(["list", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    anchors = {r["anchor"] for r in data["checks"]}
    assert "Eq. 2.11" in anchors
    assert len(data["checks"]) == len(catalog.REGISTRY)
    assert anchors <= set(catalog.ANCHOR_LABELS)
    assert main(["list"]) == 0
    assert "Eq. 2.11" in capsys.readouterr().out


def test_check_seeds_differ_by_name_and_position():
    seeds = {catalog.check_seed(0, "ibp_nu", 0), catalog.check_seed(0, "ibp_nu", 1),
             catalog.check_seed(0, "log_sobolev", 0), catalog.check_seed(1, "ibp_nu", 0)}
    assert len(seeds) == 4


def test_every_registered_default_resolves():
    for entry in catalog.REGISTRY.values():
        catalog.resolve_params(entry, {})


def test_single_check_run_writes_artifacts(tmp_path):
    cfg = _write(tmp_path, {"schema_version": 1, "seed": 4, "suite": [
        {"check": "ibp_nu", "params": {"estimator": {"method": "quadrature"}}},
        {"check": "coarea", "params": {"model": {"preset": "constant", "dim": 2}, "method": "quadrature"}},
    ]})
    out = tmp_path / "run"
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "checks" / "00_ibp_nu.json").exists()
    records = json.loads((out / "reports.json").read_text())
    assert [r["check"] for r in records] == ["ibp_nu", "coarea"]
    assert all(r["passed"] for r in records)
    assert any(p.suffix == ".csv" for p in (out / "data").iterdir())


@pytest.mark.parametrize("command, section", [
    ("simulate", {"scheme": {"eps": [1e-1, 1e-2], "T": 0.1, "h": 1e-2, "paths": 4}}),
    ("resolvent", {"resolvent": {"grid_nodes": 256}}),
    ("surface", {"model": {"preset": "constant", "dim": 2}, "estimator": {"method": "quadrature"},
                 "surface": {"density": False, "r_max": 20.0}}),
    ("perturb", {"perturb": {"drift": {"kind": "constant", "vector": [0.3]}, "grid_nodes": 256}}),
])
def test_subcommands_run(tmp_path, command, section):
    cfg = _write(tmp_path, {"schema_version": 1, "seed": 2, **section})
    out = tmp_path / command
    assert main([command, "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "manifest.json").exists()


def test_subcritical_lambda_is_an_input_error(tmp_path):
    cfg = _write(tmp_path, {"schema_version": 1, "seed": 2,
                            "perturb": {"drift": {"kind": "constant", "vector": [1.0]}, "lam": 1.0,
                                        "grid_nodes": 256}})
    assert main(["perturb", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_failed_solver_gives_exit_three(tmp_path, capsys):
    # Four eps values spaced too closely on a coarse grid stop the increments from shrinking.
    cfg = _write(tmp_path, {"schema_version": 1, "seed": 2,
                            "scheme": {"eps": [1e-1, 9.9e-2, 9.8e-2, 1e-8]},
                            "resolvent": {"method": "neumann", "grid_nodes": 64}})
    code = main(["resolvent", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 3, capsys.readouterr().err
