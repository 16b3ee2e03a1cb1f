from pathlib import Path

import numpy as np
import pytest

from multipop.cli import EXIT_ERROR, EXIT_FAILED, EXIT_OK, main
from multipop.config import ConfigError, load_config
from multipop.experiments import (
    ReductionError,
    cmd_converge,
    rates_only_control,
    rates_only_model,
    run_command,
)
from multipop.config import init_from_config, model_from_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small(name, **over):
    base = {"sim.T": "0.2", "sim.record_every": "5", "pde.T": "0.2"}
    base.update({k: str(v) for k, v in over.items()})
    return load_config(CONFIGS / name).with_overrides(**base)


def write_cfg(tmp_path, cfg, name="run.cfg"):
    from multipop.config import dump_config

    p = tmp_path / name
    p.write_text(dump_config(cfg))
    return p


def test_simulate_outputs_and_manifest(tmp_path):
    cfg = small("b1.cfg", **{"sim.N": 32})
    res = run_command("simulate", cfg, tmp_path / "out")
    assert res.ok
    out = tmp_path / "out"
    for f in ("report.csv", "report.svg", "manifest.txt"):
        assert (out / f).exists()
    man = (out / "manifest.txt").read_text()
    assert f"config_sha256 = {cfg.hash()}" in man
    for key in ("M", "L_R", "delta"):
        assert f"\n{key} = " in man


def test_same_seed_same_bytes(tmp_path):
    cfg = small("b1.cfg", **{"sim.N": 32})
    run_command("simulate", cfg, tmp_path / "a", seed=4)
    run_command("simulate", cfg, tmp_path / "b", seed=4)
    run_command("simulate", cfg, tmp_path / "c", seed=5)
    a, b, c = ((tmp_path / d / "report.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_converge_two_seeds_differ():
    cfg = small("b1_converge.cfg", **{"experiment.N": "32, 64", "experiment.seeds": "0, 1",
                                      "experiment.reference_N": 256})
    res = cmd_converge(cfg)
    per_seed = [r for r in res.rows if r[1] != "mean"]
    e32 = [r[2] for r in per_seed if r[0] == 32]
    assert len(e32) == 2 and all(e > 0 for e in e32) and e32[0] != e32[1]
    assert np.isfinite(res.summary["slope"])


def test_converge_rejects_unsorted_N():
    with pytest.raises(ConfigError, match="increasing"):
        cmd_converge(small("b1_converge.cfg", **{"experiment.N": "64, 32"}))


def test_frozen_converge_error_is_initial_sampling_error():
    cfg = small("frozen_converge.cfg", **{"experiment.N": "32", "experiment.seeds": "0",
                                          "experiment.reference_N": 256})
    res = cmd_converge(cfg)
    assert [r for r in res.rows if r[1] != "mean"][0][3] == 0.0


def test_consistency_rejects_label_weighted():
    with pytest.raises(ReductionError, match="closed system"):
        run_command("consistency", small("b2.cfg"))


def test_rates_only_control_matches_oracle():
    cfg = load_config(CONFIGS / "b1.cfg")
    model = model_from_config(cfg)
    law = init_from_config(cfg, model)
    mean, oracle, sigma = rates_only_control(model, law, 1.0, 2000, 0)
    assert np.all(np.abs(mean - oracle) <= 3 * sigma)
    assert rates_only_model(model).velocity_field(law.sample(5, np.random.default_rng(0))).max() == 0.0


def test_stability_and_validate_small():
    res = run_command("stability", small("b1_stability.cfg", **{"experiment.N": 32, "experiment.seeds": "0, 1"}))
    assert res.ok and res.summary["max_ratio"] <= 1.05
    assert run_command("validate", small("b1_validate.cfg", **{"experiment.samples": 50})).ok


def test_pde_command(tmp_path):
    res = run_command("pde", small("b1.cfg", **{"grid.n_cells": 100}), tmp_path)
    assert res.ok
    assert (tmp_path / "densities" / "densities_00000.csv").exists()


# command line


def test_cli_success(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small("b1.cfg", **{"sim.N": 16}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"]) == EXIT_OK
    assert "simulate: ok" in capsys.readouterr().out
    assert "seed = 3" in (tmp_path / "o" / "manifest.txt").read_text()


def test_cli_default_out(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, small("b1_validate.cfg", **{"experiment.samples": 20}))
    monkeypatch.chdir(tmp_path)
    assert main(["validate", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "out" / "validate" / "report.csv").exists()


def test_cli_failed_check_exit_code(tmp_path):
    # a grid that clips the support trips the edge-mass check
    cfg = write_cfg(tmp_path, small("b1.cfg", **{"grid.x_min": -1.0, "grid.x_max": 1.0}))
    assert main(["pde", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_FAILED


@pytest.mark.parametrize("argv", [
    ["simulate"],
    ["bogus", "--config", "x.cfg"],
    ["simulate", "--config", "does/not/exist.cfg"],
    ["simulate", "--config", "x.cfg", "--jobs", "0"],
])
def test_cli_usage_errors(argv, tmp_path, capsys):
    assert main(argv) == EXIT_ERROR


def test_cli_runtime_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small("b2.cfg"))
    assert main(["consistency", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert "closed system" in capsys.readouterr().err


def test_cli_help():
    assert main(["--help"]) == EXIT_OK


@pytest.mark.slow
def test_pde_and_particle_references_agree_on_b1():
    cfg = load_config(CONFIGS / "b1_converge.cfg")
    verdicts = {}
    for ref in ("pde", "quantile"):
        verdicts[ref] = cmd_converge(cfg.with_overrides(**{"experiment.reference": ref})).ok
    assert verdicts["pde"] == verdicts["quantile"], verdicts
