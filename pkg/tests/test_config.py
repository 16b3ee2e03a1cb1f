from pathlib import Path

import numpy as np
import pytest

from multipop.config import (
    Config,
    ConfigError,
    dump_config,
    init_from_config,
    load_config,
    model_from_config,
    parse_config,
    sim_from_config,
)
from multipop.continuum import GameModel
from multipop.io import fmt, write_manifest, write_svg_plot, write_table
from multipop.kernels import GaussianInteraction, LinearAttraction, ZeroKernel
from multipop.model import LABEL_INDEPENDENT, LABEL_WEIGHTED

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TWO_LABEL = """
model.H = 2
model.labels = F, L
model.mode = label_independent
model.kernel.F.family = linear_attraction
model.kernel.F.a = 0.5
model.kernel.L.family = zero
model.rate.F.L.base = 0.4
model.rate.F.L.influence = 0.1, 0.2
init.labels = fixed
init.label_vector = 0.25, 0.75
sim.dt = 0.1
sim.T = 1.0
"""


def test_parse_ignores_comments_and_blanks():
    cfg = parse_config("# top\n\nsim.dt = 0.1  # trailing\n")
    assert cfg == {"sim.dt": "0.1"}


@pytest.mark.parametrize("text, msg", [
    ("sim.dt 0.1", "expected"),
    ("foo.bar = 1", "unknown section"),
    ("sim.dt = 1\nsim.dt = 2", "duplicate"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_typed_accessors():
    cfg = Config({"a": "3", "b": "yes", "c": "1, 2.5", "d": "x"})
    assert cfg.int("a") == 3 and cfg.bool("b") is True
    assert cfg.list("c") == [1.0, 2.5]
    assert cfg.float("missing", 7.0) == 7.0
    with pytest.raises(ConfigError, match="not a number"):
        cfg.float("d")
    with pytest.raises(ConfigError, match="missing"):
        cfg.int("missing")


def test_dump_round_trip_and_hash():
    cfg = parse_config(TWO_LABEL)
    again = parse_config(dump_config(cfg))
    assert again == cfg and again.hash() == cfg.hash()
    assert cfg.with_overrides(**{"sim.dt": 0.2}).hash() != cfg.hash()


def test_two_label_model():
    model = model_from_config(parse_config(TWO_LABEL))
    assert model.mode == LABEL_INDEPENDENT
    assert model.kernels[0][1] == LinearAttraction(0.5)
    assert model.kernels[1][0] == ZeroKernel()
    assert model.rates.base[0, 1] == 0.4 and model.rates.base[1, 0] == 0.0
    np.testing.assert_array_equal(model.rates.influence[0, 1], [0.1, 0.2])
    assert model.labels.names == ("F", "L")


def test_init_and_sim_sections():
    cfg = parse_config(TWO_LABEL)
    law = init_from_config(cfg, model_from_config(cfg))
    np.testing.assert_array_equal(law.label_vector, [0.25, 0.75])
    sim = sim_from_config(cfg, seed=9)
    assert sim.n_steps == 10 and sim.seed == 9


def test_unknown_kernel_family():
    text = TWO_LABEL.replace("family = zero", "family = morse")
    with pytest.raises(ConfigError, match="morse"):
        model_from_config(parse_config(text))


def test_unknown_label_reference():
    with pytest.raises(ConfigError, match="unknown label"):
        model_from_config(parse_config(TWO_LABEL + "model.rate.F.Q.base = 1\n"))


def test_negative_rate_is_a_config_error():
    with pytest.raises(ConfigError):
        model_from_config(parse_config(TWO_LABEL.replace("base = 0.4", "base = -0.4")))


def test_sim_horizon_must_be_multiple():
    with pytest.raises(ConfigError, match="sim"):
        sim_from_config(parse_config("sim.dt = 0.3\nsim.T = 1.0"))


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_shipped_configs_build(name):
    cfg = load_config(CONFIGS / name)
    model = model_from_config(cfg)
    init_from_config(cfg, model)
    sim_from_config(cfg)


def test_benchmark_shapes():
    b1 = model_from_config(load_config(CONFIGS / "b1.cfg"))
    assert b1.H == 2 and b1.mode == LABEL_INDEPENDENT
    assert b1.kernels[1][0] == GaussianInteraction(2.0, 1.0)
    b2 = model_from_config(load_config(CONFIGS / "b2.cfg"))
    assert b2.H == 4 and b2.mode == LABEL_WEIGHTED
    assert b2.kernels[0][2] == ZeroKernel() and b2.kernels[2][3] == LinearAttraction(0.3)
    b3 = model_from_config(load_config(CONFIGS / "b3.cfg"))
    assert isinstance(b3, GameModel) and b3.H == 16


# io


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(np.float64(1.0)) == "1"
    assert fmt(np.int64(3)) == "3"
    assert fmt(True) == "true"
    assert fmt("F") == "F"


def test_table_manifest_and_svg(tmp_path):
    csv = write_table(tmp_path / "t.csv", ["a", "b"], [[1, 0.5], [2, np.nan]])
    assert csv.read_text() == "a,b\n1,0.5\n2,nan\n"
    svg = write_svg_plot(tmp_path / "p.svg", {"s": ([1, 2, 4], [1.0, 0.5, 0.0])}, logx=True, logy=True)
    assert svg.read_text().startswith("<svg") and "polyline" in svg.read_text()
    man = write_manifest(tmp_path / "m.txt", "sim.dt = 0.1\n", "abc", {"M": 1.5}, {"ok": True}, [csv])
    text = man.read_text()
    assert "config_sha256 = abc" in text and "M = 1.5" in text and "t.csv = sha256:" in text
