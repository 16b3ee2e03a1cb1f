"""Flat ``key = value`` configuration files with dotted section prefixes.

Example::

    # two-label model on the line
    model.H = 2
    model.labels = F, L
    model.mode = label_independent
    model.kernel.F.family = gaussian
    model.kernel.F.a = 1.0
    model.kernel.F.sigma = 0.5
    model.rate.F.L.base = 0.4

Blank lines and ``#`` comments are ignored.  Lists are comma separated.
Kernel keys are ``model.kernel.<h>.<param>`` (label-independent mode) or
``model.kernel.<h>.<k>.<param>``; ``model.kernel.default.*`` and
``model.rate.default.*`` fill every entry not set explicitly.  Labels are
referred to by name or by 1-based position.
"""
from __future__ import annotations

import builtins
import hashlib
from pathlib import Path

import numpy as np

from .continuum import J_CATALOG, V_CATALOG, GameKernelSpec, GameModel
from .engine import SimConfig
from .initial import InitialLaw
from .kernels import KERNEL_FAMILIES, kernel_from_params
from .measures import LabelSpace
from .model import LABEL_INDEPENDENT, LABEL_WEIGHTED, ModelSpec
from .pde import Grid1D
from .rates import RateSpec

__all__ = [
    "Config",
    "ConfigError",
    "dump_config",
    "game_from_config",
    "grid_from_config",
    "init_from_config",
    "load_config",
    "model_from_config",
    "parse_config",
    "sim_from_config",
]

SECTIONS = ("model", "game", "init", "sim", "grid", "pde", "experiment")


class ConfigError(ValueError):
    pass


class Config(dict):
    """Mapping from dotted keys to raw string values with typed accessors."""

    def _raw(self, key, default):
        if key in self:
            return self[key]
        if default is _MISSING:
            raise ConfigError(f"missing configuration key {key!r}")
        return default

    def str(self, key: str, default=None) -> builtins.str:
        v = self._raw(key, _MISSING if default is None else default)
        return v if isinstance(v, builtins.str) else builtins.str(v)

    def float(self, key: str, default=None) -> float:
        v = self._raw(key, _MISSING if default is None else default)
        try:
            return builtins.float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} = {v!r} is not a number") from None

    def int(self, key: str, default=None) -> int:
        v = self._raw(key, _MISSING if default is None else default)
        try:
            return builtins.int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} = {v!r} is not an integer") from None

    def bool(self, key: str, default=None) -> bool:
        v = self._raw(key, _MISSING if default is None else default)
        if isinstance(v, builtins.bool):
            return v
        s = builtins.str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} = {v!r} is not a boolean")

    def list(self, key: str, default=None, cast=builtins.float) -> builtins.list:
        v = self._raw(key, _MISSING if default is None else default)
        if isinstance(v, (builtins.list, tuple)):
            items = builtins.list(v)
        else:
            items = [s.strip() for s in builtins.str(v).split(",") if s.strip()]
        try:
            return [cast(s) for s in items]
        except (TypeError, ValueError):
            raise ConfigError(f"{key} = {v!r} is not a list of {cast.__name__}") from None

    def section(self, prefix: str) -> "Config":
        """Keys starting with ``prefix.``, with the prefix removed."""
        p = prefix + "."
        return Config({k[len(p):]: v for k, v in self.items() if k.startswith(p)})

    def hash(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()

    def with_overrides(self, **kv) -> "Config":
        out = Config(self)
        out.update({k: str(v) for k, v in kv.items()})
        return out


_MISSING = object()


def parse_config(text: str) -> Config:
    cfg = Config()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or key.split(".")[0] not in SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section in key {key!r}; sections are {SECTIONS}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = value
    return cfg


def load_config(path) -> Config:
    return parse_config(Path(path).read_text())


def dump_config(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


# builders


def _labels(cfg: Config, H: int) -> tuple[LabelSpace, list[str]]:
    names = cfg.list("model.labels", [str(h + 1) for h in range(H)], cast=str)
    if len(names) != H:
        raise ConfigError(f"model.labels lists {len(names)} names for H = {H}")
    points = cfg.list("model.label_points", list(range(1, H + 1)))
    return LabelSpace(H, np.asarray(points, float), tuple(names)), names


def _label_index(token: str, names: list[str]) -> int:
    if token in names:
        return names.index(token)
    if token.isdigit() and 1 <= int(token) <= len(names):
        return int(token) - 1
    raise ConfigError(f"unknown label {token!r}; labels are {names}")


def _kernel(params: dict, where: str):
    params = dict(params)
    family = params.pop("family", None)
    if family is None:
        raise ConfigError(f"{where}.family is missing")
    if family not in KERNEL_FAMILIES:
        raise ConfigError(f"{where}.family = {family!r}; choose from {sorted(KERNEL_FAMILIES)}")
    typed = {}
    for k, v in params.items():
        if k == "c":
            typed[k] = tuple(float(s) for s in str(v).split(","))
        else:
            try:
                typed[k] = float(v)
            except ValueError:
                raise ConfigError(f"{where}.{k} = {v!r} is not a number") from None
    try:
        return kernel_from_params(family, **typed)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _group(section: Config, names: list[str], depth: int) -> dict:
    """Split ``a.b.param`` keys into ``{(ia, ib): {param: value}}``."""
    out: dict = {}
    for key, value in section.items():
        parts = key.split(".")
        if len(parts) != depth + 1:
            continue
        if parts[0] == "default":
            idx = "default"
        else:
            idx = tuple(_label_index(p, names) for p in parts[:depth])
        out.setdefault(idx, {})[parts[-1]] = value
    return out


def model_from_config(cfg: Config) -> ModelSpec | GameModel:
    """Build the model described by the ``model.*`` (or ``game.*``) keys."""
    if cfg.str("model.type", "kernel") == "game":
        return game_from_config(cfg)
    H = cfg.int("model.H")
    d = cfg.int("model.d", 1)
    labels, names = _labels(cfg, H)
    mode = cfg.str("model.mode", LABEL_WEIGHTED)
    if mode not in (LABEL_WEIGHTED, LABEL_INDEPENDENT):
        raise ConfigError(f"model.mode = {mode!r}; use {LABEL_WEIGHTED} or {LABEL_INDEPENDENT}")
    ksec = cfg.section("model.kernel")
    grid = [[None] * H for _ in range(H)]
    default = {k[len("default."):]: v for k, v in ksec.items() if k.startswith("default.")}
    single = _group(ksec, names, 1)
    double = _group(ksec, names, 2)
    for h in range(H):
        for k in range(H):
            params = dict(default)
            params.update(single.get((h,), {}))
            params.update(double.get((h, k), {}))
            if not params:
                raise ConfigError(f"no kernel configured for labels ({names[h]}, {names[k]})")
            grid[h][k] = _kernel(params, f"model.kernel.{names[h]}.{names[k]}")
    rsec = cfg.section("model.rate")
    rdefault = {k[len("default."):]: v for k, v in rsec.items() if k.startswith("default.")}
    pairs = _group(rsec, names, 2)
    base = np.zeros((H, H))
    infl = np.zeros((H, H, H))
    width = np.ones((H, H))
    gain = np.zeros((H, H), bool)
    for h in range(H):
        for k in range(H):
            if h == k:
                continue
            p = Config(rdefault)
            p.update(pairs.get((h, k), {}))
            base[h, k] = p.float("base", 0.0)
            infl[h, k] = p.list("influence", [0.0] * H)
            if len(p.list("influence", [0.0] * H)) != H:
                raise ConfigError(f"model.rate.{names[h]}.{names[k]}.influence needs {H} values")
            width[h, k] = p.float("width", 1.0)
            gain[h, k] = p.bool("gain", False)
    try:
        rates = RateSpec(base, infl, width, gain)
        return ModelSpec(d, grid, rates, labels, mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _game_kernel(cfg: Config, which: str, catalog: dict):
    sec = cfg.section(f"game.{which}")
    family = sec.str("family", "")
    if family not in catalog:
        raise ConfigError(f"game.{which}.family = {family!r}; choose from {sorted(catalog)}")
    kwargs = {}
    for key in sec:
        if key == "family":
            continue
        if key in ("left", "right"):
            kwargs[key] = tuple(sec.list(key))
        else:
            kwargs[key] = sec.float(key)
    try:
        return catalog[family](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"game.{which}: {exc}") from None


def game_from_config(cfg: Config) -> GameModel:
    spec = GameKernelSpec(
        _game_kernel(cfg, "J", J_CATALOG),
        _game_kernel(cfg, "V", V_CATALOG),
        cfg.int("game.H"),
        cfg.int("model.d", 1),
    )
    return GameModel(spec)


def init_from_config(cfg: Config, model=None) -> InitialLaw:
    H = model.H if model is not None else cfg.int("model.H")
    d = model.d if model is not None else cfg.int("model.d", 1)
    sec = cfg.section("init")
    kw = dict(
        d=d,
        H=H,
        position=sec.str("position", "uniform"),
        radius=sec.float("radius", 1.0),
        scale=sec.float("scale", 1.0),
        labels=sec.str("labels", "dirichlet"),
        label_space=model.labels if model is not None else None,
    )
    if "center" in sec:
        kw["center"] = sec.list("center")
    for key in ("label_vector", "offset", "slope"):
        if key in sec:
            kw[key] = sec.list(key)
    if "kappa" in sec:
        kw["kappa"] = tuple(sec.list("kappa"))
    try:
        return InitialLaw(**kw)
    except ValueError as exc:
        raise ConfigError(f"init: {exc}") from None


def sim_from_config(cfg: Config, seed: int | None = None) -> SimConfig:
    try:
        return SimConfig(
            dt=cfg.float("sim.dt"),
            T=cfg.float("sim.T"),
            record_every=cfg.int("sim.record_every", 1),
            seed=cfg.int("sim.seed", 0) if seed is None else seed,
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None


def grid_from_config(cfg: Config, default_half_width: float | None = None, n_cells: int | None = None) -> Grid1D:
    n = cfg.int("grid.n_cells", 200) if n_cells is None else n_cells
    if "grid.x_min" in cfg or "grid.x_max" in cfg:
        return Grid1D(cfg.float("grid.x_min"), cfg.float("grid.x_max"), n)
    if default_half_width is None:
        raise ConfigError("grid.x_min and grid.x_max are required")
    return Grid1D.symmetric(default_half_width, n)
