"""Experiment harness behind the command-line interface.

Every command takes a ``Config`` and returns an ``ExperimentResult``:
a table, a plot description, summary values and a pass/fail verdict.
``write_outputs`` turns a result into ``report.csv``, ``report.svg`` and
``manifest.txt``.  Independent (N, seed) runs are distributed over a
process pool when ``jobs > 1``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import (
    Config,
    ConfigError,
    dump_config,
    grid_from_config,
    init_from_config,
    model_from_config,
    sim_from_config,
)
from .engine import SimConfig, simulate, stability_experiment, support_bound, support_bound_check
from .io import write_manifest, write_svg_plot, write_table
from .kernels import ZeroKernel
from .measures import (
    ATOM_CAP,
    EmpiricalMeasure,
    bl_distance,
    label_marginals,
    w1_product,
)
from .model import LABEL_INDEPENDENT, ModelSpec, validate_assumptions, zero_model
from .pde import (
    GriddedDensities,
    edge_mass,
    solve_pde,
    spatial_radius_bound,
    write_densities_csv,
)
from .rates import RateSpec

__all__ = [
    "COMMANDS",
    "ExperimentResult",
    "ReductionError",
    "cmd_consistency",
    "cmd_converge",
    "cmd_pde",
    "cmd_simulate",
    "cmd_stability",
    "cmd_validate",
    "rates_only_model",
    "run_command",
    "write_outputs",
]


class ReductionError(ValueError):
    """The model has no closed system for its label marginals."""


@dataclass
class ExperimentResult:
    name: str
    ok: bool
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    constants: dict | None = None
    extra_files: list = field(default_factory=list)


def _map(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _constants(model, law, T: float) -> tuple[dict | None, float, float]:
    """Analytic constants on the support ball at time T, plus r and M."""
    if not isinstance(model, ModelSpec):
        return None, math.nan, math.nan
    r = law.support_radius + 1.0
    M = model.constants(r).M
    R = float(support_bound(r, M, T))
    c = model.constants(R).as_dict()
    c["r"] = r
    return c, r, M


def _seeds(cfg: Config, seed: int | None) -> list[int]:
    seeds = cfg.list("experiment.seeds", [0, 1, 2, 3, 4], cast=int)
    if seed is not None:
        seeds = [seed + s for s in range(len(seeds))]
    return seeds


def _N_list(cfg: Config) -> list[int]:
    Ns = cfg.list("experiment.N", [64, 128, 256, 512], cast=int)
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ConfigError("experiment.N must be strictly increasing")
    return Ns


# simulate


def cmd_simulate(cfg: Config, out: Path | None = None, seed: int | None = None, jobs: int = 1) -> ExperimentResult:
    model = model_from_config(cfg)
    law = init_from_config(cfg, model)
    sim = sim_from_config(cfg, seed)
    N = cfg.int("experiment.N", cfg.int("sim.N", 256))
    P0 = law.sample(N, np.random.default_rng(sim.seed))
    traj = simulate(model, P0, sim)
    consts, r, M = _constants(model, law, sim.T)
    bound = support_bound(r, M, np.asarray(traj.times)) if consts else np.full(len(traj), np.nan)
    ok = True
    summary = {"N": N, "seed": sim.seed, "steps": sim.n_steps}
    if consts:
        rep = support_bound_check(traj, r, M)
        ok = rep.ok
        summary.update(support_min_margin=rep.min_margin, support_violations=rep.violations)
    rows = []
    for i, (t, P) in enumerate(zip(traj.times, traj.snapshots)):
        masses = P.labels.mean(axis=0)
        rows.append([t, traj.max_state_norm[i], traj.first_moment[i], bound[i], *masses])
    names = [str(n) for n in model.labels.names]
    extra = []
    if out is not None:
        extra.append(traj.write(Path(out) / "trajectory"))
    return ExperimentResult(
        "simulate", ok,
        ["time", "max_state_norm", "first_moment", "support_bound"] + [f"mass_{n}" for n in names],
        rows, summary,
        {"max state norm": (traj.times, traj.max_state_norm), "support bound": (traj.times, bound)},
        "t", "state norm", constants=consts, extra_files=extra,
    )


# pde


def _pde_grid(cfg: Config, model: ModelSpec, law, T: float, n_cells: int | None = None):
    n = cfg.int("grid.n_cells", 200) if n_cells is None else n_cells
    Rb = spatial_radius_bound(model, law.support_radius, T)
    # leave at least six empty cells beyond the bound on each side
    half = Rb * n / (n - 12.0) if n > 24 else 2 * Rb
    return grid_from_config(cfg, half, n)


def _require_pde_model(model) -> ModelSpec:
    if not isinstance(model, ModelSpec) or model.mode != LABEL_INDEPENDENT:
        raise ReductionError(
            "particle/PDE comparison needs label-independent kernels K^{hk} = K^h: when the "
            "velocity depends on the agent's own label vector, the label marginals do not "
            "satisfy a closed system of equations"
        )
    if model.d != 1:
        raise ReductionError("the density solver is one dimensional")
    return model


def _initial_densities(law, grid) -> GriddedDensities:
    return GriddedDensities.from_cell_masses(grid, law.cell_masses(grid.edges), 0.0, law.label_space)


def cmd_pde(cfg: Config, out: Path | None = None, seed: int | None = None, jobs: int = 1) -> ExperimentResult:
    model = _require_pde_model(model_from_config(cfg))
    law = init_from_config(cfg, model)
    T = cfg.float("pde.T", cfg.float("sim.T", 1.0))
    dt = cfg.float("pde.dt")
    grid = _pde_grid(cfg, model, law, T)
    rho0 = _initial_densities(law, grid)
    snaps = solve_pde(model, rho0, T, dt, cfg.int("pde.record_every", 1))
    steps = int(round(T / dt))
    mass_tol = 1e-10 * max(1.0, steps / 1000.0)
    rows = []
    for s in snaps:
        rows.append([s.time, s.mass, s.mass - 1.0, float(s.values.min()), edge_mass(s), *s.species_mass])
    mass_err = max(abs(r[2]) for r in rows)
    edge = max(r[4] for r in rows)
    ok = mass_err <= mass_tol and min(r[3] for r in rows) >= 0.0 and edge <= 1e-10
    extra = []
    if out is not None:
        d = Path(out) / "densities"
        d.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(snaps):
            extra.append(write_densities_csv(s, d / f"densities_{i:05d}.csv"))
    consts, _, _ = _constants(model, law, T)
    names = [str(n) for n in model.labels.names]
    times = [s.time for s in snaps]
    return ExperimentResult(
        "pde", ok, ["time", "mass", "mass_error", "min_density", "edge_mass"] + [f"mass_{n}" for n in names],
        rows,
        {"n_cells": grid.n_cells, "x_min": grid.x_min, "x_max": grid.x_max, "dt": dt, "steps": steps,
         "max_mass_error": mass_err, "mass_tolerance": mass_tol, "max_edge_mass": edge},
        {f"mass {n}": (times, [r[5 + h] for r in rows]) for h, n in enumerate(names)},
        "t", "label mass", constants=consts,
    )


# converge


def _w1_capped(P: EmpiricalMeasure, R: EmpiricalMeasure, sub: int, rng) -> float:
    if P.N + R.N > ATOM_CAP:
        P = P.subsample(min(sub, P.N), rng)
        R = R.subsample(ATOM_CAP - P.N, rng)
    return w1_product(P, R)


def _marginal_distance(P: EmpiricalMeasure, rho: GriddedDensities) -> float:
    """``sum_h bl_distance`` between particle label marginals and gridded densities."""
    return float(sum(bl_distance(a, b) for a, b in zip(label_marginals(P), rho.marginals())))


def _converge_task(task):
    model, law, sim, N, seed, ref, sub, ref_kind = task
    traj = simulate(model, law.sample(N, np.random.default_rng(seed)), sim)
    rng = np.random.default_rng(10_000 + seed)
    errs = []
    for t, P in zip(traj.times, traj.snapshots):
        if ref_kind == "pde":
            errs.append(_marginal_distance(P, _at(ref, t)))
        else:
            errs.append(_w1_capped(P, _at(ref, t), sub, rng))
    return N, seed, traj.times, errs


def _at(ref: list, t: float):
    for s_t, s in ref:
        if abs(s_t - t) <= 1e-9 * max(1.0, t):
            return s
    raise KeyError(f"reference has no snapshot at t = {t}")


def _reference(cfg: Config, model, law, sim: SimConfig, kind: str):
    if kind == "pde":
        model = _require_pde_model(model)
        dt = cfg.float("pde.dt")
        grid = _pde_grid(cfg, model, law, sim.T)
        snaps = solve_pde(model, _initial_densities(law, grid), sim.T, dt)
        return [(s.time, s) for s in snaps]
    N_ref = cfg.int("experiment.reference_N", 1536)
    if kind == "quantile":
        P0 = law.quantile_sample(N_ref)
    elif kind == "sample":
        P0 = law.sample(N_ref, np.random.default_rng(cfg.int("experiment.reference_seed", 999_999)))
    else:
        raise ConfigError(f"experiment.reference = {kind!r}; use quantile, sample or pde")
    traj = simulate(model, P0, sim)
    return list(zip(traj.times, traj.snapshots))


def frozen(model) -> ModelSpec:
    """The same state space with no motion and no switching."""
    return zero_model(model.d, model.H, model.labels)


def cmd_converge(cfg: Config, out: Path | None = None, seed: int | None = None, jobs: int = 1) -> ExperimentResult:
    model = model_from_config(cfg)
    if cfg.str("experiment.control", "none") == "frozen":
        model = frozen(model)
    law = init_from_config(cfg, model)
    sim = sim_from_config(cfg)
    Ns = _N_list(cfg)
    seeds = _seeds(cfg, seed)
    kind = cfg.str("experiment.reference", "quantile" if law.deterministic_labels and law.d == 1 else "sample")
    ref = _reference(cfg, model, law, sim, kind)
    sub = cfg.int("experiment.subsample", 512)
    tasks = [(model, law, sim, N, s, ref, sub, kind) for N in Ns for s in seeds]
    results = _map(_converge_task, tasks, jobs)
    e = {N: [] for N in Ns}
    rows = []
    for N, s, times, errs in results:
        e[N].append(max(errs))
        rows.append([N, s, max(errs), times[int(np.argmax(errs))]])
    means = np.array([np.mean(e[N]) for N in Ns])
    stderr = np.array([np.std(e[N], ddof=1) / math.sqrt(len(e[N])) if len(e[N]) > 1 else 0.0 for N in Ns])
    slope = float(np.polyfit(np.log(Ns), np.log(means), 1)[0]) if len(Ns) > 1 else math.nan
    decreasing = bool(np.all(np.diff(means) < 0))
    summary = {"reference": kind, "slope": slope, "strictly_decreasing": decreasing,
               "seeds": ",".join(map(str, seeds))}
    for N, m, se in zip(Ns, means, stderr):
        summary[f"e_mean_N{N}"] = m
        summary[f"e_stderr_N{N}"] = se
    rows = [[N, "mean", m, se] for N, m, se in zip(Ns, means, stderr)] + rows
    return ExperimentResult(
        "converge", decreasing, ["N", "seed", "e", "stderr_or_time"], rows, summary,
        {"mean e(N)": (Ns, means), "N^-1/2 guide": (Ns, means[0] * np.sqrt(Ns[0] / np.asarray(Ns)))},
        "N", "e(N)", logx=True, logy=True,
    )


# stability


def _stability_task(task):
    model, law, sim, N, seed, eps, L = task
    rng = np.random.default_rng(seed)
    Pa = law.sample(N, rng)
    direction = rng.normal(size=Pa.positions.shape)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    Pb = EmpiricalMeasure(Pa.positions + eps * direction, Pa.labels, Pa.label_space)
    return seed, stability_experiment(model, Pa, Pb, sim, L)


def cmd_stability(cfg: Config, out: Path | None = None, seed: int | None = None, jobs: int = 1) -> ExperimentResult:
    model = model_from_config(cfg)
    if not isinstance(model, ModelSpec):
        raise ConfigError("the stability experiment needs a kernel model with analytic constants")
    law = init_from_config(cfg, model)
    sim = sim_from_config(cfg)
    consts, _, _ = _constants(model, law, sim.T)
    eps = cfg.float("experiment.epsilon", 1e-3)
    N = cfg.int("experiment.N", 256)
    tasks = [(model, law, sim, N, s, eps, consts["L_R"]) for s in _seeds(cfg, seed)]
    reports = _map(_stability_task, tasks, jobs)
    rows, series = [], {}
    worst = 0.0
    for s, rep in reports:
        ratio = rep.ratio
        worst = max(worst, float(ratio.max()))
        for t, w, env, q in zip(rep.times, rep.w1, rep.envelope, ratio):
            rows.append([s, t, w, env * rep.w1[0], q])
        series[f"seed {s}: W1(t)/W1(0)"] = (rep.times, rep.w1 / rep.w1[0])
    series["envelope"] = (reports[0][1].times, reports[0][1].envelope)
    ok = worst <= 1.05
    return ExperimentResult(
        "stability", ok, ["seed", "time", "w1", "envelope_bound", "ratio"], rows,
        {"epsilon": eps, "N": N, "max_ratio": worst, "L_R": consts["L_R"]},
        series, "t", "growth factor", logy=True, constants=consts,
    )


# consistency


def rates_only_model(model: ModelSpec) -> ModelSpec:
    """Zero kernels and the position-only part of the rates (no population influence)."""
    r = model.rates
    rates = RateSpec(r.base, np.zeros_like(r.influence), r.width, r.spatial_gain)
    return ModelSpec.label_independent(model.d, [ZeroKernel()] * model.H, rates, model.labels)


def _consistency_task(task):
    model, law, sim, N, seed, rho_snaps = task
    traj = simulate(model, law.sample(N, np.random.default_rng(seed)), sim)
    return N, seed, [(t, _marginal_distance(P, _at(rho_snaps, t))) for t, P in zip(traj.times, traj.snapshots)]


def _parse_levels(cfg: Config) -> list[tuple[int, int]]:
    levels = []
    for item in cfg.list("experiment.levels", ["256:200", "1024:400"], cast=str):
        try:
            n, cells = item.split(":")
            levels.append((int(n), int(cells)))
        except ValueError:
            raise ConfigError(f"experiment.levels entry {item!r} is not N:n_cells") from None
    return levels


def rates_only_control(model: ModelSpec, law, T: float, N: int, seed: int, n_cells: int = 2000):
    """Label masses of the particle system vs the per-cell exponential with zero kernels.

    Returns ``(particle_mean, oracle, sigma)`` per label; positions never
    move, so both sides apply ``exp(T Q(x))`` to the same initial labels and
    differ only by the sampling of the positions.
    """
    ctrl = rates_only_model(model)
    sim = SimConfig(T, T) if T > 0 else SimConfig(1.0, 0.0)
    P = simulate(ctrl, law.sample(N, np.random.default_rng(seed)), sim).final
    grid = _pde_grid(Config(), ctrl, law, T, n_cells)
    rho = solve_pde(ctrl, _initial_densities(law, grid), T, T)[-1]
    return P.labels.mean(axis=0), rho.species_mass, P.labels.std(axis=0, ddof=1) / math.sqrt(N)


def cmd_consistency(cfg: Config, out: Path | None = None, seed: int | None = None, jobs: int = 1) -> ExperimentResult:
    model = _require_pde_model(model_from_config(cfg))
    law = init_from_config(cfg, model)
    sim = sim_from_config(cfg)
    levels = _parse_levels(cfg)
    if len({N for N, _ in levels}) != len(levels):
        raise ConfigError("experiment.levels needs distinct particle counts")
    seeds = _seeds(cfg, seed)
    dt0 = cfg.float("pde.dt")
    n0 = levels[0][1]
    tasks = []
    for N, n in levels:
        grid = _pde_grid(cfg, model, law, sim.T, n)
        dt = dt0 * n0 / n
        snaps = solve_pde(model, _initial_densities(law, grid), sim.T, dt)
        rho = [(s.time, s) for s in snaps]
        tasks += [(model, law, sim, N, s, rho) for s in seeds]
    results = _map(_consistency_task, tasks, jobs)
    rows = []
    by_level: dict = {}
    cells = dict(levels)
    for N, s, dist in results:
        n = cells[N]
        for t, dval in dist:
            rows.append([N, n, s, t, dval])
        by_level.setdefault((N, n), []).append(dist)
    final = {}
    series = {}
    for (N, n), runs in by_level.items():
        times = [t for t, _ in runs[0]]
        mean = np.mean([[dv for _, dv in r] for r in runs], axis=0)
        final[(N, n)] = float(mean[-1])
        series[f"N={N}, cells={n}"] = (times, mean)
    vals = [final[lv] for lv in levels]
    decreasing = bool(np.all(np.diff(vals) < 0))
    summary = {"strictly_decreasing": decreasing}
    for (N, n), v in final.items():
        summary[f"distance_T_N{N}_cells{n}"] = v
    ok = decreasing
    if cfg.bool("experiment.rates_only_control", True):
        N_ctrl = levels[-1][0]
        mean, oracle, sigma = rates_only_control(model, law, sim.T, N_ctrl, seeds[0])
        z = np.abs(mean - oracle) / np.maximum(sigma, 1e-300)
        ctrl_ok = bool(np.all(np.abs(mean - oracle) <= 3 * sigma))
        summary.update(control_max_z=float(z.max()), control_ok=ctrl_ok)
        for h, name in enumerate(model.labels.names):
            summary[f"control_{name}_particle"] = float(mean[h])
            summary[f"control_{name}_oracle"] = float(oracle[h])
            summary[f"control_{name}_sigma"] = float(sigma[h])
        ok = ok and ctrl_ok
    consts, _, _ = _constants(model, law, sim.T)
    return ExperimentResult(
        "consistency", ok, ["N", "n_cells", "seed", "time", "bl_distance"], rows, summary,
        series, "t", "sum of label BL distances", constants=consts,
    )


# validate


def cmd_validate(cfg: Config, out: Path | None = None, seed: int | None = None, jobs: int = 1) -> ExperimentResult:
    model = model_from_config(cfg)
    if not isinstance(model, ModelSpec):
        raise ConfigError("validation needs a kernel model")
    R = cfg.float("experiment.R", 3.0)
    samples = cfg.int("experiment.samples", 200)
    s = cfg.int("sim.seed", 0) if seed is None else seed
    rep = validate_assumptions(model, R, samples, np.random.default_rng(s))
    rows = [[c.name, c.empirical, c.bound, c.ok] for c in rep.checks]
    return ExperimentResult(
        "validate", rep.ok, ["check", "empirical", "bound", "ok"], rows,
        {"R": R, "samples": samples, "flagged": len(rep.flagged)},
        {"empirical/bound": (list(range(len(rows))),
                             [c.empirical / c.bound if c.bound > 0 else 0.0 for c in rep.checks])},
        "check index", "empirical / bound", constants=rep.constants.as_dict(),
    )


COMMANDS = {
    "simulate": cmd_simulate,
    "pde": cmd_pde,
    "converge": cmd_converge,
    "stability": cmd_stability,
    "consistency": cmd_consistency,
    "validate": cmd_validate,
}


def write_outputs(result: ExperimentResult, cfg: Config, out) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = write_table(out / "report.csv", result.columns, result.rows)
    svg_path = write_svg_plot(
        out / "report.svg", result.series, result.xlabel, result.ylabel, result.name,
        result.logx, result.logy,
    )
    summary = {"command": result.name, "ok": result.ok, **result.summary}
    files = [csv_path, svg_path] + [Path(f) for f in result.extra_files]
    man = write_manifest(out / "manifest.txt", dump_config(cfg), cfg.hash(), result.constants, summary, files)
    return [csv_path, svg_path, man]


def run_command(name: str, cfg: Config, out=None, seed: int | None = None, jobs: int = 1) -> ExperimentResult:
    try:
        cmd = COMMANDS[name]
    except KeyError:
        raise ConfigError(f"unknown command {name!r}; choose from {sorted(COMMANDS)}") from None
    result = cmd(cfg, Path(out) if out is not None else None, seed, jobs)
    if out is not None:
        write_outputs(result, cfg, out)
    return result

