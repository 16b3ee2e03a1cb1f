"""Finite-volume solver for the H-label continuity system in one dimension.

For label-independent kernels the label marginals solve::

    d/dt mu^h = -d/dx( v mu^h ) + sum_k alpha_kh mu^k - (sum_k alpha_hk) mu^h,
    v = sum_k K^k * mu^k

One step transports each density with first-order upwind fluxes and then
applies the exact per-cell reaction ``rho_j' = exp(dt Q(x_j))^T rho_j``.
Velocities and generators are evaluated from the frozen pre-step densities
(cell averages act as atoms at cell centres).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .measures import MASS_TOL, DiscreteSpatialMeasure, EmpiricalMeasure, LabelSpace
from .model import LABEL_INDEPENDENT, ModelSpec
from .rates import transition_matrix, warn_large_step

__all__ = [
    "CFL_LIMIT",
    "CFLError",
    "Grid1D",
    "GriddedDensities",
    "LiftedDatum",
    "TestFunction",
    "WeakFormReport",
    "bump",
    "bump_catalog",
    "cfl_number",
    "edge_mass",
    "lift_initial_datum",
    "pde_rhs",
    "pde_step",
    "read_densities_csv",
    "solve_pde",
    "spatial_radius_bound",
    "stable_dt",
    "weak_form_residual",
    "write_densities_csv",
]

CFL_LIMIT = 0.9


class CFLError(ValueError):
    """Time step too large for a positivity-preserving upwind step."""

    def __init__(self, cfl: float, suggested_dt: float):
        super().__init__(
            f"CFL number {cfl:.4g} exceeds {CFL_LIMIT}; use dt <= {suggested_dt:.6g}"
        )
        self.cfl = cfl
        self.suggested_dt = suggested_dt


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("a grid needs at least two cells")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def symmetric(cls, half_width: float, n_cells: int) -> "Grid1D":
        return cls(-half_width, half_width, n_cells)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass(frozen=True, eq=False)
class GriddedDensities:
    """Cell averages ``values[j, h]`` of the H label densities at time ``time``."""

    grid: Grid1D
    values: np.ndarray
    time: float = 0.0
    label_space: LabelSpace = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        v = np.array(self.values, dtype=float, ndmin=2)
        if v.shape[0] != self.grid.n_cells:
            raise ValueError(f"expected {self.grid.n_cells} cells, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("densities must be finite")
        if np.any(v < 0):
            raise ValueError(f"densities must be nonnegative (min {v.min():.3e})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.label_space is None:
            object.__setattr__(self, "label_space", LabelSpace(v.shape[1]))

    @classmethod
    def from_cell_masses(cls, grid: Grid1D, masses, time: float = 0.0, label_space=None):
        return cls(grid, np.asarray(masses, dtype=float) / grid.dx, time, label_space)

    @property
    def H(self) -> int:
        return self.values.shape[1]

    @property
    def cell_masses(self) -> np.ndarray:
        return self.values * self.grid.dx

    @property
    def species_mass(self) -> np.ndarray:
        return self.cell_masses.sum(axis=0)

    @property
    def mass(self) -> float:
        return float(self.cell_masses.sum())

    def check_mass(self, tol: float = MASS_TOL) -> None:
        if abs(self.mass - 1.0) > tol:
            raise ValueError(f"total mass {self.mass!r} differs from 1 by more than {tol}")

    def marginals(self) -> list[DiscreteSpatialMeasure]:
        """One atom per cell centre with weight ``value * dx``, for each label."""
        pts = self.grid.centers[:, None]
        return [DiscreteSpatialMeasure(pts, self.cell_masses[:, h]) for h in range(self.H)]

    def with_values(self, values, time: float) -> "GriddedDensities":
        return GriddedDensities(self.grid, values, time, self.label_space)


# lifting


@dataclass(frozen=True, eq=False)
class LiftedDatum:
    """Weighted states ``sum_i m_i delta_(x_i, lam_i)`` with ``lam_i`` the density ratio."""

    points: np.ndarray
    labels: np.ndarray
    masses: np.ndarray
    cell_width: float = 0.0
    label_space: LabelSpace = field(default=None)  # type: ignore[assignment]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def as_empirical(self) -> EmpiricalMeasure:
        """The lifted measure itself, when all states carry equal mass."""
        if not np.allclose(self.masses, self.masses[0], rtol=1e-12, atol=0):
            raise ValueError("states carry unequal masses; use sample() instead")
        return EmpiricalMeasure(self.points, self.labels, self.label_space)

    def sample(self, N: int, rng: np.random.Generator) -> EmpiricalMeasure:
        """``N`` i.i.d. positions from the spatial law with their lifted label vectors.

        States of a gridded datum are spread uniformly over their cell.
        """
        p = self.masses / self.masses.sum()
        idx = rng.choice(p.size, size=N, p=p)
        x = self.points[idx].copy()
        if self.cell_width > 0:
            x += (rng.random((N, 1)) - 0.5) * self.cell_width
        return EmpiricalMeasure(x, self.labels[idx], self.label_space)


def lift_initial_datum(mu_bars) -> LiftedDatum:
    """Attach to each point the label vector ``(d mu^h / d mu)(x)``.

    ``mu_bars`` is a list of ``DiscreteSpatialMeasure`` (one per label) or a
    ``GriddedDensities``.  Points without mass are skipped.
    """
    if isinstance(mu_bars, GriddedDensities):
        masses = mu_bars.cell_masses
        total = masses.sum(axis=1)
        keep = total > 0
        _check_unit_mass(total.sum())
        lam = masses[keep] / total[keep, None]
        return LiftedDatum(
            mu_bars.grid.centers[keep, None], lam, total[keep], mu_bars.grid.dx, mu_bars.label_space
        )
    mu_bars = list(mu_bars)
    H = len(mu_bars)
    d = mu_bars[0].d
    pts = np.concatenate([m.points.reshape(len(m), d) for m in mu_bars])
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    masses = np.zeros((uniq.shape[0], H))
    start = 0
    for h, m in enumerate(mu_bars):
        np.add.at(masses[:, h], inv[start : start + len(m)], m.weights)
        start += len(m)
    total = masses.sum(axis=1)
    _check_unit_mass(total.sum())
    keep = total > 0
    return LiftedDatum(uniq[keep], masses[keep] / total[keep, None], total[keep], 0.0, LabelSpace(H))


def _check_unit_mass(m: float) -> None:
    if abs(m - 1.0) > MASS_TOL:
        raise ValueError(f"initial marginals carry total mass {m!r}, not 1")


# stepping


def _require_reducible(spec: ModelSpec) -> None:
    if getattr(spec, "mode", None) != LABEL_INDEPENDENT:
        raise ValueError(
            "the density system needs label-independent kernels: when the velocity "
            "depends on the agent's label vector the label marginals do not close "
            "into a system of equations"
        )
    if spec.d != 1:
        raise ValueError("the finite-volume solver is one dimensional")


def face_velocities(spec: ModelSpec, rho: GriddedDensities) -> np.ndarray:
    """Velocity at every face; the two outer faces are set to zero (no flux)."""
    g = rho.grid
    v = spec.velocity(g.edges[:, None], None, g.centers[:, None], rho.cell_masses)[:, 0]
    v[0] = v[-1] = 0.0
    return v


def cfl_number(v_faces: np.ndarray, dt: float, dx: float) -> float:
    """``dt/dx * max_j (v+_{j+1/2} - v-_{j-1/2})``; at most 1 keeps upwind positive."""
    out = np.maximum(v_faces[1:], 0.0) - np.minimum(v_faces[:-1], 0.0)
    return float(dt / dx * out.max())


def stable_dt(spec: ModelSpec, rho: GriddedDensities, cfl: float = CFL_LIMIT) -> float:
    """Largest time step meeting the CFL limit for the current densities."""
    v = face_velocities(spec, rho)
    rate = cfl_number(v, 1.0, rho.grid.dx)
    return math.inf if rate == 0 else cfl / rate


def _transport(rho: np.ndarray, v: np.ndarray, dt: float, dx: float) -> np.ndarray:
    # written as a combination with nonnegative coefficients, so positivity
    # holds exactly in floating point under the CFL limit
    lam = dt / dx
    vp = lam * np.maximum(v, 0.0)[:, None]
    vm = -lam * np.minimum(v, 0.0)[:, None]
    out = rho * (1.0 - (vp[1:] + vm[:-1]))
    out[1:] += vp[1:-1] * rho[:-1]
    out[:-1] += vm[1:-1] * rho[1:]
    return out


def pde_step(spec: ModelSpec, rho: GriddedDensities, dt: float) -> GriddedDensities:
    """One transport-then-reaction step from the frozen densities ``rho``."""
    _require_reducible(spec)
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = rho.grid
    v = face_velocities(spec, rho)
    cfl = cfl_number(v, dt, g.dx)
    if cfl > CFL_LIMIT:
        raise CFLError(cfl, dt * CFL_LIMIT / cfl)
    moved = _transport(rho.values, v, dt, g.dx)
    Q = spec.generator(g.centers[:, None], g.centers[:, None], rho.cell_masses)
    warn_large_step(Q, dt)
    S = transition_matrix(Q, dt)
    reacted = np.einsum("jhk,jh->jk", S, moved)
    return rho.with_values(reacted, rho.time + dt)


def pde_rhs(spec: ModelSpec, rho: GriddedDensities):
    """Velocity and reaction terms at cell centres.

    Returns ``(v, reaction)`` with ``v`` of shape (n_cells,) and
    ``reaction[j, h] = (Q(x_j)^T rho_j)_h``, the net switching gain of
    label h in cell j.
    """
    _require_reducible(spec)
    c = rho.grid.centers[:, None]
    v = spec.velocity(c, None, c, rho.cell_masses)[:, 0]
    Q = spec.generator(c, c, rho.cell_masses)
    return v, np.einsum("jhk,jh->jk", Q, rho.values)


def solve_pde(
    spec: ModelSpec, rho0: GriddedDensities, T: float, dt: float, record_every: int = 1
) -> list[GriddedDensities]:
    """Iterate ``pde_step`` up to ``T``; snapshots every ``record_every`` steps and at T."""
    if T < 0 or not dt > 0:
        raise ValueError("need T >= 0 and dt > 0")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T = {T} is not a multiple of dt = {dt}")
    out = [rho0]
    rho = rho0
    for i in range(1, n + 1):
        rho = pde_step(spec, rho, dt)
        rho = rho.with_values(rho.values, i * dt + rho0.time)
        if i % record_every == 0 or i == n:
            out.append(rho)
    return out


# domain sizing


def spatial_radius_bound(spec: ModelSpec, r_x: float, T: float) -> float:
    """Radius containing every position up to time ``T`` for initial support in ``[-r_x, r_x]``.

    Uses the support bound ``(r + M T) e^{2 M T} - 1`` with ``r = r_x + 1``
    (label vectors have BL norm 1), and for bounded kernels the sharper
    ``r_x + T sup|K|`` since the label masses sum to one.
    """
    const = spec.constants(r_x + 1.0)
    general = (r_x + 1.0 + const.M * T) * math.exp(2.0 * const.M * T) - 1.0
    sups = [row[0].sup_norm(math.inf) for row in spec.kernels]
    bounded = r_x + T * max(sups) if all(math.isfinite(s) for s in sups) else math.inf
    return min(general, bounded)


def edge_mass(rho: GriddedDensities, cells: int = 5) -> float:
    """Mass in the ``cells`` outermost cells on either side."""
    m = rho.cell_masses.sum(axis=1)
    return float(m[:cells].sum() + m[-cells:].sum())


# weak form


@dataclass(frozen=True)
class TestFunction:
    """A smooth compactly supported test function and its derivative."""

    __test__ = False  # not a pytest class

    center: float
    width: float

    def __call__(self, x):
        return bump(x, self.center, self.width)[0]

    def grad(self, x):
        return bump(x, self.center, self.width)[1]


def bump(x, center: float, width: float):
    """``exp(1 - 1/(1 - s^2))`` for ``|s| < 1``, ``s = (x - c)/w``, and its derivative."""
    s = (np.asarray(x, dtype=float) - center) / width
    inside = np.abs(s) < 1
    q = np.where(inside, 1.0 - s * s, 1.0)
    phi = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    dphi = np.where(inside, phi * (-2.0 * s / (q * q)) / width, 0.0)
    return phi, dphi


def bump_catalog(x_min: float, x_max: float, count: int = 5, width: float | None = None) -> list[TestFunction]:
    """Bumps with evenly spread centres inside ``[x_min, x_max]``."""
    L = x_max - x_min
    w = L / (count + 1) * 1.5 if width is None else width
    centers = x_min + L * (np.arange(count) + 1) / (count + 1)
    return [TestFunction(float(c), float(w)) for c in centers]


@dataclass
class WeakFormReport:
    """Residuals ``residual[n, f, h]`` at interior snapshot times."""

    times: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))


def weak_form_residual(
    snapshots: Sequence[GriddedDensities], spec: ModelSpec, test_fns: Sequence[TestFunction]
) -> WeakFormReport:
    """Defect of the weak formulation along a sequence of snapshots.

    For each interior snapshot, test function and label, compares the central
    difference of ``int phi d mu^h`` with
    ``int phi' v d mu^h + int phi (Q^T rho)_h dx``, both by midpoint quadrature.
    """
    if len(snapshots) < 3:
        raise ValueError("need at least three snapshots")
    grid = snapshots[0].grid
    x = grid.centers
    phi = np.stack([f(x) for f in test_fns])
    dphi = np.stack([f.grad(x) for f in test_fns])
    times = np.array([s.time for s in snapshots])
    integrals = np.stack([phi @ s.cell_masses for s in snapshots])
    res, mid = [], []
    for n in range(1, len(snapshots) - 1):
        lhs = (integrals[n + 1] - integrals[n - 1]) / (times[n + 1] - times[n - 1])
        v, react = pde_rhs(spec, snapshots[n])
        rhs = (dphi * v[None, :]) @ snapshots[n].cell_masses + phi @ (react * grid.dx)
        res.append(lhs - rhs)
        mid.append(times[n])
    return WeakFormReport(np.array(mid), np.array(res))


# CSV


def write_densities_csv(rho: GriddedDensities, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_center"] + [f"mu_{h + 1}" for h in range(rho.H)])
        for xc, row in zip(rho.grid.centers, rho.values):
            w.writerow([format(float(xc), ".17g")] + [format(float(v), ".17g") for v in row])
    return path


def read_densities_csv(path, time: float = 0.0) -> GriddedDensities:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xc = data[:, 0]
    dx = (xc[-1] - xc[0]) / (len(xc) - 1)
    grid = Grid1D(xc[0] - dx / 2, xc[-1] + dx / 2, len(xc))
    return GriddedDensities(grid, data[:, 1:], time)
