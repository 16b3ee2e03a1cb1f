"""Time integration of the N-agent system.

One step freezes the current population and its label marginals, then moves
every agent by an explicit Euler step in x and an exact exponential step in
lam::

    x_i'   = x_i + dt v(x_i, lam_i)
    lam_i' = exp(dt Q(x_i))^T lam_i

The exponential of a generator is a stochastic matrix, so label vectors stay
in the simplex for every ``dt > 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .measures import EmpiricalMeasure, bl_norm_many, w1_product, write_empirical_csv
from .model import ModelSpec
from .rates import transition_matrix, warn_large_step

__all__ = [
    "BlowUpError",
    "SimConfig",
    "StabilityReport",
    "SupportReport",
    "Trajectory",
    "simulate",
    "stability_envelope",
    "stability_experiment",
    "step",
    "support_bound",
    "support_bound_check",
]


class BlowUpError(FloatingPointError):
    """Raised when an agent position becomes non-finite."""


@dataclass(frozen=True)
class SimConfig:
    """Time stepping parameters.

    ``T`` must be a multiple of ``dt`` up to round-off; ``T = 0`` gives a
    trajectory holding only the initial population.
    """

    dt: float
    T: float
    record_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.T > 0 and self.dt > self.T * (1 + 1e-12):
            raise ValueError("dt must not exceed T")
        if self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"T = {self.T} is not a multiple of dt = {self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def record_steps(self) -> list[int]:
        """Step indices at which snapshots are taken (always includes 0 and the last)."""
        steps = list(range(0, self.n_steps + 1, self.record_every))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return steps


@dataclass
class Trajectory:
    """Recorded snapshots with per-snapshot monitors."""

    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    max_state_norm: list = field(default_factory=list)
    first_moment: list = field(default_factory=list)

    def record(self, t: float, P: EmpiricalMeasure) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("snapshot times must increase")
        norms = np.linalg.norm(P.positions, axis=1) + bl_norm_many(P.labels, P.label_space)
        self.times.append(float(t))
        self.snapshots.append(P)
        self.max_state_norm.append(float(norms.max()))
        self.first_moment.append(float(norms.mean()))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> EmpiricalMeasure:
        return self.snapshots[-1]

    def at(self, t: float, tol: float = 1e-9) -> EmpiricalMeasure:
        """Snapshot recorded at time ``t``."""
        for s, P in zip(self.times, self.snapshots):
            if abs(s - t) <= tol * max(1.0, abs(t)):
                return P
        raise KeyError(f"no snapshot at t = {t}")

    def write(self, directory) -> Path:
        """One CSV per snapshot plus ``trajectory.txt`` listing times and monitors."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        lines = ["index,time,max_state_norm,first_moment,file"]
        for i, (t, P) in enumerate(zip(self.times, self.snapshots)):
            name = f"snapshot_{i:05d}.csv"
            write_empirical_csv(P, directory / name)
            lines.append(
                f"{i},{t:.17g},{self.max_state_norm[i]:.17g},{self.first_moment[i]:.17g},{name}"
            )
        out = directory / "trajectory.txt"
        out.write_text("\n".join(lines) + "\n")
        return out


@dataclass(frozen=True)
class StepInfo:
    """Diagnostics of one step.

    ``raw_labels`` are the label vectors before clamping the transition
    matrices; ``min_raw`` and ``max_sum_error`` summarize them and the final
    label vectors respectively.
    """

    raw_labels: np.ndarray
    min_raw: float
    max_sum_error: float


def step(spec: ModelSpec, P: EmpiricalMeasure, dt: float, return_info: bool = False, t: float | None = None):
    """Advance the population by one step of length ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = spec.velocity_field(P)
    Q = spec.generator_field(P)
    warn_large_step(Q, dt)
    S, S_raw = transition_matrix(Q, dt, return_raw=True)
    x_new = P.positions + dt * v
    bad = ~np.all(np.isfinite(x_new), axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        when = "" if t is None else f" at t = {t + dt:.6g}"
        raise BlowUpError(f"agent {i} left every bounded set{when} (non-finite position)")
    lam_new = np.einsum("nhk,nh->nk", S, P.labels)
    P_new = EmpiricalMeasure(x_new, lam_new, P.label_space)
    if not return_info:
        return P_new
    raw = np.einsum("nhk,nh->nk", S_raw, P.labels)
    info = StepInfo(
        raw_labels=raw,
        min_raw=float(raw.min()),
        max_sum_error=float(np.max(np.abs(lam_new.sum(axis=1) - 1.0))),
    )
    return P_new, info


def simulate(spec: ModelSpec, P0: EmpiricalMeasure, cfg: SimConfig) -> Trajectory:
    """Run from ``t = 0`` to ``cfg.T``, recording every ``cfg.record_every`` steps."""
    traj = Trajectory()
    traj.record(0.0, P0)
    record = set(cfg.record_steps())
    P = P0
    for n in range(1, cfg.n_steps + 1):
        P = step(spec, P, cfg.dt, t=(n - 1) * cfg.dt)
        if n in record:
            traj.record(n * cfg.dt, P)
    return traj


# monitors


def support_bound(r: float, M: float, t) -> np.ndarray:
    """``(r + M t) exp(2 M t)``: radius in state space that contains the support at time t."""
    t = np.asarray(t, dtype=float)
    return (r + M * t) * np.exp(2.0 * M * t)


@dataclass
class SupportReport:
    times: np.ndarray
    max_state_norm: np.ndarray
    bound: np.ndarray

    @property
    def margin(self) -> np.ndarray:
        return self.bound - self.max_state_norm

    @property
    def min_margin(self) -> float:
        return float(self.margin.min())

    @property
    def violations(self) -> int:
        return int(np.sum(self.margin < 0))

    @property
    def ok(self) -> bool:
        return self.violations == 0


def support_bound_check(traj: Trajectory, r: float, M: float) -> SupportReport:
    """Compare the largest state norm of each snapshot with the support bound."""
    norms = np.asarray(traj.max_state_norm)
    if norms[0] > r * (1 + 1e-12):
        raise ValueError(f"r = {r} is smaller than the initial max state norm {norms[0]}")
    times = np.asarray(traj.times)
    return SupportReport(times, norms, support_bound(r, M, times))


def stability_envelope(L: float, t) -> np.ndarray:
    """``exp(L t + exp(L t) - 1)``, the growth factor of W1 between two solutions."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(L * t + np.expm1(L * t))


@dataclass
class StabilityReport:
    times: np.ndarray
    w1: np.ndarray
    envelope: np.ndarray
    slack: float = 0.05

    @property
    def ratio(self) -> np.ndarray:
        """``W1(t) / (envelope(t) W1(0))``; zero where both sides vanish."""
        bound = self.envelope * self.w1[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(bound > 0, self.w1 / bound, np.where(self.w1 > 0, np.inf, 0.0))
        return r

    @property
    def max_ratio(self) -> float:
        return float(self.ratio.max())

    @property
    def ok(self) -> bool:
        return self.max_ratio <= 1.0 + self.slack


def stability_experiment(
    spec: ModelSpec, P0a: EmpiricalMeasure, P0b: EmpiricalMeasure, cfg: SimConfig, L_R: float
) -> StabilityReport:
    """Run two populations side by side and compare their W1 distance with the envelope."""
    if P0a.N != P0b.N:
        raise ValueError("the two initial populations must have the same size")
    ta = simulate(spec, P0a, cfg)
    tb = simulate(spec, P0b, cfg)
    w1 = np.array([w1_product(a, b) for a, b in zip(ta.snapshots, tb.snapshots)])
    times = np.asarray(ta.times)
    return StabilityReport(times, w1, stability_envelope(L_R, times))


def mirror(P: EmpiricalMeasure) -> EmpiricalMeasure:
    """Reflect all positions through the origin."""
    return EmpiricalMeasure(-P.positions, P.labels, P.label_space)

