"""State space, atomic measures and the metrics used throughout the package.

An agent is a pair ``(x, lam)`` with ``x`` a point of R^d and ``lam`` a
probability vector over a finite, ordered label set.  Label sets live on the
real line (integer indices by default, quadrature nodes for discretized
continua) and carry the induced distance ``|p_h - p_k|``.

Metrics
-------
``bl_norm``
    bounded-Lipschitz norm of a signed label measure, i.e. the supremum of
    ``<xi, phi>`` over ``|phi| <= 1`` and ``Lip(phi) <= 1``.
``w1_spatial``
    Wasserstein-1 distance between equal-mass atomic measures on R^d.
``w1_product``
    Wasserstein-1 distance between empirical measures on R^d x P(U) with
    ground cost ``|x - x'| + bl_norm(lam - lam')``.
``bl_distance``
    bounded-Lipschitz distance between atomic measures of possibly
    different total mass.

All metrics are computed exactly (linear programming / network simplex),
never by entropic smoothing.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

__all__ = [
    "ATOM_CAP",
    "AtomCapError",
    "AgentState",
    "DiscreteSpatialMeasure",
    "EmpiricalMeasure",
    "LabelSpace",
    "bl_distance",
    "bl_norm",
    "bl_norm_many",
    "first_moment",
    "label_marginal",
    "label_marginals",
    "read_empirical_csv",
    "read_spatial_csv",
    "simplex_vector",
    "state_norm",
    "w1_product",
    "w1_spatial",
    "write_empirical_csv",
    "write_spatial_csv",
]

#: Largest atom count accepted by the exact transport solvers.
ATOM_CAP = 2048
#: Simplex vectors within this distance of unit mass are renormalized.
SIMPLEX_TOL = 1e-9
#: Absolute mass mismatch tolerated by ``w1_spatial``.
MASS_TOL = 1e-10
BL_LP_MAX_LABELS = 64


class AtomCapError(ValueError):
    """Raised when an exact transport problem exceeds :data:`ATOM_CAP`."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabelSpace:
    """Finite ordered label set embedded in the real line.

    Parameters
    ----------
    H : int
        Number of labels.
    points : array_like, optional
        Coordinates of the labels.  Defaults to ``1, 2, ..., H`` so that the
        distance between labels ``h`` and ``k`` is ``|h - k|``.
    names : sequence of str, optional
        Display names, used by config files and reports.
    """

    H: int
    points: np.ndarray = field(default=None)  # type: ignore[assignment]
    names: tuple[str, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if int(self.H) < 1:
            raise ValueError("a label space needs at least one label")
        object.__setattr__(self, "H", int(self.H))
        pts = np.arange(1, self.H + 1, dtype=float) if self.points is None else self.points
        pts = np.asarray(pts, dtype=float).reshape(-1)
        if pts.size != self.H:
            raise ValueError(f"expected {self.H} label points, got {pts.size}")
        if self.H > 1 and np.any(np.diff(pts) <= 0):
            raise ValueError("label points must be strictly increasing")
        object.__setattr__(self, "points", _readonly(pts))
        names = self.names
        if names is None:
            names = tuple(str(h + 1) for h in range(self.H))
        if len(names) != self.H:
            raise ValueError("one name per label is required")
        object.__setattr__(self, "names", tuple(str(n) for n in names))

    @classmethod
    def midpoint_nodes(cls, H: int) -> "LabelSpace":
        """Midpoint quadrature nodes ``(m - 1/2)/H`` of the unit interval."""
        return cls(H, (np.arange(H) + 0.5) / H)

    def distance_matrix(self) -> np.ndarray:
        return np.abs(self.points[:, None] - self.points[None, :])

    @property
    def gap(self) -> float | None:
        """Common spacing of the label points, or None if unevenly spaced."""
        if self.H == 1:
            return 1.0
        d = np.diff(self.points)
        if np.allclose(d, d[0], rtol=1e-12, atol=0.0):
            return float(d[0])
        return None

    @property
    def min_gap(self) -> float:
        return 1.0 if self.H == 1 else float(np.min(np.diff(self.points)))

    def index(self, label: int | str) -> int:
        """Resolve a label given as a 0-based index or as a name."""
        if isinstance(label, str):
            if label in self.names:
                return self.names.index(label)
            raise KeyError(f"unknown label {label!r}")
        h = int(label)
        if not 0 <= h < self.H:
            raise IndexError(f"label index {h} out of range for H={self.H}")
        return h

    def same_as(self, other: "LabelSpace") -> bool:
        return self.H == other.H and np.array_equal(self.points, other.points)


def simplex_vector(values: Iterable[float], tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a probability vector; renormalize round-off, reject the rest."""
    lam = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    return _as_simplex_rows(lam.reshape(1, -1), tol)[0]


def _as_simplex_rows(lam: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    lam = np.array(lam, dtype=float, ndmin=2, copy=True)
    if not np.all(np.isfinite(lam)):
        raise ValueError("label vectors must be finite")
    if np.any(lam < 0):
        raise ValueError(f"label vectors must be nonnegative (min entry {lam.min():.3e})")
    s = lam.sum(axis=1)
    bad = np.abs(s - 1.0) > tol
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"label vector {i} sums to {s[i]!r}, not 1")
    # rows already normalized to round-off are left alone so that renormalization is idempotent
    fix = np.abs(s - 1.0) > 4.0 * np.finfo(float).eps * lam.shape[1]
    lam[fix] /= s[fix, None]
    return lam


@dataclass(frozen=True, eq=False)
class AgentState:
    """A single agent ``y = (x, lam)``."""

    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_1d(np.asarray(self.x, dtype=float))))
        object.__setattr__(self, "lam", _readonly(simplex_vector(self.lam)))

    @property
    def d(self) -> int:
        return self.x.size

    @property
    def H(self) -> int:
        return self.lam.size


class EmpiricalMeasure:
    """Uniform atomic probability measure ``(1/N) sum_i delta_(x_i, lam_i)``.

    Stored column-wise: ``positions`` has shape ``(N, d)`` and ``labels`` has
    shape ``(N, H)``.  Both arrays are read-only.
    """

    __slots__ = ("positions", "labels", "label_space")

    def __init__(self, positions, labels, label_space: LabelSpace | None = None):
        x = np.array(positions, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        lam = _as_simplex_rows(labels)
        if x.ndim != 2 or x.shape[0] != lam.shape[0]:
            raise ValueError(f"positions {x.shape} and labels {lam.shape} disagree on N")
        if x.shape[0] < 1:
            raise ValueError("an empirical measure needs at least one agent")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        if label_space is None:
            label_space = LabelSpace(lam.shape[1])
        elif label_space.H != lam.shape[1]:
            raise ValueError("label space size does not match label vectors")
        x.setflags(write=False)
        lam.setflags(write=False)
        self.positions = x
        self.labels = lam
        self.label_space = label_space

    @classmethod
    def from_agents(cls, agents: Sequence[AgentState], label_space: LabelSpace | None = None):
        return cls(np.stack([a.x for a in agents]), np.stack([a.lam for a in agents]), label_space)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def H(self) -> int:
        return self.labels.shape[1]

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, i: int) -> AgentState:
        return AgentState(self.positions[i], self.labels[i])

    def __iter__(self) -> Iterator[AgentState]:
        for i in range(self.N):
            yield self[i]

    @property
    def agents(self) -> list[AgentState]:
        return list(self)

    def subsample(self, n: int, rng: np.random.Generator) -> "EmpiricalMeasure":
        """Uniform subsample of ``n`` distinct agents (the measure itself if n >= N)."""
        if n >= self.N:
            return self
        idx = np.sort(rng.choice(self.N, size=n, replace=False))
        return EmpiricalMeasure(self.positions[idx], self.labels[idx], self.label_space)

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(N={self.N}, d={self.d}, H={self.H})"


class DiscreteSpatialMeasure:
    """Finite nonnegative atomic measure ``sum_i w_i delta_{x_i}`` on R^d."""

    __slots__ = ("points", "weights")

    def __init__(self, points, weights):
        x = np.array(points, dtype=float, copy=True)
        w = np.array(weights, dtype=float, copy=True).reshape(-1)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != w.size:
            raise ValueError("one weight per atom is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if not np.all(np.isfinite(x)):
            raise ValueError("atom positions must be finite")
        x.setflags(write=False)
        w.setflags(write=False)
        self.points = x
        self.weights = w

    @classmethod
    def empty(cls, d: int = 1) -> "DiscreteSpatialMeasure":
        return cls(np.zeros((0, d)), np.zeros(0))

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.weights.size

    def first_moment(self) -> float:
        return float(self.weights @ np.linalg.norm(self.points, axis=1)) if len(self) else 0.0

    def integrate(self, f) -> float:
        """Integral of a vectorized function of the positions."""
        return float(self.weights @ np.asarray(f(self.points), dtype=float).reshape(-1))

    def __repr__(self) -> str:
        return f"DiscreteSpatialMeasure(n={len(self)}, d={self.d}, mass={self.mass:.6g})"


# ---------------------------------------------------------------------------
# bounded-Lipschitz norm on label measures


def bl_norm(xi, labels: LabelSpace | None = None) -> float:
    """Bounded-Lipschitz norm of a signed measure on a finite label set.

    Solves ``max sum_h phi_h xi_h`` subject to ``|phi_h| <= 1`` and
    ``phi_h - phi_k <= dist(h, k)`` for every ordered pair, with the HiGHS
    dual simplex so the optimizer is a vertex of the feasible polytope.

    Examples
    --------
    >>> bl_norm([1.0, 0.0])
    1.0
    >>> round(bl_norm([0.3, -0.3]), 12)
    0.3
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    H = xi.size
    if labels is None:
        labels = LabelSpace(H)
    if labels.H != H:
        raise ValueError("measure and label space sizes differ")
    if not np.all(np.isfinite(xi)):
        raise ValueError("bl_norm needs finite values")
    if H > BL_LP_MAX_LABELS:
        raise ValueError(f"bl_norm is limited to H <= {BL_LP_MAX_LABELS}")
    if not np.any(xi):
        return 0.0
    if H == 1:
        return float(abs(xi[0]))
    D = labels.distance_matrix()
    h, k = np.nonzero(~np.eye(H, dtype=bool))
    A = np.zeros((h.size, H))
    A[np.arange(h.size), h] = 1.0
    A[np.arange(h.size), k] = -1.0
    # unit-scale objective and tight tolerances: HiGHS treats costs near 1e-7 as zero by default
    scale = float(np.max(np.abs(xi)))
    res = linprog(
        -xi / scale, A_ub=A, b_ub=D[h, k], bounds=[(-1.0, 1.0)] * H, method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"bl_norm LP failed: {res.message}")
    phi = np.clip(res.x, -1.0, 1.0)
    return float(max(xi @ phi, 0.0))


def _lattice(gap: float) -> tuple[np.ndarray, np.ndarray]:
    # LP vertices take values in (-1 + gap Z) u (1 + gap Z) intersected with [-1, 1].
    n = int(np.floor(2.0 / gap + 1e-9))
    cand = np.sort(np.concatenate([-1.0 + gap * np.arange(n + 1), 1.0 - gap * np.arange(n + 1)]))
    keep = np.concatenate([[True], np.diff(cand) > 1e-12])
    levels = np.clip(cand[keep], -1.0, 1.0)
    near = np.abs(levels[:, None] - levels[None, :]) <= gap * (1 + 1e-9)
    width = int(near.sum(axis=1).max())
    nbr = np.empty((levels.size, width), dtype=int)
    for i, row in enumerate(near):
        j = np.flatnonzero(row)
        nbr[i, : j.size] = j
        nbr[i, j.size :] = i
    return levels, nbr


def bl_norm_many(xi, labels: LabelSpace | None = None, chunk: int = 1 << 16) -> np.ndarray:
    """Row-wise :func:`bl_norm` for a batch of shape ``(B, H)``.

    For evenly spaced labels this runs an exact dynamic program over the
    finite set of values an optimal vertex can take; otherwise it falls back
    to one LP per row.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[None, :]
    B, H = xi.shape
    if labels is None:
        labels = LabelSpace(H)
    if H == 1:
        return np.abs(xi[:, 0])
    gap = labels.gap
    if gap is None:
        return np.array([bl_norm(row, labels) for row in xi])
    levels, nbr = _lattice(gap)
    out = np.empty(B)
    for s in range(0, B, chunk):
        blk = xi[s : s + chunk]
        V = blk[:, :1] * levels[None, :]
        for i in range(1, H):
            V = blk[:, i : i + 1] * levels[None, :] + V[:, nbr].max(axis=2)
        out[s : s + chunk] = V.max(axis=1)
    return np.maximum(out, 0.0)


def state_norm(y: AgentState, labels: LabelSpace | None = None) -> float:
    """Product norm ``|x| + ||lam||_BL`` of an agent state."""
    return float(np.linalg.norm(y.x)) + bl_norm(y.lam, labels)


def first_moment(P: EmpiricalMeasure) -> float:
    """Mean state norm of the agents of ``P``."""
    bl = bl_norm_many(P.labels, P.label_space)
    return float(np.mean(np.linalg.norm(P.positions, axis=1) + bl))


# ---------------------------------------------------------------------------
# transport metrics


def _emd2(a: np.ndarray, b: np.ndarray, M: np.ndarray) -> float:
    for backend in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{backend}", "1")
    import ot

    # the solver misbehaves on near-underflow masses; the cost is homogeneous, so solve at unit mass
    scale = float(a.sum())
    a = np.asarray(a, dtype=np.float64) / scale
    b = np.asarray(b, dtype=np.float64) / float(b.sum())
    M = np.ascontiguousarray(M, dtype=np.float64)
    cost, log = ot.emd2(a, b, M, numItermax=50_000_000, log=True)
    if log.get("warning"):
        raise RuntimeError(f"network simplex did not converge: {log['warning']}")
    return float(cost) * scale


def _check_cap(n: int, what: str) -> None:
    if n > ATOM_CAP:
        raise AtomCapError(
            f"{what} has {n} atoms, above the exact-transport cap of {ATOM_CAP}; "
            "subsample the measures before evaluating the metric"
        )


def w1_spatial(mu: DiscreteSpatialMeasure, nu: DiscreteSpatialMeasure) -> float:
    """Exact Wasserstein-1 distance between equal-mass atomic measures.

    Raises
    ------
    ValueError
        If the total masses differ by more than 1e-10; use
        :func:`bl_distance` for measures of different mass.
    """
    if abs(mu.mass - nu.mass) > MASS_TOL:
        raise ValueError(
            f"unequal masses ({mu.mass!r} vs {nu.mass!r}); use bl_distance for unequal masses"
        )
    _check_cap(len(mu), "first measure")
    _check_cap(len(nu), "second measure")
    if mu.mass == 0.0:
        return 0.0
    a = mu.weights
    b = nu.weights * (a.sum() / nu.weights.sum())
    return _emd2(a, b, cdist(mu.points, nu.points))


def w1_product(P: EmpiricalMeasure, Q: EmpiricalMeasure) -> float:
    """Exact W1 on R^d x P(U) with ground cost ``|x - x'| + bl_norm(lam - lam')``."""
    if P.d != Q.d or not P.label_space.same_as(Q.label_space):
        raise ValueError("measures live on different state spaces")
    _check_cap(P.N + Q.N, "the pair of empirical measures")
    C = product_cost_matrix(P, Q)
    return _emd2(np.full(P.N, 1.0 / P.N), np.full(Q.N, 1.0 / Q.N), C)


def product_cost_matrix(P: EmpiricalMeasure, Q: EmpiricalMeasure) -> np.ndarray:
    """Ground-cost matrix ``|x_i - x'_j| + bl_norm(lam_i - lam'_j)``."""
    dx = cdist(P.positions, Q.positions)
    diff = (P.labels[:, None, :] - Q.labels[None, :, :]).reshape(-1, P.H)
    return dx + bl_norm_many(diff, P.label_space).reshape(P.N, Q.N)


def bl_distance(mu: DiscreteSpatialMeasure, nu: DiscreteSpatialMeasure) -> float:
    """Bounded-Lipschitz distance between atomic measures of any masses.

    The dual problem over ``|phi| <= 1``, ``Lip(phi) <= 1`` equals a balanced
    transport problem on the support plus one auxiliary point at distance 1
    from every atom, with ground cost ``min(|x - x'|, 2)``; the mass deficit is
    placed on the auxiliary point.  Solved exactly by network simplex.
    """
    d = mu.d if len(mu) else nu.d
    n, m = len(mu), len(nu)
    _check_cap(n + m, "the pair of spatial measures")
    dm = mu.mass - nu.mass
    a = np.concatenate([mu.weights, [max(-dm, 0.0)]])
    b = np.concatenate([nu.weights, [max(dm, 0.0)]])
    if a.sum() == 0.0:
        return 0.0
    C = np.ones((n + 1, m + 1))
    C[-1, -1] = 0.0
    if n and m:
        C[:n, :m] = np.minimum(cdist(mu.points.reshape(n, d), nu.points.reshape(m, d)), 2.0)
    b = b * (a.sum() / b.sum())
    return _emd2(a, b, C)


def label_marginal(P: EmpiricalMeasure, h: int | str) -> DiscreteSpatialMeasure:
    """Spatial distribution of label ``h``: atoms ``x_i`` with weight ``lam_{i,h}/N``."""
    h = P.label_space.index(h)
    return DiscreteSpatialMeasure(P.positions, P.labels[:, h] / P.N)


def label_marginals(P: EmpiricalMeasure) -> list[DiscreteSpatialMeasure]:
    return [label_marginal(P, h) for h in range(P.H)]


# ---------------------------------------------------------------------------
# CSV serialization: one row per atom


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_empirical_csv(P: EmpiricalMeasure, path) -> Path:
    path = Path(path)
    header = [f"x_{i + 1}" for i in range(P.d)] + [f"lambda_{h + 1}" for h in range(P.H)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, lam in zip(P.positions, P.labels):
            w.writerow([_fmt(v) for v in x] + [_fmt(v) for v in lam])
    return path


def read_empirical_csv(path, label_space: LabelSpace | None = None) -> EmpiricalMeasure:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    d = sum(1 for c in header if c.startswith("x_"))
    return EmpiricalMeasure(data[:, :d], data[:, d:], label_space)


def write_spatial_csv(mu: DiscreteSpatialMeasure, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{i + 1}" for i in range(mu.d)] + ["weight"])
        for x, wt in zip(mu.points, mu.weights):
            w.writerow([_fmt(v) for v in x] + [_fmt(wt)])
    return path


def read_spatial_csv(path) -> DiscreteSpatialMeasure:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return DiscreteSpatialMeasure(data[:, :-1], data[:, -1])
