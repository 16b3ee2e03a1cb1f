"""Laws for initial populations.

Positions follow a uniform or Gaussian law truncated to the ball ``B_r``
around ``center``.  Label vectors are Dirichlet(1, ..., 1), a fixed vector,
a smooth deterministic profile ``softmax(offset + slope * x_1)``, or (for
labels discretizing [0, 1]) the cell masses of the density
``exp(kappa u)`` with ``kappa = kappa0 + kappa1 * x_1``.

Sampling i.i.d. from the law gives the random initial populations of a
convergence study.  In d = 1, ``quantile_sample`` places agents at the
quantiles of the law, which approximates it at rate 1/N and serves as a
reference population, and ``cell_masses`` integrates each label's density
over the cells of a grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .measures import EmpiricalMeasure, LabelSpace

__all__ = ["InitialLaw", "exponential_label_cells"]

POSITION_LAWS = ("uniform", "gaussian")
LABEL_LAWS = ("dirichlet", "fixed", "profile", "exponential")


@dataclass(frozen=True, eq=False)
class InitialLaw:
    """Law of ``(x, lam)`` for one agent.

    Parameters
    ----------
    d, H : int
    position : {"uniform", "gaussian"}
        Uniform on the ball, or isotropic Gaussian of standard deviation
        ``scale`` conditioned on the ball.
    radius : float
        Truncation radius ``r`` of the spatial support.
    center : array_like, optional
    scale : float
        Standard deviation of the Gaussian law.
    labels : {"dirichlet", "fixed", "profile", "exponential"}
    label_vector : array_like, optional
        The vector used by ``labels="fixed"``.
    offset, slope : array_like, optional
        Profile parameters, ``lam_h(x) ∝ exp(offset_h + slope_h * x_1)``.
    kappa : tuple of two floats
        Parameters of the exponential label law.
    """

    d: int = 1
    H: int = 2
    position: str = "uniform"
    radius: float = 1.0
    center: np.ndarray = field(default=None)  # type: ignore[assignment]
    scale: float = 1.0
    labels: str = "dirichlet"
    label_vector: np.ndarray = field(default=None)  # type: ignore[assignment]
    offset: np.ndarray = field(default=None)  # type: ignore[assignment]
    slope: np.ndarray = field(default=None)  # type: ignore[assignment]
    kappa: tuple = (0.0, 1.0)
    label_space: LabelSpace = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.position not in POSITION_LAWS:
            raise ValueError(f"position law must be one of {POSITION_LAWS}")
        if self.labels not in LABEL_LAWS:
            raise ValueError(f"label law must be one of {LABEL_LAWS}")
        if not self.radius > 0 or not self.scale > 0:
            raise ValueError("radius and scale must be positive")
        center = np.zeros(self.d) if self.center is None else np.asarray(self.center, float).reshape(self.d)
        object.__setattr__(self, "center", center)
        vec = np.full(self.H, 1.0 / self.H) if self.label_vector is None else np.asarray(self.label_vector, float)
        if vec.shape != (self.H,) or np.any(vec < 0) or abs(vec.sum() - 1) > 1e-12:
            raise ValueError("label_vector must be a probability vector of length H")
        object.__setattr__(self, "label_vector", vec)
        for name in ("offset", "slope"):
            val = getattr(self, name)
            arr = np.zeros(self.H) if val is None else np.asarray(val, float).reshape(self.H)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "kappa", tuple(float(k) for k in self.kappa))
        if self.label_space is None:
            space = LabelSpace.midpoint_nodes(self.H) if self.labels == "exponential" else LabelSpace(self.H)
            object.__setattr__(self, "label_space", space)

    @property
    def deterministic_labels(self) -> bool:
        return self.labels != "dirichlet"

    @property
    def support_radius(self) -> float:
        """Largest ``|x|`` of the spatial support."""
        return float(np.linalg.norm(self.center)) + self.radius

    def label_profile(self, x) -> np.ndarray:
        """Label vectors attached to positions ``x`` (n, d) for deterministic laws."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.labels == "fixed":
            return np.broadcast_to(self.label_vector, (x.shape[0], self.H)).copy()
        if self.labels == "profile":
            return special.softmax(self.offset[None, :] + self.slope[None, :] * x[:, :1], axis=1)
        if self.labels == "exponential":
            return exponential_label_cells(x, self.H, *self.kappa)
        raise ValueError("Dirichlet labels have no deterministic profile")

    def _positions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.d == 1:
            return self._ppf(rng.random(n))[:, None]
        out = np.empty((0, self.d))
        while out.shape[0] < n:
            if self.position == "uniform":
                z = rng.uniform(-self.radius, self.radius, size=(2 * n, self.d))
            else:
                z = rng.normal(scale=self.scale, size=(2 * n, self.d))
            out = np.concatenate([out, z[np.linalg.norm(z, axis=1) <= self.radius]])
        return out[:n] + self.center

    def _ppf(self, q: np.ndarray) -> np.ndarray:
        c, r = float(self.center[0]), self.radius
        if self.position == "uniform":
            return c - r + 2.0 * r * q
        return c + stats.truncnorm.ppf(q, -r / self.scale, r / self.scale, scale=self.scale)

    def _pdf(self, x: np.ndarray) -> np.ndarray:
        c, r = float(self.center[0]), self.radius
        if self.position == "uniform":
            return np.where(np.abs(x - c) <= r, 0.5 / r, 0.0)
        return stats.truncnorm.pdf(x - c, -r / self.scale, r / self.scale, scale=self.scale)

    def sample(self, N: int, rng: np.random.Generator) -> EmpiricalMeasure:
        """``N`` i.i.d. agents."""
        x = self._positions(N, rng)
        if self.labels == "dirichlet":
            lam = rng.dirichlet(np.ones(self.H), size=N)
        else:
            lam = self.label_profile(x)
        return EmpiricalMeasure(x, lam, self.label_space)

    def quantile_sample(self, N: int) -> EmpiricalMeasure:
        """Agents at the quantiles ``(i - 1/2)/N`` of the position law (d = 1)."""
        if self.d != 1 or not self.deterministic_labels:
            raise ValueError("quantile sampling needs d = 1 and deterministic labels")
        x = self._ppf((np.arange(N) + 0.5) / N)[:, None]
        return EmpiricalMeasure(x, self.label_profile(x), self.label_space)

    def cell_masses(self, edges, points_per_cell: int = 8) -> np.ndarray:
        """Mass of each label in each cell ``[edges[j], edges[j+1]]`` (d = 1).

        Integrates density times profile with Gauss-Legendre quadrature and
        rescales so that the total mass is one.  Returns shape (n_cells, H).
        """
        if self.d != 1 or not self.deterministic_labels:
            raise ValueError("cell masses need d = 1 and deterministic labels")
        edges = np.asarray(edges, dtype=float)
        nodes, wts = np.polynomial.legendre.leggauss(points_per_cell)
        lo, hi = edges[:-1, None], edges[1:, None]
        xq = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes[None, :]
        dens = self._pdf(xq)
        lam = self.label_profile(xq.reshape(-1, 1)).reshape(*xq.shape, self.H)
        masses = np.einsum("jq,q,jqh->jh", dens * 0.5 * (hi - lo), wts, lam)
        return masses / masses.sum()


def exponential_label_cells(x, H: int, k0: float = 0.0, k1: float = 1.0) -> np.ndarray:
    """Cell masses of the label density ``∝ exp(kappa u)`` on [0, 1], ``kappa = k0 + k1 x_1``.

    Masses are exact integrals over ``[(m-1)/H, m/H]``, so merging adjacent
    pairs of the 2H-cell vector reproduces the H-cell one.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    kappa = k0 + k1 * x[:, :1]
    edges = np.arange(H + 1) / H
    small = np.abs(kappa) < 1e-12
    safe = np.where(small, 1.0, kappa)
    prim = np.where(small, edges[None, :], np.expm1(safe * edges[None, :]) / safe)
    cells = np.diff(prim, axis=1)
    return cells / cells.sum(axis=1, keepdims=True)
