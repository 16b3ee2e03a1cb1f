"""Label-switching rates and generator (Q-)matrices.

A generator ``Q`` has nonnegative off-diagonal entries ``q_hk`` (rate of
switching from label h to label k) and zero row sums.  Label probabilities
evolve by ``dlam/dt = Q^T lam`` and over a step of length ``dt`` by
``lam' = exp(dt Q)^T lam``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .measures import DiscreteSpatialMeasure, LabelSpace

__all__ = [
    "GAIN_LIPSCHITZ",
    "RateSpec",
    "apply_adjoint",
    "check_q_matrix",
    "mollified_densities",
    "transition_matrix",
]

#: Global Lipschitz constant of the spatial gain 1 / (1 + |x|^2), i.e. 3 sqrt(3) / 8.
GAIN_LIPSCHITZ = 3.0 * math.sqrt(3.0) / 8.0
_TAYLOR_DEGREE = 14


def _bump(r2: np.ndarray, sigma: float) -> np.ndarray:
    if math.isinf(sigma):
        return np.ones_like(r2)
    return np.exp(-r2 / (2.0 * sigma * sigma))


def mollified_densities(x_eval, atoms, weights, sigma: float) -> np.ndarray:
    """``(eta_sigma * mu^l)(x)`` for every evaluation point and label.

    ``eta_sigma(z) = exp(-|z|^2 / (2 sigma^2))`` has sup 1; ``sigma = inf``
    gives ``eta = 1`` (plain label masses).  ``weights`` has shape ``(M, H)``
    and holds the mass each atom carries for each label.
    """
    x_eval = np.atleast_2d(x_eval)
    atoms = np.atleast_2d(atoms)
    r2 = np.sum((x_eval[:, None, :] - atoms[None, :, :]) ** 2, axis=-1)
    return _bump(r2, sigma) @ weights


@dataclass(frozen=True, eq=False)
class RateSpec:
    """Switching rates ``alpha_hk(x, mu^1..mu^H)``.

    For every ordered pair h != k::

        alpha_hk = g(x) * (base[h,k] + sum_l influence[h,k,l] * (eta_{width[h,k]} * mu^l)(x))

    with ``g(x) = 1 / (1 + |x|^2)`` where ``spatial_gain[h,k]`` is set and
    ``g = 1`` otherwise.  Diagonal entries of the parameter arrays are ignored.
    """

    base: np.ndarray
    influence: np.ndarray = field(default=None)  # type: ignore[assignment]
    width: np.ndarray = field(default=None)  # type: ignore[assignment]
    spatial_gain: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        base = np.array(self.base, dtype=float, ndmin=2)
        H = base.shape[0]
        if base.shape != (H, H):
            raise ValueError("base rates must form an H x H array")
        infl = np.zeros((H, H, H)) if self.influence is None else np.array(self.influence, dtype=float)
        width = np.ones((H, H)) if self.width is None else np.broadcast_to(np.array(self.width, dtype=float), (H, H)).copy()
        gain = np.zeros((H, H), bool) if self.spatial_gain is None else np.broadcast_to(np.array(self.spatial_gain, dtype=bool), (H, H)).copy()
        if infl.shape != (H, H, H):
            raise ValueError("influence coefficients must have shape (H, H, H)")
        off = ~np.eye(H, dtype=bool)
        if np.any(base[off] < 0) or np.any(infl[off] < 0):
            raise ValueError("rates need nonnegative base and influence coefficients")
        if np.any(width[off] <= 0):
            raise ValueError("mollifier widths must be positive")
        base[~off] = 0.0
        infl[~off] = 0.0
        for name, arr in (("base", base), ("influence", infl), ("width", width), ("spatial_gain", gain)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, H: int) -> "RateSpec":
        return cls(np.zeros((H, H)))

    @classmethod
    def constant(cls, rates) -> "RateSpec":
        return cls(np.asarray(rates, dtype=float))

    @property
    def H(self) -> int:
        return self.base.shape[0]

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.base) or np.any(self.influence))

    def evaluate(self, x_eval, atoms, weights) -> np.ndarray:
        """Generator matrices at each evaluation point, shape ``(n, H, H)``.

        ``atoms``/``weights`` describe the label marginals as atoms at
        positions ``atoms`` (M, d) carrying mass ``weights[:, l]`` of label l.
        """
        x_eval = np.atleast_2d(np.asarray(x_eval, dtype=float))
        n, H = x_eval.shape[0], self.H
        rates = np.broadcast_to(self.base, (n, H, H)).copy()
        active = np.any(self.influence != 0, axis=2)
        for sigma in np.unique(self.width[active]):
            dens = mollified_densities(x_eval, atoms, weights, sigma)
            pairs = active & (self.width == sigma)
            hk = np.nonzero(pairs)
            rates[:, hk[0], hk[1]] += dens @ self.influence[hk].T
        if np.any(self.spatial_gain):
            g = 1.0 / (1.0 + np.sum(x_eval**2, axis=1))
            rates = np.where(self.spatial_gain[None], rates * g[:, None, None], rates)
        idx = np.arange(H)
        rates[:, idx, idx] = 0.0
        rates[:, idx, idx] = -rates.sum(axis=2)
        return rates

    # analytic constants; the marginals are assumed to have total mass 1

    def pair_bound(self) -> np.ndarray:
        """Upper bound of each ``alpha_hk`` over all states."""
        return self.base + self.influence.max(axis=2)

    def departure_bound(self) -> float:
        """``delta``: bound on every total departure rate ``-q_hh``."""
        return float(self.pair_bound().sum(axis=1).max())

    def lipschitz_x(self) -> np.ndarray:
        """Per-pair Lipschitz constant of ``alpha_hk`` in x."""
        lip_eta = np.where(np.isinf(self.width), 0.0, math.exp(-0.5) / self.width)
        lip_gain = np.where(self.spatial_gain, GAIN_LIPSCHITZ, 0.0)
        return lip_gain * self.pair_bound() + self.influence.max(axis=2) * lip_eta

    def lipschitz_w1(self, labels: LabelSpace) -> np.ndarray:
        """Per-pair Lipschitz constant of ``alpha_hk`` in the measure (W1 on states)."""
        lip_eta = np.where(np.isinf(self.width), 0.0, math.exp(-0.5) / self.width)
        lip_lab = max(1.0, 1.0 / labels.min_gap)
        return self.influence.sum(axis=2) * np.maximum(lip_eta, lip_lab)

    def lipschitz_bl(self) -> np.ndarray:
        """Per-pair constant w.r.t. ``sum_l ||mu^l_1 - mu^l_2||_BL``."""
        lip_eta = np.where(np.isinf(self.width), 0.0, math.exp(-0.5) / self.width)
        return self.influence.max(axis=2) * np.maximum(1.0, lip_eta)


def check_q_matrix(Q, tol: float = 1e-12) -> np.ndarray:
    """Return ``Q`` as an array after checking the generator conditions."""
    Q = np.asarray(Q, dtype=float)
    H = Q.shape[-1]
    if Q.shape[-2:] != (H, H):
        raise ValueError("a generator must be square")
    off = ~np.eye(H, dtype=bool)
    if np.any(Q[..., off] < 0):
        raise ValueError("generator has a negative off-diagonal rate")
    scale = np.maximum(1.0, np.abs(Q).sum(axis=-1))
    if np.any(np.abs(Q.sum(axis=-1)) > tol * scale):
        raise ValueError("generator rows do not sum to zero")
    return Q


def apply_adjoint(Q, lam) -> np.ndarray:
    """``Q^T lam``: the time derivative of the label probabilities."""
    return np.asarray(Q, dtype=float).T @ np.asarray(lam, dtype=float)


def _expm_taylor(A: np.ndarray) -> np.ndarray:
    H = A.shape[-1]
    eye = np.broadcast_to(np.eye(H), A.shape)
    E = eye.copy()
    for j in range(_TAYLOR_DEGREE, 0, -1):
        E = eye + (A @ E) / j
    return E


def transition_matrix(Q, dt: float, clamp: bool = True, return_raw: bool = False):
    """Stochastic matrix ``exp(dt Q)`` by scaling and squaring.

    Works on a single ``(H, H)`` generator or a stack ``(..., H, H)``.  Each
    matrix is scaled by ``2^-s`` so that its infinity norm is at most 1/2,
    exponentiated with a degree-14 Taylor polynomial and squared ``s`` times.
    With ``clamp`` the round-off negatives are set to zero and rows are
    renormalized to sum to one.

    Returns the clamped matrix, or ``(clamped, raw)`` with ``return_raw``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    Q = np.asarray(Q, dtype=float)
    if not np.all(np.isfinite(Q)):
        raise ValueError("generator has non-finite entries")
    single = Q.ndim == 2
    A = dt * (Q[None] if single else Q)
    shape = A.shape
    A = A.reshape(-1, shape[-2], shape[-1])
    norms = np.abs(A).sum(axis=-1).max(axis=-1)
    s = np.maximum(0, np.ceil(np.log2(np.maximum(norms, 1e-300) / 0.5))).astype(int)
    raw = np.empty_like(A)
    for si in np.unique(s):
        sel = s == si
        E = _expm_taylor(A[sel] / 2.0**si)
        for _ in range(si):
            E = E @ E
        raw[sel] = E
    if not np.all(np.isfinite(raw)):
        raise FloatingPointError("matrix exponential overflowed")
    out = raw
    if clamp:
        out = np.maximum(raw, 0.0)
        out /= out.sum(axis=-1, keepdims=True)
    out = out.reshape(shape)
    raw = raw.reshape(shape)
    if single:
        out, raw = out[0], raw[0]
    return (out, raw) if return_raw else out


def eval_rate_matrix_from_marginals(rates: RateSpec, x, marginals: list[DiscreteSpatialMeasure]) -> np.ndarray:
    """Generator at a single point from explicit label marginals."""
    if len(marginals) != rates.H:
        raise ValueError(f"expected {rates.H} marginals, got {len(marginals)}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pts = [m.points for m in marginals if len(m)]
    if not pts:
        atoms = np.zeros((0, x.size))
        weights = np.zeros((0, rates.H))
    else:
        atoms = np.concatenate([m.points.reshape(len(m), -1) for m in marginals])
        weights = np.zeros((atoms.shape[0], rates.H))
        start = 0
        for l, m in enumerate(marginals):
            weights[start : start + len(m), l] = m.weights
            start += len(m)
    return rates.evaluate(x[None, :], atoms, weights)[0]


def warn_large_step(rates: np.ndarray, dt: float, limit: float = 10.0) -> None:
    worst = float(np.max(-np.diagonal(rates, axis1=-2, axis2=-1), initial=0.0)) * dt
    if worst > limit:
        warnings.warn(
            f"dt * max departure rate = {worst:.3g} > {limit}; label accuracy degrades "
            "(positivity is unaffected)",
            RuntimeWarning,
            stacklevel=3,
        )
