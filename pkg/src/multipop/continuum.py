"""Game kernels on the continuum label space [0, 1], discretized by quadrature.

Labels are the midpoint nodes ``u_m = (m - 1/2)/H`` with weights ``1/H``.  A
transition kernel ``J(x, u, x', u') >= 0`` and a velocity kernel
``V(x, u, x', u')`` induce, for an agent at ``x`` in a population
``(x_j, lam_j)_{j<=N}``::

    q_mk = (1/N) sum_j J(x, u_m, x_j, u_k) lam_jk            (m != k)
    v    = sum_m lam_m (1/N) sum_j sum_k V(x, u_m, x_j, u_k) lam_jk

The catalog kernels are products ``S(x, x') f(u) g(u')`` of a spatial part
and affine label factors, which keeps every evaluation a matrix product.
Arbitrary vectorized callables are accepted as well and are evaluated by
direct summation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .initial import exponential_label_cells
from .kernels import LinearAttraction, ZeroKernel
from .measures import EmpiricalMeasure, LabelSpace
from .model import ModelSpec
from .rates import RateSpec

__all__ = [
    "ConstantSpatial",
    "Displacement",
    "GameKernelSpec",
    "GameModel",
    "GaussianSpatial",
    "ProductKernel",
    "coarsen",
    "discretize_generator",
    "exponential_label_cells",
    "game_velocity",
    "J_CATALOG",
    "V_CATALOG",
]


@dataclass(frozen=True)
class ConstantSpatial:
    """``S(x, x') = c``."""

    c: float = 1.0
    vector = False

    def matrix(self, x, xp):
        return np.full((x.shape[0], xp.shape[0]), self.c)

    def __call__(self, x, xp):
        return np.full(np.broadcast_shapes(x.shape[:-1], xp.shape[:-1]), self.c)


@dataclass(frozen=True)
class GaussianSpatial:
    """``S(x, x') = c exp(-|x - x'|^2 / (2 sigma^2))``."""

    c: float = 1.0
    sigma: float = 1.0
    vector = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def __call__(self, x, xp):
        r2 = np.sum((x - xp) ** 2, axis=-1)
        return self.c * np.exp(-r2 / (2.0 * self.sigma**2))

    def matrix(self, x, xp):
        return self(x[:, None, :], xp[None, :, :])


@dataclass(frozen=True)
class Displacement:
    """``S(x, x') = a (x' - x)``, vector valued."""

    a: float = 1.0
    vector = True

    def __call__(self, x, xp):
        return self.a * (xp - x)


def _affine(coeffs, u):
    return coeffs[0] + coeffs[1] * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class ProductKernel:
    """``S(x, x') (p0 + p1 u) (q0 + q1 u')``."""

    spatial: object
    left: tuple = (1.0, 0.0)
    right: tuple = (1.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(float(v) for v in self.left))
        object.__setattr__(self, "right", tuple(float(v) for v in self.right))

    @property
    def vector(self) -> bool:
        return self.spatial.vector

    @property
    def label_independent(self) -> bool:
        return self.left == (1.0, 0.0) and self.right == (1.0, 0.0)

    def __call__(self, x, u, xp, up):
        s = self.spatial(np.asarray(x, float), np.asarray(xp, float))
        lab = _affine(self.left, u) * _affine(self.right, up)
        return s * lab[..., None] if self.vector else s * lab

    def check_nonnegative(self) -> None:
        ends = np.array([0.0, 1.0])
        if (
            np.any(_affine(self.left, ends) < 0)
            or np.any(_affine(self.right, ends) < 0)
            or getattr(self.spatial, "c", 0.0) < 0
        ):
            raise ValueError("transition kernel J takes negative values on the label space")


def J_constant(c: float = 1.0) -> ProductKernel:
    return ProductKernel(ConstantSpatial(c))


def J_separable(c: float = 1.0, left=(1.0, -1.0), right=(0.0, 1.0)) -> ProductKernel:
    """``c (p0 + p1 u)(q0 + q1 u')``; the default is ``c (1 - u) u'``."""
    return ProductKernel(ConstantSpatial(c), left, right)


def J_gaussian(c: float = 1.0, sigma: float = 1.0) -> ProductKernel:
    return ProductKernel(GaussianSpatial(c, sigma))


def V_zero() -> ProductKernel:
    return ProductKernel(Displacement(0.0))


def V_attraction(a: float = 1.0) -> ProductKernel:
    """``a (x' - x)``: pull toward every other agent, whatever the labels."""
    return ProductKernel(Displacement(a))


def V_separable(a: float = 1.0, left=(0.0, 1.0), right=(0.0, 1.0)) -> ProductKernel:
    """``a (p0 + p1 u)(q0 + q1 u')(x' - x)``; the default is ``a u u' (x' - x)``."""
    return ProductKernel(Displacement(a), left, right)


J_CATALOG = {"constant": J_constant, "separable": J_separable, "gaussian": J_gaussian}
V_CATALOG = {"zero": V_zero, "attraction": V_attraction, "separable": V_separable}


@dataclass(frozen=True, eq=False)
class GameKernelSpec:
    """Transition kernel ``J``, velocity kernel ``V`` and the node count.

    ``J`` and ``V`` are ``ProductKernel`` instances or callables
    ``f(x, u, x', u')`` that broadcast over leading axes (x has a trailing
    spatial axis, u does not).
    """

    J: Callable
    V: Callable
    H_nodes: int
    d: int = 1

    def __post_init__(self):
        if self.H_nodes < 1:
            raise ValueError("need at least one quadrature node")
        if isinstance(self.J, ProductKernel):
            if self.J.vector:
                raise ValueError("J must be scalar valued")
            self.J.check_nonnegative()
        if isinstance(self.V, ProductKernel) and not self.V.vector:
            raise ValueError("V must be vector valued")

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.H_nodes) + 0.5) / self.H_nodes

    @property
    def labels(self) -> LabelSpace:
        return LabelSpace.midpoint_nodes(self.H_nodes)


def _generic_block(fn, x_eval, u, atoms, vector):
    # values (n, H_m, M, H_k[, d]) for a generic callable
    xa = x_eval[:, None, None, None, :]
    ua = u[None, :, None, None]
    xb = atoms[None, None, :, None, :]
    ub = u[None, None, None, :]
    return fn(xa, ua, xb, ub)


class GameModel:
    """Finite-label model induced by a ``GameKernelSpec``.

    Exposes the same field interface as ``ModelSpec`` (``velocity``,
    ``generator``, ``velocity_field``, ``generator_field``), so the particle
    engine runs it unchanged.
    """

    def __init__(self, spec: GameKernelSpec):
        self.spec = spec
        self.d = spec.d
        self.H = spec.H_nodes
        self.labels = spec.labels
        self._u = spec.nodes

    # rates

    def generator(self, x_eval, atoms, weights) -> np.ndarray:
        """Generators (n, H, H); ``weights`` (M, H) are per-atom label masses."""
        x_eval = np.atleast_2d(np.asarray(x_eval, dtype=float))
        atoms = np.asarray(atoms, dtype=float).reshape(-1, self.d)
        weights = np.asarray(weights, dtype=float).reshape(atoms.shape[0], self.H)
        J = self.spec.J
        u = self._u
        if isinstance(J, ProductKernel):
            D = J.spatial.matrix(x_eval, atoms) @ weights
            q = _affine(J.left, u)[None, :, None] * _affine(J.right, u)[None, None, :] * D[:, None, :]
        else:
            q = np.empty((x_eval.shape[0], self.H, self.H))
            rows = max(1, (1 << 20) // max(1, self.H * self.H * atoms.shape[0]))
            for s in range(0, x_eval.shape[0], rows):
                vals = _generic_block(J, x_eval[s : s + rows], u, atoms, False)
                vals = np.broadcast_to(vals, (vals.shape[0], self.H, atoms.shape[0], self.H))
                if np.any(vals < 0):
                    raise ValueError("transition kernel J returned a negative value")
                q[s : s + rows] = np.einsum("imjk,jk->imk", vals, weights)
        idx = np.arange(self.H)
        q[:, idx, idx] = 0.0
        if np.any(q < 0):
            raise ValueError("transition kernel J returned a negative value")
        q[:, idx, idx] = -q.sum(axis=2)
        return q

    # velocities

    def velocity(self, x_eval, lam_eval, atoms, weights) -> np.ndarray:
        x_eval = np.atleast_2d(np.asarray(x_eval, dtype=float))
        atoms = np.asarray(atoms, dtype=float).reshape(-1, self.d)
        weights = np.asarray(weights, dtype=float).reshape(atoms.shape[0], self.H)
        lam_eval = np.asarray(lam_eval, dtype=float).reshape(x_eval.shape[0], self.H)
        V = self.spec.V
        u = self._u
        if isinstance(V, ProductKernel) and isinstance(V.spatial, Displacement):
            c = weights @ _affine(V.right, u)
            drift = V.spatial.a * ((c @ atoms)[None, :] - x_eval * c.sum())
            return (lam_eval @ _affine(V.left, u))[:, None] * drift
        out = np.empty_like(x_eval)
        rows = max(1, (1 << 20) // max(1, self.H * self.H * atoms.shape[0] * self.d))
        for s in range(0, x_eval.shape[0], rows):
            vals = _generic_block(V, x_eval[s : s + rows], u, atoms, True)
            vals = np.broadcast_to(vals, (vals.shape[0], self.H, atoms.shape[0], self.H, self.d))
            out[s : s + rows] = np.einsum("imjkd,jk,im->id", vals, weights, lam_eval[s : s + rows])
        return out

    def velocity_field(self, P: EmpiricalMeasure) -> np.ndarray:
        self._check(P)
        return self.velocity(P.positions, P.labels, P.positions, P.labels / P.N)

    def generator_field(self, P: EmpiricalMeasure) -> np.ndarray:
        self._check(P)
        return self.generator(P.positions, P.positions, P.labels / P.N)

    def _check(self, P: EmpiricalMeasure) -> None:
        if P.H != self.H or P.d != self.d:
            raise ValueError(f"population has {P.H} labels in R^{P.d}; model uses {self.H} nodes in R^{self.d}")

    def finite_label_model(self) -> ModelSpec:
        """The equivalent ``ModelSpec`` for label-independent catalog kernels."""
        J, V = self.spec.J, self.spec.V
        ok = (
            isinstance(J, ProductKernel)
            and isinstance(V, ProductKernel)
            and J.label_independent
            and V.label_independent
            and isinstance(V.spatial, Displacement)
        )
        if not ok:
            raise ValueError("only label-independent catalog kernels have a finite-label counterpart")
        H = self.H
        if isinstance(J.spatial, GaussianSpatial):
            c, width = J.spatial.c, J.spatial.sigma
        else:
            c, width = J.spatial.c, np.inf
        # alpha_mk = c (eta * mu^k)(x): influence only from the destination label
        influence = np.zeros((H, H, H))
        for m in range(H):
            for k in range(H):
                if m != k:
                    influence[m, k, k] = c
        rates = RateSpec(np.zeros((H, H)), influence, np.full((H, H), width))
        a = V.spatial.a
        K = LinearAttraction(a) if a != 0 else ZeroKernel()
        return ModelSpec.label_independent(self.d, [K] * H, rates, self.labels)


def discretize_generator(spec: GameKernelSpec, x, P: EmpiricalMeasure) -> np.ndarray:
    """Generator of the agent at ``x`` in the population ``P``."""
    model = GameModel(spec)
    model._check(P)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return model.generator(x[None, :], P.positions, P.labels / P.N)[0]


def game_velocity(spec: GameKernelSpec, y, P: EmpiricalMeasure) -> np.ndarray:
    """Velocity of the agent ``y`` in the population ``P``."""
    model = GameModel(spec)
    model._check(P)
    return model.velocity(y.x[None, :], y.lam[None, :], P.positions, P.labels / P.N)[0]


def coarsen(lam, factor: int = 2) -> np.ndarray:
    """Merge groups of ``factor`` adjacent nodes by summing their masses."""
    lam = np.asarray(lam, dtype=float)
    H = lam.shape[-1]
    if H % factor:
        raise ValueError(f"{H} nodes cannot be merged in groups of {factor}")
    return lam.reshape(*lam.shape[:-1], H // factor, factor).sum(axis=-1)
