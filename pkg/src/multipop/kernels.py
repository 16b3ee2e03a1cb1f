"""Interaction kernels ``K: R^d -> R^d`` with their analytic constants.

Every kernel exposes

* ``growth()``: a constant ``M`` with ``|K(z)| <= M (1 + |z|)`` for all z,
* ``lipschitz()``: a global Lipschitz constant,
* ``sup_norm(R)``: ``sup_{|z| <= R} |K(z)|``.

These feed the support and stability envelopes, so they must be true
bounds, not estimates.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

_CONV_BLOCK = 1 << 21


def _conv_args(x_eval, atoms, weights):
    x_eval = np.atleast_2d(np.asarray(x_eval, dtype=float))
    atoms = np.asarray(atoms, dtype=float).reshape(-1, x_eval.shape[1])
    weights = np.asarray(weights, dtype=float).reshape(atoms.shape[0], -1)
    return x_eval, atoms, weights

__all__ = [
    "ConstantKernel",
    "GaussianInteraction",
    "KERNEL_FAMILIES",
    "Kernel",
    "LinearAttraction",
    "ZeroKernel",
    "kernel_from_params",
]


class Kernel:
    """Base class; subclasses are frozen dataclasses so they hash by value."""

    family = ""

    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def growth(self) -> float:
        raise NotImplementedError

    def lipschitz(self) -> float:
        raise NotImplementedError

    def sup_norm(self, R: float) -> float:
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    def params(self) -> dict:
        return asdict(self)

    def convolve(self, x_eval, atoms, weights) -> np.ndarray:
        """``sum_j K(x - atoms_j) weights[j, c]`` for every x and column c.

        Shapes: ``x_eval`` (n, d), ``atoms`` (M, d), ``weights`` (M, C);
        the result is (n, C, d).
        """
        x_eval, atoms, weights = _conv_args(x_eval, atoms, weights)
        n, d = x_eval.shape
        out = np.zeros((n, weights.shape[1], d))
        if atoms.shape[0] == 0:
            return out
        rows = max(1, _CONV_BLOCK // max(1, atoms.shape[0] * d))
        for s in range(0, n, rows):
            kz = self(x_eval[s : s + rows, None, :] - atoms[None, :, :])
            out[s : s + rows] = np.einsum("imd,mc->icd", kz, weights)
        return out


@dataclass(frozen=True)
class ZeroKernel(Kernel):
    family = "zero"

    def __call__(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def growth(self):
        return 0.0

    def lipschitz(self):
        return 0.0

    def sup_norm(self, R):
        return 0.0

    def convolve(self, x_eval, atoms, weights):
        x_eval, atoms, weights = _conv_args(x_eval, atoms, weights)
        return np.zeros((x_eval.shape[0], weights.shape[1], x_eval.shape[1]))

    @property
    def is_zero(self):
        return True


@dataclass(frozen=True)
class LinearAttraction(Kernel):
    """``K(z) = -a z``."""

    a: float = 1.0
    family = "linear_attraction"

    def __call__(self, z):
        return -self.a * np.asarray(z, dtype=float)

    def growth(self):
        return abs(self.a)

    def lipschitz(self):
        return abs(self.a)

    def sup_norm(self, R):
        return abs(self.a) * R

    def convolve(self, x_eval, atoms, weights):
        # linear kernel: only the mass and first moment of each column matter
        x_eval, atoms, weights = _conv_args(x_eval, atoms, weights)
        mass = weights.sum(axis=0)
        moment = weights.T @ atoms
        return -self.a * (x_eval[:, None, :] * mass[None, :, None] - moment[None])

    @property
    def is_zero(self):
        return self.a == 0


@dataclass(frozen=True)
class GaussianInteraction(Kernel):
    """``K(z) = -a z exp(-|z|^2 / (2 sigma^2))``.

    Bounded by ``|a| sigma e^{-1/2}`` (attained at ``|z| = sigma``) and
    globally ``|a|``-Lipschitz: the Jacobian has eigenvalues
    ``e^{-r^2/2s^2}`` and ``(1 - r^2/s^2) e^{-r^2/2s^2}``, both in [-1, 1].
    """

    a: float = 1.0
    sigma: float = 1.0
    family = "gaussian"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        r2 = np.sum(z * z, axis=-1, keepdims=True)
        return -self.a * z * np.exp(-r2 / (2.0 * self.sigma**2))

    def _profile(self, r):
        return r * math.exp(-(r * r) / (2.0 * self.sigma**2))

    def growth(self):
        # |K(z)| <= |a| min(|z|, sigma e^{-1/2}) <= |a| min(1, sigma e^{-1/2}) (1 + |z|)
        return abs(self.a) * min(1.0, self.sigma * math.exp(-0.5))

    def lipschitz(self):
        return abs(self.a)

    def sup_norm(self, R):
        return abs(self.a) * self._profile(min(R, self.sigma))

    @property
    def is_zero(self):
        return self.a == 0


@dataclass(frozen=True)
class ConstantKernel(Kernel):
    """``K(z) = c``: every unit of mass pushes with the fixed vector c."""

    c: tuple = (1.0,)
    family = "constant"

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in np.atleast_1d(self.c)))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != len(self.c):
            raise ValueError("constant kernel dimension mismatch")
        return np.broadcast_to(np.asarray(self.c), z.shape).copy()

    def growth(self):
        return float(np.linalg.norm(self.c))

    def lipschitz(self):
        return 0.0

    def sup_norm(self, R):
        return float(np.linalg.norm(self.c))

    def convolve(self, x_eval, atoms, weights):
        x_eval, atoms, weights = _conv_args(x_eval, atoms, weights)
        mass = weights.sum(axis=0)
        c = np.asarray(self.c)
        return np.broadcast_to(mass[None, :, None] * c, (x_eval.shape[0], mass.size, c.size)).copy()

    @property
    def is_zero(self):
        return not any(self.c)

    def params(self):
        return {"c": list(self.c)}


KERNEL_FAMILIES = {
    cls.family: cls for cls in (ZeroKernel, LinearAttraction, GaussianInteraction, ConstantKernel)
}


def kernel_from_params(family: str, **params) -> Kernel:
    try:
        cls = KERNEL_FAMILIES[family]
    except KeyError:
        raise ValueError(
            f"unknown kernel family {family!r}; choose from {sorted(KERNEL_FAMILIES)}"
        ) from None
    return cls(**params)
