"""The multi-population model: velocity field, generator field and constants.

A model couples interaction kernels ``K^{hk}`` (effect of label-h mass on an
agent of label k) with switching rates.  An agent ``(x, lam)`` moves with::

    v(x, lam) = sum_{h,k} lam_k (K^{hk} * mu^h)(x)

where ``mu^h`` is the label-h marginal of the population.  In the
label-independent mode ``K^{hk} = K^h`` and the velocity does not depend on
``lam``.

Both the particle engine and the PDE solver describe the population as atoms
``(M, d)`` carrying label masses ``(M, H)``, and share the evaluation below.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import Kernel, ZeroKernel
from .measures import (
    AgentState,
    DiscreteSpatialMeasure,
    EmpiricalMeasure,
    LabelSpace,
    bl_norm_many,
    w1_product,
)
from .rates import RateSpec, eval_rate_matrix_from_marginals

__all__ = [
    "LABEL_INDEPENDENT",
    "LABEL_WEIGHTED",
    "AssumptionCheck",
    "AssumptionReport",
    "ModelConstants",
    "ModelSpec",
    "eval_rate_matrix",
    "eval_velocity",
    "marginal_atoms",
    "validate_assumptions",
]

LABEL_WEIGHTED = "label_weighted"
LABEL_INDEPENDENT = "label_independent"


@dataclass(frozen=True)
class ModelConstants:
    """Analytic constants of a model on the ball of radius ``R`` in state space.

    Attributes
    ----------
    M_v, delta, M
        Velocity growth constant, bound on departure rates and the overall
        sublinearity constant ``M_v + 2 delta`` of the vector field.
    L_state, L_measure, L_R
        Lipschitz constants of the vector field in the agent state, in the
        population (W1) and their maximum.
    """

    R: float
    M_v: float
    delta: float
    M: float
    lip_kernel: float
    kernel_sup: float
    L_state: float
    L_measure: float
    L_R: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Kernels, rates and label geometry of a model.

    Parameters
    ----------
    d : int
        Spatial dimension.
    kernels : sequence of sequences of Kernel
        ``kernels[h][k]`` acts on label-h mass and moves label-k agents.
    rates : RateSpec
    labels : LabelSpace, optional
        Defaults to the integer line ``1..H``.
    mode : str
        ``"label_weighted"`` or ``"label_independent"``.
    """

    d: int
    kernels: tuple
    rates: RateSpec
    labels: LabelSpace = field(default=None)  # type: ignore[assignment]
    mode: str = LABEL_WEIGHTED

    def __post_init__(self):
        grid = tuple(tuple(row) for row in self.kernels)
        H = len(grid)
        if H < 1 or any(len(row) != H for row in grid):
            raise ValueError("kernels must form an H x H grid")
        if not all(isinstance(K, Kernel) for row in grid for K in row):
            raise TypeError("kernel grid entries must be Kernel instances")
        if self.rates.H != H:
            raise ValueError(f"rates are for {self.rates.H} labels, kernels for {H}")
        labels = LabelSpace(H) if self.labels is None else self.labels
        if labels.H != H:
            raise ValueError("label space size does not match the kernel grid")
        if self.mode not in (LABEL_WEIGHTED, LABEL_INDEPENDENT):
            raise ValueError(f"unknown velocity mode {self.mode!r}")
        if self.mode == LABEL_INDEPENDENT and any(len(set(row)) != 1 for row in grid):
            raise ValueError("label-independent mode needs K^{hk} constant in k")
        if self.d < 1:
            raise ValueError("dimension must be positive")
        object.__setattr__(self, "kernels", grid)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def label_independent(cls, d: int, kernels: Sequence[Kernel], rates: RateSpec, labels=None):
        """Model with ``K^{hk} = kernels[h]`` for every k."""
        H = len(kernels)
        return cls(d, tuple((K,) * H for K in kernels), rates, labels, LABEL_INDEPENDENT)

    @property
    def H(self) -> int:
        return len(self.kernels)

    def _kernel_groups(self) -> dict:
        groups: dict = {}
        for h, row in enumerate(self.kernels):
            for k, K in enumerate(row):
                if not K.is_zero:
                    groups.setdefault(K, []).append((h, k))
        return groups

    # field evaluation on atoms

    def velocity(self, x_eval, lam_eval, atoms, weights) -> np.ndarray:
        """Velocities at ``x_eval`` (n, d) for label vectors ``lam_eval`` (n, H).

        ``lam_eval`` may be None in the label-independent mode.
        """
        x_eval = np.atleast_2d(np.asarray(x_eval, dtype=float))
        atoms = np.asarray(atoms, dtype=float).reshape(-1, self.d)
        weights = np.asarray(weights, dtype=float).reshape(atoms.shape[0], self.H)
        if x_eval.shape[1] != self.d:
            raise ValueError(f"expected points in R^{self.d}, got dimension {x_eval.shape[1]}")
        n = x_eval.shape[0]
        if self.mode == LABEL_INDEPENDENT:
            v = np.zeros((n, self.d))
            for h, row in enumerate(self.kernels):
                K = row[0]
                if not K.is_zero:
                    v += K.convolve(x_eval, atoms, weights[:, h : h + 1])[:, 0, :]
            return v
        if lam_eval is None:
            raise ValueError("the label-weighted velocity needs the agents' label vectors")
        lam_eval = np.asarray(lam_eval, dtype=float).reshape(n, self.H)
        # per agent label k: w_k(x) = sum_h (K^{hk} * mu^h)(x)
        w = np.zeros((n, self.H, self.d))
        for K, pairs in self._kernel_groups().items():
            coeff = np.zeros((atoms.shape[0], self.H))
            for h, k in pairs:
                coeff[:, k] += weights[:, h]
            w += K.convolve(x_eval, atoms, coeff)
        return np.einsum("nk,nkd->nd", lam_eval, w)

    def generator(self, x_eval, atoms, weights) -> np.ndarray:
        """Generator matrices at ``x_eval``, shape (n, H, H)."""
        return self.rates.evaluate(x_eval, atoms, weights)

    def velocity_field(self, P: EmpiricalMeasure) -> np.ndarray:
        """Velocity of every agent of ``P`` driven by ``P`` itself."""
        self._check_population(P)
        return self.velocity(P.positions, P.labels, P.positions, P.labels / P.N)

    def generator_field(self, P: EmpiricalMeasure) -> np.ndarray:
        """Generator of every agent of ``P`` driven by ``P`` itself."""
        self._check_population(P)
        return self.generator(P.positions, P.positions, P.labels / P.N)

    def _check_population(self, P: EmpiricalMeasure) -> None:
        if P.d != self.d or P.H != self.H:
            raise ValueError(
                f"population lives in R^{P.d} x P({P.H} labels), model expects R^{self.d} x P({self.H} labels)"
            )

    # analytic constants

    def kernel_sup(self, R: float) -> float:
        """``sup |K^{hk}(z)|`` over all kernels and ``|z| <= 2R``."""
        return max(K.sup_norm(2.0 * R) for row in self.kernels for K in row)

    def constants(self, R: float) -> ModelConstants:
        """Analytic constants on the ball of radius ``R`` in state space.

        Spatial positions on that ball satisfy ``|x| <= R`` so kernel
        arguments satisfy ``|x - x'| <= 2R``.  Label vectors are compared in
        the bounded-Lipschitz norm; a zero-mass label measure pairs with a
        bounded vector field ``w`` of sup ``S`` as at most
        ``S max(1, 2/gap) ||xi||_BL``.
        """
        if not R > 0:
            raise ValueError("R must be positive")
        kernels = [K for row in self.kernels for K in row]
        M_v = max(K.growth() for K in kernels)
        lip_K = max(K.lipschitz() for K in kernels)
        S = self.kernel_sup(R)
        label_factor = max(1.0, 2.0 / self.labels.min_gap) if self.H > 1 else 0.0
        delta = self.rates.departure_bound()
        # dependence of v on the agent's own label vector
        C_w_state = 0.0 if self.mode == LABEL_INDEPENDENT else S * label_factor
        # dependence of v on the labels carried by the population
        uniform = len(set(kernels)) == 1
        C_w_measure = 0.0 if uniform else S * label_factor
        C_Q = 2.0 * delta * label_factor
        rate_x = 2.0 * float(self.rates.lipschitz_x().sum(axis=1).max())
        rate_mu = 2.0 * float(self.rates.lipschitz_w1(self.labels).sum(axis=1).max())
        L_state = max(lip_K + rate_x, C_w_state + C_Q)
        L_measure = lip_K + C_w_measure + rate_mu
        return ModelConstants(
            R=float(R),
            M_v=M_v,
            delta=delta,
            M=M_v + 2.0 * delta,
            lip_kernel=lip_K,
            kernel_sup=S,
            L_state=L_state,
            L_measure=L_measure,
            L_R=max(L_state, L_measure),
        )


def marginal_atoms(marginals: Sequence[DiscreteSpatialMeasure], d: int):
    """Stack label marginals into shared atoms ``(M, d)`` and masses ``(M, H)``."""
    H = len(marginals)
    sizes = [len(m) for m in marginals]
    atoms = np.zeros((sum(sizes), d))
    weights = np.zeros((sum(sizes), H))
    start = 0
    for l, m in enumerate(marginals):
        if sizes[l]:
            atoms[start : start + sizes[l]] = m.points.reshape(sizes[l], d)
            weights[start : start + sizes[l], l] = m.weights
        start += sizes[l]
    return atoms, weights


def eval_velocity(spec: ModelSpec, y: AgentState, P: EmpiricalMeasure) -> np.ndarray:
    """Velocity of the agent ``y`` in the population ``P``."""
    if y.d != spec.d or y.H != spec.H:
        raise ValueError(
            f"agent lives in R^{y.d} x P({y.H} labels), model expects R^{spec.d} x P({spec.H} labels)"
        )
    if P.N == 0:
        raise ValueError("population is empty")
    spec._check_population(P)
    return spec.velocity(y.x[None, :], y.lam[None, :], P.positions, P.labels / P.N)[0]


def eval_rate_matrix(spec: ModelSpec, x, marginals: Sequence[DiscreteSpatialMeasure]) -> np.ndarray:
    """Generator at ``x`` given the label marginals of the population."""
    return eval_rate_matrix_from_marginals(spec.rates, x, list(marginals))


# Monte-Carlo validation of the structural constants


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    empirical: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.empirical <= 1.01 * self.bound + 1e-12


@dataclass
class AssumptionReport:
    R: float
    samples: int
    constants: ModelConstants
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def flagged(self) -> list:
        return [c for c in self.checks if not c.ok]

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _ball(rng, n, d, R):
    u = rng.normal(size=(n, d))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    return u * R * rng.random((n, 1)) ** (1.0 / d)


def _random_population(rng, spec: ModelSpec, n: int, R: float) -> EmpiricalMeasure:
    # |x| + ||lam||_BL = |x| + 1 <= R
    return EmpiricalMeasure(
        _ball(rng, n, spec.d, max(R - 1.0, 0.0)), rng.dirichlet(np.ones(spec.H), size=n), spec.labels
    )


def validate_assumptions(
    spec: ModelSpec, R: float, samples: int = 200, rng: np.random.Generator | None = None, agents: int = 8
) -> AssumptionReport:
    """Compare empirical Lipschitz and growth quotients with the analytic constants.

    Draws ``samples`` random pairs of states and of small populations inside
    the ball of radius ``R`` and records the largest observed quotient of
    each kind.  A check is flagged when its quotient exceeds the bound by
    more than 1%.
    """
    if not R > 0 or samples < 1:
        raise ValueError("need R > 0 and samples >= 1")
    rng = np.random.default_rng() if rng is None else rng
    const = spec.constants(R)
    report = AssumptionReport(R, samples, const)
    H, d = spec.H, spec.d
    add = report.checks.append

    z1, z2 = _ball(rng, samples, d, 2.0 * R), _ball(rng, samples, d, 2.0 * R)
    for h, row in enumerate(spec.kernels):
        for k, K in enumerate(row):
            dz = np.linalg.norm(z1 - z2, axis=1)
            dk = np.linalg.norm(K(z1) - K(z2), axis=1)
            add(AssumptionCheck(f"kernel_lipschitz[{h},{k}]", float(np.max(dk / dz)), K.lipschitz()))
            growth = np.linalg.norm(K(z1), axis=1) / (1.0 + np.linalg.norm(z1, axis=1))
            add(AssumptionCheck(f"kernel_growth[{h},{k}]", float(growth.max()), K.growth()))

    q = {name: 0.0 for name in ("velocity_lipschitz_state", "velocity_growth", "velocity_lipschitz_measure",
                                 "rate_lipschitz_x", "rate_bound", "rate_lipschitz_measure")}
    lip_x = spec.rates.lipschitz_x()
    lip_mu = spec.rates.lipschitz_w1(spec.labels)
    pair_bound = spec.rates.pair_bound()
    off = ~np.eye(H, dtype=bool)
    label_factor = max(1.0, 2.0 / spec.labels.min_gap) if H > 1 else 0.0
    for _ in range(samples):
        P1 = _random_population(rng, spec, agents, R)
        P2 = _random_population(rng, spec, agents, R)
        w1 = P1.labels / agents
        xs = _ball(rng, 2, d, max(R - 1.0, 1e-12))
        lams = rng.dirichlet(np.ones(H), size=2)
        v = spec.velocity(xs, lams, P1.positions, w1)
        dy = np.linalg.norm(xs[0] - xs[1]) + _bl(lams[0] - lams[1], spec.labels)
        q["velocity_lipschitz_state"] = max(q["velocity_lipschitz_state"], np.linalg.norm(v[0] - v[1]) / dy)
        m1 = float(np.mean(np.linalg.norm(P1.positions, axis=1))) + 1.0
        q["velocity_growth"] = max(q["velocity_growth"], np.linalg.norm(v[0]) / (1.0 + np.linalg.norm(xs[0]) + m1))
        v2 = spec.velocity(xs[:1], lams[:1], P2.positions, P2.labels / agents)
        dP = w1_product(P1, P2)
        q["velocity_lipschitz_measure"] = max(q["velocity_lipschitz_measure"], np.linalg.norm(v[0] - v2[0]) / dP)
        Qx = spec.generator(xs, P1.positions, w1)
        ratio_x = np.abs(Qx[0] - Qx[1])[off] / (np.linalg.norm(xs[0] - xs[1]) * np.maximum(lip_x[off], 1e-300))
        q["rate_lipschitz_x"] = max(q["rate_lipschitz_x"], float(np.max(ratio_x, initial=0.0)))
        ratio_b = Qx[0][off] / np.maximum(pair_bound[off], 1e-300)
        q["rate_bound"] = max(q["rate_bound"], float(np.max(ratio_b, initial=0.0)))
        Q2 = spec.generator(xs[:1], P2.positions, P2.labels / agents)
        ratio_mu = np.abs(Qx[0] - Q2[0])[off] / (dP * np.maximum(lip_mu[off], 1e-300))
        q["rate_lipschitz_measure"] = max(q["rate_lipschitz_measure"], float(np.max(ratio_mu, initial=0.0)))

    uniform = len({K for row in spec.kernels for K in row}) == 1
    S = const.kernel_sup
    add(AssumptionCheck("velocity_lipschitz_state", q["velocity_lipschitz_state"],
                        const.lip_kernel + (0.0 if spec.mode == LABEL_INDEPENDENT else S * label_factor)))
    add(AssumptionCheck("velocity_growth", q["velocity_growth"], const.M_v))
    add(AssumptionCheck("velocity_lipschitz_measure", q["velocity_lipschitz_measure"],
                        const.lip_kernel + (0.0 if uniform else S * label_factor)))
    # rate quotients are normalized by their per-pair bound, so the bound is 1
    add(AssumptionCheck("rate_lipschitz_x", q["rate_lipschitz_x"], 1.0 if np.any(lip_x[off]) else 0.0))
    add(AssumptionCheck("rate_bound", q["rate_bound"], 1.0 if np.any(pair_bound[off]) else 0.0))
    add(AssumptionCheck("rate_lipschitz_measure", q["rate_lipschitz_measure"], 1.0 if np.any(lip_mu[off]) else 0.0))
    return report


def _bl(xi, labels):
    return float(bl_norm_many(np.asarray(xi)[None, :], labels)[0])


def zero_model(d: int, H: int, labels: LabelSpace | None = None) -> ModelSpec:
    """Model with no interaction and no switching."""
    return ModelSpec.label_independent(d, [ZeroKernel()] * H, RateSpec.zeros(H), labels)

