import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multipop.kernels import (
    ConstantKernel,
    GaussianInteraction,
    Kernel,
    LinearAttraction,
    ZeroKernel,
    kernel_from_params,
)
from multipop.measures import AgentState, DiscreteSpatialMeasure, EmpiricalMeasure, LabelSpace, label_marginals
from multipop.model import (
    LABEL_WEIGHTED,
    ModelSpec,
    eval_rate_matrix,
    eval_velocity,
    marginal_atoms,
    validate_assumptions,
    zero_model,
)
from multipop.rates import RateSpec

KERNELS = [LinearAttraction(0.7), GaussianInteraction(1.3, 0.6), ConstantKernel((0.4,)), ZeroKernel()]


# kernels


@pytest.mark.parametrize("K", KERNELS, ids=lambda K: K.family)
def test_fast_convolution_matches_generic(K, rng):
    x, atoms = rng.normal(size=(9, 1)), rng.normal(size=(13, 1))
    w = rng.random((13, 3))
    np.testing.assert_allclose(K.convolve(x, atoms, w), Kernel.convolve(K, x, atoms, w), atol=1e-14)


@pytest.mark.parametrize("K", KERNELS[:2], ids=lambda K: K.family)
def test_kernel_constants_hold_on_samples(K, rng):
    z1, z2 = rng.normal(scale=3, size=(2000, 2)), rng.normal(scale=3, size=(2000, 2))
    lip = np.linalg.norm(K(z1) - K(z2), axis=1) / np.linalg.norm(z1 - z2, axis=1)
    assert lip.max() <= K.lipschitz() + 1e-12
    growth = np.linalg.norm(K(z1), axis=1) / (1 + np.linalg.norm(z1, axis=1))
    assert growth.max() <= K.growth() + 1e-12


def test_gaussian_growth_against_grid_oracle():
    a, s = 1.7, 0.8
    r = np.linspace(0, 20, 400001)
    bound = a * max(1.0, np.max(r * np.exp(-r * r / (2 * s * s))))
    K = GaussianInteraction(a, s)
    assert K.growth() <= bound + 1e-12
    assert K.sup_norm(100.0) == pytest.approx(a * np.max(r * np.exp(-r * r / (2 * s * s))), rel=1e-9)


def test_kernel_catalog():
    assert kernel_from_params("linear_attraction", a=2.0) == LinearAttraction(2.0)
    with pytest.raises(ValueError, match="unknown kernel family"):
        kernel_from_params("nope")


# velocity


def two_label_spec(KF, KL, rates=None, mode="label_independent"):
    rates = RateSpec.zeros(2) if rates is None else rates
    if mode == "label_independent":
        return ModelSpec.label_independent(1, [KF, KL], rates)
    return ModelSpec(1, [[KF, KF], [KL, KL]], rates)


def test_symmetric_followers_cancel():
    spec = two_label_spec(LinearAttraction(1.0), ZeroKernel())
    P = EmpiricalMeasure([[-1.0], [1.0]], [[1.0, 0.0], [1.0, 0.0]])
    assert eval_velocity(spec, AgentState([0.0], [1.0, 0.0]), P)[0] == pytest.approx(0.0)
    assert eval_velocity(spec, AgentState([1.0], [1.0, 0.0]), P)[0] == pytest.approx(-1.0)


def brute_velocity(spec, x, lam, P):
    v = np.zeros(spec.d)
    for j in range(P.N):
        for h in range(spec.H):
            for k in range(spec.H):
                v += lam[k] * P.labels[j, h] / P.N * spec.kernels[h][k](x - P.positions[j])
    return v


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_velocity_matches_double_sum(H, d, seed):
    r = np.random.default_rng(seed)
    fams = [LinearAttraction(r.random()), GaussianInteraction(r.random(), 0.5 + r.random()), ZeroKernel()]
    grid = [[fams[r.integers(3)] for _ in range(H)] for _ in range(H)]
    spec = ModelSpec(d, grid, RateSpec.zeros(H))
    P = EmpiricalMeasure(r.normal(size=(6, d)), r.dirichlet(np.ones(H), 6))
    y = AgentState(r.normal(size=d), r.dirichlet(np.ones(H)))
    np.testing.assert_allclose(eval_velocity(spec, y, P), brute_velocity(spec, y.x, y.lam, P), atol=1e-14)


def test_weighted_mode_with_equal_kernels_equals_independent(rng):
    KF, KL = GaussianInteraction(1.0, 0.5), LinearAttraction(0.3)
    ind = two_label_spec(KF, KL)
    wtd = two_label_spec(KF, KL, mode=LABEL_WEIGHTED)
    P = EmpiricalMeasure(rng.normal(size=(20, 1)), rng.dirichlet(np.ones(2), 20))
    np.testing.assert_allclose(ind.velocity_field(P), wtd.velocity_field(P), atol=1e-15)


def test_label_independent_mode_requires_constant_rows():
    with pytest.raises(ValueError, match="label-independent"):
        ModelSpec(1, [[ZeroKernel(), LinearAttraction(1.0)], [ZeroKernel(), ZeroKernel()]],
                  RateSpec.zeros(2), mode="label_independent")


def test_dimension_mismatch_is_reported(rng):
    spec = zero_model(2, 2)
    P = EmpiricalMeasure(rng.normal(size=(3, 1)), rng.dirichlet(np.ones(2), 3))
    with pytest.raises(ValueError, match="R\\^1"):
        spec.velocity_field(P)


# rate matrices


def test_rate_matrix_examples():
    spec = two_label_spec(ZeroKernel(), ZeroKernel(), RateSpec.constant([[0.0, 1.0], [0.0, 0.0]]))
    m = DiscreteSpatialMeasure([[0.0]], [0.5])
    np.testing.assert_array_equal(eval_rate_matrix(spec, [0.0], [m, m]), [[-1.0, 1.0], [0.0, 0.0]])
    np.testing.assert_array_equal(eval_rate_matrix(zero_model(1, 2), [0.0], [m, m]), 0.0)


def test_generator_field_matches_marginal_route(rng):
    rates = RateSpec(rng.random((3, 3)), rng.random((3, 3, 3)), 0.7, True)
    spec = ModelSpec.label_independent(1, [ZeroKernel()] * 3, rates)
    P = EmpiricalMeasure(rng.normal(size=(8, 1)), rng.dirichlet(np.ones(3), 8))
    field = spec.generator_field(P)
    marg = label_marginals(P)
    for i in range(P.N):
        np.testing.assert_allclose(field[i], eval_rate_matrix(spec, P.positions[i], marg), atol=1e-15)


def test_marginal_atoms_round_trip(rng):
    P = EmpiricalMeasure(rng.normal(size=(5, 1)), rng.dirichlet(np.ones(3), 5))
    atoms, w = marginal_atoms(label_marginals(P), 1)
    assert atoms.shape == (15, 1)
    np.testing.assert_allclose(w.sum(axis=0), P.labels.mean(axis=0))


# constants and validation


def test_constants_zero_model():
    c = zero_model(1, 3).constants(2.0)
    assert c.M == 0 and c.L_R == 0 and c.delta == 0


def test_constants_linear_model():
    rates = RateSpec.constant([[0.0, 0.5], [0.25, 0.0]])
    spec = two_label_spec(LinearAttraction(2.0), LinearAttraction(2.0), rates)
    c = spec.constants(1.0)
    assert c.M_v == 2.0
    assert c.delta == 0.5
    assert c.M == pytest.approx(3.0)
    assert c.L_R >= c.lip_kernel


@pytest.mark.parametrize("K", [LinearAttraction(1.5), ZeroKernel(), GaussianInteraction(2.0, 0.7)],
                         ids=lambda K: K.family)
def test_validate_assumptions_single_kernel(K, rng):
    rates = RateSpec(rng.random((2, 2)), rng.random((2, 2, 2)), 0.8, True)
    spec = two_label_spec(K, K, rates)
    rep = validate_assumptions(spec, 3.0, 100, rng)
    assert rep.ok, rep.flagged
    assert rep["kernel_lipschitz[0,0]"].empirical <= K.lipschitz() + 1e-9
    if K.is_zero:
        assert rep["kernel_lipschitz[0,0]"].empirical == 0.0


def test_validate_assumptions_label_weighted_chain(rng):
    H = 3
    grid = [[GaussianInteraction(1.0, 0.7) if h == k else LinearAttraction(0.3) for k in range(H)] for h in range(H)]
    rates = RateSpec(rng.random((H, H)), rng.random((H, H, H)), 0.7)
    rep = validate_assumptions(ModelSpec(1, grid, rates), 2.0, 100, rng)
    assert rep.ok, rep.flagged


def test_validate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        validate_assumptions(zero_model(1, 2), 0.0)


def test_fractional_label_gap_tightens_constants():
    spec = zero_model(1, 2, LabelSpace(2, [0.0, 0.1]))
    rates = RateSpec.constant([[0.0, 1.0], [1.0, 0.0]])
    fine = ModelSpec.label_independent(1, [ZeroKernel()] * 2, rates, LabelSpace(2, [0.0, 0.1]))
    coarse = ModelSpec.label_independent(1, [ZeroKernel()] * 2, rates)
    assert fine.constants(1.0).L_R == pytest.approx(10 * coarse.constants(1.0).L_R)
    assert spec.constants(1.0).L_R == 0.0
    assert math.isfinite(fine.constants(1.0).L_R)
