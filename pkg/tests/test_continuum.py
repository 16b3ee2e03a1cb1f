import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multipop.continuum import (
    GameKernelSpec,
    GameModel,
    J_constant,
    J_gaussian,
    J_separable,
    V_attraction,
    V_separable,
    V_zero,
    coarsen,
    discretize_generator,
    exponential_label_cells,
    game_velocity,
)
from multipop.engine import SimConfig, simulate
from multipop.kernels import LinearAttraction
from multipop.measures import AgentState, EmpiricalMeasure
from multipop.model import ModelSpec, eval_velocity
from multipop.rates import RateSpec


def population(rng, N, H, d=1):
    return EmpiricalMeasure(rng.normal(size=(N, d)), rng.dirichlet(np.ones(H), N))


def brute_generator(J, nodes, x, P):
    H = nodes.size
    Q = np.zeros((H, H))
    for m in range(H):
        for k in range(H):
            if m != k:
                Q[m, k] = sum(J(x, nodes[m], P.positions[j], nodes[k]) * P.labels[j, k] for j in range(P.N)) / P.N
    Q[np.diag_indices(H)] = -Q.sum(axis=1)
    return Q


def brute_velocity(V, nodes, y, P):
    v = np.zeros(P.d)
    for m in range(nodes.size):
        for j in range(P.N):
            for k in range(nodes.size):
                v += y.lam[m] * V(y.x, nodes[m], P.positions[j], nodes[k]) * P.labels[j, k] / P.N
    return v


def test_zero_J_gives_zero_matrix(rng):
    spec = GameKernelSpec(J_constant(0.0), V_zero(), 5)
    P = population(rng, 4, 5)
    np.testing.assert_array_equal(discretize_generator(spec, [0.0], P), 0.0)


def test_constant_J_single_opponent():
    H, c, k = 4, 0.7, 2
    spec = GameKernelSpec(J_constant(c), V_zero(), H)
    P = EmpiricalMeasure([[1.0]], [np.eye(H)[k]])
    Q = discretize_generator(spec, [0.0], P)
    for m in range(H):
        for j in range(H):
            if m != j:
                assert Q[m, j] == pytest.approx(c if j == k else 0.0)


def test_separable_J_against_brute_force(rng):
    spec = GameKernelSpec(J_separable(1.0, (1.0, -1.0), (0.0, 1.0)), V_zero(), 6)
    P = population(rng, 5, 6)
    J = lambda x, u, xp, up: up * (1 - u)  # noqa: E731
    np.testing.assert_allclose(discretize_generator(spec, [0.2], P), brute_generator(J, spec.nodes, 0.2, P),
                               atol=1e-15)


def test_gaussian_J_against_brute_force(rng):
    Jk = J_gaussian(1.5, 0.6)
    spec = GameKernelSpec(Jk, V_zero(), 4)
    P = population(rng, 5, 4)
    J = lambda x, u, xp, up: 1.5 * np.exp(-np.sum((x - xp) ** 2) / (2 * 0.36))  # noqa: E731
    np.testing.assert_allclose(discretize_generator(spec, [0.3], P),
                               brute_generator(J, spec.nodes, np.array([0.3]), P), atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_generators_are_q_matrices(H, seed):
    r = np.random.default_rng(seed)
    spec = GameKernelSpec(J_separable(r.random(), (r.random(), 0.5), (0.2, r.random())), V_zero(), H)
    Q = GameModel(spec).generator_field(population(r, 6, H))
    off = ~np.eye(H, dtype=bool)
    assert np.all(Q[:, off] >= 0)
    np.testing.assert_allclose(Q.sum(axis=2), 0.0, atol=1e-12)


def test_negative_J_rejected(rng):
    with pytest.raises(ValueError, match="negative"):
        GameKernelSpec(J_separable(1.0, (1.0, -2.0), (1.0, 0.0)), V_zero(), 3)
    bad = GameModel(GameKernelSpec(lambda x, u, xp, up: u - 0.5, V_zero(), 3))
    with pytest.raises(ValueError, match="negative"):
        bad.generator_field(population(rng, 2, 3))


def test_zero_V(rng):
    spec = GameKernelSpec(J_constant(), V_zero(), 3)
    P = population(rng, 4, 3)
    np.testing.assert_array_equal(game_velocity(spec, AgentState([0.5], [0.2, 0.3, 0.5]), P), 0.0)


def test_label_free_V_is_linear_attraction(rng):
    H = 5
    spec = GameKernelSpec(J_constant(), V_attraction(1.0), H)
    model = ModelSpec.label_independent(1, [LinearAttraction(1.0)] * H, RateSpec.zeros(H), spec.labels)
    P = EmpiricalMeasure(rng.normal(size=(6, 1)), rng.dirichlet(np.ones(H), 6), spec.labels)
    y = AgentState([0.4], rng.dirichlet(np.ones(H)))
    np.testing.assert_allclose(game_velocity(spec, y, P), eval_velocity(model, y, P), atol=1e-15)


def test_separable_V_against_brute_force(rng):
    spec = GameKernelSpec(J_constant(), V_separable(1.0), 4)
    P = population(rng, 5, 4)
    y = AgentState([0.1], rng.dirichlet(np.ones(4)))
    V = lambda x, u, xp, up: u * up * (xp - x)  # noqa: E731
    np.testing.assert_allclose(game_velocity(spec, y, P), brute_velocity(V, spec.nodes, y, P), atol=1e-15)


def test_generic_callables_match_product_path(rng):
    H = 6
    Jp, Vp = J_separable(0.8, (1.0, -0.5), (0.2, 1.0)), V_separable(0.7, (0.3, 1.0), (0.0, 1.0))
    fast = GameModel(GameKernelSpec(Jp, Vp, H))
    slow = GameModel(GameKernelSpec(lambda *a: Jp(*a), lambda *a: Vp(*a), H))
    P = population(rng, 9, H)
    np.testing.assert_allclose(fast.generator_field(P), slow.generator_field(P), atol=1e-14)
    np.testing.assert_allclose(fast.velocity_field(P), slow.velocity_field(P), atol=1e-14)


def test_finite_label_model_reduction(rng):
    H = 5
    game = GameModel(GameKernelSpec(J_gaussian(0.9, 0.7), V_attraction(0.6), H))
    model = game.finite_label_model()
    P = EmpiricalMeasure(rng.normal(size=(8, 1)), rng.dirichlet(np.ones(H), 8), game.labels)
    np.testing.assert_allclose(game.generator_field(P), model.generator_field(P), atol=1e-14)
    np.testing.assert_allclose(game.velocity_field(P), model.velocity_field(P), atol=1e-14)


def test_finite_label_model_needs_label_free_kernels():
    with pytest.raises(ValueError):
        GameModel(GameKernelSpec(J_separable(), V_attraction(), 3)).finite_label_model()


def test_label_free_kernels_keep_uniform_labels(rng):
    H = 8
    game = GameModel(GameKernelSpec(J_gaussian(2.0, 0.5), V_attraction(1.0), H))
    P = EmpiricalMeasure(rng.normal(size=(10, 1)), np.full((10, H), 1.0 / H), game.labels)
    final = simulate(game, P, SimConfig(0.1, 1.0)).final
    np.testing.assert_allclose(final.labels, 1.0 / H, atol=1e-14)


def test_coarsen_and_exponential_cells():
    x = np.linspace(-1, 1, 7)[:, None]
    fine = exponential_label_cells(x, 16, 0.3, 1.2)
    np.testing.assert_allclose(coarsen(fine), exponential_label_cells(x, 8, 0.3, 1.2), atol=1e-15)
    np.testing.assert_allclose(coarsen(fine, 4).sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        coarsen(fine, 3)


def test_exponential_cells_zero_kappa_is_uniform():
    np.testing.assert_allclose(exponential_label_cells([[0.0]], 5, 0.0, 0.0), 0.2)
