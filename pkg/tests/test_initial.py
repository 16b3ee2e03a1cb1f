import numpy as np
import pytest
from scipy import integrate, stats

from multipop.initial import InitialLaw, exponential_label_cells
from multipop.pde import Grid1D


def profile_law(position="gaussian"):
    return InitialLaw(position=position, radius=1.0, scale=0.5, labels="profile",
                      offset=[0.0, -0.5], slope=[1.5, -1.5])


def test_samples_are_nested_across_N():
    law = profile_law()
    small = law.sample(64, np.random.default_rng(3))
    large = law.sample(256, np.random.default_rng(3))
    np.testing.assert_array_equal(large.positions[:64], small.positions)
    np.testing.assert_array_equal(large.labels[:64], small.labels)


@pytest.mark.parametrize("position", ["uniform", "gaussian"])
def test_samples_stay_in_ball(position, rng):
    law = InitialLaw(d=2, H=3, position=position, radius=0.7, center=[1.0, -1.0], scale=0.4)
    P = law.sample(500, rng)
    assert np.all(np.linalg.norm(P.positions - [1.0, -1.0], axis=1) <= 0.7)
    np.testing.assert_allclose(P.labels.sum(axis=1), 1.0)
    assert law.support_radius == pytest.approx(np.sqrt(2) + 0.7)


def test_samples_follow_truncated_gaussian(rng):
    law = profile_law()
    x = law.sample(4000, rng).positions[:, 0]
    ref = stats.truncnorm(-2.0, 2.0, scale=0.5)
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


def test_quantile_sample_is_symmetric():
    law = profile_law()
    x = law.quantile_sample(100).positions[:, 0]
    np.testing.assert_allclose(x, -x[::-1], atol=1e-14)
    assert np.all(np.diff(x) > 0)


def test_quantile_sample_needs_deterministic_labels():
    with pytest.raises(ValueError):
        InitialLaw(labels="dirichlet").quantile_sample(10)


def test_profile_is_softmax():
    law = profile_law()
    lam = law.label_profile([[0.4]])[0]
    z = np.array([0.6, -1.1])
    np.testing.assert_allclose(lam, np.exp(z) / np.exp(z).sum())


@pytest.mark.parametrize("position", ["uniform", "gaussian"])
def test_cell_masses_match_quadrature(position):
    law = profile_law(position)
    edges = np.linspace(-1.5, 1.5, 31)
    m = law.cell_masses(edges)
    assert m.sum() == pytest.approx(1.0, abs=1e-14)
    dens = (lambda x: 0.5 if abs(x) <= 1 else 0.0) if position == "uniform" else stats.truncnorm(-2, 2, scale=0.5).pdf
    j = 12
    for h in range(2):
        val, _ = integrate.quad(lambda x: dens(x) * law.label_profile([[x]])[0, h], edges[j], edges[j + 1])
        assert m[j, h] == pytest.approx(val, rel=1e-6)


def test_cell_masses_of_fixed_labels_split_evenly():
    law = InitialLaw(H=3, position="uniform", labels="fixed", label_vector=[0.2, 0.3, 0.5])
    g = Grid1D.symmetric(1.0, 10)
    m = law.cell_masses(g.edges)
    np.testing.assert_allclose(m.sum(axis=0), [0.2, 0.3, 0.5])
    np.testing.assert_allclose(m[:, 0], 0.02)


def test_exponential_cells_closed_form():
    k = 2.0
    cells = exponential_label_cells([[1.0]], 4, 0.0, k)[0]
    edges = np.arange(5) / 4
    exact = np.diff(np.exp(k * edges)) / (np.exp(k) - 1)
    np.testing.assert_allclose(cells, exact, rtol=1e-14)


def test_law_validation():
    with pytest.raises(ValueError):
        InitialLaw(position="cauchy")
    with pytest.raises(ValueError):
        InitialLaw(labels="fixed", label_vector=[0.5, 0.6])
    with pytest.raises(ValueError):
        InitialLaw(radius=0.0)
