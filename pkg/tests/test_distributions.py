import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hipamdp import diffcore as dc
from hipamdp import distributions as D

from .oracles import enumerate_joint_mass, fd_gradient, rel_err

simplex = st.lists(st.floats(0.05, 5.0), min_size=2, max_size=5).map(lambda w: np.array(w) / np.sum(w))


def test_categorical_point_mass():
    rng = np.random.default_rng(0)
    assert all(D.categorical_sample([1.0, 0.0, 0.0], rng) == 0 for _ in range(200))


@pytest.mark.parametrize("probs", [[0.5, 0.5], [0.2, 0.3, 0.5]])
def test_categorical_frequencies(probs):
    rng = np.random.default_rng(1)
    draws = np.array([D.categorical_sample(probs, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=len(probs)) / draws.size
    np.testing.assert_allclose(freq, probs, atol=0.01)


def test_degenerate_simplex_rejected():
    with pytest.raises(D.DistributionError):
        D.categorical_sample([0.0, 0.0], np.random.default_rng(0))


def test_gumbel_noise_dominates():
    assert D.gumbel_max_sample(np.log([1 / 3] * 3), np.array([3.0, 0.0, 0.0])) == 0


def test_gumbel_max_ties_go_to_lowest_index():
    assert D.gumbel_max_sample(np.zeros(3), np.zeros(3)) == 0


def test_gumbel_max_marginal_matches_categorical():
    probs = np.array([0.2, 0.3, 0.5])
    g = D.gumbel_noise(np.random.default_rng(2), (100_000, 3))
    a = D.gumbel_max_sample(np.log(probs), g)
    np.testing.assert_allclose(np.bincount(a, minlength=3) / a.size, probs, atol=0.01)


def test_gumbel_max_fixed_noise_is_deterministic():
    lp = np.log([0.1, 0.6, 0.3])
    g = D.gumbel_noise(np.random.default_rng(3), 3)
    assert D.gumbel_max_sample(lp, g) == D.gumbel_max_sample(lp, g.copy())


def test_gumbel_noise_clamped_finite():
    class Extreme:
        def random(self, shape):
            return np.array([0.0, 1.0, 0.5])
    g = D.gumbel_noise(Extreme(), 3)
    assert np.all(np.isfinite(g))
    assert g[0] == pytest.approx(-np.log(-np.log(1e-12)))


def test_gumbel_softmax_uniform_at_unit_temperature():
    out = D.gumbel_softmax(np.log([1 / 3] * 3), np.zeros(3), 1.0)
    np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-15)


def test_gumbel_softmax_low_temperature_near_one_hot():
    rng = np.random.default_rng(4)
    for _ in range(100):
        lp = np.log(rng.dirichlet(np.ones(4)))
        g = D.gumbel_noise(rng, 4)
        z = np.sort(g + lp)
        if z[-1] - z[-2] < 0.1:
            continue
        assert D.gumbel_softmax(lp, g, 0.01).max() > 0.999


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_gumbel_softmax_rejects_nonpositive_temperature(t):
    with pytest.raises(D.DistributionError):
        D.gumbel_softmax(np.zeros(2), np.zeros(2), t)


def test_gumbel_softmax_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    g = D.gumbel_noise(rng, 4)
    w = rng.normal(size=4)
    lp0 = np.log(rng.dirichlet(np.ones(4)))

    def f(lp):
        return float(np.dot(w, D.gumbel_softmax(lp, g, 0.7)))

    x = dc.Tensor(lp0, requires_grad=True)
    (grad,) = dc.grad(dc.tsum(D.gumbel_softmax(x, g, 0.7) * w), [x])
    assert rel_err(grad.data, fd_gradient(f, lp0)) < 1e-6


@settings(max_examples=200, deadline=None)
@given(probs=simplex, seed=st.integers(0, 2**31), t=st.floats(1e-3, 50.0))
def test_gumbel_softmax_argmax_consistency(probs, seed, t):
    g = D.gumbel_noise(np.random.default_rng(seed), probs.size)
    lp = np.log(probs)
    assert int(np.argmax(D.gumbel_softmax(lp, g, t))) == D.gumbel_max_sample(lp, g)


def test_kl_categorical_examples():
    assert D.kl_categorical([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert D.kl_categorical([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2), abs=1e-12)
    assert D.kl_categorical([1.0, 0.0], [0.5, 0.5]) == pytest.approx(0.693147, abs=1e-6)
    expected = 0.5 * np.log(2) + 0.5 * np.log(2 / 3)
    assert D.kl_categorical([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.143841, abs=1e-6)


def test_kl_categorical_infinite_is_error():
    with pytest.raises(D.DistributionError):
        D.kl_categorical([0.5, 0.5], [1.0, 0.0])


def test_kl_gaussian_examples():
    z = np.zeros(1)
    assert D.kl_diag_gaussian(z, z, z, z) == 0.0
    assert D.kl_diag_gaussian(z, z, np.ones(1), z) == pytest.approx(0.5, abs=1e-15)
    val = D.kl_diag_gaussian(z, z, z, np.log([2.0]))
    assert val == pytest.approx(np.log(2) + 1 / 8 - 1 / 2, abs=1e-15)
    assert val == pytest.approx(0.318147, abs=1e-6)


def test_kl_gaussian_dimension_mismatch():
    with pytest.raises(D.DistributionError):
        D.kl_diag_gaussian(np.zeros(2), np.zeros(2), np.zeros(3), np.zeros(3))


def test_kl_gaussian_matches_monte_carlo():
    rng = np.random.default_rng(6)
    mp, lp_, mq, lq = np.array([0.3, -1.0]), np.array([-0.2, 0.1]), np.array([0.0, -0.5]), np.array([0.1, -0.3])
    x = mp + np.exp(lp_) * rng.normal(size=(400_000, 2))
    mc = np.mean(D.gaussian_log_prob(x, mp, lp_) - D.gaussian_log_prob(x, mq, lq))
    assert D.kl_diag_gaussian(mp, lp_, mq, lq) == pytest.approx(mc, abs=5e-3)


@settings(max_examples=50, deadline=None)
@given(p=simplex, seed=st.integers(0, 2**31))
def test_kl_nonnegative_and_zero_on_self(p, seed):
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(p.size))
    assert D.kl_categorical(p, q) >= -1e-15
    assert D.kl_categorical(p, p) == pytest.approx(0.0, abs=1e-15)
    m, s = rng.normal(size=3), rng.normal(size=3) * 0.5
    m2, s2 = rng.normal(size=3), rng.normal(size=3) * 0.5
    assert D.kl_diag_gaussian(m, s, m2, s2) >= 0
    assert D.kl_diag_gaussian(m, s, m, s) == pytest.approx(0.0, abs=1e-15)


def test_log_prob_joint_examples():
    std_normal = D.DiagGaussian(np.zeros(1), np.zeros(1))
    val = D.log_prob_joint([0.5, 0.5], std_normal, 0, [0.0])
    assert val == pytest.approx(np.log(0.5) + np.log(1 / np.sqrt(2 * np.pi)), abs=1e-12)
    assert val == pytest.approx(-1.612, abs=1e-3)
    g = D.DiagGaussian(np.array([0.4]), np.array([-0.5]))
    assert D.log_prob_joint([0.0, 1.0], g, 1, [0.1]) == pytest.approx(g.log_prob(np.array([0.1])))


def test_log_prob_joint_errors():
    g = D.DiagGaussian(np.zeros(1), np.zeros(1))
    with pytest.raises(D.DistributionError):
        D.log_prob_joint([0.5, 0.5], g, 2, [0.0])
    with pytest.raises(D.DistributionError):
        D.log_prob_joint([0.5, 0.5], g, 0, [0.0, 1.0])


def test_joint_density_normalises():
    probs = np.array([0.3, 0.7])
    means = np.array([0.5, -1.0])
    std = 0.6
    assert enumerate_joint_mass(probs, means, std) == pytest.approx(1.0, abs=1e-3)
    x = np.linspace(-8, 8, 4001)
    total = 0.0
    for a in range(2):
        g = D.DiagGaussian(np.array([means[a]]), np.array([np.log(std)]))
        dens = np.exp([D.log_prob_joint(probs, g, a, [xi]) for xi in x])
        total += np.trapezoid(dens, x)
    assert total == pytest.approx(1.0, abs=1e-3)


def test_log_std_is_clamped():
    g = D.DiagGaussian(np.zeros(2), np.array([-9.0, 4.0]))
    np.testing.assert_array_equal(g.log_std, [D.LOG_STD_MIN, D.LOG_STD_MAX])
    assert np.all(g.std > 0)


def test_squashed_samples_inside_box():
    # tanh rounds to exactly +-1 beyond |u| ~ 19 in float64, so the check is closed
    g = D.DiagGaussian(np.array([3.0, -3.0, 0.0]), np.array([1.0, 1.0, 1.0]))
    rng = np.random.default_rng(7)
    for _ in range(2000):
        u, x = g.sample_squashed(rng)
        assert np.all(np.abs(x) <= 1.0) and np.all(np.isfinite(x))
        np.testing.assert_array_equal(x, np.tanh(u))
        assert np.all(np.abs(x[np.abs(u) < 15]) < 1.0)
