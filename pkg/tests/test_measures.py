import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hellgan.measures import (
    DataSample, GaussianModel, KdeSpec, derive_seed, gauss_hermite_rule, gaussian_hessian_ratio,
    gaussian_score, integrate_against_kde, kde_density, sample_contaminated, sample_latent,
)
from hellgan.nn_core import ConfigError, DomainError, GeneratorParams


def test_clean_sample_mean():
    d = sample_contaminated(100_000, 10.0, 1.5, 0.0, seed=11)
    assert len(d) == 100_000
    # 3 sigma / sqrt(n) = 4.5 / 316.2 = 0.0142 < 0.05
    assert abs(d.values.mean() - 10.0) < 0.05


def test_pure_contaminant_mean():
    d = sample_contaminated(100_000, 10.0, 1.5, 1.0, seed=3)
    assert abs(d.values.mean()) < 0.05


def test_contamination_fraction():
    d = sample_contaminated(50_000, 10.0, 1.5, 0.2, seed=5)
    frac = np.mean(d.values < 5.0)
    # binomial sd sqrt(.2 * .8 / 5e4) = 0.0018
    assert abs(frac - 0.2) < 0.01


def test_samplers_deterministic():
    a = sample_contaminated(1000, 10, 1.5, 0.1, seed=9)
    b = sample_contaminated(1000, 10, 1.5, 0.1, seed=9)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.provenance == b.provenance
    assert sample_latent(1, 4).values.tobytes() == sample_latent(1, 4).values.tobytes()
    assert not np.array_equal(sample_latent(10, 1).values, sample_latent(10, 2).values)


def test_epsilon_validated():
    with pytest.raises(ConfigError):
        sample_contaminated(10, 10, 1.5, 1.5, seed=0)
    with pytest.raises(ConfigError):
        sample_contaminated(10, 10, 1.5, -0.1, seed=0)


def test_latent_variance():
    z = sample_latent(100_000, seed=21).values
    # sd of the sample variance is sqrt(2 / n) = 0.0045; [0.97, 1.03] is ~6.7 sd
    assert 0.97 <= z.var(ddof=1) <= 1.03
    assert len(sample_latent(1, 0).values) == 1


def test_derive_seed_is_stable_and_spread():
    assert derive_seed(1, "a", 0.1) == derive_seed(1, "a", 0.1)
    seeds = {derive_seed(7, "cell", e, r) for e in (0, 0.01, 0.05) for r in range(500)}
    assert len(seeds) == 1500
    assert all(0 <= s < 2**63 for s in seeds)


def test_kde_point_values():
    spec = KdeSpec(1.0)
    assert kde_density([0.0], spec, 0.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert kde_density([-1.0, 1.0], spec, 0.0) == pytest.approx(0.2419707245, abs=1e-10)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(0)
    data = rng.normal(size=40) * 3
    for c in (0.05, 0.5, 2.0):
        spec = KdeSpec(c)
        grid = np.linspace(data.min() - 8 * c, data.max() + 8 * c, 200_001)
        dens = kde_density(data, spec, grid)
        assert np.all(dens >= 0)
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)


def test_kde_errors():
    with pytest.raises(DomainError):
        kde_density([], KdeSpec(1.0), 0.0)
    with pytest.raises(ConfigError):
        KdeSpec(0.0)


def test_integrate_against_kde():
    rule = gauss_hermite_rule(20)
    data = DataSample(np.array([1.0, 2.0, 7.0]))
    assert integrate_against_kde(lambda x: np.ones_like(x), data, KdeSpec(0.3), rule) == \
        pytest.approx(1.0, abs=1e-14)
    assert integrate_against_kde(lambda x: x, [5.0], KdeSpec(0.01), rule) == \
        pytest.approx(5.0, abs=1e-12)
    assert integrate_against_kde(lambda x: x**2, [0.0], KdeSpec(2.0), rule) == \
        pytest.approx(4.0, abs=1e-10)


def test_integrate_against_kde_matches_density_quadrature():
    data = np.array([-0.5, 0.2, 1.1])
    spec = KdeSpec(0.4)
    f = np.cos
    grid = np.linspace(-6, 7, 400_001)
    ref = np.trapezoid(f(grid) * kde_density(data, spec, grid), grid)
    assert integrate_against_kde(f, data, spec, gauss_hermite_rule(40)) == pytest.approx(ref, abs=1e-9)


def test_gauss_hermite_small_rules():
    r1 = gauss_hermite_rule(1)
    np.testing.assert_allclose(r1.nodes, [0.0], atol=1e-15)
    np.testing.assert_allclose(r1.weights, [1.0])
    r2 = gauss_hermite_rule(2)
    np.testing.assert_allclose(r2.nodes, [-1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(r2.weights, [0.5, 0.5], atol=1e-14)
    assert gauss_hermite_rule(20).expect(lambda x: x**4) == pytest.approx(3.0, abs=1e-10)
    with pytest.raises(ConfigError):
        gauss_hermite_rule(0)
    with pytest.raises(ConfigError):
        gauss_hermite_rule(129)


def _normal_moment(p):
    return 0.0 if p % 2 else float(math.prod(range(1, p, 2)))


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8, 13, 20])
def test_gauss_hermite_exact_on_monomials(k):
    rule = gauss_hermite_rule(k)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)
    for p in range(2 * k):
        got = rule.expect(lambda x: x**p)
        expected = _normal_moment(p)
        # odd moments cancel terms of size ~E[x^(p+1)], so scale by that
        scale = max(1.0, _normal_moment(p + p % 2))
        assert got == pytest.approx(expected, abs=1e-12 * scale)


@pytest.mark.parametrize("k", [64, 128])
def test_large_rules_normalised(k):
    rule = gauss_hermite_rule(k)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert rule.expect(lambda x: x**2) == pytest.approx(1.0, abs=1e-10)


def test_gaussian_density_normalised():
    rule = gauss_hermite_rule(64)
    model = GaussianModel(GeneratorParams(3.0, 0.7))
    # int q dx = E_{Z~N(0, s^2)}[q(mu + z)] / phi_s(z); integrate over a wide grid instead
    grid = np.linspace(-10, 16, 200_001)
    assert np.trapezoid(model.pdf(grid), grid) == pytest.approx(1.0, abs=1e-10)
    assert rule.expect(lambda x: np.exp(model.logpdf(x)) / model.pdf(x), 3.0, 0.7) == \
        pytest.approx(1.0, abs=1e-12)


def test_gaussian_score_values():
    th = GeneratorParams(2.0, 0.5)
    np.testing.assert_allclose(gaussian_score(th, 2.0), [0.0, -2.0])
    np.testing.assert_allclose(gaussian_score(GeneratorParams(0, 1), 1.0), [1.0, 0.0])


def test_gaussian_score_matches_fd_of_logpdf():
    rng = np.random.default_rng(4)
    for _ in range(50):
        mu, s, x = rng.normal(), rng.uniform(0.3, 3), rng.normal(scale=2)
        lp = lambda m, sg: GaussianModel(GeneratorParams(m, sg)).logpdf(x)
        h = 1e-6
        fd = np.array([(lp(mu + h, s) - lp(mu - h, s)) / (2 * h),
                       (lp(mu, s + h) - lp(mu, s - h)) / (2 * h)])
        got = gaussian_score(GeneratorParams(mu, s), x)
        assert np.max(np.abs(got - fd)) <= 1e-7 * max(1.0, np.abs(fd).max())


def test_score_and_hessian_ratio_have_zero_mean():
    rule = gauss_hermite_rule(64)
    th = GeneratorParams(10.0, 1.5)
    np.testing.assert_allclose(rule.expect(lambda x: gaussian_score(th, x), 10.0, 1.5), 0.0,
                               atol=1e-8)
    np.testing.assert_allclose(rule.expect(lambda x: gaussian_hessian_ratio(th, x), 10.0, 1.5),
                               0.0, atol=1e-8)


def test_hessian_ratio_values_and_fd():
    assert gaussian_hessian_ratio(GeneratorParams(0, 1), 0.0)[0, 0] == pytest.approx(-1.0)
    rng = np.random.default_rng(8)
    for _ in range(30):
        mu, s, x = rng.normal(), rng.uniform(0.5, 2), rng.normal(scale=2)
        q = lambda m, sg: GaussianModel(GeneratorParams(m, sg)).pdf(x)
        h = 1e-4
        p = np.array([mu, s])
        fd = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
                fd[i, j] = (q(*(p + ei + ej)) - q(*(p + ei - ej)) - q(*(p - ei + ej))
                            + q(*(p - ei - ej))) / (4 * h * h)
        ratio = gaussian_hessian_ratio(GeneratorParams(mu, s), x)
        got = ratio * q(mu, s)
        assert np.max(np.abs(got - fd)) <= 1e-6 * max(1.0, np.abs(fd).max())


@settings(max_examples=50, deadline=None)
@given(st.floats(-100, 100), st.floats(0.01, 10), st.floats(0.01, 5))
def test_kde_nonnegative(x, c, shift):
    assert kde_density([0.0, shift], KdeSpec(c), x) >= 0.0
