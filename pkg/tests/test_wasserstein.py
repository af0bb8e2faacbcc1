import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwgf.distributions import Bernoulli, ParticleSet, Poisson, RngStream
from pwgf.wasserstein import (
    FiniteDistribution,
    KernelSpec,
    expectation_gap,
    median_heuristic_bandwidth,
    mmd2,
    mmd2_grad,
    mmd2_metric,
    rbf_kernel,
    w2_1d,
    w2_bernoulli,
    w2_bernoulli_vs_empirical,
    w2_empirical_1d,
    w2_factorized,
    w2_lp_oracle,
)


def point(x):
    return FiniteDistribution([x], [1.0])


def bern(p):
    return FiniteDistribution([0.0, 1.0], [1 - p, p])


def random_finite(gen, k, dim=1):
    atoms = gen.normal(size=(k, dim)) * 2
    probs = gen.dirichlet(np.ones(k))
    return FiniteDistribution(atoms, probs)


def fd(fun, x, h=1e-5):
    return (fun(x + h) - fun(x - h)) / (2 * h)


class TestLpOracle:
    def test_point_masses(self):
        assert w2_lp_oracle(point(0.0), point(3.0))[0] == pytest.approx(9.0, abs=1e-12)

    def test_identical(self):
        mu = FiniteDistribution([0.0, 2.0], [0.5, 0.5])
        assert w2_lp_oracle(mu, mu)[0] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("method", ["monotone", "lp"])
    def test_bernoulli_pair(self, method):
        assert w2_lp_oracle(bern(0.2), bern(0.7), method)[0] == pytest.approx(0.5, abs=1e-12)

    def test_coupling_marginals(self):
        gen = np.random.default_rng(0)
        mu, nu = random_finite(gen, 5), random_finite(gen, 7)
        for method in ("monotone", "lp"):
            _, c = w2_lp_oracle(mu, nu, method)
            np.testing.assert_allclose(c.plan.sum(axis=1), mu.probs, atol=1e-9)
            np.testing.assert_allclose(c.plan.sum(axis=0), nu.probs, atol=1e-9)

    def test_mass_mismatch(self):
        with pytest.raises(ValueError):
            FiniteDistribution([0.0, 1.0], [0.5, 0.6])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            w2_lp_oracle(point(0.0), FiniteDistribution([[0.0, 1.0]], [1.0]))

    def test_capacity(self):
        big = FiniteDistribution(np.arange(100.0), np.full(100, 0.01))
        with pytest.raises(ValueError):
            w2_lp_oracle(big, big, "lp")

    def test_metric_axioms(self):
        gen = np.random.default_rng(1)
        for _ in range(40):
            a, b, c = (random_finite(gen, int(gen.integers(1, 6))) for _ in range(3))
            dab = math.sqrt(w2_lp_oracle(a, b)[0])
            dba = math.sqrt(w2_lp_oracle(b, a)[0])
            dbc = math.sqrt(w2_lp_oracle(b, c)[0])
            dac = math.sqrt(w2_lp_oracle(a, c)[0])
            assert dab == pytest.approx(dba, abs=1e-12)
            assert dab >= 0
            assert w2_lp_oracle(a, a)[0] <= 1e-12
            assert dac <= dab + dbc + 1e-9

    def test_monotone_equals_lp(self):
        gen = np.random.default_rng(2)
        for _ in range(30):
            a, b = random_finite(gen, 6), random_finite(gen, 4)
            assert w2_lp_oracle(a, b, "monotone")[0] == pytest.approx(w2_lp_oracle(a, b, "lp")[0], abs=1e-9)

    def test_empirical_1d(self):
        gen = np.random.default_rng(3)
        for _ in range(20):
            xs, ys = gen.normal(size=8), gen.normal(size=8) + 1
            ref = w2_lp_oracle(FiniteDistribution.from_particles(xs),
                               FiniteDistribution.from_particles(ys), "lp")[0]
            assert w2_empirical_1d(xs, ys) == pytest.approx(ref, abs=1e-10)

    def test_from_distribution_poisson(self):
        mu = FiniteDistribution.from_distribution(Poisson(5.0))
        assert mu.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert w2_lp_oracle(Poisson(5.0), Poisson(5.0))[0] <= 1e-12


class TestBernoulli:
    @pytest.mark.parametrize("p,q,expected", [(0.3, 0.3, 0.0), (0.0, 1.0, 1.0), (0.2, 0.7, 0.5)])
    def test_closed_form(self, p, q, expected):
        assert w2_bernoulli(p, q) == pytest.approx(expected, abs=1e-15)

    def test_closed_form_matches_lp_on_grid(self):
        grid = np.linspace(0, 1, 11)
        for p in grid:
            for q in grid:
                ref = w2_lp_oracle(FiniteDistribution.from_distribution(Bernoulli(p)),
                                   FiniteDistribution.from_distribution(Bernoulli(q)), "lp")[0]
                assert w2_bernoulli(p, q) == pytest.approx(ref, abs=1e-12)

    def test_vs_empirical_examples(self):
        assert w2_bernoulli_vs_empirical(1.0, [1, 1, 1]) == 0.0
        assert w2_bernoulli_vs_empirical(0.5, [0, 1]) == 0.0
        assert w2_bernoulli_vs_empirical(0.5, [0.2, 0.9]) == pytest.approx(0.025, abs=1e-15)
        ref = w2_lp_oracle(bern(0.5), FiniteDistribution.from_particles([0.2, 0.9]), "lp")[0]
        assert ref == pytest.approx(0.025, abs=1e-9)

    def test_vs_empirical_bad_p(self):
        with pytest.raises(ValueError):
            w2_bernoulli_vs_empirical(1.5, [0.0])

    def test_vs_empirical_fractional_split_matches_lp(self):
        gen = np.random.default_rng(4)
        for _ in range(50):
            s = gen.normal(0.5, 0.7, size=int(gen.integers(1, 7)))
            p = float(gen.uniform())
            ref = w2_lp_oracle(bern(p), FiniteDistribution.from_particles(s), "lp")[0]
            assert w2_bernoulli_vs_empirical(p, s) == pytest.approx(ref, abs=1e-9)

    def test_dispatch(self):
        assert w2_1d(Bernoulli(0.2), Bernoulli(0.7)) == pytest.approx(0.5, abs=1e-15)
        assert w2_1d(Bernoulli(0.5), ParticleSet.from_points([0.2, 0.9])) == pytest.approx(0.025)
        assert w2_1d(Poisson(3.0), Poisson(3.0)) <= 1e-12


class TestFactorized:
    def test_single(self):
        assert w2_factorized([(Bernoulli(0.2), Bernoulli(0.7))]) == pytest.approx(0.5, abs=1e-15)

    def test_bernoulli_pairs(self):
        pairs = [(Bernoulli(0.2), Bernoulli(0.7)), (Bernoulli(0.4), Bernoulli(0.4))]
        assert w2_factorized(pairs) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("d", [2, 3])
    def test_equals_joint_lp(self, d):
        gen = np.random.default_rng(10 + d)
        for _ in range(5):
            mus = [random_finite(gen, int(gen.integers(1, 4))) for _ in range(d)]
            nus = [random_finite(gen, int(gen.integers(1, 4))) for _ in range(d)]
            joint = w2_lp_oracle(FiniteDistribution.product(*mus),
                                 FiniteDistribution.product(*nus), "lp")[0]
            assert w2_factorized(list(zip(mus, nus))) == pytest.approx(joint, abs=1e-8)


class TestExpectationGap:
    def test_examples(self):
        assert expectation_gap(Bernoulli(0.3), Bernoulli(0.3)) == 0.0
        assert expectation_gap(Poisson(5.0), Poisson(3.0)) == 2.0

    def test_lower_bound(self):
        gen = np.random.default_rng(5)
        for _ in range(1000):
            a = random_finite(gen, int(gen.integers(1, 5)))
            b = random_finite(gen, int(gen.integers(1, 5)))
            assert expectation_gap(a, b) ** 2 <= w2_lp_oracle(a, b)[0] + 1e-9


class TestKernel:
    def test_examples(self):
        k = KernelSpec(0.7)
        assert rbf_kernel(1.3, 1.3, k) == 1.0
        assert rbf_kernel(0.0, 0.7 * math.sqrt(2), k) == pytest.approx(math.exp(-1))
        assert rbf_kernel(0.2, 1.1, k) == rbf_kernel(1.1, 0.2, k)

    def test_bad_bandwidth(self):
        with pytest.raises(ValueError):
            KernelSpec(0.0)

    @pytest.mark.parametrize("pts,h", [([0, 1], 1.0), ([0, 0, 0], 1.0), ([0, 1, 2], 1.0), ([3.0], 1.0)])
    def test_median_heuristic(self, pts, h):
        assert median_heuristic_bandwidth(np.array(pts, float)) == h


class TestMmd:
    def test_examples(self):
        k = KernelSpec(1.0)
        assert mmd2(Bernoulli(1.0), [1, 1, 1], k) == pytest.approx(0.0, abs=1e-15)
        assert mmd2(Bernoulli(0.0), [1.0], k) == pytest.approx(2 - 2 * math.exp(-0.5), abs=1e-12)
        assert mmd2(Bernoulli(0.0), [1.0], k) == pytest.approx(0.78694, abs=1e-5)

    def test_matching_particles(self):
        # 1/4 zeros and 3/4 ones
        assert abs(mmd2(Bernoulli(0.75), [0, 1, 1, 1], KernelSpec(1.3))) <= 1e-12

    def test_bernoulli_half(self):
        k = KernelSpec(0.8)
        z = np.array([0.3, 1.2, -0.4])
        expected = -2 * np.mean(rbf_kernel(1.0, z, k) - rbf_kernel(0.0, z, k))
        assert mmd2_grad(Bernoulli(0.5), z, k) == pytest.approx(expected, abs=1e-15)

    def test_bernoulli_finite_difference(self):
        k, z = KernelSpec(1.0), [0.8, 0.1]
        num = fd(lambda p: mmd2(Bernoulli(p), z, k), 0.3)
        assert mmd2_grad(Bernoulli(0.3), z, k) == pytest.approx(num, abs=1e-7)

    def test_poisson_finite_difference(self):
        k = KernelSpec(2.0)
        z = Poisson(5.0).sample(20, RngStream(0)).flat() + 0.3
        num = fd(lambda lam: mmd2(Poisson(lam), z, k), 5.0)
        assert mmd2_grad(Poisson(5.0), z, k) == pytest.approx(num, rel=1e-6, abs=1e-9)

    def test_metric_is_bernoulli_curvature(self):
        k = KernelSpec(0.9)
        z = [0.0, 1.0, 1.0, 0.0, 1.0]
        num = (mmd2_grad(Bernoulli(0.6 + 1e-5), z, k) - mmd2_grad(Bernoulli(0.6 - 1e-5), z, k)) / 2e-5
        assert mmd2_metric(Bernoulli(0.6), k) == pytest.approx(num, rel=1e-6)

    def test_unsupported_family(self):
        from pwgf.distributions import Categorical
        with pytest.raises(ValueError):
            mmd2_grad(Categorical((0.0, 1.0), (0.5, 0.5)), [0.0], KernelSpec(1.0))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.99), st.lists(st.floats(-2, 3), min_size=1, max_size=12),
       st.floats(0.3, 3.0))
def test_bernoulli_mmd_grad_matches_fd(p, z, h):
    k = KernelSpec(h)
    num = fd(lambda q: mmd2(Bernoulli(q), z, k), p)
    assert mmd2_grad(Bernoulli(p), z, k) == pytest.approx(num, rel=1e-4, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 15.0), st.integers(0, 2**32), st.floats(0.5, 4.0))
def test_poisson_mmd_grad_matches_fd(lam, seed, h):
    k = KernelSpec(h)
    z = Poisson(lam).sample(12, RngStream(seed)).flat() - 0.4
    num = fd(lambda x: mmd2(Poisson(x), z, k), lam)
    assert mmd2_grad(Poisson(lam), z, k) == pytest.approx(num, rel=1e-4, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 8.0), st.floats(0.3, 3.0))
def test_semi_analytic_mmd_nonnegative_on_pmf_weighted_atoms(lam, h):
    # tilde holds the atoms of mu repeated in proportion to their pmf
    atoms, w = Poisson(lam).truncated_support()
    tilde = np.repeat(atoms, np.round(w * 400).astype(int))
    assert mmd2(Poisson(lam), tilde, KernelSpec(h)) >= -1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.lists(st.floats(-1.5, 2.5), min_size=1, max_size=6))
def test_bernoulli_vs_empirical_matches_lp_property(p, s):
    ref = w2_lp_oracle(bern(p), FiniteDistribution.from_particles(s), "lp")[0]
    assert w2_bernoulli_vs_empirical(p, s) == pytest.approx(ref, abs=1e-9)


def test_lp_handles_tiny_mass_atoms():
    # marginals that only balance to rounding used to come back infeasible
    mu = FiniteDistribution([0.0, 1.0], [1 - 1e-10, 1e-10])
    nu = FiniteDistribution([0.0], [1.0])
    assert w2_lp_oracle(mu, nu, "lp")[0] == pytest.approx(1e-10, abs=1e-9)
