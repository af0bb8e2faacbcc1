import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwgf.cost import CostFunction, constant, elementwise, quadratic
from pwgf.distributions import Bernoulli, ParticleSet, Poisson, RngStream, product
from pwgf.errors import NumericError
from pwgf.flow import (
    PARAM_FLOOR,
    FlowConfig,
    Projection,
    Trajectory,
    expected_cost,
    project_bernoulli_exact,
    project_expectation_match,
    project_mmd,
    pwgf_descent_loop,
    wgf_step,
)
from pwgf.wasserstein import KernelSpec, mmd2, w2_bernoulli_vs_empirical

P = ParticleSet.from_points


class TestWgfStep:
    def test_arithmetic(self):
        cost = CostFunction(lambda z: 3 * z[:, 0], lambda z: np.full_like(z, 3.0))
        assert wgf_step(P([2.0]), cost, 0.1).flat()[0] == pytest.approx(1.7)

    def test_zero_gradient(self):
        pts = P([0.0, 1.0, 4.0])
        assert np.array_equal(wgf_step(pts, constant(2.0), 0.3).values, pts.values)

    def test_half_square(self):
        cost = elementwise(lambda z: z**2 / 2, lambda z: z)
        out = wgf_step(P([1.0, -1.0]), cost, 0.5)
        assert out.flat().tolist() == [0.5, -0.5]
        assert cost(P([1.0, -1.0]).values).mean() == 0.5
        assert cost(out.values).mean() == 0.125

    def test_non_finite_gradient_names_particle(self):
        cost = CostFunction(lambda z: z[:, 0], lambda z: np.where(z > 2, np.nan, 1.0), validate=False)
        with pytest.raises(NumericError, match="particle 2"):
            wgf_step(P([0.0, 1.0, 3.0]), cost, 0.1)

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            wgf_step(P([0.0]), quadratic(), 0.0)


class TestProjections:
    def test_expectation_match(self):
        assert project_expectation_match(Bernoulli(0.5), P([0, 1, 1, 1])).p == 0.75
        assert project_expectation_match(Poisson(1.0), P([4.2, 5.8])).lam == pytest.approx(5.0)
        assert project_expectation_match(Bernoulli(0.5), P([-0.2, -0.1])).p == PARAM_FLOOR
        assert project_expectation_match(Poisson(1.0), P([-3.0])).lam == PARAM_FLOOR

    def test_expectation_match_factorized(self):
        dist = product(Bernoulli(0.5), Poisson(2.0))
        out = project_expectation_match(dist, ParticleSet([[1.0, 3.0], [0.0, 5.0]]))
        np.testing.assert_allclose(out.params, [0.5, 4.0])

    def test_exact_examples(self):
        assert project_bernoulli_exact(P([0.9, 0.8, -0.1])).p == pytest.approx(2 / 3)
        out = project_bernoulli_exact(P([0, 0, 1]))
        assert out.p == pytest.approx(1 / 3)
        assert w2_bernoulli_vs_empirical(out.p, [0, 0, 1]) == 0.0
        assert project_bernoulli_exact(P([0.6, 2.0, 0.51])).p == 1.0
        assert project_bernoulli_exact(P([0.5])).p == 0.0

    def test_exact_brute_force(self):
        tilde = [0.9, 0.8, -0.1]
        grid = np.linspace(0, 1, 1001)
        costs = [w2_bernoulli_vs_empirical(p, tilde) for p in grid]
        p_star = project_bernoulli_exact(P(tilde)).p
        assert w2_bernoulli_vs_empirical(p_star, tilde) <= min(costs) + 1e-12

    def test_mmd_fixed_point(self):
        # tilde equal to mu's atoms in proportion: 3/4 ones
        cfg = FlowConfig(projection="mmd_gradient", inner_steps=20)
        out = project_mmd(Bernoulli(0.75), P([0, 1, 1, 1]), KernelSpec(1.0), cfg)
        assert abs(out.p - 0.75) < 1e-6

    def test_mmd_moves_bernoulli_up(self):
        cfg = FlowConfig(projection="mmd_gradient", inner_steps=50)
        k = KernelSpec(1.0)
        tilde = P([1, 1, 1, 1])
        out = project_mmd(Bernoulli(0.5), tilde, k, cfg)
        assert out.p > 0.9
        assert mmd2(out, tilde, k) < mmd2(Bernoulli(0.5), tilde, k)

    def test_mmd_moves_poisson_up(self):
        cfg = FlowConfig(projection="mmd_gradient", inner_steps=10)
        tilde = P(Poisson(5.0).sample(200, RngStream(0)).flat() + 1.0)
        assert project_mmd(Poisson(5.0), tilde, None, cfg).lam > 5.0

    def test_exact_projection_rejects_poisson(self):
        cfg = FlowConfig(projection=Projection.EXACT_BERNOULLI)
        with pytest.raises(ValueError):
            pwgf_descent_loop(Poisson(2.0), quadratic(5.0), cfg, 1, RngStream(0))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(n_particles=0),
                                    dict(projection="mmd_gradient", inner_steps=0),
                                    dict(projection="nope")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FlowConfig(**kw)

    def test_trajectory_strictly_increasing(self):
        t = Trajectory()
        t.append(0, [0.5], 1.0, 0.0)
        with pytest.raises(ValueError):
            t.append(0, [0.5], 1.0, 0.0)


class TestDescentLoop:
    def test_bernoulli_reaches_optimum(self):
        cfg = FlowConfig(epsilon=0.1, n_particles=64)
        traj = pwgf_descent_loop(Bernoulli(0.5), quadratic(1.0), cfg, 200, RngStream(0))
        assert traj.error is None
        assert traj.objectives[-1] < 0.01
        assert traj.params[-1, 0] > 0.99

    def test_constant_cost_is_stationary(self):
        cfg = FlowConfig(projection="exact_bernoulli")
        traj = pwgf_descent_loop(Bernoulli(0.3), constant(1.0), cfg, 5, RngStream(1))
        assert len(traj.records) == 6
        # integer particles stay put, so projection reproduces the empirical fraction only
        for p in traj.params[1:, 0]:
            assert p * cfg.n_particles == pytest.approx(round(p * cfg.n_particles))

    def test_constant_cost_expectation_match_is_identity(self):
        # with f constant the particles are exact samples; params only move by sampling noise
        cfg = FlowConfig(n_particles=4096)
        traj = pwgf_descent_loop(Poisson(3.0), constant(0.0), cfg, 3, RngStream(2))
        assert np.all(np.abs(traj.params[:, 0] - 3.0) < 0.2)

    def test_poisson_expectation_match_fixed_point(self):
        # the mean-matching iteration has E[lam'] = lam - 2 eps (lam - 5), fixed point 5
        cfg = FlowConfig(epsilon=0.1, n_particles=256)
        traj = pwgf_descent_loop(Poisson(2.0), quadratic(5.0), cfg, 100, RngStream(3))
        assert abs(traj.params[-30:, 0].mean() - 5.0) < 0.2

    def test_poisson_objective_minimizer_via_exact_gradient(self):
        # E[(z - 5)^2] = lam + (lam - 5)^2 is minimized at 4.5
        from pwgf.estimators import exact_gradient_oracle
        lam = 2.0
        for _ in range(200):
            lam -= 0.2 * exact_gradient_oracle(Poisson(lam), quadratic(5.0)).grad[0]
        assert abs(lam - 4.5) < 0.2

    def test_records_and_determinism(self):
        cfg = FlowConfig(projection="mmd_gradient", inner_steps=3)
        a = pwgf_descent_loop(Poisson(2.0), quadratic(5.0), cfg, 5, RngStream(9))
        b = pwgf_descent_loop(Poisson(2.0), quadratic(5.0), cfg, 5, RngStream(9))
        assert [r.iteration for r in a.records] == list(range(6))
        np.testing.assert_array_equal(a.params, b.params)

    def test_numeric_abort_keeps_partial_trajectory(self):
        cost = CostFunction(lambda z: z[:, 0], lambda z: np.where(z > 6, np.inf, -1.0), validate=False)
        cfg = FlowConfig(epsilon=0.5, n_particles=64)
        traj = pwgf_descent_loop(Poisson(3.0), cost, cfg, 50, RngStream(0))
        assert traj.error is not None
        assert 1 <= len(traj.records) < 51

    def test_expected_cost_exact(self):
        assert expected_cost(Poisson(3.0), quadratic(5.0)) == pytest.approx(3.0 + 4.0, abs=1e-9)
        assert expected_cost(Bernoulli(0.25), quadratic(1.0)) == pytest.approx(0.75)


def descent_fraction(projection, c=3.0, seeds=range(20), steps=100):
    """Share of steps with F non-increasing within a 3 std(f)/sqrt(N) slack."""
    cfg = FlowConfig(epsilon=0.02, n_particles=512, projection=projection)
    cost = quadratic(c)
    ok = total = 0
    for s in seeds:
        traj = pwgf_descent_loop(Poisson(1.0), cost, cfg, steps, RngStream(s))
        for rec_a, rec_b in zip(traj.records[:-1], traj.records[1:]):
            d = Poisson(float(rec_a.params[0]))
            sd = np.sqrt(expected_cost(d, elementwise(lambda z: (z - c) ** 4, lambda z: 4 * (z - c) ** 3))
                         - rec_a.objective**2)
            ok += rec_b.objective <= rec_a.objective + 3 * sd / np.sqrt(cfg.n_particles)
            total += 1
    return ok / total


@pytest.mark.parametrize("projection", ["expectation_match", "mmd_gradient"])
def test_monotone_descent(projection):
    assert descent_fraction(projection, seeds=range(5), steps=50) >= 0.95


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=30))
def test_mean_matching_equals_exact_on_binary_particles(values):
    tilde = P(values)
    assert project_expectation_match(Bernoulli(0.5), tilde, delta=0.0).p == pytest.approx(
        project_bernoulli_exact(tilde).p, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1.0, 2.0), min_size=1, max_size=10))
def test_exact_projection_minimizes_on_grid(values):
    grid = np.linspace(0, 1, 1001)
    best = min(w2_bernoulli_vs_empirical(p, values) for p in grid)
    p_star = project_bernoulli_exact(P(values)).p
    assert w2_bernoulli_vs_empirical(p_star, values) <= best + 1e-12
