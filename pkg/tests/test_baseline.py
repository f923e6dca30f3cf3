import numpy as np
import pytest

from aimdalloc.baseline import brute_force_oracle, solve_concave, solve_sigmoidal
from aimdalloc.utility import LogUtility, PayoffUtility, SigmoidUtility


def random_logs(rng, n):
    return LogUtility(rng.uniform(0.01, 25, n), rng.uniform(25, 100, n))


class TestConcave:
    def test_single_user_takes_capacity(self):
        res = solve_concave([LogUtility(0.5, 50)], 12.0)
        assert res.x_star[0] == pytest.approx(12.0, rel=1e-12)

    def test_identical_users_split_evenly(self):
        res = solve_concave([LogUtility(0.7, 45)] * 5, 20.0)
        np.testing.assert_allclose(res.x_star, 4.0, rtol=1e-10)

    def test_matches_grid_oracle(self):
        models = [LogUtility(0.2, 40), LogUtility(0.6, 50), LogUtility(1.0, 60)]
        res = solve_concave(models, 30.0)
        ref = brute_force_oracle(models, 30.0, grid=200, refine=4)
        assert abs(res.objective - ref.objective) / ref.objective <= 1e-4
        assert res.objective >= ref.objective - 1e-9

    def test_kkt_and_feasibility(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            n = int(rng.integers(2, 30))
            u = random_logs(rng, n)
            cap = rng.uniform(0.1, 0.6) * float(np.sum(u.chi))
            res = solve_concave(u, cap)
            mu = res.dual
            assert np.all(res.x_star >= 0)
            assert cap * (1 - 1e-8) <= res.x_star.sum() <= cap * (1 + 1e-12)
            pos = res.x_star > 0
            assert np.max(np.abs(u.deriv(res.x_star[pos]) - mu)) <= 1e-8 * (1 + mu)
            assert np.all(u.deriv(0.0)[~pos] <= mu + 1e-8)
            assert res.residual <= 1e-8 * (1 + mu)

    def test_payoff_users_below_capacity(self):
        v = PayoffUtility(LogUtility(np.array([0.5, 1.0]), np.array([40.0, 60.0])), 2.0)
        res = solve_concave(v, 1000.0)
        assert res.dual == 0.0
        np.testing.assert_allclose(res.x_star, v.argmax(1000.0))
        assert res.x_star.sum() < 1000.0

    def test_monotone_in_capacity(self):
        u = random_logs(np.random.default_rng(2), 6)
        objs = [solve_concave(u, c).objective for c in np.linspace(1, 300, 40)]
        assert np.all(np.diff(objs) >= -1e-9)


class TestSigmoidal:
    def test_single_user_takes_capacity(self):
        res = solve_sigmoidal([SigmoidUtility(0.3, 40)], 25.0)
        assert res.x_star[0] == pytest.approx(25.0)

    def test_generous_capacity(self):
        w = SigmoidUtility(np.array([0.5, 1.0, 2.0]), np.array([20.0, 30.0, 40.0]))
        res = solve_sigmoidal(w, 500.0)
        assert np.all(w(res.x_star) > 99)

    def test_steep_pair_is_all_or_nothing(self):
        w = SigmoidUtility(np.array([25.0, 25.0]), np.array([30.0, 50.0]))
        res = solve_sigmoidal(w, 50.0)
        # exhaustive 2-D grid on the same discretization
        ref = brute_force_oracle(w, 50.0, grid=2000)
        assert res.objective >= ref.objective - 1e-9
        small, big = sorted(res.x_star)
        assert small < 1.0 and big > 30.0

    def test_dp_equals_exhaustive_grid(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            w = SigmoidUtility(rng.uniform(0.05, 25, 2), rng.uniform(25, 100, 2))
            cap = rng.uniform(0.3, 1.5) * float(np.sum(w.psi))
            dp = solve_sigmoidal(w, cap, bins=400, refine=False)
            ex = brute_force_oracle(w, cap, grid=400)
            assert dp.objective == ex.objective

    def test_beats_random_feasible_allocations(self):
        rng = np.random.default_rng(3)
        w = SigmoidUtility(rng.uniform(0.05, 5, 6), rng.uniform(25, 100, 6))
        cap = 150.0
        res = solve_sigmoidal(w, cap)
        samples = rng.dirichlet(np.ones(6), 5000) * cap
        assert res.objective >= np.max(np.sum(w(samples), axis=1)) - 1e-9
        assert res.x_star.sum() <= cap * (1 + 1e-12)

    def test_bins_lower_bound(self):
        with pytest.raises(ValueError):
            solve_sigmoidal([SigmoidUtility(1, 1)], 1.0, bins=50)


class TestOracle:
    def test_single_user(self):
        assert brute_force_oracle([LogUtility(1, 10)], 7.0).x_star[0] == pytest.approx(7.0)

    def test_rejects_large_n(self):
        with pytest.raises(ValueError):
            brute_force_oracle([LogUtility(1, 10)] * 4, 7.0)
