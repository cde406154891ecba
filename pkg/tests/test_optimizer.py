import numpy as np
import pytest

from cpcox.errors import DegenerateFitError, InvalidStartError
from cpcox.likelihood import score_psi, score_xi, smoothed_log_partial_likelihood
from cpcox.model import Dataset, KernelSpec, ThetaParams
from cpcox.optimizer import (
    FitOptions,
    alternate_fit,
    maximize_psi_given_xi,
    maximize_xi_given_psi,
    multistart_fit,
)

from conftest import cox_newton_oracle, random_dataset, random_theta


OPTS = FitOptions()
K03 = KernelSpec(bandwidth=0.3)


class TestMaximizeXi:
    def test_first_order_condition(self, rng):
        ds = random_dataset(rng, 40)
        xi, f, converged = maximize_xi_given_psi(ds, [0.0, 0.0], [0.2, -0.1], K03, OPTS)
        assert converged
        th = ThetaParams(beta=xi[:1], gamma=xi[1:], psi=[0.2, -0.1])
        assert np.max(np.abs(score_xi(ds, th, K03))) < 1e-6

    def test_stationary_start_is_fixed_point(self, rng):
        ds = random_dataset(rng, 40)
        xi, f, _ = maximize_xi_given_psi(ds, [0.0, 0.0], [0.2, -0.1], K03, OPTS)
        xi2, f2, converged = maximize_xi_given_psi(ds, xi, [0.2, -0.1], K03, OPTS)
        assert converged
        assert np.max(np.abs(xi2 - xi)) < 1e-8
        assert f2 >= f - 1e-12

    def test_improves_objective(self, rng):
        ds = random_dataset(rng, 40)
        psi = [0.2, -0.1]
        f0 = smoothed_log_partial_likelihood(
            ds, ThetaParams(beta=[0.0], gamma=[0.0], psi=psi), K03)
        _, f, _ = maximize_xi_given_psi(ds, [0.0, 0.0], psi, K03, OPTS)
        assert f >= f0

    def test_zero_u_column_is_degenerate(self, rng):
        base = random_dataset(rng, 40)
        ds = Dataset(time=base.time, status=base.status, z=base.z,
                     u=np.zeros((base.n, 1)), v=base.v, x=base.x)
        with pytest.raises(DegenerateFitError):
            maximize_xi_given_psi(ds, [0.0, 0.0], [0.2, -0.1], K03, OPTS)

    def test_nonfinite_start_rejected(self, rng):
        ds = random_dataset(rng, 20)
        with pytest.raises(InvalidStartError):
            maximize_xi_given_psi(ds, [np.nan, 0.0], [0.0, 0.0], K03, OPTS)


class TestMaximizePsi:
    def test_gamma_zero_returns_start(self, rng):
        ds = random_dataset(rng, 30)
        psi, f, converged = maximize_psi_given_xi(ds, [0.7, 0.0], [0.3, -0.4], K03, OPTS)
        assert converged
        assert np.allclose(psi, [0.3, -0.4])

    def test_zero_iteration_budget(self, rng):
        ds = random_dataset(rng, 30)
        opts = FitOptions(ascent_max_iter=0)
        psi, f, converged = maximize_psi_given_xi(ds, [0.7, 0.3], [0.3, -0.4], K03, opts)
        assert not converged
        assert np.allclose(psi, [0.3, -0.4])
        th = ThetaParams(beta=[0.7], gamma=[0.3], psi=psi)
        assert f == pytest.approx(smoothed_log_partial_likelihood(ds, th, K03))

    def test_never_decreases(self, rng):
        for _ in range(5):
            ds = random_dataset(rng, 30)
            th = random_theta(rng)
            xi = th.xi
            f0 = smoothed_log_partial_likelihood(ds, th, K03)
            _, f, _ = maximize_psi_given_xi(ds, xi, th.psi, K03, OPTS)
            assert f >= f0 - 1e-12

    def test_scaled_first_order_condition(self, rng):
        ds = random_dataset(rng, 30)
        th = random_theta(rng)
        psi, _, converged = maximize_psi_given_xi(ds, th.xi, th.psi, K03, OPTS)
        if converged:
            g = score_psi(ds, th.with_psi(psi), K03)
            assert K03.bandwidth * np.max(np.abs(g)) < 1e-6


class TestAlternateFit:
    def test_trace_monotone_on_fixtures(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            ds = random_dataset(rng, 30)
            res = alternate_fit(ds, [0.0, 0.0], K03, OPTS)
            lls = [t.loglik for t in res.trace]
            assert all(b >= a - 1e-12 for a, b in zip(lls, lls[1:]))

    def test_converged_fit_satisfies_first_order(self, rng):
        ds = random_dataset(rng, 60)
        res = alternate_fit(ds, [0.0, 0.0], K03, OPTS)
        assert res.converged
        assert np.max(np.abs(score_xi(ds, res.theta_hat, K03))) < 1e-6

    def test_wrong_start_length(self, rng):
        ds = random_dataset(rng, 20)
        with pytest.raises(InvalidStartError):
            alternate_fit(ds, [0.0, 0.0, 0.0], K03, OPTS)


class TestMultistart:
    def test_deterministic(self, rng):
        ds = random_dataset(rng, 40)
        opts = FitOptions(grid_points_per_dim=3)
        r1 = multistart_fit(ds, K03, opts)
        r2 = multistart_fit(ds, K03, opts)
        assert np.array_equal(r1.theta_hat.psi, r2.theta_hat.psi)
        assert np.array_equal(r1.theta_hat.xi, r2.theta_hat.xi)
        assert r1.loglik == r2.loglik
        assert np.array_equal(r1.best_start, r2.best_start)

    def test_duplicate_starts_match_single(self, rng):
        ds = random_dataset(rng, 40)
        single = multistart_fit(ds, K03, FitOptions(psi_starts=((0.1, 0.2),)))
        triple = multistart_fit(ds, K03, FitOptions(
            psi_starts=((0.1, 0.2), (0.1, 0.2), (0.1, 0.2))))
        assert triple.n_starts == 3
        assert np.array_equal(triple.theta_hat.psi, single.theta_hat.psi)
        assert triple.loglik == single.loglik

    def test_beats_every_start(self, rng):
        ds = random_dataset(rng, 40)
        opts = FitOptions(grid_points_per_dim=3)
        res = multistart_fit(ds, K03, opts)
        for start in ((-1.0, -1.0), (0.0, 0.0), (1.0, 1.0)):
            one = alternate_fit(ds, start, K03, opts)
            assert res.loglik >= one.loglik - 1e-12

    def test_empty_start_list_rejected(self, rng):
        ds = random_dataset(rng, 20)
        with pytest.raises(InvalidStartError):
            multistart_fit(ds, K03, FitOptions(psi_starts=()))

    def test_grid_scan_oracle_one_dim(self):
        # q = 1: profile the objective over a fine psi grid by hand and
        # check the fitted maximum is at least as good
        rng = np.random.default_rng(3)
        n = 80
        psi_true = np.array([0.4])
        v = rng.normal(size=n)
        x = rng.normal(size=(n, 1))
        ind = (v + x[:, 0] * psi_true[0] >= 0).astype(float)
        z = rng.normal(size=(n, 1))
        u = np.ones((n, 1))
        lin = 0.6 * z[:, 0] + 1.2 * ind
        time = rng.exponential(np.exp(-lin))
        ds = Dataset(time=time, status=np.ones(n, dtype=int), z=z, u=u, v=v, x=x)
        k = KernelSpec(bandwidth=0.2)

        res = multistart_fit(ds, k, FitOptions(grid_points_per_dim=9))
        grid_best = -np.inf
        for p in np.linspace(-2.0, 2.0, 201):
            _, f, _ = maximize_xi_given_psi(ds, [0.0, 0.0], [p], k, OPTS)
            grid_best = max(grid_best, f)
        assert res.loglik >= grid_best - 1e-3


class TestStatisticalSanity:
    def test_xi_recovery_with_plane_fixed_at_truth(self):
        rng = np.random.default_rng(11)
        n = 500
        beta0, gamma0 = 0.8, 1.0
        psi0 = np.array([0.4, 0.3])
        z = (rng.random(n) < 0.5).astype(float)[:, None]
        v = rng.normal(-2.0, 2.0, n)
        x = np.column_stack([np.ones(n), rng.uniform(-0.5, 0.5, n)])
        ind = (v + x @ psi0 >= 0).astype(float)
        lin = beta0 * z[:, 0] + gamma0 * ind
        t0 = rng.exponential(np.exp(-lin))
        time = np.minimum(t0, 15.0)
        status = (t0 <= 15.0).astype(int)
        ds = Dataset(time=time, status=status, z=z, u=np.ones((n, 1)), v=v, x=x)

        opts = FitOptions(psi_starts=(tuple(psi0),), ascent_max_iter=0)
        res = multistart_fit(ds, None, opts)
        from cpcox.inference import covariance_xi
        k = KernelSpec(bandwidth=res.bandwidth_used)
        cov = covariance_xi(ds, res.theta_hat, k)
        se = np.sqrt(np.diag(cov) / n)
        assert abs(res.theta_hat.beta[0] - beta0) < 3 * se[0]
        assert abs(res.theta_hat.gamma[0] - gamma0) < 3 * se[1]

    def test_reduces_to_plain_cox_without_subgroup_block(self, rng):
        # no u covariates at all: the fit is an ordinary Cox model on z
        for _ in range(10):
            ds0 = random_dataset(rng, 40, p1=2)
            ds = Dataset(time=ds0.time, status=ds0.status, z=ds0.z,
                         u=np.empty((ds0.n, 0)), v=ds0.v, x=ds0.x)
            res = multistart_fit(ds, K03, FitOptions(
                psi_starts=((0.0, 0.0),), ascent_max_iter=0))
            beta_oracle = cox_newton_oracle(ds.time, ds.status, ds.z)
            assert np.max(np.abs(res.theta_hat.beta - beta_oracle)) < 1e-8


class TestFitOptions:
    def test_auto_bandwidth(self):
        assert FitOptions().resolve_bandwidth(1000) == pytest.approx(
            np.log(1000.0) ** 2 / 1000.0)

    def test_explicit_bandwidth(self):
        assert FitOptions(bandwidth=0.25).resolve_bandwidth(10) == 0.25

    def test_bad_bandwidth(self):
        with pytest.raises(InvalidStartError):
            FitOptions(bandwidth=-0.1).resolve_bandwidth(10)
