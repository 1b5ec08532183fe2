import numpy as np
import pytest

from mortlab.data import synthesize_cluster, synthetic_truth
from mortlab.errors import DegenerateSeriesError, RankError
from mortlab.lilee import (
    FactorPanel,
    LiLeeParams,
    fit_ar1,
    fit_lilee,
    fit_rwd,
    forecast_lilee,
    leading_singular_pair,
    load_params,
    save_params,
)


def jacobi_svd(M, sweeps=100, tol=1e-14):
    """Independent full SVD oracle: one-sided Jacobi rotations on columns.

    Returns (U, s, V) with M = U @ diag(s) @ V.T, singular values sorted
    descending.  Used only as a test oracle; shares no code with the
    power-iteration implementation under test.
    """
    A = np.array(M, dtype=float)
    m, n = A.shape
    V = np.eye(n)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p] @ A[:, q]
                app = A[:, p] @ A[:, p]
                aqq = A[:, q] @ A[:, q]
                if abs(apq) <= tol * np.sqrt(app * aqq) + 1e-300:
                    continue
                off = max(off, abs(apq))
                tau = (aqq - app) / (2.0 * apq)
                if tau == 0.0:
                    t = 1.0
                elif abs(tau) > 1e12:
                    t = 1.0 / (2.0 * tau)  # asymptotic form avoids tau^2 overflow
                else:
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                Ap = c * A[:, p] - s * A[:, q]
                Aq = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = Ap, Aq
                Vp = c * V[:, p] - s * V[:, q]
                Vq = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = Vp, Vq
        if off == 0.0:
            break
    sigmas = np.linalg.norm(A, axis=0)
    order = np.argsort(sigmas)[::-1]
    sigmas = sigmas[order]
    U = np.zeros((m, n))
    nonzero = sigmas > 0
    U[:, nonzero] = A[:, order][:, nonzero] / sigmas[nonzero]
    return U, sigmas, V[:, order]


class TestJacobiOracle:
    def test_oracle_agrees_with_lapack(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((12, 7))
        _, s_j, _ = jacobi_svd(M)
        s_l = np.linalg.svd(M, compute_uv=False)
        assert np.allclose(s_j, s_l, atol=1e-10)


class TestLeadingSingularPair:
    def test_exact_rank_one(self):
        rng = np.random.default_rng(1)
        u0 = rng.standard_normal(8)
        v0 = rng.standard_normal(5)
        M = np.outer(u0, v0)
        u, s, v = leading_singular_pair(M)
        assert s == pytest.approx(np.linalg.norm(u0) * np.linalg.norm(v0), abs=1e-10)
        recon = s * np.outer(u, v)
        assert np.max(np.abs(recon - M)) <= 1e-10

    def test_diagonal_case(self):
        M = np.diag([3.0, 1.0])
        u, s, v = leading_singular_pair(M)
        assert s == pytest.approx(3.0, abs=1e-12)
        assert np.allclose(np.abs(u), [1.0, 0.0], atol=1e-10)
        assert np.allclose(np.abs(v), [1.0, 0.0], atol=1e-10)

    def test_matches_jacobi_oracle_on_random_matrix(self):
        rng = np.random.default_rng(2)
        M = rng.standard_normal((10, 10))
        u, s, v = leading_singular_pair(M)
        U, sig, V = jacobi_svd(M)
        best = sig[0] * np.outer(U[:, 0], V[:, 0])
        assert np.linalg.norm(s * np.outer(u, v) - best) <= 1e-8

    def test_sign_convention(self):
        rng = np.random.default_rng(3)
        M = rng.standard_normal((6, 4))
        u, _, _ = leading_singular_pair(M)
        assert u.sum() >= 0

    def test_zero_matrix_raises(self):
        with pytest.raises(RankError):
            leading_singular_pair(np.zeros((3, 3)))


class TestFitLiLee:
    def test_rank1_recovery(self, rank1_truth, rank1_cluster):
        params, resid = fit_lilee(rank1_cluster)
        got = np.outer(params.B, params.K)
        want = np.outer(rank1_truth.B, rank1_truth.K)
        assert np.linalg.norm(got - want) <= 1e-8
        # K recovered up to the shared normalization
        assert np.max(np.abs(params.K - rank1_truth.K)) <= 1e-6

    def test_constant_surface_gives_zero_factors(self):
        truth = synthetic_truth(n_countries=2, year_range=(2000, 2019), seed=5, specific="none")
        const = LiLeeParams(
            countries=truth.countries,
            ages=truth.ages,
            years=truth.years,
            alpha=truth.alpha,
            B=truth.B,
            K=np.zeros_like(truth.K),
            b=truth.b,
            k=truth.k,
        )
        cluster = synthesize_cluster(const, noise_sd=0.0, seed=0)
        params, _ = fit_lilee(cluster)
        assert np.allclose(params.K, 0.0, atol=1e-12)
        assert np.allclose(params.k, 0.0, atol=1e-12)

    def test_country_permutation(self, small_cluster):
        from mortlab.data import ClusterDataset

        params, _ = fit_lilee(small_cluster)
        flipped = ClusterDataset(surfaces=small_cluster.surfaces[::-1])
        params2, _ = fit_lilee(flipped)
        assert np.max(np.abs(params.B - params2.B)) <= 1e-10
        assert np.max(np.abs(params.K - params2.K)) <= 1e-10
        assert np.max(np.abs(params.k - params2.k[::-1])) <= 1e-10

    def test_reconstruction_identity(self, small_cluster):
        params, resid = fit_lilee(small_cluster)
        for i, surf in enumerate(small_cluster.surfaces):
            recon = (
                params.alpha[i][:, None]
                + np.outer(params.B, params.K)
                + np.outer(params.b[i], params.k[i])
                + resid[i]
            )
            assert np.max(np.abs(recon - surf.log_m)) <= 1e-10

    def test_normalization(self, small_cluster):
        params, _ = fit_lilee(small_cluster)
        assert params.B.sum() == pytest.approx(1.0, abs=1e-10)
        assert params.K.sum() == pytest.approx(0.0, abs=1e-8)
        for i in range(params.n_countries):
            assert params.b[i].sum() == pytest.approx(1.0, abs=1e-10)
            assert params.k[i].sum() == pytest.approx(0.0, abs=1e-8)

    def test_two_step_does_not_increase_residual(self, small_cluster):
        params, resid = fit_lilee(small_cluster)
        step1 = np.stack(
            [
                surf.log_m - params.alpha[i][:, None] - np.outer(params.B, params.K)
                for i, surf in enumerate(small_cluster.surfaces)
            ]
        )
        assert np.linalg.norm(resid) <= np.linalg.norm(step1) + 1e-12

    def test_noisy_reconstruction_rmse(self, small_truth):
        cluster = synthesize_cluster(small_truth, noise_sd=0.01, seed=99)
        params, resid = fit_lilee(cluster)
        rmse = np.sqrt(np.mean(resid**2))
        assert rmse <= 0.02


class TestLinearForecasters:
    def test_rwd_exact_linear(self):
        d = fit_rwd(np.array([0.0, -1.0, -2.0, -3.0]))
        assert d.drift == pytest.approx(-1.0)
        assert d.sigma == pytest.approx(0.0)

    def test_rwd_hand_arithmetic(self):
        # diffs of [0,1,0,1] are [1,-1,1]: mean 1/3, sample sd 2*sqrt(1/3)
        d = fit_rwd(np.array([0.0, 1.0, 0.0, 1.0]))
        diffs = [1.0, -1.0, 1.0]
        mean = sum(diffs) / 3
        sd = (sum((x - mean) ** 2 for x in diffs) / 2) ** 0.5
        assert d.drift == pytest.approx(mean)
        assert d.sigma == pytest.approx(sd)
        assert d.sigma == pytest.approx(2 * np.sqrt(1.0 / 3.0))

    def test_rwd_constant(self):
        d = fit_rwd(np.full(10, 4.2))
        assert d.drift == 0.0
        assert d.sigma == 0.0

    def test_ar1_deterministic(self):
        k = 0.5 ** np.arange(10)
        a = fit_ar1(k)
        assert a.phi == pytest.approx(0.5, abs=1e-12)
        assert a.xi_sd == pytest.approx(0.0, abs=1e-12)

    def test_ar1_alternating(self):
        k = np.array([1.0, -1.0, 1.0, -1.0, 1.0])
        a = fit_ar1(k)
        assert a.phi == pytest.approx(-1.0)

    def test_ar1_zero_series_degenerate(self):
        with pytest.raises(DegenerateSeriesError):
            fit_ar1(np.zeros(10))

    def test_ar1_random_walk_monte_carlo(self):
        rng = np.random.default_rng(2024)
        hits = 0
        for _ in range(1000):
            walk = np.cumsum(rng.standard_normal(500))
            a = fit_ar1(walk)
            if 0.95 <= a.phi <= 1.05:
                hits += 1
        assert hits >= 950

    def test_central_forecast_drift(self, rank1_cluster):
        params, _ = fit_lilee(rank1_cluster)
        # overwrite with a clean drift so arithmetic is exact
        t = params.years.size
        clean = LiLeeParams(
            countries=params.countries,
            ages=params.ages,
            years=params.years,
            alpha=params.alpha,
            B=params.B,
            K=-1.0 * np.arange(t, dtype=float) + (t - 1) / 2.0,
            b=params.b,
            k=np.zeros_like(params.k),
        )
        ext = forecast_lilee(clean, horizon=3, mode="central")
        last = clean.K[-1]
        assert np.allclose(ext.values[:, 0], [last - 1, last - 2, last - 3], atol=1e-10)
        # phi = 0 target: zero specific history forecasts zero
        assert np.allclose(ext.values[:, 1:], 0.0, atol=1e-12)

    def test_phi_zero_forecasts_zero(self):
        # k = [0,4,0,4,...] fits phi = 0 exactly: the forecast is zero no
        # matter where the series ends
        t = 20
        k = np.tile([0.0, 4.0], t // 2)
        a = fit_ar1(k)
        assert a.phi == 0.0
        ages = np.arange(0, 5)
        truth = LiLeeParams(
            countries=("AAA", "BBB"),
            ages=ages,
            years=2000 + np.arange(t),
            alpha=np.tile(-5.0 + 0.1 * ages, (2, 1)),
            B=np.full(5, 0.2),
            K=np.linspace(2, -2, t) - np.linspace(2, -2, t).mean(),
            b=np.full((2, 5), 0.2),
            k=np.vstack([k, k * 0.0]),  # raw series: centering would change phi
        )
        ext = forecast_lilee(truth, horizon=4, mode="central")
        assert np.allclose(ext.values[:, 1], 0.0, atol=1e-12)

    def test_stochastic_mean_matches_central(self, small_cluster):
        params, _ = fit_lilee(small_cluster)
        central = forecast_lilee(params, horizon=5, mode="central")
        years, paths = forecast_lilee(
            params, horizon=5, mode="stochastic", n_sims=10_000, seed=77
        )
        rwd = fit_rwd(params.K)
        tol = 3.0 * max(rwd.sigma, 1e-12) / np.sqrt(10_000)
        for h in range(5):
            got = paths[:, h, 0].mean()
            want = central.values[h, 0]
            assert abs(got - want) <= tol * np.sqrt(h + 1) * 1.5 + 1e-9


class TestParamsIO:
    def test_round_trip(self, tmp_path, small_cluster):
        params, _ = fit_lilee(small_cluster)
        path = tmp_path / "params.json"
        save_params(params, path)
        back = load_params(path)
        assert back.countries == params.countries
        for name in ("alpha", "B", "K", "b", "k"):
            assert np.array_equal(getattr(back, name), getattr(params, name))

    def test_schema_checked(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"schema": "other"}')
        with pytest.raises(Exception):
            load_params(path)


def test_factor_panel_layout(small_cluster):
    params, _ = fit_lilee(small_cluster)
    panel = FactorPanel.from_params(params)
    assert panel.labels[0] == "K"
    assert panel.labels[1:] == params.countries
    assert np.array_equal(panel.values[:, 0], params.K)
    assert np.array_equal(panel.values[:, 2], params.k[1])
