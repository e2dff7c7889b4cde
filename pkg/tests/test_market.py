import numpy as np
import pytest

from wealthgame.errors import WealthGameError
from wealthgame.market import (
    HiddenDynamics,
    HiddenVariant,
    MarketSpec,
    ReturnMap,
    h_of,
    make_rng,
    novikov_diagnostic,
    simulate_bundle,
    simulate_hidden,
    simulate_stock,
)


def ou(lam=8.0, mu_bar=0.02, sigma=0.3):
    return HiddenDynamics(HiddenVariant.LINEAR_OU, lam, mu_bar, sigma)


def lin_spec(lam=8.0, mu_bar=0.02, sigma=0.3, sigma_S=0.15, rho=-0.8, T=0.5, K=50, A0=0.05):
    return MarketSpec(ou(lam, mu_bar, sigma), ReturnMap("identity"), sigma_S, rho, T, K, 1.0, A0)


def bounded_spec():
    dyn = HiddenDynamics(HiddenVariant.BOUNDED_NL, 1.0, 0.02, 0.4, a_l=-0.3, a_u=0.3)
    return MarketSpec(dyn, ReturnMap("signed_sqrt", 0.25), 0.15, -0.8, 0.5, 50, 1.0, 0.04)


class TestReturnMap:
    def test_identity(self):
        assert h_of(ReturnMap("identity"), 0.05) == 0.05

    def test_signed_sqrt(self):
        m = ReturnMap("signed_sqrt", 0.25)
        assert h_of(m, 0.04) == pytest.approx(0.05, abs=1e-15)
        assert h_of(m, -0.04) == pytest.approx(-0.05, abs=1e-15)

    def test_unknown_kind_rejected(self):
        with pytest.raises(WealthGameError):
            ReturnMap("cubic")


class TestInvariantsAtConstruction:
    def test_bounded_needs_mu_inside(self):
        with pytest.raises(WealthGameError):
            HiddenDynamics(HiddenVariant.BOUNDED_NL, 1.0, 0.5, 0.4, a_l=-0.3, a_u=0.3)

    def test_cir_needs_nonneg_mu(self):
        with pytest.raises(WealthGameError):
            HiddenDynamics(HiddenVariant.CIR, 1.0, -0.1, 0.4)

    def test_spec_ranges(self):
        with pytest.raises(WealthGameError):
            lin_spec(sigma_S=0.0)
        with pytest.raises(WealthGameError):
            lin_spec(rho=-1.5)
        with pytest.raises(WealthGameError):
            lin_spec(K=1)


class TestSimulateHidden:
    def test_fixed_point_of_drift(self):
        spec = lin_spec(sigma=0.0, mu_bar=0.02, A0=0.02)
        A = simulate_hidden(spec, np.zeros((3, spec.K)))
        assert np.all(A == 0.02)

    def test_zero_noise_matches_exact_decay(self):
        # sigma_mu = 0: Euler tracks A0 e^{-lam t} + mu(1 - e^{-lam t}) to O(dt)
        spec = lin_spec(lam=8.0, mu_bar=0.02, sigma=0.0, K=2000, A0=0.05)
        A = simulate_hidden(spec, np.zeros((1, spec.K)))[0]
        t = spec.time_grid()
        exact = 0.05 * np.exp(-8.0 * t) + 0.02 * (1 - np.exp(-8.0 * t))
        assert np.max(np.abs(A - exact)) < 5 * spec.dt

    def test_bounded_support(self):
        spec = bounded_spec()
        rng = make_rng(11)
        dB = rng.normal(0, np.sqrt(spec.dt), (64, spec.K))
        A = simulate_hidden(spec, dB)
        assert A.min() >= -0.3 and A.max() <= 0.3

    def test_cir_nonnegative(self):
        dyn = HiddenDynamics(HiddenVariant.CIR, 1.0, 0.02, 0.4)
        spec = MarketSpec(dyn, ReturnMap("signed_sqrt", 0.25), 0.15, -0.8, 0.5, 50, 1.0, 0.04)
        rng = make_rng(12)
        A = simulate_hidden(spec, rng.normal(0, np.sqrt(spec.dt), (64, spec.K)))
        assert A.min() >= 0.0


class TestSimulateStock:
    def test_zero_noise_returns(self):
        # with zero Gaussian increments returns_k = h dt exactly
        spec = lin_spec(sigma=0.0, mu_bar=0.05, A0=0.05, T=0.5, K=50)
        A = simulate_hidden(spec, np.zeros((2, 50)))
        ret, S, hits = simulate_stock(spec, A, np.zeros((2, 50)), np.zeros((2, 50)))
        assert np.allclose(ret, 0.05 * spec.dt)
        assert hits == 0
        assert np.allclose(S[:, 1] / S[:, 0], 1 + 0.0005)

    def test_uncorrelated_when_rho_zero(self):
        spec = lin_spec(rho=0.0)
        rng = make_rng(21)
        n = 10_000
        dW = rng.normal(0, np.sqrt(spec.dt), (n, spec.K))
        dB = rng.normal(0, np.sqrt(spec.dt), (n, spec.K))
        A = simulate_hidden(spec, dB)
        ret, _, _ = simulate_stock(spec, A, dW, dB)
        resid = (ret - A[:, : spec.K] * spec.dt).ravel()
        b = dB.ravel()
        corr = np.corrcoef(resid, b)[0, 1]
        se = 1.0 / np.sqrt(len(resid))
        assert abs(corr) < 3 * se

    def test_base_params_return_std(self):
        spec = lin_spec(A0=0.05, mu_bar=0.02)
        rng = make_rng(22)
        n = 10_000
        dW = rng.normal(0, np.sqrt(spec.dt), (n, spec.K))
        dB = rng.normal(0, np.sqrt(spec.dt), (n, spec.K))
        A = simulate_hidden(spec, dB)
        ret, S, _ = simulate_stock(spec, A, dW, dB)
        target = spec.sigma_S * np.sqrt(spec.dt)
        assert abs(ret.std() / target - 1) < 0.05
        assert S.min() > 0

    def test_positivity_floor_counted(self):
        # force a catastrophic return to hit the floor
        spec = lin_spec()
        A = np.zeros((1, spec.K + 1))
        dW = np.zeros((1, spec.K))
        dW[0, 0] = -200.0  # drives 1 + ret deeply negative
        ret, S, hits = simulate_stock(spec, A, dW, np.zeros((1, spec.K)))
        assert hits >= 1
        assert S.min() > 0


class TestEulerConsistency:
    def test_strong_order_slope(self):
        # dyadic refinement against the exact OU recursion driven by the same
        # increments; slope of log error vs log dt should sit near 1 for
        # additive noise (the acceptance window is [0.4, 1.1])
        lam, mu_bar, sigma = 8.0, 0.02, 0.3
        T = 0.5
        K_fine = 2**12
        rng = make_rng(33)
        n = 256
        dB_fine = rng.normal(0, np.sqrt(T / K_fine), (n, K_fine))
        # exact reference on the finest grid: A' = A e^{-l dt} + mu(1-e^{-l dt}) + s*intexp
        dt_f = T / K_fine
        ref = np.full(n, 0.05)
        decay = np.exp(-lam * dt_f)
        for k in range(K_fine):
            ref = ref * decay + mu_bar * (1 - decay) + sigma * decay ** 0.5 * dB_fine[:, k]
        errs, dts = [], []
        for lev in (5, 6, 7, 8):
            K = 2**lev
            step = K_fine // K
            dB = dB_fine.reshape(n, K, step).sum(axis=2)
            spec = lin_spec(lam=lam, mu_bar=mu_bar, sigma=sigma, T=T, K=K, A0=0.05)
            A = simulate_hidden(spec, dB)
            errs.append(np.sqrt(np.mean((A[:, -1] - ref) ** 2)))
            dts.append(T / K)
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert 0.4 <= slope <= 1.1

    def test_ou_exact_moments(self):
        # K = 500 keeps the Euler bias below the Monte Carlo resolution at
        # n = 1e5; simulate in chunks to bound memory
        spec = lin_spec(A0=0.05, mu_bar=0.02, K=500)
        rng = make_rng(34)
        n = 100_000
        chunks = []
        for _ in range(10):
            dB = rng.normal(0, np.sqrt(spec.dt), (n // 10, spec.K))
            chunks.append(simulate_hidden(spec, dB)[:, -1])
        a_T = np.concatenate(chunks)
        lam, sig, T = 8.0, 0.3, 0.5
        mean_exact = 0.05 * np.exp(-lam * T) + 0.02 * (1 - np.exp(-lam * T))
        var_exact = sig**2 / (2 * lam) * (1 - np.exp(-2 * lam * T))
        se_mean = a_T.std() / np.sqrt(n)
        assert abs(a_T.mean() - mean_exact) < 3 * se_mean
        se_var = a_T.var() * np.sqrt(2.0 / n)
        assert abs(a_T.var() - var_exact) < 3 * se_var + 3e-5


class TestNovikov:
    def test_bounded_state(self):
        rep = novikov_diagnostic(bounded_spec())
        assert rep.bounded
        assert rep.b_max == pytest.approx(0.25 * np.sqrt(0.3) / 0.15, rel=1e-12)

    def test_cir_unbounded_without_truncation(self):
        dyn = HiddenDynamics(HiddenVariant.CIR, 1.0, 0.02, 0.4)
        spec = MarketSpec(dyn, ReturnMap("signed_sqrt", 0.25), 0.15, -0.8, 0.5, 50, 1.0, 0.04)
        assert not novikov_diagnostic(spec).bounded

    def test_truncation_passthrough(self):
        rep = novikov_diagnostic(lin_spec(), truncation_bound=0.5)
        assert rep.bounded and rep.b_max == pytest.approx(0.5 / 0.15)


def test_bundle_reproducible():
    spec = lin_spec()
    b1 = simulate_bundle(spec, 8, make_rng(5))
    b2 = simulate_bundle(spec, 8, make_rng(5))
    assert np.array_equal(b1.S, b2.S)
    assert np.array_equal(b1.A, b2.A)
