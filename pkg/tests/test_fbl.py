import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from starris_ee.fbl import (FBLParams, PowerParams, covariances, dispersion_arg, energy_efficiency,
                            qfunc, qfunc_inv, rate_fbl, rates, shannon_term, sum_weighted_ee)


def bisect_qinv(eps, lo=-40.0, hi=40.0):
    """Independent oracle: bisection on Q(x) = erfc(x / sqrt 2) / 2 from the math module."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(mid / math.sqrt(2)) > eps:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_instance(seed, k=2, n_u=2, n_bs=2, n_s=2):
    rng = np.random.default_rng(seed)
    return cn(rng, (k, n_u, n_bs)), cn(rng, (k, n_bs, n_s)) * 0.7


def scalar(h, gammas):
    k = len(gammas)
    return (np.full((k, 1, 1), h, complex), np.asarray(gammas, complex).reshape(k, 1, 1))


class TestQfuncInv:
    def test_half(self):
        assert qfunc_inv(0.5) == 0.0

    def test_two(self):
        assert qfunc_inv(0.02275013195) == pytest.approx(2.0, abs=1e-8)

    def test_1e5(self):
        assert qfunc_inv(1e-5) == pytest.approx(4.264890794, abs=1e-8)
        assert qfunc_inv(1e-5) == pytest.approx(bisect_qinv(1e-5), abs=1e-8)

    @pytest.mark.parametrize("eps", [1e-9, 1e-7, 1e-3, 0.1, 0.3, 0.7, 0.99])
    def test_bisection_oracle(self, eps):
        assert qfunc_inv(eps) == pytest.approx(bisect_qinv(eps), rel=1e-10, abs=1e-12)

    def test_monotone_and_inverse(self):
        eps = np.logspace(-9, -0.01, 200)
        x = qfunc_inv(eps)
        assert np.all(np.diff(x) < 0)
        np.testing.assert_allclose(qfunc(x), eps, rtol=1e-10)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_domain(self, eps):
        with pytest.raises(ValueError):
            qfunc_inv(eps)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(blocklength=0), dict(epsilon=0.0), dict(epsilon=0.6),
                                    dict(noise_power=0.0)])
    def test_fbl_invalid(self, kw):
        with pytest.raises(ValueError):
            FBLParams(**kw)

    @pytest.mark.parametrize("kw", [dict(p_static=0), dict(beta=0), dict(p_budget=-1)])
    def test_power_invalid(self, kw):
        with pytest.raises(ValueError):
            PowerParams.uniform(2, **kw)

    def test_weights_floors(self):
        with pytest.raises(ValueError):
            PowerParams(1, 1, 1, (1.0, 0.0), (0.0, 0.0))
        with pytest.raises(ValueError):
            PowerParams(1, 1, 1, (1.0, 1.0), (0.0, -1.0))


class TestShannon:
    def test_zero_signal(self):
        h, g = random_instance(0)
        g[0] = 0
        assert shannon_term(h, g, 0, 1.0) == 0.0

    def test_siso(self):
        h, g = scalar(1.0, [1.0])
        assert shannon_term(h, g, 0, 1.0) == pytest.approx(math.log(2), abs=1e-15)

    def test_two_user_scalar(self):
        h, g = scalar(1.0, [1.0, 1.0])
        assert shannon_term(h, g, 0, 1.0) == pytest.approx(math.log(1.5), abs=1e-15)

    def test_nonnegative_and_finite_check(self):
        h, g = random_instance(1, k=3)
        assert all(shannon_term(h, g, k, 0.3) >= 0 for k in range(3))
        g[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            shannon_term(h, g, 0, 1.0)

    def test_covariance_pieces(self):
        h, g = random_instance(2, k=3)
        own, total, interf = covariances(h, g, 0.5)
        for k in range(3):
            s = 0.5 * np.eye(2) + sum(h[k] @ g[i] @ g[i].conj().T @ h[k].conj().T
                                      for i in range(3) if i != k)
            np.testing.assert_allclose(interf[k], s, atol=1e-12)
            np.testing.assert_allclose(total[k], s + own[k], atol=1e-12)


class TestDispersion:
    def test_zero(self):
        h, g = random_instance(3)
        g[1] = 0
        assert dispersion_arg(h, g, 1, 1.0) == 0.0

    def test_siso_snr_one(self):
        h, g = scalar(1.0, [1.0])
        assert dispersion_arg(h, g, 0, 1.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_identity(self, seed):
        h, g = random_instance(seed, k=3)
        own, total, interf = covariances(h, g, 0.7)
        for k in range(3):
            ident = 2 * (2 - np.real(np.trace(interf[k] @ np.linalg.inv(total[k]))))
            assert dispersion_arg(h, g, k, 0.7) == pytest.approx(ident, abs=1e-10)
            assert 0 <= dispersion_arg(h, g, k, 0.7) < 2 * 2


class TestRate:
    def test_half_eps_is_shannon(self):
        h, g = random_instance(4)
        assert rate_fbl(h, g, 0, FBLParams(100, 0.5, 1.0)) == shannon_term(h, g, 0, 1.0)

    def test_zero_signal(self):
        h, g = random_instance(5)
        g[0] = 0
        assert rate_fbl(h, g, 0, FBLParams()) == 0.0

    def test_siso_value(self):
        h, g = scalar(1.0, [1.0])
        val = rate_fbl(h, g, 0, FBLParams(256, 1e-5, 1.0))
        assert val == pytest.approx(math.log(2) - 4.264890794 / 16, abs=1e-9)
        assert val == pytest.approx(0.426591, abs=1e-6)

    def test_can_be_negative(self):
        h, g = scalar(0.01, [1.0])
        assert rate_fbl(h, g, 0, FBLParams(16, 1e-9, 1.0)) < 0

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), l1=st.integers(1, 4000), l2=st.integers(1, 4000))
    def test_monotone_in_blocklength(self, seed, l1, l2):
        h, g = random_instance(seed)
        lo, hi = sorted((l1, l2))
        assert rate_fbl(h, g, 0, FBLParams(lo, 1e-5)) <= rate_fbl(h, g, 0, FBLParams(hi, 1e-5))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), e1=st.floats(1e-9, 0.49), e2=st.floats(1e-9, 0.49))
    def test_monotone_in_epsilon(self, seed, e1, e2):
        h, g = random_instance(seed)
        if e1 == e2:
            return
        lo, hi = sorted((e1, e2))
        assert rate_fbl(h, g, 0, FBLParams(256, lo)) < rate_fbl(h, g, 0, FBLParams(256, hi))

    def test_limit_to_shannon(self):
        h, g = random_instance(6)
        s = shannon_term(h, g, 0, 1.0)
        gaps = [s - rate_fbl(h, g, 0, FBLParams(256, 0.5 - d)) for d in (1e-2, 1e-4, 1e-6)]
        assert gaps[0] > gaps[1] > gaps[2] > 0
        assert gaps[2] < 1e-6

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_unitary_invariance(self, seed):
        h, g = random_instance(seed)
        rng = np.random.default_rng(seed + 1)
        q, _ = np.linalg.qr(cn(rng, (2, 2)))
        g2 = g.copy()
        g2[0] = g[0] @ q
        fbl = FBLParams()
        assert shannon_term(h, g2, 0, 1.0) == pytest.approx(shannon_term(h, g, 0, 1.0), abs=1e-10)
        assert dispersion_arg(h, g2, 0, 1.0) == pytest.approx(dispersion_arg(h, g, 0, 1.0), abs=1e-10)
        np.testing.assert_allclose(rates(h, g2, fbl), rates(h, g, fbl), atol=1e-10)

    def test_scalar_oracle_grid(self):
        for snr in (0.1, 1.0, 10.0, 1000.0):
            for l in (32, 256, 2048):
                for eps in (1e-7, 1e-3, 0.2):
                    h, g = scalar(1.0, [math.sqrt(snr)])
                    ref = math.log1p(snr) - bisect_qinv(eps) * math.sqrt(2 * snr / (1 + snr)) / math.sqrt(l)
                    assert rate_fbl(h, g, 0, FBLParams(l, eps, 1.0)) == pytest.approx(ref, abs=1e-12)


class TestEnergyEfficiency:
    def test_zero_rate(self):
        assert energy_efficiency(0.0, np.ones((2, 1)), PowerParams.uniform(1)) == 0.0

    def test_arithmetic(self):
        assert energy_efficiency(1.0, np.ones((1, 1)), PowerParams.uniform(1)) == 0.5
        gam = np.full((2, 1), 0.5)  # trace 0.5
        assert energy_efficiency(4.0, gam, PowerParams.uniform(1, beta=2.0)) == 2.0

    def test_sum_zero_precoders(self):
        h, g = random_instance(7)
        assert sum_weighted_ee(h, np.zeros_like(g), FBLParams(), PowerParams.uniform(2)) == 0.0

    def test_single_user(self):
        h, g = random_instance(8, k=1)
        power = PowerParams(1.0, 1.5, 1.0, (2.0,), (0.0,))
        fbl = FBLParams()
        e = energy_efficiency(rate_fbl(h, g, 0, fbl), g[0], power)
        assert sum_weighted_ee(h, g, fbl, power) == pytest.approx(2.0 * e, rel=1e-14)

    def test_loop_oracle(self):
        h, g = random_instance(9, k=4)
        power = PowerParams(0.3, 1.2, 5.0, (1.0, 2.0, 0.5, 1.5), (0, 0, 0, 0))
        fbl = FBLParams(128, 1e-4, 0.8)
        ref = sum(power.weights[k] * energy_efficiency(rate_fbl(h, g, k, fbl), g[k], power)
                  for k in range(4))
        assert sum_weighted_ee(h, g, fbl, power) == pytest.approx(ref, abs=1e-12)
