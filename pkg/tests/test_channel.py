import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from starris_ee.channel import (DimensionError, Dimensions, GeometryError, LinkClass, LinkSet,
                                RISMode, RISProfile, Side, compose_all, compose_channel,
                                default_scenario, pathloss_linear_gain, sample_links,
                                validate_ris)


def cn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_links(rng, k=2, n_u=2, n_bs=2, m=4, sides=None):
    sides = sides or tuple(Side.REFLECTION if i % 2 == 0 else Side.REFRACTION for i in range(k))
    return LinkSet(cn(rng, (m, n_bs)), cn(rng, (k, n_u, m)), cn(rng, (k, n_u, n_bs)), sides)


def es_profile(rng, m):
    amp = np.sqrt(rng.uniform(size=m))
    return RISProfile(RISMode.ENERGY_SPLITTING, amp * np.exp(2j * np.pi * rng.uniform(size=m)),
                      np.sqrt(1 - amp ** 2) * np.exp(2j * np.pi * rng.uniform(size=m)))


class TestDimensions:
    def test_default_streams(self):
        assert Dimensions(4, 2, 3, 8).n_streams == 2

    @pytest.mark.parametrize("kw", [dict(n_bs=0), dict(n_u=0), dict(n_users=0),
                                    dict(n_streams=3)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Dimensions(**{**dict(n_bs=2, n_u=2, n_users=2, n_ris=4), **kw})


class TestCompose:
    def test_ris_off_gives_direct(self):
        rng = np.random.default_rng(0)
        links = random_links(rng)
        h = compose_channel(links, RISProfile.off(4), 0)
        assert np.array_equal(h, links.d[0])

    def test_scalar_chain(self):
        links = LinkSet(np.ones((1, 1)), np.ones((1, 1, 1)), np.zeros((1, 1, 1)), (Side.REFLECTION,))
        ris = RISProfile(RISMode.ENERGY_SPLITTING, [0.5], [0.0])
        assert compose_channel(links, ris, 0)[0, 0] == pytest.approx(0.5)

    def test_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        f, g, d = cn(rng, (2, 4)), cn(rng, (4, 2)), cn(rng, (2, 2))
        theta = np.sqrt(rng.uniform(size=4)) * np.exp(2j * np.pi * rng.uniform(size=4))
        links = LinkSet(g, f[None], d[None], (Side.REFLECTION,))
        ris = RISProfile(RISMode.ENERGY_SPLITTING, theta, np.zeros(4))
        ref = np.zeros((2, 2), complex)
        for i in range(2):
            for j in range(2):
                ref[i, j] = d[i, j] + sum(f[i, m] * theta[m] * g[m, j] for m in range(4))
        assert np.max(np.abs(compose_channel(links, ris, 0) - ref)) <= 1e-12

    def test_compose_all_matches_per_user(self):
        rng = np.random.default_rng(2)
        links = random_links(rng, k=3)
        ris = es_profile(rng, 4)
        stacked = compose_all(links, ris)
        for k in range(3):
            np.testing.assert_allclose(stacked[k], compose_channel(links, ris, k), atol=1e-13)

    def test_dimension_error_names_operand(self):
        rng = np.random.default_rng(3)
        links = random_links(rng, m=4)
        with pytest.raises(DimensionError, match="ris has 3 elements"):
            compose_channel(links, RISProfile.off(3), 0)
        with pytest.raises(DimensionError, match="f has"):
            LinkSet(cn(rng, (5, 2)), cn(rng, (1, 2, 4)), cn(rng, (1, 2, 2)), (Side.REFLECTION,))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), a=st.complex_numbers(max_magnitude=3, allow_nan=False),
           b=st.complex_numbers(max_magnitude=3, allow_nan=False))
    def test_linear_in_theta(self, seed, a, b):
        rng = np.random.default_rng(seed)
        links = random_links(rng, k=2)
        r1, r2 = es_profile(rng, 4), es_profile(rng, 4)
        mix = RISProfile(RISMode.ENERGY_SPLITTING, a * r1.theta_r + b * r2.theta_r,
                         a * r1.theta_t + b * r2.theta_t)
        for k in range(2):
            d = links.d[k]
            lhs = compose_channel(links, mix, k)
            rhs = a * (compose_channel(links, r1, k) - d) + b * (compose_channel(links, r2, k) - d) + d
            assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(lhs)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_side_independence(self, seed):
        rng = np.random.default_rng(seed)
        links = random_links(rng, k=2)
        base = es_profile(rng, 4)
        other = es_profile(rng, 4)
        changed_t = RISProfile(RISMode.ENERGY_SPLITTING, base.theta_r, other.theta_t)
        changed_r = RISProfile(RISMode.ENERGY_SPLITTING, other.theta_r, base.theta_t)
        assert np.array_equal(compose_channel(links, base, 0), compose_channel(links, changed_t, 0))
        assert np.array_equal(compose_channel(links, base, 1), compose_channel(links, changed_r, 1))


class TestValidateRis:
    def test_boundary_feasible(self):
        v = np.full(5, 1 / np.sqrt(2))
        assert validate_ris(RISProfile(RISMode.ENERGY_SPLITTING, v, v)).feasible

    def test_amplitude_violation(self):
        tr = np.array([0.8, 0, 0])
        rep = validate_ris(RISProfile(RISMode.ENERGY_SPLITTING, tr, tr))
        assert len(rep.violations) == 1
        v = rep.violations[0]
        assert (v.element, v.kind) == (0, "amplitude")
        assert v.magnitude == pytest.approx(0.28)

    def test_mask_violation(self):
        tt = np.zeros(4, complex)
        tt[0] = 0.1
        rep = validate_ris(RISProfile(RISMode.MODE_SWITCHING, np.zeros(4), tt, m_g=2))
        assert [(v.element, v.kind) for v in rep.violations] == [(0, "mask")]
        assert rep.max_violation == pytest.approx(0.1)

    def test_ms_valid(self):
        tr = np.array([1, 1j, 0, 0])
        tt = np.array([0, 0, -1, 1])
        assert validate_ris(RISProfile(RISMode.MODE_SWITCHING, tr, tt, m_g=2)).feasible

    def test_bad_m_g(self):
        with pytest.raises(ValueError):
            RISProfile(RISMode.MODE_SWITCHING, np.zeros(2), np.zeros(2), m_g=3)


class TestPathloss:
    def test_reference_distance(self):
        sc = default_scenario(Dimensions(2, 2, 2, 4))
        assert pathloss_linear_gain(1.0, LinkClass.DIRECT, sc) == pytest.approx(1e-3, rel=1e-12)

    def test_power_law(self):
        sc = default_scenario(Dimensions(2, 2, 2, 4), pathloss_exponents={
            LinkClass.DIRECT: 2.0, LinkClass.BS_RIS: 2.0, LinkClass.RIS_USER: 2.0})
        ratio = pathloss_linear_gain(5.0, "direct", sc) / pathloss_linear_gain(10.0, "direct", sc)
        assert ratio == pytest.approx(4.0, rel=1e-12)

    def test_known_value(self):
        sc = default_scenario(Dimensions(2, 2, 2, 4))
        assert pathloss_linear_gain(10.0, LinkClass.RIS_USER, sc) == pytest.approx(10 ** -5.2, rel=1e-12)
        assert 10 ** -5.2 == pytest.approx(6.3096e-6, rel=1e-4)

    def test_decreasing(self):
        sc = default_scenario(Dimensions(2, 2, 2, 4))
        d = np.linspace(0.5, 200, 50)
        g = [pathloss_linear_gain(x, LinkClass.BS_RIS, sc) for x in d]
        assert np.all(np.diff(g) < 0)

    @pytest.mark.parametrize("d", [0.0, -1.0])
    def test_nonpositive_distance(self, d):
        with pytest.raises(GeometryError):
            pathloss_linear_gain(d, LinkClass.DIRECT, default_scenario(Dimensions(2, 2, 2, 4)))


class TestScenario:
    def test_half_and_half(self):
        sc = default_scenario(Dimensions(2, 2, 6, 8))
        sides = sc.sides()
        assert sides.count(Side.REFLECTION) == 3 and sides.count(Side.REFRACTION) == 3

    def test_invalid(self):
        with pytest.raises(ValueError):
            default_scenario(Dimensions(2, 2, 2, 4), ricean_factor=-1)
        with pytest.raises(ValueError):
            default_scenario(Dimensions(2, 2, 2, 4), noise_power=0)
        with pytest.raises(DimensionError):
            default_scenario(Dimensions(2, 2, 2, 4), user_positions=((1.0, 1.0),))


class TestSampling:
    def test_deterministic(self):
        sc = default_scenario(Dimensions(2, 2, 4, 8))
        a, b = sample_links(sc, 123), sample_links(sc, 123)
        for x, y in ((a.g, b.g), (a.f, b.f), (a.d, b.d)):
            assert x.tobytes() == y.tobytes()
        assert a.side == b.side

    def test_seeds_differ_and_finite(self):
        sc = default_scenario(Dimensions(2, 2, 4, 8))
        a, b = sample_links(sc, 1), sample_links(sc, 2)
        assert not np.allclose(a.d, b.d)
        for x in (a.g, a.f, a.d):
            assert np.all(np.isfinite(x))

    def test_coincident_positions(self):
        sc = default_scenario(Dimensions(2, 2, 2, 4), user_positions=((0.0, 0.0), (40.0, 0.0)))
        with pytest.raises(GeometryError):
            sample_links(sc, 0)

    def test_los_limit_variance(self):
        sc = default_scenario(Dimensions(2, 2, 2, 8), ricean_factor=1e9)
        gs = np.array([sample_links(sc, s).g for s in range(1000)])
        var = np.var(gs, axis=0)
        mean_power = np.mean(np.abs(gs) ** 2)
        assert np.max(var) <= 1e-6 * mean_power

    def test_rayleigh_moment(self):
        # 4x4 direct links of one user: 16 entries per draw, 6250 seeds = 1e5 entries
        sc = default_scenario(Dimensions(4, 4, 1, 1))
        entries = np.concatenate([sample_links(sc, s).d.ravel() for s in range(6250)])
        assert entries.size == 100_000
        dist = np.hypot(*sc.user_positions[0])
        gain = pathloss_linear_gain(dist, LinkClass.DIRECT, sc)
        assert np.mean(np.abs(entries) ** 2) == pytest.approx(gain, rel=0.02)
