import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilbert_clt import coeffs as cs


def brute_partial(c, n, k):
    return sum((c[j] for j in range(k - n, k)), np.zeros((c.dim, c.dim)))


class TestFamilies:
    def test_iid_family(self):
        c = cs.finite([np.eye(3)])
        assert c.norms().sum() == pytest.approx(1.0)
        assert c.lo == 0 and c.hi == 0

    def test_geometric_sum(self):
        c = cs.geometric(0.5, 20, base=np.eye(2))
        assert c.norms().sum() == pytest.approx(1 + 2 * (1 - 2.0 ** -20), rel=1e-14)
        assert c.norms().sum() == pytest.approx(3, abs=1e-5)
        # discarded mass on both sides is 2 * 2^-21 / (1/2)
        assert c.tail_report == pytest.approx(2 * 2.0 ** -20)

    def test_polynomial_tail_integral_bound(self):
        c = cs.polynomial(2.0, 1000, base=np.eye(1), side="anticausal")
        exact_tail = np.sum((1.0 + np.arange(1001, 2_000_000)) ** -2.0)
        assert exact_tail <= c.tail_report <= 1.0 / 1001 + 1e-12
        assert c.tail_report == pytest.approx(1e-3, rel=2e-3)

    def test_causal_side_places_negative_offsets(self):
        c = cs.geometric(0.5, 3, dim=1, side="causal")
        assert c.is_causal and c.lo == -3 and c.hi == 0
        np.testing.assert_allclose(c.scalar(), [0.125, 0.25, 0.5, 1.0])

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            cs.geometric(1.0, 5)
        with pytest.raises(ValueError):
            cs.polynomial(1.0, 5)
        with pytest.raises(ValueError):
            cs.slow_rate_coeffs(cs.SlowRateSpec(1.0, 10))
        with pytest.raises(ValueError):
            cs.geometric(0.5, 3, side="sideways")

    def test_from_family_dispatch(self):
        c = cs.from_family("geometric", rho=0.3, window=4, dim=2)
        assert c.family == "geometric" and c.dim == 2
        with pytest.raises(ValueError):
            cs.from_family("bogus")

    def test_json_round_trip(self, tmp_path):
        c = cs.finite({-1: np.eye(2), 2: 2 * np.eye(2)})
        cs.dump_family(c, tmp_path / "c.json")
        back = cs.load_family(tmp_path / "c.json")
        assert back.lo == c.lo
        np.testing.assert_array_equal(back.terms, c.terms)

    def test_list_json(self, tmp_path):
        (tmp_path / "c.json").write_text("[[[1.0]], [[0.5]]]")
        c = cs.load_family(tmp_path / "c.json")
        np.testing.assert_allclose(c.scalar(), [1.0, 0.5])

    def test_inconsistent_blocks_rejected(self):
        with pytest.raises(ValueError):
            cs.finite({0: np.eye(2), 1: np.eye(3)})


class TestSlowRate:
    def test_tail_bounds_discarded_mass(self):
        for a in (1.5, 2.0, 2.5):
            short = cs.slow_rate_coeffs(cs.SlowRateSpec(a, 256, normalize=False))
            long = cs.slow_rate_coeffs(cs.SlowRateSpec(a, 2 ** 20, normalize=False))
            dropped = np.abs(long.scalar()[257:]).sum()
            assert dropped <= short.tail_report

    def test_custom_profile(self):
        f = lambda x: np.exp(-0.0 * x) / (1.0 + x) ** 1.5
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(1.5, 512, f=f, normalize=False))
        d = cs.slow_rate_coeffs(cs.SlowRateSpec(1.5, 512, normalize=False))
        np.testing.assert_allclose(c.terms, d.terms)
        assert c.tail_report > 0

    def test_first_coefficient(self):
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(2.0, 64, normalize=False))
        assert c[1][0, 0] == pytest.approx(0.25)
        assert c[0][0, 0] == 0.0

    def test_telescoping_small(self):
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(2.0, 64, normalize=False))
        j = np.arange(1, 17)
        assert np.dot(j, c.scalar()[1:17]) == pytest.approx(256 / 289, rel=1e-13)

    @pytest.mark.parametrize("a", [1.5, 2.0, 2.5])
    def test_telescoping_all_n(self, a):
        J = 2 ** 16
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(a, J, normalize=False))
        j = np.arange(1, J + 1, dtype=float)
        lhs = np.cumsum(j * c.scalar()[1:])
        rhs = j ** 2 * (1 + j) ** -a
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10)

    def test_partial_sums_bounded(self):
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(1.5, 2 ** 16, normalize=False))
        s = np.cumsum(c.scalar())
        assert s[-1] < 10 and np.all(np.diff(s) >= 0)

    def test_normalized_sum_is_one(self):
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(1.5, 4096))
        assert c.full_operator()[0, 0] == pytest.approx(1.0, rel=1e-13)

    def test_dependence_penalty_matches_rate(self):
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(1.5, 2 ** 20))
        n = 4096
        ratio = cs.dependence_bound(c, n) / (n * (1 + n) ** -1.5)
        assert 0.5 <= ratio <= 2.0


class TestPartialOperators:
    def test_iid_inside(self):
        c = cs.finite([np.eye(2)])
        np.testing.assert_array_equal(cs.partial_operator(c, 5, 3), np.eye(2))
        np.testing.assert_array_equal(cs.complement_operator(c, 5, 3), np.zeros((2, 2)))

    def test_iid_outside(self):
        c = cs.finite([np.eye(2)])
        np.testing.assert_array_equal(cs.partial_operator(c, 5, 6), np.zeros((2, 2)))

    def test_geometric_direct_sum(self):
        c = cs.geometric(0.5, 30, base=np.eye(2))
        expect = sum(0.5 ** abs(j) for j in range(-7, 1))
        np.testing.assert_allclose(cs.partial_operator(c, 8, 1), expect * np.eye(2), rtol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.integers(-20, 30), st.integers(0, 2 ** 31))
    def test_decomposition_identity(self, n, k, seed):
        r = np.random.default_rng(seed)
        lo = int(r.integers(-6, 3))
        c = cs.CoeffSeq(lo, r.normal(size=(int(r.integers(1, 9)), 3, 3)))
        a = cs.partial_operator(c, n, k)
        np.testing.assert_allclose(a, brute_partial(c, n, k), atol=1e-12)
        drift = np.abs(a + cs.complement_operator(c, n, k) - c.full_operator()).max()
        assert drift <= 1e-12

    def test_support_range_covers_nonzero(self):
        c = cs.geometric(0.5, 4, dim=1)
        t0, t1 = cs.support_range(c, 6)
        ks = np.arange(t0 - 5, t1 + 6)
        a = cs.partial_operators(c, 6, ks)[:, 0, 0]
        inside = (ks >= t0) & (ks <= t1)
        assert np.all(a[~inside] == 0) and np.all(a[inside] != 0)


class TestDependenceBound:
    def test_iid_zero(self):
        c = cs.finite([np.eye(2)])
        assert all(cs.dependence_bound(c, n) == 0 for n in (1, 10, 1000))

    def test_single_lag(self):
        c = cs.finite({1: np.eye(2)})
        assert cs.dependence_bound(c, 10) == pytest.approx(0.1)

    def test_slow_rate_direct_sum(self):
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(2.0, 4096))
        alpha = c.scalar()
        direct = sum(min(j, 4) * alpha[j] for j in range(alpha.size)) / 4
        assert cs.dependence_bound(c, 4) == pytest.approx(direct, rel=1e-13)

    @pytest.mark.parametrize("c", [
        cs.geometric(0.5, 60, dim=2),
        cs.polynomial(2.0, 4096, dim=1),
        cs.slow_rate_coeffs(cs.SlowRateSpec(1.5, 4096)),
    ])
    def test_monotone_properties(self, c):
        ns = [2 ** k for k in range(0, 14)]
        a = np.array([cs.dependence_bound(c, n) for n in ns])
        assert np.all(np.diff(a) <= 1e-15)
        assert np.all(np.diff(np.array(ns) * a) >= -1e-12)

    @pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
    def test_summability_bound(self, beta):
        c = cs.polynomial(2.5, 2000, dim=1)
        s = cs.check_summability(c, beta)
        for n in [4, 64, 1024, 2 ** 14]:
            assert n ** beta * cs.dependence_bound(c, n) <= s + c.tail_report * n ** beta + 1e-12


class TestSummability:
    def test_beta_zero_is_norm_sum(self):
        c = cs.geometric(0.5, 10, dim=2)
        assert cs.check_summability(c, 0.0) == pytest.approx(c.norms().sum())

    def test_geometric_half(self):
        c = cs.geometric(0.5, 50, base=np.eye(1))
        j = np.arange(-50, 51)
        direct = np.sum(np.abs(j) ** 0.5 * 0.5 ** np.abs(j))
        assert cs.check_summability(c, 0.5) == pytest.approx(direct, rel=1e-13)

    def test_slow_rate_divergence_scan(self):
        c = cs.slow_rate_coeffs(cs.SlowRateSpec(1.5, 10 ** 6, normalize=False))
        windows = [10 ** k for k in range(2, 7)]
        scan = cs.summability_scan(c, 0.5, windows)
        inc = np.diff(scan)
        # alpha_j ~ j^-3/2 so j^1/2 alpha_j ~ 1/j: each decade adds about the same
        assert np.all(inc > 0)
        assert inc[-1] > 0.8 * inc[0]

    def test_beta_out_of_range(self):
        with pytest.raises(ValueError):
            cs.check_summability(cs.finite([np.eye(1)]), -0.1)
