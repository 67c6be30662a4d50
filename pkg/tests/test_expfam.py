import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siirv_lab import families, pmf_core
from siirv_lab import expfam as E
from siirv_lab.errors import AssumptionViolation, ConfigError
from siirv_lab.geometry import ConeDescription
from siirv_lab.regions import interval

HALF_LINE = ConeDescription(np.array([[1.0]]), np.array([[1.0]]))


def _geometric_spec(lo, hi, L, B, gamma, Lambda):
    return E.ExpFamilySpec(E.SufficientStats(("x",), "N0"), HALF_LINE, interval(lo, hi),
                           rho=lo, L=L, B=B, gamma=gamma, Lambda=Lambda)


class TestStats:
    def test_log_needs_positive_support(self):
        with pytest.raises(ConfigError):
            E.SufficientStats(("log",), "Z")

    def test_explicit_table_window_is_enforced(self):
        stat = E.ExplicitStat(0, np.arange(10.0) ** 1.5)
        T = E.SufficientStats((stat,), "N0")
        assert T.evaluate([4])[0, 0] == 8.0
        with pytest.raises(ConfigError):
            T.evaluate([10])

    def test_catalog_values(self):
        T = E.SufficientStats(("x", "x2", "abs"), "Z")
        assert T.evaluate([-3]).tolist() == [[-3.0, 9.0, 3.0]]

    def test_spec_json_round_trip(self, dgauss):
        back = E.ExpFamilySpec.from_json(dgauss.to_json())
        assert back.B == dgauss.B and np.array_equal(back.cone.H, dgauss.cone.H)
        assert E.mode(back, [0.5, 1.0]) == E.mode(dgauss, [0.5, 1.0])


class TestMode:
    def test_geometric_mode_is_zero(self, geo):
        assert E.mode(geo, [2.0]) == [0]

    def test_gaussian_origin(self, dgauss):
        assert E.mode(dgauss, [0.0, 1.0]) == [0]

    def test_tied_modes(self, dgauss):
        # x + x^2 vanishes at both -1 and 0 (enumerated over [-10, 10])
        xs = np.arange(-10, 11)
        vals = xs + xs**2
        assert E.mode(dgauss, [1.0, 1.0]) == [int(x) for x in xs[vals == vals.min()]]

    def test_outside_rho_cone_rejected(self, geo):
        with pytest.raises(ConfigError):
            E.mode(geo, [0.1])

    def test_mode_beyond_L_is_flagged(self):
        spec = _geometric_spec(0.5, 3.0, -1.0, 200.0, 0.01, 4.0)
        with pytest.raises(AssumptionViolation) as info:
            E.mode(spec, [1.0])
        assert info.value.witness == 0

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-1, 1), st.floats(0.5, 2), st.floats(1, 50))
    def test_rescaling_keeps_modes(self, a1, a2, t):
        spec = _DG
        a = np.array([a1, a2])
        assert E.mode(spec, a) == E.mode(spec, t * a)


_DG = families.discrete_gaussian_family()


class TestTailRadius:
    def test_vanishing_kappa(self):
        assert E.tail_radius(E.TailRadiusParams(1e-12, 0.5, 0, 1.0), 1.0) == 1

    def test_kappa_two_and_a_half(self):
        # exp(2.5 / 2.5) = e, ceiling 3
        assert E.tail_radius(E.TailRadiusParams(2.5, 0.5, 0, 1.0), 1.0) == 3

    def test_bad_params(self):
        with pytest.raises(ConfigError):
            E.TailRadiusParams(1.0, 1.5, 2)

    def test_envelope_holds_for_geometric_07(self, geo):
        a = 0.7
        for kappa in (0.5, 1.0, 3.0):
            p = E.TailRadiusParams(kappa, 0.5, 0)
            ell = E.tail_radius(p, geo.B)
            d = np.arange(ell, ell + 3000, dtype=float)
            log_pmf_ratio = -a * d
            log_env = -kappa * max(1.0, a / geo.rho) - 1.5 * np.log(d)
            assert np.all(log_pmf_ratio <= log_env)


class TestPmfMember:
    def test_geometric_ln2(self, geo):
        t = E.pmf_member(geo, [math.log(2)], 1e-10)
        x = t.support
        assert np.max(np.abs(t.probs - 0.5 ** (x + 1))) <= 1e-10
        assert t.tail_bound <= 1e-10

    def test_zeta_six(self, zeta):
        t = E.pmf_member(zeta, [6.0], 1e-10)
        assert t.at(1)[()] == pytest.approx(945 / math.pi**6, abs=1e-6)

    @pytest.mark.parametrize("a", [0.5, 1.3, 3.0, 12.0])
    def test_mass_and_modes(self, geo, a):
        t = E.pmf_member(geo, [a], 1e-8)
        assert abs(t.probs.sum() - 1) <= 1e-8
        assert pmf_core.modes_of(t)[0] == E.mode(geo, [a])

    def test_gaussian_modes_agree(self, dgauss):
        for a in ([1.0, 1.0], [-0.9, 0.6], [0.3, 2.0]):
            t = E.pmf_member(dgauss, a, 1e-12)
            assert pmf_core.modes_of(t, tol=1e-9)[0] == E.mode(dgauss, a)

    def test_tail_target_range(self, geo):
        with pytest.raises(ConfigError):
            E.pmf_member(geo, [1.0], 0.5)

    def test_heavy_tail_with_wrong_B_is_caught(self):
        spec = E.ExpFamilySpec(E.SufficientStats(("log",), "N"), HALF_LINE, interval(2.5, 3.0),
                               rho=2.5, L=1.0, B=1.0, gamma=1e-3, Lambda=1.0)
        with pytest.raises(AssumptionViolation):
            E.pmf_member(spec, [2.5], 1e-10)

    def test_table_error_budget(self, laplace):
        # the renormalized table's l1 error is certified by tail_bound
        a = 0.5
        t = E.pmf_member(laplace, [a], 1e-9)
        x = np.arange(-400, 401)
        exact = np.exp(-a * np.abs(x)) * math.tanh(a / 2)
        err = np.abs(t.at(x) - exact).sum()
        assert err <= t.tail_bound

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.5, 3.0), st.floats(0.5, 3.0))
    def test_tv_lipschitz_in_parameter(self, a, b):
        spec = _GEO
        v, s = pmf_core.tv_distance(E.pmf_member(spec, [a]), E.pmf_member(spec, [b]))
        assert v <= abs(a - b) * math.sqrt(spec.Lambda / 2) + s


_GEO = families.geometric_family(0.5, 3.0)


class TestStructuralDistance:
    def test_identity(self, geo):
        assert E.structural_distance(geo, [1.0], [1.0], range(0, 50)) == 0.0

    def test_different_modes(self, dgauss):
        assert E.structural_distance(dgauss, [0.0, 1.0], [1.5, 1.0], range(-20, 21)) == 1.0

    def test_geometric_one_vs_two(self, geo):
        # brute force: ratios e^{-x} and e^{-2x}, x = 0..40; every x >= 1 differs
        xs = np.arange(0, 41)
        r1, r2 = np.exp(-xs), np.exp(-2.0 * xs)
        unequal = ~np.isclose(r1, r2, rtol=1e-9, atol=0)
        expected = np.max(np.maximum(r1, r2)[unequal])
        got = E.structural_distance(geo, [1.0], [2.0], range(0, 41))
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(math.exp(-1), rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1, 1), st.floats(0.5, 2)), min_size=3, max_size=3))
    def test_metric_axioms(self, triple):
        a, b, c = (np.array(t) for t in triple)
        w = range(-30, 31)
        ab = E.structural_distance(_DG, a, b, w)
        assert ab == E.structural_distance(_DG, b, a, w)
        assert 0.0 <= ab <= 1.0
        assert E.structural_distance(_DG, a, a, w) == 0.0
        assert ab <= E.structural_distance(_DG, a, c, w) + E.structural_distance(_DG, c, b, w) + 1e-9


class TestVerify:
    @staticmethod
    def _moments(a):
        return families.geometric_moments(a)

    def _spec(self, L=0.0, B=1e6):
        _, var_hi, _ = self._moments(5.0)
        _, var_lo, _ = self._moments(0.1)
        return _geometric_spec(0.1, 5.0, L, B, var_hi * 0.99, var_lo * 1.001)

    def _samples(self):
        return [[a] for a in np.linspace(0.1, 5.0, 12)] + [[8.0], [20.0]]

    def test_all_pass(self):
        report = E.verify_assumptions(self._spec(), self._samples(), range(0, 2500))
        assert report.passed, report.to_json()

    def test_negative_L_fails_with_witness(self):
        report = E.verify_assumptions(self._spec(L=-1.0), self._samples(), range(0, 2500))
        assert not report["modes_bounded"].passed
        assert report["modes_bounded"].witness == 0

    def test_small_B_fails(self):
        _, _, m4 = self._moments(0.1)
        report = E.verify_assumptions(self._spec(B=0.9 * m4), self._samples(), range(0, 2500))
        assert not report["fourth_moment"].passed
        assert report["modes_bounded"].passed

    def test_catalog_families_pass(self, geo, zeta, dgauss, laplace, rng):
        for spec, window in ((geo, (0, 400)), (zeta, (1, 200_000)), (dgauss, (-80, 80)),
                             (laplace, (-200, 200))):
            samples = list(spec.base_region.sample(rng, 10))
            report = E.verify_assumptions(spec, samples, window)
            assert report.passed, (spec.name, report.to_json())

    def test_power_iteration(self):
        C = np.array([[2.0, 1.0], [1.0, 2.0]])
        assert E.power_iteration(C) == pytest.approx(3.0, rel=1e-8)


class TestPartition:
    def test_geometric_ln2(self, geo):
        assert E.partition_ratio(geo, [math.log(2)]) == pytest.approx(2.0, rel=1e-10)
        assert E.partition_bound_check(geo, [math.log(2)])

    def test_point_mass_like(self, geo):
        assert E.partition_ratio(geo, [60.0]) == pytest.approx(1.0, abs=1e-20)

    def test_zeta_six(self, zeta):
        assert E.partition_ratio(zeta, [6.0]) == pytest.approx(math.pi**6 / 945, rel=1e-9)
        assert E.partition_bound_check(zeta, [6.0])
