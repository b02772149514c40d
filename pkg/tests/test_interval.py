import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from credal_edl.core import categorical_variance
from credal_edl.exceptions import DegenerateCoverage, LabelOutOfRange
from credal_edl.ihdr import DecisionKind
from credal_edl.interval import (IntervalModel, augmented_region, conservativeness,
                                 idec_decide, interval_lower_upper, optimal_d, precise_hdr,
                                 variance_decomposition, xi_of_d)
from oracles import variance_enum
from strategies import EXAMPLE_PMF, pmfs

interior_gamma = st.floats(0.001, 0.999)


def singleton_bounds(l, d, j):
    # lower/upper of a single label under I(l, (1+d) l), written out directly
    others = 1 - l[j]
    return l[j] / (l[j] + (1 + d) * others), (1 + d) * l[j] / ((1 + d) * l[j] + others)


class TestBounds:
    def test_worked_example(self):
        m = IntervalModel(EXAMPLE_PMF, 1.58)
        lo, hi = interval_lower_upper(m, {0})
        assert lo == pytest.approx(0.4749, abs=5e-4) and hi == pytest.approx(0.8575, abs=5e-4)
        lo, hi = interval_lower_upper(m, {3})
        assert lo == pytest.approx(0.0078, abs=5e-4) and hi == pytest.approx(0.05, abs=5e-4)

    def test_precise_limit(self):
        m = IntervalModel(EXAMPLE_PMF, 0.0)
        lo, hi = interval_lower_upper(m, {1, 2})
        assert lo == pytest.approx(0.28) and hi == pytest.approx(0.28)

    def test_zero_and_full_mass(self):
        m = IntervalModel([0.5, 0.5, 0.0], 2.0)
        assert interval_lower_upper(m, {2}) == (0.0, 0.0)
        assert interval_lower_upper(m, {0, 1}) == (1.0, 1.0)
        assert interval_lower_upper(m, set()) == (0.0, 0.0)
        with pytest.raises(LabelOutOfRange):
            interval_lower_upper(m, {3})

    def test_model_validates(self):
        with pytest.raises(ValueError):
            IntervalModel(EXAMPLE_PMF, -0.1)
        with pytest.raises(ValueError):
            IntervalModel(EXAMPLE_PMF, math.inf)

    @given(pmfs(max_k=6), st.floats(0, 50))
    def test_singletons_and_conjugacy(self, p, d):
        m = IntervalModel(p, d)
        k = p.size
        for j in range(k):
            if 0 < p[j] < 1:
                exp = singleton_bounds(m.base, d, j)
                assert interval_lower_upper(m, {j}) == pytest.approx(exp, abs=1e-12)
        for r in range(k + 1):
            for A in itertools.combinations(range(k), r):
                comp = set(range(k)) - set(A)
                lo, hi = interval_lower_upper(m, A)
                assert lo <= hi + 1e-12
                assert lo == pytest.approx(1 - interval_lower_upper(m, comp)[1], abs=1e-12)


class TestXi:
    def test_values(self):
        assert xi_of_d(0.05, 1.58) == pytest.approx(0.0199, abs=1e-4)
        assert xi_of_d(0.05, 0.0) == 0.05
        assert xi_of_d(0.0, 7.0) == 0.0

    @given(interior_gamma, st.floats(0, 1e6))
    def test_below_gamma(self, gamma, d):
        xi = xi_of_d(gamma, d)
        assert xi <= gamma
        # strict once d is resolvable against 1 in double precision
        if d > 1e-12:
            assert xi < gamma


class TestHdr:
    def test_examples(self):
        assert precise_hdr(EXAMPLE_PMF, 0.05) == {0, 1, 2}
        assert precise_hdr(EXAMPLE_PMF, 1.0) == {0}
        assert precise_hdr(np.full(4, 0.25), 0.3) == {0, 1, 2}

    def test_augmented(self):
        assert augmented_region(EXAMPLE_PMF, 0.05) == {0, 1, 2}
        assert augmented_region([0.95, 0.05], 0.05) == {0, 1}
        assert augmented_region([1.0, 0, 0], 0.1) == {0}

    @given(pmfs(max_k=8), interior_gamma, st.floats(0, 100), st.floats(0, 100))
    def test_coverage_grows_with_d(self, p, gamma, d1, d2):
        d1, d2 = sorted((d1, d2))
        assert precise_hdr(p, xi_of_d(gamma, d1)) <= precise_hdr(p, xi_of_d(gamma, d2))


class TestOptimalD:
    def test_worked_example(self):
        d, xi = optimal_d(EXAMPLE_PMF, 0.05)
        assert xi == pytest.approx(0.02, abs=1e-12)
        assert d == pytest.approx(30 / 19, abs=1e-9)

    def test_degenerate(self):
        with pytest.raises(DegenerateCoverage) as info:
            optimal_d([0.5, 0.5], 0.25)
        assert info.value.region == {0, 1}

    def test_large_finite_d_near_threshold(self):
        delta = 1e-6
        p = [0.95 + delta, 0.05 - delta]
        d, xi = optimal_d(p, 0.05)
        assert math.isfinite(d) and d == pytest.approx((0.05 - xi) / (xi * 0.95))

    @given(pmfs(max_k=8), interior_gamma)
    def test_round_trip(self, p, gamma):
        try:
            d, xi = optimal_d(p, gamma)
        except DegenerateCoverage:
            return
        assert xi_of_d(gamma, d) == pytest.approx(xi, abs=1e-12)


class TestVariance:
    def test_examples(self):
        dec = variance_decomposition(np.full(10, 0.1), 1.0)
        assert (dec.au, dec.tu, dec.eu) == pytest.approx((8.25, 33.0, 24.75))
        dec = variance_decomposition(EXAMPLE_PMF, 0.0)
        assert dec.eu == 0 and dec.tu == dec.au
        dec = variance_decomposition([0, 1.0, 0], 5.0)
        assert dec.au == dec.eu == dec.tu == 0.0
        assert variance_decomposition(EXAMPLE_PMF, math.inf).tu == math.inf

    @given(pmfs(max_k=10), st.floats(0, 1e3))
    def test_identities(self, p, d):
        dec = variance_decomposition(p, d)
        assert dec.au == pytest.approx(variance_enum(p), abs=1e-12)
        assert dec.tu == pytest.approx((1 + d) ** 2 * dec.au, rel=1e-9, abs=1e-12)
        assert dec.eu == pytest.approx((d * d + 2 * d) * dec.au, rel=1e-9, abs=1e-12)
        assert dec.tu == pytest.approx(dec.au + dec.eu, rel=1e-9, abs=1e-12)


class TestConservativeness:
    def test_values(self):
        assert conservativeness(0.05, 0.0) == 0.0
        c = conservativeness(0.05, 1.58)
        lit = 0.05 * 0.95 * 1.58 * 3.58 / (0.95 * 2.58 ** 2 + 0.05)
        assert c == pytest.approx(lit, abs=1e-15) and 0 < c < 0.05
        assert conservativeness(0.1, 1e6) == pytest.approx(0.1, abs=1e-4)
        assert conservativeness(0.1, math.inf) == 0.1

    @given(interior_gamma, st.floats(0, 1e4), st.floats(0, 1e4))
    def test_monotone(self, gamma, d1, d2):
        d1, d2 = sorted((d1, d2))
        assert conservativeness(gamma, d1) <= conservativeness(gamma, d2) + 1e-15
        assert 0 <= conservativeness(gamma, d2) < gamma


class TestDecide:
    def test_worked_example(self):
        d = idec_decide(EXAMPLE_PMF, 0.05, 1.0)
        assert d.kind is DecisionKind.PREDICT
        assert d.region.labels == {0, 1, 2}
        assert d.d_star == pytest.approx(30 / 19, abs=1e-9)
        au = variance_enum(EXAMPLE_PMF)
        assert d.decomposition.au == pytest.approx(au, abs=1e-12)
        assert au == pytest.approx(0.5236, abs=1e-12)
        assert d.slack == pytest.approx((1 + 30 / 19) ** 2 * (15 / 12 - au), abs=1e-9)
        assert d.region.achieved_lower_prob == pytest.approx(0.95, abs=1e-9)

    def test_degenerate_is_flagged_epistemic(self):
        d = idec_decide([0.5, 0.5], 0.25, 0.1)
        assert d.kind is DecisionKind.ABSTAIN_EPISTEMIC and d.infinite_inflation
        assert d.d_star == math.inf and d.slack == -math.inf and d.au_ratio == 0.0

    def test_uniform_degenerate_iff_region_is_everything(self):
        d = idec_decide(np.full(4, 0.25), 0.3, 0.1)
        assert not d.infinite_inflation
        assert d.xi == pytest.approx(0.25) and d.d_star == pytest.approx(0.05 / (0.25 * 0.7))
        for k in range(2, 7):
            for gamma in (0.01, 0.1, 0.25, 0.3, 0.5):
                d = idec_decide(np.full(k, 1 / k), gamma, 0.1)
                full = augmented_region(np.full(k, 1 / k), gamma) == set(range(k))
                assert d.infinite_inflation == full

    def test_spread_pmf_abstains(self):
        # variance above the uniform reference makes the slack negative
        d = idec_decide([0.48, 0.02, 0.02, 0.48], 0.05, 0.1)
        assert d.slack < 0 and d.kind is not DecisionKind.PREDICT

    def test_tiny_outside_mass_does_not_overflow(self):
        d = idec_decide([1 - 1e-300, 1e-300, 0.0], 0.05, 0.1)
        assert d.kind is DecisionKind.PREDICT and d.region.labels == {0}

    @given(pmfs(max_k=8), interior_gamma, st.floats(1e-6, 10))
    def test_consistency(self, p, gamma, eps):
        d = idec_decide(p, gamma, eps)
        assert (d.kind is DecisionKind.PREDICT) == (d.slack >= eps)
        if d.kind is not DecisionKind.PREDICT and not d.infinite_inflation:
            aleatoric = d.au_ratio >= 0.5
            assert (d.kind is DecisionKind.ABSTAIN_ALEATORIC) == aleatoric
        if d.region is not None:
            assert d.region.labels == precise_hdr(p, xi_of_d(gamma, d.d_star))
            assert d.region.achieved_lower_prob >= 1 - gamma - 1e-9
        assert d.decomposition.au == pytest.approx(categorical_variance(p))
