import itertools
import random
from fractions import Fraction

import numpy as np
import pytest

from riskwave.dataio import ClinicalRecord
from riskwave.survival import (
    FIVE_YEARS_DAYS,
    Basis,
    KmCurve,
    Risk,
    UndefinedConditionalError,
    conditional_survival,
    km_eval_cdf,
    km_fit,
    label_cohort,
    label_patient,
)

YEAR = 365.25


def recs(*pairs):
    """(time, censored) pairs -> records."""
    return [ClinicalRecord(f"P{i}", float(t), bool(c)) for i, (t, c) in enumerate(pairs)]


def curve(times, cdf):
    n = len(times)
    return KmCurve(np.array(times, float), np.array(cdf, float), np.ones(n), np.ones(n))


# Product-limit values worked out by hand; (time, censored) -> {event time: cdf}.
HAND_CASES = [
    ([(2, 0), (4, 0)], {2: 0.5, 4: 1.0}),
    ([(1, 1), (2, 0)], {2: 1.0}),
    ([(1, 0), (2, 1), (3, 0), (4, 0)], {1: 1 / 4, 3: 5 / 8, 4: 1.0}),
    ([(1, 0), (1, 0), (2, 1), (3, 0), (3, 1), (5, 0)], {1: 1 / 3, 3: 5 / 9, 5: 1.0}),
    ([(3, 0), (4, 1), (5, 0), (6, 1), (8, 0), (9, 1)], {3: 1 / 6, 5: 3 / 8, 8: 11 / 16}),
    ([(2, 1), (2, 0), (3, 1), (7, 0), (7, 0), (10, 1)], {2: 1 / 6, 7: 13 / 18}),
]


class TestKmFit:
    @pytest.mark.parametrize("pairs,expected", HAND_CASES)
    def test_hand_computed(self, pairs, expected):
        c = km_fit(recs(*pairs))
        assert c.event_times.tolist() == sorted(expected)
        np.testing.assert_allclose(c.cdf, [expected[t] for t in sorted(expected)], rtol=0, atol=1e-12)

    def test_single_record(self):
        c = km_fit(recs((3, 0)))
        assert km_eval_cdf(c, 3) == 1.0

    def test_at_risk_counts(self):
        c = km_fit(recs((3, 0), (4, 1), (5, 0), (6, 1), (8, 0), (9, 1)))
        assert c.n_at_risk.tolist() == [6, 4, 2]
        assert c.n_events.tolist() == [1, 1, 1]

    @pytest.mark.parametrize("n", range(1, 9))
    def test_uncensored_equals_empirical_cdf(self, n):
        # every multiset of n times drawn from four distinct values
        for times in itertools.combinations_with_replacement([1.0, 2.5, 4.0, 7.0], n):
            c = km_fit(recs(*[(t, 0) for t in times]))
            for t, p in zip(c.event_times, c.cdf):
                assert p == sum(x <= t for x in times) / n

    def test_errors(self):
        with pytest.raises(ValueError):
            km_fit([])
        with pytest.raises(ValueError):
            km_fit(recs((1, 1), (2, 1)))

    def test_monotone_random(self):
        rng = random.Random(3)
        for _ in range(50):
            pairs = [(rng.randint(1, 20), rng.random() < 0.4) for _ in range(rng.randint(2, 30))]
            pairs[0] = (pairs[0][0], False)
            c = km_fit(recs(*pairs))
            assert np.all(np.diff(c.cdf) >= 0)
            assert np.all((c.cdf >= 0) & (c.cdf <= 1))


class TestEvalCdf:
    def test_before_first_event(self):
        assert km_eval_cdf(km_fit(recs((2, 0), (4, 0))), 0) == 0.0

    def test_between_steps(self):
        assert km_eval_cdf(km_fit(recs((2, 0), (4, 0))), 3) == 0.5

    def test_right_continuous_and_past_end(self):
        c = km_fit(recs((2, 0), (4, 0), (6, 1)))
        assert km_eval_cdf(c, 2) == pytest.approx(1 / 3)
        assert km_eval_cdf(c, 3.999) == pytest.approx(1 / 3)
        assert km_eval_cdf(c, 4) == pytest.approx(2 / 3)
        assert km_eval_cdf(c, 100) == pytest.approx(2 / 3)

    def test_negative(self):
        with pytest.raises(ValueError):
            km_eval_cdf(km_fit(recs((2, 0))), -1)


class TestConditional:
    def test_unconditional_case(self):
        c = curve([10, 20], [0.3, 0.71])
        assert conditional_survival(c, 0, 20) == pytest.approx(1 - 0.71)

    def test_no_mass_between(self):
        c = curve([10, 20], [0.3, 0.71])
        assert conditional_survival(c, 21, 25) == 1.0

    def test_figure_values(self):
        c = curve([10, 20], [0.30, 0.71])
        assert conditional_survival(c, 15, 20) == pytest.approx(0.29 / 0.70, abs=1e-12)

    def test_errors(self):
        c = curve([10], [1.0])
        with pytest.raises(UndefinedConditionalError):
            conditional_survival(c, 12, 20)
        with pytest.raises(ValueError):
            conditional_survival(c, 20, 20)

    def test_non_increasing_in_horizon(self):
        rng = np.random.default_rng(0)
        times = np.sort(rng.uniform(0, 100, 15))
        c = curve(times, np.linspace(0.05, 0.9, 15))
        for t in (0, 10, 50):
            vals = [conditional_survival(c, t, h) for h in np.linspace(t + 1, 120, 40)]
            assert all(0 <= v <= 1 for v in vals)
            assert np.all(np.diff(vals) <= 0)


class TestLabels:
    def test_direct_rules(self):
        c = curve([100], [0.5])
        low = label_patient(c, ClinicalRecord("a", 7 * YEAR, False))
        high = label_patient(c, ClinicalRecord("b", 2 * YEAR, False))
        assert (low.value, low.basis) == (Risk.LOW, Basis.DIRECT)
        assert (high.value, high.basis) == (Risk.HIGH, Basis.DIRECT)
        assert low.conditional_prob is None

    def test_horizon_tie_policy(self):
        lab = label_patient(curve([100], [0.5]), ClinicalRecord("a", FIVE_YEARS_DAYS, False))
        assert lab.value is Risk.LOW

    def test_conditional_boundary(self):
        rec = ClinicalRecord("c", 500.0, True)
        exact = label_patient(curve([1000], [0.25]), rec)
        assert exact.conditional_prob == 0.75
        assert exact.value is Risk.LOW and exact.basis is Basis.CONDITIONAL
        below = label_patient(curve([1000], [0.25 + 1e-9]), rec)
        assert below.value is Risk.HIGH

    def test_conditional_high(self):
        c = curve([100, 1000], [0.30, 0.71])
        lab = label_patient(c, ClinicalRecord("c", 500.0, True))
        assert lab.value is Risk.HIGH
        assert lab.conditional_prob == pytest.approx(0.29 / 0.70, abs=1e-12)

    def test_undefined_conditional_is_high(self):
        lab = label_patient(curve([100], [1.0]), ClinicalRecord("c", 500.0, True))
        assert lab.value is Risk.HIGH and lab.undefined_conditional

    def test_all_long_survivors_low(self):
        labels, _ = label_cohort(recs(*[(2000 + i, 0) for i in range(5)]))
        assert all(l.value is Risk.LOW for l in labels)

    def test_order_invariance(self):
        rng = random.Random(11)
        pairs = [(rng.uniform(10, 3000), rng.random() < 0.45) for _ in range(60)]
        pairs[0] = (pairs[0][0], False)
        records = recs(*pairs)
        base = {r.patient_id: l for r, l in zip(records, label_cohort(records)[0])}
        for _ in range(5):
            shuffled = records[:]
            rng.shuffle(shuffled)
            got = {r.patient_id: l for r, l in zip(shuffled, label_cohort(shuffled)[0])}
            assert got == base

    def test_large_imbalanced_cohort_reports_counts(self):
        # 390 patients, 173 censored; the exact 67/323 split needs the real data.
        rng = np.random.default_rng(5)
        times = rng.exponential(1500, 390)
        cens = np.zeros(390, bool)
        cens[rng.choice(390, 173, replace=False)] = True
        labels, c = label_cohort(recs(*zip(times, cens)))
        n_low = sum(l.value is Risk.LOW for l in labels)
        assert len(labels) == 390 and 0 < n_low < 390
        assert 0 < km_eval_cdf(c, FIVE_YEARS_DAYS) < 1
