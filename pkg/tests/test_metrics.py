import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrobench.metrics import (
    AllTied,
    DegenerateTarget,
    GaussianSummary,
    ZeroVariance,
    kendall_tau,
    kl_gaussian,
    mae,
    r2,
    sparse_kendall_tau,
)


def tau_b_bruteforce(x, y):
    """All-pairs tie-corrected rank correlation, straight from the definition."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    n = len(x)
    conc = disc = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                continue
            elif dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif dx * dy > 0:
                conc += 1
            else:
                disc += 1
    denom = math.sqrt((conc + disc + tx) * (conc + disc + ty))
    if denom == 0:
        return None
    return (conc - disc) / denom


class TestKendallTau:
    def test_identical_order(self):
        assert kendall_tau([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)

    def test_reversed(self):
        assert kendall_tau([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_hand_enumerated_pairs(self):
        # pairs of (1,2,3,4) vs (1,3,2,4): 5 concordant, 1 discordant
        assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(4 / 6)

    def test_matches_bruteforce_on_random_vectors(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = rng.integers(2, 30)
            x = rng.integers(0, 6, size=n).astype(float)
            y = rng.integers(0, 6, size=n).astype(float)
            expected = tau_b_bruteforce(x, y)
            if expected is None:
                with pytest.raises(AllTied):
                    kendall_tau(x, y)
            else:
                assert kendall_tau(x, y) == pytest.approx(expected, abs=1e-12)

    def test_matches_scipy(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(5, 200))
            x = rng.normal(size=n)
            y = x + rng.normal(size=n)
            ref = scipy_stats.kendalltau(x, y, variant="b").statistic
            assert kendall_tau(x, y) == pytest.approx(ref, abs=1e-12)

    def test_all_tied_raises(self):
        with pytest.raises(AllTied):
            kendall_tau([1.0, 1.0, 1.0], [1, 2, 3])

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=50)
        y = rng.normal(size=50)
        base = kendall_tau(x, y)
        assert kendall_tau(np.exp(x), y) == pytest.approx(base)
        assert kendall_tau(x, 3 * y + 7) == pytest.approx(base)

    def test_permutation_equivariant(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=40)
        y = rng.normal(size=40)
        perm = rng.permutation(40)
        assert kendall_tau(x[perm], y[perm]) == pytest.approx(kendall_tau(x, y))


class TestSparseKendallTau:
    def test_exact_predictions(self):
        y = [0.91, 0.92, 0.93]
        assert sparse_kendall_tau(y, y) == pytest.approx(1.0)

    def test_sub_precision_noise_ignored(self):
        # predictions within +-0.0004 of distinct-rounding truths
        y = np.array([0.910, 0.920, 0.930, 0.940])
        pred = y + np.array([0.0004, -0.0004, 0.0003, -0.0002])
        assert sparse_kendall_tau(y, pred) == pytest.approx(1.0)
        assert kendall_tau(y, pred) == pytest.approx(1.0)

    def test_rounding_preserves_order_across_boundary(self):
        # 0.9301 and 0.9309 round apart, keeping the pair concordant
        assert sparse_kendall_tau([0.9301, 0.9309], [0.9301, 0.9309]) == pytest.approx(1.0)

    def test_rank_flips_below_precision_become_ties(self):
        y = [0.9301, 0.9303, 0.95]
        pred = [0.9303, 0.9301, 0.95 + 0.0002]  # flipped inside one 0.001 cell
        assert sparse_kendall_tau(y, pred) == pytest.approx(1.0)

    def test_round_truth_flag(self):
        y = [0.9301, 0.9309]  # round apart -> concordant with rounding
        pred = [0.93, 0.93]  # predictions tie after rounding
        with pytest.raises(AllTied):
            sparse_kendall_tau(y, pred)  # all prediction pairs tied
        with pytest.raises(AllTied):
            sparse_kendall_tau(y, pred, round_truth=False)

    def test_shift_by_grid_multiples_invariant(self):
        rng = np.random.default_rng(4)
        y = rng.uniform(0.9, 0.95, size=30)
        pred = y + rng.normal(0, 2e-3, size=30)
        base = sparse_kendall_tau(y, pred)
        assert sparse_kendall_tau(y + 0.002, pred) == pytest.approx(base)
        assert sparse_kendall_tau(y, pred + 0.005) == pytest.approx(base)


class TestR2:
    def test_perfect(self):
        assert r2([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_mean_predictor_is_zero(self):
        y = np.array([1.0, 2.0, 3.0, 6.0])
        assert r2(y, np.full(4, y.mean())) == pytest.approx(0.0)

    def test_hand_value(self):
        assert r2([0, 1, 2], [0, 1, 1]) == pytest.approx(0.5)

    def test_never_above_one(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            y = rng.normal(size=10)
            pred = rng.normal(size=10)
            assert r2(y, pred) <= 1.0

    def test_degenerate_target(self):
        with pytest.raises(DegenerateTarget):
            r2([2.0, 2.0], [1.0, 2.0])
        with pytest.raises(DegenerateTarget):
            r2([1.0], [1.0])


class TestMae:
    def test_equal_vectors(self):
        assert mae([0.4, 0.5], [0.4, 0.5]) == 0.0

    def test_hand_value(self):
        assert mae([0, 1], [1, 0]) == pytest.approx(1.0)

    def test_paper_scale_values_representable(self):
        # the tabular-vs-surrogate protocol compares values at the 1e-3 scale
        a = np.array([0.934539, 0.93])
        b = a + 4.539e-3
        assert mae(a, b) == pytest.approx(4.539e-3)


class TestKlGaussian:
    def test_identical_is_zero(self):
        assert kl_gaussian(GaussianSummary(0.3, 0.2), GaussianSummary(0.3, 0.2)) == 0.0

    def test_unit_shift_closed_form(self):
        assert kl_gaussian(GaussianSummary(0, 1), GaussianSummary(1, 1)) == pytest.approx(
            0.5, abs=1e-12
        )

    def test_variance_ratio_closed_form(self):
        expected = math.log(0.5) + 4 / 2 - 0.5
        assert kl_gaussian(GaussianSummary(0, 2), GaussianSummary(0, 1)) == pytest.approx(
            expected, abs=1e-12
        )

    def test_zero_variance_rejected(self):
        with pytest.raises(ZeroVariance):
            kl_gaussian(GaussianSummary(0, 0), GaussianSummary(0, 1))
        with pytest.raises(ZeroVariance):
            kl_gaussian(GaussianSummary(0, 1), GaussianSummary(0, 0))

    @given(
        st.floats(-5, 5), st.floats(0.01, 4), st.floats(-5, 5), st.floats(0.01, 4)
    )
    @settings(max_examples=300, deadline=None)
    def test_nonnegative_and_zero_iff_equal(self, m1, s1, m2, s2):
        kl = kl_gaussian(GaussianSummary(m1, s1), GaussianSummary(m2, s2))
        assert kl >= -1e-12
        if m1 == m2 and s1 == s2:
            assert kl == 0.0
        elif abs(m1 - m2) > 1e-6 or abs(s1 - s2) > 1e-6:
            assert kl > 0.0

    def test_negative_std_rejected(self):
        with pytest.raises(Exception):
            GaussianSummary(0.0, -1.0)
