"""Checks against closed forms and an independent statistics library.

The library code computes every p-value from first principles; scipy is
imported here only as an oracle to compare against.
"""

import itertools
import math

import numpy as np
import pytest
import scipy.stats

from lossprobe.core import ValidationError
from lossprobe.stats import (
    EXACT_PERMUTATION_MAX_N,
    StatResult,
    linregress,
    pearson,
    spearman,
    student_t_sf,
)


def brute_force_spearman_p(x, y, alternative="two-sided"):
    """Enumerate every rank permutation; correlations via the plain formula."""
    rx = scipy.stats.rankdata(x)
    ry = scipy.stats.rankdata(y)
    obs = np.corrcoef(rx, ry)[0, 1]
    perms = np.array(list(itertools.permutations(ry)))
    pc = perms - perms.mean(axis=1, keepdims=True)
    rxc = rx - rx.mean()
    rhos = (pc @ rxc) / (np.sqrt((pc**2).sum(axis=1)) * math.sqrt(float(rxc @ rxc)))
    if alternative == "two-sided":
        hits = np.abs(rhos) >= abs(obs) - 1e-12
    elif alternative == "greater":
        hits = rhos >= obs - 1e-12
    else:
        hits = rhos <= obs + 1e-12
    return float(np.count_nonzero(hits)) / perms.shape[0]


class TestPearson:
    def test_four_point_fixture(self):
        res = pearson([1, 2, 3, 4], [1, 2, 4, 3])
        assert res.statistic == pytest.approx(0.8, abs=1e-12)
        assert res.p_value == pytest.approx(0.2, abs=1e-12)
        assert res.method == "pearson" and res.n == 4

    def test_perfect_correlation(self):
        res = pearson([1, 2, 3, 4, 5], [2, 4, 6, 8, 10])
        assert res.statistic == 1.0
        assert res.p_value == 0.0

    def test_perfect_anticorrelation(self):
        res = pearson([1, 2, 3, 4, 5], [10, 8, 6, 4, 2])
        assert res.statistic == -1.0
        assert res.p_value == 0.0

    @pytest.mark.parametrize("n,seed", [(10, 1), (30, 2), (100, 3), (50, 4), (40, 5)])
    def test_matches_oracle_on_random_data(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        y = 0.4 * x + rng.normal(size=n)
        res = pearson(x, y)
        want_r, want_p = scipy.stats.pearsonr(x, y)
        assert res.statistic == pytest.approx(want_r, abs=1e-10)
        assert res.p_value == pytest.approx(want_p, abs=1e-8)

    @pytest.mark.parametrize("alternative", ["greater", "less"])
    def test_one_sided_matches_oracle(self, alternative):
        rng = np.random.default_rng(12)
        x = rng.normal(size=25)
        y = -0.5 * x + rng.normal(size=25)
        res = pearson(x, y, alternative=alternative)
        want = scipy.stats.pearsonr(x, y, alternative=alternative)
        assert res.p_value == pytest.approx(want.pvalue, abs=1e-8)
        assert res.alternative == alternative

    def test_one_sided_halves_sum_to_one(self):
        rng = np.random.default_rng(13)
        x, y = rng.normal(size=20), rng.normal(size=20)
        pg = pearson(x, y, alternative="greater").p_value
        pl = pearson(x, y, alternative="less").p_value
        assert pg + pl == pytest.approx(1.0, abs=1e-12)

    def test_shift_and_scale_invariant(self):
        rng = np.random.default_rng(14)
        x, y = rng.normal(size=30), rng.normal(size=30)
        a = pearson(x, y)
        b = pearson(3.0 * x - 7.0, 0.25 * y + 2.0)
        assert b.statistic == pytest.approx(a.statistic, abs=1e-12)
        assert b.p_value == pytest.approx(a.p_value, abs=1e-12)

    def test_constant_input_rejected(self):
        with pytest.raises(ValidationError) as err:
            pearson([1, 1, 1, 1], [1, 2, 3, 4])
        assert err.value.code == "constant-input"

    def test_too_few_points(self):
        with pytest.raises(ValidationError):
            pearson([1, 2], [3, 4])

    def test_bad_alternative(self):
        with pytest.raises(ValidationError):
            pearson([1, 2, 3], [1, 2, 3], alternative="both")


class TestSpearmanExact:
    def test_monotone_cubic_n6(self):
        x = [1, 2, 3, 4, 5, 6]
        y = [v**3 for v in x]
        res = spearman(x, y)
        assert res.statistic == 1.0
        assert res.method == "spearman-exact"
        # only the identity and the reversal reach |rho| = 1
        assert res.p_value == pytest.approx(2 / math.factorial(6), abs=1e-15)

    def test_reversed_n6(self):
        x = [1, 2, 3, 4, 5, 6]
        res = spearman(x, x[::-1])
        assert res.statistic == -1.0
        assert res.p_value == pytest.approx(2 / math.factorial(6), abs=1e-15)

    @pytest.mark.parametrize("seed,n", [(6, 6), (7, 7), (21, 8)])
    def test_exact_p_matches_brute_force(self, seed, n):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        res = spearman(x, y)
        assert res.method == "spearman-exact"
        assert res.p_value == pytest.approx(brute_force_spearman_p(x, y), abs=1e-12)

    def test_exact_p_with_ties_matches_brute_force(self):
        x = [1, 2, 2, 3, 5, 5, 6]
        y = [2, 1, 4, 4, 5, 7, 7]
        res = spearman(x, y)
        assert res.method == "spearman-exact"
        assert res.p_value == pytest.approx(brute_force_spearman_p(x, y), abs=1e-12)

    @pytest.mark.parametrize("alternative", ["greater", "less"])
    def test_exact_one_sided_matches_brute_force(self, alternative):
        rng = np.random.default_rng(31)
        x = rng.normal(size=7)
        y = rng.normal(size=7)
        res = spearman(x, y, alternative=alternative)
        assert res.p_value == pytest.approx(brute_force_spearman_p(x, y, alternative), abs=1e-12)

    def test_ties_fixture_statistic(self):
        # ranks of x are 1.5, 1.5, 3, 4 -> rho = 4.5 / sqrt(5 * 4.5)
        res = spearman([1, 1, 2, 3], [10, 20, 30, 40])
        want, _ = scipy.stats.spearmanr([1, 1, 2, 3], [10, 20, 30, 40])
        assert res.statistic == pytest.approx(want, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=9)
        y = rng.normal(size=9)
        a = spearman(x, y)
        b = spearman(np.exp(x), y**3)
        assert a.statistic == b.statistic
        assert a.p_value == b.p_value


class TestSpearmanLargeN:
    @pytest.mark.parametrize("n,seed", [(11, 16), (30, 17), (100, 18)])
    def test_t_branch_matches_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        y = 0.3 * x + rng.normal(size=n)
        res = spearman(x, y)
        assert res.method == "spearman-t"
        want = scipy.stats.spearmanr(x, y)
        assert res.statistic == pytest.approx(want.statistic, abs=1e-10)
        assert res.p_value == pytest.approx(want.pvalue, abs=1e-8)

    def test_t_branch_with_ties_matches_oracle(self):
        rng = np.random.default_rng(19)
        x = rng.integers(0, 6, size=50).astype(float)
        y = rng.integers(0, 6, size=50).astype(float)
        res = spearman(x, y)
        want = scipy.stats.spearmanr(x, y)
        assert res.statistic == pytest.approx(want.statistic, abs=1e-10)
        assert res.p_value == pytest.approx(want.pvalue, abs=1e-8)

    def test_branch_threshold(self):
        x = np.arange(EXACT_PERMUTATION_MAX_N, dtype=float)
        y = np.arange(EXACT_PERMUTATION_MAX_N, dtype=float) % 3
        assert spearman(x, y).method == "spearman-exact"
        x2 = np.arange(EXACT_PERMUTATION_MAX_N + 1, dtype=float)
        y2 = np.arange(EXACT_PERMUTATION_MAX_N + 1, dtype=float) % 3
        assert spearman(x2, y2).method == "spearman-t"


class TestLinregress:
    def test_exact_fit(self):
        slope, intercept, p, res = linregress([1, 2, 3, 4], [3, 5, 7, 9])
        assert slope == pytest.approx(2.0, abs=1e-12)
        assert intercept == pytest.approx(1.0, abs=1e-12)
        assert p == 0.0
        assert res.method == "ols-slope"

    def test_constant_y(self):
        slope, intercept, p, _ = linregress([1, 2, 3, 4], [5, 5, 5, 5])
        assert slope == 0.0
        assert intercept == 5.0
        assert p == 1.0

    def test_known_noisy_line(self):
        x = [1, 2, 3, 4, 5]
        y = [2.1, 3.9, 6.2, 7.8, 10.1]
        slope, intercept, p, _ = linregress(x, y)
        want = scipy.stats.linregress(x, y)
        assert slope == pytest.approx(want.slope, abs=1e-10)
        assert intercept == pytest.approx(want.intercept, abs=1e-10)
        assert p == pytest.approx(want.pvalue, abs=1e-8)

    @pytest.mark.parametrize("n,seed", [(10, 20), (25, 9), (80, 22)])
    def test_matches_oracle_on_random_data(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 10, size=n)
        y = 1.5 * x - 2.0 + rng.normal(scale=2.0, size=n)
        slope, intercept, p, _ = linregress(x, y)
        want = scipy.stats.linregress(x, y)
        assert slope == pytest.approx(want.slope, abs=1e-10)
        assert intercept == pytest.approx(want.intercept, abs=1e-10)
        assert p == pytest.approx(want.pvalue, abs=1e-8)

    def test_one_sided_matches_oracle(self):
        rng = np.random.default_rng(23)
        x = rng.uniform(0, 5, size=30)
        y = -0.8 * x + rng.normal(size=30)
        _, _, p, res = linregress(x, y, alternative="less")
        want = scipy.stats.linregress(x, y, alternative="less")
        assert p == pytest.approx(want.pvalue, abs=1e-8)
        assert res.alternative == "less"

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(24)
        x = rng.uniform(-3, 3, size=60)
        y = 0.7 * x + rng.normal(size=60)
        slope, intercept, _, _ = linregress(x, y)
        resid = y - (slope * x + intercept)
        assert abs(resid.sum()) < 1e-9 * len(x)
        assert abs(resid @ x) < 1e-9 * float(np.abs(x).sum())

    def test_constant_x_rejected(self):
        with pytest.raises(ValidationError):
            linregress([2, 2, 2, 2], [1, 2, 3, 4])


class TestStudentTSf:
    def test_sf_at_zero_is_half(self):
        for df in (1, 2, 5, 30, 200):
            assert student_t_sf(0.0, df) == pytest.approx(0.5, abs=1e-12)

    def test_cauchy_quartile(self):
        assert student_t_sf(1.0, 1) == pytest.approx(0.25, abs=1e-12)

    @pytest.mark.parametrize("t", [0.1, 0.7, 1.0, 2.5, 8.0])
    def test_cauchy_closed_form(self, t):
        want = 0.5 - math.atan(t) / math.pi
        assert student_t_sf(t, 1) == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("t", [0.3, 1.0, 2.0, 6.0])
    def test_df2_closed_form(self, t):
        want = 0.5 - t / (2.0 * math.sqrt(2.0 + t * t))
        assert student_t_sf(t, 2) == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("df", [1, 2, 3, 5, 10, 30, 120])
    @pytest.mark.parametrize("t", [-3.0, -1.0, 0.0, 0.5, 1.0, 2.0, 5.0, 10.0])
    def test_matches_oracle_grid(self, df, t):
        assert student_t_sf(t, df) == pytest.approx(scipy.stats.t.sf(t, df), abs=1e-10)

    def test_symmetry(self):
        for t in (0.25, 1.5, 4.0):
            assert student_t_sf(t, 7) + student_t_sf(-t, 7) == pytest.approx(1.0, abs=1e-12)

    def test_infinite_t(self):
        assert student_t_sf(math.inf, 3) == 0.0
        assert student_t_sf(-math.inf, 3) == 1.0

    def test_nan_rejected(self):
        with pytest.raises(ValidationError):
            student_t_sf(math.nan, 3)

    def test_bad_df_rejected(self):
        with pytest.raises(ValidationError):
            student_t_sf(1.0, 0)


class TestStatResult:
    def test_json_dict(self):
        res = StatResult(statistic=-0.5, p_value=0.04, n=6,
                         method="spearman-exact", alternative="two-sided")
        d = res.to_json_dict()
        assert d == {"statistic": -0.5, "p_value": 0.04, "n": 6,
                     "method": "spearman-exact", "alternative": "two-sided"}
