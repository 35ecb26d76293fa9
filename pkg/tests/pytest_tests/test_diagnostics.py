import math
from fractions import Fraction

import numpy as np
import pytest

from permutest.core.diagnostics import (
    DistributionSampler,
    contiguity_limit_check,
    couple,
    coupling_check,
    coupling_gap_variance,
    coupling_statistic_gap,
    enumerate_count_vectors,
    expected_likelihood_ratio_exact,
    hoeffding_pair_check,
    likelihood_ratio,
    likelihood_ratio_exact,
    random_subset_convergence_check,
)
from permutest.core.diagnostics.contiguity import (
    likelihood_ratio_draw,
    limit_law_sample,
    log_likelihood_ratio,
    mid_ks_distance,
    multinomial_pmf_exact,
)
from permutest.core.distributions import DistributionSpec, RngStream, parse_distributions
from permutest.utils.exceptions import ConfigError, IncompatibleStatistic, UnknownStatistic
from permutest.utils.structure import GroupedSample

NORMAL = DistributionSpec.parse("normal(0,1)")


class TestCouple:
    @pytest.mark.parametrize("sizes", [(5, 7), (10, 10), (3, 4, 5)])
    def test_structure(self, sizes):
        for seed in range(25):
            result = couple(sizes, rng=RngStream(seed=seed))
            N = sum(sizes)
            assert result.Z.group_sizes == sizes
            assert sorted(result.pi0.tolist()) == list(range(N))
            assert result.counts.sum() == N
            assert result.fresh.sum() == result.D
            keep = ~result.fresh
            np.testing.assert_array_equal(result.Z.values[keep], result.aligned[keep])

    def test_d_counts_the_overflow(self):
        sizes = (6, 9, 5)
        for seed in range(25):
            result = couple(sizes, rng=seed)
            assert result.D == sum(max(int(c) - n, 0) for c, n in zip(result.counts, sizes))

    def test_two_groups_d_identity(self):
        for seed in range(50):
            result = couple((8, 12), rng=seed)
            assert result.D == abs(int(result.counts[0]) - 8)

    def test_reused_values_come_from_their_group(self):
        result = couple((4, 6), rng=3, dists=parse_distributions("normal(0,1),normal(100,1)"))
        for t in range(10):
            if t in result.pi0[~result.fresh]:
                slot = int(np.flatnonzero(result.pi0 == t)[0])
                assert (slot < 4) == (result.sources[t] == 0)

    def test_differing_positions(self):
        result = couple((30, 30), rng=1)
        assert result.differing_positions().tolist() == np.flatnonzero(result.fresh).tolist()

    def test_explicit_probabilities(self):
        result = couple((10, 10), p=["1/4", "3/4"], rng=2)
        assert result.counts.sum() == 20

    @pytest.mark.parametrize(
        "p", [["1/2", "1/3"], ["0", "1"], ["1/2", "1/2", "0"], ["-1/2", "3/2"]]
    )
    def test_bad_probabilities(self, p):
        with pytest.raises(ConfigError):
            couple((5, 5), p=p, rng=0)

    def test_one_distribution_per_group(self):
        with pytest.raises(ConfigError):
            couple((5, 5), rng=0, dists=[NORMAL])

    def test_reproducible(self):
        a, b = couple((7, 9), rng=RngStream(seed=4)), couple((7, 9), rng=RngStream(seed=4))
        np.testing.assert_array_equal(a.Z_bar, b.Z_bar)
        np.testing.assert_array_equal(a.pi0, b.pi0)


class TestCouplingCheck:
    def test_two_groups(self):
        report = coupling_check((50, 50), runs=200, rng=RngStream(seed=1))
        assert report.identity_holds
        assert report.passed
        assert report.mean_D_over_N <= report.bound
        assert report.bound == pytest.approx(0.1)

    def test_three_groups(self):
        report = coupling_check((100, 100, 200), runs=200, rng=RngStream(seed=2))
        assert report.identity_holds
        assert report.passed

    def test_unequal_mixture(self):
        report = coupling_check((50, 50), runs=100, rng=3, p=["1/3", "2/3"])
        assert report.identity_holds

    @pytest.mark.slow
    @pytest.mark.parametrize("N", [100, 400, 1600])
    @pytest.mark.parametrize("k", [2, 3])
    def test_bound_across_sizes(self, N, k):
        sizes = [N // k] * k
        sizes[-1] += N - sum(sizes)
        report = coupling_check(sizes, runs=1000, rng=RngStream(seed=N + k))
        assert report.identity_holds
        assert report.mean_D_over_N <= N**-0.5


class TestCouplingGap:
    def test_gap_is_finite_for_tiny_groups(self):
        for seed in range(20):
            gap = coupling_statistic_gap((1, 1), [NORMAL, NORMAL], "mean", rng=seed)
            assert math.isfinite(gap)

    def test_variance_within_bound(self):
        report = coupling_gap_variance(
            (200, 200), [NORMAL, NORMAL], "mean", runs=300, rng=RngStream(seed=6)
        )
        assert report.bound == pytest.approx(2 * 4 * 400**-0.5)
        assert report.passed
        assert report.gap_variance > 0

    @pytest.mark.slow
    def test_variance_shrinks_with_n(self):
        variances = [
            coupling_gap_variance(
                (N // 2, N // 2), [NORMAL, NORMAL], "mean", runs=1000, rng=RngStream(seed=9)
            ).gap_variance
            for N in (100, 400, 1600)
        ]
        # Var decays like N^(-1/2): a factor 2 per fourfold N
        assert variances[0] > variances[1] > variances[2]
        assert variances[2] < variances[0] / 2

    def test_gap_is_zero_without_fresh_draws(self):
        found = 0
        for seed in range(40):
            if couple((3, 3), rng=RngStream(seed=seed), dists=[NORMAL, NORMAL]).D:
                continue
            gap = coupling_statistic_gap(
                (3, 3), [NORMAL, NORMAL], "mean", rng=RngStream(seed=seed)
            )
            assert gap == 0.0
            found += 1
        assert found > 0


class TestLikelihoodRatio:
    def test_no_draws(self):
        assert likelihood_ratio([0, 0], 0, (3, 4)) == pytest.approx(1.0)
        assert likelihood_ratio_exact([0, 0], 0, (3, 4)) == 1

    def test_hand_computed(self):
        # hypergeometric 9/15, multinomial 1/2
        assert likelihood_ratio_exact([1, 1], 2, (3, 3)) == Fraction(6, 5)
        assert likelihood_ratio([1, 1], 2, (3, 3)) == pytest.approx(1.2)

    def test_outside_support(self):
        assert likelihood_ratio_exact([4, 0], 4, (3, 3)) == 0
        assert likelihood_ratio([4, 0], 4, (3, 3)) == 0.0
        assert likelihood_ratio_draw([4, 0], 4, (3, 3)).log_L == -math.inf

    def test_float_agrees_with_exact(self):
        for M in enumerate_count_vectors(4, 3):
            exact = likelihood_ratio_exact(M, 4, (2, 3, 4))
            assert likelihood_ratio(M, 4, (2, 3, 4)) == pytest.approx(float(exact), rel=1e-12)

    def test_vectorised_log_ratio(self):
        counts = np.array(list(enumerate_count_vectors(3, 2)))
        logs = log_likelihood_ratio(counts, (3, 3))
        expected = [math.log(likelihood_ratio(M, 3, (3, 3))) for M in counts.tolist()]
        np.testing.assert_allclose(logs, expected)

    @pytest.mark.parametrize(
        "s, sizes", [(3, (3, 3)), (4, (2, 3, 4)), (6, (3, 3)), (5, (1, 1, 3))]
    )
    def test_expectation_is_exactly_one(self, s, sizes):
        assert expected_likelihood_ratio_exact(s, sizes) == 1

    def test_count_vectors(self):
        vectors = list(enumerate_count_vectors(2, 3))
        assert len(vectors) == 6
        assert all(sum(v) == 2 for v in vectors)

    def test_multinomial_pmf_sums_to_one(self):
        total = sum(multinomial_pmf_exact(M, (2, 3)) for M in enumerate_count_vectors(4, 2))
        assert total == 1

    @pytest.mark.parametrize("M, s", [([1, 1], 3), ([-1, 3], 2), ([1, 1, 0], 2)])
    def test_bad_counts(self, M, s):
        with pytest.raises(ConfigError):
            likelihood_ratio(M, s, (3, 3))

    def test_too_many_draws(self):
        with pytest.raises(ConfigError):
            likelihood_ratio([4, 3], 7, (3, 3))


class TestContiguityCheck:
    def test_no_draws_is_degenerate_at_one(self):
        report = contiguity_limit_check((10, 10), 0, replications=200, rng=1)
        assert report.theta == 0
        assert report.mean_L == pytest.approx(1.0)
        assert report.ks_distance == 0.0
        assert report.passed

    def test_half_of_a_large_population(self):
        report = contiguity_limit_check(
            (1000, 1000), 1000, replications=5000, rng=RngStream(seed=7)
        )
        assert report.theta == 0.5
        assert report.mean_L == pytest.approx(1.0, abs=0.05)
        assert report.ks_distance <= 0.05
        assert report.passed

    @pytest.mark.slow
    def test_quarter_of_three_large_groups(self):
        report = contiguity_limit_check(
            (1000, 1000, 1000), 750, replications=5000, rng=RngStream(seed=11)
        )
        assert report.theta == 0.25
        assert report.mean_L == pytest.approx(1.0, abs=0.05)
        assert report.ks_distance <= 0.05
        assert report.passed

    def test_s_below_n(self):
        with pytest.raises(ConfigError):
            contiguity_limit_check((5, 5), 10, replications=10)

    def test_limit_law_mean(self):
        draws = limit_law_sample(0.5, 3, 200_000, RngStream(seed=8))
        assert draws.mean() == pytest.approx(1.0, abs=0.01)

    def test_mid_ks(self):
        assert mid_ks_distance([1, 1, 2], [1, 1, 2]) == 0.0
        assert mid_ks_distance([0, 0], [1, 1]) == pytest.approx(0.5)
        assert mid_ks_distance([0.0, 1.0], [0.5, 1.5]) == pytest.approx(0.25)


class TestHoeffdingCheck:
    SAMPLER = DistributionSampler(distributions=[NORMAL, NORMAL], sizes=[100, 100])

    def test_permutation_invariant_statistic_fails(self):
        report = hoeffding_pair_check(self.SAMPLER, "pooled_sum", 5000, rng=RngStream(seed=9))
        assert report.mode == "sampled"
        assert report.max_discrepancy > 0.2
        assert not report.passed

    def test_studentized_mean_passes(self):
        report = hoeffding_pair_check(self.SAMPLER, "mean_t", 5000, rng=RngStream(seed=9))
        assert report.max_discrepancy <= 0.05
        assert report.passed

    def test_fixed_data(self):
        rng = np.random.default_rng(10)
        sample = GroupedSample.from_groups(rng.normal(size=100), rng.normal(0, 3, size=100))
        report = hoeffding_pair_check(sample, "mean_t", 5000, rng=RngStream(seed=10))
        assert report.mode == "fixed"
        assert report.passed
        assert report.dropped_pairs == 0

    def test_pair_count(self):
        with pytest.raises(ConfigError):
            hoeffding_pair_check(self.SAMPLER, "mean", 0)

    def test_statistic_must_fit_the_groups(self):
        sampler = DistributionSampler(distributions=[NORMAL] * 3, sizes=[10, 10, 10])
        with pytest.raises(IncompatibleStatistic):
            hoeffding_pair_check(sampler, "mean", 100)

    def test_sampler_shape(self):
        matrix = self.SAMPLER.matrix(7, np.random.default_rng(0))
        assert matrix.shape == (7, 200)


class TestRandomSubsets:
    def test_mean_of_a_two_point_mixture(self):
        dists = parse_distributions("normal(0,1),normal(2,1)")
        report = random_subset_convergence_check(
            dists, (100, 100), 20, "mean", rng=RngStream(seed=12), replications=1000, target=1.0
        )
        assert report.passed
        assert report.subset_center == pytest.approx(1.0, abs=0.05)

    def test_variance_of_a_scale_mixture(self):
        dists = parse_distributions("normal(0,1),normal(0,3)")
        report = random_subset_convergence_check(
            dists,
            (100, 100),
            20,
            "variance",
            rng=RngStream(seed=13),
            replications=1000,
            target=2.0,
        )
        assert report.passed

    def test_wrong_target_fails(self):
        dists = parse_distributions("normal(0,1),normal(2,1)")
        report = random_subset_convergence_check(
            dists, (100, 100), 20, "mean", rng=14, replications=500, target=1.5
        )
        assert not report.passed

    def test_callable_statistic(self):
        def spread(x):
            return float(np.max(x) - np.min(x))

        report = random_subset_convergence_check(
            [NORMAL, NORMAL], (30, 30), 10, spread, rng=15, replications=200
        )
        assert report.statistic == "spread"

    def test_unknown_statistic(self):
        with pytest.raises(UnknownStatistic):
            random_subset_convergence_check([NORMAL, NORMAL], (5, 5), 3, "kurtosis")

    def test_subset_size(self):
        with pytest.raises(ConfigError):
            random_subset_convergence_check([NORMAL, NORMAL], (5, 5), 11, "mean")

    def test_one_distribution_per_group(self):
        with pytest.raises(ConfigError):
            random_subset_convergence_check([NORMAL], (5, 5), 3, "mean")
