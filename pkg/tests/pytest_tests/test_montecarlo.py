import json
import math
from fractions import Fraction

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from permutest.core.distributions import DistributionSpec, RngStream, parse_distributions
from permutest.core.montecarlo import (
    SimulationPlan,
    asymptotic_variances,
    load_plan,
    power_curve,
    rejection_probability,
    render_table,
    table_records,
)
from permutest.core.statistics import get_statistic
from permutest.utils.exceptions import (
    ConfigError,
    IncompatibleStatistic,
    ParseError,
    UnknownStatistic,
)


def small_plan(**overrides) -> SimulationPlan:
    fields = dict(
        name="small",
        distributions=["normal(0,1)", "normal(0,1)"],
        sizes=[[6, 6]],
        statistics=["mean", "median"],
        replications=60,
        permutations=49,
        seed=17,
    )
    fields.update(overrides)
    return SimulationPlan(**fields)


class TestSimulationPlan:
    def test_parses_distribution_strings(self):
        plan = small_plan(distributions=["laplace(0.6931471805599453,1)", "exp(1)"])
        assert plan.distributions[1] == DistributionSpec(family="exp", params=(1.0,))
        assert plan.label == "Laplace(0.693147,1) / exp(1)"

    def test_single_statistic(self):
        assert small_plan(statistics="median_t").statistics == ["median_t"]

    def test_defaults(self):
        plan = SimulationPlan(
            distributions=["normal(0,1)", "t(5)"], sizes=[[5, 5]], statistics=["median"]
        )
        assert plan.alpha == Fraction(1, 20)
        assert (plan.replications, plan.permutations) == (2000, 999)
        assert (plan.sided, plan.accounting) == ("upper", "randomized")

    def test_alpha_range(self):
        with pytest.raises(ConfigError):
            small_plan(alpha="1")

    def test_sizes_must_cover_every_group(self):
        with pytest.raises(ConfigError):
            small_plan(sizes=[[5, 5, 5]])

    def test_statistic_checked_against_sizes(self):
        with pytest.raises(ConfigError):
            small_plan(statistics=["mean_t"], sizes=[[1, 5]])

    def test_two_sample_statistic_on_three_groups(self):
        with pytest.raises(IncompatibleStatistic):
            small_plan(distributions=["normal(0,1)"] * 3, sizes=[[4, 4, 4]])

    def test_unknown_statistic(self):
        with pytest.raises(UnknownStatistic):
            small_plan(statistics=["wilcoxon"])

    def test_bad_distribution(self):
        with pytest.raises(ParseError):
            small_plan(distributions=["normal(0,1)", "cauchy(0,1)"])

    def test_replications_positive(self):
        with pytest.raises(ValidationError):
            small_plan(replications=0)


class TestRejectionProbability:
    def test_cells(self):
        table = rejection_probability(small_plan())
        assert len(table.cells) == 2
        for cell in table.cells:
            assert 0 <= cell.estimate <= 1
            assert cell.se == pytest.approx(math.sqrt(cell.estimate * (1 - cell.estimate) / 60))
            assert (cell.replications, cell.permutations, cell.seed) == (60, 49, 17)
            assert cell.directional_error is None

    def test_reproducible(self):
        plan = small_plan()
        assert table_records(rejection_probability(plan)) == table_records(
            rejection_probability(plan)
        )

    def test_seed_matters(self):
        a = table_records(rejection_probability(small_plan(replications=200)))
        b = table_records(rejection_probability(small_plan(replications=200, seed=18)))
        assert [r["estimate"] for r in a] != [r["estimate"] for r in b]

    def test_independent_of_thread_count(self, monkeypatch):
        plan = small_plan(statistics=["mean_t", "median_t"])
        monkeypatch.setenv("PERMUTEST_THREADS", "1")
        single = table_records(rejection_probability(plan))
        monkeypatch.setenv("PERMUTEST_THREADS", "6")
        assert table_records(rejection_probability(plan)) == single

    def test_single_replication_has_no_se(self):
        table = rejection_probability(small_plan(replications=1))
        assert all(cell.se is None for cell in table.cells)

    def test_p_value_accounting_counts_whole_rejections(self):
        table = rejection_probability(small_plan(accounting="p_value"))
        for cell in table.cells:
            assert (cell.estimate * 60) == pytest.approx(round(cell.estimate * 60))

    def test_ksample_plan(self):
        plan = small_plan(
            distributions=["normal(0,1)", "normal(0,4)", "normal(0,9)"],
            sizes=[[5, 6, 7]],
            statistics=["ksample_mean_t", "ksample_median_t"],
            replications=20,
        )
        assert len(rejection_probability(plan).cells) == 2

    def test_lookup_missing_cell(self):
        table = rejection_probability(small_plan(replications=2))
        with pytest.raises(KeyError):
            table.cell((7, 7), "mean")


class TestPowerCurve:
    def test_large_shift(self):
        plan = small_plan(
            sizes=[[20, 20]], statistics=["mean_t"], replications=40, permutations=99
        )
        table = power_curve(plan, [-3, 0, 3])
        assert len(table.cells) == 3
        assert table.cell((20, 20), "mean_t", 3.0).estimate >= 0.95
        assert table.cell((20, 20), "mean_t", -3.0).estimate == 0.0

    def test_zero_shift_is_rejection_probability(self):
        plan = small_plan()
        assert table_records(power_curve(plan, [0.0])) == table_records(
            rejection_probability(plan)
        )

    def test_directional_error_for_two_sided_plans(self):
        plan = small_plan(statistics=["mean_t"], sided="two", replications=100)
        cell = power_curve(plan, [0.5]).cells[0]
        assert cell.directional_error is not None
        assert 0 <= cell.directional_error <= cell.estimate

    def test_no_directional_error_under_the_null(self):
        plan = small_plan(statistics=["mean_t"], sided="two")
        assert power_curve(plan, [0.0]).cells[0].directional_error is None


class TestAsymptoticVariances:
    def test_median_unequal_spread(self):
        normal, wide = parse_distributions("normal(0,1),normal(0,25)")
        limits = asymptotic_variances([normal, wide], "1/2", "median")
        assert limits.predicted_rejection("0.05") == pytest.approx(0.224, abs=0.001)
        assert limits.tau2 < limits.v2

    def test_mean_with_wide_small_group(self):
        wide, normal = parse_distributions("normal(0,25),normal(0,1)")
        limits = asymptotic_variances([wide, normal], Fraction(50, 250), "mean")
        assert limits.tau2 == pytest.approx(36.25)
        assert limits.v2 == pytest.approx(126.25)
        assert limits.predicted_rejection("0.05") == pytest.approx(0.189, abs=0.001)

    def test_mean_with_wide_large_group_is_conservative(self):
        normal, wide = parse_distributions("normal(0,1),normal(0,25)")
        limits = asymptotic_variances([normal, wide], Fraction(50, 250), "mean")
        assert limits.predicted_rejection("0.05") < 0.05

    def test_equal_populations_keep_the_level(self):
        spec = DistributionSpec.parse("logistic(0,1)")
        for parameter in ("mean", "median"):
            limits = asymptotic_variances([spec, spec], "0.3", parameter)
            assert limits.predicted_rejection("0.05") == pytest.approx(0.05)

    def test_different_medians_use_the_mixture_median(self):
        first, second = parse_distributions("normal(0,1),normal(1,1)")
        limits = asymptotic_variances([first, second], "1/2", "median")
        f_bar = stats.norm.pdf(0.5)
        assert limits.tau2 == pytest.approx(1 / f_bar**2)

    def test_proportion_range(self):
        spec = DistributionSpec.parse("normal(0,1)")
        with pytest.raises(ConfigError):
            asymptotic_variances([spec, spec], 1, "mean")

    def test_parameter(self):
        spec = DistributionSpec.parse("normal(0,1)")
        with pytest.raises(ConfigError):
            asymptotic_variances([spec, spec], "1/2", "variance")


class TestRendering:
    def test_text_table(self):
        table = rejection_probability(small_plan(sizes=[[5, 5], [6, 7]], replications=5))
        text = render_table(table)
        lines = text.splitlines()
        assert lines[0].startswith("Distributions")
        assert "(5,5)" in lines[0] and "(6,7)" in lines[0]
        assert sum("N(0,1) / N(0,1)" in line for line in lines) == 2
        assert "alpha = 1/20" in lines[-1]
        assert "R = 5" in lines[-1]

    def test_delta_column(self):
        text = render_table(power_curve(small_plan(replications=3), [0, 1]))
        assert "delta" in text.splitlines()[0]

    def test_records(self):
        records = table_records(rejection_probability(small_plan(replications=5)))
        assert len(records) == 2
        for record in records:
            assert {"sizes", "statistic", "estimate", "se", "replications", "seed"} <= set(record)
            json.dumps(record)


class TestLoadPlan:
    def test_bundled(self):
        plan = load_plan("table1_row1")
        assert plan.name == "table1_row1"
        assert plan.distributions[1].variance() == pytest.approx(25.0)
        assert [tuple(s) for s in plan.sizes][3] == (101, 101)
        assert plan.statistics == ["median", "median_t"]

    def test_overrides(self):
        plan = load_plan("smoke", replications=7, seed=None, sided="two")
        assert plan.replications == 7
        assert plan.sided == "two"
        assert plan.seed == 20140101

    def test_from_path(self, tmp_path):
        path = tmp_path / "mine.yaml"
        path.write_text(
            "distributions: ['t(5)', 'normal(0,1)']\nsizes: [[7, 9]]\nstatistics: median_t\n"
            "alpha: 0.1\n",
            encoding="utf-8",
        )
        plan = load_plan(str(path))
        assert plan.name == "mine"
        assert plan.alpha == Fraction(1, 10)

    def test_missing(self):
        with pytest.raises(ParseError):
            load_plan("table9_row9")

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("distributions: [normal(0,1)\nsizes: {", encoding="utf-8")
        with pytest.raises(ParseError):
            load_plan(str(path))

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_plan(str(path))

    def test_invalid_field(self, tmp_path):
        path = tmp_path / "negative.yaml"
        path.write_text(
            "distributions: ['normal(0,1)', 'normal(0,1)']\nsizes: [[5, 5]]\n"
            "statistics: [mean]\nreplications: -3\n",
            encoding="utf-8",
        )
        with pytest.raises(ParseError):
            load_plan(str(path))

    @pytest.mark.parametrize("name", ["smoke", "identical", "ksample_normal"])
    def test_every_bundled_plan_loads(self, name):
        assert load_plan(name).replications >= 1


# Median comparison tables and robustness scenarios at desk scale (R = 2000, B = 999)

TABLE_STUDENTIZED = {
    "table1_row1": (0.0615, 0.0517, 0.0531),
    "table1_row2": (0.0776, 0.0661, 0.0611),
    "table1_row3": (0.0686, 0.0574, 0.0574),
    "table1_row4": (0.0502, 0.0485, 0.0531),
}

TABLE_UNSTUDENTIZED_EQUAL_SIZES = {
    "table1_row1": (0.2309, 0.2249),
    "table1_row2": (0.1769, 0.1853),
    "table1_row3": (0.2258, 0.2261),
    "table1_row4": (0.0480, 0.0501),
}


@pytest.mark.slow
class TestMedianComparisonTable:
    @pytest.mark.parametrize("name", sorted(TABLE_STUDENTIZED))
    def test_table_rows(self, name):
        sizes = [(101, 101), (101, 201), (401, 401)]
        table = rejection_probability(load_plan(name, sizes=[list(s) for s in sizes]))
        for size, expected in zip(sizes, TABLE_STUDENTIZED[name]):
            assert table.cell(size, "median_t").estimate == pytest.approx(expected, abs=0.02)
        equal = [(101, 101), (401, 401)]
        for size, expected in zip(equal, TABLE_UNSTUDENTIZED_EQUAL_SIZES[name]):
            assert table.cell(size, "median").estimate == pytest.approx(expected, abs=0.03)
        if name == "table1_row1":
            assert table.cell((101, 201), "median").estimate > 0.08

    def test_studentized_mean_keeps_the_level(self):
        plan = SimulationPlan(
            distributions=["normal(0,25)", "normal(0,1)"],
            sizes=[[50, 200]],
            statistics=["mean", "mean_t"],
        )
        table = rejection_probability(plan)
        assert table.cell((50, 200), "mean_t").estimate == pytest.approx(0.05, abs=0.02)
        assert table.cell((50, 200), "mean").estimate > 0.10

    def test_ksample_level_and_chi_squared_limit(self):
        table = rejection_probability(load_plan("ksample_normal"))
        assert table.cells[0].estimate == pytest.approx(0.05, abs=0.02)

        rng = RngStream(seed=5).generator()
        matrix = np.hstack([rng.normal(0, sd, size=(5000, 150)) for sd in (1, 2, 3)])
        values = get_statistic("ksample_mean_t").evaluate_batch(matrix, (150, 150, 150))
        assert stats.kstest(values, "chi2", args=(2,)).statistic <= 0.05

    def test_power_tends_to_one(self):
        plan = SimulationPlan(
            distributions=["normal(0,1)", "normal(0,1)"],
            sizes=[[101, 101]],
            statistics=["mean_t"],
            replications=1000,
        )
        assert power_curve(plan, [1.0]).cells[0].estimate >= 0.99

    def test_exact_level_when_populations_agree(self):
        plan = load_plan("identical")
        table = rejection_probability(plan)
        se = math.sqrt(0.05 * 0.95 / plan.replications)
        for cell in table.cells:
            assert cell.estimate == pytest.approx(0.05, abs=3 * se)
