import io
from fractions import Fraction

import pytest

from permutest.core.helpers.parallel import parallel_map, worker_count
from permutest.logger import Logger
from permutest.utils.common import (
    format_decimal,
    format_fraction,
    format_rational,
    multinomial_coefficient,
    parse_int_list,
    parse_rational_list,
    split_top_level,
    to_fraction,
)
from permutest.utils.exceptions import (
    CapExceeded,
    ConfigError,
    IncompatibleStatistic,
    ParseError,
    PermutestError,
    StatisticUndefined,
    UnknownStatistic,
)
from permutest.utils.load_yaml import bundled_plan_names, load_config


class TestToFraction:
    def test_decimal_string_is_exact(self):
        assert to_fraction("0.05") == Fraction(1, 20)

    def test_ratio_string(self):
        assert to_fraction(" 1/6 ") == Fraction(1, 6)

    def test_float_goes_through_repr(self):
        assert to_fraction(0.1) == Fraction(1, 10)

    def test_int(self):
        assert to_fraction(3) == Fraction(3)

    def test_fraction_passes_through(self):
        f = Fraction(2, 7)
        assert to_fraction(f) is f

    def test_bool_rejected(self):
        with pytest.raises(ParseError):
            to_fraction(True)

    def test_garbage_rejected(self):
        with pytest.raises(ParseError):
            to_fraction("five percent")

    def test_zero_denominator_rejected(self):
        with pytest.raises(ParseError):
            to_fraction("1/0")

    def test_infinity_rejected(self):
        with pytest.raises(ParseError):
            to_fraction(float("inf"))


class TestFormatting:
    def test_fraction_keeps_denominator(self):
        assert format_fraction(Fraction(2)) == "2/1"

    def test_fraction(self):
        assert format_fraction(Fraction(1, 6)) == "1/6"

    def test_decimal_digits(self):
        assert format_decimal(1 / 6) == "0.166667"
        assert format_decimal(1 / 6, 3) == "0.167"

    def test_rational_shows_both(self):
        assert format_rational(Fraction(1, 6)) == "1/6 (0.166667)"


class TestSplitTopLevel:
    def test_splits_outside_parentheses(self):
        assert split_top_level("normal(0,1),exp(1)") == ["normal(0,1)", "exp(1)"]

    def test_strips_and_drops_empty(self):
        assert split_top_level(" a , b ,") == ["a", "b"]

    def test_unbalanced_open(self):
        with pytest.raises(ParseError):
            split_top_level("normal(0,1")

    def test_unbalanced_close(self):
        with pytest.raises(ParseError):
            split_top_level("normal)0,1(")


class TestParseLists:
    def test_ints(self):
        assert parse_int_list("101, 201") == (101, 201)

    def test_bad_int(self):
        with pytest.raises(ParseError):
            parse_int_list("101,x")

    def test_rationals(self):
        assert parse_rational_list("1/2,0.5") == (Fraction(1, 2), Fraction(1, 2))

    def test_bad_rational(self):
        with pytest.raises(ParseError):
            parse_rational_list("1/2,half")


class TestMultinomialCoefficient:
    def test_two_groups(self):
        assert multinomial_coefficient((2, 2)) == 6

    def test_three_groups(self):
        assert multinomial_coefficient((2, 2, 2)) == 90

    def test_single_ones(self):
        assert multinomial_coefficient((1, 1)) == 2

    def test_large_is_exact(self):
        assert multinomial_coefficient((20, 20)) == 137846528820


class TestErrors:
    def test_str_without_cause(self):
        assert str(ParseError("bad row")) == "[parse] bad row"

    def test_str_with_cause(self):
        e = ConfigError("bad alpha", cause=ValueError("too big"))
        assert str(e) == "[config] bad alpha (caused by ValueError: too big)"
        assert e.cause.args == ("too big",)

    def test_exit_codes(self):
        assert ParseError("x").exit_code == 2
        assert ConfigError("x").exit_code == 3
        assert StatisticUndefined("mean_t").exit_code == 3
        assert PermutestError("x").exit_code == 1

    def test_cap_exceeded(self):
        e = CapExceeded(90, 10)
        assert isinstance(e, ConfigError)
        assert (e.count, e.cap) == (90, 10)
        assert e.category == "cap_exceeded"

    def test_unknown_statistic_lists_names(self):
        e = UnknownStatistic("wilcoxon", ["mean", "median"])
        assert "wilcoxon" in str(e) and "median" in str(e)

    def test_incompatible_statistic(self):
        assert "3 groups" in str(IncompatibleStatistic("mean", 3))

    def test_undefined_carries_assignment(self):
        e = StatisticUndefined("mean_t", assignment=[0, 2, 1, 3])
        assert e.assignment == [0, 2, 1, 3]
        assert "assignment [0, 2, 1, 3]" in str(e)

    def test_undefined_on_observed(self):
        e = StatisticUndefined("mean_t")
        assert e.assignment is None
        assert "observed data" in str(e)


class TestLoadConfig:
    def test_general_has_every_section(self):
        config = load_config("general")
        for key in ("engine_configs", "montecarlo_configs", "diagnostics_configs", "cli_configs"):
            assert key in config

    def test_default_alpha_is_a_string(self):
        assert load_config("general")["engine_configs"]["default_alpha"] == "0.05"

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            load_config("database")

    def test_plans_is_not_a_file(self):
        with pytest.raises(ValueError):
            load_config("plans")

    def test_bundled_plans(self):
        names = bundled_plan_names()
        for name in ("table1_row1", "table1_row2", "table1_row3", "table1_row4", "smoke"):
            assert name in names


class TestParallel:
    def test_worker_cap(self, monkeypatch):
        monkeypatch.setenv("PERMUTEST_THREADS", "1")
        assert worker_count() == 1

    @pytest.mark.parametrize("raw", ["0", "-3", "many"])
    def test_ignored_cap(self, monkeypatch, raw):
        monkeypatch.setenv("PERMUTEST_THREADS", raw)
        assert worker_count() >= 1

    @pytest.mark.parametrize("workers", [1, 4])
    def test_order_is_kept(self, workers):
        assert parallel_map(lambda x: x * x, range(50), workers) == [x * x for x in range(50)]

    def test_empty(self):
        assert parallel_map(str, [], 4) == []


class TestLogger:
    def test_silent_by_default(self):
        out = io.StringIO()
        Logger(stream=out).info("hidden")
        assert out.getvalue() == ""

    def test_plain_lines_off_a_terminal(self):
        out = io.StringIO()
        logger = Logger(use_logger=True, stream=out)
        logger.warning("undefined values")
        logger.error("failed", ValueError("boom"))
        assert out.getvalue().splitlines() == ["[WARN] undefined values", "[FAIL] failed: boom"]

    def test_timed(self):
        out = io.StringIO()
        with Logger(use_logger=True, stream=out, use_color=False).timed("replications"):
            pass
        first, second = out.getvalue().splitlines()
        assert first == "[....] replications"
        assert second.startswith("[INFO] replications took ")
