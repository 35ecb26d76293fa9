from permutest.core.engine import permutation_distribution, run_test
from permutest.core.statistics import REGISTRY, get_statistic

__all__ = ["run_test", "permutation_distribution", "get_statistic", "REGISTRY"]
