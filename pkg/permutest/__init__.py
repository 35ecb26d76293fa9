__all__ = [
    "run_test",
    "permutation_distribution",
    "get_statistic",
    "GroupedSample",
    "PermutationScheme",
    "DistributionSpec",
    "RngStream",
    "SimulationPlan",
    "rejection_probability",
]


def __getattr__(name):
    if name in ("run_test", "permutation_distribution"):
        from permutest.core import engine

        return getattr(engine, name)
    if name == "get_statistic":
        from permutest.core.statistics import get_statistic

        return get_statistic
    if name in ("GroupedSample", "PermutationScheme"):
        from permutest.utils import structure

        return getattr(structure, name)
    if name in ("DistributionSpec", "RngStream"):
        from permutest.core import distributions

        return getattr(distributions, name)
    if name in ("SimulationPlan", "rejection_probability"):
        from permutest.core import montecarlo

        return getattr(montecarlo, name)
    raise AttributeError(f"module 'permutest' has no attribute {name!r}")
