from permutest.core.diagnostics.contiguity import (
    ContiguityDraw,
    ContiguityReport,
    contiguity_limit_check,
    enumerate_count_vectors,
    expected_likelihood_ratio_exact,
    likelihood_ratio,
    likelihood_ratio_exact,
)
from permutest.core.diagnostics.coupling import (
    CouplingGapReport,
    CouplingReport,
    CouplingResult,
    couple,
    coupling_check,
    coupling_gap_variance,
    coupling_statistic_gap,
)
from permutest.core.diagnostics.hoeffding import (
    DistributionSampler,
    HoeffdingReport,
    hoeffding_pair_check,
)
from permutest.core.diagnostics.subset import SubsetReport, random_subset_convergence_check

__all__ = [
    "ContiguityDraw",
    "ContiguityReport",
    "contiguity_limit_check",
    "enumerate_count_vectors",
    "expected_likelihood_ratio_exact",
    "likelihood_ratio",
    "likelihood_ratio_exact",
    "CouplingGapReport",
    "CouplingReport",
    "CouplingResult",
    "couple",
    "coupling_check",
    "coupling_gap_variance",
    "coupling_statistic_gap",
    "DistributionSampler",
    "HoeffdingReport",
    "hoeffding_pair_check",
    "SubsetReport",
    "random_subset_convergence_check",
]
