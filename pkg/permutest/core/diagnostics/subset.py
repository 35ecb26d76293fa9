import math
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from permutest.core.distributions import DistributionSpec, as_generator
from permutest.utils.exceptions import ConfigError, UnknownStatistic
from permutest.utils.load_yaml import load_config

config = load_config("general")["diagnostics_configs"]

SUBSET_STATISTICS: Dict[str, Callable[[np.ndarray], float]] = {
    "mean": lambda x: float(np.mean(x)),
    "variance": lambda x: float(np.var(x, ddof=1)) if x.size > 1 else 0.0,
    "median": lambda x: float(np.median(x)),
}


class SubsetReport(BaseModel):
    """Centre and spread of W on random subsets of pooled data and on mixture samples"""

    model_config = ConfigDict(frozen=True)

    statistic: str
    sizes: List[int]
    s: int
    replications: int
    subset_center: float
    subset_se: float
    subset_spread: float
    mixture_center: float
    mixture_se: float
    mixture_spread: float
    target: Optional[float] = None
    se_multiplier: float
    passed: bool


def _within(value: float, reference: float, se: float, multiplier: float) -> bool:
    return abs(value - reference) <= multiplier * se + 1e-12 * max(1.0, abs(reference))


def random_subset_convergence_check(
    dists: Sequence[DistributionSpec],
    sizes: Sequence[int],
    s: int,
    W: Union[str, Callable[[np.ndarray], float]],
    rng=None,
    replications: int = None,
    target: float = None,
    se_multiplier: float = None,
) -> SubsetReport:
    """
    W on s observations picked at random without replacement from pooled
    k-sample data, against W on s i.i.d. draws from the mixture with weights
    n_i / N. Passes when the two centres agree within `se_multiplier` combined
    standard errors and, with a `target`, when both centres are that close to it.
    """
    if isinstance(W, str):
        if W not in SUBSET_STATISTICS:
            raise UnknownStatistic(W, list(SUBSET_STATISTICS))
        name, W = W, SUBSET_STATISTICS[W]
    else:
        name = getattr(W, "__name__", "W")
    replications = config["subset_replications"] if replications is None else replications
    se_multiplier = config["subset_se_multiplier"] if se_multiplier is None else se_multiplier

    sizes = tuple(int(n) for n in sizes)
    N, k = sum(sizes), len(sizes)
    if len(dists) != k:
        raise ConfigError(f"Need one distribution per group, got {len(dists)} for {k} groups")
    if not 1 <= s <= N:
        raise ConfigError(f"Need 1 <= s <= N, got s = {s} with N = {N}")
    weights = np.array(sizes) / N

    gen = as_generator(0 if rng is None else rng)
    on_subsets, on_mixture = np.empty(replications), np.empty(replications)
    for r in range(replications):
        pooled = np.concatenate([d.sample(n, gen) for d, n in zip(dists, sizes)])
        on_subsets[r] = W(pooled[gen.choice(N, size=s, replace=False)])
        types = np.bincount(gen.choice(k, size=s, p=weights), minlength=k)
        draws = [dists[j].sample(int(types[j]), gen) for j in range(k) if types[j] > 0]
        on_mixture[r] = W(np.concatenate(draws))

    def centre(x):
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
        return float(x.mean()), se, float(x.std(ddof=1)) if x.size > 1 else 0.0

    c1, se1, sd1 = centre(on_subsets)
    c2, se2, sd2 = centre(on_mixture)
    passed = _within(c1, c2, math.hypot(se1, se2), se_multiplier)
    if target is not None:
        passed = (
            passed
            and _within(c1, target, se1, se_multiplier)
            and _within(c2, target, se2, se_multiplier)
        )

    return SubsetReport(
        statistic=name,
        sizes=list(sizes),
        s=s,
        replications=replications,
        subset_center=c1,
        subset_se=se1,
        subset_spread=sd1,
        mixture_center=c2,
        mixture_se=se2,
        mixture_spread=sd2,
        target=target,
        se_multiplier=se_multiplier,
        passed=passed,
    )
