import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from permutest.core.distributions import (
    DistributionSpec,
    as_generator,
    multinomial_draw,
    spawn_generators,
)
from permutest.core.helpers.parallel import parallel_map
from permutest.core.statistics import StatisticDescriptor, get_statistic
from permutest.logger import get_logger
from permutest.utils.common import to_fraction
from permutest.utils.exceptions import ConfigError
from permutest.utils.load_yaml import load_config
from permutest.utils.structure import GroupedSample

config = load_config("general")["diagnostics_configs"]

_STANDARD_NORMAL = DistributionSpec(family="normal", params=(0.0, 1.0))


@dataclass(frozen=True)
class CouplingResult:
    """
    One realisation of the two-stage mixture construction.

    Z_bar[t] is the t-th observation built from source J[t]: the next unused
    observation of that group in Z while any are left, a fresh draw otherwise.
    pi0 places Z_bar back onto the slots of Z, so Z.values[i] == Z_bar[pi0[i]]
    at every slot except the D slots flagged in `fresh`.
    """

    Z: GroupedSample
    Z_bar: np.ndarray
    pi0: np.ndarray
    sources: np.ndarray
    counts: np.ndarray
    fresh: np.ndarray

    @property
    def D(self) -> int:
        return int(self.fresh.sum())

    @property
    def aligned(self) -> np.ndarray:
        """Z_bar reordered by pi0, i.e. Z_bar_{pi0}"""
        return self.Z_bar[self.pi0]

    def differing_positions(self) -> np.ndarray:
        return np.flatnonzero(self.fresh)


def _probabilities(p, k: int) -> List[Fraction]:
    probs = [to_fraction(v) for v in p]
    if len(probs) != k:
        raise ConfigError(f"Need {k} mixture probabilities, got {len(probs)}")
    if any(v <= 0 for v in probs):
        shown = [str(v) for v in probs]
        raise ConfigError(f"Mixture probabilities must be strictly positive, got {shown}")
    if sum(probs) != 1:
        raise ConfigError(f"Mixture probabilities must add up to 1, they add up to {sum(probs)}")
    return probs


def couple(
    sizes: Sequence[int],
    p=None,
    rng=None,
    dists: Optional[Sequence[DistributionSpec]] = None,
) -> CouplingResult:
    """
    Builds Z (group j drawn from dists[j]) and the coupled mixture vector Z_bar.

    Args:
        sizes: Group sizes (n_1, ..., n_k)
        p: Mixture probabilities, defaults to n_j / N
        rng: RngStream, numpy Generator or integer seed
        dists: One distribution per group, standard normal by default
    """
    sizes = tuple(int(n) for n in sizes)
    k, N = len(sizes), sum(sizes)
    p = [Fraction(n, N) for n in sizes] if p is None else p
    probs = _probabilities(p, k)
    dists = [_STANDARD_NORMAL] * k if dists is None else list(dists)
    if len(dists) != k:
        raise ConfigError(f"Need one distribution per group, got {len(dists)} for {k} groups")

    gen = as_generator(0 if rng is None else rng)
    Z = GroupedSample.from_groups(*(d.sample(n, gen) for d, n in zip(dists, sizes)))
    offsets = np.array(Z.offsets[:-1])
    n = np.array(sizes)

    # Labels drawn i.i.d. from probs: multinomial counts in a uniformly random order
    counts = multinomial_draw(N, probs, gen)
    J = gen.permutation(np.repeat(np.arange(k), counts))
    ranks = np.empty(N, dtype=np.intp)
    for j in range(k):
        where = np.flatnonzero(J == j)
        ranks[where] = np.arange(where.size)
    reuse = ranks < n[J]

    Z_bar = np.empty(N)
    origin = offsets[J[reuse]] + ranks[reuse]
    Z_bar[reuse] = Z.values[origin]
    for j in range(k):
        extra = np.flatnonzero(~reuse & (J == j))
        if extra.size:
            Z_bar[extra] = dists[j].sample(int(extra.size), gen)

    # Reused observations go back to their own slots; fresh ones fill the
    # empty slots in the order they were constructed
    pi0 = np.full(N, -1, dtype=np.intp)
    pi0[origin] = np.flatnonzero(reuse)
    empty = np.flatnonzero(pi0 < 0)
    pi0[empty] = np.flatnonzero(~reuse)
    fresh = np.zeros(N, dtype=bool)
    fresh[empty] = True

    return CouplingResult(Z=Z, Z_bar=Z_bar, pi0=pi0, sources=J, counts=counts, fresh=fresh)


def coupling_statistic_gap(
    sizes: Sequence[int],
    dists: Sequence[DistributionSpec],
    stat: Union[StatisticDescriptor, str],
    rng=None,
) -> float:
    """T(Z_bar_{pi0} regrouped by pi) - T(Z regrouped by pi) for one fresh pi"""
    stat = get_statistic(stat) if isinstance(stat, str) else stat
    gen = as_generator(0 if rng is None else rng)
    result = couple(sizes, rng=gen, dists=dists)
    pi = gen.permutation(result.Z.N)
    values = np.vstack([result.aligned[pi], result.Z.values[pi]])
    coupled, original = stat.evaluate_batch(values, result.Z.group_sizes)
    return float(coupled - original)


class CouplingReport(BaseModel):
    """Mean of D/N against N^(-1/2) over independent constructions"""

    model_config = ConfigDict(frozen=True)

    sizes: List[int]
    runs: int
    mean_D_over_N: float
    se: float
    bound: float
    identity_holds: bool
    passed: bool


def coupling_check(sizes: Sequence[int], runs: int = None, rng=None, p=None) -> CouplingReport:
    """
    Repeats the construction `runs` times. Passes when mean(D/N) is at most
    N^(-1/2) up to three standard errors and, for two groups, D = |N_1 - n_1|
    holds on every run.
    """
    runs = config["coupling_runs"] if runs is None else runs
    sizes = tuple(int(n) for n in sizes)
    N = sum(sizes)
    generators = spawn_generators(0 if rng is None else rng, runs)

    def one(gen):
        result = couple(sizes, p=p, rng=gen)
        expected = sum(max(int(c) - n, 0) for c, n in zip(result.counts, sizes))
        identity = result.D == expected
        if len(sizes) == 2:
            identity = identity and result.D == abs(int(result.counts[0]) - sizes[0])
        structural = bool(
            np.array_equal(result.Z.values[~result.fresh], result.aligned[~result.fresh])
        )
        return result.D / N, identity and structural

    outcomes = parallel_map(one, generators)
    ratios = np.array([o[0] for o in outcomes])
    mean = float(ratios.mean())
    se = float(ratios.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
    bound = N**-0.5
    identity = all(o[1] for o in outcomes)
    get_logger().info(f"Coupling at sizes {sizes}: mean D/N = {mean:.5f}, bound {bound:.5f}")
    return CouplingReport(
        sizes=list(sizes),
        runs=runs,
        mean_D_over_N=mean,
        se=se,
        bound=bound,
        identity_holds=identity,
        passed=identity and mean - 3 * se <= bound,
    )


class CouplingGapReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    sizes: List[int]
    statistic: str
    runs: int
    gap_variance: float
    bound: float
    passed: bool


def coupling_gap_variance(
    sizes: Sequence[int],
    dists: Sequence[DistributionSpec],
    stat: Union[StatisticDescriptor, str],
    runs: int = None,
    rng=None,
) -> CouplingGapReport:
    """
    Empirical variance of the coupling gap over `runs` realisations, against
    2 max(Var) N^2 / min(n_i)^2 * N^(-1/2)
    """
    stat = get_statistic(stat) if isinstance(stat, str) else stat
    runs = config["coupling_gap_runs"] if runs is None else runs
    sizes = tuple(int(n) for n in sizes)
    N = sum(sizes)
    generators = spawn_generators(0 if rng is None else rng, runs)
    gaps = np.array(
        parallel_map(lambda g: coupling_statistic_gap(sizes, dists, stat, g), generators)
    )

    max_var = max(d.variance() for d in dists)
    bound = 2 * max_var * N**2 / min(sizes) ** 2 * N**-0.5
    variance = float(gaps.var(ddof=1)) if runs > 1 else 0.0
    return CouplingGapReport(
        sizes=list(sizes),
        statistic=stat.name,
        runs=runs,
        gap_variance=variance,
        bound=bound,
        passed=variance <= bound,
    )
