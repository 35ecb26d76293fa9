import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, islice
from typing import Dict, Iterator, List, Optional, Sequence, Union

import numpy as np

from permutest.core.distributions import RngStream, as_generator
from permutest.core.helpers.parallel import parallel_map, worker_count
from permutest.core.statistics import StatisticDescriptor, get_statistic
from permutest.logger import get_logger
from permutest.utils.common import multinomial_coefficient, to_fraction
from permutest.utils.exceptions import CapExceeded, ConfigError, StatisticUndefined
from permutest.utils.load_yaml import load_config
from permutest.utils.structure import (
    GroupedSample,
    PermutationScheme,
    RandomizedDecision,
    Sided,
    TestReport,
)

config = load_config("general")["engine_configs"]


def assignment_count(sample: GroupedSample) -> int:
    """C(N; n_1, ..., n_k), the number of distinct group assignments"""
    return multinomial_coefficient(sample.group_sizes)


def _partitions(positions: tuple, sizes: tuple) -> Iterator[tuple]:
    if len(sizes) == 1:
        yield positions
        return
    for chosen in combinations(positions, sizes[0]):
        taken = set(chosen)
        rest = tuple(p for p in positions if p not in taken)
        for tail in _partitions(rest, sizes[1:]):
            yield chosen + tail


def enumerate_assignments(sample: GroupedSample, cap: int = None) -> Iterator[np.ndarray]:
    """
    Yields every distinct group assignment exactly once as an index array:
    `sample.values[order]` is the regrouped pooled vector whose first n_1
    entries form group 1 and so on. The identity comes first.

    Raises CapExceeded before yielding anything when the count is above `cap`.
    """
    cap = config["exhaustive_cap"] if cap is None else cap
    count = assignment_count(sample)
    if count > cap:
        raise CapExceeded(count, cap)
    return (
        np.array(order, dtype=np.intp)
        for order in _partitions(tuple(range(sample.N)), sample.group_sizes)
    )


def sample_assignments(
    sample: GroupedSample,
    scheme: PermutationScheme,
    rng: Union[RngStream, np.random.Generator, None] = None,
) -> np.ndarray:
    """
    The identity followed by B uniformly random permutations of the N positions,
    one per row of the returned (B + 1, N) array.

    Without `rng` the draws come from stream 0 of `scheme.seed`, so the same
    scheme always gives the same rows.
    """
    if scheme.mode != "sampled":
        raise ConfigError(f"sample_assignments needs a sampled scheme, got {scheme.mode!r}")
    generator = as_generator(RngStream(seed=scheme.seed) if rng is None else rng)
    identity = np.arange(sample.N, dtype=np.intp)
    draws = generator.permuted(np.tile(identity, (scheme.B, 1)), axis=1)
    return np.vstack([identity, draws])


@dataclass(frozen=True)
class PermutationDistribution:
    """
    The statistic over every evaluated assignment, each carrying weight 1/M.

    `values` keeps evaluation order. Both schemes evaluate the identity first,
    so values[0] is the observed statistic. Under an exhaustive scheme each
    assignment stands for `multiplicity` = prod(n_i!) of the N! permutations.
    """

    values: np.ndarray
    scheme: PermutationScheme
    statistic_name: str = ""
    sided: Sided = "upper"
    multiplicity: int = 1
    undefined_count: int = 0
    sorted_values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise ConfigError("A permutation distribution needs at least one value")
        values.setflags(write=False)
        ordered = np.sort(values)
        ordered.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sorted_values", ordered)

    @property
    def total(self) -> int:
        return int(self.values.size)

    @property
    def weight(self) -> Fraction:
        return Fraction(1, self.total)

    def count_above(self, t: float) -> int:
        return self.total - int(np.searchsorted(self.sorted_values, t, side="right"))

    def count_equal(self, t: float) -> int:
        right = np.searchsorted(self.sorted_values, t, side="right")
        return int(right - np.searchsorted(self.sorted_values, t, side="left"))

    def cdf(self, t: float) -> Fraction:
        """R(t) = P(T <= t), exact"""
        return Fraction(int(np.searchsorted(self.sorted_values, t, side="right")), self.total)

    def quantile(self, q) -> float:
        """inf{t : R(t) >= q}"""
        q = to_fraction(q)
        if q <= 0:
            return -math.inf
        index = min(math.ceil(q * self.total), self.total) - 1
        return float(self.sorted_values[index])

    def support(self) -> Dict[float, Fraction]:
        """Distinct values with their total weight"""
        distinct, counts = np.unique(self.sorted_values, return_counts=True)
        return {float(v): Fraction(int(c), self.total) for v, c in zip(distinct, counts)}

    def summary(self, levels: Sequence[float] = None) -> Dict[str, float]:
        levels = config["quantile_levels"] if levels is None else levels
        out = {"min": float(self.sorted_values[0])}
        out.update({f"q{level:g}": self.quantile(level) for level in levels})
        out["max"] = float(self.sorted_values[-1])
        return out


def _chunks(orders, size: int) -> Iterator[np.ndarray]:
    it = iter(orders)
    while True:
        block = list(islice(it, size))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def _evaluate(sample: GroupedSample, stat: StatisticDescriptor, chunks) -> np.ndarray:
    """
    Evaluates the statistic chunk by chunk on the worker pool. Chunks are
    handed out in windows so that exhaustive enumeration never materialises
    every assignment at once.
    """
    workers = worker_count()

    def evaluate(orders: np.ndarray) -> np.ndarray:
        return stat.evaluate_batch(sample.values[orders], sample.group_sizes)

    results: List[np.ndarray] = []
    window: List[np.ndarray] = []
    for chunk in chunks:
        window.append(chunk)
        if len(window) >= 2 * workers:
            results.extend(parallel_map(evaluate, window, workers))
            window = []
    if window:
        results.extend(parallel_map(evaluate, window, workers))
    return np.concatenate(results)


def permutation_distribution(
    sample: GroupedSample,
    stat: Union[StatisticDescriptor, str],
    scheme: PermutationScheme,
    sided: Sided = "upper",
    rng: Union[RngStream, np.random.Generator, None] = None,
) -> PermutationDistribution:
    """
    The statistic recomputed over every assignment the scheme produces.

    Exhaustive: an undefined value on any assignment raises StatisticUndefined
    carrying that assignment. Sampled: undefined values become +inf and are
    counted in `undefined_count`.

    With sided="two" a two-sample statistic is replaced by its absolute value.
    """
    if isinstance(stat, str):
        stat = get_statistic(stat)
    stat.validate(sample.group_sizes)
    chunk_size = config["chunk_size"]

    if scheme.mode == "exhaustive":
        orders = enumerate_assignments(sample, cap=scheme.cap)
        get_logger().info(
            f"Enumerating {assignment_count(sample)} assignments of sizes {sample.group_sizes}"
        )
        values = _evaluate(sample, stat, _chunks(orders, chunk_size))
        undefined = np.flatnonzero(np.isnan(values))
        if undefined.size:
            first = int(undefined[0])
            order = next(islice(enumerate_assignments(sample, cap=scheme.cap), first, None))
            raise StatisticUndefined(stat.name, assignment=order)
        undefined_count = 0
    else:
        orders = sample_assignments(sample, scheme, rng)
        chunks = (orders[i : i + chunk_size] for i in range(0, orders.shape[0], chunk_size))
        values = _evaluate(sample, stat, chunks)
        undefined_mask = np.isnan(values)
        undefined_count = int(undefined_mask.sum())
        if undefined_count:
            get_logger().warning(
                f"{stat.name} was undefined on {undefined_count} sampled assignments, "
                "counting them as +inf"
            )
            values[undefined_mask] = np.inf

    if sided == "two" and stat.two_sample:
        values = np.abs(values)

    return PermutationDistribution(
        values=values,
        scheme=scheme,
        statistic_name=stat.name,
        sided=sided,
        multiplicity=sample.multiplicity,
        undefined_count=undefined_count,
    )


def randomized_decision(
    dist: PermutationDistribution, observed: float, alpha
) -> RandomizedDecision:
    """
    The randomized rule over the M values of `dist`:

        k = M - floor(alpha M),  T(k) the k-th smallest value
        M+ = #{T > T(k)},  M0 = #{T = T(k)},  a = (alpha M - M+) / M0
        phi = 1 if observed > T(k), a if observed = T(k), 0 otherwise

    All counting is exact, so M+ + a M0 = alpha M holds with no rounding.
    """
    alpha = to_fraction(alpha)
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie strictly between 0 and 1, got {alpha}")

    M = dist.total
    k = M - math.floor(alpha * M)
    critical = float(dist.sorted_values[k - 1])
    m_plus = dist.count_above(critical)
    m_zero = dist.count_equal(critical)
    a = (alpha * M - m_plus) / m_zero

    if observed > critical:
        phi = Fraction(1)
    elif observed == critical:
        phi = a
    else:
        phi = Fraction(0)

    if phi == 1:
        verdict = "reject"
    elif phi == 0:
        verdict = "accept"
    else:
        verdict = "randomize"

    return RandomizedDecision(
        critical_value=critical,
        M_plus=m_plus,
        M_zero=m_zero,
        total=M,
        a=a,
        phi=phi,
        rejected=verdict,
    )


def p_value(dist: PermutationDistribution, observed: float) -> Fraction:
    """
    Exhaustive: total weight of values >= observed.
    Sampled: (1 + #{non-identity values >= observed}) / (B + 1).
    """
    if dist.scheme.mode == "sampled":
        permuted = dist.values[1:]
        return Fraction(1 + int(np.count_nonzero(permuted >= observed)), dist.total)
    below = int(np.searchsorted(dist.sorted_values, observed, side="left"))
    return Fraction(dist.total - below, dist.total)


def run_test(
    sample: GroupedSample,
    stat: Union[StatisticDescriptor, str],
    scheme: Optional[PermutationScheme] = None,
    alpha=None,
    sided: Optional[Sided] = None,
    rng: Union[RngStream, np.random.Generator, None] = None,
) -> TestReport:
    """
    Runs one permutation test and collects everything into a TestReport.

    Args:
        sample: The pooled data with its group sizes
        stat: A StatisticDescriptor or a registry name such as "median_t"
        scheme: Defaults to exhaustive enumeration
        alpha: Level as anything `to_fraction` accepts, defaults to config
        sided: "upper" or "two", defaults to config
        rng: Overrides the scheme's seed for sampled assignments

    Raises StatisticUndefined when the statistic has no value on the observed data.
    """
    if isinstance(stat, str):
        stat = get_statistic(stat)
    scheme = PermutationScheme.exhaustive() if scheme is None else scheme
    alpha = to_fraction(config["default_alpha"] if alpha is None else alpha)
    sided = config["default_sided"] if sided is None else sided

    # Raises on undefined observed data before any assignment is evaluated
    stat.evaluate(sample)
    dist = permutation_distribution(sample, stat, scheme, sided=sided, rng=rng)
    # The identity row is the observed value, sided transform included
    observed = float(dist.values[0])
    decision = randomized_decision(dist, observed, alpha)
    p = p_value(dist, observed)

    get_logger().success(
        f"{stat.name}: observed {observed:.6g}, p = {p}, decision {decision.rejected}"
    )
    return TestReport(
        statistic_name=stat.name,
        observed=observed,
        decision=decision,
        p_value=p,
        alpha=alpha,
        scheme=scheme,
        sided=sided,
        group_sizes=list(sample.group_sizes),
        distribution_summary=dist.summary(),
        undefined_count=dist.undefined_count,
    )
