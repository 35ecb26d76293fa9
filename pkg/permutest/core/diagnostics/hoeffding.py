from typing import List, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from permutest.core.distributions import DistributionSpec, as_generator
from permutest.core.statistics import StatisticDescriptor, get_statistic
from permutest.logger import get_logger
from permutest.utils.exceptions import ConfigError
from permutest.utils.load_yaml import load_config
from permutest.utils.structure import GroupedSample

config = load_config("general")["diagnostics_configs"]


class DistributionSampler(BaseModel):
    """Fresh data from one distribution per group, one pooled vector per row"""

    model_config = ConfigDict(frozen=True)

    distributions: List[DistributionSpec]
    sizes: List[int]

    def matrix(self, rows: int, gen: np.random.Generator) -> np.ndarray:
        blocks = [
            spec.sample(rows * n, gen).reshape(rows, n)
            for spec, n in zip(self.distributions, self.sizes)
        ]
        return np.hstack(blocks)


class HoeffdingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    statistic: str
    mode: str = Field(..., description="fixed (data held fixed) or sampled (fresh data per pair)")
    pairs: int
    dropped_pairs: int = 0
    grid: List[float]
    max_discrepancy: float
    threshold: float
    passed: bool


def _max_discrepancy(first: np.ndarray, second: np.ndarray, levels: Sequence[float]) -> float:
    """max |P(T <= a, T' <= b) - P(T <= a) P(T' <= b)| over a grid of pooled quantiles"""
    points = np.quantile(np.concatenate([first, second]), levels)
    below_1 = first[:, None] <= points[None, :]
    below_2 = second[:, None] <= points[None, :]
    joint = below_1.T.astype(np.float64) @ below_2.astype(np.float64) / first.size
    product = np.outer(below_1.mean(axis=0), below_2.mean(axis=0))
    return float(np.max(np.abs(joint - product)))


def hoeffding_pair_check(
    sample: Union[GroupedSample, DistributionSampler],
    stat: Union[StatisticDescriptor, str],
    pair_count: int = None,
    rng=None,
    grid: Sequence[float] = None,
    threshold: float = None,
) -> HoeffdingReport:
    """
    Evaluates the statistic on two independent random permutations G, G' of
    the pooled data, `pair_count` times, and compares the joint empirical
    c.d.f. of (T(Z_G), T(Z_G')) with the product of its marginals.

    A GroupedSample keeps the data fixed across pairs. A DistributionSampler
    draws fresh data for every pair, which is what exposes a permutation
    invariant statistic: its two values always coincide.
    """
    stat = get_statistic(stat) if isinstance(stat, str) else stat
    pair_count = config["hoeffding_pairs"] if pair_count is None else pair_count
    grid = config["hoeffding_grid"] if grid is None else list(grid)
    threshold = config["hoeffding_threshold"] if threshold is None else threshold
    if pair_count < 1:
        raise ConfigError(f"pair_count must be positive, got {pair_count}")

    gen = as_generator(0 if rng is None else rng)
    if isinstance(sample, GroupedSample):
        mode, sizes = "fixed", sample.group_sizes
        data = np.broadcast_to(sample.values, (pair_count, sample.N))
    else:
        mode, sizes = "sampled", tuple(sample.sizes)
        data = sample.matrix(pair_count, gen)
    stat.validate(sizes)

    N = data.shape[1]
    positions = np.tile(np.arange(N), (pair_count, 1))
    first = stat.evaluate_batch(
        np.take_along_axis(data, gen.permuted(positions, axis=1), axis=1), sizes
    )
    second = stat.evaluate_batch(
        np.take_along_axis(data, gen.permuted(positions, axis=1), axis=1), sizes
    )
    keep = ~(np.isnan(first) | np.isnan(second))
    distance = _max_discrepancy(first[keep], second[keep], grid) if keep.any() else 0.0

    get_logger().info(f"Hoeffding check for {stat.name} ({mode}): max discrepancy {distance:.4f}")
    return HoeffdingReport(
        statistic=stat.name,
        mode=mode,
        pairs=pair_count,
        dropped_pairs=int((~keep).sum()),
        grid=[float(g) for g in grid],
        max_discrepancy=distance,
        threshold=threshold,
        passed=distance <= threshold,
    )
