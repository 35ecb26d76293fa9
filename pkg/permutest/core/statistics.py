"""
Test statistics and the variance estimators used to studentize them.

Every statistic is implemented once, as a batch function over a matrix whose
rows are (permuted) pooled vectors. Each group block is sorted within the row
before anything is computed, which makes the statistics exactly invariant
under reorderings that keep group membership and makes ties reproducible to
the last bit. Rows on which a statistic is undefined come back as NaN.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from permutest.utils.exceptions import (
    ConfigError,
    IncompatibleStatistic,
    StatisticUndefined,
    UnknownStatistic,
)
from permutest.utils.load_yaml import load_config
from permutest.utils.structure import GroupedSample

config = load_config("general")["engine_configs"]

Kind = Literal["two_sample_raw", "two_sample_studentized", "ksample_quadratic", "pooled"]
Parameter = Literal["mean", "median", "variance", "sum"]

BatchFn = Callable[[List[np.ndarray], int], np.ndarray]


class VarianceEstimate(BaseModel):
    """Estimate of the asymptotic variance of a group's parameter estimate"""

    model_config = ConfigDict(frozen=True)

    value: float = Field(..., ge=0, allow_inf_nan=False)


def sorted_blocks(matrix: np.ndarray, group_sizes: Sequence[int]) -> List[np.ndarray]:
    """Splits every row into its group blocks and sorts each block"""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    offsets = np.cumsum((0,) + tuple(group_sizes))
    return [np.sort(matrix[:, a:b], axis=1) for a, b in zip(offsets[:-1], offsets[1:])]


def _constant(block: np.ndarray) -> np.ndarray:
    # Blocks are sorted, so a group is constant iff its extremes agree
    return block[:, 0] == block[:, -1]


def _median_index(m: int) -> int:
    """0-based index of the lower median X_(ceil(m/2))"""
    return (m - 1) // 2


# Bootstrap variance of the sample median


@lru_cache(maxsize=1024)
def _median_weights_cached(m: int) -> np.ndarray:
    r = _median_index(m) + 1
    cdf = stats.binom.cdf(r - 1, m, np.arange(m + 1) / m)
    weights = cdf[:-1] - cdf[1:]
    weights.setflags(write=False)
    return weights


def bootstrap_median_weights(m: int) -> np.ndarray:
    """
    P(median* = X_(l)) for l = 1..m, where median* is the lower median of a
    bootstrap resample of size m:

        P(Bin(m, (l-1)/m) <= r-1) - P(Bin(m, l/m) <= r-1),   r = ceil(m/2)
    """
    if m < 1:
        raise ValueError(f"Group size must be positive, got {m}")
    return _median_weights_cached(int(m))


def bootstrap_median_weights_exact(m: int) -> Tuple[Fraction, ...]:
    """Same probabilities as `bootstrap_median_weights`, in exact rational arithmetic"""
    if m < 1:
        raise ValueError(f"Group size must be positive, got {m}")
    r = _median_index(m) + 1

    def binom_cdf(p: Fraction) -> Fraction:
        return sum(
            (math.comb(m, j) * p**j * (1 - p) ** (m - j) for j in range(r)), Fraction(0)
        )

    cdf = [binom_cdf(Fraction(l, m)) for l in range(m + 1)]
    return tuple(cdf[l] - cdf[l + 1] for l in range(m))


def _bootstrap_median_variance_batch(block: np.ndarray) -> np.ndarray:
    m = block.shape[1]
    med = block[:, _median_index(m)]
    # Elementwise product then a row sum, so a row gives the same value in any batch
    return m * ((block - med[:, None]) ** 2 * bootstrap_median_weights(m)).sum(axis=1)


def bootstrap_median_variance(group) -> VarianceEstimate:
    """
    m * sum_l (X_(l) - median)^2 * P(median* = X_(l)).

    Divided by m it estimates the sampling variance of the median; for smooth
    F it converges to 1 / (4 f(median)^2).
    """
    block = np.sort(np.asarray(group, dtype=np.float64).reshape(1, -1), axis=1)
    if block.shape[1] < 1:
        raise ValueError("bootstrap_median_variance needs at least one observation")
    value = float(_bootstrap_median_variance_batch(block)[0])
    return VarianceEstimate(value=max(value, 0.0))


# Batch statistics. Each takes the sorted blocks and N.


def _mean_diff(blocks: List[np.ndarray], N: int) -> np.ndarray:
    x, y = blocks
    return math.sqrt(N) * (x.mean(axis=1) - y.mean(axis=1))


def _mean_diff_studentized(blocks: List[np.ndarray], N: int) -> np.ndarray:
    x, y = blocks
    m, n = x.shape[1], y.shape[1]
    v2 = N * x.var(axis=1, ddof=1) / m + N * y.var(axis=1, ddof=1) / n
    undefined = _constant(x) & _constant(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _mean_diff(blocks, N) / np.sqrt(v2)
    out[undefined] = np.nan
    return out


def _medians(block: np.ndarray) -> np.ndarray:
    return block[:, _median_index(block.shape[1])]


def _median_diff(blocks: List[np.ndarray], N: int) -> np.ndarray:
    x, y = blocks
    return math.sqrt(N) * (_medians(x) - _medians(y))


def _median_diff_studentized(blocks: List[np.ndarray], N: int) -> np.ndarray:
    x, y = blocks
    m, n = x.shape[1], y.shape[1]
    wx = _bootstrap_median_variance_batch(x)
    wy = _bootstrap_median_variance_batch(y)
    v2 = (N / m) * wx + (N / n) * wy
    undefined = _constant(x) & _constant(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _median_diff(blocks, N) / np.sqrt(np.maximum(v2, 0.0))
    out[undefined] = np.nan
    return out


def _central_moments(block: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(sigma^2, mu_4 - sigma^4) with 1/m denominators"""
    centred = block - block.mean(axis=1, keepdims=True)
    sigma2 = (centred**2).mean(axis=1)
    tau = (centred**4).mean(axis=1) - sigma2**2
    # Rounding can leave a tiny (even negative) tau where the exact value is 0
    tau = np.where(tau <= config["zero_tolerance"] * sigma2**2, 0.0, tau)
    return sigma2, tau


def _variance_diff_studentized(blocks: List[np.ndarray], N: int) -> np.ndarray:
    x, y = blocks
    m, n = x.shape[1], y.shape[1]
    sx, tx = _central_moments(x)
    sy, ty = _central_moments(y)
    v2 = (N / m) * tx + (N / n) * ty
    with np.errstate(divide="ignore", invalid="ignore"):
        out = math.sqrt(N) * (sx - sy) / np.sqrt(v2)
    out[v2 <= 0] = np.nan
    return out


def _ksample_quadratic(
    blocks: List[np.ndarray],
    N: int,
    parameter: Parameter,
    studentized: bool,
    known_variances: Optional[Sequence[float]] = None,
) -> np.ndarray:
    sizes = np.array([b.shape[1] for b in blocks], dtype=np.float64)
    if parameter == "mean":
        theta = np.column_stack([b.mean(axis=1) for b in blocks])
    else:
        theta = np.column_stack([_medians(b) for b in blocks])

    rows = theta.shape[0]
    undefined = np.zeros(rows, dtype=bool)
    if known_variances is not None:
        sigma2 = np.tile(np.asarray(known_variances, dtype=np.float64), (rows, 1))
    elif studentized:
        if parameter == "mean":
            sigma2 = np.column_stack([b.var(axis=1, ddof=1) for b in blocks])
        else:
            sigma2 = np.column_stack([_bootstrap_median_variance_batch(b) for b in blocks])
        undefined = np.any(np.column_stack([_constant(b) for b in blocks]), axis=1)
    else:
        sigma2 = np.ones_like(theta)

    with np.errstate(divide="ignore", invalid="ignore"):
        w = sizes / sigma2
        centre = (w * theta).sum(axis=1, keepdims=True) / w.sum(axis=1, keepdims=True)
        out = (w * (theta - centre) ** 2).sum(axis=1)
    out[undefined] = np.nan
    return out


def _pooled_sum(blocks: List[np.ndarray], N: int) -> np.ndarray:
    return np.concatenate(blocks, axis=1).sum(axis=1) / math.sqrt(N)


# Registry


@dataclass(frozen=True)
class StatisticDescriptor:
    """
    A named statistic of a GroupedSample.

    `batch` maps the sorted group blocks of a matrix of pooled vectors (and N)
    to one value per row, NaN where the statistic is undefined.
    """

    name: str
    kind: Kind
    parameter: Parameter
    variance_estimator: str
    batch: BatchFn = field(repr=False, compare=False)
    min_group_size: int = 1
    min_largest_group: int = 1
    description: str = ""

    @property
    def two_sample(self) -> bool:
        return self.kind in ("two_sample_raw", "two_sample_studentized")

    def validate(self, group_sizes: Sequence[int]) -> None:
        k = len(group_sizes)
        if self.two_sample and k != 2:
            raise IncompatibleStatistic(self.name, k)
        if k < 2:
            raise ConfigError(f"The statistic {self.name!r} needs at least two groups, got {k}")
        small = [n for n in group_sizes if n < self.min_group_size]
        if small:
            raise ConfigError(
                f"The statistic {self.name!r} needs at least {self.min_group_size} observations "
                f"per group, got sizes {list(group_sizes)}"
            )
        if max(group_sizes) < self.min_largest_group:
            raise ConfigError(
                f"The statistic {self.name!r} needs a group with at least "
                f"{self.min_largest_group} observations, got sizes {list(group_sizes)}"
            )

    def evaluate_batch(self, matrix: np.ndarray, group_sizes: Sequence[int]) -> np.ndarray:
        matrix = np.atleast_2d(matrix)
        return self.batch(sorted_blocks(matrix, group_sizes), int(matrix.shape[1]))

    def evaluate(self, sample: GroupedSample) -> float:
        """The statistic on the sample as given; StatisticUndefined if it has no value"""
        self.validate(sample.group_sizes)
        value = float(self.evaluate_batch(sample.values, sample.group_sizes)[0])
        if math.isnan(value):
            raise StatisticUndefined(self.name)
        return value

    def __call__(self, sample: GroupedSample) -> float:
        return self.evaluate(sample)


def _ksample(parameter: Parameter, studentized: bool = True) -> BatchFn:
    def batch(blocks, N):
        return _ksample_quadratic(blocks, N, parameter, studentized)

    return batch


REGISTRY: Dict[str, StatisticDescriptor] = {
    d.name: d
    for d in (
        StatisticDescriptor(
            name="mean",
            kind="two_sample_raw",
            parameter="mean",
            variance_estimator="none",
            batch=_mean_diff,
            description="sqrt(N) (mean X - mean Y)",
        ),
        StatisticDescriptor(
            name="mean_t",
            kind="two_sample_studentized",
            parameter="mean",
            variance_estimator="sample_variance",
            batch=_mean_diff_studentized,
            min_group_size=2,
            description="difference of means over its standard error",
        ),
        StatisticDescriptor(
            name="median",
            kind="two_sample_raw",
            parameter="median",
            variance_estimator="none",
            batch=_median_diff,
            description="sqrt(N) (median X - median Y), lower median",
        ),
        StatisticDescriptor(
            name="median_t",
            kind="two_sample_studentized",
            parameter="median",
            variance_estimator="bootstrap_median",
            batch=_median_diff_studentized,
            description="difference of medians over the bootstrap standard error",
        ),
        StatisticDescriptor(
            name="var_t",
            kind="two_sample_studentized",
            parameter="variance",
            variance_estimator="fourth_moment",
            batch=_variance_diff_studentized,
            min_group_size=2,
            # two-point groups have mu_4 = sigma^4, so one group must be larger
            min_largest_group=3,
            description="difference of variances over the fourth moment standard error",
        ),
        StatisticDescriptor(
            name="ksample_mean_t",
            kind="ksample_quadratic",
            parameter="mean",
            variance_estimator="sample_variance",
            batch=_ksample("mean"),
            min_group_size=2,
            description="precision weighted between-group spread of the means",
        ),
        StatisticDescriptor(
            name="ksample_median_t",
            kind="ksample_quadratic",
            parameter="median",
            variance_estimator="bootstrap_median",
            batch=_ksample("median"),
            min_group_size=2,
            description="precision weighted between-group spread of the medians",
        ),
        StatisticDescriptor(
            name="pooled_sum",
            kind="pooled",
            parameter="sum",
            variance_estimator="none",
            batch=_pooled_sum,
            description="N^(-1/2) times the sum of all observations, permutation invariant",
        ),
    )
}


def get_statistic(name: str) -> StatisticDescriptor:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownStatistic(name, list(REGISTRY))


def constant_statistic(c: float = 0.0) -> StatisticDescriptor:
    """A statistic that ignores the data. Useful as a degenerate reference."""

    def batch(blocks, N):
        return np.full(blocks[0].shape[0], float(c))

    return StatisticDescriptor(f"constant({c:g})", "pooled", "sum", "none", batch)


# Single-sample entry points


def mean_diff(sample: GroupedSample) -> float:
    return REGISTRY["mean"].evaluate(sample)


def mean_diff_studentized(sample: GroupedSample) -> float:
    return REGISTRY["mean_t"].evaluate(sample)


def median_diff(sample: GroupedSample) -> float:
    return REGISTRY["median"].evaluate(sample)


def median_diff_studentized(sample: GroupedSample) -> float:
    return REGISTRY["median_t"].evaluate(sample)


def variance_diff_studentized(sample: GroupedSample) -> float:
    return REGISTRY["var_t"].evaluate(sample)


def pooled_sum(sample: GroupedSample) -> float:
    return REGISTRY["pooled_sum"].evaluate(sample)


def ksample_quadratic(
    sample: GroupedSample,
    parameter: Parameter = "mean",
    studentized: bool = True,
    known_variances: Optional[Sequence[float]] = None,
) -> float:
    """
    sum_i w_i (theta_i - theta_bar)^2 with w_i = n_i / sigma_i^2 and theta_bar
    the w-weighted mean of the group estimates.

    With `known_variances` the true sigma_i^2 are plugged in, which gives the
    statistic whose limit is exactly chi-squared with k-1 degrees of freedom.
    Without studentization (and no known variances) all sigma_i^2 are 1.
    """
    if parameter not in ("mean", "median"):
        raise ConfigError(f"ksample_quadratic compares means or medians, not {parameter!r}")
    if known_variances is not None:
        if len(known_variances) != sample.k or any(v <= 0 for v in known_variances):
            raise ConfigError("known_variances needs one positive variance per group")
    elif studentized and min(sample.group_sizes) < 2:
        raise ConfigError(
            "Studentized k-sample statistics need two observations per group, "
            f"got {list(sample.group_sizes)}"
        )
    blocks = sorted_blocks(sample.values, sample.group_sizes)
    value = float(_ksample_quadratic(blocks, sample.N, parameter, studentized, known_variances)[0])
    if math.isnan(value):
        raise StatisticUndefined(f"ksample_{parameter}")
    return value
