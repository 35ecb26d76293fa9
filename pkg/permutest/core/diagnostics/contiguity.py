"""
Likelihood ratio between drawing s of the N pooled observations without
replacement (multivariate hypergeometric counts) and with replacement
(multinomial counts with p_i = n_i / N), and its limit law.
"""

import math
from fractions import Fraction
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import gammaln

from permutest.core.distributions import as_generator, multinomial_draw
from permutest.logger import get_logger
from permutest.utils.exceptions import ConfigError
from permutest.utils.load_yaml import load_config

config = load_config("general")["diagnostics_configs"]


class ContiguityDraw(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    M: List[int]
    L: float = Field(..., ge=0)
    log_L: float


def _check(M: Sequence[int], s: int, sizes: Sequence[int]) -> None:
    if len(M) != len(sizes):
        raise ConfigError(f"Count vector {list(M)} does not match {len(sizes)} groups")
    if any(m < 0 for m in M) or sum(M) != s:
        raise ConfigError(f"Count vector {list(M)} must be nonnegative and add up to s = {s}")
    if s > sum(sizes):
        raise ConfigError(f"Cannot draw s = {s} from N = {sum(sizes)} observations")


def log_likelihood_ratio(counts: np.ndarray, sizes: Sequence[int]) -> np.ndarray:
    """
    log dQ/dP for each row of `counts`, -inf where a row is outside the
    hypergeometric support. Everything goes through log-gamma.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.float64))
    n = np.asarray(sizes, dtype=np.float64)
    N = n.sum()
    s = counts.sum(axis=1)
    outside = np.any(counts > n, axis=1)
    safe = np.minimum(counts, n)

    log_hyper = (
        (gammaln(n + 1) - gammaln(safe + 1) - gammaln(n - safe + 1)).sum(axis=1)
        - (gammaln(N + 1) - gammaln(s + 1) - gammaln(N - s + 1))
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, counts * np.log(n / N), 0.0)
    log_multi = gammaln(s + 1) - gammaln(counts + 1).sum(axis=1) + terms.sum(axis=1)

    out = log_hyper - log_multi
    out[outside] = -np.inf
    return out


def likelihood_ratio(M: Sequence[int], s: int, sizes: Sequence[int]) -> float:
    """Hypergeometric pmf over multinomial pmf at the count vector M"""
    _check(M, s, sizes)
    return float(np.exp(log_likelihood_ratio(np.array([M]), sizes)[0]))


def likelihood_ratio_draw(M: Sequence[int], s: int, sizes: Sequence[int]) -> ContiguityDraw:
    _check(M, s, sizes)
    log_L = float(log_likelihood_ratio(np.array([M]), sizes)[0])
    return ContiguityDraw(M=[int(m) for m in M], L=math.exp(log_L), log_L=log_L)


def likelihood_ratio_exact(M: Sequence[int], s: int, sizes: Sequence[int]) -> Fraction:
    _check(M, s, sizes)
    N = sum(sizes)
    if any(m > n for m, n in zip(M, sizes)):
        return Fraction(0)
    hyper = Fraction(math.prod(math.comb(n, m) for m, n in zip(M, sizes)), math.comb(N, s))
    multi = Fraction(math.factorial(s), math.prod(math.factorial(m) for m in M))
    for m, n in zip(M, sizes):
        multi *= Fraction(n, N) ** m
    return hyper / multi


def multinomial_pmf_exact(M: Sequence[int], sizes: Sequence[int]) -> Fraction:
    N = sum(sizes)
    out = Fraction(math.factorial(sum(M)), math.prod(math.factorial(m) for m in M))
    for m, n in zip(M, sizes):
        out *= Fraction(n, N) ** m
    return out


def enumerate_count_vectors(s: int, k: int) -> Iterator[Tuple[int, ...]]:
    """Every vector of k nonnegative integers adding up to s"""
    if k == 1:
        yield (s,)
        return
    for first in range(s + 1):
        for rest in enumerate_count_vectors(s - first, k - 1):
            yield (first,) + rest


def expected_likelihood_ratio_exact(s: int, sizes: Sequence[int]) -> Fraction:
    """sum over M of P(M) L(M) under the multinomial law; exactly 1 for s <= N"""
    return sum(
        (
            multinomial_pmf_exact(M, sizes) * likelihood_ratio_exact(M, s, sizes)
            for M in enumerate_count_vectors(s, len(sizes))
        ),
        Fraction(0),
    )


def limit_law_sample(theta: float, k: int, count: int, rng) -> np.ndarray:
    """Draws of (1 - theta)^(-(k-1)/2) exp(-theta X / (2 (1 - theta))), X ~ chi2(k-1)"""
    chi2 = as_generator(rng).chisquare(k - 1, size=count)
    return (1 - theta) ** (-(k - 1) / 2) * np.exp(-theta * chi2 / (2 * (1 - theta)))


def mid_ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """
    Largest gap between the mid-distribution functions P(X < t) + P(X = t) / 2
    of two samples, over all observed points. Reduces to the usual two-sample
    Kolmogorov-Smirnov distance when there are no ties.
    """
    a, b = np.sort(np.asarray(a, dtype=np.float64)), np.sort(np.asarray(b, dtype=np.float64))
    points = np.unique(np.concatenate([a, b]))

    def mid(x):
        lo = np.searchsorted(x, points, side="left")
        hi = np.searchsorted(x, points, side="right")
        return (lo + hi) / (2 * x.size)

    return float(np.max(np.abs(mid(a) - mid(b))))


class ContiguityReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    sizes: List[int]
    s: int
    theta: float
    replications: int
    mean_L: float
    se_L: float
    ks_distance: float
    ks_threshold: float
    mean_tolerance: float
    passed: bool


def contiguity_limit_check(
    sizes: Sequence[int],
    s: int,
    replications: int = None,
    rng=None,
    ks_threshold: float = None,
    mean_tolerance: float = None,
) -> ContiguityReport:
    """
    Draws M from the multinomial law, evaluates L(M) and compares its empirical
    distribution with draws from the limit law at theta = s / N. Passes when
    the mean of L is within `mean_tolerance` of 1 and the mid-distribution KS
    distance is at most `ks_threshold`.
    """
    replications = config["contiguity_replications"] if replications is None else replications
    ks_threshold = config["contiguity_ks_threshold"] if ks_threshold is None else ks_threshold
    mean_tolerance = (
        config["contiguity_mean_tolerance"] if mean_tolerance is None else mean_tolerance
    )
    sizes = tuple(int(n) for n in sizes)
    N, k = sum(sizes), len(sizes)
    if not 0 <= s < N:
        raise ConfigError(f"Need 0 <= s < N, got s = {s} with N = {N}")
    theta = s / N

    gen = as_generator(0 if rng is None else rng)
    counts = multinomial_draw(s, [Fraction(n, N) for n in sizes], gen, size=replications)
    L = np.exp(log_likelihood_ratio(counts, sizes))
    reference = limit_law_sample(theta, k, replications, gen)

    mean = float(L.mean())
    se = float(L.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    distance = mid_ks_distance(L, reference)
    get_logger().info(
        f"Contiguity at sizes {sizes}, s = {s}: mean L = {mean:.4f}, KS = {distance:.4f}"
    )
    return ContiguityReport(
        sizes=list(sizes),
        s=s,
        theta=theta,
        replications=replications,
        mean_L=mean,
        se_L=se,
        ks_distance=distance,
        ks_threshold=ks_threshold,
        mean_tolerance=mean_tolerance,
        passed=abs(mean - 1) <= mean_tolerance and distance <= ks_threshold,
    )
