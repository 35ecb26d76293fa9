import math
import re
from typing import List, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from permutest.utils.common import split_top_level, to_fraction
from permutest.utils.exceptions import ParseError

Family = Literal["normal", "t", "logistic", "uniform", "laplace", "exp"]

# Number of parameters each family takes, in parse order
_ARITY = {"normal": 2, "t": 1, "logistic": 2, "uniform": 2, "laplace": 2, "exp": 1}
_ALIASES = {"n": "normal", "studentt": "t", "exponential": "exp", "u": "uniform"}
_SPEC_RE = re.compile(r"^\s*([A-Za-z]+)\s*\((.*)\)\s*$")


class RngStream(BaseModel):
    """
    A reproducible random stream identified by (seed, stream_id, path).

    Streams are counter based: the generator is rebuilt from a numpy
    SeedSequence whose spawn key is (stream_id, *path), so distinct ids give
    independent streams and the same id always gives the same stream,
    whichever thread asks for it.
    """

    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0, lt=2**64)
    stream_id: int = Field(0, ge=0, lt=2**64)
    path: Tuple[int, ...] = ()

    def child(self, index: int) -> "RngStream":
        return RngStream(seed=self.seed, stream_id=self.stream_id, path=self.path + (index,))

    def generator(self) -> np.random.Generator:
        key = (self.stream_id, *self.path)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        return np.random.default_rng(sequence)


def as_generator(rng) -> np.random.Generator:
    """Accepts an RngStream, a numpy Generator or an integer seed"""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(seed=int(rng)).generator()
    raise TypeError(f"Cannot build a random generator from {type(rng).__name__}")


class DistributionSpec(BaseModel):
    """
    One of the supported families with its parameters.

    normal(mean, variance), t(df), logistic(location, scale),
    uniform(lower, upper), laplace(location, scale), exp(rate)
    """

    model_config = ConfigDict(frozen=True)

    family: Family
    params: Tuple[float, ...]

    @model_validator(mode="after")
    def _check_params(self):
        p = self.params
        if len(p) != _ARITY[self.family]:
            raise ValueError(f"{self.family} takes {_ARITY[self.family]} parameters, got {len(p)}")
        if not all(math.isfinite(v) for v in p):
            raise ValueError("Distribution parameters must be finite")
        if self.family in ("normal", "logistic", "laplace") and p[1] <= 0:
            raise ValueError(f"The second parameter of {self.family} must be positive")
        if self.family in ("t", "exp") and p[0] <= 0:
            raise ValueError(f"The parameter of {self.family} must be positive")
        if self.family == "uniform" and not p[0] < p[1]:
            raise ValueError("uniform needs lower < upper")
        return self

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """
        Parses strings like "normal(0,1)", "T(5)" or "Laplace(0.693,1)".
        Family names are case-insensitive.
        """
        match = _SPEC_RE.match(text)
        if not match:
            raise ParseError(f"Could not parse distribution {text!r}")
        name = match.group(1).lower()
        name = _ALIASES.get(name, name)
        if name not in _ARITY:
            raise ParseError(f"Unknown distribution family {match.group(1)!r} in {text!r}")
        try:
            params = tuple(float(v) for v in split_top_level(match.group(2)))
            return cls(family=name, params=params)
        except ValueError as e:
            raise ParseError(f"Invalid parameters in {text!r}", cause=e)

    def __str__(self) -> str:
        return f"{self.family}({','.join(repr(float(v)) for v in self.params)})"

    @property
    def label(self) -> str:
        """Short label for tables, e.g. N(0,1), T(5), exp(1)"""
        names = {
            "normal": "N",
            "t": "T",
            "logistic": "Logistic",
            "uniform": "U",
            "laplace": "Laplace",
            "exp": "exp",
        }
        return f"{names[self.family]}({','.join(f'{v:g}' for v in self.params)})"

    def frozen(self):
        """The equivalent frozen scipy.stats distribution"""
        p = self.params
        if self.family == "normal":
            return stats.norm(loc=p[0], scale=math.sqrt(p[1]))
        if self.family == "t":
            return stats.t(df=p[0])
        if self.family == "logistic":
            return stats.logistic(loc=p[0], scale=p[1])
        if self.family == "uniform":
            return stats.uniform(loc=p[0], scale=p[1] - p[0])
        if self.family == "laplace":
            return stats.laplace(loc=p[0], scale=p[1])
        return stats.expon(scale=1.0 / p[0])

    def sample(self, n: int, rng) -> np.ndarray:
        """n i.i.d. draws, fully determined by the stream"""
        if n < 1:
            raise ValueError(f"Sample size must be positive, got {n}")
        g = as_generator(rng)
        p = self.params
        if self.family == "normal":
            return g.normal(p[0], math.sqrt(p[1]), size=n)
        if self.family == "t":
            return g.standard_t(p[0], size=n)
        if self.family == "logistic":
            return g.logistic(p[0], p[1], size=n)
        if self.family == "uniform":
            return g.uniform(p[0], p[1], size=n)
        if self.family == "laplace":
            return g.laplace(p[0], p[1], size=n)
        return g.exponential(1.0 / p[0], size=n)

    def true_median(self) -> float:
        p = self.params
        if self.family in ("normal", "logistic", "laplace"):
            return p[0]
        if self.family == "t":
            return 0.0
        if self.family == "uniform":
            return (p[0] + p[1]) / 2
        return math.log(2) / p[0]

    def mean(self) -> float:
        return float(self.frozen().mean())

    def variance(self) -> float:
        return float(self.frozen().var())

    def density_at_median(self) -> float:
        return float(self.frozen().pdf(self.true_median()))


def sample(spec: DistributionSpec, n: int, rng) -> np.ndarray:
    return spec.sample(n, rng)


def true_median(spec: DistributionSpec) -> float:
    return spec.true_median()


def parse_distributions(text: str) -> List[DistributionSpec]:
    """'normal(0,1),exp(1)' -> two specs"""
    return [DistributionSpec.parse(part) for part in split_top_level(text)]


def multinomial_draw(s: int, probs: Sequence, rng, size: int = None) -> np.ndarray:
    """
    Counts of s draws with replacement, type i having probability probs[i].
    With `size` the result holds that many independent count vectors, one per row.

    The probabilities are read as exact rationals and must add up to exactly 1.
    """
    exact = [to_fraction(q) for q in probs]
    if any(q < 0 for q in exact) or sum(exact) != 1:
        shown = [str(q) for q in exact]
        raise ValueError(f"Probabilities must be non-negative and add up to 1, got {shown}")
    p = np.array([float(q) for q in exact])
    shape = (p.size,) if size is None else (size, p.size)
    if s == 0:
        return np.zeros(shape, dtype=np.int64)
    return as_generator(rng).multinomial(s, p, size=size)


def hypergeometric_draw(s: int, pop_counts: Sequence[int], rng) -> np.ndarray:
    """Counts of s draws without replacement from a population with pop_counts[i] of type i"""
    counts = np.asarray(pop_counts, dtype=np.int64)
    if s > counts.sum():
        raise ValueError(f"Cannot draw {s} items from a population of {counts.sum()}")
    if s == 0:
        return np.zeros(counts.size, dtype=np.int64)
    return as_generator(rng).multivariate_hypergeometric(counts, s)


def spawn_generators(rng, count: int) -> List[np.random.Generator]:
    """
    `count` independent generators, one per replication. Streams and integer
    seeds give children (seed, stream_id, path + (i,)); a numpy Generator is spawned.
    """
    if isinstance(rng, (int, np.integer)):
        rng = RngStream(seed=int(rng))
    if isinstance(rng, RngStream):
        return [rng.child(i).generator() for i in range(count)]
    if isinstance(rng, np.random.Generator):
        return rng.spawn(count)
    raise TypeError(f"Cannot spawn random generators from {type(rng).__name__}")
