import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Annotated, ClassVar, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PlainSerializer, PlainValidator

from permutest.utils.common import format_fraction, to_fraction
from permutest.utils.exceptions import ConfigError
from permutest.utils.load_yaml import load_config

config = load_config("general")["engine_configs"]

# Exact rationals travel through JSON as "num/den" strings
Rational = Annotated[
    Fraction,
    PlainValidator(to_fraction),
    PlainSerializer(format_fraction, return_type=str),
]

Sided = Literal["upper", "two"]


@dataclass(frozen=True)
class GroupedSample:
    """
    The pooled observation vector Z together with the group sizes.

    The first n_1 entries belong to group 1, the next n_2 to group 2 and so on.
    Values are stored as a read-only float64 array.
    """

    values: np.ndarray
    group_sizes: Tuple[int, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        sizes = tuple(int(n) for n in self.group_sizes)
        if len(sizes) < 2:
            raise ConfigError(f"At least two groups are required, got sizes {sizes}")
        if any(n < 1 for n in sizes):
            raise ConfigError(f"Every group needs at least one observation, got sizes {sizes}")
        if sum(sizes) != values.size:
            raise ConfigError(
                f"Group sizes {sizes} add up to {sum(sizes)} but there are {values.size} values"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigError("Every observation must be a finite number")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "group_sizes", sizes)

    @classmethod
    def from_groups(cls, *groups) -> "GroupedSample":
        arrays = [np.asarray(g, dtype=np.float64).reshape(-1) for g in groups]
        return cls(values=np.concatenate(arrays), group_sizes=tuple(a.size for a in arrays))

    @property
    def N(self) -> int:
        return int(self.values.size)

    @property
    def k(self) -> int:
        return len(self.group_sizes)

    @property
    def offsets(self) -> Tuple[int, ...]:
        return tuple(int(o) for o in np.cumsum((0,) + self.group_sizes))

    @property
    def groups(self) -> List[np.ndarray]:
        o = self.offsets
        return [self.values[o[i] : o[i + 1]] for i in range(self.k)]

    @property
    def proportions(self) -> Tuple[Fraction, ...]:
        """n_i / N for every group"""
        return tuple(Fraction(n, self.N) for n in self.group_sizes)

    @property
    def p_m(self) -> Fraction:
        return self.proportions[0]

    @property
    def q_m(self) -> Fraction:
        return 1 - self.p_m

    @property
    def multiplicity(self) -> int:
        """Number of permutations that induce each group assignment, prod(n_i!)"""
        return math.prod(math.factorial(n) for n in self.group_sizes)

    def permuted(self, order) -> "GroupedSample":
        return GroupedSample(values=self.values[np.asarray(order)], group_sizes=self.group_sizes)

    def shifted(self, delta: float, group: int = 0) -> "GroupedSample":
        values = np.array(self.values)
        o = self.offsets
        values[o[group] : o[group + 1]] += delta
        return GroupedSample(values=values, group_sizes=self.group_sizes)

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "group_sizes": list(self.group_sizes),
        }


class PermutationScheme(BaseModel):
    """
    How group assignments are produced.

    `exhaustive` walks every distinct assignment (only allowed below `cap`);
    `sampled` evaluates the identity plus B uniformly drawn assignments.
    """

    model_config = ConfigDict(frozen=True)

    mode: Literal["exhaustive", "sampled"] = Field(
        ..., description="Enumerate every assignment or sample B of them"
    )
    B: int = Field(
        config["default_permutations"], ge=1, description="Number of sampled assignments"
    )
    seed: int = Field(config["default_seed"], ge=0, lt=2**64, description="64-bit seed")
    cap: int = Field(
        config["exhaustive_cap"], ge=1, description="Largest enumeration accepted"
    )

    @classmethod
    def exhaustive(cls, cap: int = None) -> "PermutationScheme":
        return cls(mode="exhaustive", cap=cap or config["exhaustive_cap"])

    @classmethod
    def sampled(cls, B: int = None, seed: int = None) -> "PermutationScheme":
        return cls(
            mode="sampled",
            B=config["default_permutations"] if B is None else B,
            seed=config["default_seed"] if seed is None else seed,
        )

    @property
    def label(self) -> str:
        if self.mode == "exhaustive":
            return "exhaustive"
        return f"sampled(B={self.B}, seed={self.seed})"


class RandomizedDecision(BaseModel):
    """
    The exact randomized rule. Counts are over the evaluated assignments;
    use `permutation_counts` for the N!-permutation scale.
    """

    model_config = ConfigDict(
        frozen=True, ser_json_inf_nan="constants", arbitrary_types_allowed=True
    )

    critical_value: float = Field(..., description="T^(k), the critical order statistic")
    M_plus: int = Field(..., ge=0, description="Values strictly above T^(k)")
    M_zero: int = Field(..., ge=1, description="Values equal to T^(k)")
    total: int = Field(..., ge=1, description="M, the number of evaluated assignments")
    a: Rational = Field(..., description="Randomization probability on ties with T^(k)")
    phi: Rational = Field(..., description="Value of the test function at the observed data")
    rejected: Literal["reject", "randomize", "accept"]

    def permutation_counts(self, multiplicity: int) -> Tuple[int, int, int]:
        """(M+, M0, M) when every assignment stands for `multiplicity` permutations"""
        return (self.M_plus * multiplicity, self.M_zero * multiplicity, self.total * multiplicity)


class TestReport(BaseModel):
    """Everything a single permutation test run produces"""

    __test__: ClassVar[bool] = False

    model_config = ConfigDict(
        frozen=True, ser_json_inf_nan="constants", arbitrary_types_allowed=True
    )

    statistic_name: str
    observed: float
    decision: RandomizedDecision
    p_value: Rational
    alpha: Rational
    scheme: PermutationScheme
    sided: Sided = "upper"
    group_sizes: List[int]
    distribution_summary: Dict[str, float] = Field(
        default_factory=dict, description="Quantiles of the permutation distribution"
    )
    undefined_count: int = Field(
        0, ge=0, description="Sampled assignments on which the statistic was undefined"
    )


class DataFile(BaseModel):
    """Rows of (group label, value) in order of appearance"""

    labels: List[str]
    values: List[float]

    @property
    def group_order(self) -> List[str]:
        seen = {}
        for label in self.labels:
            seen.setdefault(label, None)
        return list(seen)

    def to_sample(self) -> GroupedSample:
        order = self.group_order
        if len(order) < 2:
            raise ConfigError(f"At least two distinct group labels are required, got {order}")
        buckets: Dict[str, list] = {label: [] for label in order}
        for label, value in zip(self.labels, self.values):
            buckets[label].append(value)
        return GroupedSample.from_groups(*(buckets[label] for label in order))


class RunConfig(BaseModel):
    """The knobs of `permutest test`"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    statistic: str
    alpha: Rational = Field(default_factory=lambda: to_fraction(config["default_alpha"]))
    scheme: PermutationScheme
    sided: Sided = config["default_sided"]
    output_format: Literal["text", "records"] = "text"
    out: Optional[str] = None

    def model_post_init(self, __context) -> None:
        from permutest.core.statistics import get_statistic

        get_statistic(self.statistic)
        if not (0 < self.alpha < 1):
            raise ConfigError(f"alpha must lie strictly between 0 and 1, got {self.alpha}")

