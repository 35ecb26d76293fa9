import math
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from scipy import optimize, stats

from permutest.core.distributions import DistributionSpec, RngStream
from permutest.core.engine import p_value, permutation_distribution, randomized_decision
from permutest.core.helpers.parallel import parallel_map
from permutest.core.statistics import get_statistic
from permutest.logger import get_logger
from permutest.utils.common import to_fraction
from permutest.utils.exceptions import ConfigError, ParseError, StatisticUndefined
from permutest.utils.load_yaml import bundled_plan_names, bundled_plan_path, load_config
from permutest.utils.structure import GroupedSample, PermutationScheme, Rational, Sided

config = load_config("general")["montecarlo_configs"]
engine_config = load_config("general")["engine_configs"]

Accounting = Literal["randomized", "p_value"]


class SimulationPlan(BaseModel):
    """
    One simulation study: a tuple of distributions (one per group), the grid of
    group sizes, the statistics to compare and the Monte Carlo budget.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = ""
    distributions: List[DistributionSpec] = Field(..., min_length=2)
    sizes: List[Tuple[int, ...]] = Field(..., min_length=1)
    statistics: List[str] = Field(..., min_length=1)
    alpha: Rational = Field(default_factory=lambda: to_fraction(engine_config["default_alpha"]))
    replications: int = Field(config["replications"], ge=1)
    permutations: int = Field(config["permutations"], ge=1)
    seed: int = Field(config["seed"], ge=0, lt=2**64)
    sided: Sided = config["sided"]
    accounting: Accounting = config["accounting"]

    @field_validator("distributions", mode="before")
    @classmethod
    def _parse_distributions(cls, value):
        return [DistributionSpec.parse(v) if isinstance(v, str) else v for v in value]

    @field_validator("statistics", mode="before")
    @classmethod
    def _one_or_many(cls, value):
        return [value] if isinstance(value, str) else value

    def model_post_init(self, __context) -> None:
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie strictly between 0 and 1, got {self.alpha}")
        k = len(self.distributions)
        for sizes in self.sizes:
            if len(sizes) != k or any(n < 1 for n in sizes):
                raise ConfigError(
                    f"Size tuple {sizes} does not give a positive size to each of the {k} groups"
                )
        for name in self.statistics:
            stat = get_statistic(name)
            for sizes in self.sizes:
                stat.validate(sizes)

    @property
    def label(self) -> str:
        return " / ".join(d.label for d in self.distributions)


class SimulationCell(BaseModel):
    """One estimated rejection probability"""

    model_config = ConfigDict(frozen=True)

    distributions: str
    sizes: List[int]
    statistic: str
    delta: float = 0.0
    estimate: float = Field(..., ge=0, le=1)
    se: Optional[float] = Field(None, description="None when there is a single replication")
    replications: int
    permutations: int
    seed: int
    undefined_replications: int = 0
    directional_error: Optional[float] = Field(
        None, description="Rejections with the wrong sign, two-sided plans only"
    )


class SimulationTable(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    plan: SimulationPlan
    cells: List[SimulationCell]

    def cell(self, sizes: Sequence[int], statistic: str, delta: float = 0.0) -> SimulationCell:
        for c in self.cells:
            if tuple(c.sizes) == tuple(sizes) and c.statistic == statistic and c.delta == delta:
                return c
        raise KeyError(f"No cell for sizes {tuple(sizes)}, {statistic}, delta {delta}")


def _true_difference(plan: SimulationPlan, statistic: str, delta: float) -> Optional[float]:
    """theta(P_1 shifted by delta) - theta(P_2) for two-sample statistics, else None"""
    stat = get_statistic(statistic)
    if not stat.two_sample:
        return None
    first, second = plan.distributions
    if stat.parameter == "mean":
        return first.mean() + delta - second.mean()
    if stat.parameter == "median":
        return first.true_median() + delta - second.true_median()
    return first.variance() - second.variance()


def _replicate(plan: SimulationPlan, sizes: Tuple[int, ...], stream: RngStream, delta: float):
    """
    One replication: fresh data, then every statistic on the same sampled
    assignments. Returns (contribution, signed observed, undefined) per statistic.
    """
    data_rng = stream.child(0).generator()
    groups = [spec.sample(n, data_rng) for spec, n in zip(plan.distributions, sizes)]
    groups[0] = groups[0] + delta
    sample = GroupedSample.from_groups(*groups)
    scheme = PermutationScheme.sampled(B=plan.permutations, seed=plan.seed)

    outcomes = []
    for name in plan.statistics:
        stat = get_statistic(name)
        try:
            signed = stat.evaluate(sample)
        except StatisticUndefined:
            # Observed statistic undefined: count as no rejection
            outcomes.append((0.0, 0.0, True))
            continue
        dist = permutation_distribution(
            sample, stat, scheme, sided=plan.sided, rng=stream.child(1)
        )
        observed = float(dist.values[0])
        if plan.accounting == "randomized":
            contribution = float(randomized_decision(dist, observed, plan.alpha).phi)
        else:
            contribution = 1.0 if p_value(dist, observed) <= plan.alpha else 0.0
        outcomes.append((contribution, signed, dist.undefined_count > 0))
    return outcomes


def rejection_probability(plan: SimulationPlan, delta: float = 0.0) -> SimulationTable:
    """
    Estimates the rejection probability of every statistic at every size tuple.

    Replication r at size index i draws everything from the stream
    (plan.seed, i, r), so the table only depends on the plan and not on the
    number of worker threads. With delta != 0 the first group is shifted by delta.
    """
    logger = get_logger()
    cells: List[SimulationCell] = []
    for size_index, sizes in enumerate(plan.sizes):
        sizes = tuple(sizes)
        streams = [
            RngStream(seed=plan.seed, stream_id=size_index, path=(rep,))
            for rep in range(plan.replications)
        ]
        with logger.timed(
            f"{plan.label} at sizes {sizes}: {plan.replications} replications, "
            f"B = {plan.permutations}"
        ):
            results = parallel_map(lambda s: _replicate(plan, sizes, s, delta), streams)

        for j, name in enumerate(plan.statistics):
            contributions = np.array([r[j][0] for r in results])
            signs = np.sign([r[j][1] for r in results])
            undefined = sum(1 for r in results if r[j][2])
            estimate = float(contributions.mean())
            R = plan.replications
            se = math.sqrt(estimate * (1 - estimate) / R) if R >= 2 else None

            directional = None
            truth = _true_difference(plan, name, delta)
            if plan.sided == "two" and truth is not None and truth != 0:
                wrong = signs == -np.sign(truth)
                directional = float((contributions * wrong).mean())

            cells.append(
                SimulationCell(
                    distributions=plan.label,
                    sizes=list(sizes),
                    statistic=name,
                    delta=delta,
                    estimate=min(max(estimate, 0.0), 1.0),
                    se=se,
                    replications=R,
                    permutations=plan.permutations,
                    seed=plan.seed,
                    undefined_replications=undefined,
                    directional_error=directional,
                )
            )
            logger.info(f"  {name}: {estimate:.4f}" + (f" (se {se:.4f})" if se else ""))
    return SimulationTable(plan=plan, cells=cells)


def power_curve(plan: SimulationPlan, deltas: Sequence[float]) -> SimulationTable:
    """
    Rejection probabilities when the first group is shifted by each delta.
    Every delta reuses the same random streams, so the curve is smooth in delta.
    """
    cells: List[SimulationCell] = []
    for delta in deltas:
        cells.extend(rejection_probability(plan, delta=float(delta)).cells)
    return SimulationTable(plan=plan, cells=cells)


class LimitVariances(BaseModel):
    """
    Limiting variances of sqrt(N) (theta_hat_1 - theta_hat_2) for two groups in
    proportions (p, 1 - p).

    tau2 is what the permutation distribution of the unstudentized statistic
    converges to (computed under the mixture); v2 is the true limiting
    variance of the statistic itself.
    """

    model_config = ConfigDict(frozen=True)

    parameter: Literal["mean", "median"]
    p: float
    tau2: float = Field(..., gt=0)
    v2: float = Field(..., gt=0)

    def predicted_rejection(self, alpha) -> float:
        """
        Asymptotic one-sided rejection probability of the unstudentized test
        under the null, 1 - Phi(z_{1-alpha} tau / v)
        """
        z = stats.norm.ppf(1 - float(to_fraction(alpha)))
        return float(stats.norm.sf(z * math.sqrt(self.tau2 / self.v2)))


def asymptotic_variances(
    dists: Sequence[DistributionSpec], p, parameter: Literal["mean", "median"] = "median"
) -> LimitVariances:
    first, second = dists
    p = float(to_fraction(p))
    if not 0 < p < 1:
        raise ConfigError(f"The proportion of the first group must lie in (0, 1), got {p}")
    q = 1 - p

    if parameter == "mean":
        mixture = (
            p * first.variance()
            + q * second.variance()
            + p * q * (first.mean() - second.mean()) ** 2
        )
        tau2 = mixture / (p * q)
        v2 = first.variance() / p + second.variance() / q
    elif parameter == "median":
        P, Q = first.frozen(), second.frozen()
        if first.true_median() == second.true_median():
            centre = first.true_median()
        else:
            lo = min(first.true_median(), second.true_median())
            hi = max(first.true_median(), second.true_median())
            centre = optimize.brentq(lambda t: p * P.cdf(t) + q * Q.cdf(t) - 0.5, lo, hi)
        f_bar = p * P.pdf(centre) + q * Q.pdf(centre)
        tau2 = 1 / (4 * p * q * f_bar**2)
        v2 = 1 / (4 * p * first.density_at_median() ** 2) + 1 / (
            4 * q * second.density_at_median() ** 2
        )
    else:
        raise ConfigError(f"Limit variances are available for mean and median, not {parameter!r}")

    return LimitVariances(parameter=parameter, p=p, tau2=tau2, v2=v2)


def render_table(table: SimulationTable, digits: int = 4) -> str:
    """
    Aligned text table: one row per statistic (and shift), one column per size tuple
    """
    plan = table.plan
    columns = [tuple(s) for s in plan.sizes]
    deltas = sorted({c.delta for c in table.cells})
    header = ["Distributions", "Statistic"] + [str(c).replace(" ", "") for c in columns]
    if len(deltas) > 1:
        header.insert(2, "delta")

    rows = []
    for delta in deltas:
        for name in plan.statistics:
            row = [plan.label, name]
            if len(deltas) > 1:
                row.append(f"{delta:g}")
            row += [f"{table.cell(c, name, delta).estimate:.{digits}f}" for c in columns]
            rows.append(row)

    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.append(
        f"alpha = {plan.alpha}, {plan.sided} sided, {plan.accounting} accounting, "
        f"R = {plan.replications}, B = {plan.permutations}, seed = {plan.seed}"
    )
    return "\n".join(lines)


def table_records(table: SimulationTable) -> List[dict]:
    """One JSON-ready record per cell"""
    return [cell.model_dump(mode="json") for cell in table.cells]


def load_plan(name_or_path: Union[str, Path], **overrides) -> SimulationPlan:
    """
    Loads a plan from a YAML file, or from the bundled plans by name.
    Keyword overrides (e.g. replications=200) replace values from the file.
    """
    path = Path(name_or_path)
    if not path.is_file():
        path = bundled_plan_path(str(name_or_path))
        if not path.is_file():
            raise ParseError(
                f"No plan file {str(name_or_path)!r} and no bundled plan of that name. "
                f"Bundled plans: {bundled_plan_names()}"
            )
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ParseError(f"Could not read plan {str(path)!r}", cause=e)
    if not isinstance(raw, dict):
        raise ParseError(f"Plan {str(path)!r} must be a mapping of keys to values")

    raw.setdefault("name", path.stem)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SimulationPlan.model_validate(raw)
    except ValidationError as e:
        raise ParseError(f"Invalid plan {str(path)!r}", cause=e)
