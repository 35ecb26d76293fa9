import json
import math
import sys
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from permutest.cli.cli_core.arg_parser import ArgParser
from permutest.core.diagnostics import (
    DistributionSampler,
    contiguity_limit_check,
    coupling_check,
    coupling_gap_variance,
    hoeffding_pair_check,
    random_subset_convergence_check,
)
from permutest.core.distributions import RngStream, parse_distributions
from permutest.core.engine import run_test
from permutest.core.helpers.report_dsl import ReportDSL
from permutest.core.montecarlo import load_plan, power_curve, render_table, table_records
from permutest.logger import get_logger, setup_logger
from permutest.utils.common import parse_int_list, parse_rational_list
from permutest.utils.exceptions import ConfigError, ParseError, PermutestError
from permutest.utils.load_yaml import load_config
from permutest.utils.structure import DataFile, PermutationScheme, RunConfig

engine_config = load_config("general")["engine_configs"]

# Exit status of a diagnostic whose threshold fails
THRESHOLD_FAILED = 4


def read_data_file(path: str) -> DataFile:
    """
    Reads a comma separated 'group,value' file (UTF-8, header required).
    '-' reads from stdin.
    """
    source = sys.stdin if path == "-" else path
    try:
        frame = pd.read_csv(source, dtype=str, skipinitialspace=True, encoding="utf-8")
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"Could not read data file {path!r}", cause=e)

    if [c.strip() for c in frame.columns] != ["group", "value"]:
        raise ParseError(
            f"Data file {path!r} must have the header 'group,value', got {list(frame.columns)}"
        )
    if frame.empty:
        raise ParseError(f"Data file {path!r} has no rows")
    frame.columns = ["group", "value"]
    values = pd.to_numeric(frame["value"], errors="coerce")
    bad = values.isna() | ~values.apply(math.isfinite) | frame["group"].isna()
    if bad.any():
        row = int(bad.idxmax()) + 2
        raise ParseError(f"Data file {path!r}, line {row}: expected a label and a finite number")

    return DataFile(labels=frame["group"].str.strip().tolist(), values=values.tolist())


def parse_scheme(permutations: str, seed: int = None) -> PermutationScheme:
    if permutations.strip().lower() == "exhaustive":
        return PermutationScheme.exhaustive()
    try:
        B = int(permutations)
    except ValueError as e:
        raise ParseError(
            f"--permutations takes 'exhaustive' or an integer, got {permutations!r}", cause=e
        )
    if B < 1:
        raise ConfigError(f"The number of sampled permutations must be positive, got {B}")
    return PermutationScheme.sampled(B=B, seed=seed)


class CLIMain(ArgParser):
    """
    Main class for permutest CLI
    """

    def __init__(self, argv=None):
        super().__init__(argv)
        setup_logger(use_logger=self.arguments.use_logger)
        self.dsl = ReportDSL()

    def cli_run(self) -> int:
        """
        Runs the chosen command and returns the process exit status:
        0 on success, 2 on parse errors, 3 on configuration errors and
        4 when a diagnostic threshold fails
        """
        logger = get_logger()
        try:
            if self.arguments.command == "test":
                return self.cmd_test()
            if self.arguments.command == "simulate":
                return self.cmd_simulate()
            return self.cmd_diagnose()
        except PermutestError as e:
            logger.error("permutest failed", e)
            print(str(e), file=sys.stderr)
            return e.exit_code
        except ValidationError as e:
            # Out of range values that reached a model directly
            error = ConfigError("Invalid configuration", cause=e)
            print(str(error), file=sys.stderr)
            return error.exit_code

    def emit(self, text: str) -> None:
        print(text)
        if self.arguments.out:
            Path(self.arguments.out).write_text(text + "\n", encoding="utf-8")

    def _seed(self) -> int:
        seed = self.arguments.seed
        return engine_config["default_seed"] if seed is None else seed

    def cmd_test(self) -> int:
        args = self.arguments
        data = read_data_file(args.data)
        run = RunConfig(
            statistic=args.statistic,
            alpha=args.alpha,
            scheme=parse_scheme(args.permutations, self._seed()),
            sided=args.sided,
            output_format=args.output_format,
            out=args.out,
        )
        report = run_test(
            data.to_sample(), run.statistic, scheme=run.scheme, alpha=run.alpha, sided=run.sided
        )
        if run.output_format == "records":
            self.emit(report.model_dump_json())
        else:
            self.emit(self.dsl.record(report))
        return 0

    def cmd_simulate(self) -> int:
        args = self.arguments
        plan = load_plan(
            args.plan,
            replications=args.replications,
            permutations=args.permutations,
            seed=args.seed,
            sided=args.sided,
            accounting=args.accounting,
        )
        deltas = [0.0]
        if args.deltas:
            try:
                deltas = [float(v) for v in args.deltas.split(",") if v.strip()]
            except ValueError as e:
                raise ParseError(f"Could not parse --deltas {args.deltas!r}", cause=e)

        table = power_curve(plan, deltas)
        if args.output_format == "records":
            self.emit("\n".join(json.dumps(r) for r in table_records(table)))
        else:
            self.emit(render_table(table))
        return 0

    def cmd_diagnose(self) -> int:
        args = self.arguments
        rng = RngStream(seed=self._seed())
        reports = []

        if args.check == "coupling":
            sizes = parse_int_list(args.sizes)
            p = parse_rational_list(args.p) if args.p else None
            if p is not None and any(v <= 0 for v in p):
                raise ParseError(f"--p must be strictly positive probabilities, got {args.p!r}")
            reports.append(coupling_check(sizes, runs=args.runs, rng=rng.child(0), p=p))
            if args.gap_statistic:
                dists = parse_distributions(args.distributions or "normal(0,1),normal(0,1)")
                reports.append(
                    coupling_gap_variance(
                        sizes, dists, args.gap_statistic, runs=args.runs, rng=rng.child(1)
                    )
                )
        elif args.check == "contiguity":
            reports.append(
                contiguity_limit_check(
                    parse_int_list(args.sizes), args.s, replications=args.replications, rng=rng
                )
            )
        elif args.check == "hoeffding":
            if args.data:
                source = read_data_file(args.data).to_sample()
            else:
                source = DistributionSampler(
                    distributions=parse_distributions(args.distributions),
                    sizes=list(parse_int_list(args.sizes)),
                )
            reports.append(hoeffding_pair_check(source, args.statistic, args.pairs, rng=rng))
        else:
            reports.append(
                random_subset_convergence_check(
                    parse_distributions(args.distributions),
                    parse_int_list(args.sizes),
                    args.s,
                    args.W,
                    rng=rng,
                    replications=args.replications,
                    target=args.target,
                )
            )

        if args.output_format == "records":
            self.emit("\n".join(r.model_dump_json() for r in reports))
        else:
            for report in reports:
                self.dsl.record(report)
            self.emit(self.dsl.history)
        return 0 if all(r.passed for r in reports) else THRESHOLD_FAILED
