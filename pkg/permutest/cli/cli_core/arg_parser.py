import sys
from argparse import ArgumentParser

from permutest.utils.load_yaml import load_config
from permutest.version import version

engine_config = load_config("general")["engine_configs"]
cli_config = load_config("general")["cli_configs"]


class ArgParser(ArgumentParser):
    """
    Argparser class. This class holds the definitions for each flag
    along with their default values and parses them individually
    """

    def __init__(self, argv=None) -> None:
        super().__init__(prog="permutest", add_help=True)

        self.add_arguments()
        self.initialise_arguments(argv)

    def add_arguments(self):
        main_options = self.add_argument_group("Main", "The main input options")
        main_options.add_argument(
            "-V",
            "--version",
            action="store_true",
            dest="show_version",
            default=False,
            help="Display the software version",
        )

        base_parser = ArgumentParser(add_help=False)
        base_parser.add_argument(
            "--seed",
            action="store",
            type=int,
            default=None,
            dest="seed",
            help="64-bit seed for every random draw, defaults to the value in config.yaml",
        )
        base_parser.add_argument(
            "--out",
            action="store",
            default=None,
            dest="out",
            help="Also write the output to this file",
        )
        base_parser.add_argument(
            "--format",
            action="store",
            choices=("text", "records"),
            default=cli_config["output_format"],
            dest="output_format",
            help="Human readable text or machine readable JSON records",
        )
        base_parser.add_argument(
            "-v",
            action="store_true",
            default=False,
            dest="use_logger",
            help="Verbose mode, progress goes to stderr",
        )

        subparsers = self.add_subparsers(
            title="commands",
            dest="command",
            required=False,
            parser_class=ArgumentParser,
        )

        # test
        test_mode = subparsers.add_parser(
            "test",
            help="Run a permutation test on a 'group,value' CSV file",
            parents=[base_parser],
        )
        test_mode.add_argument(
            "data",
            action="store",
            help="Path to the CSV file with a 'group,value' header, '-' for stdin",
        )
        test_mode.add_argument(
            "--stat",
            action="store",
            required=True,
            dest="statistic",
            help="Statistic name: mean, mean_t, median, median_t, var_t, ksample_mean_t, "
            "ksample_median_t",
        )
        test_mode.add_argument(
            "--alpha",
            action="store",
            default=engine_config["default_alpha"],
            dest="alpha",
            help="Level of the test, e.g. 0.05 or 1/20",
        )
        test_mode.add_argument(
            "--permutations",
            action="store",
            default="exhaustive",
            dest="permutations",
            help="'exhaustive' or the number B of sampled permutations",
        )
        test_mode.add_argument(
            "--sided",
            action="store",
            choices=("upper", "two"),
            default=engine_config["default_sided"],
            dest="sided",
            help="One-sided upper or two-sided test",
        )

        # simulate
        simulate_mode = subparsers.add_parser(
            "simulate",
            help="Estimate rejection probabilities for a simulation plan",
            parents=[base_parser],
        )
        simulate_mode.add_argument(
            "plan",
            action="store",
            help="Path to a YAML plan or the name of a bundled plan (e.g. table1_row4)",
        )
        simulate_mode.add_argument(
            "--replications",
            action="store",
            type=int,
            default=None,
            dest="replications",
            help="Override the number of Monte Carlo replications R",
        )
        simulate_mode.add_argument(
            "--permutations",
            action="store",
            type=int,
            default=None,
            dest="permutations",
            help="Override the number B of sampled permutations per replication",
        )
        simulate_mode.add_argument(
            "--sided",
            action="store",
            choices=("upper", "two"),
            default=None,
            dest="sided",
            help="Override the sidedness of the plan",
        )
        simulate_mode.add_argument(
            "--accounting",
            action="store",
            choices=("randomized", "p_value"),
            default=None,
            dest="accounting",
            help="Count phi (randomized) or p <= alpha (p_value) as the rejection",
        )
        simulate_mode.add_argument(
            "--deltas",
            action="store",
            default=None,
            dest="deltas",
            help="Comma separated shifts of the first group for a power curve, e.g. 0,0.25,0.5",
        )

        # diagnose
        diagnose_mode = subparsers.add_parser(
            "diagnose",
            help="Run one of the coupling, contiguity, hoeffding or subset checks",
        )
        checks = diagnose_mode.add_subparsers(
            title="checks", dest="check", required=True, parser_class=ArgumentParser
        )

        coupling = checks.add_parser(
            "coupling", help="Mean of D/N against N^(-1/2)", parents=[base_parser]
        )
        coupling.add_argument("--sizes", required=True, dest="sizes", help="e.g. 200,200")
        coupling.add_argument(
            "--p",
            default=None,
            dest="p",
            help="Mixture probabilities, strictly positive, e.g. 1/2,1/2 (defaults to n_i/N)",
        )
        coupling.add_argument("--runs", type=int, default=None, dest="runs")
        coupling.add_argument(
            "--gap-stat",
            default=None,
            dest="gap_statistic",
            help="Also report the variance of the coupling gap of this statistic",
        )
        coupling.add_argument(
            "--dists",
            default=None,
            dest="distributions",
            help="Distributions for the gap check, e.g. normal(0,1),normal(0,1)",
        )

        contiguity = checks.add_parser(
            "contiguity", help="Likelihood ratio against its limit law", parents=[base_parser]
        )
        contiguity.add_argument("--sizes", required=True, dest="sizes", help="e.g. 1000,1000")
        contiguity.add_argument("--s", type=int, required=True, dest="s", help="Draws, s < N")
        contiguity.add_argument("--replications", type=int, default=None, dest="replications")

        hoeffding = checks.add_parser(
            "hoeffding",
            help="Dependence between the statistic under two independent permutations",
            parents=[base_parser],
        )
        hoeffding.add_argument("--stat", required=True, dest="statistic")
        hoeffding.add_argument(
            "--dists",
            default="normal(0,1),normal(0,1)",
            dest="distributions",
            help="Fresh data per pair is drawn from these",
        )
        hoeffding.add_argument("--sizes", default="100,100", dest="sizes")
        hoeffding.add_argument(
            "--data",
            default=None,
            dest="data",
            help="Hold this 'group,value' CSV fixed instead of drawing fresh data",
        )
        hoeffding.add_argument("--pairs", type=int, default=None, dest="pairs")

        subset = checks.add_parser(
            "subset",
            help="W on random subsets of pooled data against W on mixture samples",
            parents=[base_parser],
        )
        subset.add_argument("--dists", required=True, dest="distributions")
        subset.add_argument("--sizes", required=True, dest="sizes")
        subset.add_argument("--s", type=int, required=True, dest="s")
        subset.add_argument(
            "--W",
            default="mean",
            choices=("mean", "variance", "median"),
            dest="W",
        )
        subset.add_argument("--target", type=float, default=None, dest="target")
        subset.add_argument("--replications", type=int, default=None, dest="replications")

    def initialise_arguments(self, argv=None):
        """
        Check all rules and requirements for ARGS.

        Returns:
            Parsed arguments with applied rules
        """
        options = self.parse_args(argv)

        if options.show_version:
            print(f"Software version: {version}")
            sys.exit(0)

        if options.command is None:
            self.print_help()
            sys.exit(2)

        self.arguments = options
