import sys

from permutest.cli.cli_core.cli_main import CLIMain


def main(argv=None):
    cli = CLIMain(argv)
    sys.exit(cli.cli_run())
