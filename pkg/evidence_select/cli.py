"""evidence-select CLI entry point."""

import logging

import click

from . import __version__
from .commands.data import generate
from .commands.diagnose import diagnose
from .commands.experiments import ablate, sweep
from .commands.oracle import oracle
from .commands.train import train
from .errors import EvidenceSelectError, handle_error


LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class EvidenceSelectGroup(click.Group):
    """Click group that reports library errors as one line and exits 1."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (EvidenceSelectError, OSError) as e:
            ctx.exit(handle_error(e))


def setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger("evidence_select")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


@click.group(cls=EvidenceSelectGroup)
@click.version_option(version=__version__, prog_name="evidence-select")
@click.option("--verbose", "-v", is_flag=True, help="Debug-level logging")
def cli(verbose: bool):
    """evidence-select - grounded evidence selection for bags of patches

    Generate a synthetic dataset, train, then diagnose:

        evidence-select generate --out data/
        evidence-select train --data data/ --out model.ckpt
        evidence-select diagnose --ckpt model.ckpt --data data/ --report report.yaml

    Check the coverage and gradient machinery against brute force:

        evidence-select oracle --quick

    EVSEL_THREADS sets per-bag evaluation parallelism (default 1).
    """
    setup_logging(verbose)


@click.command()
def version():
    """Print the version."""
    click.echo(__version__)


cli.add_command(generate)
cli.add_command(train)
cli.add_command(diagnose)
cli.add_command(sweep)
cli.add_command(ablate)
cli.add_command(oracle)
cli.add_command(version)


if __name__ == "__main__":
    cli()
