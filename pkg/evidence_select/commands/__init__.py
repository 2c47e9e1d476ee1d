"""Subcommands and the helpers they share."""

from typing import Optional

import click

from ..config import ExperimentConfig, load_config


def resolve_config(path: Optional[str]) -> ExperimentConfig:
    """Load and validate an experiment file; defaults when no path is given."""
    config = load_config(path)
    config.validate()
    return config


def config_option(fn):
    return click.option(
        "--config", "-c", "config_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="Experiment YAML file (defaults apply to missing keys)",
    )(fn)


def done(message: str) -> None:
    click.echo(click.style(f"✅ {message}", fg="green", bold=True))
