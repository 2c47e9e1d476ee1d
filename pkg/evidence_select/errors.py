"""Error types and error display for evidence_select."""

from typing import Optional

import click


class EvidenceSelectError(Exception):
    """Base class for every error raised by evidence_select."""

    kind = "error"


class ConfigError(EvidenceSelectError):
    """Invalid or unknown configuration value."""

    kind = "config"

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class ContractError(EvidenceSelectError):
    """A precondition or shape contract was violated by the caller."""

    kind = "contract"


class DatasetFormatError(EvidenceSelectError):
    """A dataset, checkpoint or evidence file could not be parsed."""

    kind = "parse"

    def __init__(self, message: str, bag_id: Optional[str] = None):
        self.bag_id = bag_id
        super().__init__(f"bag {bag_id}: {message}" if bag_id else message)


class TrainingError(EvidenceSelectError):
    """Training aborted, e.g. on a non-finite loss."""

    kind = "training"

    def __init__(self, message: str, epoch: Optional[int] = None, bag_id: Optional[str] = None):
        self.epoch = epoch
        self.bag_id = bag_id
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if bag_id is not None:
            where.append(f"bag {bag_id}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class UndefinedCurvatureError(EvidenceSelectError):
    """Every item has zero singleton utility, so curvature is undefined."""

    kind = "curvature"


def format_error(error: Exception) -> str:
    """One-line, machine-parsable rendering of an error."""
    kind = getattr(error, "kind", type(error).__name__)
    message = " ".join(str(error).split())
    return f"error: {kind}: {message}"


def handle_error(error: Exception) -> int:
    """Display an error and return the exit code for it."""
    if isinstance(error, ConfigError):
        click.echo(format_error(error), err=True)
        click.echo(click.style("Check the config file or the flags passed.", fg="yellow"), err=True)
        return 1
    if isinstance(error, DatasetFormatError):
        click.echo(format_error(error), err=True)
        click.echo(click.style("Regenerate the dataset with 'evidence-select generate'.", fg="yellow"), err=True)
        return 1
    if isinstance(error, TrainingError):
        click.echo(format_error(error), err=True)
        click.echo(click.style("Try a lower learning rate or inspect the named bag.", fg="yellow"), err=True)
        return 1
    click.echo(format_error(error), err=True)
    return 1
