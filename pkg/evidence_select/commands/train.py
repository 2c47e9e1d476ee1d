"""train: fit the host, grounding, selector and anchor weights."""

from pathlib import Path
from typing import Optional

import click

from .. import storage
from ..constants import INJECTION_MODES
from ..config import override
from ..report import echo_fields, echo_header, fmt
from ..training import train as run_training
from . import config_option, done, resolve_config


def metric_log_path(checkpoint: Path) -> Path:
    """The JSON-lines metric log sits next to its checkpoint."""
    return checkpoint.with_name(checkpoint.name + ".metrics.jsonl")


@click.command()
@click.option("--data", "-d", required=True, type=click.Path(exists=True, file_okay=False),
              help="Dataset directory written by 'generate'")
@config_option
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False),
              help="Checkpoint file to write")
@click.option("--epochs", type=int, default=None, help="Override train.epochs")
@click.option("--mode", type=click.Choice(INJECTION_MODES), default=None, help="Override train.mode")
@click.option("--budget", type=float, default=None, help="Override train.budget")
@click.option("--seed", type=int, default=None, help="Override train.seed")
def train(data: str, config_path: Optional[str], out: str, epochs: Optional[int],
          mode: Optional[str], budget: Optional[float], seed: Optional[int]):
    """Train a model on a generated dataset.

    Writes the checkpoint to OUT and one JSON line per epoch to
    OUT.metrics.jsonl. The resolved config is stored in the checkpoint.
    """
    config = resolve_config(config_path)
    config.train = override(config.train, epochs=epochs, mode=mode, budget=budget, seed=seed)
    config.train.validate()

    dataset = storage.read_dataset(data)
    checkpoint = Path(out)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)

    echo_header("Train")
    echo_fields([
        ("Mode", config.train.mode),
        ("Epochs", config.train.epochs),
        ("Train bags", len(dataset.split("train"))),
        ("Val bags", len(dataset.split("val"))),
    ])
    click.echo()

    def on_epoch(record):
        click.echo(
            f"  epoch {record['epoch'] + 1:>3}  loss {fmt(record['loss'])}"
            f"  val_f1 {fmt(record.get('val_macro_f1'))}  gate {fmt(record.get('mean_gate'))}"
        )

    result = run_training(dataset, config.train, metric_log=metric_log_path(checkpoint), on_epoch=on_epoch)
    storage.save_checkpoint(result.model, checkpoint, extra={
        "config": config.to_dict(),
        "dataset": str(data),
        "epochs_completed": result.epoch,
    })

    click.echo()
    done(f"Checkpoint written to {checkpoint}")
