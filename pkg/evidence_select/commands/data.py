"""generate: write a synthetic bag dataset."""

from pathlib import Path
from typing import Optional

import click

from .. import storage
from ..config import override, save_config
from ..constants import SPLITS
from ..synthbag import generate_dataset, planted_fraction_bounds
from ..report import echo_fields, echo_header
from . import config_option, done, resolve_config


CONFIG_FILE = "config.yaml"


@click.command()
@config_option
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False),
              help="Dataset directory to create")
@click.option("--seed", type=int, default=None, help="Override generate.seed")
@click.option("--num-bags", type=int, default=None, help="Override generate.num_bags")
def generate(config_path: Optional[str], out: str, seed: Optional[int], num_bags: Optional[int]):
    """Generate a synthetic dataset with planted evidence.

    Writes meta.json, bags.bin and index.tsv into OUT, plus the
    resolved config as config.yaml.
    """
    config = resolve_config(config_path)
    config.generate = override(config.generate, seed=seed, num_bags=num_bags)
    config.generate.validate()

    echo_header("Generate")
    dataset = generate_dataset(config.generate)
    storage.write_dataset(dataset, out)
    save_config(config, Path(out) / CONFIG_FILE)

    low, high = planted_fraction_bounds(config.generate)
    echo_fields([("Bags", len(dataset.bags))]
                + [(f"  {name}", len(dataset.split(name))) for name in SPLITS]
                + [("Classes", dataset.num_classes),
                   ("Anchors", dataset.anchors.size),
                   ("Planted fraction", f"{low:.3f} .. {high:.3f}")])
    click.echo()
    done(f"Dataset written to {out}")
