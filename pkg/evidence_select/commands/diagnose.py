"""diagnose: S/N/R diagnostics for a trained checkpoint."""

from pathlib import Path
from typing import Optional, Tuple

import click

from .. import storage
from ..config import ExperimentConfig, from_dict, get_threads, override
from ..constants import SPLITS
from ..diagnostics import run_diagnostics
from ..diagnostics.interventions import explain_split
from ..diagnostics.suite import SECTIONS
from ..report import build_report, echo_diagnostics, emit_tables, write_report
from . import done, resolve_config


def evidence_path(report: Path) -> Path:
    return report.with_name(report.stem + ".evidence.jsonl")


def checkpoint_config(ckpt: str, config_path: Optional[str]) -> ExperimentConfig:
    """The experiment file when given, otherwise the config the checkpoint was trained with."""
    if config_path:
        return resolve_config(config_path)
    config = from_dict(storage.read_checkpoint_extra(ckpt).get("config"))
    config.validate()
    return config


@click.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Checkpoint written by 'train'")
@click.option("--data", "-d", required=True, type=click.Path(exists=True, file_okay=False),
              help="Dataset directory written by 'generate'")
@click.option("--report", "-r", "report_path", required=True, type=click.Path(dir_okay=False),
              help="YAML report to write")
@click.option("--config", "-c", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Experiment YAML file (default: the config stored in the checkpoint)")
@click.option("--split", type=click.Choice(SPLITS), default=None, help="Override diagnostics.split")
@click.option("--section", "-s", "sections", multiple=True, type=click.Choice(SECTIONS),
              help="Run only these sections (repeatable)")
@click.option("--emit-csv", is_flag=True, help="Also write one CSV per table next to the report")
def diagnose(ckpt: str, data: str, report_path: str, config_path: Optional[str],
             split: Optional[str], sections: Tuple[str, ...], emit_csv: bool):
    """Run the diagnostics suite on a checkpoint.

    Writes the report to REPORT and the recovered evidence per bag to
    REPORT's stem + .evidence.jsonl.
    """
    config = checkpoint_config(ckpt, config_path)
    config.diagnostics = override(config.diagnostics, split=split, sections=list(sections) or None)
    config.diagnostics.validate()
    threads = get_threads()

    state = storage.load_checkpoint(ckpt)
    dataset = storage.read_dataset(data)
    report = Path(report_path)
    report.parent.mkdir(parents=True, exist_ok=True)

    bags = dataset.split(config.diagnostics.split)
    explained = explain_split(state, bags, config.recovery, threads) if state.use_selector else {}
    results = run_diagnostics(
        state, dataset, config.diagnostics, config.recovery, config.train, threads,
        progress=lambda name: click.echo(f"  running {name}..."),
        explained=explained,
    )
    write_report(build_report("diagnose", config.to_dict(), results), report)
    if explained:
        storage.export_evidence({k: e.evidence for k, e in explained.items()}, evidence_path(report))

    echo_diagnostics(results)
    if emit_csv:
        for path in emit_tables(results, report.parent, prefix=f"{report.stem}."):
            click.echo(f"  csv: {path}")
    done(f"Report written to {report}")
