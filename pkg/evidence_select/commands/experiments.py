"""sweep and ablate: retraining experiments that produce one row per run."""

from pathlib import Path
from typing import Optional, Tuple

import click

from .. import storage
from ..config import get_threads, override
from ..constants import BUDGET_GRID
from ..diagnostics import ablation_suite, budget_sweep, grounding_variants, temperature_control
from ..report import build_report, echo_header, echo_table, emit_tables, write_report
from . import config_option, done, resolve_config


SUITES = {
    "components": (ablation_suite, "rung"),
    "grounding": (grounding_variants, "variant"),
    "temperature": (temperature_control, "variant"),
}

SUMMARY_COLUMNS = ["macro_f1", "evidence_sufficiency", "complement_degradation", "cd_gap"]


def _finish(command: str, config, results, report_path: str, emit_csv: bool, first: str) -> None:
    report = Path(report_path)
    write_report(build_report(command, config.to_dict(), results), report)
    click.echo()
    echo_table(results["rows"], [first] + SUMMARY_COLUMNS)
    click.echo()
    if emit_csv:
        for path in emit_tables(results, report.parent, prefix=f"{report.stem}."):
            click.echo(f"  csv: {path}")
    done(f"Report written to {report}")


def _echo_row(key: str):
    def echo(row):
        click.echo(f"  {row[key]}: macro_f1 {row['macro_f1']:.4f}")
    return echo


@click.command()
@click.option("--data", "-d", required=True, type=click.Path(exists=True, file_okay=False),
              help="Dataset directory written by 'generate'")
@config_option
@click.option("--report", "-r", "report_path", required=True, type=click.Path(dir_okay=False),
              help="YAML report to write")
@click.option("--rho", "grid", multiple=True, type=float,
              help=f"Budget to train with (repeatable, default: {' '.join(str(r) for r in BUDGET_GRID)})")
@click.option("--epochs", type=int, default=None, help="Override train.epochs")
@click.option("--emit-csv", is_flag=True, help="Also write the table as CSV next to the report")
def sweep(data: str, config_path: Optional[str], report_path: str, grid: Tuple[float, ...],
          epochs: Optional[int], emit_csv: bool):
    """Retrain across evidence budgets and report S/N/R per budget."""
    config = resolve_config(config_path)
    config.train = override(config.train, epochs=epochs)
    config.train.validate()
    grid = list(grid) or list(BUDGET_GRID)
    dataset = storage.read_dataset(data)

    echo_header("Budget sweep")
    rows = budget_sweep(dataset, config.train, config.recovery, grid, config.diagnostics.split,
                        config.diagnostics.thresholds(), get_threads(), on_row=_echo_row("rho"))
    results = {"split": config.diagnostics.split, "grid": grid, "rows": rows}
    _finish("sweep", config, results, report_path, emit_csv, "rho")


@click.command()
@click.option("--data", "-d", required=True, type=click.Path(exists=True, file_okay=False),
              help="Dataset directory written by 'generate'")
@config_option
@click.option("--report", "-r", "report_path", required=True, type=click.Path(dir_okay=False),
              help="YAML report to write")
@click.option("--suite", type=click.Choice(sorted(SUITES)), default="components",
              help="Component ladder, grounding variants or the annealing control")
@click.option("--epochs", type=int, default=None, help="Override train.epochs")
@click.option("--emit-csv", is_flag=True, help="Also write the table as CSV next to the report")
def ablate(data: str, config_path: Optional[str], report_path: str, suite: str,
           epochs: Optional[int], emit_csv: bool):
    """Retrain ablated models with shared seeds and compare them."""
    config = resolve_config(config_path)
    config.train = override(config.train, epochs=epochs)
    config.train.validate()
    dataset = storage.read_dataset(data)
    runner, key = SUITES[suite]

    echo_header(f"Ablation: {suite}")
    rows = runner(dataset, config.train, config.recovery, config.diagnostics.split,
                  config.diagnostics.thresholds(), get_threads(), on_row=_echo_row(key))
    results = {"suite": suite, "split": config.diagnostics.split, "rows": rows}
    _finish("ablate", config, results, report_path, emit_csv, key)
