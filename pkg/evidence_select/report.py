"""Report documents, CSV tables and terminal summaries."""

import csv
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import click
import numpy as np
import yaml

from . import __version__
from .constants import UNAVAILABLE


PathLike = Union[str, Path]

# report section -> CSV file stem
TABLES = {
    "same_budget": "same_budget",
    "minimal_subsets": "minimal_subsets",
    "stability": "stability",
    "inference_cost": "inference_cost",
    "rows": "table",
}


def plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into YAML-safe builtins."""
    if isinstance(value, Mapping):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


def build_report(command: str, config: Mapping, results: Mapping) -> Dict:
    """Wrap command results with the resolved config for provenance."""
    return {
        "command": command,
        "version": __version__,
        "config": plain(config),
        "results": plain(results),
    }


def write_report(report: Mapping, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.dump(plain(report), f, default_flow_style=False, sort_keys=False)


def read_report(path: PathLike) -> Dict:
    with open(path, "r") as f:
        return yaml.safe_load(f) or {}


def write_csv(rows: Sequence[Mapping], path: PathLike) -> Optional[Path]:
    """Write flat rows as CSV; nested values are flattened with dotted keys.

    Returns:
        The written path, or None when there are no rows
    """
    rows = [flatten(plain(r)) for r in rows]
    if not rows:
        return None
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})
    return path


def flatten(row: Mapping, prefix: str = "") -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, value in row.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten(value, f"{name}."))
        elif isinstance(value, list):
            out[name] = " ".join(str(v) for v in value)
        else:
            out[name] = value
    return out


def emit_tables(results: Mapping, directory: PathLike, prefix: str = "") -> List[Path]:
    """Write every tabular section of a results mapping to its own CSV."""
    written = []
    for section, stem in TABLES.items():
        rows = results.get(section)
        if isinstance(rows, list):
            out = write_csv(rows, Path(directory) / f"{prefix}{stem}.csv")
            if out:
                written.append(out)
    snr = results.get("snr")
    if isinstance(snr, Mapping):
        out = write_csv([{k: v for k, v in snr.items() if k not in ("records", "thresholds")}],
                        Path(directory) / f"{prefix}snr.csv")
        written.append(out)
    return written


def fmt(value: Any, digits: int = 4) -> str:
    if value is None:
        return "-"
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.{digits}f}"


def echo_header(title: str) -> None:
    click.echo(click.style(f"\n{title}", fg="cyan", bold=True))
    click.echo(click.style("─" * 40, fg="cyan"))


def echo_fields(fields: Iterable, width: int = 28) -> None:
    for label, value in fields:
        click.echo(f"{label + ':':<{width}} {fmt(value)}")


def echo_table(rows: Sequence[Mapping], columns: Sequence[str], width: int = 14) -> None:
    """Aligned columns; the first column is left-aligned, the rest right-aligned."""
    if not rows:
        click.echo("  (no rows)")
        return
    first, rest = columns[0], columns[1:]
    lead = max(len(first), *(len(str(r.get(first, ""))) for r in rows)) + 2
    header = f"{first:<{lead}}" + "".join(f"{c[:width]:>{width}}" for c in rest)
    click.echo(click.style(header, bold=True))
    for row in rows:
        line = f"{str(row.get(first, '')):<{lead}}"
        line += "".join(f"{fmt(row.get(c)):>{width}}" for c in rest)
        click.echo(line)


def echo_snr(snr: Any) -> None:
    click.echo(click.style("S/N/R", fg="yellow", bold=True))
    if snr == UNAVAILABLE or snr is None:
        click.echo(f"  {UNAVAILABLE}")
        return
    echo_fields([
        ("  Full-bag Macro-F1", snr.get("full_macro_f1")),
        ("  Evidence sufficiency", snr.get("evidence_sufficiency")),
        ("  Keep-only drop", snr.get("keep_only_drop")),
        ("  Complement degradation", snr.get("complement_degradation")),
        ("  C-D gap (mean)", snr.get("cd_gap")),
        ("  Evidence fraction", snr.get("evidence_fraction")),
        ("  Saturated bags", snr.get("saturated")),
    ])


def echo_diagnostics(results: Mapping) -> None:
    """Terminal summary of a diagnose run."""
    echo_header("Diagnostics")
    echo_fields([("Split", results.get("split")), ("Bags", results.get("bags"))])
    click.echo()
    if "snr" in results:
        echo_snr(results["snr"])
        click.echo()
    if results.get("same_budget"):
        click.echo(click.style("Same budget", fg="yellow", bold=True))
        echo_table(results["same_budget"], ["rule", "keep_only_macro_f1", "keep_only_drop",
                                            "complement_degradation", "prediction_gap"])
        click.echo()
    if results.get("stability"):
        click.echo(click.style("Stability", fg="yellow", bold=True))
        echo_table(results["stability"], ["rule", "jaccard", "flip_rate", "cd_gap"])
        click.echo()
    if results.get("inference_cost"):
        click.echo(click.style("Inference cost", fg="yellow", bold=True))
        echo_table(results["inference_cost"], ["mode", "patch_ratio", "macro_f1", "relative_macro_f1"])
        click.echo()
