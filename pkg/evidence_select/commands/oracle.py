"""oracle: brute-force and finite-difference checks."""

from typing import Optional

import click

from ..constants import DEFAULT_SEED
from ..oracles import run_oracles
from ..report import build_report, echo_header, write_report


@click.command()
@click.option("--quick", is_flag=True, help="Small instance counts (N <= 10 enumeration)")
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True, help="Instance seed")
@click.option("--report", "-r", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Optional YAML report to write")
def oracle(quick: bool, seed: int, report_path: Optional[str]):
    """Check coverage, greedy, gradients and bounds against exact oracles.

    Exits 0 only when every suite reports zero violations.
    """
    echo_header("Oracles")
    results = run_oracles(quick=quick, seed=seed)
    for result in results:
        status = click.style("PASS", fg="green") if result.passed else click.style("FAIL", fg="red", bold=True)
        click.echo(f"  {result.name:<24} {status}  {result.checked:>6} checked"
                   f"  {result.violations:>4} violations  ({result.seconds:.1f}s)")

    failed = [r for r in results if not r.passed]
    if report_path:
        write_report(build_report("oracle", {"quick": quick, "seed": seed},
                                  {"suites": [r.to_dict() for r in results]}), report_path)
    click.echo()
    click.echo(f"{len(results) - len(failed)} passed, {len(failed)} failed")
    if failed:
        click.get_current_context().exit(1)
