"""
Verification routes
    GET /api/verify/<suite> - run a self-check suite (duality, gradients, conjugates)

Commands
    fgel verify SUITE
    fgel verify-duality   (same as `fgel verify duality`)
"""
import click
from flask import Blueprint, jsonify

from fgel.utils.command_helper import EXIT_CHECK_FAILED, EXIT_OK
from fgel.verification import SUITES, run_suite

verify_bp = Blueprint("verify", __name__, cli_group=None)


def _report(suite: str) -> None:
    checks = run_suite(suite)
    for check in checks:
        click.echo(str(check))
    failed = sum(not check.passed for check in checks)
    click.echo(f"{suite}: {len(checks) - failed}/{len(checks)} passed")
    raise SystemExit(EXIT_CHECK_FAILED if failed else EXIT_OK)


@verify_bp.cli.command("verify")
@click.argument("suite", type=click.Choice(list(SUITES)))
def verify_command(suite):
    """Run a verification suite; exit 1 if any check fails."""
    _report(suite)


@verify_bp.cli.command("verify-duality")
def verify_duality_command():
    """Primal/dual agreement on small chi2 instances."""
    _report("duality")


@verify_bp.route("/verify/<suite>", methods=["GET"])
def verify(suite):
    if suite not in SUITES:
        return jsonify({"error": f"Unknown suite '{suite}'. Allowed: {', '.join(SUITES)}"}), 404

    checks = run_suite(suite)
    return jsonify({
        "suite": suite,
        "passed": all(check.passed for check in checks),
        "checks": [check.to_dict() for check in checks],
    }), 200
