"""Machine-readable run reports.

A report is a single JSON document per run; the human-readable table is
rendered from the JSON and never computed separately.  Numeric fields are
finite or explicitly null with a sibling ``*_reason`` code; a finalization
pass enforces this.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

SCHEMA_VERSION = "1"


def schema() -> dict:
    """The shipped, versioned report schema."""
    with resources.files("ivqr.schemas").joinpath("report_schema.json").open() as fh:
        return json.load(fh)


def sanitize(obj):
    """Convert numpy scalars/arrays to plain Python for JSON encoding."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):  # before int: bool subclasses int
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _assert_finite(obj, path="report"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _assert_finite(v, f"{path}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _assert_finite(v, f"{path}[{i}]")
    elif isinstance(obj, float) and not np.isfinite(obj):
        raise ValueError(f"non-finite value at {path}; use null with a reason code")


def new_report(command: str, config_echo: dict, seed) -> dict:
    from . import __version__

    import scipy

    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "provenance": {
            "package_version": __version__,
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "seed": seed,
            "config": sanitize(config_echo),
        },
        "warnings": [],
    }


def finalize(report: dict) -> dict:
    """Sanitize numpy values and reject non-finite numbers."""
    out = sanitize(report)
    _assert_finite(out)
    return out


# ---------------------------------------------------------------------------
# text rendering (from the JSON document only)


def _fmt(v, nd=4):
    if v is None:
        return "null"
    if isinstance(v, float):
        return f"{v:.{nd}g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x, nd) for x in v) + "]"
    return str(v)


def render_text(report: dict) -> str:
    """Human-readable table derived from the JSON report."""
    lines = [f"ivqr {report['command']} report (schema {report['schema_version']})"]
    for w in report.get("warnings", []):
        lines.append(f"warning: {w}")

    for est in report.get("estimates", []):
        lines.append(
            f"tau={est['tau']:g}  alpha={_fmt(est['alpha_hat'])}  "
            f"beta={_fmt(est['beta_hat'])}  W_min={_fmt(est['wald_min'])}"
        )
        if est.get("standard_errors") is not None:
            pairs = zip(est.get("coefficient_names", []), est["standard_errors"])
            lines.append("  se: " + ", ".join(f"{n}={_fmt(s)}" for n, s in pairs))
        elif est.get("standard_errors_reason"):
            lines.append(f"  se: null ({est['standard_errors_reason']})")
        if est.get("boundary_warning"):
            lines.append("  boundary warning: argmin at grid edge")

    for ci in report.get("confidence_regions", []):
        lines.append(
            f"tau={ci['tau']:g}  level={ci['level']:g}  "
            f"threshold={_fmt(ci['threshold'])}  points={ci['n_points']}"
            + (f"  width={_fmt(ci['width'])}" if ci.get("width") is not None else "")
        )
        if ci.get("weak_identification_suspected"):
            lines.append("  weak identification suspected (region spans most of grid)")

    for ident in report.get("identification", []):
        lines.append(
            f"tau={ident['tau']:g}  local-rank: "
            f"{'pass' if ident['local_rank']['passed'] else 'fail'} "
            f"(rank {ident['local_rank']['rank']}, "
            f"min sv {_fmt(ident['local_rank']['min_singular_value'])})"
        )
        mlr = ident.get("mlr")
        if mlr and mlr.get("applicable"):
            lines.append(
                f"  likelihood-ratio conditions: direct="
                f"{'holds' if mlr['direct_holds'] else 'fails'}, "
                f"swapped={'holds' if mlr['swapped_holds'] else 'fails'}"
            )
        for uv in ident.get("univalence", []):
            lines.append(
                f"  univalence[{uv['region']}]: "
                f"{'pass' if uv['passed'] else 'fail'} "
                f"(permutation {uv['permutation']})"
            )
        scan = ident.get("equality_scan")
        if scan:
            lines.append(
                f"  equality scan: {scan['n_points']} of {scan['n_grid']} grid "
                f"points within eps={_fmt(scan['epsilon'])}"
            )
        ineq = ident.get("inequality_scan")
        if ineq:
            lines.append(
                f"  inequality scan: {ineq['n_surviving']} of "
                f"{ineq['n_candidates']} candidates survive"
            )

    sim = report.get("simulation")
    if sim:
        lines.append(
            f"simulated {sim['n']} observations from {sim['dgp']} "
            f"(seed {sim['seed']}) -> {sim['csv_path']}"
        )

    for mc in report.get("monte_carlo", []):
        lines.append(
            f"tau={mc['tau']:g}  reps={mc['replications']}  "
            f"median-bias={_fmt(mc['median_bias'])}  rmse={_fmt(mc['rmse'])}  "
            f"coverage={_fmt(mc['coverage'])}"
        )
    return "\n".join(lines)
