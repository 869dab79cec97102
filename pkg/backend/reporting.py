"""
Reporting Module - CSV Series, Verdicts & Summary Reports
Writes diagnostics and check results in a gnuplot-ready form and formats
run and suite outcomes for the terminal
"""

import csv
import json
import math
import os
from typing import Dict, Iterable, List, Sequence


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence], digest: str) -> str:
    """
    Write a CSV with a header row and a trailing config-hash comment

    Floats are written with repr so that identical runs give identical bytes.

    Args:
        path: Output file
        header: Column names
        rows: Data rows
        digest: sha256 of the configuration that produced the rows

    Returns:
        The path written
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])
        handle.write(f"# config_sha256={digest}\n")
    return path


def read_csv_rows(path: str) -> List[Dict[str, str]]:
    """Data rows of a file written by write_csv; comment lines are skipped."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path: str, payload: Dict) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")
    return path


def _json_default(value):
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, (tuple, set)):
        return list(value)
    return str(value)


def summarize_checks(results: Sequence) -> Dict:
    """
    Aggregate CheckResult rows into a pass/fail verdict

    Returns:
        {"status", "total", "passed", "failed", "worst_ratio", "failures"}
    """
    failures = [r for r in results if not r.passed]
    ratios = [r.ratio for r in results if not math.isnan(r.ratio)]
    return {
        "status": "success" if not failures else "error",
        "total": len(results),
        "passed": len(results) - len(failures),
        "failed": len(failures),
        "worst_ratio": max(ratios) if ratios else float("nan"),
        "failures": [f"{r.field_id}:{r.check} ratio={r.ratio:.6g}" for r in failures],
    }


def get_verdict_display(status: str) -> str:
    return {
        "ReachedTEnd": "[OK]",
        "BlowUpIndicator": "[!]",
        "DtCollapse": "[!]",
        "success": "[OK]",
        "error": "[X]",
    }.get(status, "[?]")


def generate_run_report(summary: Dict) -> str:
    """
    Concise summary of one simulation for terminal/logging

    Args:
        summary: Output of solver.summarize

    Returns:
        Multi-line summary string
    """
    params = summary.get("params", {})
    lines = [
        "=" * 60,
        "SIMULATION REPORT",
        "=" * 60,
        f"Parameters: d={params.get('d')} p={params.get('p')} alpha={params.get('alpha')} lambda={params.get('lambda')}",
        f"Status: {summary['status']} {get_verdict_display(summary['status'])} at t={summary['t_final']:.6g}",
        f"Steps: {summary['steps']}",
        f"Mass drift: {summary['mass_drift']:.3e}",
        f"Max density: {summary['max_density']:.6g}",
        f"Max entropy: {summary['max_entropy']:.6g}",
        f"Max dissipation residual / I_p: {summary['max_residual_ratio']:.3e}",
        f"Max scheme residual / I_p: {summary.get('max_scheme_residual_ratio', math.nan):.3e}",
    ]
    if summary.get("boundary_flagged"):
        lines.append("[WARNING] Mass reached the boundary cells; the run does not represent whole space")
    lines.append("=" * 60)
    return "\n".join(lines)


def generate_suite_report(suite: str, verdict: Dict) -> str:
    lines = [
        "=" * 60,
        f"VERIFICATION SUITE: {suite}",
        "=" * 60,
        f"Result: {verdict['passed']}/{verdict['total']} passed {get_verdict_display(verdict['status'])}",
        f"Worst ratio: {verdict['worst_ratio']:.6g}",
    ]
    for failure in verdict["failures"]:
        lines.append(f"  FAILED {failure}")
    lines.append("=" * 60)
    return "\n".join(lines)
