"""Run reports: deterministic tables and machine-readable summaries.

Everything emitted here is a pure function of (config, precision profile):
numbers are rendered with 17 significant digits via mpmath's deterministic
formatter, dictionary keys are sorted, and scenario order is alphabetical.
Wall-clock timings are kept out of the summary and written to a sidecar
file so that reports stay byte-identical across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from mpmath import mp, mpf

from .errors import IoFailure
from .geometry import CONVENTION_LEDGER

__all__ = [
    "MATCH",
    "DISPUTED",
    "INCONCLUSIVE",
    "INFO",
    "CoefficientRow",
    "RemainderEntry",
    "SeriesView",
    "ScenarioReport",
    "RunReport",
    "emit_tables",
]

MATCH = "MATCH"
DISPUTED = "DISPUTED"
INCONCLUSIVE = "INCONCLUSIVE"
INFO = "INFO"  # leading-term reference rows (k >= 2); never judged


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, bool)):
        return str(x)
    return mp.nstr(mpf(x) if not hasattr(x, "imag") or x.imag == 0 else x, 17)


@dataclass(frozen=True)
class CoefficientRow:
    k: int
    a_fit: object
    a_unc: object
    a_pred: object  # None when no closed form applies
    verdict: str
    tolerance: object  # the bound the verdict was judged against (None for INFO)
    covered: bool = False  # DISPUTED entries covered by a documented discrepancy


@dataclass(frozen=True)
class RemainderEntry:
    N: int
    slope: object  # None when inconclusive
    threshold: object
    status: str  # PASS | FAIL | INCONCLUSIVE
    note: str = ""


@dataclass(frozen=True)
class SeriesView:
    b: int
    point_index: int
    point_label: str
    samples: tuple  # of (m, sigma, err)
    fit: object  # ExpansionFit or None
    fit_error: str = ""
    rows: tuple = ()
    remainder: tuple = ()
    probe: object = None
    probe_note: str = ""
    corollary_ok: object = None  # bool for exact scenarios, None elsewhere


@dataclass(frozen=True)
class ScenarioReport:
    name: str
    status: str  # ok | error
    error: str = ""
    error_kind: str = ""  # precision | config | other (when status == error)
    requested_m: tuple = ()
    realized_m: tuple = ()
    dims: tuple = ()  # of (m, d)
    curvature: tuple = ()  # of dicts per evaluation point
    trace_residuals: tuple = ()  # of (m, residual)
    series: tuple = ()
    events: tuple = ()  # of (kind, message); kind in info | precision | hard


@dataclass(frozen=True)
class RunReport:
    conventions: tuple
    environment: dict
    scenarios: tuple
    timings: dict = field(default_factory=dict)

    def hard_failures(self) -> list:
        out = []
        for sc in self.scenarios:
            for kind, message in sc.events:
                if kind == "hard":
                    out.append(f"{sc.name}: {message}")
            for sv in sc.series:
                for row in sv.rows:
                    if row.verdict == DISPUTED and not row.covered:
                        out.append(
                            f"{sc.name} b={sv.b} x{sv.point_index}: a_{row.k} DISPUTED "
                            f"(fit {_fmt(row.a_fit)} vs pred {_fmt(row.a_pred)})"
                        )
                for entry in sv.remainder:
                    if entry.status == "FAIL":
                        out.append(
                            f"{sc.name} b={sv.b} x{sv.point_index}: remainder slope "
                            f"{_fmt(entry.slope)} exceeds {_fmt(entry.threshold)} at N={entry.N}"
                        )
        return out

    def precision_failures(self) -> list:
        out = []
        for sc in self.scenarios:
            if sc.status == "error" and sc.error_kind == "precision":
                out.append(f"{sc.name}: {sc.error}")
            for kind, message in sc.events:
                if kind == "precision":
                    out.append(f"{sc.name}: {message}")
            for sv in sc.series:
                if sv.fit_error:
                    out.append(f"{sc.name} b={sv.b} x{sv.point_index}: {sv.fit_error}")
        return out


# -- serialization ---------------------------------------------------------------


def _fit_dict(fit):
    if fit is None:
        return None
    return {
        "N": fit.N,
        "bn": fit.bn,
        "coefficients": [_fmt(c) for c in fit.coefficients],
        "uncertainties": [_fmt(u) for u in fit.uncertainties],
        "residual_order": _fmt(fit.residual_order) if fit.residual_order is not None else None,
        "condition": _fmt(fit.condition),
        "m_range": list(fit.m_range),
    }


def _probe_dict(probe):
    if probe is None:
        return None
    return {
        "delta_estimate": _fmt(probe.delta_estimate) if probe.delta_estimate is not None else None,
        "terminating": probe.terminating,
        "resolved": list(probe.resolved),
        "growth_report": probe.growth_report,
    }


def report_dict(report: RunReport) -> dict:
    """The deterministic summary structure (timings deliberately excluded)."""
    scenarios = []
    for sc in report.scenarios:
        scenarios.append(
            {
                "name": sc.name,
                "status": sc.status,
                "error": sc.error,
                "error_kind": sc.error_kind,
                "requested_m": list(sc.requested_m),
                "realized_m": list(sc.realized_m),
                "dims": [[m, d] for m, d in sc.dims],
                "curvature": [
                    {
                        "point": c["point"],
                        "det_g": _fmt(c["det_g"]),
                        "rho": _fmt(c["rho"]),
                        "laplacians_rho": [_fmt(v) for v in c["laplacians_rho"]],
                        "rho_E": _fmt(c["rho_E"]),
                        "laplacians_rho_E": [_fmt(v) for v in c["laplacians_rho_E"]],
                    }
                    for c in sc.curvature
                ],
                "trace_residuals": [[m, _fmt(r)] for m, r in sc.trace_residuals],
                "events": [list(e) for e in sc.events],
                "series": [
                    {
                        "b": sv.b,
                        "point_index": sv.point_index,
                        "point": sv.point_label,
                        "samples": [[m, _fmt(v), _fmt(e)] for m, v, e in sv.samples],
                        "fit": _fit_dict(sv.fit),
                        "fit_error": sv.fit_error,
                        "coefficients": [
                            {
                                "k": row.k,
                                "a_fit": _fmt(row.a_fit),
                                "a_unc": _fmt(row.a_unc),
                                "a_pred": _fmt(row.a_pred) if row.a_pred is not None else None,
                                "verdict": row.verdict,
                                "tolerance": _fmt(row.tolerance) if row.tolerance is not None else None,
                                "covered": row.covered,
                            }
                            for row in sv.rows
                        ],
                        "remainder": [
                            {
                                "N": e.N,
                                "slope": _fmt(e.slope) if e.slope is not None else None,
                                "threshold": _fmt(e.threshold),
                                "status": e.status,
                                "note": e.note,
                            }
                            for e in sv.remainder
                        ],
                        "probe": _probe_dict(sv.probe),
                        "probe_note": sv.probe_note,
                        "log_m_corollary_ok": sv.corollary_ok,
                    }
                    for sv in sc.series
                ],
            }
        )
    return {
        "conventions": list(report.conventions),
        "environment": report.environment,
        "scenarios": scenarios,
    }


def emit_tables(report: RunReport, out_dir, formats=("csv", "summary")) -> list:
    """Write the report files; returns the list of paths written.

    csv: per-(b, x) series tables 'm,sigma_b,err_bound' and one coefficient
    table per scenario with header 'k,a_fit,a_unc,a_pred,verdict'.
    summary: summary.json mirroring the run report, plus report.txt with the
    convention ledger and verdict lines.  Timings go to timings.txt only.
    """
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            for sc in report.scenarios:
                sc_dir = out / sc.name
                sc_dir.mkdir(parents=True, exist_ok=True)
                for sv in sc.series:
                    path = sc_dir / f"series_b{sv.b}_x{sv.point_index}.csv"
                    lines = ["m,sigma_b,err_bound"]
                    lines += [f"{m},{_fmt(v)},{_fmt(e)}" for m, v, e in sv.samples]
                    path.write_text("\n".join(lines) + "\n")
                    written.append(path)
                if any(sv.rows for sv in sc.series):
                    path = sc_dir / "coefficients.csv"
                    lines = ["k,a_fit,a_unc,a_pred,verdict"]
                    for sv in sc.series:
                        if not sv.rows:
                            continue
                        lines.append(f"# b={sv.b} x{sv.point_index}={sv.point_label}")
                        for row in sv.rows:
                            pred = _fmt(row.a_pred) if row.a_pred is not None else ""
                            lines.append(
                                f"{row.k},{_fmt(row.a_fit)},{_fmt(row.a_unc)},{pred},{row.verdict}"
                            )
                    path.write_text("\n".join(lines) + "\n")
                    written.append(path)
        if "summary" in formats:
            path = out / "summary.json"
            path.write_text(json.dumps(report_dict(report), indent=2, sort_keys=True) + "\n")
            written.append(path)
            path = out / "report.txt"
            path.write_text(render_text(report))
            written.append(path)
        if report.timings:
            path = out / "timings.txt"
            path.write_text(
                "".join(f"{name}: {seconds:.3f}s\n" for name, seconds in report.timings.items())
            )
    except OSError as exc:
        raise IoFailure(f"cannot write report files under {out}: {exc}") from exc
    return written


def render_text(report: RunReport) -> str:
    """Human-readable run header: ledger echo, environment, verdict lines."""
    lines = ["bergsum run report", "", "conventions:"]
    lines += [f"  {rule}" for rule in report.conventions]
    lines.append("")
    lines.append("environment:")
    for key in sorted(report.environment):
        lines.append(f"  {key} = {report.environment[key]}")
    lines.append("")
    for sc in report.scenarios:
        lines.append(f"[{sc.name}] status={sc.status}")
        if sc.status == "error":
            lines.append(f"  error ({sc.error_kind}): {sc.error}")
        if sc.realized_m:
            lines.append(
                f"  realized m range: {sc.realized_m[0]}..{sc.realized_m[-1]}"
                f" ({len(sc.realized_m)} values)"
            )
        for kind, message in sc.events:
            lines.append(f"  event[{kind}]: {message}")
        for sv in sc.series:
            head = f"  b={sv.b} x{sv.point_index}={sv.point_label}"
            if sv.fit_error:
                lines.append(f"{head}: fit failed: {sv.fit_error}")
                continue
            for row in sv.rows:
                pred = _fmt(row.a_pred) if row.a_pred is not None else "-"
                tol = f" (tol {_fmt(row.tolerance)})" if row.tolerance is not None else ""
                lines.append(
                    f"{head}: a_{row.k} fit {_fmt(row.a_fit)} +- {_fmt(row.a_unc)}"
                    f" pred {pred} -> {row.verdict}{tol}"
                )
            for entry in sv.remainder:
                slope = _fmt(entry.slope) if entry.slope is not None else "n/a"
                lines.append(
                    f"{head}: remainder N={entry.N} slope {slope}"
                    f" <= {_fmt(entry.threshold)} -> {entry.status}"
                )
            if sv.probe is not None:
                lines.append(f"{head}: {sv.probe.growth_report}")
        lines.append("")
    hard = report.hard_failures()
    soft = report.precision_failures()
    lines.append(f"hard failures: {len(hard)}")
    lines += [f"  {msg}" for msg in hard]
    lines.append(f"precision/quadrature failures: {len(soft)}")
    lines += [f"  {msg}" for msg in soft]
    lines.append("")
    return "\n".join(lines)
