"""Experiment orchestration: basis -> Gram -> power sums -> fits -> verdicts.

Scenarios run independently and fail soft: an error in one is recorded in
its report without touching siblings.  All numeric work happens inside a
working-precision context padded with guard digits; emitted values keep
their full precision until formatting.
"""

from __future__ import annotations

import time

from mpmath import mp, mpf

from . import __version__
from .asymptotics import (
    SigmaSeries,
    convergence_probe,
    fit_expansion,
    log_m_corollary_check,
    predict_coefficients,
    remainder_order_check,
)
from .errors import (
    IllConditioned,
    InsufficientCoefficients,
    InsufficientPrecision,
    NonPositiveMetric,
    QuadratureFailure,
    ResidualBelowNoise,
    SingularGram,
)
from .geometry import CONVENTION_LEDGER, curvature_report
from .report import (
    DISPUTED,
    INCONCLUSIVE,
    INFO,
    MATCH,
    CoefficientRow,
    RemainderEntry,
    RunReport,
    ScenarioReport,
    SeriesView,
    emit_tables,
)
from .scenarios import GUARD_DIGITS, Scenario
from .sections import build_basis, density_matrix, gram_matrix, sigma_b, trace_identity_check

__all__ = ["run_scenario", "run_suite"]

# documented discrepancy: for twisted bundles and b >= 2 the fitted a_1 is
# b * (r + sum k_alpha) while the closed form gives b*r + sum k_alpha; the
# empirical value is ground truth and the delta is reported, not failed
def _covered_discrepancy(scenario: Scenario, b: int, k: int) -> bool:
    return bool(scenario.twists) and any(scenario.twists) and b >= 2 and k == 1


def _verdict(fit_value, unc, pred, rel_floor):
    scale = max(abs(pred), mpf(1))
    if unc > mpf("0.25") * scale:
        return INCONCLUSIVE, unc
    tolerance = max(5 * unc, rel_floor * scale)
    if abs(fit_value - pred) <= tolerance:
        return MATCH, tolerance
    return DISPUTED, tolerance


def run_scenario(scenario: Scenario) -> ScenarioReport:
    with mp.workdps(scenario.precision + GUARD_DIGITS):
        try:
            return _run_scenario_inner(scenario)
        except (QuadratureFailure, SingularGram, InsufficientPrecision, IllConditioned) as exc:
            return ScenarioReport(
                name=scenario.name,
                status="error",
                error=f"{type(exc).__name__}: {exc}",
                error_kind="precision",
                requested_m=scenario.m_schedule,
            )
        except NonPositiveMetric as exc:
            return ScenarioReport(
                name=scenario.name,
                status="error",
                error=f"NonPositiveMetric: {exc}",
                error_kind="config",
                requested_m=scenario.m_schedule,
            )
        except Exception as exc:  # fail soft, but keep the cause visible
            return ScenarioReport(
                name=scenario.name,
                status="error",
                error=f"{type(exc).__name__}: {exc}",
                error_kind="other",
                requested_m=scenario.m_schedule,
            )


def _run_scenario_inner(scenario: Scenario) -> ScenarioReport:
    events = []
    scenario.check_positivity()
    potential = scenario.potential()
    bundle = scenario.bundle()
    rank = scenario.rank
    n = scenario.dimension

    curvature = []
    reports = []
    for point in scenario.points:
        rep = curvature_report(potential, point, bundle, k_max=scenario.k_max)
        rep.validate()
        reports.append(rep)
        curvature.append(
            {
                "point": str(point),
                "det_g": rep.det_g,
                "rho": rep.rho,
                "laplacians_rho": tuple(rep.laplacians_rho),
                "rho_E": rep.rho_E,
                "laplacians_rho_E": tuple(rep.laplacians_rho_E),
            }
        )

    if not scenario.m_schedule or not scenario.b_list:
        return ScenarioReport(
            name=scenario.name,
            status="ok",
            requested_m=scenario.m_schedule,
            curvature=tuple(curvature),
            events=tuple(events),
        )

    integrator = scenario.integrator()
    mode = scenario.integrator_mode()

    grams = []  # (m, d, gram)
    for m in scenario.m_schedule:
        try:
            basis = build_basis(scenario.section_model(), m)
            gram = gram_matrix(basis, potential, bundle, integrator)
        except SingularGram as exc:
            events.append(
                ("precision", f"SingularGram at m={m}: schedule truncated ({exc})")
            )
            break
        except QuadratureFailure as exc:
            events.append(("precision", f"QuadratureFailure at m={m}: {exc}"))
            break
        grams.append((m, basis, gram))
    if not grams:
        raise QuadratureFailure("no tensor power survived the precision budget")
    realized = tuple(m for m, _, _ in grams)
    dims = tuple((m, basis.d) for m, basis, _ in grams)

    # power sums at every (m, point, b)
    table = {}  # (b, point_index) -> list of (m, sigma, err)
    for m, basis, gram in grams:
        rel = gram.sigma_relative_error()
        for idx, point in enumerate(scenario.points):
            density = density_matrix(basis, gram, potential, bundle, point, m)
            for b in scenario.b_list:
                value = sigma_b(density, b)
                table.setdefault((b, idx), []).append((m, value, b * value * rel))

    # trace identity on an independent quadrature path; 2-D sweeps are priced
    # per node, so cp2 checks only the cheapest tensor power
    if mode == "radial-1d":
        trace_ms = realized
    elif mode == "exact-oracle" and n == 1:
        trace_ms = (realized[0], realized[-1]) if len(realized) > 1 else realized
    else:
        trace_ms = (realized[0],)
    trace_residuals = []
    by_m = {m: (basis, gram) for m, basis, gram in grams}
    trace_tol = 10 * max(
        integrator.target_tolerance, integrator.rel_tolerance * max(d for _, d in dims)
    )
    for m in trace_ms:
        basis, gram = by_m[m]
        residual = trace_identity_check(basis, gram, potential, bundle, integrator, m)
        trace_residuals.append((m, residual))
        if residual > trace_tol:
            events.append(
                (
                    "hard",
                    f"trace identity residual {mp.nstr(residual, 4)} at m={m} "
                    f"exceeds {mp.nstr(trace_tol, 4)}",
                )
            )

    rel_floor = mpf("1e-8") if mode == "exact-oracle" else mpf("1e-3")
    series_views = []
    for (b, idx), samples in sorted(table.items()):
        series = SigmaSeries(
            b=b, n=n, r=rank, point=scenario.points[idx], samples=tuple(samples)
        )
        if not series.leading_bounded():
            events.append(
                ("hard", f"sigma_{b} / m^{{bn}} unbounded against rank at x{idx}")
            )
        N = scenario.fit_order_for(b, len(samples))
        prediction = predict_coefficients(reports[idx], b, rank)
        fit = None
        fit_error = ""
        rows = []
        remainder_entries = []
        probe = None
        probe_note = ""
        corollary_ok = None
        try:
            fit = fit_expansion(series, N)
        except (InsufficientPrecision, IllConditioned) as exc:
            fit_error = f"{type(exc).__name__}: {exc}"
        if fit is not None:
            for k in range(fit.N + 1):
                pred = prediction.value(k)
                if k <= 1:
                    verdict, tol = _verdict(
                        fit.coefficients[k], fit.uncertainties[k], pred, rel_floor
                    )
                    rows.append(
                        CoefficientRow(
                            k=k,
                            a_fit=fit.coefficients[k],
                            a_unc=fit.uncertainties[k],
                            a_pred=pred,
                            verdict=verdict,
                            tolerance=tol,
                            covered=_covered_discrepancy(scenario, b, k),
                        )
                    )
                else:
                    rows.append(
                        CoefficientRow(
                            k=k,
                            a_fit=fit.coefficients[k],
                            a_unc=fit.uncertainties[k],
                            a_pred=pred,
                            verdict=INFO,
                            tolerance=None,
                        )
                    )
            # drop the lowest quarter of the m-range from slope regressions:
            # the remainder bound is asymptotic and slowly converging
            # scenarios have not settled at the smallest m
            m_lo, m_hi = series.m_range
            m_floor = m_lo + (m_hi - m_lo) // 4
            for trunc_n in (0, 1):
                if trunc_n >= fit.N:
                    continue
                try:
                    check = remainder_order_check(series, fit, trunc_n, m_floor=m_floor)
                    remainder_entries.append(
                        RemainderEntry(
                            N=trunc_n,
                            slope=check.slope,
                            threshold=check.threshold,
                            status="PASS" if check.passed else "FAIL",
                        )
                    )
                except ResidualBelowNoise as exc:
                    remainder_entries.append(
                        RemainderEntry(
                            N=trunc_n,
                            slope=None,
                            threshold=mpf(series.bn - trunc_n - 1) + mpf("0.2"),
                            status="INCONCLUSIVE",
                            note=str(exc),
                        )
                    )
            try:
                probe = convergence_probe(fit, scenario.analytic)
                if (
                    scenario.analytic
                    and not probe.terminating
                    and probe.delta_estimate is not None
                    and "FAILS" in probe.growth_report
                ):
                    events.append(
                        ("hard", f"super-geometric coefficient growth at b={b} x{idx}")
                    )
            except InsufficientCoefficients as exc:
                probe_note = str(exc)
            if mode == "exact-oracle":
                corollary_ok, _ = log_m_corollary_check(series, fit)
                if not corollary_ok:
                    events.append(
                        ("hard", f"log-m truncation bound violated at b={b} x{idx}")
                    )
        series_views.append(
            SeriesView(
                b=b,
                point_index=idx,
                point_label=str(scenario.points[idx]),
                samples=tuple(samples),
                fit=fit,
                fit_error=fit_error,
                rows=tuple(rows),
                remainder=tuple(remainder_entries),
                probe=probe,
                probe_note=probe_note,
                corollary_ok=corollary_ok,
            )
        )

    return ScenarioReport(
        name=scenario.name,
        status="ok",
        requested_m=scenario.m_schedule,
        realized_m=realized,
        dims=dims,
        curvature=tuple(curvature),
        trace_residuals=tuple(trace_residuals),
        series=tuple(series_views),
        events=tuple(events),
    )


def run_suite(scenarios, out_dir=None, formats=("csv", "summary")) -> RunReport:
    """Run every scenario (alphabetical order, fail-soft) and emit reports."""
    ordered = sorted(scenarios, key=lambda sc: sc.name)
    results = []
    timings = {}
    for scenario in ordered:
        started = time.perf_counter()
        results.append(run_scenario(scenario))
        timings[scenario.name] = time.perf_counter() - started
    environment = {
        "package_version": __version__,
        "guard_digits": GUARD_DIGITS,
        "precision_digits": {sc.name: sc.precision for sc in ordered},
        "node_budget": {sc.name: sc.integrator().node_budget for sc in ordered if sc.m_schedule},
        "realized_m": {r.name: list(r.realized_m) for r in results},
    }
    report = RunReport(
        conventions=CONVENTION_LEDGER,
        environment=environment,
        scenarios=tuple(results),
        timings=timings,
    )
    if out_dir is not None:
        emit_tables(report, out_dir, formats)
    return report
