"""Nested central differences on the real chart coordinates.

This is the fallback derivative path and the independent cross-check for the
jet pipeline in :mod:`bergsum.geometry`.  Every stencil is evaluated at two
step sizes and Richardson-combined, which makes the effective truncation
order 4; the combination disagreement drives the step control.  Steps start
at noise^(1/6) scaled by the point magnitude (noise = ambient unit roundoff,
or the carried-in noise floor of a nested evaluation) and shrink until the
requested tolerance is met or the estimate stops improving.
"""

from __future__ import annotations

from typing import Callable

from mpmath import mp, mpc, mpf

from .errors import StepSizeUnderflow

__all__ = [
    "richardson_second_derivative",
    "complex_hessian_fd",
    "scalar_curvature_fd",
    "laplacian_fd",
    "laplacian_power_rho_fd",
]


def _unit_roundoff() -> mpf:
    return mpf(10) ** (-mp.dps)


def _point_scale(coords) -> mpf:
    s = max((abs(c) for c in coords), default=mpf(0))
    return s + mpf(1)


def _shift(coords, axis: int, h):
    # axis 2i = Re z_i, axis 2i+1 = Im z_i
    out = list(coords)
    out[axis // 2] = out[axis // 2] + (h if axis % 2 == 0 else mpc(0, 1) * h)
    return tuple(out)


def _second_same(f, coords, axis, h):
    return (f(_shift(coords, axis, h)) - 2 * f(coords) + f(_shift(coords, axis, -h))) / h**2


def _second_mixed(f, coords, ax1, ax2, h):
    pp = f(_shift(_shift(coords, ax1, h), ax2, h))
    pm = f(_shift(_shift(coords, ax1, h), ax2, -h))
    mp_ = f(_shift(_shift(coords, ax1, -h), ax2, h))
    mm = f(_shift(_shift(coords, ax1, -h), ax2, -h))
    return (pp - pm - mp_ + mm) / (4 * h**2)


def richardson_second_derivative(stencil: Callable, h0, tol, max_halvings: int = 25):
    """Drive an O(h^2) stencil with two step sizes and Richardson combination.

    `stencil(h)` returns the raw central-difference estimate.  Returns the
    extrapolated value once the combination disagreement drops below `tol`
    relative to the value scale.  Halving stops as soon as the estimate
    degrades twice in a row (the noise floor has been hit); failure to reach
    `tol` raises StepSizeUnderflow.
    """
    h = mpf(h0)
    best = best_err = None
    worse = 0
    for _ in range(max_halvings):
        d1 = stencil(h)
        d2 = stencil(h / 2)
        value = (4 * d2 - d1) / 3
        err = abs(d2 - d1) / 3
        if err <= tol * (abs(value) + 1):
            return value
        if best is None or err < best_err:
            best, best_err, worse = value, err, 0
        else:
            worse += 1
            if worse >= 2:
                break
        h = h / 2
    raise StepSizeUnderflow(
        f"central differences stalled at error {mp.nstr(best_err, 4)} "
        f"(tolerance {mp.nstr(mpf(tol), 4)})"
    )


def complex_hessian_fd(func: Callable, coords, tol=None, noise=None):
    """(d_i dbar_j f) from function values only; returns an mpmath matrix.

    d_i dbar_j = (1/4)(d_xi d_xj + d_yi d_yj) + (i/4)(d_xi d_yj - d_yi d_xj).

    `noise` is the error floor of `func` evaluations (defaults to the unit
    roundoff); it sets the opening step size noise^(1/6) * point scale.
    """
    n = len(coords)
    coords = tuple(mpc(c) for c in coords)
    eps = _unit_roundoff()
    if noise is None or noise < eps:
        noise = eps
    if tol is None:
        tol = noise ** mpf("0.4")
    h0 = _point_scale(coords) * noise ** (mpf(1) / 6)

    def real_partial(ax1, ax2):
        if ax1 == ax2:
            stencil = lambda h: _second_same(func, coords, ax1, h)
        else:
            stencil = lambda h: _second_mixed(func, coords, ax1, ax2, h)
        return richardson_second_derivative(stencil, h0, tol)

    H = mp.zeros(n)
    for i in range(n):
        for j in range(i, n):
            xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
            if i == j:
                val = (real_partial(xi, xi) + real_partial(yi, yi)) / 4
            else:
                val = (
                    real_partial(xi, xj)
                    + real_partial(yi, yj)
                    + mpc(0, 1) * (real_partial(xi, yj) - real_partial(yi, xj))
                ) / 4
            H[i, j] = val
            H[j, i] = mpc(val).conjugate()
    return H


def _hessian_det(H, n):
    if n == 1:
        return H[0, 0]
    return H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]


def scalar_curvature_fd(potential, x, extra_dps: int = 20):
    """rho(x) computed purely from potential values via nested differencing.

    Fully independent of the jet pipeline: the metric, log det g and its
    Hessian are all obtained by central differences.  The inner Hessians run
    at padded precision, so the nested pass resolves rho to much better than
    1e-6 relative on the analytic catalog potentials.
    """
    n = potential.dimension
    with mp.workdps(mp.dps + extra_dps):
        from .geometry import ChartPoint  # local import to avoid cycle at module load

        eps = _unit_roundoff()
        inner_tol = eps ** mpf("0.4")
        phi = lambda coords: potential.evaluate(ChartPoint(*coords))

        def logdet(coords):
            H = complex_hessian_fd(phi, coords, tol=inner_tol)
            return mp.log(_hessian_det(H, n).real)

        coords0 = tuple(mpc(c) for c in x.coords)
        g = complex_hessian_fd(phi, coords0, tol=inner_tol)
        R = complex_hessian_fd(logdet, coords0, tol=mpf("1e-8"), noise=inner_tol)
        ginv = mp.inverse(g)
        rho = mpf(0)
        for i in range(n):
            for j in range(n):
                rho += (ginv[j, i] * (-R[i, j])).real
        return +rho


def laplacian_fd(scalar_func: Callable, potential, x, tol=mpf("1e-8"), noise=None):
    """Delta f at x with the Hessian of f taken by central differences.

    The contraction metric comes from the jet pipeline (exact); only the
    derivatives of `scalar_func` are numerical, which makes this the
    independent oracle for Laplacian powers of derived quantities.
    """
    from .geometry import ChartPoint, metric_tensor

    n = potential.dimension
    coords0 = tuple(mpc(c) for c in x.coords)
    f = lambda coords: scalar_func(ChartPoint(*coords))
    H = complex_hessian_fd(f, coords0, tol=tol, noise=noise)
    ginv = mp.inverse(metric_tensor(potential, x))
    out = mpf(0)
    for i in range(n):
        for j in range(n):
            out += (ginv[j, i] * H[i, j]).real
    return +out


def laplacian_power_rho_fd(potential, x, k: int, extra_dps: int = 20):
    """Delta^{k-1} rho with the outermost Laplacian applied by differencing.

    rho itself comes from the jet pipeline, so for k = 2 this checks exactly
    one differencing level against the all-jets value.
    """
    from .geometry import laplacian_power_rho

    if k == 1:
        return scalar_curvature_fd(potential, x, extra_dps=extra_dps)
    with mp.workdps(mp.dps + extra_dps):
        func = lambda p: laplacian_power_rho(potential, p, k - 1)
        return laplacian_fd(func, potential, x, tol=mpf("1e-7"))
