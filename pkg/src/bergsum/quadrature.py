"""High-precision integration over the model chart domains.

Three paths, in decreasing order of authority:

* exact Beta/Dirichlet-integral oracles for Fubini-Study monomial norms
  (exact rationals; these anchor every other path),
* adaptive Gauss-Legendre on the compactified radial variable t = s/(1-s),
  with node-doubling error estimates, for everything U(1)-reducible,
* tensorized radial-angular rules for chart integrals that do not reduce.

A low-precision Monte Carlo check rides along as an independent bug
detector; it never feeds accepted numbers.

Node evaluation order is fixed and sums use ``mp.fsum``, so results are
bit-reproducible for a given precision and node count.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from typing import Callable, Sequence

from mpmath import mp, mpf, pi
from scipy.special import roots_legendre

from .errors import DimensionUnsupported, QuadratureFailure

__all__ = [
    "beta_exact",
    "dirichlet_exact",
    "gauss_legendre_rule",
    "Integrator",
]


def beta_exact(j: int, m: int) -> Fraction:
    """Exact FS monomial norm on CP^1: integral of t^j (1+t)^(-m-2) dt = j! (m-j)! / (m+1)!.

    This is the oracle the numeric paths are validated against.
    """
    if j < 0 or m - j < 0:
        raise ValueError(f"need 0 <= j <= m, got j={j}, m={m}")
    return Fraction(math.factorial(j) * math.factorial(m - j), math.factorial(m + 1))


def dirichlet_exact(a: int, c: int, m: int) -> Fraction:
    """Exact FS monomial norm on CP^2: integral of t1^a t2^c (1+t1+t2)^(-m-3) = a! c! (m-a-c)! / (m+2)!."""
    if a < 0 or c < 0 or m - a - c < 0:
        raise ValueError(f"need a, c >= 0 and a + c <= m, got a={a}, c={c}, m={m}")
    return Fraction(
        math.factorial(a) * math.factorial(c) * math.factorial(m - a - c),
        math.factorial(m + 2),
    )


# -- Gauss-Legendre nodes at working precision --------------------------------

_GL_CACHE: dict = {}


def _legendre_and_derivative(n: int, x):
    p0, p1 = mpf(1), x
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1)
    return p1, dp


def gauss_legendre_rule(n: int):
    """Nodes and weights on (-1, 1), Newton-polished to the working precision.

    float64 seeds from scipy are refined quadratically, so a handful of
    iterations reach any practical precision.  Rules are cached per
    (n, binary precision).
    """
    key = (n, mp.prec)
    cached = _GL_CACHE.get(key)
    if cached is not None:
        return cached
    seeds, _ = roots_legendre(n)
    iterations = max(3, 1 + math.ceil(math.log2(max(mp.dps, 16) / 13)))
    xs = [mpf(0)] * n
    ws = [mpf(0)] * n
    with mp.extraprec(30):
        half = (n + 1) // 2
        for idx in range(half):
            x = mpf(float(seeds[idx]))
            for _ in range(iterations):
                p, dp = _legendre_and_derivative(n, x)
                x = x - p / dp
            _, dp = _legendre_and_derivative(n, x)
            w = 2 / ((1 - x * x) * dp * dp)
            xs[idx], ws[idx] = x, w
            xs[n - 1 - idx], ws[n - 1 - idx] = -x, w
        if n % 2 == 1:
            xs[half - 1] = mpf(0)
    result = ([+x for x in xs], [+w for w in ws])
    _GL_CACHE[key] = result
    return result


def _unit_nodes(n: int):
    """The rule mapped to [0, 1]."""
    xs, ws = gauss_legendre_rule(n)
    half = mpf("0.5")
    return [(x + 1) * half for x in xs], [w * half for w in ws]


_CASCADE = (16, 32, 64, 128, 256, 512, 1024)


class Integrator:
    """Adaptive integration engine with certified-by-doubling error estimates.

    mode is one of 'exact-oracle', 'radial-1d', 'tensor-2d',
    'monte-carlo-check'; the Gram assembly dispatches on it.  target_tolerance
    is the absolute error goal for generic integrals; family integrals
    (Gram diagonals) additionally converge each component to rel_tolerance.
    """

    def __init__(
        self,
        mode: str = "radial-1d",
        precision_digits: int | None = None,
        target_tolerance=None,
        rel_tolerance=None,
        node_budget: int = 500_000,
    ):
        if mode not in ("exact-oracle", "radial-1d", "tensor-2d", "monte-carlo-check"):
            raise ValueError(f"unknown integrator mode '{mode}'")
        self.mode = mode
        self.precision_digits = precision_digits or mp.dps
        digits = self.precision_digits
        self.target_tolerance = (
            mpf(target_tolerance) if target_tolerance is not None else mpf(10) ** (5 - digits)
        )
        self.rel_tolerance = (
            mpf(rel_tolerance) if rel_tolerance is not None else mpf(10) ** (5 - digits)
        )
        self.node_budget = node_budget

    # -- radial path ----------------------------------------------------------

    def _segments(self, breakpoints: Sequence = ()):
        """(t(s), jacobian(s)) maps for [0, b1], ..., [b_last, inf)."""
        points = sorted(mpf(b) for b in breakpoints if b > 0)
        segs = []
        lo = mpf(0)
        for b in points:
            width = b - lo
            segs.append((lambda s, lo=lo, w=width: lo + w * s, lambda s, w=width: w))
            lo = b
        segs.append(
            (
                lambda s, lo=lo: lo + s / (1 - s),
                lambda s: 1 / (1 - s) ** 2,
            )
        )
        return segs

    def integrate_radial(self, f: Callable, weight: Callable, breakpoints: Sequence = ()):
        """integral of f(t) * weight(t) dt over [0, inf); returns (value, error estimate).

        The unbounded tail is compactified with t = s / (1 - s); interior
        breakpoints (such as bump-support edges) split the domain so each
        piece stays analytic for the Gauss rule.
        """
        values, errors = self._radial_family([f], weight, breakpoints)
        return values[0], errors[0]

    def radial_monomial_integrals(self, weight: Callable, powers: Sequence, breakpoints: Sequence = ()):
        """Batched integral of t^p * weight(t) dt for every p in `powers`.

        Shares weight evaluations and incremental monomial powers across the
        whole family; this is what makes high-precision Gram assembly cheap.
        """
        doubled = [int(round(2 * float(p))) for p in powers]
        if any(abs(2 * mpf(p) - d) > 0 for p, d in zip(powers, doubled)):
            raise ValueError("powers must be integers or half-integers")
        maxd = max(doubled, default=0)
        all_integer = all(d % 2 == 0 for d in doubled)

        def family(t):
            # incremental powers shared across the family; step is t or sqrt(t)
            step = t if all_integer else mp.sqrt(t)
            top = maxd // 2 if all_integer else maxd
            cache = [mpf(1)] * (top + 1)
            for d in range(1, top + 1):
                cache[d] = cache[d - 1] * step
            return [cache[d // 2 if all_integer else d] for d in doubled]

        return self._radial_family_vector(family, weight, breakpoints, len(powers))

    def _radial_family(self, fs: Sequence[Callable], weight: Callable, breakpoints: Sequence = ()):
        def family(t):
            return [f(t) for f in fs]

        return self._radial_family_vector(family, weight, breakpoints, len(fs))

    def _radial_family_vector(self, family: Callable, weight: Callable, breakpoints, count: int):
        segments = self._segments(breakpoints)
        budget = self.node_budget
        prev = None
        result = None
        errors = None
        spent = 0
        for level, n in enumerate(_CASCADE):
            if spent + n * len(segments) > budget:
                raise QuadratureFailure(
                    f"node budget {budget} exhausted at {spent} evaluations "
                    f"(error estimate {mp.nstr(max(errors), 4) if errors else 'n/a'})"
                )
            ss, ws = _unit_nodes(n)
            sums = [[] for _ in range(count)]
            for tmap, jac in segments:
                for s, w in zip(ss, ws):
                    t = tmap(s)
                    base = weight(t) * jac(s) * w
                    vals = family(t)
                    for i in range(count):
                        sums[i].append(vals[i] * base)
                spent += n
            result = [mp.fsum(terms) for terms in sums]
            if prev is not None:
                errors = [abs(a - b) for a, b in zip(result, prev)]
                floor = [abs(v) * mpf(10) ** (3 - mp.dps) for v in result]
                errors = [max(e, fl) for e, fl in zip(errors, floor)]
                if all(
                    e <= self.target_tolerance or e <= self.rel_tolerance * abs(v)
                    for e, v in zip(errors, result)
                ):
                    return result, errors
            prev = result
        raise QuadratureFailure(
            f"tolerance not reached within the node cascade "
            f"(best error estimate {mp.nstr(max(errors), 4)})"
        )

    # -- chart path -------------------------------------------------------------

    def integrate_chart(self, f: Callable, potential, invariant: bool | None = None):
        """integral of f(x) dmu over the chart; returns (value, error estimate).

        n = 1 uses a tensorized radial Gauss x angular trapezoid rule
        (the trapezoid is spectrally accurate for smooth periodic slices);
        n = 2 requires torus-invariant integrands and reduces to a radial
        product rule.  Invariance is probed numerically when not declared.
        """
        from .geometry import ChartPoint, volume_density

        n = potential.dimension
        if n > 2:
            raise DimensionUnsupported("chart integration supports n <= 2")
        two_pi_n = (2 * pi) ** n

        def density(point):
            return f(point) * volume_density(potential, point) * two_pi_n

        if invariant is None:
            invariant = potential.invariant and self._probe_invariant(f, n)

        if n == 1:
            if invariant:
                return self.integrate_radial(
                    lambda t: density(ChartPoint(mp.sqrt(t))),
                    lambda t: mpf(1),
                    self._potential_breakpoints(potential),
                )
            return self._tensor_1d(density, potential)
        if not invariant:
            raise QuadratureFailure(
                "n = 2 chart integration requires a torus-invariant integrand"
            )
        return self._tensor_2d_invariant(density)

    def _potential_breakpoints(self, potential):
        return getattr(potential, "breakpoints", ())

    def _probe_invariant(self, f, n, tol=None):
        from .geometry import ChartPoint

        if tol is None:
            tol = max(mpf("1e-20"), mpf(10) ** (6 - mp.dps))
        if n == 1:
            probes = [ChartPoint(mpf("0.7") * mp.expjpi(2 * mpf(k) / 7)) for k in range(3)]
        else:
            probes = [
                ChartPoint(mpf("0.6") * mp.expjpi(2 * mpf(k) / 7), mpf("0.4") * mp.expjpi(2 * mpf(k) / 5))
                for k in range(3)
            ]
        vals = [f(p) for p in probes]
        scale = max(abs(v) for v in vals) + mpf(1)
        return max(abs(v - vals[0]) for v in vals) <= tol * scale

    def _tensor_1d(self, density, potential):
        """Radial Gauss x angular trapezoid with simultaneous doubling."""
        from .geometry import ChartPoint

        breaks = self._potential_breakpoints(potential)
        segments = self._segments(breaks)
        budget = self.node_budget
        spent = 0
        prev = None
        result = None
        err = None
        for n_r, n_a in ((32, 16), (64, 32), (128, 64), (256, 128), (512, 256)):
            cost = n_r * n_a * len(segments)
            if spent + cost > budget:
                raise QuadratureFailure(f"node budget {budget} exhausted in chart rule")
            ss, ws = _unit_nodes(n_r)
            dtheta = 2 * pi / n_a
            terms = []
            for tmap, jac in segments:
                for s, w in zip(ss, ws):
                    t = tmap(s)
                    rt = mp.sqrt(t)
                    base = jac(s) * w * dtheta / (2 * pi)
                    for k in range(n_a):
                        z = rt * mp.expjpi(2 * mpf(k) / n_a)
                        terms.append(density(ChartPoint(z)) * base)
                spent += n_r * n_a
            result = mp.fsum(terms)
            if prev is not None:
                err = abs(result - prev) + abs(result) * mpf(10) ** (3 - mp.dps)
                if err <= self.target_tolerance or err <= self.rel_tolerance * abs(result):
                    return result, err
            prev = result
        raise QuadratureFailure(
            f"chart rule did not converge (error estimate {mp.nstr(err, 4)})"
        )

    def _tensor_2d_invariant(self, density):
        # simplex substitution t1 = u v, t2 = u (1 - v), dt1 dt2 = u du dv;
        # keeps FS-decay integrands bounded where the naive per-variable
        # compactification blows up along the diagonal corner
        from .geometry import ChartPoint

        budget = self.node_budget
        spent = 0
        prev = None
        result = None
        err = None
        for n_r in (32, 64, 128, 256):
            if spent + n_r * n_r > budget:
                raise QuadratureFailure(f"node budget {budget} exhausted in 2-D rule")
            ss, ws = _unit_nodes(n_r)
            us = [s / (1 - s) for s in ss]
            jus = [w / (1 - s) ** 2 for s, w in zip(ss, ws)]
            terms = []
            for u, ju in zip(us, jus):
                for v, jv in zip(ss, ws):
                    point = ChartPoint(mp.sqrt(u * v), mp.sqrt(u * (1 - v)))
                    terms.append(density(point) * u * ju * jv)
            spent += n_r * n_r
            result = mp.fsum(terms)
            if prev is not None:
                err = abs(result - prev) + abs(result) * mpf(10) ** (3 - mp.dps)
                if err <= self.target_tolerance or err <= self.rel_tolerance * abs(result):
                    return result, err
            prev = result
        raise QuadratureFailure(
            f"2-D rule did not converge (error estimate {mp.nstr(err, 4)})"
        )

    # -- diagnostic Monte Carlo ---------------------------------------------------

    def monte_carlo_check(self, f: Callable, potential, samples: int = 20_000, seed: int = 1):
        """Low-precision importance-sampled estimate of integral f dmu (n = 1 only).

        Diagnostic cross-check; returns (estimate, standard error) as floats.
        """
        from .geometry import ChartPoint, volume_density

        if potential.dimension != 1:
            raise DimensionUnsupported("Monte Carlo check is implemented for n = 1")
        rng = random.Random(seed)
        total = 0.0
        total_sq = 0.0
        for _ in range(samples):
            s = rng.random()
            t = s / (1 - s)
            theta = 2 * math.pi * rng.random()
            z = math.sqrt(t) * complex(math.cos(theta), math.sin(theta))
            point = ChartPoint(z)
            # importance density of t is (1-s)^2 = (1+t)^(-2); angles uniform
            val = float(f(point)) * float(volume_density(potential, point))
            val *= 2 * math.pi * (1 + t) ** 2
            total += val
            total_sq += val * val
        mean = total / samples
        var = max(total_sq / samples - mean * mean, 0.0)
        return mean, math.sqrt(var / samples)
