"""Local Kahler geometry on chart domains: potentials, bundle metrics, curvature.

Conventions (fixed package-wide, calibrated on the exact CP^1 section-space
oracle so that sigma_1 = m + 1 pins a_0 = 1 and a_1 = rho / 2):

    g_{i jbar}   = d_i dbar_j phi
    omega        = i * sum g_{i jbar} dz^i wedge dzbar^j
    R_{i jbar}   = - d_i dbar_j log det g
    rho          = g^{i jbar} R_{i jbar}
    Delta f      = g^{i jbar} d_i dbar_j f        (complex Laplacian)
    |s|^2 at x   = e^{-m phi(x)} times the H-pairing of frame components
    dmu          = (2 pi)^{-n} omega^n / n!

On this convention the round CP^1 metric has rho = 2, the affine chart of
CP^n carries total mass 1/n!, and twisting by O(k) adds k to the bundle
scalar curvature.

All curvature quantities are evaluated through truncated Taylor jets of the
potential (see :mod:`bergsum.jets`), so they inherit the ambient mpmath
precision with no differencing noise.  A nested central-difference fallback
lives in :mod:`bergsum.finitediff` and serves as the independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from mpmath import mp, mpc, mpf, pi

from .errors import JetUnavailable, NonPositiveMetric, UnsupportedScenario
from .jets import Jet

__all__ = [
    "ChartPoint",
    "KahlerPotential",
    "BundleMetric",
    "CurvatureReport",
    "Profile",
    "PROFILES",
    "fubini_study",
    "flat_model",
    "perturbed_fs",
    "trivial_bundle",
    "fs_twist_bundle",
    "direct_sum",
    "metric_tensor",
    "volume_density",
    "scalar_curvature",
    "laplacian_power_rho",
    "bundle_scalar_curvature",
    "curvature_report",
    "K_MAX",
    "CONVENTION_LEDGER",
]

K_MAX = 3

CONVENTION_LEDGER = (
    "g_{i jbar} = d_i dbar_j phi",
    "omega = i * sum g_{i jbar} dz^i ^ dzbar^j",
    "R_{i jbar} = - d_i dbar_j log det g",
    "rho = g^{i jbar} R_{i jbar}",
    "Delta = g^{i jbar} d_i dbar_j (complex Laplacian, no factor 2)",
    "pointwise norm: |s|^2 = e^{-m phi} * H-pairing",
    "measure: dmu = (2 pi)^{-n} omega^n / n!",
)


@dataclass(frozen=True)
class ChartPoint:
    """A point of the standard affine chart, held as exact mpmath coordinates."""

    coords: tuple

    def __init__(self, *coords):
        if len(coords) == 1 and isinstance(coords[0], (tuple, list)):
            coords = tuple(coords[0])
        object.__setattr__(self, "coords", tuple(mpc(c) for c in coords))

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def __str__(self):
        return "(" + ", ".join(mp.nstr(c, 12) for c in self.coords) + ")"


def _cache_key(point: ChartPoint, order: int):
    return (point.coords, order, mp.prec)


class KahlerPotential:
    """Local potential phi on a chart, with derivative jets of any order.

    `jet_program(point, order)` must return the truncated Taylor jet of phi
    at the point; `value_program(point)` evaluates phi itself.  Catalog
    constructors (:func:`fubini_study`, :func:`flat_model`,
    :func:`perturbed_fs`) build both from closed forms.
    """

    def __init__(
        self,
        dimension: int,
        value_program: Callable[[ChartPoint], mpf],
        jet_program: Callable[[ChartPoint, int], Jet],
        *,
        analytic: bool = True,
        invariant: bool = False,
        family: str = "custom",
        chart_domain: str = "C^n (standard affine chart)",
        max_order: int | None = None,
        breakpoints: tuple = (),
        label: str = "",
    ):
        self.dimension = dimension
        self.analytic = analytic
        self.invariant = invariant
        self.family = family
        self.chart_domain = chart_domain
        self.max_order = max_order
        self.breakpoints = tuple(breakpoints)
        self.label = label or family
        self._value = value_program
        self._jet = jet_program
        self._cache: dict = {}

    def evaluate(self, point: ChartPoint) -> mpf:
        v = self._value(point)
        return mpc(v).real

    def evaluate_jet(self, point: ChartPoint, order: int) -> Jet:
        """All mixed partials of phi at `point` up to total order `order`."""
        if self.max_order is not None and order > self.max_order:
            raise JetUnavailable(
                f"potential '{self.label}' supplies jets up to order {self.max_order}, "
                f"order {order} requested"
            )
        key = _cache_key(point, order)
        jet = self._cache.get(key)
        if jet is None:
            jet = self._jet(point, order)
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = jet
        return jet

    def shifted(self, constant) -> "KahlerPotential":
        """The potential phi + c; must leave every curvature output unchanged."""
        c = mpf(constant)
        return KahlerPotential(
            self.dimension,
            lambda p: self._value(p) + c,
            lambda p, order: self._jet(p, order) + Jet.constant(c, self.dimension, order),
            analytic=self.analytic,
            invariant=self.invariant,
            family=self.family,
            chart_domain=self.chart_domain,
            max_order=self.max_order,
            breakpoints=self.breakpoints,
            label=self.label + "+const",
        )


# -- catalog potentials ------------------------------------------------------


def _abs_sq_jet(point: ChartPoint, order: int) -> Jet:
    """Jet of sum_i |z_i|^2 at the point."""
    n = point.dimension
    total = Jet.constant(0, n, order)
    for i, z0 in enumerate(point.coords):
        zi = Jet.coordinate(z0, i, n, order)
        total = total + zi * zi.conjugate()
    return total


def fubini_study(dimension: int) -> KahlerPotential:
    """phi = log(1 + |z|^2) on the standard affine chart of CP^n."""

    def value(point):
        s = mpf(1)
        for z in point.coords:
            s += (z * z.conjugate()).real
        return mp.log(s)

    def jet(point, order):
        return (Jet.constant(1, dimension, order) + _abs_sq_jet(point, order)).log()

    return KahlerPotential(
        dimension,
        value,
        jet,
        analytic=True,
        invariant=True,
        family="fs",
        chart_domain=f"affine chart of CP^{dimension} (complement has measure zero)",
        label=f"fs-cp{dimension}",
    )


def flat_model(dimension: int = 1) -> KahlerPotential:
    """phi = |z|^2; the flat probe with identically vanishing curvature."""

    def value(point):
        s = mpf(0)
        for z in point.coords:
            s += (z * z.conjugate()).real
        return s

    return KahlerPotential(
        dimension,
        value,
        lambda point, order: _abs_sq_jet(point, order),
        analytic=True,
        invariant=True,
        family="flat",
        chart_domain="all of C^n",
        label=f"flat-{dimension}d",
    )


@dataclass(frozen=True)
class Profile:
    """A perturbation term added to the CP^1 Fubini-Study potential."""

    name: str
    invariant: bool
    analytic: bool
    breakpoints: tuple
    value: Callable = field(repr=False, compare=False, default=None)
    jet: Callable = field(repr=False, compare=False, default=None)


def _p1_value(point: ChartPoint) -> mpf:
    z = point.coords[0]
    t = (z * z.conjugate()).real
    return t / (1 + t) ** 3


def _p1_jet(point: ChartPoint, order: int) -> Jet:
    t = _abs_sq_jet(point, order)
    return t * (Jet.constant(1, 1, order) + t).recip().pow_int(3)


def _p2_value(point: ChartPoint) -> mpf:
    z = point.coords[0]
    t = (z * z.conjugate()).real
    return z.real * t / (1 + t) ** 3


def _p2_jet(point: ChartPoint, order: int) -> Jet:
    z = Jet.coordinate(point.coords[0], 0, 1, order)
    re_z = (z + z.conjugate()) * mpf("0.5")
    t = _abs_sq_jet(point, order)
    return re_z * t * (Jet.constant(1, 1, order) + t).recip().pow_int(3)


_P3_CENTER = mpf(1)
_P3_WIDTH = mpf("0.75")


def _p3_value(point: ChartPoint) -> mpf:
    z = point.coords[0]
    t = (z * z.conjugate()).real
    u = (t - _P3_CENTER) / _P3_WIDTH
    if abs(u) >= 1:
        return mpf(0)
    return mp.exp(1 - 1 / (1 - u * u))


def _p3_jet(point: ChartPoint, order: int) -> Jet:
    z = point.coords[0]
    t0 = (z * z.conjugate()).real
    u0 = (t0 - _P3_CENTER) / _P3_WIDTH
    if abs(u0) >= 1:
        # identically zero on the closed complement of the bump support
        return Jet.constant(0, 1, order)
    t = _abs_sq_jet(point, order)
    u = (t - Jet.constant(_P3_CENTER, 1, order)) * (1 / _P3_WIDTH)
    v = Jet.constant(1, 1, order) - u * u
    return (Jet.constant(1, 1, order) - v.recip()).exp()


PROFILES = {
    "p1": Profile("p1", invariant=True, analytic=True, breakpoints=(), value=_p1_value, jet=_p1_jet),
    "p2": Profile("p2", invariant=False, analytic=True, breakpoints=(), value=_p2_value, jet=_p2_jet),
    "p3": Profile(
        "p3",
        invariant=True,
        analytic=False,
        breakpoints=(float(_P3_CENTER - _P3_WIDTH), float(_P3_CENTER + _P3_WIDTH)),
        value=_p3_value,
        jet=_p3_jet,
    ),
}


def perturbed_fs(profile: Profile | str, epsilon) -> KahlerPotential:
    """phi = log(1 + |z|^2) + epsilon * profile, on the CP^1 chart."""
    if isinstance(profile, str):
        try:
            profile = PROFILES[profile]
        except KeyError:
            raise UnsupportedScenario(
                f"unknown profile '{profile}'; available: {sorted(PROFILES)}"
            ) from None
    eps = mpf(epsilon)
    base = fubini_study(1)

    def value(point):
        return base.evaluate(point) + eps * profile.value(point)

    def jet(point, order):
        return base.evaluate_jet(point, order) + profile.jet(point, order) * eps

    return KahlerPotential(
        1,
        value,
        jet,
        analytic=profile.analytic,
        invariant=profile.invariant,
        family="perturbed",
        chart_domain="affine chart of CP^1",
        breakpoints=profile.breakpoints,
        label=f"fs-cp1+{mp.nstr(eps, 6)}*{profile.name}",
    )


# -- bundle metrics -----------------------------------------------------------


class BundleMetric:
    """Rank-r Hermitian metric data for E in a local holomorphic frame.

    Catalog bundles are diagonal, H = diag(e^{-psi_1}, ..., e^{-psi_r}); the
    general constructor accepts an arbitrary Hermitian weight map plus jets.
    """

    def __init__(
        self,
        rank: int,
        *,
        psi_values: Sequence[Callable] | None = None,
        psi_jets: Sequence[Callable] | None = None,
        weight_fn: Callable | None = None,
        weight_jet_fn: Callable | None = None,
        twists: tuple | None = None,
        label: str = "",
    ):
        self.rank = rank
        self.diagonal = psi_values is not None
        self._psi_values = tuple(psi_values) if psi_values else None
        self._psi_jets = tuple(psi_jets) if psi_jets else None
        self._weight_fn = weight_fn
        self._weight_jet_fn = weight_jet_fn
        self.twists = tuple(twists) if twists is not None else None
        self.label = label

    def weight(self, point: ChartPoint):
        """The r x r Hermitian positive-definite matrix H(z)."""
        if self.diagonal:
            H = mp.zeros(self.rank)
            for a, psi in enumerate(self._psi_values):
                H[a, a] = mp.exp(-psi(point))
            return H
        return self._weight_fn(point)

    def diagonal_weights(self, point: ChartPoint):
        """The scalar potentials psi_alpha, when the metric is diagonal."""
        if not self.diagonal:
            raise UnsupportedScenario("bundle metric is not diagonal")
        return [psi(point) for psi in self._psi_values]

    def log_det_weight_jet(self, point: ChartPoint, order: int) -> Jet:
        """Jet of log det H; the curvature trace only ever needs this scalar."""
        n = point.dimension
        if self.diagonal:
            total = Jet.constant(0, n, order)
            for psi_jet in self._psi_jets:
                total = total - psi_jet(point, order)
            return total
        if self._weight_jet_fn is None:
            raise JetUnavailable(f"bundle '{self.label}' has no weight jets")
        H = self._weight_jet_fn(point, order)
        r = self.rank
        if r == 1:
            det = H[0][0]
        elif r == 2:
            det = H[0][0] * H[1][1] - H[0][1] * H[1][0]
        elif r == 3:
            det = (
                H[0][0] * (H[1][1] * H[2][2] - H[1][2] * H[2][1])
                - H[0][1] * (H[1][0] * H[2][2] - H[1][2] * H[2][0])
                + H[0][2] * (H[1][0] * H[2][1] - H[1][1] * H[2][0])
            )
        else:
            raise UnsupportedScenario("weight jets implemented for rank <= 3")
        return det.log()


def trivial_bundle(rank: int = 1, dimension: int = 1) -> BundleMetric:
    """Flat trivial bundle of the given rank (H identically the identity)."""
    zero_val = lambda point: mpf(0)
    zero_jet = lambda point, order: Jet.constant(0, dimension, order)
    return BundleMetric(
        rank,
        psi_values=[zero_val] * rank,
        psi_jets=[zero_jet] * rank,
        twists=(0,) * rank,
        label=f"trivial-r{rank}",
    )


def fs_twist_bundle(twists: Sequence[int]) -> BundleMetric:
    """Direct sum of O(k_alpha) on CP^1 with psi_alpha = k_alpha log(1 + |z|^2)."""
    twists = tuple(int(k) for k in twists)
    fs = fubini_study(1)

    def make_val(k):
        return lambda point: k * fs.evaluate(point)

    def make_jet(k):
        return lambda point, order: fs.evaluate_jet(point, order) * k

    return BundleMetric(
        len(twists),
        psi_values=[make_val(k) for k in twists],
        psi_jets=[make_jet(k) for k in twists],
        twists=twists,
        label="O(" + ")+O(".join(str(k) for k in twists) + ")",
    )


def direct_sum(a: BundleMetric, b: BundleMetric) -> BundleMetric:
    if not (a.diagonal and b.diagonal):
        raise UnsupportedScenario("direct sums are implemented for diagonal metrics")
    twists = None
    if a.twists is not None and b.twists is not None:
        twists = a.twists + b.twists
    return BundleMetric(
        a.rank + b.rank,
        psi_values=list(a._psi_values) + list(b._psi_values),
        psi_jets=list(a._psi_jets) + list(b._psi_jets),
        twists=twists,
        label=f"{a.label}+{b.label}",
    )


# -- curvature pipeline -------------------------------------------------------


def _metric_jets(potential: KahlerPotential, point: ChartPoint, order: int):
    """Jets of g_{i jbar} to the given order (costs two orders of phi)."""
    phi = potential.evaluate_jet(point, order + 2)
    n = potential.dimension
    return [[phi.deriv_holo(i).deriv_anti(j) for j in range(n)] for i in range(n)]


def _det_jet(g, n: int) -> Jet:
    if n == 1:
        return g[0][0]
    if n == 2:
        return g[0][0] * g[1][1] - g[0][1] * g[1][0]
    raise UnsupportedScenario("curvature pipeline implemented for n <= 2")


def _inverse_jets(g, det: Jet, n: int):
    rdet = det.recip()
    if n == 1:
        return [[rdet]]
    return [
        [g[1][1] * rdet, -g[0][1] * rdet],
        [-g[1][0] * rdet, g[0][0] * rdet],
    ]


def _laplacian_jet(f: Jet, ginv, n: int) -> Jet:
    """Delta f = g^{i jbar} d_i dbar_j f as a jet (loses two orders)."""
    out = None
    for i in range(n):
        for j in range(n):
            term = ginv[j][i] * f.deriv_holo(i).deriv_anti(j)
            out = term if out is None else out + term
    return out


def _require_positive(value, point: ChartPoint, what: str):
    if not value > 0:
        raise NonPositiveMetric(f"{what} = {mp.nstr(value, 8)} at {point}")


def _hermitian_value_matrix(g, n: int):
    M = mp.zeros(n)
    for i in range(n):
        for j in range(n):
            M[i, j] = g[i][j].constant_term
    return M


def metric_tensor(potential: KahlerPotential, x: ChartPoint):
    """g_{i jbar}(x) = (d_i dbar_j phi)(x); Hermitian positive-definite.

    Raises NonPositiveMetric when positivity fails, which signals either an
    invalid potential (perturbation too large) or a point outside the
    positivity region.
    """
    n = potential.dimension
    g = _metric_jets(potential, x, 0)
    M = _hermitian_value_matrix(g, n)
    _require_positive(M[0, 0].real, x, "g_11")
    if n == 2:
        det = (M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]).real
        _require_positive(det, x, "det g")
    return M


def volume_density(potential: KahlerPotential, x: ChartPoint):
    """Density of dmu against prod_i (i dz_i ^ dzbar_i): (2 pi)^{-n} det g(x)."""
    n = potential.dimension
    M = metric_tensor(potential, x)
    det = M[0, 0] if n == 1 else M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    return det.real / (2 * pi) ** n


def _rho_jet(potential: KahlerPotential, point: ChartPoint, order: int) -> Jet:
    """Jet of the scalar curvature rho = -Delta log det g to the given order."""
    n = potential.dimension
    g = _metric_jets(potential, point, order + 2)
    det = _det_jet(g, n)
    if not det.constant_term.real > 0:
        raise NonPositiveMetric(f"det g = {mp.nstr(det.constant_term, 8)} at {point}")
    ginv = _inverse_jets(g, det, n)
    return -_laplacian_jet(det.log(), ginv, n)


def scalar_curvature(potential: KahlerPotential, x: ChartPoint):
    """rho(x) under the package convention; requires order-4 jets."""
    return _rho_jet(potential, x, 0).constant_term.real


def laplacian_power_rho(potential: KahlerPotential, x: ChartPoint, k: int):
    """Delta^{k-1} rho at x; k = 1 returns rho itself.  Supports k <= K_MAX."""
    if not 1 <= k <= K_MAX:
        raise ValueError(f"k must be in 1..{K_MAX}")
    extra = 2 * (k - 1)
    n = potential.dimension
    rho = _rho_jet(potential, x, extra)
    if k == 1:
        return rho.constant_term.real
    g = _metric_jets(potential, x, extra)
    ginv = _inverse_jets(g, _det_jet(g, n), n)
    for _ in range(k - 1):
        rho = _laplacian_jet(rho, ginv, n)
    return rho.constant_term.real


def bundle_scalar_curvature(bundle: BundleMetric, potential: KahlerPotential, x: ChartPoint):
    """rho_E(x) = -Delta log det H; zero for flat bundles, additive over sums."""
    return _lap_power_log_det_weight(bundle, potential, x, 1)


def _lap_power_log_det_weight(bundle, potential, x: ChartPoint, k: int):
    n = potential.dimension
    extra = 2 * (k - 1)
    g = _metric_jets(potential, x, extra + 2)
    ginv = _inverse_jets(g, _det_jet(g, n), n)
    f = -bundle.log_det_weight_jet(x, extra + 2)
    for _ in range(k):
        f = _laplacian_jet(f, ginv, n)
    return f.constant_term.real


@dataclass(frozen=True)
class CurvatureReport:
    """Every curvature quantity entering the coefficient formulas, at one point."""

    point: ChartPoint
    g: object
    det_g: object
    ricci: object
    rho: object
    laplacians_rho: tuple
    rho_E: object
    laplacians_rho_E: tuple

    def validate(self, tol=mpf("1e-12")):
        """Hermiticity and positivity checks, relative to the matrix scale."""
        n = len(self.point.coords)
        scale = max(abs(self.g[i, j]) for i in range(n) for j in range(n)) + mpf(1)
        for i in range(n):
            for j in range(n):
                if abs(self.g[i, j] - self.g[j, i].conjugate()) > tol * scale:
                    raise AssertionError("metric is not Hermitian")
                if abs(self.ricci[i, j] - self.ricci[j, i].conjugate()) > tol * scale:
                    raise AssertionError("Ricci is not Hermitian")
        if not self.det_g > 0:
            raise NonPositiveMetric(f"det g = {mp.nstr(self.det_g, 8)}")
        return True


def curvature_report(
    potential: KahlerPotential,
    x: ChartPoint,
    bundle: BundleMetric | None = None,
    k_max: int = K_MAX,
) -> CurvatureReport:
    """Assemble g, Ricci, rho, Delta^{k-1} rho (k <= k_max) and rho_E at x."""
    if not 1 <= k_max <= K_MAX:
        raise ValueError(f"k_max must be in 1..{K_MAX}")
    n = potential.dimension
    extra = 2 * (k_max - 1)
    g = _metric_jets(potential, x, extra + 2)
    det = _det_jet(g, n)
    if not det.constant_term.real > 0:
        raise NonPositiveMetric(f"det g = {mp.nstr(det.constant_term, 8)} at {x}")
    ginv = _inverse_jets(g, det, n)
    logdet = det.log()
    ricci = mp.zeros(n)
    for i in range(n):
        for j in range(n):
            ricci[i, j] = -logdet.deriv_holo(i).deriv_anti(j).constant_term

    rho = -_laplacian_jet(logdet, ginv, n)
    laps = [rho.constant_term.real]
    acc = rho
    for _ in range(k_max - 1):
        acc = _laplacian_jet(acc, ginv, n)
        laps.append(acc.constant_term.real)

    if bundle is None:
        bundle = trivial_bundle(1, n)
    f = -bundle.log_det_weight_jet(x, extra + 2)
    laps_e = []
    acc = f
    for _ in range(k_max):
        acc = _laplacian_jet(acc, ginv, n)
        laps_e.append(acc.constant_term.real)

    return CurvatureReport(
        point=x,
        g=_hermitian_value_matrix(g, n),
        det_g=det.constant_term.real,
        ricci=ricci,
        rho=laps[0],
        laplacians_rho=tuple(laps),
        rho_E=laps_e[0],
        laplacians_rho_E=tuple(laps_e),
    )
