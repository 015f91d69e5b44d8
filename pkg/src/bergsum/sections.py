"""Section bases, L^2 Gram matrices, and the pointwise density matrix.

The basis of holomorphic sections of L^m tensor E is explicit for every
catalog model: monomials z^j per frame summand on CP^1 (degree m + twist),
monomials of total degree <= m per frame on CP^2.  The d x d matrix of
pointwise inner products of the orthonormalized basis has rank at most r,
so all power sums are computed from the r x r reduction

    K(x) = e^{-m phi(x)} H(x)^{1/2} V(x)^* G^{-1} V(x) H(x)^{1/2},

where V is the d x r matrix of raw section values in the frame and G the
Gram matrix.  K has the same nonzero spectrum as the d x d matrix, which the
slow orthonormal path (:func:`sigma_b_via_orthonormal`) verifies directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from mpmath import mp, mpc, mpf, pi

from .errors import QuadratureFailure, SingularGram, UnsupportedScenario
from .geometry import BundleMetric, ChartPoint, KahlerPotential, volume_density
from .quadrature import Integrator, beta_exact, dirichlet_exact

__all__ = [
    "SectionModel",
    "SectionBasis",
    "GramMatrix",
    "DensityMatrix",
    "build_basis",
    "gram_matrix",
    "section_values",
    "density_matrix",
    "sigma_b",
    "s_matrix",
    "sigma_b_via_orthonormal",
    "rank_profile",
    "newton_reduce",
    "trace_identity_check",
]


@dataclass(frozen=True)
class SectionModel:
    """Which section space to build: manifold chart plus bundle shape."""

    manifold: str  # 'cp1' | 'cp2'
    rank: int = 1
    twists: tuple = ()  # per-summand twist degrees on cp1; empty means trivial

    def resolved_twists(self) -> tuple:
        if self.twists:
            return tuple(int(k) for k in self.twists)
        return (0,) * self.rank


@dataclass(frozen=True)
class SectionBasis:
    """Explicit monomial basis of Gamma(M, L^m tensor E) in chart coordinates."""

    m: int
    entries: tuple  # of (powers tuple, frame index)
    symmetric: bool = True

    @property
    def d(self) -> int:
        return len(self.entries)


def build_basis(model, m: int) -> SectionBasis:
    """Monomial basis for the requested model; d matches the combinatorial count."""
    if hasattr(model, "section_model"):
        model = model.section_model()
    if m < 1:
        raise UnsupportedScenario(f"tensor power must be >= 1, got m={m}")
    if model.manifold == "cp1":
        entries = []
        for frame, k in enumerate(model.resolved_twists()):
            if m + k < 0:
                raise UnsupportedScenario(f"twist {k} leaves no sections at m={m}")
            entries.extend(((j,), frame) for j in range(m + k + 1))
        return SectionBasis(m=m, entries=tuple(entries))
    if model.manifold == "cp2":
        if any(model.resolved_twists()):
            raise UnsupportedScenario("twisted bundles are only cataloged on cp1")
        entries = []
        for frame in range(model.rank):
            entries.extend(
                ((a, c), frame) for a in range(m + 1) for c in range(m + 1 - a)
            )
        return SectionBasis(m=m, entries=tuple(entries))
    raise UnsupportedScenario(f"unknown manifold '{model.manifold}' (allowed: cp1, cp2)")


# -- Gram matrices -------------------------------------------------------------


class GramMatrix:
    """Hermitian positive-definite matrix of L^2 inner products.

    Stores either the diagonal (U(1)^n-symmetric bases) or the dense matrix
    plus its Cholesky factor.  `quadrature_error` is the largest absolute
    entry error reported by the integrator (zero on the exact-oracle path).
    """

    def __init__(
        self, d: int, *, diag=None, dense=None, quadrature_error=mpf(0), entry_rel_error=None
    ):
        self.d = d
        self.diag = list(diag) if diag is not None else None
        self.dense = dense
        self.quadrature_error = mpf(quadrature_error)
        self.entry_rel_error = entry_rel_error
        self._chol = None
        self._extremes = None

    # construction helpers ---------------------------------------------------

    def entry(self, i: int, j: int):
        if self.diag is not None:
            return self.diag[i] if i == j else mpf(0)
        return self.dense[i, j]

    def matrix(self):
        if self.dense is not None:
            return self.dense
        G = mp.zeros(self.d)
        for i, v in enumerate(self.diag):
            G[i, i] = v
        return G

    def cholesky(self):
        if self._chol is None:
            if self.diag is not None:
                self._chol = [mp.sqrt(v) for v in self.diag]
            else:
                self._chol = mp.cholesky(self.dense)
        return self._chol

    # conditioning -------------------------------------------------------------

    def _eigen_extremes(self):
        """(lambda_max, lambda_min) estimates via power iteration on G and G^-1."""
        if self._extremes is not None:
            return self._extremes
        if self.diag is not None:
            lo = min(self.diag)
            hi = max(self.diag)
        else:
            d = self.d
            v = mp.matrix([mpf(1) / mp.sqrt(d)] * d)
            hi = mpf(1)
            for _ in range(25):
                w = self.dense * v
                hi = mp.norm(w)
                v = w / hi
            v = mp.matrix([(-1) ** i / mp.sqrt(mpf(d)) for i in range(d)])
            inv_norm = mpf(1)
            for _ in range(25):
                w = self.solve(v)
                inv_norm = mp.norm(w)
                v = w / inv_norm
            lo = 1 / inv_norm
        self._extremes = (hi, lo)
        return self._extremes

    def cond_estimate(self):
        hi, lo = self._eigen_extremes()
        return hi / lo

    def require_within_precision(self):
        """Raise SingularGram before conditioning can silently eat the precision."""
        budget = self.cond_estimate() * mpf(10) ** (-mp.dps)
        if budget > mpf("1e-3"):
            raise SingularGram(
                f"Gram condition {mp.nstr(self.cond_estimate(), 4)} exceeds the "
                f"precision budget at {mp.dps} digits"
            )
        return self

    def sigma_relative_error(self):
        """Relative error bound factor this Gram induces on sigma_1."""
        floor = mpf(10) ** (8 - mp.dps)
        if self.quadrature_error == 0:
            return floor
        if self.entry_rel_error is not None:
            return self.entry_rel_error + floor
        hi, _ = self._eigen_extremes()
        return self.cond_estimate() * self.quadrature_error * self.d / hi + floor

    # solves ---------------------------------------------------------------------

    def solve_lower(self, B):
        """L^{-1} B for the Cholesky factor L (orthonormalization map)."""
        L = self.cholesky()
        if self.diag is not None:
            out = B.copy()
            for i in range(self.d):
                for j in range(B.cols):
                    out[i, j] = B[i, j] / L[i]
            return out
        d, cols = self.d, B.cols
        out = mp.zeros(d, cols)
        for col in range(cols):
            for i in range(d):
                acc = B[i, col]
                for k in range(i):
                    acc -= L[i, k] * out[k, col]
                out[i, col] = acc / L[i, i]
        return out

    def solve(self, B):
        """G^{-1} B via the factorization."""
        if self.diag is not None:
            out = B.copy()
            for i in range(self.d):
                for j in range(B.cols):
                    out[i, j] = B[i, j] / self.diag[i]
            return out
        L = self.cholesky()
        Y = self.solve_lower(B)
        d, cols = self.d, B.cols
        out = mp.zeros(d, cols)
        for col in range(cols):
            for i in range(d - 1, -1, -1):
                acc = Y[i, col]
                for k in range(i + 1, d):
                    acc -= L[k, i].conjugate() * out[k, col]
                out[i, col] = acc / L[i, i]
        return out


def _radial_weight(potential: KahlerPotential, m: int, psi):
    """e^{-m phi(t)} e^{-psi(t)} det g(t) as a function of t = |z|^2."""
    n = potential.dimension
    two_pi_n = (2 * pi) ** n

    def weight(t):
        point = ChartPoint(mp.sqrt(t))
        env = mp.exp(-m * potential.evaluate(point) - psi(point))
        return env * volume_density(potential, point) * two_pi_n

    return weight


def gram_matrix(
    basis: SectionBasis,
    potential: KahlerPotential,
    bundle: BundleMetric,
    integrator: Integrator,
) -> GramMatrix:
    """G_ij = integral <s_i, s_j> e^{-m phi} dmu, with the H-pairing folded in.

    Dispatches on the integrator mode: the exact oracle covers Fubini-Study
    monomial norms (rational Beta/Dirichlet values), the radial rule covers
    every U(1)^n-invariant scenario (diagonal Gram), and the tensor rule
    assembles dense blocks from angular Fourier modes otherwise.
    """
    mode = integrator.mode
    if mode == "monte-carlo-check":
        raise UnsupportedScenario("Monte Carlo mode is diagnostic only; pick another mode")
    if mode == "exact-oracle":
        return _gram_exact(basis, potential, bundle)
    if mode == "radial-1d":
        return _gram_radial(basis, potential, bundle, integrator)
    if mode == "tensor-2d":
        if potential.dimension != 1:
            raise UnsupportedScenario("dense Gram assembly is implemented on cp1 charts")
        return _gram_dense_modal(basis, potential, bundle, integrator)
    raise UnsupportedScenario(f"integrator mode '{mode}' cannot assemble a Gram matrix")


def _gram_exact(basis, potential, bundle) -> GramMatrix:
    if potential.family != "fs":
        raise UnsupportedScenario("exact Gram oracle requires the unperturbed FS potential")
    if bundle.twists is None:
        raise UnsupportedScenario("exact Gram oracle requires diagonal twist bundles")
    m = basis.m
    diag = []
    for powers, frame in basis.entries:
        if potential.dimension == 1:
            k = bundle.twists[frame]
            q = beta_exact(powers[0], m + k)
        else:
            if any(bundle.twists):
                raise UnsupportedScenario("cp2 oracle covers trivial bundles only")
            q = dirichlet_exact(powers[0], powers[1], m)
        diag.append(mpf(q.numerator) / q.denominator)
    return GramMatrix(basis.d, diag=diag, quadrature_error=mpf(0)).require_within_precision()


def _gram_radial(basis, potential, bundle, integrator) -> GramMatrix:
    if not (potential.invariant and bundle.diagonal):
        raise UnsupportedScenario("radial Gram assembly needs a U(1)-invariant scenario")
    m = basis.m
    breaks = potential.breakpoints
    diag = [None] * basis.d
    worst = mpf(0)
    worst_rel = mpf(0)
    frames = sorted({frame for _, frame in basis.entries})
    for frame in frames:
        idx = [i for i, (_, fr) in enumerate(basis.entries) if fr == frame]
        powers = [basis.entries[i][0][0] for i in idx]
        psi = lambda point, fr=frame: bundle.diagonal_weights(point)[fr]
        weight = _radial_weight(potential, m, psi)
        values, errors = integrator.radial_monomial_integrals(weight, powers, breaks)
        for i, v, e in zip(idx, values, errors):
            diag[i] = v
            worst = max(worst, e)
            worst_rel = max(worst_rel, e / abs(v))
    return GramMatrix(
        basis.d, diag=diag, quadrature_error=worst, entry_rel_error=worst_rel
    ).require_within_precision()


def _modal_grid(potential, bundle, n_r: int, n_a: int):
    """Cached (radial x angular) grid of the m-independent weight data.

    Rows are (t, jacobian weight, sqrt t, [(phi, det g, psi per frame)] over
    angles); everything here is reused across all tensor powers, which is
    what makes the dense assembly affordable.
    """
    from .quadrature import _unit_nodes  # shared node cache

    key = (n_r, n_a, mp.prec, bundle.label, bundle.rank)
    cache = getattr(potential, "_modal_grids", None)
    if cache is None:
        cache = potential._modal_grids = {}
    grid = cache.get(key)
    if grid is not None:
        return grid
    ss, ws = _unit_nodes(n_r)
    two_pi_n = 2 * pi
    grid = []
    for s, w in zip(ss, ws):
        t = s / (1 - s)
        jw = w / (1 - s) ** 2
        rt = mp.sqrt(t)
        angles = []
        for k in range(n_a):
            point = ChartPoint(rt * mp.expjpi(2 * mpf(k) / n_a))
            phi = potential.evaluate(point)
            dens = volume_density(potential, point) * two_pi_n
            psis = tuple(bundle.diagonal_weights(point))
            angles.append((phi, dens, psis))
        grid.append((t, jw, rt, angles))
    cache[key] = grid
    return grid


def _gram_dense_modal(basis, potential, bundle, integrator) -> GramMatrix:
    """Dense Gram on cp1 from angular Fourier modes of the weight function.

    One (radial x angular) sweep yields every entry of a frame block:
    G_{jl} = integral t^{(j+l)/2} M_{j-l}(t) dt with M_q the q-th angular
    mode of e^{-m phi} e^{-psi} det g / (2 pi).  Doubling both directions
    gives the error estimate.
    """
    if not bundle.diagonal:
        raise UnsupportedScenario("dense assembly requires diagonal bundle metrics")
    m = basis.m
    d = basis.d
    frames = sorted({frame for _, frame in basis.entries})
    frame_idx = {fr: [i for i, (_, f) in enumerate(basis.entries) if f == fr] for fr in frames}

    budget = integrator.node_budget
    spent = 0
    prev = None
    G = None
    worst = None
    for n_r, n_a in ((64, 64), (128, 128), (256, 256)):
        if spent + n_r * n_a > budget:
            raise QuadratureFailure(f"node budget {budget} exhausted in Gram assembly")
        grid = _modal_grid(potential, bundle, n_r, n_a)
        phase = mp.expjpi(mpf(2) / n_a)
        G = mp.zeros(d)
        for fr in frames:
            idx = frame_idx[fr]
            js = [basis.entries[i][0][0] for i in idx]
            qmax = max(js) - min(js)
            if 2 * qmax >= n_a:
                continue  # aliasing; this level cannot resolve the modes yet
            for t, jw, rt, angles in grid:
                # angular modes M_q(t), q = 0..qmax; the weight is real so
                # M_{-q} = conj(M_q)
                modes = [mpc(0)] * (qmax + 1)
                acc_k = mpc(1)
                for phi, dens, psis in angles:
                    a_val = mp.exp(-m * phi - psis[fr]) * dens
                    acc = mpc(1)
                    for q in range(qmax + 1):
                        modes[q] += a_val * acc
                        acc *= acc_k
                    acc_k *= phase
                tpow = [mpf(1)] * (2 * max(js) + 1)
                for p in range(1, 2 * max(js) + 1):
                    tpow[p] = tpow[p - 1] * rt
                for a_pos, i in enumerate(idx):
                    ji = js[a_pos]
                    for b_pos in range(a_pos, len(idx)):
                        jl = js[b_pos]
                        # row power ji, column power jl carries e^{i(ji-jl) theta},
                        # i.e. mode -(jl-ji) = conj(mode q) for the real weight
                        q = jl - ji
                        mode = modes[q].conjugate() / n_a
                        G[idx[a_pos], idx[b_pos]] += jw * tpow[ji + jl] * mode
            spent += n_r * n_a
        for i in range(d):
            for j in range(i):
                G[i, j] = G[j, i].conjugate()
        if prev is not None and all(G[i, i] != 0 for i in range(d)):
            worst = max(abs(G[i, j] - prev[i, j]) for i in range(d) for j in range(d))
            scale = max(abs(G[i, i]) for i in range(d))
            worst = max(worst, scale * mpf(10) ** (3 - mp.dps))
            if worst <= integrator.target_tolerance or worst <= integrator.rel_tolerance * scale:
                return GramMatrix(d, dense=G, quadrature_error=worst).require_within_precision()
        prev = G.copy()
    raise QuadratureFailure(
        f"Gram assembly did not converge (error estimate {mp.nstr(worst, 4)})"
    )


# -- density matrix and power sums ----------------------------------------------


@dataclass(frozen=True)
class DensityMatrix:
    """Pointwise r x r reduction of the section-space density matrix."""

    point: ChartPoint
    values: object
    eigenvalues: tuple

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)


def section_values(basis: SectionBasis, x: ChartPoint):
    """d x r matrix of raw section values in the frame at x."""
    rank = max(frame for _, frame in basis.entries) + 1
    # monomial values via per-coordinate power tables (d can reach hundreds)
    tables = []
    for axis, z in enumerate(x.coords):
        top = max(powers[axis] for powers, _ in basis.entries)
        tab = [mpc(1)] * (top + 1)
        for p in range(1, top + 1):
            tab[p] = tab[p - 1] * z
        tables.append(tab)
    V = mp.zeros(basis.d, rank)
    for i, (powers, frame) in enumerate(basis.entries):
        val = mpc(1)
        for axis, p in enumerate(powers):
            val *= tables[axis][p]
        V[i, frame] = val
    return V


def _envelope(potential: KahlerPotential, m: int, x: ChartPoint):
    return mp.exp(-m * potential.evaluate(x))


def _weight_sqrt(bundle: BundleMetric, x: ChartPoint):
    H = bundle.weight(x)
    r = bundle.rank
    if bundle.diagonal:
        S = mp.zeros(r)
        for a in range(r):
            S[a, a] = mp.sqrt(H[a, a])
        return S
    E, Q = mp.eigh(H)
    S = mp.zeros(r)
    for a in range(r):
        S[a, a] = mp.sqrt(E[a])
    return Q * S * Q.H


def _hermitize(A):
    return (A + A.H) * mpf("0.5")


def density_matrix(
    basis: SectionBasis,
    gram: GramMatrix,
    potential: KahlerPotential,
    bundle: BundleMetric,
    x: ChartPoint,
    m: int,
) -> DensityMatrix:
    """K(x) = e^{-m phi} H^{1/2} V^* G^{-1} V H^{1/2}, eigenvalues sorted descending."""
    V = section_values(basis, x)
    W = gram.solve(V)
    r = bundle.rank
    M = V.H * W
    S = _weight_sqrt(bundle, x)
    K = _hermitize((S * M * S) * _envelope(potential, m, x))
    eigs = mp.eigh(K, eigvals_only=True)
    eigs = sorted((e.real if hasattr(e, "real") else e for e in eigs), reverse=True)
    eigs = [e if e > 0 else mpf(0) for e in eigs]
    return DensityMatrix(point=x, values=K, eigenvalues=tuple(eigs))


def sigma_b(density: DensityMatrix, b: int):
    """Power sum of the density eigenvalues: sum_i lambda_i^b."""
    if b < 1:
        raise ValueError("b must be a positive integer")
    return mp.fsum(lam**b for lam in density.eigenvalues)


def s_matrix(basis, gram, potential, bundle, x: ChartPoint, m: int):
    """The full d x d matrix of pointwise inner products of the orthonormal basis."""
    V = section_values(basis, x)
    VT = gram.solve_lower(V)
    H = bundle.weight(x)
    return _hermitize(VT * H * VT.H * _envelope(potential, m, x))


def sigma_b_via_orthonormal(basis, gram, potential, bundle, x, m, b: int):
    """Slow path: trace of the b-th power of the d x d matrix directly."""
    S = s_matrix(basis, gram, potential, bundle, x, m)
    P = S
    for _ in range(b - 1):
        P = P * S
    return mp.fsum(P[i, i].real for i in range(basis.d))


def rank_profile(S, rank: int):
    """(lambda_1, lambda_{rank+1}) of a d x d Hermitian matrix, float precision.

    Double precision suffices here: the rank bound is checked against
    1e-10 * lambda_1, far above float eigensolver noise.
    """
    d = S.rows
    A = np.empty((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            A[i, j] = complex(S[i, j])
    eigs = np.linalg.eigvalsh(A)[::-1]
    lam1 = float(eigs[0])
    lam_next = float(eigs[rank]) if rank < d else 0.0
    return lam1, lam_next


def newton_reduce(sigmas: Sequence, b: int):
    """Predict sigma_b for b > r from sigma_1..sigma_r via Newton's identities.

    All elementary symmetric functions beyond e_r vanish because the density
    matrix has rank at most r, so the recursion closes.
    """
    r = len(sigmas)
    p = [mpf(0)] + [mpf(s) for s in sigmas]
    if b <= r:
        return p[b]
    e = [mpf(1)] + [mpf(0)] * r
    for k in range(1, r + 1):
        acc = mpf(0)
        for i in range(1, k + 1):
            acc += (-1) ** (i - 1) * e[k - i] * p[i]
        e[k] = acc / k
    for j in range(r + 1, b + 1):
        acc = mpf(0)
        for i in range(1, r + 1):
            acc += (-1) ** (i - 1) * e[i] * p[j - i]
        p.append(acc)
    return p[b]


def trace_identity_check(basis, gram, potential, bundle, integrator, m) -> mpf:
    """|integral sigma_1 dmu - d|; orthonormality forces the integral to equal d.

    The integral runs on a quadrature path independent of the one that built
    the Gram matrix (tanh-sinh on the radial line, or the 2-D simplex rule),
    so this is a genuine end-to-end consistency probe.
    """
    d = basis.d

    def sigma1_at(point):
        return sigma_b(density_matrix(basis, gram, potential, bundle, point, m), 1)

    n = potential.dimension
    if n == 1 and potential.invariant and bundle.diagonal:
        two_pi = 2 * pi

        def radial(t):
            point = ChartPoint(mp.sqrt(t))
            return sigma1_at(point) * volume_density(potential, point) * two_pi

        pieces = [mpf(0), *sorted(mpf(bp) for bp in potential.breakpoints if bp > 0), mp.inf]
        total = mp.fsum(mp.quad(radial, [pieces[i], pieces[i + 1]]) for i in range(len(pieces) - 1))
        return abs(total - d)
    value, _ = integrator.integrate_chart(sigma1_at, potential, invariant=None)
    return abs(value - d)
