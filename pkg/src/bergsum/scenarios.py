"""Scenario catalog and the key-value configuration grammar.

A scenario pins everything a run needs: manifold chart, perturbation,
bundle shape, evaluation points, tensor-power schedule, power list, and the
working precision.  The built-in catalog covers every model geometry the
verification suite exercises; configs can reproduce or vary them.

Config grammar (UTF-8, '#' comments)::

    [scenario-name]
    manifold = cp1            # cp1 | cp2 | flat
    epsilon  = 0.1            # optional perturbation strength
    profile  = p1             # p1 | p2 | p3, required when epsilon != 0
    bundle   = twisted        # trivial | twisted
    ranks    = 2              # rank of the trivial bundle
    twists   = 2,0            # twist degrees (twisted bundles, cp1 only)
    points   = 0.5 1.2-0.4j   # space-separated; cp2 entries 'a,b';
                              # or random:COUNT:SEED
    m        = 10..50         # shorthand for m_min..m_max(..m_step)
    b        = 1,2
    precision = 30            # digits, or double | high

Key-value pairs may also be separated by ';' on a single line; a file
without section headers defines one anonymous scenario.  Parse errors carry
1-based line numbers.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from mpmath import mp, mpf

from .errors import ParseError, UnsupportedScenario, ValidationError
from .geometry import (
    ChartPoint,
    KahlerPotential,
    PROFILES,
    fs_twist_bundle,
    flat_model,
    fubini_study,
    metric_tensor,
    perturbed_fs,
    trivial_bundle,
)
from .quadrature import Integrator
from .sections import SectionModel

__all__ = ["Scenario", "catalog", "parse_config", "GUARD_DIGITS"]

GUARD_DIGITS = 10

_MANIFOLDS = ("cp1", "cp2", "flat")
_BUNDLES = ("trivial", "twisted")
_PRECISION_NAMES = {"double": 16, "high": 30}


@dataclass(frozen=True)
class Scenario:
    """A fully specified model geometry plus evaluation plan."""

    name: str
    manifold: str
    epsilon: str = "0"  # decimal string; parsed at working precision
    profile: str | None = None
    rank: int = 1
    twists: tuple = ()
    points: tuple = ()
    m_schedule: tuple = ()
    b_list: tuple = (1,)
    precision: int = 30
    fit_order: int | None = None
    k_max: int = 3

    @property
    def dimension(self) -> int:
        return 2 if self.manifold == "cp2" else 1

    @property
    def analytic(self) -> bool:
        if self.profile and mpf(self.epsilon) != 0:
            return PROFILES[self.profile].analytic
        return True

    @property
    def perturbed(self) -> bool:
        return self.profile is not None and mpf(self.epsilon) != 0

    def potential(self) -> KahlerPotential:
        if self.manifold == "flat":
            return flat_model(self.dimension)
        if self.perturbed:
            if self.manifold != "cp1":
                raise UnsupportedScenario("perturbation profiles are cataloged on cp1 only")
            return perturbed_fs(self.profile, self.epsilon)
        return fubini_study(self.dimension)

    def bundle(self):
        if self.twists and any(self.twists):
            return fs_twist_bundle(self.twists)
        return trivial_bundle(self.rank, self.dimension)

    def section_model(self) -> SectionModel:
        return SectionModel(self.manifold, rank=self.rank, twists=self.twists)

    def integrator_mode(self) -> str:
        if self.manifold == "flat":
            return "radial-1d"
        if not self.perturbed:
            return "exact-oracle"
        return "radial-1d" if PROFILES[self.profile].invariant else "tensor-2d"

    def integrator(self) -> Integrator:
        mode = self.integrator_mode()
        kwargs = {}
        if self.profile == "p3":
            # the bump flattens only root-exponentially under Gauss nodes;
            # a looser target keeps the cascade honest and the budget sane
            kwargs["rel_tolerance"] = mpf("1e-15")
            kwargs["target_tolerance"] = mpf("1e-15")
        return Integrator(mode, precision_digits=self.precision, **kwargs)

    def fit_order_for(self, b: int, sample_count: int) -> int:
        cap = sample_count - 3
        if self.fit_order is not None:
            return min(self.fit_order, cap)
        if not self.perturbed:
            return min(b + 3, cap)
        return min(7 if self.profile == "p1" else 4, cap)

    def check_positivity(self):
        """Scan the chart for metric positivity; perturbations must not break it."""
        if not self.perturbed:
            return
        potential = self.potential()
        for i in range(60):
            t = mpf(i) / 4
            metric_tensor(potential, ChartPoint(mp.sqrt(t)))  # raises NonPositiveMetric
            if not PROFILES[self.profile].invariant:
                metric_tensor(potential, ChartPoint(mp.sqrt(t) * mp.expjpi(mpf("0.37"))))


def _random_points(dimension: int, count: int, seed: int) -> tuple:
    rng = random.Random(seed)
    points = []
    for _ in range(count):
        coords = []
        for _ in range(dimension):
            radius = 0.15 + 1.2 * rng.random() if dimension == 1 else 0.1 + 0.7 * rng.random()
            angle = 2 * math.pi * rng.random()
            coords.append(radius * complex(math.cos(angle), math.sin(angle)))
        points.append(ChartPoint(*coords))
    return tuple(points)


def catalog() -> dict:
    """The built-in scenarios; every name the verification suite uses is here."""
    span = lambda lo, hi, step=1: tuple(range(lo, hi + 1, step))
    entries = [
        Scenario(
            name="fs-cp1-baseline",
            manifold="cp1",
            rank=1,
            points=_random_points(1, 10, seed=101),
            m_schedule=span(5, 60),
            b_list=(1, 2, 3),
            precision=35,
        ),
        Scenario(
            name="fs-cp1-rank2",
            manifold="cp1",
            rank=2,
            points=_random_points(1, 3, seed=102),
            m_schedule=span(5, 40),
            b_list=(1, 2),
            precision=35,
        ),
        Scenario(
            name="fs-cp1-rank3",
            manifold="cp1",
            rank=3,
            points=_random_points(1, 3, seed=103),
            m_schedule=span(5, 40),
            b_list=(1, 2),
            precision=35,
        ),
        Scenario(
            name="fs-cp1-twist1",
            manifold="cp1",
            rank=1,
            twists=(1,),
            points=_random_points(1, 3, seed=104),
            m_schedule=span(5, 40),
            b_list=(1, 2),
            precision=35,
        ),
        Scenario(
            name="fs-cp1-twist2",
            manifold="cp1",
            rank=1,
            twists=(2,),
            points=_random_points(1, 3, seed=105),
            m_schedule=span(5, 40),
            b_list=(1, 2),
            precision=35,
        ),
        Scenario(
            name="fs-cp1-twist-pair",
            manifold="cp1",
            rank=2,
            twists=(1, 1),
            points=_random_points(1, 3, seed=106),
            m_schedule=span(5, 30),
            b_list=(1, 2, 3, 4),
            precision=35,
        ),
        Scenario(
            name="fs-cp1-mixed-twist",
            manifold="cp1",
            rank=2,
            twists=(2, 0),
            points=_random_points(1, 3, seed=107),
            m_schedule=span(5, 30),
            b_list=(1, 2, 3, 4),
            precision=35,
        ),
        Scenario(
            name="fs-cp2-baseline",
            manifold="cp2",
            rank=1,
            points=_random_points(2, 3, seed=108),
            m_schedule=span(5, 30),
            b_list=(1,),
            precision=30,
            k_max=2,
        ),
        Scenario(
            name="fs-cp1-perturbed-p1",
            manifold="cp1",
            epsilon="0.1",
            profile="p1",
            rank=1,
            points=(ChartPoint(0.5), ChartPoint(0.9), ChartPoint(1.0)),
            m_schedule=span(10, 50),
            b_list=(1, 2),
            precision=30,
        ),
        Scenario(
            name="fs-cp1-perturbed-p2",
            manifold="cp1",
            epsilon="0.1",
            profile="p2",
            rank=1,
            points=(ChartPoint(0.4), ChartPoint(complex(0.3, 0.52)), ChartPoint(complex(0.73, -0.53))),
            m_schedule=span(8, 28, 2),
            b_list=(1,),
            precision=25,
            fit_order=5,
        ),
        Scenario(
            name="fs-cp1-bump-p3",
            manifold="cp1",
            epsilon="0.02",
            profile="p3",
            rank=1,
            points=(ChartPoint(0.8), ChartPoint(1.0), ChartPoint(1.2)),
            m_schedule=span(8, 28, 2),
            b_list=(1,),
            precision=25,
            fit_order=5,
        ),
        Scenario(
            name="flat-probe",
            manifold="flat",
            rank=1,
            points=(ChartPoint(0), ChartPoint(complex(0.5, 0.5)), ChartPoint(1.2)),
            m_schedule=(),
            b_list=(),
            precision=30,
        ),
    ]
    return {sc.name: sc for sc in entries}


# -- configuration parsing ------------------------------------------------------


_KEYS = {
    "manifold",
    "epsilon",
    "profile",
    "bundle",
    "ranks",
    "twists",
    "points",
    "m",
    "m_min",
    "m_max",
    "m_step",
    "b",
    "precision",
    "fit_order",
}


def parse_config(text: str) -> list:
    """Parse configuration text into validated scenarios.

    Raises ParseError for malformed syntax and ValidationError for illegal
    values; both carry the offending 1-based line number.
    """
    sections: list = []  # (name, header_line, {key: (value, line)})
    current = None

    def open_section(name, line):
        nonlocal current
        current = {"__name__": (name, line)}
        sections.append(current)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(lineno, f"unterminated section header {line!r}")
            name = line[1:-1].strip()
            if not name:
                raise ParseError(lineno, "empty scenario name")
            open_section(name, lineno)
            continue
        for chunk in line.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            if "=" not in chunk:
                raise ParseError(lineno, f"expected key=value, got {chunk!r}")
            key, _, value = chunk.partition("=")
            key = key.strip().lower()
            value = value.strip()
            if key not in _KEYS:
                raise ParseError(
                    lineno, f"unknown key {key!r} (allowed: {', '.join(sorted(_KEYS))})"
                )
            if current is None:
                open_section(f"scenario-{len(sections) + 1}", lineno)
            if key in current:
                raise ParseError(lineno, f"duplicate key {key!r} in this scenario")
            current[key] = (value, lineno)

    scenarios = [_build_scenario(section) for section in sections]
    names = [sc.name for sc in scenarios]
    if len(set(names)) != len(names):
        raise ValidationError(1, f"duplicate scenario names: {names}")
    return scenarios


def _get(section, key, default=None):
    if key in section:
        return section[key]
    return (default, section["__name__"][1])


def _int_value(raw, line, key, minimum=None):
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(line, f"{key} must be an integer, got {raw!r}") from None
    if minimum is not None and value < minimum:
        raise ValidationError(line, f"{key} must be >= {minimum}, got {value}")
    return value


def _parse_points(raw, line, dimension):
    if raw.startswith("random:"):
        parts = raw.split(":")
        if len(parts) != 3:
            raise ValidationError(line, "random points need the form random:COUNT:SEED")
        count = _int_value(parts[1], line, "points count", minimum=1)
        seed = _int_value(parts[2], line, "points seed")
        return _random_points(dimension, count, seed)
    points = []
    for entry in raw.split():
        coords = entry.split(",")
        if len(coords) != dimension:
            raise ValidationError(
                line,
                f"point {entry!r} has {len(coords)} coordinates; manifold needs {dimension}",
            )
        try:
            points.append(ChartPoint(*(complex(c) for c in coords)))
        except ValueError:
            raise ValidationError(line, f"cannot parse point {entry!r}") from None
    if not points:
        raise ValidationError(line, "points list is empty")
    return tuple(points)


def _build_scenario(section) -> Scenario:
    name, header_line = section["__name__"]

    raw, line = _get(section, "manifold")
    if raw is None:
        raise ValidationError(header_line, f"scenario {name!r} is missing the manifold key")
    manifold = raw.lower()
    if manifold not in _MANIFOLDS:
        raise ValidationError(
            line, f"manifold {raw!r} not recognized; allowed values: {', '.join(_MANIFOLDS)}"
        )
    dimension = 2 if manifold == "cp2" else 1

    raw, line = _get(section, "epsilon", "0")
    try:
        eps_val = float(raw)
    except ValueError:
        raise ValidationError(line, f"epsilon must be a number, got {raw!r}") from None
    if eps_val < 0:
        raise ValidationError(line, f"epsilon must be >= 0, got {raw}")
    epsilon = raw if eps_val != 0 else "0"

    raw, line = _get(section, "profile")
    profile = raw.lower() if raw else None
    if profile is not None and profile not in PROFILES:
        raise ValidationError(
            line, f"profile {raw!r} not recognized; allowed values: {', '.join(sorted(PROFILES))}"
        )
    if eps_val != 0 and profile is None:
        raise ValidationError(line, "epsilon != 0 requires a profile")
    if eps_val != 0 and manifold != "cp1":
        raise ValidationError(line, "perturbation profiles are supported on cp1 only")
    if eps_val == 0:
        profile = None

    raw, line = _get(section, "bundle", "trivial")
    bundle_kind = raw.lower()
    if bundle_kind not in _BUNDLES:
        raise ValidationError(
            line, f"bundle {raw!r} not recognized; allowed values: {', '.join(_BUNDLES)}"
        )

    twists: tuple = ()
    if bundle_kind == "twisted":
        raw, line = _get(section, "twists")
        if raw is None:
            raise ValidationError(line, "twisted bundles need a twists key")
        if manifold != "cp1":
            raise ValidationError(line, "twists are supported on cp1 only")
        try:
            twists = tuple(int(v.strip()) for v in raw.split(","))
        except ValueError:
            raise ValidationError(line, f"twists must be integers, got {raw!r}") from None
        if any(k < 0 for k in twists):
            raise ValidationError(line, "negative twists leave no holomorphic sections")
        rank = len(twists)
        if "ranks" in section:
            declared, rline = section["ranks"]
            if _int_value(declared, rline, "ranks") != rank:
                raise ValidationError(rline, f"ranks={declared} contradicts {len(twists)} twists")
    else:
        raw, line = _get(section, "ranks", "1")
        rank = _int_value(raw, line, "ranks", minimum=1)
        if rank > 3:
            raise ValidationError(line, f"ranks up to 3 are cataloged, got {rank}")
        if "twists" in section:
            raise ValidationError(section["twists"][1], "twists require bundle=twisted")

    # tensor power schedule
    if "m" in section:
        raw, line = section["m"]
        parts = raw.split("..")
        if len(parts) not in (2, 3):
            raise ValidationError(line, f"m must look like lo..hi or lo..hi..step, got {raw!r}")
        m_min = _int_value(parts[0], line, "m_min", minimum=1)
        m_max = _int_value(parts[1], line, "m_max")
        m_step = _int_value(parts[2], line, "m_step", minimum=1) if len(parts) == 3 else 1
    else:
        raw, line = _get(section, "m_min", None)
        if raw is None and manifold == "flat":
            m_min = m_max = None
            m_step = 1
        else:
            m_min = _int_value(raw if raw is not None else "10", line, "m_min", minimum=1)
            raw, line = _get(section, "m_max", "30")
            m_max = _int_value(raw, line, "m_max")
            raw, line = _get(section, "m_step", "1")
            m_step = _int_value(raw, line, "m_step", minimum=1)
    if m_min is not None:
        if m_max < m_min:
            raise ValidationError(section["__name__"][1], f"m_max {m_max} < m_min {m_min}")
        m_schedule = tuple(range(m_min, m_max + 1, m_step))
    else:
        m_schedule = ()

    raw, line = _get(section, "b", "1" if manifold != "flat" else "")
    if raw:
        try:
            b_list = tuple(int(v.strip()) for v in raw.split(","))
        except ValueError:
            raise ValidationError(line, f"b must be integers, got {raw!r}") from None
        if any(b < 1 for b in b_list):
            raise ValidationError(line, "powers b must be >= 1")
    else:
        b_list = ()

    raw, line = _get(section, "precision")
    if raw is None:
        precision = 25 if profile in ("p2", "p3") else (30 if profile else 35)
    elif raw.lower() in _PRECISION_NAMES:
        precision = _PRECISION_NAMES[raw.lower()]
    else:
        precision = _int_value(raw, line, "precision", minimum=10)

    raw, line = _get(section, "fit_order")
    fit_order = _int_value(raw, line, "fit_order", minimum=0) if raw is not None else None

    raw, line = _get(section, "points", "random:3:7")
    points = _parse_points(raw, line, dimension)

    scenario = Scenario(
        name=name,
        manifold=manifold,
        epsilon=epsilon,
        profile=profile,
        rank=rank,
        twists=twists,
        points=points,
        m_schedule=m_schedule,
        b_list=b_list,
        precision=precision,
        fit_order=fit_order,
        k_max=2 if manifold == "cp2" else 3,
    )
    return scenario
