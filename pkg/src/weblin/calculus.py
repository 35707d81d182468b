"""Web frame operators and the fundamental scalars of a planar d-web.

The first two foliations are the coordinate lines, the third is the level
family of the web function f.  The frame vector fields dual to the
normalized coframe act on scalars as

    d1(e) = -e_x / f_x,        d2(e) = -e_y / f_y,

and everything else here (H, K, the basic invariants a_alpha and the
deformation scalar mu) is built from them.
"""
from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from . import expr as ex
from .expr import (Expr, EvalContext, EvalError, ExactnessError, derive, div,
                   mul, neg, pow_, sub, add, log_, evaluate,
                   is_exactly_evaluable, free_symbols)

__all__ = [
    "Rect", "WebSpec", "WebFrame", "DomainTooSingularError", "partial",
    "d1", "d2", "web_H", "web_K", "basic_invariant", "mu", "SamplePoint",
    "sample_points", "random_rational", "reparameterized",
]

DEFAULT_DOMAIN = (Fraction(1, 4), Fraction(3, 4), Fraction(1, 4), Fraction(3, 4))
DEFAULT_PARAM_RANGE = (Fraction(2), Fraction(7))
MAX_REJECTIONS = 100
RATIONAL_DENOMINATOR_BOUND = 10 ** 4
# float-mode guard band for the "not 0, not 1, pairwise distinct" checks
_DISTINCT_EPS = 2.0 ** -100


class DomainTooSingularError(ex.ExprError):
    """Rejection sampling could not find enough valid points."""


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle with exact rational corners."""
    x_lo: Fraction
    x_hi: Fraction
    y_lo: Fraction
    y_hi: Fraction

    def __post_init__(self):
        for name in ("x_lo", "x_hi", "y_lo", "y_hi"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ex.ExprError("rectangle must have positive extent")

    @property
    def center(self) -> tuple[Fraction, Fraction]:
        return ((self.x_lo + self.x_hi) / 2, (self.y_lo + self.y_hi) / 2)

    def as_floats(self) -> tuple[float, float, float, float]:
        return (float(self.x_lo), float(self.x_hi),
                float(self.y_lo), float(self.y_hi))


@dataclass(frozen=True)
class WebSpec:
    """A validated d-web: f plus g4..gd, with a sampling domain and seed.

    The web has d = 2 + (number of web functions) foliations: coordinate
    lines, levels of f, and levels of each g.  Validity of sample points
    (nonzero first partials, basic invariants away from 0 and 1 and pairwise
    distinct) is enforced by rejection at sampling time, not at construction.
    """
    f: Expr
    gs: tuple[Expr, ...]
    domain: Rect = Rect(*DEFAULT_DOMAIN)
    param_ranges: Mapping[str, tuple[Fraction, Fraction]] = field(default_factory=dict)
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gs", tuple(self.gs))
        if not self.gs:
            raise ex.ExprError("a d-web needs at least one g (d >= 4)")
        ranges = {k: (Fraction(lo), Fraction(hi))
                  for k, (lo, hi) in dict(self.param_ranges).items()}
        for name in self.params:
            ranges.setdefault(name, DEFAULT_PARAM_RANGE)
        object.__setattr__(self, "param_ranges", ranges)

    @property
    def d(self) -> int:
        return 3 + len(self.gs)

    @property
    def params(self) -> tuple[str, ...]:
        names: set[str] = set()
        for e in (self.f, *self.gs):
            names |= {s for s in free_symbols(e) if s not in ("x", "y")}
        return tuple(sorted(names))

    def g(self, alpha: int) -> Expr:
        """Web function of foliation alpha, 4 <= alpha <= d."""
        if not 4 <= alpha <= self.d:
            raise ex.ExprError(f"foliation index {alpha} out of range 4..{self.d}")
        return self.gs[alpha - 4]

    @property
    def is_rational(self) -> bool:
        return all(is_exactly_evaluable(e) for e in (self.f, *self.gs))


_frames: dict[int, "WebFrame"] = {}
_frames_lock = threading.Lock()


class WebFrame:
    """The frame operators of a fixed f, with per-frame rewrite caches."""

    def __init__(self, f: Expr):
        self.f = f
        self.fx = derive(f, "x")
        self.fy = derive(f, "y")
        self._fx_inv = pow_(self.fx, -1)
        self._fy_inv = pow_(self.fy, -1)
        self._cache1: dict[int, Expr] = {}
        self._cache2: dict[int, Expr] = {}
        self._lock = threading.Lock()

    @staticmethod
    def of(f: Expr) -> "WebFrame":
        with _frames_lock:
            fr = _frames.get(f.uid)
            if fr is None:
                fr = WebFrame(f)
                _frames[f.uid] = fr
            return fr

    def d1(self, e: Expr) -> Expr:
        with self._lock:
            hit = self._cache1.get(e.uid)
        if hit is None:
            hit = mul(-1, derive(e, "x"), self._fx_inv)
            with self._lock:
                self._cache1[e.uid] = hit
        return hit

    def d2(self, e: Expr) -> Expr:
        with self._lock:
            hit = self._cache2.get(e.uid)
        if hit is None:
            hit = mul(-1, derive(e, "y"), self._fy_inv)
            with self._lock:
                self._cache2[e.uid] = hit
        return hit

    @property
    def H(self) -> Expr:
        return div(derive(self.fx, "y"), mul(self.fx, self.fy))

    @property
    def K(self) -> Expr:
        return sub(self.d1(self.H), self.d2(self.H))


def partial(e: Expr, v: str) -> Expr:
    """Plain partial derivative by 'x' or 'y'; parameters are constants."""
    if v not in ("x", "y"):
        raise ex.ExprError(f"partial expects 'x' or 'y', got {v!r}")
    return derive(e, v)


def d1(e: Expr, web: WebSpec) -> Expr:
    """First frame operator: -partial(e, x) / partial(f, x)."""
    return WebFrame.of(web.f).d1(e)


def d2(e: Expr, web: WebSpec) -> Expr:
    """Second frame operator: -partial(e, y) / partial(f, y)."""
    return WebFrame.of(web.f).d2(e)


def web_H(web: WebSpec) -> Expr:
    """H = f_xy / (f_x f_y), the single connection scalar of the 3-subweb."""
    return WebFrame.of(web.f).H


def web_K(web: WebSpec, mode: str = "structure") -> Expr:
    """Web curvature of the 3-subweb (x, y, f).

    mode "structure": K = d1(H) - d2(H);
    mode "log":       K = -(log(f_x/f_y))_xy / (f_x f_y).
    The two agree as functions; keeping both gives a cross-formula oracle.
    """
    fr = WebFrame.of(web.f)
    if mode == "structure":
        return fr.K
    if mode == "log":
        inner = log_(div(fr.fx, fr.fy))
        return mul(-1, pow_(mul(fr.fx, fr.fy), -1),
                   derive(derive(inner, "x"), "y"))
    raise ex.ExprError(f"unknown curvature mode {mode!r}")


def basic_invariant(web: WebSpec, alpha: int = 4) -> Expr:
    """a_alpha = f_y (g_alpha)_x / (f_x (g_alpha)_y).

    Identical (already at DAG level) to d1(g_alpha)/d2(g_alpha).
    """
    fr = WebFrame.of(web.f)
    g = web.g(alpha)
    return div(mul(fr.fy, derive(g, "x")), mul(fr.fx, derive(g, "y")))


def mu(web: WebSpec, alpha: int = 4) -> Expr:
    """Deformation scalar of the 4-subweb (x, y, f, g_alpha):

        mu_alpha = (d1(a) - a d2(a)) / (a - a^2).

    The denominator is fixed as (a - a^2); flipping it to (a^2 - a) negates
    the value but not any vanishing verdict.
    """
    fr = WebFrame.of(web.f)
    a = basic_invariant(web, alpha)
    num = sub(fr.d1(a), mul(a, fr.d2(a)))
    return div(num, sub(a, pow_(a, 2)))


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SamplePoint:
    x: Fraction
    y: Fraction
    params: Mapping[str, Fraction] = field(default_factory=dict)

    def bindings(self) -> dict[str, Fraction]:
        return {"x": self.x, "y": self.y, **self.params}


def random_rational(rng: random.Random, lo: Fraction, hi: Fraction) -> Fraction:
    """Uniform-ish rational in [lo, hi], numerator and denominator <= 10^4."""
    lo, hi = Fraction(lo), Fraction(hi)
    span = max(abs(lo), abs(hi))
    q_max = max(1, min(RATIONAL_DENOMINATOR_BOUND,
                       int(RATIONAL_DENOMINATOR_BOUND / max(1, span))))
    for _ in range(64):
        q = rng.randint(1, q_max)
        p_lo = -((-lo.numerator * q) // lo.denominator)  # ceil(lo*q)
        p_hi = (hi.numerator * q) // hi.denominator      # floor(hi*q)
        if p_lo <= p_hi:
            return Fraction(rng.randint(p_lo, p_hi), q)
    raise DomainTooSingularError("interval too narrow for rational sampling")


def _validity_checks(web: WebSpec) -> list[Expr]:
    fr = WebFrame.of(web.f)
    checks = [fr.fx, fr.fy]
    a_list = []
    for alpha in range(4, web.d + 1):
        g = web.g(alpha)
        checks.append(derive(g, "x"))
        checks.append(derive(g, "y"))
        a_list.append(basic_invariant(web, alpha))
    for a in a_list:
        checks.append(a)            # a != 0
        checks.append(sub(a, 1))    # a != 1
    for i in range(len(a_list)):
        for j in range(i + 1, len(a_list)):
            checks.append(sub(a_list[i], a_list[j]))  # pairwise distinct
    return checks


def _point_is_valid(web: WebSpec, point: SamplePoint, precision: int) -> bool:
    bindings = point.bindings()
    exact = web.is_rational
    for chk in _validity_checks(web):
        try:
            if exact and is_exactly_evaluable(chk):
                v = evaluate(chk, EvalContext(bindings, mode="exact"))
                if v == 0:
                    return False
            else:
                v = evaluate(chk, EvalContext(bindings, mode="float",
                                              precision=precision))
                if abs(v) < _DISTINCT_EPS:
                    return False
        except EvalError:
            return False
    return True


def sample_points(web: WebSpec, count: int, rng: random.Random | None = None,
                  params: Mapping[str, Fraction] | None = None,
                  precision: int = 256,
                  extra_exprs: Sequence[Expr] = ()) -> list[SamplePoint]:
    """Draw `count` accepted sample points inside the web domain.

    Points violating the web validity constraints (or at which any of
    `extra_exprs` fails to evaluate) are rejected; after MAX_REJECTIONS
    consecutive rejections the domain is declared too singular.
    """
    rng = rng if rng is not None else random.Random(web.seed)
    if params is None:
        params = {name: random_rational(rng, *web.param_ranges[name])
                  for name in web.params}
    out: list[SamplePoint] = []
    rejects = 0
    dom = web.domain
    while len(out) < count:
        pt = SamplePoint(random_rational(rng, dom.x_lo, dom.x_hi),
                         random_rational(rng, dom.y_lo, dom.y_hi),
                         dict(params))
        ok = pt.x != pt.y and _point_is_valid(web, pt, precision)
        if ok:
            for e in extra_exprs:
                try:
                    mode = ("exact" if is_exactly_evaluable(e)
                            and web.is_rational else "float")
                    evaluate(e, EvalContext(pt.bindings(), mode=mode,
                                            precision=precision))
                except ExactnessError:
                    pass  # preferable mode refused; zero test will use float
                except EvalError:
                    ok = False
                    break
        if ok:
            out.append(pt)
            rejects = 0
        else:
            rejects += 1
            if rejects > MAX_REJECTIONS:
                raise DomainTooSingularError(
                    f"domain too singular: {MAX_REJECTIONS} consecutive "
                    f"rejected samples in {dom}")
    return out


def reparameterized(web: WebSpec, p_of_x: Expr, q_of_y: Expr,
                    domain: Rect) -> WebSpec:
    """The equivalent web with f(p(x), q(y)), g(p(x), q(y)).

    `domain` must be chosen so that (p, q) maps it into a valid domain of
    the original web.
    """
    mapping = {"x": p_of_x, "y": q_of_y}
    return WebSpec(
        f=ex.substitute(web.f, mapping),
        gs=tuple(ex.substitute(g, mapping) for g in web.gs),
        domain=domain,
        param_ranges=web.param_ranges,
        seed=web.seed,
    )
