"""Linearizability invariants and the sound vanishing test.

A 4-web (x, y, f, g) is linearizable iff the two fourth-order compatibility
operators applied to the deformation scalar mu vanish identically; a d-web
additionally needs the d-4 second-order differences J_alpha between the
deformation scalars of its 4-subwebs to vanish.  Vanishing is decided by
random evaluation: exact rational arithmetic whenever the expression allows
it, 256-bit floating arithmetic with a scale-aware threshold otherwise.
"""
from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath

from . import expr as ex
from .expr import (Expr, EvalContext, EvalError, add, div, mul, neg, pow_,
                   sub, evaluate, evaluate_scaled, is_exactly_evaluable,
                   dag_size)
from .calculus import (WebSpec, WebFrame, Rect, SamplePoint,
                       DomainTooSingularError, mu as web_mu, basic_invariant,
                       random_rational, sample_points, _point_is_valid)

__all__ = [
    "ZeroTestPolicy", "Evidence", "InvariantReport", "ConstructionOrders",
    "DegenerateDirectionError", "zero_test", "I1_of_mu", "I2_of_mu", "I_fp",
    "J_alpha", "build_compatibility_pair", "check_4web", "check_dweb",
    "MAX_F_ORDER", "MAX_BASIC_ORDER",
]

ZERO = "ZERO"
NONZERO = "NONZERO"
INCONCLUSIVE = "INCONCLUSIVE"

YES = "YES"
NO = "NO"

# construction-depth bounds: at most 4 derivative levels on the web function,
# at most 3 on the basic invariant
MAX_F_ORDER = 4
MAX_BASIC_ORDER = 3


class DegenerateDirectionError(ex.ExprError):
    """p defines the same foliation direction as the f-foliation."""


@dataclass(frozen=True)
class ZeroTestPolicy:
    """Sampling schedule and thresholds for the vanishing test."""
    points: int = 8
    param_draws: int = 3
    precision: int = 256
    nonzero_confirmations: int = 2  # float-mode witnesses required

    @property
    def threshold_scale(self) -> float:
        # |value| < 2^-(precision/2) * max(1, magnitude) counts as vanishing
        return 2.0 ** -(self.precision // 2)


@dataclass(frozen=True)
class Evidence:
    point: SamplePoint
    residual: str
    mode: str

    def to_json(self) -> dict:
        return {
            "point": [str(self.point.x), str(self.point.y)],
            "params": {k: str(v) for k, v in sorted(self.point.params.items())},
            "residual": self.residual,
            "mode": self.mode,
        }


@dataclass(frozen=True)
class ConstructionOrders:
    """Derivative depth spent while building an expression.

    `f_order` counts derivative levels applied to the web function f
    (every frame operator adds one); `basic_order` counts levels applied on
    top of the basic invariant, None when the expression does not involve it.
    """
    f_order: int
    basic_order: int | None

    def bumped(self) -> "ConstructionOrders":
        return ConstructionOrders(
            self.f_order + 1,
            None if self.basic_order is None else self.basic_order + 1)

    @staticmethod
    def combine(*orders: "ConstructionOrders") -> "ConstructionOrders":
        f = max(o.f_order for o in orders)
        basics = [o.basic_order for o in orders if o.basic_order is not None]
        return ConstructionOrders(f, max(basics) if basics else None)

    def assert_bounds(self, name: str) -> None:
        if self.f_order > MAX_F_ORDER:
            raise ex.ExprError(
                f"{name}: construction used derivative depth {self.f_order}"
                f" > {MAX_F_ORDER} in the web function")
        if self.basic_order is not None and self.basic_order > MAX_BASIC_ORDER:
            raise ex.ExprError(
                f"{name}: construction used derivative depth "
                f"{self.basic_order} > {MAX_BASIC_ORDER} in the basic invariant")


@dataclass
class InvariantReport:
    name: str
    expr: Expr
    dag_size: int
    verdict: str
    evidence: list[Evidence]
    elapsed: float
    mode: str
    reason: str | None = None
    orders: ConstructionOrders | None = None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "dag_size": self.dag_size,
            "evidence": [e.to_json() for e in self.evidence],
        }


# ---------------------------------------------------------------------------
# the two fourth-order operators


def I1_of_mu(mu_expr: Expr, web: WebSpec) -> Expr:
    """First compatibility operator applied to mu (mixed term d1atop d2)."""
    fr = WebFrame.of(web.f)
    H, K = fr.H, fr.K
    m1, m2 = fr.d1(mu_expr), fr.d2(mu_expr)
    return add(
        neg(fr.d1(m1)),
        mul(2, fr.d1(m2)),
        mul(add(mu_expr, H), m1),
        mul(-2, add(mul(2, H), mu_expr), m2),
        mul(H, pow_(mu_expr, 2)),
        mul(add(mul(2, pow_(H, 2)), neg(fr.d2(H))), mu_expr),
        neg(fr.d1(K)),
        mul(2, H, K),
    )


def I2_of_mu(mu_expr: Expr, web: WebSpec) -> Expr:
    """Second compatibility operator applied to mu (same mixed term)."""
    fr = WebFrame.of(web.f)
    H, K = fr.H, fr.K
    m1, m2 = fr.d1(mu_expr), fr.d2(mu_expr)
    return add(
        neg(fr.d2(m2)),
        mul(2, fr.d1(m2)),
        mul(2, sub(mu_expr, H), m1),
        neg(mul(add(H, mu_expr), m2)),
        neg(mul(H, pow_(mu_expr, 2))),
        mul(add(mul(2, pow_(H, 2)), neg(fr.d1(H))), mu_expr),
        neg(fr.d2(K)),
        mul(2, H, K),
    )


def build_compatibility_pair(web: WebSpec, alpha: int = 4
                             ) -> tuple[Expr, Expr, ConstructionOrders]:
    """I1, I2 for the 4-subweb (x, y, f, g_alpha), with the derivative
    depth recorded during construction."""
    a_orders = ConstructionOrders(1, 0)
    h_orders = ConstructionOrders(2, None)
    k_orders = h_orders.bumped()
    mu_orders = ConstructionOrders.combine(a_orders, a_orders.bumped())
    dmu_orders = mu_orders.bumped()
    ddmu_orders = dmu_orders.bumped()
    total = ConstructionOrders.combine(
        ddmu_orders, dmu_orders, mu_orders, h_orders, h_orders.bumped(),
        k_orders, k_orders.bumped())
    total.assert_bounds(f"I1/I2 (alpha={alpha})")
    m = web_mu(web, alpha)
    return I1_of_mu(m, web), I2_of_mu(m, web), total


def I_fp(web: WebSpec, p: Expr) -> Expr:
    """Second-order invariant of the direction field of p against the frame:

        I(f, p) = [p1^2 d2(p2) - 2 p1 p2 m + p2^2 d1(p1)] / [p1 p2 (p2 - p1)]

    with p_i the frame derivatives of p and m the symmetrized mixed
    derivative (d1(p2) + d2(p1))/2.  With the symmetrized middle term this
    equals the deformation scalar mu of the 4-subweb of p exactly, so
    differences of I values coincide with differences of mu values with
    constant +1 (no extra sign or factor).
    """
    fr = WebFrame.of(web.f)
    p1, p2 = fr.d1(p), fr.d2(p)
    if p1 is p2:
        raise DegenerateDirectionError(
            "p has the same foliation direction as f (d1(p) == d2(p))")
    m = div(add(fr.d1(p2), fr.d2(p1)), 2)
    num = add(mul(pow_(p1, 2), fr.d2(p2)),
              mul(-2, p1, p2, m),
              mul(pow_(p2, 2), fr.d1(p1)))
    den = mul(p1, p2, sub(p2, p1))
    return div(num, den)


def J_alpha(web: WebSpec, alpha: int) -> Expr:
    """Relative invariant J_alpha = I(f, g_alpha) - I(f, g4), alpha >= 5."""
    if alpha < 5:
        raise ex.ExprError("J_alpha is defined for alpha >= 5")
    return sub(I_fp(web, web.g(alpha)), I_fp(web, web.g(4)))


# ---------------------------------------------------------------------------
# vanishing test


def _fmt_residual(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return mpmath.nstr(v, 25)


def zero_test(e: Expr, web: WebSpec,
              policy: ZeroTestPolicy | None = None,
              rng: random.Random | None = None
              ) -> tuple[str, list[Evidence], str, str | None]:
    """Sound vanishing verdict for e over the web domain.

    Returns (verdict, evidence, mode, reason).  Exact arithmetic when the
    expression is free of radicals/transcendentals, else high-precision
    floats; in float mode a NONZERO verdict needs confirmation at two
    independent points.  Sampling failures yield INCONCLUSIVE, never a guess.
    """
    policy = policy or ZeroTestPolicy()
    rng = rng if rng is not None else random.Random(web.seed)
    exact = is_exactly_evaluable(e)
    mode = "exact" if exact else "float"
    draws = policy.param_draws if web.params else 1
    evidence: list[Evidence] = []
    hits = 0

    try:
        for _ in range(draws):
            params = {name: random_rational(rng, *web.param_ranges[name])
                      for name in web.params}
            passes = 0
            budget = policy.points * 3
            failure_cap = policy.points * 2
            failures = 0
            while passes < policy.points and budget > 0:
                budget -= 1
                pts = sample_points(web, 1, rng, params=params,
                                    precision=policy.precision)
                pt = pts[0]
                try:
                    if exact:
                        v = evaluate(e, EvalContext(pt.bindings(), mode="exact"))
                        evidence.append(Evidence(pt, _fmt_residual(v), "exact"))
                        if v != 0:
                            return NONZERO, evidence, mode, None
                        passes += 1
                    else:
                        v, scale = evaluate_scaled(
                            e, EvalContext(pt.bindings(), mode="float",
                                           precision=policy.precision))
                        evidence.append(Evidence(pt, _fmt_residual(v), "float"))
                        if abs(v) < policy.threshold_scale * max(1.0, float(scale)):
                            passes += 1
                        else:
                            hits += 1
                            if hits >= policy.nonzero_confirmations:
                                return NONZERO, evidence, mode, None
                except EvalError:
                    failures += 1
                    if failures > failure_cap:
                        return (INCONCLUSIVE, evidence, mode,
                                "too many singular samples")
            if passes < policy.points:
                return (INCONCLUSIVE, evidence, mode,
                        "sampling budget exhausted with an unconfirmed outlier"
                        if hits else "could not complete the sample schedule")
    except DomainTooSingularError as err:
        return INCONCLUSIVE, evidence, mode, str(err)
    if hits:
        return (INCONCLUSIVE, evidence, mode,
                "a single sample exceeded the threshold without confirmation")
    return ZERO, evidence, mode, None


def _report(name: str, e: Expr, web: WebSpec, policy: ZeroTestPolicy,
            orders: ConstructionOrders | None = None) -> InvariantReport:
    t0 = time.perf_counter()
    verdict, evidence, mode, reason = zero_test(e, web, policy)
    return InvariantReport(
        name=name, expr=e, dag_size=dag_size(e), verdict=verdict,
        evidence=evidence, elapsed=time.perf_counter() - t0, mode=mode,
        reason=reason, orders=orders)


def check_dweb(web: WebSpec, policy: ZeroTestPolicy | None = None
               ) -> tuple[str, list[InvariantReport]]:
    """Decide linearizability of the web: YES iff every invariant is ZERO.

    For d = 4 this is exactly the two-invariant test; for d > 4 the
    second-order J invariants of the extra foliations join the list.
    """
    policy = policy or ZeroTestPolicy()
    I1, I2, orders = build_compatibility_pair(web, 4)
    reports = [_report("I1", I1, web, policy, orders),
               _report("I2", I2, web, policy, orders)]
    for alpha in range(5, web.d + 1):
        j = J_alpha(web, alpha)
        reports.append(_report(f"J{alpha}", j, web, policy,
                               ConstructionOrders(2, None)))
    verdicts = {r.verdict for r in reports}
    if verdicts == {ZERO}:
        return YES, reports
    if NONZERO in verdicts:
        return NO, reports
    return INCONCLUSIVE, reports


def check_4web(f: Expr, g: Expr, domain: Rect | None = None,
               seed: int = 1, policy: ZeroTestPolicy | None = None
               ) -> tuple[str, list[InvariantReport]]:
    """Convenience wrapper: linearizability of the 4-web (x, y, f, g)."""
    web = WebSpec(f=f, gs=(g,), domain=domain or Rect(*_default_domain()),
                  seed=seed)
    return check_dweb(web, policy)


def _default_domain():
    from .calculus import DEFAULT_DOMAIN
    return DEFAULT_DOMAIN
