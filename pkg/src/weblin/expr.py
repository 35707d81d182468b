"""Hash-consed expression DAGs with exact rational constants.

Every expression is interned: building the same tree twice yields the same
node object, so structural equality is identity and derivative/simplification
caches can be keyed by node.  Constants are `fractions.Fraction`; floating
literals never enter the DAG (the parser converts decimals to exact
rationals).  `sqrt`, division and negation are surface syntax: they
canonicalize to `pow(e, 1/2)`, `mul(a, pow(b, -1))` and `mul(-1, a)`.

The smart constructors perform light, value-preserving canonicalization
(constant folding, 0/1 identities, flattening, collection of rational
coefficients and of identical factors).  They deliberately do not factor or
cancel symbolic rational functions; correctness of downstream zero tests
rests on evaluation, not on the simplifier.
"""
from __future__ import annotations

import itertools
import math
import re
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import mpmath

__all__ = [
    "Expr", "EvalContext", "ExprError", "ParseError", "EvalError",
    "MissingBindingError", "SingularSampleError", "DomainEvalError",
    "ExactnessError", "const", "var", "param", "add", "sub", "mul", "div",
    "neg", "pow_", "sqrt", "exp_", "log_", "X", "Y", "parse", "format_expr",
    "simplify", "derive", "substitute", "evaluate", "evaluate_scaled",
    "dag_size", "free_symbols", "is_exactly_evaluable", "grid_function",
]

CONST = "const"
VAR = "var"
PARAM = "param"
ADD = "add"
MUL = "mul"
POW = "pow"
EXP = "exp"
LOG = "log"
UNDEF = "undef"

_MASK_X = 1
_MASK_Y = 2
_MASK_PARAM = 4
_MASK_TRANSCENDENTAL = 8  # exp/log node, or pow with non-integer exponent


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class EvalError(ExprError):
    pass


class MissingBindingError(EvalError):
    pass


class SingularSampleError(EvalError):
    """Division by zero (or an undefined constant) at the sample point."""


class DomainEvalError(EvalError):
    """Negative radicand or non-positive log argument under real evaluation."""


class ExactnessError(EvalError):
    """Exact mode refused: the value is not representable as a rational."""


class Expr:
    """One interned DAG node.  Compare with `is`/`==` (same thing here)."""

    __slots__ = ("kind", "children", "value", "name", "uid", "mask")

    def __init__(self, kind: str, children: tuple["Expr", ...],
                 value: Fraction | None, name: str | None, uid: int, mask: int):
        self.kind = kind
        self.children = children
        self.value = value
        self.name = name
        self.uid = uid
        self.mask = mask

    def __repr__(self) -> str:
        return f"<Expr {format_expr(self)}>"

    # arithmetic sugar so formulas read like formulas
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, other):
        return pow_(self, other)

    def __neg__(self):
        return neg(self)

    @property
    def is_zero(self) -> bool:
        return self.kind == CONST and self.value == 0

    @property
    def is_one(self) -> bool:
        return self.kind == CONST and self.value == 1


_lock = threading.RLock()
_table: dict[tuple, Expr] = {}
_uid_counter = itertools.count()
_derivative_cache: dict[tuple[int, str], Expr] = {}


def _intern(kind: str, children: tuple[Expr, ...] = (),
            value: Fraction | None = None, name: str | None = None) -> Expr:
    key = (kind, name, value, tuple(c.uid for c in children))
    with _lock:
        node = _table.get(key)
        if node is None:
            mask = 0
            for c in children:
                mask |= c.mask
            if kind == VAR:
                mask |= _MASK_X if name == "x" else _MASK_Y
            elif kind == PARAM:
                mask |= _MASK_PARAM
            elif kind in (EXP, LOG):
                mask |= _MASK_TRANSCENDENTAL
            elif kind == POW:
                e = children[1]
                if not (e.kind == CONST and e.value.denominator == 1):
                    mask |= _MASK_TRANSCENDENTAL
            node = Expr(kind, children, value, name, next(_uid_counter), mask)
            _table[key] = node
        return node


_UNDEF = _intern(UNDEF)


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction)):
        return const(v)
    raise TypeError(f"cannot coerce {type(v).__name__} to Expr "
                    "(floats are rejected; use Fraction for exact constants)")


def const(v) -> Expr:
    if isinstance(v, float):
        raise TypeError("float constants are not allowed in the DAG; "
                        "pass int, Fraction or a string")
    if isinstance(v, str):
        v = Fraction(v)
    return _intern(CONST, value=Fraction(v))


def var(name: str) -> Expr:
    if name not in ("x", "y"):
        raise ExprError(f"variable must be 'x' or 'y', got {name!r}")
    return _intern(VAR, name=name)


def param(name: str) -> Expr:
    if (not re.fullmatch(r"[a-z][a-z0-9_]*", name) or name in _RESERVED
            or name in ("x", "y")):
        raise ExprError(f"invalid parameter name {name!r}")
    return _intern(PARAM, name=name)


X = var("x")
Y = var("y")

_ZERO = const(0)
_ONE = const(1)
_HALF = Fraction(1, 2)


def _coeff_core(t: Expr) -> tuple[Fraction, Expr]:
    """Split a canonical term into (rational coefficient, remaining factor)."""
    if t.kind == MUL and t.children[0].kind == CONST:
        rest = t.children[1:]
        core = rest[0] if len(rest) == 1 else _intern(MUL, rest)
        return t.children[0].value, core
    return Fraction(1), t


def _scaled(core: Expr, c: Fraction) -> Expr:
    if c == 1:
        return core
    if core.kind == MUL:
        return _intern(MUL, (const(c),) + core.children)
    return _intern(MUL, (const(c), core))


def _term_exp_factor(t: Expr) -> Expr | None:
    """The unique exp(...) factor of a canonical term, if any."""
    if t.kind == EXP:
        return t
    if t.kind == MUL:
        for c in t.children:
            if c.kind == EXP:
                return c
    return None


def _strip_factor(t: Expr, f: Expr) -> Expr:
    if t is f:
        return _ONE
    rest = tuple(c for c in t.children if c is not f)
    if len(rest) == 1:
        return rest[0]
    return _intern(MUL, rest)


def add(*terms) -> Expr:
    """n-ary sum; flattens, folds constants and collects like terms."""
    const_acc = Fraction(0)
    coeffs: dict[int, Fraction] = {}
    cores: dict[int, Expr] = {}

    def accumulate(c: Fraction, core: Expr) -> None:
        nonlocal const_acc
        if core.kind == ADD:
            # a rational multiple of a sum: distribute so the terms can
            # cancel against siblings (term count is unchanged)
            for kk in core.children:
                if kk.kind == CONST:
                    const_acc += c * kk.value
                else:
                    c2, core2 = _coeff_core(kk)
                    accumulate(c * c2, core2)
            return
        coeffs[core.uid] = coeffs.get(core.uid, Fraction(0)) + c
        cores[core.uid] = core

    stack = [as_expr(t) for t in terms]
    for t in stack:
        if t.kind == UNDEF:
            return _UNDEF
        if t.kind == CONST:
            const_acc += t.value
            continue
        kids = t.children if t.kind == ADD else (t,)
        for k in kids:
            if k.kind == CONST:
                const_acc += k.value
                continue
            accumulate(*_coeff_core(k))
    parts = [(uid, c) for uid, c in coeffs.items() if c != 0]
    parts.sort()
    if not parts:
        return const(const_acc)
    # factor out a transcendental factor common to every term (exp never
    # vanishes, so this is unconditionally value-preserving); it lets the
    # quotient layer cancel exp factors and keep such webs exactly evaluable
    if const_acc == 0 and len(parts) > 1:
        common = _term_exp_factor(cores[parts[0][0]])
        if common is not None and all(
                _term_exp_factor(cores[uid]) is common for uid, _ in parts[1:]):
            stripped = [mul(const(c), _strip_factor(cores[uid], common))
                        for uid, c in parts]
            return mul(common, add(*stripped))
    out = [_scaled(cores[uid], c) for uid, c in parts]
    if const_acc != 0:
        out.append(const(const_acc))
    if len(out) == 1:
        return out[0]
    return _intern(ADD, tuple(out))


def mul(*factors) -> Expr:
    """n-ary product; flattens, folds constants, merges identical bases."""
    coeff = Fraction(1)
    bases: dict[int, Expr] = {}
    rat_exps: dict[int, Fraction] = {}
    sym_exps: dict[int, list[Expr]] = {}
    exp_args: list[Expr] = []
    stack = [as_expr(f) for f in factors]
    for f in stack:
        if f.kind == UNDEF:
            return _UNDEF
        kids = f.children if f.kind == MUL else (f,)
        for k in kids:
            if k.kind == UNDEF:
                return _UNDEF
            if k.kind == CONST:
                coeff *= k.value
                continue
            if k.kind == EXP:
                exp_args.append(k.children[0])
                continue
            if k.kind == POW and k.children[1].kind == CONST:
                base, e = k.children[0], k.children[1].value
            elif k.kind == POW:
                base, e = k.children[0], k.children[1]
            else:
                base, e = k, Fraction(1)
            bases[base.uid] = base
            if isinstance(e, Fraction):
                rat_exps[base.uid] = rat_exps.get(base.uid, Fraction(0)) + e
            else:
                sym_exps.setdefault(base.uid, []).append(e)
    out: list[Expr] = []
    reflatten = False
    for uid in sorted(bases):
        base = bases[uid]
        rq = rat_exps.get(uid, Fraction(0))
        syms = sym_exps.get(uid, [])
        if syms:
            total = add(const(rq), *syms) if rq else (
                syms[0] if len(syms) == 1 else add(*syms))
            f = pow_(base, total)
        elif rq == 0:
            continue
        elif rq == 1:
            f = base
        else:
            f = pow_(base, rq)
        if f.kind == UNDEF:
            return _UNDEF
        if f.kind == CONST:
            coeff *= f.value
        else:
            if f.kind in (MUL, EXP):
                # exponent merging can distribute a power over a product
                # (or collapse onto exp); run one more canonicalization pass
                reflatten = True
            out.append(f)
    if exp_args:
        f = exp_(add(*exp_args))
        if f.kind == CONST:
            coeff *= f.value
        else:
            out.append(f)
    if reflatten:
        return mul(const(coeff), *out)
    if coeff == 0 or not out:
        return const(coeff)
    out.sort(key=lambda n: n.uid)
    if coeff != 1:
        out.insert(0, const(coeff))
    if len(out) == 1:
        return out[0]
    return _intern(MUL, tuple(out))


def _integer_root(n: int, q: int) -> int | None:
    """Exact integer q-th root of n >= 0, or None (integer Newton)."""
    if n in (0, 1):
        return n
    if q == 2:
        r = math.isqrt(n)
        return r if r * r == n else None
    x = 1 << ((n.bit_length() + q - 1) // q)
    while True:
        y = ((q - 1) * x + n // x ** (q - 1)) // q
        if y >= x:
            break
        x = y
    return x if x ** q == n else None


def _exact_root(v: Fraction, q: int) -> Fraction | None:
    """Exact q-th root of a non-negative rational, or None."""
    num = _integer_root(v.numerator, q)
    if num is None:
        return None
    den = _integer_root(v.denominator, q)
    if den is None:
        return None
    return Fraction(num, den)


def pow_(base, exponent) -> Expr:
    base = as_expr(base)
    if isinstance(exponent, (int, Fraction)):
        exponent = const(exponent)
    exponent = as_expr(exponent)
    if base.kind == UNDEF or exponent.kind == UNDEF:
        return _UNDEF
    if exponent.kind == CONST:
        r = exponent.value
        if r == 0:
            return _ONE
        if r == 1:
            return base
        if base.kind == CONST:
            c = base.value
            if r.denominator == 1:
                if c == 0 and r < 0:
                    return _UNDEF
                return const(c ** int(r))
            if c == 0:
                return _ZERO if r > 0 else _UNDEF
            if c < 0:
                return _UNDEF  # real-valued: negative base, fractional power
            root = _exact_root(c, r.denominator)
            if root is not None:
                return const(root ** r.numerator)
            return _intern(POW, (base, exponent))
        if base.kind == EXP:
            return exp_(mul(exponent, base.children[0]))
        if r.denominator == 1:
            if base.kind == POW:
                inner_e = base.children[1]
                if inner_e.kind == CONST:
                    return pow_(base.children[0], inner_e.value * r)
                return pow_(base.children[0], mul(exponent, inner_e))
            if base.kind == MUL:
                return mul(*(pow_(c, r) for c in base.children))
        return _intern(POW, (base, exponent))
    # symbolic exponent
    if base.kind == EXP:
        return exp_(mul(exponent, base.children[0]))
    if base.kind == CONST and base.value == 1:
        return _ONE
    return _intern(POW, (base, exponent))


def exp_(u) -> Expr:
    u = as_expr(u)
    if u.kind == UNDEF:
        return _UNDEF
    if u.kind == CONST and u.value == 0:
        return _ONE
    if u.kind == LOG:
        return u.children[0]
    return _intern(EXP, (u,))


def log_(u) -> Expr:
    u = as_expr(u)
    if u.kind == UNDEF:
        return _UNDEF
    if u.kind == CONST:
        if u.value == 1:
            return _ZERO
        if u.value <= 0:
            return _UNDEF
    if u.kind == EXP:
        return u.children[0]
    return _intern(LOG, (u,))


def div(a, b) -> Expr:
    return mul(a, pow_(b, -1))


def neg(a) -> Expr:
    return mul(const(-1), a)


def sub(a, b) -> Expr:
    return add(a, neg(b))


def sqrt(a) -> Expr:
    return pow_(a, _HALF)


def topo_order(e: Expr) -> list[Expr]:
    """Reachable nodes, children strictly before parents."""
    order: list[Expr] = []
    done: set[int] = set()
    stack = [e]
    while stack:
        node = stack[-1]
        if node.uid in done:
            stack.pop()
            continue
        pending = [c for c in node.children if c.uid not in done]
        if pending:
            stack.extend(pending)
        else:
            done.add(node.uid)
            order.append(node)
            stack.pop()
    return order


def dag_size(e: Expr) -> int:
    return len(topo_order(e))


_symbols_cache: dict[int, frozenset] = {}


def free_symbols(e: Expr) -> frozenset[str]:
    with _lock:
        hit = _symbols_cache.get(e.uid)
    if hit is not None:
        return hit
    for n in topo_order(e):
        if n.uid in _symbols_cache:
            continue
        if n.kind in (VAR, PARAM):
            s = frozenset((n.name,))
        elif n.children:
            s = frozenset().union(*(_symbols_cache[c.uid] for c in n.children))
        else:
            s = frozenset()
        with _lock:
            _symbols_cache[n.uid] = s
    return _symbols_cache[e.uid]


def is_exactly_evaluable(e: Expr) -> bool:
    """True when the DAG is free of exp/log and non-integer powers, so that
    evaluation at rational bindings stays inside the rationals."""
    return not (e.mask & _MASK_TRANSCENDENTAL)


def simplify(e: Expr) -> Expr:
    """Rebuild bottom-up through the canonicalizing constructors.

    Value-preserving where the input is defined; idempotent; never grows
    the DAG.  Division by a constant zero folds to an error node that
    evaluation reports as a singular sample.
    """
    rebuilt: dict[int, Expr] = {}
    for n in topo_order(e):
        if not n.children:
            rebuilt[n.uid] = n
            continue
        kids = tuple(rebuilt[c.uid] for c in n.children)
        if n.kind == ADD:
            rebuilt[n.uid] = add(*kids)
        elif n.kind == MUL:
            rebuilt[n.uid] = mul(*kids)
        elif n.kind == POW:
            rebuilt[n.uid] = pow_(kids[0], kids[1])
        elif n.kind == EXP:
            rebuilt[n.uid] = exp_(kids[0])
        elif n.kind == LOG:
            rebuilt[n.uid] = log_(kids[0])
        else:
            rebuilt[n.uid] = n
    return rebuilt[e.uid]


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables/parameters by expressions (simultaneously)."""
    out: dict[int, Expr] = {}
    for n in topo_order(e):
        if n.kind in (VAR, PARAM) and n.name in mapping:
            out[n.uid] = as_expr(mapping[n.name])
        elif not n.children:
            out[n.uid] = n
        else:
            kids = tuple(out[c.uid] for c in n.children)
            if n.kind == ADD:
                out[n.uid] = add(*kids)
            elif n.kind == MUL:
                out[n.uid] = mul(*kids)
            elif n.kind == POW:
                out[n.uid] = pow_(kids[0], kids[1])
            elif n.kind == EXP:
                out[n.uid] = exp_(kids[0])
            elif n.kind == LOG:
                out[n.uid] = log_(kids[0])
            else:
                out[n.uid] = n
    return out[e.uid]


# ---------------------------------------------------------------------------
# differentiation


def derive(e: Expr, v: str) -> Expr:
    """Symbolic partial derivative with respect to a variable or parameter.

    For v in {'x', 'y'} parameters are treated as constants; differentiating
    by a parameter name treats x and y as constants instead.  Results are
    memoized per (node, symbol), so repeated differentiation of shared
    subterms stays polynomial in the DAG size.
    """
    with _lock:
        hit = _derivative_cache.get((e.uid, v))
    if hit is not None:
        return hit
    if v == "x":
        vmask = _MASK_X
    elif v == "y":
        vmask = _MASK_Y
    elif re.fullmatch(r"[a-z][a-z0-9_]*", v or ""):
        vmask = _MASK_PARAM
    else:
        raise ExprError(f"cannot differentiate by {v!r}")
    order = topo_order(e)
    for n in order:
        key = (n.uid, v)
        with _lock:
            if key in _derivative_cache:
                continue
        if n.kind == UNDEF:
            d = _UNDEF
        elif not (n.mask & vmask):
            d = _ZERO
        elif n.kind in (VAR, PARAM):
            d = _ONE if n.name == v else _ZERO
        elif n.kind == ADD:
            d = add(*(_derivative_cache[(c.uid, v)] for c in n.children))
        elif n.kind == MUL:
            terms = []
            kids = n.children
            for i, c in enumerate(kids):
                dc = _derivative_cache[(c.uid, v)]
                if dc.is_zero:
                    continue
                terms.append(mul(dc, *(k for j, k in enumerate(kids) if j != i)))
            d = add(*terms) if terms else _ZERO
        elif n.kind == POW:
            b, ex = n.children
            db = _derivative_cache[(b.uid, v)]
            if not (ex.mask & vmask):
                # exponent constant with respect to v: power rule
                d = mul(ex, pow_(b, sub(ex, _ONE)), db)
            else:
                dex = _derivative_cache[(ex.uid, v)]
                d = mul(n, add(mul(dex, log_(b)), mul(ex, div(db, b))))
        elif n.kind == EXP:
            d = mul(n, _derivative_cache[(n.children[0].uid, v)])
        elif n.kind == LOG:
            u = n.children[0]
            d = div(_derivative_cache[(u.uid, v)], u)
        else:  # const, param, var of the other name
            d = _ZERO
        with _lock:
            _derivative_cache[key] = d
    return _derivative_cache[(e.uid, v)]


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalContext:
    """Bindings plus arithmetic mode.

    Every variable and parameter occurring in the expression must be bound;
    a missing binding raises, never defaults.  ``mode`` is ``"exact"``
    (Fraction arithmetic) or ``"float"`` (native doubles for
    precision <= 53 bits, mpmath above).
    """
    bindings: Mapping[str, Fraction]
    mode: str = "exact"
    precision: int = 256

    def __post_init__(self):
        if self.mode not in ("exact", "float"):
            raise ExprError(f"unknown arithmetic mode {self.mode!r}")
        clean = {}
        for k, bv in dict(self.bindings).items():
            if isinstance(bv, (float, mpmath.mpf)):
                if self.mode == "exact":
                    raise ExprError("exact mode requires rational bindings")
                clean[k] = bv
            else:
                clean[k] = Fraction(bv)
        object.__setattr__(self, "bindings", clean)


def evaluate(e: Expr, ctx: EvalContext):
    """Evaluate at the context bindings.  Exact mode returns a Fraction."""
    return evaluate_scaled(e, ctx)[0]


def evaluate_scaled(e: Expr, ctx: EvalContext):
    """Evaluate and report the magnitude scale max(1, |intermediates|).

    The scale is what a sound vanishing test compares the final value
    against: a tiny result reached through huge intermediates carries fewer
    trustworthy bits.
    """
    missing = free_symbols(e) - set(ctx.bindings)
    if missing:
        raise MissingBindingError(
            f"no binding for {', '.join(sorted(missing))}")
    if ctx.mode == "exact":
        return _eval_exact(e, ctx.bindings), None
    if ctx.precision <= 53:
        return _eval_double(e, ctx.bindings)
    return _eval_mpf(e, ctx.bindings, ctx.precision)


def _eval_exact(e: Expr, bindings) -> Fraction:
    vals: dict[int, Fraction] = {}
    for n in topo_order(e):
        k = n.kind
        if k == CONST:
            v = n.value
        elif k in (VAR, PARAM):
            v = Fraction(bindings[n.name])
        elif k == ADD:
            v = sum((vals[c.uid] for c in n.children), Fraction(0))
        elif k == MUL:
            v = Fraction(1)
            for c in n.children:
                v *= vals[c.uid]
        elif k == POW:
            b = vals[n.children[0].uid]
            ex = vals[n.children[1].uid]
            if ex.denominator == 1:
                if b == 0 and ex < 0:
                    raise SingularSampleError("zero base with negative power")
                v = b ** int(ex)
            else:
                if b < 0:
                    raise DomainEvalError("negative base with fractional power")
                if b == 0:
                    v = Fraction(0)
                else:
                    root = _exact_root(b, ex.denominator)
                    if root is None:
                        raise ExactnessError(
                            "irrational root; exact mode refused")
                    v = root ** ex.numerator
        elif k == EXP:
            u = vals[n.children[0].uid]
            if u != 0:
                raise ExactnessError("exp of nonzero value; exact mode refused")
            v = Fraction(1)
        elif k == LOG:
            u = vals[n.children[0].uid]
            if u <= 0:
                raise DomainEvalError("log of non-positive value")
            if u != 1:
                raise ExactnessError("log of value != 1; exact mode refused")
            v = Fraction(0)
        else:
            raise SingularSampleError("undefined value (division by constant zero)")
        vals[n.uid] = v
    return vals[e.uid]


def _eval_double(e: Expr, bindings):
    vals: dict[int, float] = {}
    scale = 1.0
    for n in topo_order(e):
        k = n.kind
        try:
            if k == CONST:
                v = float(n.value)
            elif k in (VAR, PARAM):
                v = float(bindings[n.name])
            elif k == ADD:
                v = math.fsum(vals[c.uid] for c in n.children)
            elif k == MUL:
                v = 1.0
                for c in n.children:
                    v *= vals[c.uid]
            elif k == POW:
                b = vals[n.children[0].uid]
                ex = vals[n.children[1].uid]
                if ex == int(ex):
                    if b == 0.0 and ex < 0:
                        raise SingularSampleError("zero base with negative power")
                    v = b ** int(ex)
                elif b < 0:
                    raise DomainEvalError("negative base with fractional power")
                elif b == 0.0:
                    if ex < 0:
                        raise SingularSampleError("zero base with negative power")
                    v = 0.0
                else:
                    v = b ** ex
            elif k == EXP:
                v = math.exp(vals[n.children[0].uid])
            elif k == LOG:
                u = vals[n.children[0].uid]
                if u <= 0:
                    raise DomainEvalError("log of non-positive value")
                v = math.log(u)
            else:
                raise SingularSampleError(
                    "undefined value (division by constant zero)")
        except OverflowError:
            raise DomainEvalError("overflow in double evaluation") from None
        if not math.isfinite(v):
            raise DomainEvalError("overflow in double evaluation")
        a = abs(v)
        if a > scale:
            scale = a
        vals[n.uid] = v
    return vals[e.uid], scale


def _eval_mpf(e: Expr, bindings, precision: int):
    with mpmath.workprec(precision):
        one = mpmath.mpf(1)
        vals: dict[int, mpmath.mpf] = {}
        scale = one

        def to_mpf(q) -> mpmath.mpf:
            if isinstance(q, Fraction):
                return mpmath.mpf(q.numerator) / q.denominator
            return mpmath.mpf(q)

        for n in topo_order(e):
            k = n.kind
            if k == CONST:
                v = to_mpf(n.value)
            elif k in (VAR, PARAM):
                v = to_mpf(bindings[n.name])
            elif k == ADD:
                v = mpmath.mpf(0)
                for c in n.children:
                    v += vals[c.uid]
            elif k == MUL:
                v = one
                for c in n.children:
                    v *= vals[c.uid]
            elif k == POW:
                b = vals[n.children[0].uid]
                ex_node = n.children[1]
                if ex_node.kind == CONST and ex_node.value.denominator == 1:
                    if b == 0 and ex_node.value < 0:
                        raise SingularSampleError("zero base with negative power")
                    v = b ** int(ex_node.value)
                else:
                    ex = vals[ex_node.uid]
                    if b < 0:
                        raise DomainEvalError("negative base with fractional power")
                    if b == 0:
                        if ex <= 0:
                            raise SingularSampleError("zero base with non-positive power")
                        v = mpmath.mpf(0)
                    else:
                        v = mpmath.power(b, ex)
            elif k == EXP:
                v = mpmath.exp(vals[n.children[0].uid])
            elif k == LOG:
                u = vals[n.children[0].uid]
                if u <= 0:
                    raise DomainEvalError("log of non-positive value")
                v = mpmath.log(u)
            else:
                raise SingularSampleError("undefined value (division by constant zero)")
            if mpmath.isinf(v) or mpmath.isnan(v):
                raise DomainEvalError("non-finite value in evaluation")
            a = abs(v)
            if a > scale:
                scale = a
            vals[n.uid] = v
        return vals[e.uid], scale


def grid_function(e: Expr, params: Mapping[str, Fraction] | None = None) -> Callable:
    """Compile to a vectorized double-precision function of (x, y) arrays.

    Singularities surface as nan/inf entries, which callers must check for;
    the numeric layer uses this for whole-grid coefficient evaluation.
    """
    import numpy as np

    params = {k: float(v) for k, v in (params or {}).items()}
    missing = free_symbols(e) - {"x", "y"} - set(params)
    if missing:
        raise MissingBindingError(f"no binding for {', '.join(sorted(missing))}")
    order = topo_order(e)
    if any(n.kind == UNDEF for n in order):
        raise SingularSampleError("undefined value (division by constant zero)")

    def fn(xg, yg):
        xg = np.asarray(xg, dtype=float)
        yg = np.asarray(yg, dtype=float)
        vals: dict[int, object] = {}
        with np.errstate(all="ignore"):
            for n in order:
                k = n.kind
                if k == CONST:
                    v = float(n.value)
                elif k == VAR:
                    v = xg if n.name == "x" else yg
                elif k == PARAM:
                    v = params[n.name]
                elif k == ADD:
                    v = vals[n.children[0].uid]
                    for c in n.children[1:]:
                        v = v + vals[c.uid]
                elif k == MUL:
                    v = vals[n.children[0].uid]
                    for c in n.children[1:]:
                        v = v * vals[c.uid]
                elif k == POW:
                    b = vals[n.children[0].uid]
                    ex_node = n.children[1]
                    if ex_node.kind == CONST and ex_node.value.denominator == 1:
                        p = int(ex_node.value)
                        v = np.power(b, p) if p >= 0 else 1.0 / np.power(b, -p)
                    else:
                        v = np.power(b, vals[ex_node.uid])
                elif k == EXP:
                    v = np.exp(vals[n.children[0].uid])
                else:  # LOG
                    v = np.log(vals[n.children[0].uid])
                vals[n.uid] = v
        out = vals[e.uid]
        return np.broadcast_to(np.asarray(out, dtype=float),
                               np.broadcast_shapes(xg.shape, yg.shape)).copy()

    return fn


# ---------------------------------------------------------------------------
# parsing

_RESERVED = {"sqrt", "exp", "log"}
_TOKEN_RE = re.compile(r"\s*(?:(?P<number>\d+(?:\.\d+)?)"
                       r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
                       r"|(?P<op>[-+*/^()]))")


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.lastgroup is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise ParseError(f"unexpected character {stripped[0]!r}", at)
        kind = m.lastgroup
        tok_pos = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), tok_pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_op(self, op: str):
        t = self.peek()
        if t.kind != "op" or t.text != op:
            raise ParseError(f"expected {op!r}, found {t.text!r}" if t.text
                             else f"expected {op!r}, found end of input", t.pos)
        return self.next()

    def parse(self) -> Expr:
        if self.peek().kind == "eof" and not self.text.strip():
            raise ParseError("empty input", 0)
        e = self.expr()
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(f"unexpected token {t.text!r}", t.pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "+-":
                self.next()
                rhs = self.term()
                e = add(e, rhs) if t.text == "+" else sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "*/":
                self.next()
                rhs = self.unary()
                e = mul(e, rhs) if t.text == "*" else div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.next()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.next()
            return pow_(base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.next()
        if t.kind == "number":
            return const(Fraction(t.text))
        if t.kind == "ident":
            name = t.text
            if not re.fullmatch(r"[a-z][a-z0-9_]*", name):
                raise ParseError(f"invalid identifier {name!r} "
                                 "(lowercase letters, digits, underscore)", t.pos)
            nxt = self.peek()
            applied = nxt.kind == "op" and nxt.text == "("
            if name in _RESERVED:
                if not applied:
                    raise ParseError(f"function {name!r} needs an argument list",
                                     t.pos)
                self.next()
                arg = self.expr()
                self.expect_op(")")
                return {"sqrt": sqrt, "exp": exp_, "log": log_}[name](arg)
            if applied:
                raise ParseError(f"unknown function {name!r}", t.pos)
            if name in ("x", "y"):
                return var(name)
            return param(name)
        if t.kind == "op" and t.text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if t.kind == "eof":
            raise ParseError("unexpected end of input", t.pos)
        raise ParseError(f"unexpected token {t.text!r}", t.pos)


def parse(text: str) -> Expr:
    """Parse the expression grammar (explicit '*', functions sqrt/exp/log,
    decimals become exact rationals, lowercase identifiers other than x/y
    are free parameters)."""
    if not isinstance(text, str):
        raise TypeError("parse expects a string")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def _wrap(s: str, prec: int, need: int) -> str:
    return f"({s})" if prec < need else s


def format_expr(e: Expr) -> str:
    """Deterministic text form; `parse(format_expr(e))` evaluates equal to e."""
    strs: dict[int, tuple[str, int]] = {}
    for n in topo_order(e):
        strs[n.uid] = _fmt_node(n, strs)
    return strs[e.uid][0]


def _fmt_const(v: Fraction) -> tuple[str, int]:
    if v.denominator == 1:
        return str(v), _PREC_ATOM if v >= 0 else _PREC_ADD
    return str(v), _PREC_MUL if v >= 0 else _PREC_ADD


def _fmt_node(n: Expr, strs) -> tuple[str, int]:
    k = n.kind
    if k == CONST:
        return _fmt_const(n.value)
    if k in (VAR, PARAM):
        return n.name, _PREC_ATOM
    if k == UNDEF:
        return "1/0", _PREC_MUL
    if k == EXP:
        return f"exp({strs[n.children[0].uid][0]})", _PREC_ATOM
    if k == LOG:
        return f"log({strs[n.children[0].uid][0]})", _PREC_ATOM
    if k == ADD:
        out = ""
        for i, c in enumerate(n.children):
            s, p = strs[c.uid]
            s = _wrap(s, p, _PREC_ADD)
            if i == 0:
                out = s
            elif s.startswith("-"):
                out += " - " + s[1:]
            else:
                out += " + " + s
        return out, _PREC_ADD
    if k == POW:
        return _fmt_pow(n, strs)
    if k == MUL:
        return _fmt_mul(n, strs)
    raise ExprError(f"unknown node kind {k!r}")


def _fmt_pow(n: Expr, strs) -> tuple[str, int]:
    base, ex = n.children
    bs, bp = strs[base.uid]
    if ex.kind == CONST:
        r = ex.value
        if r == _HALF:
            return f"sqrt({bs})", _PREC_ATOM
        if r < 0:
            inner, _ = _fmt_pow_positive(base, -r, strs)
            return f"1/{inner}", _PREC_MUL
        return _fmt_pow_positive(base, r, strs)
    bs = _wrap(bs, bp, _PREC_ATOM)
    es, ep = strs[ex.uid]
    es = es if ep == _PREC_ATOM else f"({es})"
    return f"{bs}^{es}", _PREC_POW


def _fmt_pow_positive(base: Expr, r: Fraction, strs) -> tuple[str, int]:
    bs, bp = strs[base.uid]
    if r == _HALF:
        return f"sqrt({bs})", _PREC_ATOM
    bs = _wrap(bs, bp, _PREC_ATOM)
    if r == 1:
        return bs, _PREC_ATOM
    es = str(r) if r.denominator == 1 else f"({r})"
    return f"{bs}^{es}", _PREC_POW


def _fmt_mul(n: Expr, strs) -> tuple[str, int]:
    coeff = Fraction(1)
    num_parts: list[str] = []
    den_parts: list[str] = []
    for c in n.children:
        if c.kind == CONST:
            coeff *= c.value
            continue
        if c.kind == POW and c.children[1].kind == CONST and c.children[1].value < 0:
            s, _ = _fmt_pow_positive(c.children[0], -c.children[1].value, strs)
            den_parts.append(s)
            continue
        s, p = strs[c.uid]
        num_parts.append(_wrap(s, p, _PREC_MUL))
    sign = "-" if coeff < 0 else ""
    coeff = abs(coeff)
    if coeff.numerator != 1 or not num_parts:
        num_parts.insert(0, str(coeff.numerator))
    if coeff.denominator != 1:
        den_parts.insert(0, str(coeff.denominator))
    out = "*".join(num_parts)
    if den_parts:
        den = "*".join(den_parts)
        out += f"/({den})" if len(den_parts) > 1 else f"/{den}"
    return sign + out, _PREC_ADD if sign else _PREC_MUL
