"""Exact symbolic expression kernel over jet coordinates.

Expressions are immutable trees over: exact rational constants, named
parameters, jet variables (z, z1, z2, ..., zt, z1t, ...), formal function
atoms with composite arguments, and a handful of builtin functions
(sin, cos, sinh, cosh, exp).

``normalize`` brings any expression to a canonical rational-function form:
expanded numerator and denominator polynomials with exact rational
coefficients, deterministic graded-lex monomial ordering, reduced by the
side relations and function rewrite rules carried by an explicit
``Context``.  Equality of normalized trees is structural equality, so
"this residual is identically zero" is a decidable check.

No global registries: all rewrite data travels inside the Context.
"""

from __future__ import annotations

import math
from fractions import Fraction

__all__ = [
    "Expr", "Rat", "Param", "Jet", "Func", "Builtin",
    "Add", "Mul", "Pow", "Div",
    "Context", "DEFAULT_CONTEXT",
    "ExprError", "NormalizationError", "EvalError",
    "UnsupportedDerivative", "CyclicBindingError", "DivisionByZero",
    "normalize", "is_zero", "partial", "total_dx", "total_dt",
    "substitute", "eval_numeric", "format_expr",
    "rat", "param", "jet", "z", "zt", "fn", "builtin",
    "BUILTINS",
]

BUILTINS = ("sin", "cos", "sinh", "cosh", "exp")


class ExprError(Exception):
    pass


class NormalizationError(ExprError):
    pass


class DivisionByZero(NormalizationError):
    pass


class EvalError(ExprError):
    pass


class UnsupportedDerivative(ExprError):
    """A second-level t-derivative (z_{kt} differentiated again in t)."""


class CyclicBindingError(ExprError):
    pass


# ---------------------------------------------------------------------------
# Expression trees


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add((self, _coerce(other)))

    def __radd__(self, other):
        return Add((_coerce(other), self))

    def __sub__(self, other):
        return Add((self, Mul((Rat(Fraction(-1)), _coerce(other)))))

    def __rsub__(self, other):
        return Add((_coerce(other), Mul((Rat(Fraction(-1)), self))))

    def __mul__(self, other):
        return Mul((self, _coerce(other)))

    def __rmul__(self, other):
        return Mul((_coerce(other), self))

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise ExprError("only integer exponents are supported")
        return Pow(self, k)

    def __neg__(self):
        return Mul((Rat(Fraction(-1)), self))

    def __repr__(self):
        return f"<{format_expr(self)}>"

    def __str__(self):
        return format_expr(self)


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Rat(Fraction(x))
    raise ExprError(f"cannot coerce {x!r} to Expr (floats are not allowed)")


class Rat(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        if isinstance(value, float):
            raise ExprError("floating point is confined to eval_numeric")
        object.__setattr__(self, "value", Fraction(value))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return isinstance(other, Rat) and self.value == other.value

    def __hash__(self):
        return hash(("Rat", self.value))


class Param(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        object.__setattr__(self, "name", name)

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return isinstance(other, Param) and self.name == other.name

    def __hash__(self):
        return hash(("Param", self.name))


class Jet(Expr):
    """k-th x-derivative of z, or the t-derivative thereof."""

    __slots__ = ("order", "t")

    def __init__(self, order, t=False):
        if order < 0:
            raise ExprError("jet order must be nonnegative")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "t", bool(t))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    @property
    def display(self):
        body = "z" if self.order == 0 else f"z{self.order}"
        return body + ("t" if self.t else "")

    def __eq__(self, other):
        return isinstance(other, Jet) and (self.order, self.t) == (other.order, other.t)

    def __hash__(self):
        return hash(("Jet", self.order, self.t))


class Func(Expr):
    """Formal differentiable function applied to composite arguments.

    ``didx`` is the multi-index of partial-derivative orders, one slot per
    argument.  Two atoms are identical iff name, didx and normalized
    arguments agree.
    """

    __slots__ = ("name", "args", "didx")

    def __init__(self, name, args, didx=None):
        args = tuple(_coerce(a) for a in args)
        if didx is None:
            didx = (0,) * len(args)
        didx = tuple(int(d) for d in didx)
        if len(didx) != len(args):
            raise ExprError("derivative multi-index must match argument count")
        if any(d < 0 for d in didx):
            raise ExprError("derivative orders must be nonnegative")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "didx", didx)

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return (isinstance(other, Func)
                and self.name == other.name
                and self.didx == other.didx
                and self.args == other.args)

    def __hash__(self):
        return hash(("Func", self.name, self.didx, self.args))


class Builtin(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name, arg):
        if name not in BUILTINS:
            raise ExprError(f"unknown builtin {name!r}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "arg", _coerce(arg))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return isinstance(other, Builtin) and (self.name, self.arg) == (other.name, other.arg)

    def __hash__(self):
        return hash(("Builtin", self.name, self.arg))


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms):
        object.__setattr__(self, "terms", tuple(_coerce(t) for t in terms))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return isinstance(other, Add) and self.terms == other.terms

    def __hash__(self):
        return hash(("Add", self.terms))


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors):
        object.__setattr__(self, "factors", tuple(_coerce(f) for f in factors))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return isinstance(other, Mul) and self.factors == other.factors

    def __hash__(self):
        return hash(("Mul", self.factors))


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base, exp):
        object.__setattr__(self, "base", _coerce(base))
        object.__setattr__(self, "exp", int(exp))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return isinstance(other, Pow) and (self.base, self.exp) == (other.base, other.exp)

    def __hash__(self):
        return hash(("Pow", self.base, self.exp))


class Div(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num, den):
        object.__setattr__(self, "num", _coerce(num))
        object.__setattr__(self, "den", _coerce(den))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return isinstance(other, Div) and (self.num, self.den) == (other.num, other.den)

    def __hash__(self):
        return hash(("Div", self.num, self.den))


# convenience constructors

def rat(p, q=1) -> Expr:
    return Rat(Fraction(p, q))


def param(name) -> Param:
    return Param(name)


def jet(order, t=False) -> Jet:
    return Jet(order, t)


def z(order=0) -> Jet:
    return Jet(order, False)


def zt(order=0) -> Jet:
    return Jet(order, True)


def fn(name, *args, didx=None) -> Func:
    return Func(name, args, didx)


def builtin(name, arg) -> Builtin:
    return Builtin(name, arg)


ZERO = Rat(Fraction(0))
ONE = Rat(Fraction(1))


# ---------------------------------------------------------------------------
# Context


class Context:
    """Rewrite data used by normalization.

    side_relations: name -> square (Expr); even powers of the named symbol
        are replaced by powers of the square.
    ode_rules: function name -> (order n, rhs Expr); rhs is written in the
        placeholder ``u`` and expresses the n-th derivative as a linear
        combination of lower-order derivatives with parameter coefficients.
    """

    def __init__(self, max_jet_order=8, side_relations=None, ode_rules=None,
                 trig_closure=True):
        self.max_jet_order = max_jet_order
        self.side_relations = dict(side_relations or {})
        self.ode_rules = dict(ode_rules or {})
        self.trig_closure = trig_closure

    def with_side_relation(self, name, square) -> "Context":
        rels = dict(self.side_relations)
        rels[name] = _coerce(square)
        return Context(self.max_jet_order, rels, self.ode_rules, self.trig_closure)

    def with_ode_rule(self, fname, order, rhs) -> "Context":
        rules = dict(self.ode_rules)
        rules[fname] = (int(order), _coerce(rhs))
        return Context(self.max_jet_order, self.side_relations, rules, self.trig_closure)

    def with_max_jet_order(self, n) -> "Context":
        return Context(n, self.side_relations, self.ode_rules, self.trig_closure)

    def merged(self, other: "Context") -> "Context":
        rels = dict(self.side_relations)
        rels.update(other.side_relations)
        rules = dict(self.ode_rules)
        rules.update(other.ode_rules)
        return Context(max(self.max_jet_order, other.max_jet_order), rels, rules,
                       self.trig_closure and other.trig_closure)


DEFAULT_CONTEXT = Context()


# ---------------------------------------------------------------------------
# Polynomial machinery.
#
# A polynomial is a dict {monomial: Fraction}; a monomial is a tuple of
# (atom, exponent) pairs sorted by the atom's canonical key.  Atoms are
# canonical leaf Exprs (Param, Jet, Func, Builtin with normalized args).


def _atom_key(a: Expr):
    # precedence: jets above function atoms above parameters
    if isinstance(a, Jet):
        return (2, a.t, a.order, "")
    if isinstance(a, Func):
        return (1, False, a.didx[0] if a.didx else 0,
                a.name + "|" + ",".join(str(d) for d in a.didx) + "|"
                + ";".join(format_expr(x) for x in a.args))
    if isinstance(a, Builtin):
        return (1, False, 0, a.name + "|" + format_expr(a.arg))
    if isinstance(a, Param):
        return (0, False, 0, a.name)
    raise NormalizationError(f"not an atom: {a!r}")


_P_ONE = {(): Fraction(1)}
_P_ZERO = {}


def _p_add(p, q):
    r = dict(p)
    for m, c in q.items():
        c2 = r.get(m, Fraction(0)) + c
        if c2:
            r[m] = c2
        elif m in r:
            del r[m]
    return r


def _p_neg(p):
    return {m: -c for m, c in p.items()}


def _p_scale(p, s):
    if not s:
        return {}
    return {m: c * s for m, c in p.items()}


def _m_mul(m1, m2):
    d = dict(m1)
    for a, e in m2:
        d[a] = d.get(a, 0) + e
    items = [(a, e) for a, e in d.items() if e != 0]
    items.sort(key=lambda ae: _atom_key(ae[0]), reverse=True)
    return tuple(items)


def _p_mul(p, q):
    r = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _m_mul(m1, m2)
            c = r.get(m, Fraction(0)) + c1 * c2
            if c:
                r[m] = c
            elif m in r:
                del r[m]
    return r


def _p_pow(p, k):
    r = dict(_P_ONE)
    b = p
    while k:
        if k & 1:
            r = _p_mul(r, b)
        b = _p_mul(b, b) if k > 1 else b
        k >>= 1
    return r


def _p_atom(a):
    return {((a, 1),): Fraction(1)}


def _mono_key(m):
    deg = sum(e for _, e in m)
    return (deg, tuple((_atom_key(a), e) for a, e in m))


def _p_sorted(p):
    return sorted(p.items(), key=lambda mc: _mono_key(mc[0]), reverse=True)


def _p_leading_coeff(p):
    if not p:
        return Fraction(0)
    return _p_sorted(p)[0][1]


# ---------------------------------------------------------------------------
# Normalization


def normalize(e: Expr, ctx: Context = DEFAULT_CONTEXT) -> Expr:
    num, den = _ratfunc(_coerce(e), ctx)
    return _emit(num, den)


def is_zero(e: Expr, ctx: Context = DEFAULT_CONTEXT) -> bool:
    return normalize(e, ctx) == ZERO


def _ratfunc(e: Expr, ctx: Context):
    num, den = _ratfunc_raw(e, ctx)
    num = _reduce_poly(num, ctx)
    den = _reduce_poly(den, ctx)
    if not den:
        raise DivisionByZero("division by syntactically zero expression")
    return num, den


def _ratfunc_raw(e: Expr, ctx: Context):
    if isinstance(e, Rat):
        return ({(): e.value} if e.value else {}), dict(_P_ONE)
    if isinstance(e, Param):
        return _p_atom(e), dict(_P_ONE)
    if isinstance(e, Jet):
        if e.order > ctx.max_jet_order:
            raise NormalizationError(
                f"jet order {e.order} exceeds maximum {ctx.max_jet_order}")
        return _p_atom(e), dict(_P_ONE)
    if isinstance(e, Func):
        args = tuple(normalize(a, ctx) for a in e.args)
        return _p_atom(Func(e.name, args, e.didx)), dict(_P_ONE)
    if isinstance(e, Builtin):
        arg = normalize(e.arg, ctx)
        return _p_atom(Builtin(e.name, arg)), dict(_P_ONE)
    if isinstance(e, Add):
        num, den = {}, dict(_P_ONE)
        for t in e.terms:
            tn, td = _ratfunc_raw(t, ctx)
            num = _p_add(_p_mul(num, td), _p_mul(tn, den))
            den = _p_mul(den, td)
        return num, den
    if isinstance(e, Mul):
        num, den = dict(_P_ONE), dict(_P_ONE)
        for f in e.factors:
            fn_, fd = _ratfunc_raw(f, ctx)
            num = _p_mul(num, fn_)
            den = _p_mul(den, fd)
        return num, den
    if isinstance(e, Pow):
        bn, bd = _ratfunc_raw(e.base, ctx)
        k = e.exp
        if k >= 0:
            return _p_pow(bn, k), _p_pow(bd, k)
        bn = _reduce_poly(bn, ctx)
        if not bn:
            raise DivisionByZero("division by syntactically zero expression")
        return _p_pow(bd, -k), _p_pow(bn, -k)
    if isinstance(e, Div):
        nn, nd = _ratfunc_raw(e.num, ctx)
        dn, dd = _ratfunc_raw(e.den, ctx)
        dn = _reduce_poly(dn, ctx)
        if not dn:
            raise DivisionByZero("division by syntactically zero expression")
        return _p_mul(nn, dd), _p_mul(nd, dn)
    raise NormalizationError(f"unknown node {e!r}")


def _reduce_poly(p, ctx: Context):
    while True:
        target = None
        for m in p:
            for a, e in m:
                if _reducible(a, e, ctx):
                    target = (m, a, e)
                    break
            if target:
                break
        if target is None:
            return p
        m, a, e = target
        c = p[m]
        rest = tuple((b, k) for b, k in m if b is not a and b != a)
        repl = _replacement_poly(a, e, ctx)
        p = dict(p)
        del p[m]
        contrib = _p_mul({rest: c}, repl)
        p = _p_add(p, contrib)


def _reducible(a, e, ctx: Context):
    if isinstance(a, Param) and e >= 2 and a.name in ctx.side_relations:
        return True
    if ctx.trig_closure and isinstance(a, Builtin) and e >= 2 and a.name in ("sin", "cosh"):
        return True
    if (isinstance(a, Func) and len(a.args) == 1 and a.name in ctx.ode_rules
            and a.didx[0] >= ctx.ode_rules[a.name][0]):
        return True
    return False


def _replacement_poly(a, e, ctx: Context):
    """Polynomial replacing atom^e for a reducible (atom, exponent)."""
    if isinstance(a, Param):
        square = ctx.side_relations[a.name]
        sq_n, sq_d = _ratfunc(square, ctx)
        if sq_d != _P_ONE and list(sq_d) != [()]:
            raise NormalizationError(
                f"side relation for {a.name} must square to a polynomial")
        sq = _p_scale(sq_n, Fraction(1) / sq_d[()])
        rem = _p_atom(a) if e % 2 else dict(_P_ONE)
        return _p_mul(rem, _p_pow(sq, e // 2))
    if isinstance(a, Builtin):
        if a.name == "sin":
            # sin(u)^2 -> 1 - cos(u)^2
            co = _p_atom(Builtin("cos", a.arg))
            sq = _p_add(dict(_P_ONE), _p_neg(_p_mul(co, co)))
        else:  # cosh
            sh = _p_atom(Builtin("sinh", a.arg))
            sq = _p_add(dict(_P_ONE), _p_mul(sh, sh))
        rem = _p_atom(a) if e % 2 else dict(_P_ONE)
        return _p_mul(rem, _p_pow(sq, e // 2))
    if isinstance(a, Func):
        n, rhs = ctx.ode_rules[a.name]
        shift = a.didx[0] - n
        repl = _apply_ode_template(a.name, rhs, a.args[0], shift, ctx)
        return _p_pow(repl, e)
    raise NormalizationError("unreachable")


def _apply_ode_template(fname, rhs, arg, shift, ctx: Context):
    """Instantiate an ode_rule rhs: u -> arg, f^{(j)}(u) -> f^{(j+shift)}(arg)."""
    u = Param("u")

    def walk(t):
        if isinstance(t, Param):
            if t == u:
                raise NormalizationError(
                    f"ode_rule for {fname} must not contain the bare placeholder")
            return t
        if isinstance(t, Func):
            if t.name == fname:
                if len(t.args) != 1 or t.args[0] != u:
                    raise NormalizationError(
                        f"ode_rule for {fname}: expected {fname}(u) atoms")
                return Func(fname, (arg,), (t.didx[0] + shift,))
            return Func(t.name, tuple(walk(x) for x in t.args), t.didx)
        if isinstance(t, Builtin):
            return Builtin(t.name, walk(t.arg))
        if isinstance(t, Add):
            return Add(tuple(walk(x) for x in t.terms))
        if isinstance(t, Mul):
            return Mul(tuple(walk(x) for x in t.factors))
        if isinstance(t, Pow):
            return Pow(walk(t.base), t.exp)
        if isinstance(t, Div):
            return Div(walk(t.num), walk(t.den))
        return t

    inst = walk(rhs)
    num, den = _ratfunc(inst, ctx)
    if list(den) != [()]:
        raise NormalizationError(f"ode_rule for {fname} must be polynomial")
    return _p_scale(num, Fraction(1) / den[()])


def _content(p):
    """Atom-wise minimum exponent over all monomials (the monomial GCD)."""
    it = iter(p)
    first = dict(next(it))
    for m in it:
        d = dict(m)
        for a in list(first):
            e = min(first[a], d.get(a, 0))
            if e:
                first[a] = e
            else:
                del first[a]
        if not first:
            break
    return first


def _cancel_content(num, den):
    cn, cd = _content(num), _content(den)
    common = {a: min(e, cd[a]) for a, e in cn.items() if a in cd}
    common = {a: e for a, e in common.items() if e}
    if not common:
        return num, den

    def strip(p):
        out = {}
        for m, c in p.items():
            d = dict(m)
            for a, e in common.items():
                d[a] -= e
                if not d[a]:
                    del d[a]
            items = sorted(d.items(), key=lambda ae: _atom_key(ae[0]), reverse=True)
            out[tuple(items)] = c
        return out

    return strip(num), strip(den)


def _emit(num, den):
    if not num:
        return ZERO
    num, den = _cancel_content(num, den)
    den_items = list(den.items())
    if len(den_items) == 1 and den_items[0][0] == ():
        num = _p_scale(num, Fraction(1) / den_items[0][1])
        return _emit_poly(num)
    lead = _p_leading_coeff(den)
    num = _p_scale(num, Fraction(1) / lead)
    den = _p_scale(den, Fraction(1) / lead)
    return Div(_emit_poly(num), _emit_poly(den))


def _emit_poly(p) -> Expr:
    if not p:
        return ZERO
    terms = []
    for m, c in _p_sorted(p):
        factors = []
        if c != 1 or not m:
            factors.append(Rat(c))
        for a, e in m:
            factors.append(a if e == 1 else Pow(a, e))
        terms.append(factors[0] if len(factors) == 1 else Mul(tuple(factors)))
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


# ---------------------------------------------------------------------------
# Differentiation


def _diff(e: Expr, dleaf) -> Expr:
    """Derivative of a tree given the derivative of each Param/Jet leaf."""
    if isinstance(e, Rat):
        return ZERO
    if isinstance(e, (Param, Jet)):
        return dleaf(e)
    if isinstance(e, Func):
        parts = []
        for i, a in enumerate(e.args):
            da = _diff(a, dleaf)
            if da == ZERO:
                continue
            didx = tuple(d + (1 if j == i else 0) for j, d in enumerate(e.didx))
            parts.append(Func(e.name, e.args, didx) * da)
        return Add(tuple(parts)) if parts else ZERO
    if isinstance(e, Builtin):
        da = _diff(e.arg, dleaf)
        if da == ZERO:
            return ZERO
        u = e.arg
        outer = {
            "sin": Builtin("cos", u),
            "cos": -Builtin("sin", u),
            "sinh": Builtin("cosh", u),
            "cosh": Builtin("sinh", u),
            "exp": Builtin("exp", u),
        }[e.name]
        return outer * da
    if isinstance(e, Add):
        return Add(tuple(_diff(t, dleaf) for t in e.terms))
    if isinstance(e, Mul):
        parts = []
        fs = e.factors
        for i in range(len(fs)):
            df = _diff(fs[i], dleaf)
            if df == ZERO:
                continue
            parts.append(Mul(fs[:i] + (df,) + fs[i + 1:]))
        return Add(tuple(parts)) if parts else ZERO
    if isinstance(e, Pow):
        db = _diff(e.base, dleaf)
        if db == ZERO or e.exp == 0:
            return ZERO
        return Rat(Fraction(e.exp)) * Pow(e.base, e.exp - 1) * db
    if isinstance(e, Div):
        dn = _diff(e.num, dleaf)
        dd = _diff(e.den, dleaf)
        return Div(dn * e.den - e.num * dd, e.den * e.den)
    raise ExprError(f"cannot differentiate {e!r}")


def partial(e: Expr, v: Expr, ctx: Context = DEFAULT_CONTEXT) -> Expr:
    """Partial derivative with respect to a jet variable or parameter.

    Atoms are treated as independent unless v occurs inside an argument,
    in which case the chain rule produces higher-derivative atoms.
    """
    if not isinstance(v, (Jet, Param)):
        raise ExprError("partial differentiates with respect to a Jet or Param")

    def dleaf(leaf):
        return ONE if leaf == v else ZERO

    return normalize(_diff(_coerce(e), dleaf), ctx)


def total_dx(e: Expr, ctx: Context = DEFAULT_CONTEXT, raw=False) -> Expr:
    def dleaf(leaf):
        if isinstance(leaf, Jet):
            return Jet(leaf.order + 1, leaf.t)
        return ZERO

    d = _diff(_coerce(e), dleaf)
    return d if raw else normalize(d, ctx)


def total_dt(e: Expr, ctx: Context = DEFAULT_CONTEXT, raw=False) -> Expr:
    """Formal vertical t-derivative: z_k -> z_{kt}; rejects second-level ones."""
    def dleaf(leaf):
        if isinstance(leaf, Jet):
            if leaf.t:
                raise UnsupportedDerivative(
                    f"t-derivative of {leaf.display} is not representable")
            return Jet(leaf.order, True)
        return ZERO

    d = _diff(_coerce(e), dleaf)
    return d if raw else normalize(d, ctx)


def _contains_t_jet(e, ctx=DEFAULT_CONTEXT):
    found = []

    def walk(t):
        if isinstance(t, Jet) and t.t:
            found.append(t)
        elif isinstance(t, Func):
            for a in t.args:
                walk(a)
        elif isinstance(t, Builtin):
            walk(t.arg)
        elif isinstance(t, Add):
            for x in t.terms:
                walk(x)
        elif isinstance(t, Mul):
            for x in t.factors:
                walk(x)
        elif isinstance(t, Pow):
            walk(t.base)
        elif isinstance(t, Div):
            walk(t.num)
            walk(t.den)

    walk(_coerce(e))
    return found


# ---------------------------------------------------------------------------
# Substitution


def substitute(e: Expr, bindings, ctx: Context = DEFAULT_CONTEXT) -> Expr:
    """Simultaneous replacement followed by normalize.

    Keys may be Param/Jet/Func/Builtin atoms, or a bare string naming a
    formal function; the bound value for a function name is a closed-form
    template in the placeholder parameter ``u`` (single-argument only),
    or a pair (template, (u0, u1, ...)) for several arguments.
    """
    atom_map = {}
    func_map = {}
    for k, v in bindings.items():
        if isinstance(k, str):
            if isinstance(v, tuple):
                tpl, holes = v
                func_map[k] = (_coerce(tpl), tuple(holes))
            else:
                func_map[k] = (_coerce(v), (Param("u"),))
        elif isinstance(k, (Param, Jet, Func, Builtin)):
            atom_map[k] = _coerce(v)
        else:
            raise ExprError(f"bad binding key {k!r}")

    _check_acyclic(atom_map, func_map)

    def walk(t):
        if isinstance(t, (Param, Jet)):
            return atom_map.get(t, t)
        if isinstance(t, Func):
            if t in atom_map:
                return atom_map[t]
            new_args = tuple(walk(a) for a in t.args)
            if t.name in func_map:
                tpl, holes = func_map[t.name]
                if len(holes) != len(t.args):
                    raise ExprError(
                        f"closed form for {t.name} expects {len(holes)} arguments")
                body = tpl
                for hole, d in zip(holes, t.didx):
                    for _ in range(d):
                        body = _diff(body, lambda lf, h=hole: ONE if lf == h else ZERO)
                return substitute(body, dict(zip(holes, new_args)), ctx)
            return Func(t.name, new_args, t.didx)
        if isinstance(t, Builtin):
            if t in atom_map:
                return atom_map[t]
            return Builtin(t.name, walk(t.arg))
        if isinstance(t, Add):
            return Add(tuple(walk(x) for x in t.terms))
        if isinstance(t, Mul):
            return Mul(tuple(walk(x) for x in t.factors))
        if isinstance(t, Pow):
            return Pow(walk(t.base), t.exp)
        if isinstance(t, Div):
            return Div(walk(t.num), walk(t.den))
        return t

    return normalize(walk(_coerce(e)), ctx)


def _binding_symbols(e):
    syms = set()

    def walk(t):
        if isinstance(t, (Param, Jet)):
            syms.add(t)
        elif isinstance(t, Func):
            syms.add(t.name)
            for a in t.args:
                walk(a)
        elif isinstance(t, Builtin):
            walk(t.arg)
        elif isinstance(t, Add):
            for x in t.terms:
                walk(x)
        elif isinstance(t, Mul):
            for x in t.factors:
                walk(x)
        elif isinstance(t, Pow):
            walk(t.base)
        elif isinstance(t, Div):
            walk(t.num)
            walk(t.den)

    walk(e)
    return syms


def _check_acyclic(atom_map, func_map):
    # cycles among *distinct* keys are rejected; self-reference (z -> z+1)
    # is fine under simultaneous substitution
    keys = {}
    for k, v in atom_map.items():
        keys[k] = _binding_symbols(v)
    for name, (tpl, holes) in func_map.items():
        keys[name] = _binding_symbols(tpl) - set(holes)
    graph = {k: {d for d in deps if d in keys and d != k} for k, deps in keys.items()}
    seen, stack = set(), set()

    def visit(k):
        if k in stack:
            raise CyclicBindingError(f"cyclic binding through {k!r}")
        if k in seen:
            return
        stack.add(k)
        for d in graph[k]:
            visit(d)
        stack.discard(k)
        seen.add(k)

    for k in graph:
        visit(k)


# ---------------------------------------------------------------------------
# Numeric evaluation


_MATH = {"sin": math.sin, "cos": math.cos, "sinh": math.sinh,
         "cosh": math.cosh, "exp": math.exp}


def eval_numeric(e: Expr, env, ctx: Context = DEFAULT_CONTEXT) -> float:
    """IEEE double evaluation of the normalized tree.

    env binds parameter names and jet display names to floats and formal
    function names to numeric routines: f(order, x) for single-argument
    atoms, f(didx, *xs) otherwise.
    """
    return _eval(normalize(e, ctx), env)


def _eval(e, env):
    if isinstance(e, Rat):
        return float(e.value)
    if isinstance(e, Param):
        try:
            return float(env[e.name])
        except KeyError:
            raise EvalError(f"unbound symbol {e.name!r}") from None
    if isinstance(e, Jet):
        try:
            return float(env[e.display])
        except KeyError:
            raise EvalError(f"unbound jet variable {e.display!r}") from None
    if isinstance(e, Func):
        try:
            f = env[e.name]
        except KeyError:
            raise EvalError(f"unbound function {e.name!r}") from None
        vals = [_eval(a, env) for a in e.args]
        try:
            if len(vals) == 1:
                return float(f(e.didx[0], vals[0]))
            return float(f(e.didx, *vals))
        except (ValueError, IndexError, TypeError) as exc:
            raise EvalError(f"numeric routine for {e.name!r} failed: {exc}") from None
    if isinstance(e, Builtin):
        return _MATH[e.name](_eval(e.arg, env))
    if isinstance(e, Add):
        return sum(_eval(t, env) for t in e.terms)
    if isinstance(e, Mul):
        r = 1.0
        for f_ in e.factors:
            r *= _eval(f_, env)
        return r
    if isinstance(e, Pow):
        return _eval(e.base, env) ** e.exp
    if isinstance(e, Div):
        d = _eval(e.den, env)
        if abs(d) < 1e-300:
            raise EvalError("division by value below 1e-300")
        return _eval(e.num, env) / d
    raise EvalError(f"cannot evaluate {e!r}")


# ---------------------------------------------------------------------------
# Formatting (inverse of the parser grammar)


def format_expr(e: Expr) -> str:
    return _fmt(e, 0)


# precedence levels: 0 add, 1 mul, 2 unary/power, 3 atom

def _fmt(e, prec):
    if isinstance(e, Rat):
        v = e.value
        s = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
        if v < 0 and prec >= 1:
            return f"({s})"
        return s
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Jet):
        return e.display
    if isinstance(e, Func):
        args = ",".join(_fmt(a, 0) for a in e.args)
        if len(e.args) == 1:
            return f"{e.name}{chr(39) * e.didx[0]}({args})"
        if any(e.didx):
            idx = ",".join(str(d) for d in e.didx)
            return f"{e.name}_{{{idx}}}({args})"
        return f"{e.name}({args})"
    if isinstance(e, Builtin):
        return f"{e.name}({_fmt(e.arg, 0)})"
    if isinstance(e, Add):
        if not e.terms:
            return "0"
        s = "+".join(_fmt(t, 0 if i == 0 else 1) for i, t in enumerate(e.terms))
        s = s.replace("+-", "-")
        return f"({s})" if prec >= 1 else s
    if isinstance(e, Mul):
        if not e.factors:
            return "1"
        s = "*".join(_fmt(f, 1) for f in e.factors)
        # factor out leading -1 for readability
        if s.startswith("(-1)*"):
            s = "-" + s[5:]
            return f"({s})" if prec >= 1 else s
        return f"({s})" if prec >= 2 else s
    if isinstance(e, Pow):
        b = _fmt(e.base, 3)
        if e.exp < 0:
            return f"{b}^({e.exp})"
        return f"{b}^{e.exp}"
    if isinstance(e, Div):
        return f"{_fmt(e.num, 2)}/{_fmt(e.den, 3)}"
    raise ExprError(f"cannot format {e!r}")
