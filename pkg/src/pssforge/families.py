"""Constructors for the eleven classified coframe families and a catalog
of named equations.

Every family is a recipe: a coframe whose entries involve symbolic
parameters, an arbitrary (formal) function or two, and a coupled sign
choice; plus the right-hand side of the evolution equation the coframe
verifies.  ``construct`` instantiates a recipe — optionally binding
parameters to exact rationals and functions to closed forms — validates
the family's parameter constraints, and returns a FamilyInstance whose
structure-equation residuals vanish identically.

Sign convention: sign="+" selects the upper symbol of every coupled
stacked-sign pair in a family, sign="-" the lower one.
"""

from __future__ import annotations

from .expr import (
    Context, Expr, Param, Rat, builtin, fn, format_expr, is_zero, normalize,
    param, partial, rat, substitute, total_dx, z, zt,
)
from .coframe import Coframe, EquationSpec
from .parser import parse

__all__ = [
    "BRANCHES", "CATALOG_NAMES", "BranchError", "FamilyInstance",
    "construct", "catalog", "as_AB", "scaled_flux_family",
    "branch_from_json",
]

BRANCHES = (
    "T32-I", "T32-II", "T33", "T35-I", "T35-II",
    "T32s-I", "T32s-II", "T33s-I", "T33s-II", "T35s-I", "T35s-II",
)

ADMISSIBLE_DELTA = {
    "T32-I": (1,), "T32-II": (1,), "T33": (1, -1),
    "T35-I": (1,), "T35-II": (1, -1),
    "T32s-I": (1,), "T32s-II": (1,), "T33s-I": (1, -1),
    "T33s-II": (1, -1), "T35s-I": (1,), "T35s-II": (1, -1),
}


class BranchError(ValueError):
    """A family's parameter constraints are violated; names each one."""

    def __init__(self, branch, violations):
        self.branch = branch
        self.violations = tuple(violations)
        super().__init__(f"{branch}: constraint violation: {', '.join(self.violations)}")


class FamilyInstance:
    """A concrete coframe + evolution equation drawn from one family."""

    def __init__(self, branch, sign, delta, coframe, equation, ctx,
                 params, free_params=(), flags=(), name=None):
        self.branch = branch
        self.sign = sign
        self.delta = delta
        self.coframe = coframe
        self.equation = equation
        self.ctx = ctx
        self.params = dict(params)
        self.free_params = tuple(free_params)
        self.flags = tuple(flags)
        self.name = name

    def describe(self):
        eq = self.equation
        lhs = {"a": "zt - lam*z2t", "b": "z2t"}.get(eq.class_tag)
        if eq.class_tag == "a" and eq.lam is not None:
            lhs = f"zt - ({format_expr(eq.lam)})*z2t"
        lines = []
        if eq.class_tag in ("a", "b"):
            lines.append(f"equation: {lhs} = ({format_expr(normalize(eq.A, self.ctx))})*z3"
                         f" + {format_expr(normalize(eq.B, self.ctx))}")
        else:
            for k, rhs, _ in eq.rules:
                var = ("z" if k == 0 else f"z{k}") + "t"
                lines.append(f"equation: {var} = {format_expr(normalize(rhs, self.ctx))}")
        lines.append(f"delta: {self.delta:+d}   sign: {self.sign}   family: {self.branch}")
        for i in range(3):
            fx = format_expr(normalize(self.coframe.f[i][0], self.ctx))
            ft = format_expr(normalize(self.coframe.f[i][1], self.ctx))
            lines.append(f"omega{i + 1} = ({fx}) dx + ({ft}) dt")
        for nm, sq in sorted(self.ctx.side_relations.items()):
            lines.append(f"with {nm}^2 = {format_expr(sq)}")
        for nm, (order, rhs) in sorted(self.ctx.ode_rules.items()):
            lines.append(f"with {nm}{chr(39) * order}(u) = {format_expr(rhs)}")
        for fl in self.flags:
            lines.append(f"flag: {fl}")
        return "\n".join(lines)


def as_AB(rhs: Expr, ctx: Context = Context()):
    """Split an evolution right-hand side into A*z3 + B with A, B free of z3."""
    for k in range(4, ctx.max_jet_order + 1):
        if not is_zero(partial(rhs, z(k), ctx), ctx):
            raise ValueError(f"right-hand side depends on z{k}")
    A = partial(rhs, z(3), ctx)
    if not is_zero(partial(A, z(3), ctx), ctx):
        raise ValueError("right-hand side is not affine in z3")
    B = normalize(rhs - A * z(3), ctx)
    if A == Rat(0) and B == Rat(0):
        raise ValueError("A and B are both identically zero (A^2+B^2 != 0 fails)")
    return A, B


# ---------------------------------------------------------------------------
# Branch recipes.  Each returns (rows, rhs, eq_class, ctx, constraints) in
# terms of symbolic parameters; sgn is +-1 and delta the chosen curvature
# sign.  Constraints are (name, kind, expr) with kind "nonzero" (must not be
# identically zero), "zero" (must be identically zero) or "nonneg" (checked
# only when the bound value is an explicit rational).


def _Dx(e, ctx, n=1):
    for _ in range(n):
        e = total_dx(e, ctx, raw=True)
    return e


def _recipe(branch, sgn, delta):
    S = Rat(sgn)
    D = Rat(delta)
    ctx = Context()
    u = z(0) - param("lam") * z(2)

    if branch == "T32-I":
        a, b = param("a"), param("b")
        psi = fn("psi", z(0), z(1), z(2))
        rows = [[-S * a, S * b],
                [u, psi],
                [S * u, S * psi]]
        rhs = _Dx(psi, ctx) + a * psi + b * u
        cons = [("a^2+b^2 != 0", "nonzero", a * a + b * b),
                ("a*psi+b*(z-lam*z2) != 0", "nonzero", a * psi + b * u),
                ("a in {0,1}", "binary", a), ("b in {0,1}", "binary", b)]
        return rows, rhs, "a", ctx, cons

    if branch == "T32-II":
        eta, alpha = param("eta"), param("alpha")
        h = fn("h", z(0))
        w = u + S * (eta ** 2 - alpha ** 2) / 2
        f22 = (-S * _Dx(h, ctx, 2) - eta * _Dx(h, ctx) - w * h) / alpha
        rows = [[eta, -S * _Dx(h, ctx) - eta * h],
                [w / alpha, f22],
                [S * w / alpha + alpha, S * f22 - alpha * h]]
        rhs = -S * _Dx(h, ctx, 3) - _Dx(u * h, ctx) - u * _Dx(h, ctx)
        cons = [("alpha != 0", "nonzero", alpha),
                ("h' != 0", "nonzero", fn("h", z(0), didx=(1,)))]
        return rows, rhs, "a", ctx, cons

    if branch == "T33":
        r, gamma, sigma, s = param("r"), param("gamma"), param("sigma"), param("s")
        ctx = ctx.with_side_relation("s", param("gamma") + D * param("sigma") ** 2)
        arg = param("lam") * z(1) ** 2 - z(0) ** 2
        phi, dphi = fn("phi", arg), fn("phi", arg, didx=(1,))
        q = _Dx(2 * z(1) * dphi, ctx)
        f21 = sigma * u / gamma + S * r * s / gamma
        f31 = S * s * u / gamma + D * sigma * r / gamma
        rows = [[rat(0), -2 * r * z(1) * dphi],
                [f21, sigma * q - f21 * phi],
                [f31, S * s * q - f31 * phi]]
        rhs = _Dx(2 * gamma * z(1) * dphi, ctx, 2) - _Dx(u * phi, ctx) \
            - 2 * D * r ** 2 * z(1) * dphi
        cons = [("r*gamma != 0", "nonzero", r * gamma),
                ("gamma+delta*sigma^2 >= 0", "nonneg", gamma + D * sigma ** 2),
                ("phi' != 0", "nonzero", dphi)]
        return rows, rhs, "a", ctx, cons

    if branch == "T35-I":
        eta, rho, p = param("eta"), param("rho"), param("p")
        ctx = ctx.with_side_relation("p", param("rho") ** 2 - 1)
        phi = fn("phi", z(0), z(1))
        f21 = -rho * u + S * eta * p
        f31 = -S * p * u + rho * eta
        rows = [[eta, -eta * phi],
                [f21, -rho * _Dx(phi, ctx) - f21 * phi],
                [f31, -S * p * _Dx(phi, ctx) - f31 * phi]]
        rhs = _Dx(phi, ctx, 2) - _Dx(u * phi, ctx)
        cons = [("eta != 0", "nonzero", eta), ("rho != 0", "nonzero", rho),
                ("rho^2-1 >= 0", "nonneg", rho ** 2 - 1),
                ("Dx(phi) != 0", "nonzero", normalize(_Dx(phi, ctx), ctx))]
        return rows, rhs, "a", ctx, cons

    if branch == "T35-II":
        eta, r, gamma, sigma, s = (param("eta"), param("r"), param("gamma"),
                                   param("sigma"), param("s"))
        ctx = ctx.with_side_relation("s", param("gamma") + D * param("sigma") ** 2)
        arg = param("lam") * z(1) ** 2 - z(0) ** 2
        ell, dell = fn("ell", arg), fn("ell", arg, didx=(1,))
        N = gamma * eta ** 2 + r ** 2
        W = (-2 * r * z(1) * dell + eta * ell) / N
        V = (2 * eta * gamma * z(1) * dell + r * ell) / N
        f21 = sigma * u / gamma - S * r * s / gamma
        f31 = S * s * u / gamma - D * sigma * r / gamma
        f22 = -sigma * _Dx(V, ctx) / (eta * gamma) \
            + sigma * W * u / (eta * gamma) - S * s * V / gamma
        f32 = S * (-s * _Dx(V, ctx) / (eta * gamma) + s * W * u / (eta * gamma)) \
            - D * sigma * V / gamma
        rows = [[eta, W], [f21, f22], [f31, f32]]
        rhs = _Dx(-V, ctx, 2) / eta + _Dx(W * u, ctx) / eta + 2 * D * z(1) * dell
        cons = [("(gamma*eta^2+r^2)*eta*gamma != 0", "nonzero", N * eta * gamma),
                ("gamma+delta*sigma^2 >= 0", "nonneg", gamma + D * sigma ** 2),
                ("ell' != 0", "nonzero", dell)]
        return rows, rhs, "a", ctx, cons

    if branch == "T32s-I":
        a, b = param("a"), param("b")
        alpha, m, n = param("alpha"), param("m"), param("n")
        psi = fn("psi", z(0), z(1), z(2))
        f22 = psi - S * (1 - a) * (m * z(1) ** 2 / 2 + n * z(1)) - alpha * b
        rows = [[-S * a, (1 - a) * (m * z(1) + n) + S * b],
                [z(2) + alpha, f22],
                [S * (z(2) + alpha), S * f22 - (1 - a) * m]]
        rhs = _Dx(psi, ctx) + a * psi + b * z(2) + S * n * (1 - a) * alpha
        cons = [("(a-1)*alpha*m = 0", "zero", (a - 1) * alpha * m),
                ("(a-1)*b = 0", "zero", (a - 1) * b),
                ("a*psi+b*z2+m^2+n^2 != 0", "nonzero",
                 a * psi + b * z(2) + m ** 2 + n ** 2),
                ("a in {0,1}", "binary", a), ("b in {0,1}", "binary", b)]
        return rows, rhs, "b", ctx, cons

    if branch == "T32s-II":
        eta, alpha, beta = param("eta"), param("alpha"), param("beta")
        h = fn("h", z(0))
        d = alpha - S * beta
        m = S * (alpha ** 2 - beta ** 2 - eta ** 2)
        f21 = z(2) / d + beta
        rows = [[eta, -S * _Dx(h, ctx) - eta * h],
                [f21, (-S * _Dx(h, ctx, 2) - eta * _Dx(h, ctx)) / d - f21 * h],
                [S * z(2) / d + alpha,
                 (-_Dx(h, ctx, 2) - S * eta * _Dx(h, ctx)) / d
                 - S * z(2) * h / d - alpha * h]]
        rhs = -S * _Dx(h, ctx, 3) - _Dx((z(2) + m) * h, ctx) - z(2) * _Dx(h, ctx)
        cons = [("alpha-+beta != 0", "nonzero", d),
                ("h' != 0", "nonzero", fn("h", z(0), didx=(1,)))]
        return rows, rhs, "b", ctx, cons

    if branch == "T33s-I":
        r = param("r")
        ctx = ctx.with_ode_rule("phi", 2, -(param("r") ** 2 - D) * fn("phi", param("u")))
        phi, dphi = fn("phi", z(1)), fn("phi", z(1), didx=(1,))
        psi = fn("psi", z(0), z(1), z(2))
        rows = [[rat(0), -dphi],
                [z(2), psi + S * r * phi],
                [S * r * z(2), S * r * psi + D * phi]]
        rhs = _Dx(psi, ctx)
        cons = [("phi != 0", "nonzero", phi)]
        return rows, rhs, "b", ctx, cons

    if branch == "T33s-II":
        m, r, gamma, mu, s = (param("m"), param("r"), param("gamma"),
                              param("mu"), param("s"))
        ctx = ctx.with_side_relation("s", param("gamma") + D * param("mu") ** 2)
        v = z(2) + m
        arg = 2 * m * z(0) + z(1) ** 2
        phi, dphi = fn("phi", arg), fn("phi", arg, didx=(1,))
        q = _Dx(2 * z(1) * dphi, ctx)
        f21 = mu * v / gamma - S * r * s / gamma
        f31 = S * s * v / gamma - D * r * mu / gamma
        rows = [[rat(0), -2 * r * z(1) * dphi],
                [f21, -mu * q - f21 * phi],
                [f31, -S * s * q - f31 * phi]]
        rhs = -_Dx(2 * gamma * z(1) * dphi, ctx, 2) - _Dx(v * phi, ctx) \
            + 2 * D * r ** 2 * z(1) * dphi
        cons = [("gamma != 0", "nonzero", gamma),
                ("gamma+delta*mu^2 >= 0", "nonneg", gamma + D * mu ** 2),
                ("phi' != 0", "nonzero", dphi)]
        return rows, rhs, "b", ctx, cons

    if branch == "T35s-I":
        eta, rho, r, p = param("eta"), param("rho"), param("r"), param("p")
        ctx = ctx.with_side_relation("p", param("rho") ** 2 - 1)
        phi = fn("phi", z(0), z(1))
        E = builtin("exp", -z(1))
        chi = phi - r * E / eta ** 2
        f21 = -rho * z(2) + S * eta * p
        f31 = -S * p * z(2) + eta * rho
        rows = [[eta, -eta * phi],
                [f21, -rho * _Dx(phi, ctx) - f21 * chi],
                [f31, -S * p * _Dx(phi, ctx) - f31 * chi]]
        rhs = _Dx(chi, ctx, 2) - _Dx(z(2) * phi, ctx) + r * E
        cons = [("eta != 0", "nonzero", eta),
                ("rho^2-1 >= 0", "nonneg", rho ** 2 - 1),
                ("Dx(phi) != 0", "nonzero", normalize(_Dx(phi, ctx), ctx))]
        return rows, rhs, "b", ctx, cons

    if branch == "T35s-II":
        eta, m, r, gamma, mu, s = (param("eta"), param("m"), param("r"),
                                   param("gamma"), param("mu"), param("s"))
        ctx = ctx.with_side_relation("s", param("gamma") + D * param("mu") ** 2)
        v = z(2) + m
        arg = z(1) ** 2 + 2 * m * z(0)
        ell, dell = fn("ell", arg), fn("ell", arg, didx=(1,))
        N = gamma * eta ** 2 + r ** 2
        W = (2 * r * z(1) * dell + eta * ell) / N
        V = (2 * eta * gamma * z(1) * dell - r * ell) / N
        f21 = mu * v / gamma - S * r * s / gamma
        f31 = S * s * v / gamma - D * mu * r / gamma
        f22 = mu * _Dx(V, ctx) / (eta * gamma) + mu * W * v / (eta * gamma) \
            + S * s * V / gamma
        f32 = S * (s * _Dx(V, ctx) / (eta * gamma) + s * W * v / (eta * gamma)) \
            + D * mu * V / gamma
        rows = [[eta, W], [f21, f22], [f31, f32]]
        rhs = _Dx(V, ctx, 2) / eta + _Dx(W * v, ctx) / eta - 2 * D * z(1) * dell
        cons = [("(gamma*eta^2+r^2)*gamma*eta != 0", "nonzero", N * gamma * eta),
                ("gamma+delta*mu^2 >= 0", "nonneg", gamma + D * mu ** 2),
                ("ell' != 0", "nonzero", dell)]
        return rows, rhs, "b", ctx, cons

    raise ValueError(f"unknown family {branch!r}")


# Formal-function roles per family: name -> argument jets (for closed-form
# substitution, a template in those variables, or in "u" for composite args).
_FUNC_ROLES = {
    "T32-I": {"psi": (z(0), z(1), z(2))},
    "T32-II": {"h": (param("u"),)},
    "T33": {"phi": (param("u"),)},
    "T35-I": {"phi": (z(0), z(1))},
    "T35-II": {"ell": (param("u"),)},
    "T32s-I": {"psi": (z(0), z(1), z(2))},
    "T32s-II": {"h": (param("u"),)},
    "T33s-I": {"psi": (z(0), z(1), z(2)), "phi": (param("u"),)},
    "T33s-II": {"phi": (param("u"),)},
    "T35s-I": {"phi": (z(0), z(1))},
    "T35s-II": {"ell": (param("u"),)},
}

_DEFAULT_PARAMS = {
    "T32-I": {"a": rat(1), "b": rat(1)},
    "T32s-I": {"a": rat(1), "b": rat(1)},
}


def _as_expr(v):
    if isinstance(v, Expr):
        return v
    if isinstance(v, str):
        return parse(v)
    return Rat(v)


def construct(branch, sign="+", delta=1, params=None, functions=None,
              name=None, free_params=(), flags=()):
    """Instantiate a family.

    params: name -> exact value (Expr, int, Fraction, or source text).
    functions: role -> closed-form template; single-argument roles take a
        template in the placeholder ``u``, multi-argument roles a template
        written directly in the jet variables they depend on.  Roles left
        out stay formal.
    """
    if branch not in BRANCHES:
        raise ValueError(f"unknown family {branch!r}")
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    if delta not in ADMISSIBLE_DELTA[branch]:
        raise BranchError(branch, [f"delta={delta:+d} not admissible"])
    sgn = 1 if sign == "+" else -1

    rows, rhs, eq_class, ctx, cons = _recipe(branch, sgn, delta)

    bindings = {}
    all_params = dict(_DEFAULT_PARAMS.get(branch, {}))
    for k, v in (params or {}).items():
        all_params[k] = _as_expr(v)
    for k, v in all_params.items():
        bindings[Param(k)] = v
    for role, tpl in (functions or {}).items():
        if role not in _FUNC_ROLES[branch]:
            raise ValueError(f"family {branch} has no function role {role!r}")
        bindings[role] = (_as_expr(tpl), _FUNC_ROLES[branch][role])

    # rewrite data must see the parameter bindings too
    new_ctx = Context(max_jet_order=ctx.max_jet_order)
    plain = {k: v for k, v in bindings.items() if isinstance(k, Param)}
    for nm, sq in ctx.side_relations.items():
        new_ctx = new_ctx.with_side_relation(nm, substitute(sq, plain))
    for fname, (order, ode_rhs) in ctx.ode_rules.items():
        bound = substitute(ode_rhs, plain, Context())
        new_ctx = new_ctx.with_ode_rule(fname, order, bound)
    ctx = new_ctx

    def bind(e):
        return substitute(e, bindings, ctx) if bindings else normalize(e, ctx)

    if branch == "T33s-I":
        rval = all_params.get("r")
        if rval is not None and is_zero(normalize(rval ** 2 - Rat(delta)), Context()):
            raise BranchError(branch, ["r^2-delta = 0 (degenerate oscillator regime)"])

    # constraints first: binding the rows may divide by a constrained
    # quantity, and a violation should surface as such, not as a zero divide
    violations = []
    for cname, kind, expr in cons:
        val = bind(expr)
        if kind == "nonzero":
            if val == Rat(0):
                violations.append(cname)
        elif kind == "zero":
            if val != Rat(0):
                violations.append(cname)
        elif kind == "nonneg":
            if isinstance(val, Rat) and val.value < 0:
                violations.append(cname)
        elif kind == "binary":
            if isinstance(val, Rat) and val.value not in (0, 1):
                violations.append(cname)
    if violations:
        raise BranchError(branch, violations)

    rows = [[bind(e) for e in row] for row in rows]
    rhs = bind(rhs)

    cf = Coframe(rows, delta)
    A, B = as_AB(rhs, ctx)
    if eq_class == "a":
        lam = all_params.get("lam", param("lam"))
        eq = EquationSpec.class_a(A, B, lam=lam)
    else:
        eq = EquationSpec.class_b(A, B)

    shown = {k: format_expr(_as_expr(v)) for k, v in all_params.items()}
    return FamilyInstance(branch, sign, delta, cf, eq, ctx, shown,
                          free_params=free_params, flags=flags, name=name)


# ---------------------------------------------------------------------------
# Named catalog


CATALOG_NAMES = (
    "sine-gordon", "camassa-holm", "kdv", "ch-r", "alt-ch-r", "kraenkel",
    "hunter-saxton", "calogero", "tzitzeica", "bullough-dodd",
    "dodd-bullough-mikhailov", "tzitzeica-dodd-bullough", "rabelo",
    "liouville-linked", "deep-water",
)

_CONSEQUENCE_FLAG = "ZCR-for-differential-consequence"


def _sine_gordon():
    eta = param("eta")
    cf = Coframe([[rat(0), builtin("sin", z(0)) / eta],
                  [eta, builtin("cos", z(0)) / eta],
                  [z(1), rat(0)]], delta=1)
    eq = EquationSpec.generic([(1, builtin("sin", z(0)))])
    return FamilyInstance("sine-gordon", "+", 1, cf, eq, Context(),
                          {"eta": "eta"}, free_params=("eta",),
                          name="sine-gordon")


def _alt_ch_r(sign="+"):
    sgn = 1 if sign == "+" else -1
    S = Rat(sgn)
    eta, r, q = param("eta"), param("r"), param("q")
    ctx = Context().with_side_relation("q", param("r") - param("eta") ** 2)
    h = fn("h", z(0))
    Dh, D2h, D3h = (_Dx(h, ctx), _Dx(h, ctx, 2), _Dx(h, ctx, 3))
    rows = [[eta, -S * Dh - eta * h],
            [(-S * z(2) + (r - eta ** 2)) / q,
             (D2h + S * eta * Dh + (S * z(2) - (r - eta ** 2)) * h) / q],
            [-z(2) / q, (S * D2h + eta * Dh + z(2) * h) / q]]
    rhs = -S * D3h - _Dx((z(2) - S * r) * h, ctx) - z(2) * _Dx(h, ctx)
    cf = Coframe([[normalize(e, ctx) for e in row] for row in rows], 1)
    A, B = as_AB(normalize(rhs, ctx), ctx)
    eq = EquationSpec.class_b(A, B)
    return FamilyInstance("T32s-II", sign, 1, cf, eq, ctx,
                          {"eta": "eta", "r": "r"}, free_params=("eta",),
                          name="alt-ch-r")


def _liouville_linked(sign="+"):
    sgn = 1 if sign == "+" else -1
    S = Rat(sgn)
    eta, r, q = param("eta"), param("r"), param("q")
    ctx = Context().with_side_relation("q", param("r") ** 2 - 4 * param("eta") ** 4)
    Em = builtin("exp", -z(1))
    Ep = builtin("exp", z(1))
    rows = [[eta, -(r * Em + Ep) / (2 * eta)],
            [-r * z(2) / (2 * eta ** 2) + S * q / (2 * eta),
             -S * (-r * Em + Ep) * q / (4 * eta ** 3)],
            [-S * z(2) * q / (2 * eta ** 2) + r / (2 * eta),
             (r ** 2 * Em - r * Ep) / (4 * eta ** 3)]]
    cf = Coframe([[normalize(e, ctx) for e in row] for row in rows], 1)
    eq = EquationSpec.generic([(2, r * Em)])
    return FamilyInstance("T35s-I", sign, 1, cf, eq, ctx,
                          {"eta": "eta", "r": "r"}, free_params=("eta",),
                          name="liouville-linked")


def _flux_psi(name, psi_text, flags=(), free_params=("r",), params=None):
    def build():
        inst = construct("T33s-I", sign="+", delta=1,
                         params=params or {},
                         functions={"psi": psi_text},
                         name=name, free_params=free_params, flags=flags)
        inst.name = name
        return inst
    return build


def _first_order_flux(name, psi_text):
    """Equations read as z1t = psi; the coframe closes only modulo the
    x-derivative of that relation, hence the consequence flag."""
    def build():
        inst = construct("T33s-I", sign="+", delta=1,
                         functions={"psi": psi_text},
                         name=name, free_params=("r",),
                         flags=(_CONSEQUENCE_FLAG,))
        psi = parse(psi_text)
        inst.equation = EquationSpec.generic([(1, psi)])
        inst.name = name
        return inst
    return build


_CATALOG = {
    "sine-gordon": _sine_gordon,
    "camassa-holm": lambda: construct(
        "T32-II", sign="+", delta=1, params={"lam": 1},
        functions={"h": "u+1"}, name="camassa-holm", free_params=("alpha",)),
    "kdv": lambda: construct(
        "T32-II", sign="-", delta=1, params={"lam": 0},
        functions={"h": "u"}, name="kdv", free_params=("alpha",)),
    "ch-r": lambda: construct(
        "T32-II", sign="+", delta=1, functions={"h": "u+m"},
        name="ch-r", free_params=("alpha",)),
    "alt-ch-r": _alt_ch_r,
    "kraenkel": _flux_psi("kraenkel", "alpha*(z1^2+z*z2)+beta*z"),
    "hunter-saxton": _first_order_flux("hunter-saxton", "-z*z2-1/2*z1^2"),
    "calogero": _first_order_flux("calogero", "-z*z2-Phi(z1)"),
    "tzitzeica": _first_order_flux("tzitzeica", "exp(z)-exp(-2*z)"),
    "bullough-dodd": _first_order_flux("bullough-dodd", "exp(2*z)-exp(-z)"),
    "dodd-bullough-mikhailov": _first_order_flux(
        "dodd-bullough-mikhailov", "-exp(z)-exp(-2*z)"),
    "tzitzeica-dodd-bullough": _first_order_flux(
        "tzitzeica-dodd-bullough", "exp(-z)+exp(-2*z)"),
    "rabelo": _first_order_flux("rabelo", "z+z*z1^2+1/2*z^2*z2"),
    "liouville-linked": _liouville_linked,
    "deep-water": _flux_psi(
        "deep-water", "-3/4*c*(z1^2+z*z2)+1/2*k*c*z",
        free_params=("r",)),
}


def catalog(name):
    """Return the named instance; raises KeyError listing valid names."""
    if name == "nls":
        raise ValueError("nls: out of scope (vector-valued system)")
    try:
        builder = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown catalog name {name!r}; "
                       f"choose from {', '.join(CATALOG_NAMES)}") from None
    inst = builder()
    if name == "deep-water":
        inst.ctx = inst.ctx.with_side_relation("c", param("k") * param("g"))
    return inst


def scaled_flux_family(sign="+"):
    """The z2t = Dx(psi) family rescaled by a parameter eta that enters
    the coframe but not the equation."""
    sgn = 1 if sign == "+" else -1
    S = Rat(sgn)
    eta, m, n = param("eta"), param("m"), param("n")
    ctx = Context()
    psi = fn("psi", z(0), z(1), z(2))
    f22 = eta * (psi - S * (m * eta * z(1) ** 2 / 2 + n * z(1)))
    rows = [[rat(0), m * eta * z(1) + n],
            [eta * z(2), f22],
            [S * eta * z(2), S * f22 - m]]
    cf = Coframe([[normalize(e, ctx) for e in row] for row in rows], 1)
    rhs = normalize(_Dx(psi, ctx), ctx)
    A, B = as_AB(rhs, ctx)
    eq = EquationSpec.class_b(A, B)
    return FamilyInstance("T32s-I", sign, 1, cf, eq, ctx,
                          {"eta": "eta", "m": "m", "n": "n"},
                          free_params=("eta",), name="scaled-flux")


def branch_from_json(doc):
    """Build an instance from the CLI-facing branch spec mapping."""
    import json as _json
    if isinstance(doc, str):
        doc = _json.loads(doc)
    functions = {}
    for role, spec in (doc.get("functions") or {}).items():
        mode = spec.get("mode", "formal")
        if mode == "formal":
            continue
        if mode != "closed":
            raise ValueError(f"unknown function mode {mode!r}")
        functions[role] = spec["expr"]
    return construct(doc["branch"], sign=doc.get("sign", "+"),
                     delta=doc.get("delta", 1),
                     params=doc.get("params") or {},
                     functions=functions)
