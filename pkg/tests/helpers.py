"""Shared utilities for the test suite: seeded randomness, random rational
parameter bindings that respect each family's admissibility constraints, a
random expression generator, and small numeric helpers."""

import os
import random
from fractions import Fraction

from pssforge.expr import (
    Add, Builtin, Div, Func, Jet, Mul, Param, Pow, Rat,
    Context, eval_numeric, normalize, total_dx,
)

SEED = int(os.environ.get("PSSFORGE_SEED", "20240824"))


def rng_for(name: str) -> random.Random:
    """Independent stream per test so reordering tests keeps them stable."""
    return random.Random(f"{SEED}:{name}")


def rand_rat(rng, nonzero=False, lo=-5, hi=5):
    while True:
        v = Fraction(rng.randint(lo, hi), rng.randint(1, 4))
        if not (nonzero and v == 0):
            return v


def collect_params(e, out=None):
    """Names of all constant parameters appearing in an expression tree."""
    if out is None:
        out = set()
    if isinstance(e, Param):
        out.add(e.name)
    elif isinstance(e, Add):
        for t in e.terms:
            collect_params(t, out)
    elif isinstance(e, Mul):
        for f in e.factors:
            collect_params(f, out)
    elif isinstance(e, Pow):
        collect_params(e.base, out)
        collect_params(e.exp, out)
    elif isinstance(e, Div):
        collect_params(e.num, out)
        collect_params(e.den, out)
    elif isinstance(e, Builtin):
        collect_params(e.arg, out)
    elif isinstance(e, Func):
        for a in e.args:
            collect_params(a, out)
    return out


def _sqrt_pair(rng):
    """Rational (rho, p) with p^2 = rho^2 - 1, via rho=(k^2+1)/2k."""
    k = rand_rat(rng, nonzero=True)
    return (k * k + 1) / (2 * k), (k * k - 1) / (2 * k)


def _radical_triple(rng, delta):
    """Rational (s, other, gamma) with s^2 = gamma + delta*other^2, gamma != 0."""
    while True:
        s = rand_rat(rng, nonzero=True)
        other = rand_rat(rng)
        gamma = s * s - delta * other * other
        if gamma != 0:
            return s, other, gamma


def random_bindings(branch, sign, delta, rng):
    """Random exact-rational parameter values satisfying the family's
    constraints (radicals realized by consistent rational choices)."""
    sgn = 1 if sign == "+" else -1
    R = lambda **kw: rand_rat(rng, **kw)
    if branch == "T32-I":
        a, b = rng.choice([(0, 1), (1, 0), (1, 1)])
        return {"a": a, "b": b, "lam": R()}
    if branch == "T32-II":
        return {"eta": R(), "alpha": R(nonzero=True), "lam": R()}
    if branch == "T33":
        s, sigma, gamma = _radical_triple(rng, delta)
        return {"s": s, "sigma": sigma, "gamma": gamma,
                "r": R(nonzero=True), "lam": R()}
    if branch == "T35-I":
        rho, p = _sqrt_pair(rng)
        return {"rho": rho, "p": p, "eta": R(nonzero=True), "lam": R()}
    if branch == "T35-II":
        while True:
            s, sigma, gamma = _radical_triple(rng, delta)
            eta, r = R(nonzero=True), R()
            if gamma * eta * eta + r * r != 0:
                return {"s": s, "sigma": sigma, "gamma": gamma,
                        "eta": eta, "r": r, "lam": R()}
    if branch == "T32s-I":
        return {"a": 1, "b": rng.choice([0, 1]),
                "m": R(), "n": R(), "alpha": R()}
    if branch == "T32s-II":
        eta, beta = R(), R()
        while True:
            alpha = R()
            if alpha != beta and alpha != -beta:
                return {"eta": eta, "alpha": alpha, "beta": beta}
    if branch == "T33s-I":
        while True:
            r = R()
            if r * r != delta:
                return {"r": r}
    if branch == "T33s-II":
        # r = 0 collapses omega1 (f12 is proportional to r), so keep it away
        s, mu, gamma = _radical_triple(rng, delta)
        return {"s": s, "mu": mu, "gamma": gamma,
                "m": R(), "r": R(nonzero=True)}
    if branch == "T35s-I":
        rho, p = _sqrt_pair(rng)
        return {"rho": rho, "p": p, "eta": R(nonzero=True), "r": R()}
    if branch == "T35s-II":
        while True:
            s, mu, gamma = _radical_triple(rng, delta)
            eta, r = R(nonzero=True), R()
            if gamma * eta * eta + r * r != 0:
                return {"s": s, "mu": mu, "gamma": gamma,
                        "eta": eta, "r": r, "m": R()}
    raise ValueError(branch)


# ---------------------------------------------------------------------------
# random expressions

_JETS = [Jet(k) for k in range(4)]
_PARAMS = [Param("eta"), Param("alpha")]


def rand_expr(rng, depth=2, trig=True):
    """Random jet expression in z..z3, eta, alpha with exact coefficients.

    Kept deliberately shallow: powers of nested fractions make exact normal
    forms grow combinatorially, which would turn a property test into a
    stress test of expression size rather than of the algebraic laws.
    """
    if depth == 0 or rng.random() < 0.35:
        pick = rng.random()
        if pick < 0.45:
            return rng.choice(_JETS)
        if pick < 0.65:
            return rng.choice(_PARAMS)
        return Rat(rand_rat(rng))
    op = rng.randrange(6 if trig else 4)
    if op == 0:
        return Add([rand_expr(rng, depth - 1, trig) for _ in range(2)])
    if op == 1:
        return Mul([rand_expr(rng, depth - 1, trig) for _ in range(2)])
    if op == 2:
        return Pow(rand_expr(rng, depth - 1, trig), 2)
    if op == 3:
        den = Add([Rat(1), Pow(rng.choice(_JETS), 2)])
        return Div(rand_expr(rng, depth - 1, trig), den)
    return Builtin(rng.choice(("sin", "cos", "exp", "cosh")),
                   rand_expr(rng, depth - 1, trig))


def jet_point(rng, top=5):
    env = {"eta": rng.uniform(-2, 2), "alpha": rng.uniform(-2, 2)}
    for k in range(top + 1):
        env[f"z{k}" if k else "z"] = rng.uniform(-1, 1)
    return env


def fd_total_dx(e, env, ctx=None, h=1e-6, top=5):
    """Central finite difference of e along the jet prolongation direction."""
    ctx = ctx or Context()
    envp, envm = dict(env), dict(env)
    for k in range(top):
        nm = f"z{k}" if k else "z"
        envp[nm] = env[nm] + h * env[f"z{k + 1}"]
        envm[nm] = env[nm] - h * env[f"z{k + 1}"]
    return (eval_numeric(e, envp, ctx) - eval_numeric(e, envm, ctx)) / (2 * h)
