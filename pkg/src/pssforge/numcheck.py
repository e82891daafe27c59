"""Numerical geometry checks.

Evaluates a coframe along a certified closed-form solution on a uniform
grid, assembles the induced first fundamental form

    E = f11^2 + f21^2, F = f11 f12 + f21 f22, G = f12^2 + f22^2,

and computes its Gaussian curvature with the Brioschi determinant formula
using second-order central differences.  For a valid coframe/solution pair
the curvature must equal -delta wherever the form is nondegenerate
(E G - F^2 = (f11 f22 - f12 f21)^2 > 0).
"""

from __future__ import annotations

import math

import numpy as np

from .coframe import Coframe, EquationSpec
from .expr import (
    Add, Builtin, Context, Div, Expr, Func, Jet, Mul, Param, Pow, Rat,
    ExprError, normalize,
)

__all__ = [
    "Grid", "SolutionSampler", "MetricSample", "NumcheckError",
    "certify_solution", "metric", "brioschi_curvature", "curvature_report",
    "analytic_metric_fixture",
]

MASK_THRESHOLD = 1e-10       # nondegeneracy cutoff on E G - F^2
RESIDUAL_TOL = 1e-8          # certification tolerance for samplers
CURVATURE_TOL = 1e-3         # pass bar for max |K + delta|
MARGIN = 2                   # cells dropped at each edge for differencing


class NumcheckError(ExprError):
    pass


class Grid:
    """Uniform rectangular grid on [x0, x1] x [t0, t1]."""

    def __init__(self, x0, x1, t0, t1, nx, nt):
        if nx < 8 or nt < 8:
            raise NumcheckError("grid needs at least 8 points per direction")
        if not (x1 > x0 and t1 > t0):
            raise NumcheckError("grid extents must be increasing")
        self.x0, self.x1, self.t0, self.t1 = map(float, (x0, x1, t0, t1))
        self.nx, self.nt = int(nx), int(nt)

    @property
    def hx(self):
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def ht(self):
        return (self.t1 - self.t0) / (self.nt - 1)

    def mesh(self):
        xs = np.linspace(self.x0, self.x1, self.nx)
        ts = np.linspace(self.t0, self.t1, self.nt)
        return np.meshgrid(xs, ts, indexing="ij")

    def halved(self):
        """Same extent, half the spacing (doubled resolution)."""
        return Grid(self.x0, self.x1, self.t0, self.t1,
                    2 * self.nx - 1, 2 * self.nt - 1)

    def interior(self, field):
        """View of a field with the differencing margin stripped."""
        return field[MARGIN:-MARGIN, MARGIN:-MARGIN]


class SolutionSampler:
    """Closed-form solution with analytic jet derivatives.

    ``fields`` maps jet display names ("z", "z1", ..., "zt", "z1t", ...)
    to vectorized callables of (x, t).
    """

    def __init__(self, name, fields):
        self.name = name
        self.fields = dict(fields)

    def jets(self, X, T):
        return {k: np.asarray(f(X, T), dtype=float) + 0.0 * X
                for k, f in self.fields.items()}

    @classmethod
    def sine_gordon_kink(cls, a=1.0):
        """z = 4 atan(exp(a x + t/a)), the kink of z_{1t} = sin z."""
        a = float(a)
        if a == 0.0:
            raise NumcheckError("kink steepness must be nonzero")

        def u(X, T):
            return a * X + T / a

        def sech(w):
            return 1.0 / np.cosh(w)

        return cls(f"sine-gordon-kink(a={a})", {
            "z": lambda X, T: 4.0 * np.arctan(np.exp(u(X, T))),
            "z1": lambda X, T: 2.0 * a * sech(u(X, T)),
            "z2": lambda X, T: -2.0 * a * a * sech(u(X, T)) * np.tanh(u(X, T)),
            "z3": lambda X, T: 2.0 * a ** 3 * sech(u(X, T))
                * (np.tanh(u(X, T)) ** 2 - sech(u(X, T)) ** 2),
            "zt": lambda X, T: (2.0 / a) * sech(u(X, T)),
            "z1t": lambda X, T: -2.0 * sech(u(X, T)) * np.tanh(u(X, T)),
            "z2t": lambda X, T: 2.0 * a * sech(u(X, T))
                * (np.tanh(u(X, T)) ** 2 - sech(u(X, T)) ** 2),
        })

    @classmethod
    def kdv_soliton(cls, kappa=1.0):
        """z = -4 kappa^2 sech^2(kappa (x + 4 kappa^2 t)), solving
        z_t = z3 - 3 z z1."""
        k = float(kappa)
        if k == 0.0:
            raise NumcheckError("soliton wavenumber must be nonzero")

        def w(X, T):
            return k * (X + 4.0 * k * k * T)

        def S(X, T):              # sech^2 w
            return 1.0 / np.cosh(w(X, T)) ** 2

        def Th(X, T):             # tanh w
            return np.tanh(w(X, T))

        return cls(f"kdv-soliton(kappa={k})", {
            "z": lambda X, T: -4.0 * k * k * S(X, T),
            "z1": lambda X, T: 8.0 * k ** 3 * S(X, T) * Th(X, T),
            "z2": lambda X, T: 8.0 * k ** 4
                * (S(X, T) ** 2 - 2.0 * S(X, T) * Th(X, T) ** 2),
            "z3": lambda X, T: 32.0 * k ** 5 * S(X, T) * Th(X, T) ** 3
                - 64.0 * k ** 5 * S(X, T) ** 2 * Th(X, T),
            "zt": lambda X, T: 32.0 * k ** 5 * S(X, T) * Th(X, T),
            "z1t": lambda X, T: 32.0 * k ** 6
                * (S(X, T) ** 2 - 2.0 * S(X, T) * Th(X, T) ** 2),
            "z2t": lambda X, T: 128.0 * k ** 7 * S(X, T) * Th(X, T) ** 3
                - 256.0 * k ** 7 * S(X, T) ** 2 * Th(X, T),
        })

    @classmethod
    def zero(cls):
        """The identically-zero solution (of any homogeneous rule)."""
        names = ("z", "z1", "z2", "z3", "zt", "z1t", "z2t", "z3t")
        return cls("zero", {n: (lambda X, T: 0.0 * X) for n in names})


class MetricSample:
    """First fundamental form sampled on a grid, with nondegeneracy mask."""

    def __init__(self, E, F, G, mask):
        self.E, self.F, self.G, self.mask = E, F, G, mask


def _field(e: Expr, env, jets):
    """Vectorized evaluation of a normalized expression over grid arrays."""
    if isinstance(e, Rat):
        return float(e.value)
    if isinstance(e, Param):
        try:
            return float(env[e.name])
        except KeyError:
            raise NumcheckError(f"unbound numeric symbol {e.name!r}") from None
    if isinstance(e, Jet):
        try:
            return jets[e.display]
        except KeyError:
            raise NumcheckError(
                f"sampler lacks derivative {e.display!r}") from None
    if isinstance(e, Builtin):
        fn = getattr(np, e.name)
        return fn(_field(e.arg, env, jets))
    if isinstance(e, Func):
        try:
            f = env[e.name]
        except KeyError:
            raise NumcheckError(f"unbound function {e.name!r}") from None
        vals = [_field(a, env, jets) for a in e.args]
        if len(vals) == 1:
            return f(e.didx[0], vals[0])
        return f(e.didx, *vals)
    if isinstance(e, Add):
        return sum(_field(t, env, jets) for t in e.terms)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out = out * _field(f, env, jets)
        return out
    if isinstance(e, Pow):
        return _field(e.base, env, jets) ** e.exp
    if isinstance(e, Div):
        return _field(e.num, env, jets) / _field(e.den, env, jets)
    raise NumcheckError(f"cannot evaluate node {type(e).__name__}")


def certify_solution(s: SolutionSampler, eq: EquationSpec, g: Grid,
                     ctx: Context = None, tol=RESIDUAL_TOL):
    """Max-norm PDE residual of the sampler over the grid.

    Every evolution rule z_{kt} = rhs of the equation is checked pointwise;
    pass iff the worst residual is at most ``tol``.  The report also flags
    solutions whose x-derivative vanishes identically, which degenerate
    downstream (empty nondegeneracy mask).
    """
    ctx = ctx or Context()
    X, T = g.mesh()
    jets = s.jets(X, T)
    worst = 0.0
    for k, rhs, _prolong in eq.rules:
        name = Jet(k, True).display
        if name not in jets:
            raise NumcheckError(f"sampler lacks derivative {name!r}")
        lhs = jets[name]
        val = _field(normalize(rhs, ctx), {}, jets)
        worst = max(worst, float(np.max(np.abs(lhs - val))))
    nontrivial = float(np.max(np.abs(jets.get("z1", 0.0 * X)))) > 1e-12
    return {
        "solution": s.name,
        "max_residual": worst,
        "passed": worst <= tol,
        "non_generic": not nontrivial,
    }


def metric(c: Coframe, s: SolutionSampler, g: Grid, env,
           ctx: Context = None) -> MetricSample:
    """Induced first fundamental form along the solution.

    env binds every parameter (and any formal function) appearing in the
    coframe to numbers (resp. numeric routines).
    """
    ctx = ctx or Context()
    X, T = g.mesh()
    jets = s.jets(X, T)
    f = {}
    for i in (1, 2, 3):
        for j in (1, 2):
            f[i, j] = _field(normalize(c[i, j], ctx), env, jets) + 0.0 * X
    E = f[1, 1] ** 2 + f[2, 1] ** 2
    F = f[1, 1] * f[1, 2] + f[2, 1] * f[2, 2]
    G = f[1, 2] ** 2 + f[2, 2] ** 2
    mask = (E * G - F ** 2) > MASK_THRESHOLD
    return MetricSample(E, F, G, mask)


def _det3(m):
    (a, b, c), (d, e, f), (g, h, i) = m
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


def brioschi_curvature(m: MetricSample, g: Grid):
    """Gaussian curvature of the sampled metric by the Brioschi formula.

    Second-order central differences; entries within the edge margin and
    outside the nondegeneracy mask are NaN.
    """
    if not np.any(g.interior(m.mask)):
        raise NumcheckError("nondegeneracy mask is empty on the interior")
    E, F, G = m.E, m.F, m.G

    def du(A):
        return np.gradient(A, g.hx, axis=0, edge_order=2)

    def dv(A):
        return np.gradient(A, g.ht, axis=1, edge_order=2)

    def d2u(A):
        out = du(du(A))
        out[1:-1, :] = (A[2:, :] - 2.0 * A[1:-1, :] + A[:-2, :]) / g.hx ** 2
        return out

    def d2v(A):
        out = dv(dv(A))
        out[:, 1:-1] = (A[:, 2:] - 2.0 * A[:, 1:-1] + A[:, :-2]) / g.ht ** 2
        return out

    Eu, Ev = du(E), dv(E)
    Gu, Gv = du(G), dv(G)
    Fu, Fv = du(F), dv(F)
    Evv = d2v(E)
    Guu = d2u(G)
    Fuv = dv(Fu)

    M1 = ((-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev),
          (Fv - 0.5 * Gu, E, F),
          (0.5 * Gv, F, G))
    M2 = ((np.zeros_like(E), 0.5 * Ev, 0.5 * Gu),
          (0.5 * Ev, E, F),
          (0.5 * Gu, F, G))
    denom = (E * G - F ** 2) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (_det3(M1) - _det3(M2)) / denom
    K = np.where(m.mask, K, np.nan)
    K[:MARGIN, :] = np.nan
    K[-MARGIN:, :] = np.nan
    K[:, :MARGIN] = np.nan
    K[:, -MARGIN:] = np.nan
    return K


def curvature_report(c: Coframe, s: SolutionSampler, g: Grid, env,
                     ctx: Context = None, tol=CURVATURE_TOL):
    """Full pipeline: metric -> Brioschi curvature -> max |K + delta|."""
    ms = metric(c, s, g, env, ctx)
    K = brioschi_curvature(ms, g)
    dev = np.abs(K + c.delta)
    finite = np.isfinite(dev)
    if not np.any(finite):
        raise NumcheckError("no masked interior points to evaluate")
    return {
        "max_abs_K_plus_delta": float(np.nanmax(dev)),
        "mask_fraction": float(np.mean(ms.mask)),
        "nx": g.nx,
        "nt": g.nt,
        "hx": g.hx,
        "ht": g.ht,
        "delta": c.delta,
        "passed": bool(np.nanmax(dev) <= tol and g.hx <= 1e-2
                       and g.ht <= 1e-2),
    }, K, ms


def analytic_metric_fixture(name: str, g: Grid) -> MetricSample:
    """Closed-form metrics of known constant curvature for calibration:
    "flat" (K=0), "hyperbolic" (E=1, F=0, G=e^{2x}; K=-1) and
    "sphere" (E=1, F=0, G=sin^2 x on (0, pi); K=+1)."""
    X, _T = g.mesh()
    one = np.ones_like(X)
    zero = np.zeros_like(X)
    if name == "flat":
        E, F, G = one, zero, one
    elif name == "hyperbolic":
        E, F, G = one, zero, np.exp(2.0 * X)
    elif name == "sphere":
        E, F, G = one, zero, np.sin(X) ** 2
    else:
        raise NumcheckError(f"unknown fixture {name!r}")
    mask = (E * G - F ** 2) > MASK_THRESHOLD
    return MetricSample(E, F, G, mask)
