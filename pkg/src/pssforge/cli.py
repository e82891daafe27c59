"""Command-line front end.

Commands: verify, catalog, conservation, curvature, export, selftest.
Exit codes: 0 pass, 1 verification failure, 2 usage or input error.
JSON output is deterministic (sorted keys); the curvature report can
additionally render a heatmap PNG next to its CSV field dump.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
from fractions import Fraction

from .expr import (
    Add, Builtin, Context, Div, Expr, Func, Jet, Mul, Param, Pow, Rat,
    ExprError, eval_numeric, format_expr, is_zero, normalize,
    partial, total_dx, z,
)
from .parser import ParseError, parse
from .coframe import (
    EquationSpec, coframe_from_json, equation_from_json,
    lemma_affine_check, lemma_linear_check, verify_describes_surface,
    zcr_check,
)
from . import families
from .families import BranchError, catalog, construct, scaled_flux_family
from .conservation import (
    SeriesError, closed_form_check, series_densities, verify_conserved,
)
from . import numcheck
from .numcheck import (
    Grid, NumcheckError, SolutionSampler, analytic_metric_fixture,
    brioschi_curvature, certify_solution, curvature_report, metric,
)

CATALOG_NAMES = (
    "sine-gordon", "camassa-holm", "kdv", "ch-r", "alt-ch-r", "kraenkel",
    "hunter-saxton", "calogero", "tzitzeica", "bullough-dodd",
    "dodd-bullough-mikhailov", "tzitzeica-dodd-bullough", "rabelo",
    "liouville-linked", "deep-water",
)

_CURVATURE_PRESETS = {
    ("sine-gordon", "kink"): {
        "sampler": lambda: SolutionSampler.sine_gordon_kink(1.0),
        "env": {"eta": 1.0},
        "window": (-1.0, -0.12, -1.03, -0.145),
    },
    ("kdv", "soliton"): {
        "sampler": lambda: SolutionSampler.kdv_soliton(1.0),
        "env": {"eta": 1.0, "alpha": 1.0},
        "window": (-0.075, 0.225, -0.01875, 0.05625),
    },
}


# ---------------------------------------------------------------------------
# LaTeX emission

_GREEK = {
    "eta": r"\eta", "alpha": r"\alpha", "beta": r"\beta", "gamma": r"\gamma",
    "sigma": r"\sigma", "rho": r"\rho", "mu": r"\mu", "lam": r"\lambda",
    "kappa": r"\kappa", "delta": r"\delta", "phi": r"\varphi",
    "psi": r"\psi", "ell": r"\ell", "srho": r"\sin\rho",
    "crho": r"\cos\rho", "theta": r"\theta", "omega": r"\omega",
}


def latex_expr(e: Expr, ctx: Context = None) -> str:
    """Deterministic LaTeX for a normalized expression."""
    return _ltx(normalize(e, ctx or Context()), 0)


def _jet_latex(j: Jet) -> str:
    if j.order == 0 and not j.t:
        return "z"
    sub = ("" if j.order == 0 else str(j.order)) + ("t" if j.t else "")
    return f"z_{{{sub}}}"


def _ltx(e: Expr, prec: int) -> str:
    # prec: 0 sum context, 1 product context, 2 power/atom context
    if isinstance(e, Rat):
        v = e.value
        if v.denominator == 1:
            s = str(v.numerator)
        else:
            sign = "-" if v < 0 else ""
            s = sign + r"\tfrac{%d}{%d}" % (abs(v.numerator), v.denominator)
        if prec >= 1 and v < 0:
            return f"({s})"
        return s
    if isinstance(e, Param):
        return _GREEK.get(e.name, e.name)
    if isinstance(e, Jet):
        return _jet_latex(e)
    if isinstance(e, Builtin):
        name = {"sin": r"\sin", "cos": r"\cos", "sinh": r"\sinh",
                "cosh": r"\cosh", "exp": r"\exp"}[e.name]
        return name + r"\!\left(" + _ltx(e.arg, 0) + r"\right)"
    if isinstance(e, Func):
        head = _GREEK.get(e.name, e.name)
        if len(e.args) == 1:
            head += "^{" + r"\prime" * e.didx[0] + "}" if e.didx[0] else ""
            return head + r"\!\left(" + _ltx(e.args[0], 0) + r"\right)"
        if any(e.didx):
            head += "_{" + ",".join(str(d) for d in e.didx) + "}"
        return head + r"\!\left(" + ", ".join(_ltx(a, 0) for a in e.args) \
            + r"\right)"
    if isinstance(e, Add):
        parts = []
        for t in e.terms:
            s = _ltx(t, 0)
            parts.append(s if not parts or s.startswith("-") else "+" + s)
        body = "".join(parts)
        return f"({body})" if prec >= 1 else body
    if isinstance(e, Mul):
        out = []
        for f in e.factors:
            out.append(_ltx(f, 1))
        body = r"\,".join(out)
        if body.startswith(r"(-1)\,"):
            body = "-" + body[len(r"(-1)\,"):]
        return f"({body})" if prec >= 2 else body
    if isinstance(e, Pow):
        return _ltx(e.base, 2) + "^{%d}" % e.exp
    if isinstance(e, Div):
        return r"\frac{%s}{%s}" % (_ltx(e.num, 0), _ltx(e.den, 0))
    raise ExprError(f"cannot render node {type(e).__name__}")


def _latex_document(inst) -> str:
    ctx = inst.ctx
    eq = inst.equation
    lines = [r"\documentclass{article}", r"\usepackage{amsmath}",
             r"\begin{document}", r"\begin{align*}"]
    if eq.class_tag == "a":
        lam = normalize(eq.lam if eq.lam is not None else Rat(0), ctx)
        lhs = "z_t" if is_zero(lam, ctx) \
            else "z_t - %s\\,z_{2t}" % _ltx(lam, 1)
        rhs = r"\left(%s\right) z_3 + %s" % (
            latex_expr(eq.A, ctx), latex_expr(eq.B, ctx))
        lines.append(f"{lhs} &= {rhs} \\\\")
    elif eq.class_tag == "b":
        rhs = r"\left(%s\right) z_3 + %s" % (
            latex_expr(eq.A, ctx), latex_expr(eq.B, ctx))
        lines.append(f"z_{{2t}} &= {rhs} \\\\")
    else:
        for k, rhs, _ in eq.rules:
            lines.append("%s &= %s \\\\" % (_jet_latex(Jet(k, True)),
                                            latex_expr(rhs, ctx)))
    for i in (1, 2, 3):
        fx = latex_expr(inst.coframe[i, 1], ctx)
        ft = latex_expr(inst.coframe[i, 2], ctx)
        tail = r" \\" if i < 3 else ""
        lines.append(r"\omega_{%d} &= \left(%s\right) dx"
                     r" + \left(%s\right) dt%s" % (i, fx, ft, tail))
    lines += [r"\end{align*}", r"\end{document}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Shared helpers


def _emit(doc, args):
    if getattr(args, "format", "json") == "json":
        print(json.dumps(doc, sort_keys=True, indent=2))
    else:
        _emit_text(doc)


def _emit_text(doc, indent=""):
    if isinstance(doc, dict):
        for k in sorted(doc):
            v = doc[k]
            if isinstance(v, (dict, list)):
                print(f"{indent}{k}:")
                _emit_text(v, indent + "  ")
            else:
                print(f"{indent}{k}: {v}")
    elif isinstance(doc, list):
        for v in doc:
            _emit_text(v, indent + "  ")
    else:
        print(f"{indent}{doc}")


def _instance_from_args(args):
    if args.branch:
        params = json.loads(args.params) if args.params else {}
        functions = json.loads(args.functions) if args.functions else {}
        closed = {}
        for role, spec in functions.items():
            if isinstance(spec, dict):
                if spec.get("mode", "formal") == "formal":
                    continue
                closed[role] = spec["expr"]
            else:
                closed[role] = spec
        inst = construct(args.branch, sign=args.sign, delta=args.delta,
                         params=params, functions=closed)
        return inst.coframe, inst.equation, inst.ctx, inst
    if not (args.coframe and args.equation):
        raise SystemExit(_usage("verify needs --branch or both --coframe "
                                "and --equation"))
    with open(args.coframe) as fh:
        cf, ctx = coframe_from_json(fh.read())
    with open(args.equation) as fh:
        eq = equation_from_json(fh.read())
    return cf, eq, ctx, None


def _usage(msg):
    print(f"error: {msg}", file=sys.stderr)
    return 2


# ---------------------------------------------------------------------------
# Commands


def cmd_verify(args):
    cf, eq, ctx, inst = _instance_from_args(args)
    rep = verify_describes_surface(cf, eq, ctx)
    doc = {"verification": rep}
    if args.lemma:
        if eq.class_tag == "a":
            lem = lemma_affine_check(cf, eq.A, eq.B, eq.lam, ctx)
        elif eq.class_tag == "b":
            lem = lemma_linear_check(cf, eq.A, eq.B, ctx)
        else:
            lem = {"ok": None,
                   "note": "characterization lemma applies to the two "
                           "evolution classes only"}
        doc["lemma"] = _lemma_doc(lem)
        if lem.get("ok") is False:
            rep["ok"] = rep["ok"] and False
    if args.zcr:
        doc["zcr"] = {"ok": zcr_check(cf, eq, ctx)}
        rep["ok"] = rep["ok"] and doc["zcr"]["ok"]
    _emit(doc, args)
    return 0 if rep["ok"] else 1


def _lemma_doc(lem):
    out = {}
    for k, v in lem.items():
        if isinstance(v, Expr):
            out[k] = format_expr(v)
        elif isinstance(v, (list, tuple)):
            out[k] = [str(x) for x in v]
        else:
            out[k] = v
    return out


def cmd_catalog(args):
    if args.action == "list":
        for name in CATALOG_NAMES:
            print(name)
        return 0
    inst = catalog(args.name)
    if args.format == "json":
        doc = {
            "name": args.name,
            "family": inst.branch,
            "sign": inst.sign,
            "delta": inst.delta,
            "free_params": list(inst.free_params),
            "flags": list(inst.flags),
            "description": inst.describe().splitlines(),
        }
        print(json.dumps(doc, sort_keys=True, indent=2))
    else:
        print(inst.describe())
    return 0


def cmd_conservation(args):
    inst = catalog(args.catalog)
    doc = {"catalog": args.catalog, "parameter": args.parameter,
           "center": args.center, "order": args.order}
    if args.closed_form:
        rep = closed_form_check(inst.coframe, inst.equation, inst.ctx)
        doc["closed_form"] = {"ok": rep["ok"],
                              "convention": rep["convention"]}
    try:
        pairs = series_densities(inst.coframe, inst.equation, args.parameter,
                                 args.center, args.order, inst.ctx)
    except SeriesError as exc:
        doc["error"] = str(exc)
        _emit(doc, args)
        return 1
    doc["pairs"] = [p.to_json() for p in pairs]
    doc["all_verified"] = all(
        verify_conserved(p, inst.equation, inst.ctx) for p in pairs)
    _emit(doc, args)
    return 0 if doc["all_verified"] else 1


def cmd_curvature(args):
    key = (args.catalog, args.solution)
    if key not in _CURVATURE_PRESETS:
        raise SystemExit(_usage(
            f"no preset solution {args.solution!r} for {args.catalog!r}; "
            "available: " + ", ".join(f"{c}/{s}" for c, s
                                      in sorted(_CURVATURE_PRESETS))))
    preset = _CURVATURE_PRESETS[key]
    inst = catalog(args.catalog)
    sampler = preset["sampler"]()
    x0, x1, t0, t1 = args.window or preset["window"]
    grid = Grid(x0, x1, t0, t1, args.nx, args.nt)
    cert = certify_solution(sampler, inst.equation, grid, inst.ctx)
    doc = {"certification": cert}
    code = 0 if cert["passed"] else 1
    if cert["passed"]:
        rep, K, ms = curvature_report(inst.coframe, sampler, grid,
                                      preset["env"], inst.ctx)
        doc["curvature"] = rep
        code = 0 if rep["passed"] else 1
        if args.plot:
            doc["artifacts"] = _render_curvature(args, grid, K, rep)
    _emit(doc, args)
    return code


def _render_curvature(args, grid, K, rep):
    import numpy as np
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = args.outdir or "."
    os.makedirs(outdir, exist_ok=True)
    stem = f"curvature_{args.catalog}_{args.solution}"
    png = os.path.join(outdir, stem + ".png")
    csv = os.path.join(outdir, stem + ".csv")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(K.T, origin="lower", aspect="auto",
                   extent=(grid.x0, grid.x1, grid.t0, grid.t1),
                   cmap="viridis")
    fig.colorbar(im, ax=ax, label="Gaussian curvature K")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(f"{args.catalog} / {args.solution}: "
                 f"max|K+delta| = {rep['max_abs_K_plus_delta']:.2e}")
    fig.tight_layout()
    fig.savefig(png, dpi=120)
    plt.close(fig)
    np.savetxt(csv, K, delimiter=",", fmt="%.12g")
    return {"heatmap": png, "field_csv": csv}


def cmd_export(args):
    if args.catalog:
        inst = catalog(args.catalog)
    else:
        inst = construct(args.branch, sign=args.sign, delta=args.delta,
                         params=json.loads(args.params) if args.params else {})
    if args.format == "latex":
        text = _latex_document(inst)
    else:
        text = inst.describe() + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_selftest(args):
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("PSSFORGE_SEED", "20240824"))
    rng = random.Random(seed)
    checks = {}

    # derivative identities against numeric differentiation
    exprs = [parse(s) for s in
             ("z*z1^2+eta*z2", "sin(z)*z1", "exp(z)/(1+z1^2)",
              "cosh(z1)+z*sinh(z)")]
    ctx = Context()
    ok = True
    for e in exprs:
        d = total_dx(e, ctx)
        for _ in range(5):
            env = {"eta": rng.uniform(-2, 2)}
            pt = {f"z{k}" if k else "z": rng.uniform(-1, 1)
                  for k in range(0, 5)}
            env.update(pt)
            h = 1e-6
            envp = dict(env)
            envm = dict(env)
            for k in range(0, 4):
                nm = f"z{k}" if k else "z"
                nx = f"z{k + 1}"
                envp[nm] = env[nm] + h * env[nx]
                envm[nm] = env[nm] - h * env[nx]
            fd = (eval_numeric(e, envp, ctx) - eval_numeric(e, envm, ctx)) \
                / (2 * h)
            ok = ok and abs(fd - eval_numeric(d, env, ctx)) < 1e-5
    checks["total_derivative_numeric"] = ok

    inst = construct("T32-II", "+", 1)
    checks["branch_T32_II"] = verify_describes_surface(
        inst.coframe, inst.equation, inst.ctx)["ok"]
    checks["catalog_count"] = len(CATALOG_NAMES) == 15

    sg = catalog("sine-gordon")
    pairs = series_densities(sg.coframe, sg.equation, "eta", "infinity", 2,
                             sg.ctx)
    checks["sine_gordon_series"] = len(pairs) == 2 and all(
        verify_conserved(p, sg.equation, sg.ctx) for p in pairs)

    import numpy as np
    g = Grid(0.0, 0.25, 0.0, 0.25, 120, 120)
    m = analytic_metric_fixture("hyperbolic", g)
    dev = float(np.nanmax(np.abs(brioschi_curvature(m, g) + 1.0)))
    checks["brioschi_hyperbolic"] = dev < 1e-5

    doc = {"seed": seed, "checks": checks,
           "passed": all(checks.values())}
    _emit(doc, args)
    return 0 if doc["passed"] else 1


# ---------------------------------------------------------------------------
# Argument parsing


def _build_parser():
    p = argparse.ArgumentParser(
        prog="pssforge",
        description="Symbolic and numerical toolkit for third-order "
                    "evolution equations describing surfaces of constant "
                    "Gaussian curvature -1 or +1.")
    sub = p.add_subparsers(dest="command", required=True)

    def fmt(sp):
        sp.add_argument("--format", choices=("json", "text"),
                        default="json", help="output format")

    sp = sub.add_parser("verify", help="check the structure equations")
    sp.add_argument("--branch", help="family id, e.g. T33")
    sp.add_argument("--sign", choices=("+", "-"), default="+")
    sp.add_argument("--delta", type=int, choices=(1, -1), default=1)
    sp.add_argument("--params", help="JSON object of parameter bindings")
    sp.add_argument("--functions", help="JSON object of function bindings")
    sp.add_argument("--coframe", help="coframe JSON file")
    sp.add_argument("--equation", help="equation JSON file")
    sp.add_argument("--lemma", action="store_true",
                    help="also run the characterization-lemma checker")
    sp.add_argument("--zcr", action="store_true",
                    help="also check the zero-curvature representation")
    fmt(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("catalog", help="named-equation catalog")
    sp.add_argument("action", choices=("list", "show"))
    sp.add_argument("name", nargs="?")
    fmt(sp)
    sp.set_defaults(func=cmd_catalog)

    sp = sub.add_parser("conservation", help="conserved density/flux pairs")
    sp.add_argument("--catalog", required=True)
    sp.add_argument("--order", type=int, default=2)
    sp.add_argument("--parameter", default="eta")
    sp.add_argument("--center", choices=("zero", "infinity"),
                    default="infinity")
    sp.add_argument("--closed-form", action="store_true",
                    help="also run the closed 1-form check")
    fmt(sp)
    sp.set_defaults(func=cmd_conservation)

    sp = sub.add_parser("curvature", help="numerical curvature report")
    sp.add_argument("--catalog", required=True)
    sp.add_argument("--solution", required=True,
                    help="preset solution name (kink, soliton)")
    sp.add_argument("--nx", type=int, default=400)
    sp.add_argument("--nt", type=int, default=400)
    sp.add_argument("--window", type=float, nargs=4,
                    metavar=("X0", "X1", "T0", "T1"))
    sp.add_argument("--plot", action="store_true",
                    help="render the curvature heatmap PNG and CSV field")
    sp.add_argument("--outdir", help="directory for plot artifacts")
    fmt(sp)
    sp.set_defaults(func=cmd_curvature)

    sp = sub.add_parser("export", help="LaTeX/text export of a family")
    sp.add_argument("--branch")
    sp.add_argument("--catalog")
    sp.add_argument("--sign", choices=("+", "-"), default="+")
    sp.add_argument("--delta", type=int, choices=(1, -1), default=1)
    sp.add_argument("--params")
    sp.add_argument("--format", choices=("latex", "text"), default="latex")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("selftest", help="quick end-to-end sanity run")
    sp.add_argument("--seed", type=int)
    fmt(sp)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except (ParseError, BranchError, ValueError, KeyError, OSError,
            json.JSONDecodeError, ExprError, NumcheckError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
