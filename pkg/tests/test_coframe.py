"""Coframes, structure residuals, the linear problem, gauge action, JSON."""

import pytest

from pssforge.expr import (
    Builtin, ExprError, Jet, Param, Rat, Context, format_expr, is_zero,
    normalize,
)
from pssforge.parser import parse
from pssforge.coframe import (
    Coframe, EquationSpec, Mat2,
    coframe_from_json, coframe_to_json, conjugated_residual,
    equation_from_json, equation_to_json, gauge_transform,
    lemma_linear_check, structure_residuals, verify_describes_surface,
    zcr_matrices, zcr_residual,
)
from pssforge.families import catalog, construct

CTX = Context()


def _sg():
    return catalog("sine-gordon")


def test_coframe_shape_validation():
    with pytest.raises(ExprError):
        Coframe([[Rat(0)]], 1)
    with pytest.raises(ExprError):
        Coframe([[Rat(0), Rat(0)]] * 3, 2)


def test_indexing_is_one_based():
    inst = _sg()
    assert format_expr(inst.coframe[2, 1]) == "eta"


def test_nondegeneracy_witness():
    inst = _sg()
    w = inst.coframe.nondegeneracy_witness(inst.ctx)
    assert is_zero(w - parse("-sin(z)"), inst.ctx)
    assert inst.coframe.is_nondegenerate(inst.ctx)
    flat = Coframe([[Rat(1), Rat(0)], [Rat(1), Rat(0)], [Rat(0), Rat(0)]], 1)
    assert not flat.is_nondegenerate()


def test_structure_residuals_vanish_on_sine_gordon():
    inst = _sg()
    res = structure_residuals(inst.coframe, inst.equation, inst.ctx)
    assert all(r == Rat(0) for r in res)


def test_structure_residuals_flag_perturbation():
    inst = _sg()
    cf = inst.coframe
    bad = Coframe([[cf[1, 1], normalize(cf[1, 2] + Jet(1), inst.ctx)],
                   [cf[2, 1], cf[2, 2]],
                   [cf[3, 1], cf[3, 2]]], cf.delta)
    res = structure_residuals(bad, inst.equation, inst.ctx)
    assert any(r != Rat(0) for r in res)
    assert not verify_describes_surface(bad, inst.equation, inst.ctx)["ok"]


def test_equation_reduce_class_a_keeps_z2t_formal():
    eq = EquationSpec.class_a(parse("z"), parse("-z1"), lam=parse("1"))
    red = eq.reduce(parse("zt"), CTX)
    assert "z2t" in format_expr(red)


def test_equation_reduce_generic_prolongs():
    eq = EquationSpec.generic([(1, parse("sin(z)"))])
    red = eq.reduce(parse("z2t"), CTX)
    assert is_zero(red - parse("z1*cos(z)"), CTX)


def test_zcr_residual_vanishes_both_curvature_signs():
    for name, sign, delta in (("T32-II", "+", 1), ("T33", "+", -1)):
        inst = construct(name, sign=sign, delta=delta)
        X, T = zcr_matrices(inst.coframe)
        assert zcr_residual(X, T, inst.equation, inst.ctx).is_zero(inst.ctx)


def test_zcr_residual_nonzero_on_wrong_equation():
    inst = _sg()
    X, T = zcr_matrices(inst.coframe)
    wrong = EquationSpec.generic([(1, Builtin("cos", Jet(0)))])
    assert not zcr_residual(X, T, wrong, inst.ctx).is_zero(inst.ctx)


def test_gauge_requires_unimodular_matrix():
    inst = _sg()
    X, T = zcr_matrices(inst.coframe)
    S = Mat2([[Rat(2), Rat(0)], [Rat(0), Rat(1)]])
    with pytest.raises(ExprError):
        gauge_transform(X, T, S, inst.ctx)


def test_gauge_transform_preserves_flatness():
    inst = _sg()
    X, T = zcr_matrices(inst.coframe)
    S = Mat2([[Rat(1), Jet(0)], [Rat(0), Rat(1)]])
    Xs, Ts = gauge_transform(X, T, S, inst.ctx)
    assert conjugated_residual(Xs, Ts, S, inst.equation,
                               inst.ctx).is_zero(inst.ctx)


def test_coframe_json_round_trip():
    inst = construct("T33", sign="+", delta=-1)
    text = coframe_to_json(inst.coframe, inst.ctx)
    cf2, ctx2 = coframe_from_json(text)
    assert cf2.delta == inst.coframe.delta
    for i in (1, 2, 3):
        for j in (1, 2):
            assert is_zero(normalize(cf2[i, j] - inst.coframe[i, j], ctx2),
                           ctx2)
    # side relation survives the round trip
    assert is_zero(normalize(parse("s^2-gamma+sigma^2"), ctx2), ctx2)


def test_equation_json_round_trip():
    inst = catalog("kdv")
    eq2 = equation_from_json(equation_to_json(inst.equation))
    assert eq2.class_tag == inst.equation.class_tag
    assert is_zero(normalize(eq2.A - inst.equation.A, inst.ctx), inst.ctx)
    assert is_zero(normalize(eq2.B - inst.equation.B, inst.ctx), inst.ctx)


def test_lemma_reports_violation_names():
    # second column unrelated to the first: several identities must break
    cf = Coframe([[Param("eta"), Jet(1)],
                  [Jet(2), Rat(0)],
                  [Jet(2), Rat(0)]], 1)
    lem = lemma_linear_check(cf, parse("1"), parse("0"), CTX)
    assert not lem["ok"]
    assert lem["violations"]
    assert all(isinstance(v, str) for v in lem["violations"])
