"""Family constructors: admissibility, defaults, catalog, JSON entry point."""

import json

import pytest

from pssforge.expr import Rat, format_expr, is_zero, normalize
from pssforge.parser import parse
from pssforge.coframe import verify_describes_surface
from pssforge.families import (
    ADMISSIBLE_DELTA, BRANCHES, BranchError, branch_from_json, catalog,
    construct, scaled_flux_family,
)

CATALOG_NAMES = (
    "sine-gordon", "camassa-holm", "kdv", "ch-r", "alt-ch-r", "kraenkel",
    "hunter-saxton", "calogero", "tzitzeica", "bullough-dodd",
    "dodd-bullough-mikhailov", "tzitzeica-dodd-bullough", "rabelo",
    "liouville-linked", "deep-water",
)


def test_eleven_families_and_their_curvature_signs():
    assert len(BRANCHES) == 11
    assert set(ADMISSIBLE_DELTA) == set(BRANCHES)
    both = {b for b, ds in ADMISSIBLE_DELTA.items() if ds == (1, -1)}
    assert both == {"T33", "T35-II", "T33s-I", "T33s-II", "T35s-II"}


def test_unknown_family_rejected():
    with pytest.raises(ValueError):
        construct("T99")


def test_bad_sign_rejected():
    with pytest.raises(ValueError):
        construct("T32-II", sign="?")


def test_inadmissible_curvature_sign_rejected():
    with pytest.raises(BranchError):
        construct("T32-II", delta=-1)


def test_constraint_violation_rejected():
    with pytest.raises(BranchError) as exc:
        construct("T32-II", params={"alpha": 0})
    assert "alpha" in str(exc.value)


def test_binary_parameter_constraint():
    with pytest.raises(BranchError):
        construct("T32-I", params={"a": 2, "b": 0})


def test_degenerate_oscillator_regime_rejected():
    with pytest.raises(BranchError) as exc:
        construct("T33s-I", delta=1, params={"r": 1})
    assert "oscillator" in str(exc.value)
    # fine in the other curvature sign, where r^2 - delta cannot vanish
    inst = construct("T33s-I", delta=-1, params={"r": 1})
    assert verify_describes_surface(inst.coframe, inst.equation,
                                    inst.ctx)["ok"]


def test_unknown_function_role_rejected():
    with pytest.raises(ValueError):
        construct("T32-II", functions={"g": "u"})


def test_catalog_names_complete():
    for name in CATALOG_NAMES:
        inst = catalog(name)
        assert inst.name == name
    with pytest.raises(ValueError):
        catalog("nls")


def test_catalog_instances_all_verify():
    for name in CATALOG_NAMES:
        inst = catalog(name)
        rep = verify_describes_surface(inst.coframe, inst.equation, inst.ctx)
        assert rep["ok"], (name, rep)


def test_describe_mentions_equation_and_forms():
    text = catalog("kdv").describe()
    assert "z3" in text and "omega1" in text and "delta: +1" in text


def test_scaled_flux_family_free_parameter():
    inst = scaled_flux_family()
    assert inst.free_params == ("eta",)
    rep = verify_describes_surface(inst.coframe, inst.equation, inst.ctx)
    assert rep["ok"]


def test_default_binary_parameters_applied():
    inst = construct("T32-I")
    # defaults a = b = 1
    assert is_zero(normalize(inst.coframe[1, 1] + Rat(1), inst.ctx), inst.ctx)


def test_branch_from_json_closed_function():
    doc = {"branch": "T32-II", "sign": "-", "delta": 1,
           "params": {"lam": 0},
           "functions": {"h": {"mode": "closed", "expr": "u"}}}
    inst = branch_from_json(json.dumps(doc))
    kdv = catalog("kdv")
    assert is_zero(normalize(inst.equation.A - kdv.equation.A, inst.ctx),
                   inst.ctx)
    assert is_zero(normalize(inst.equation.B - kdv.equation.B, inst.ctx),
                   inst.ctx)


def test_branch_from_json_unknown_mode():
    with pytest.raises(ValueError):
        branch_from_json({"branch": "T32-II",
                          "functions": {"h": {"mode": "numeric"}}})


def test_rational_parameters_accepted_as_text():
    inst = construct("T32-II", params={"alpha": "3/2", "eta": "-1/3"})
    rep = verify_describes_surface(inst.coframe, inst.equation, inst.ctx)
    assert rep["ok"]
    assert "alpha" not in format_expr(normalize(inst.coframe[3, 1], inst.ctx))
