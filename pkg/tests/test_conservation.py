"""Angle construction, closed form, parameter-series conservation laws."""

import pytest

from pssforge.expr import Context, Rat, format_expr, is_zero, normalize
from pssforge.parser import parse
from pssforge.families import catalog, construct
from pssforge.conservation import (
    ConservedPair, SeriesError, closed_form_check, pfaffian,
    series_densities, strip_exact, verify_conserved,
)


def _sg():
    return catalog("sine-gordon")


def test_pfaffian_components_sine_gordon():
    inst = _sg()
    rho_x, rho_t = pfaffian(inst.coframe, inst.ctx)
    # rho_x = f31 + sin(rho) f11 + cos(rho) f21
    expected = normalize(parse("z1") + parse("srho") * Rat(0)
                         + parse("crho") * parse("eta"), inst.ctx)
    assert is_zero(normalize(rho_x - expected, inst.ctx), inst.ctx)
    assert rho_t is not None


def test_pfaffian_rejects_spherical_coframe_by_default():
    inst = construct("T33", delta=-1)
    with pytest.raises(ValueError):
        pfaffian(inst.coframe, inst.ctx)
    # the hyperbolic-angle variant is gated behind an explicit flag
    assert pfaffian(inst.coframe, inst.ctx, allow_ss=True) is not None


def test_closed_form_sine_gordon_both_conventions():
    inst = _sg()
    assert closed_form_check(inst.coframe, inst.equation, inst.ctx)["ok"]
    # flipping the angle convention is rho -> rho + pi; closure is preserved
    assert closed_form_check(inst.coframe, inst.equation, inst.ctx,
                             flip_sign=True)["ok"]


def test_closed_form_fails_on_wrong_equation():
    # needs a coframe whose dx-column carries jets, otherwise the closure
    # computation never consults the evolution rule at all
    ch = catalog("camassa-holm")
    wrong = catalog("kdv").equation
    assert closed_form_check(ch.coframe, ch.equation, ch.ctx)["ok"]
    report = closed_form_check(ch.coframe, wrong, ch.ctx)
    assert not report["ok"]
    assert report["residual"] != "0"


def test_sine_gordon_series_frozen_densities():
    inst = _sg()
    pairs = series_densities(inst.coframe, inst.equation, "eta",
                             center="infinity", order=2, ctx=inst.ctx)
    assert [p.order for p in pairs] == [1, 2]
    expected = {1: ("1/2*z1^2", "-cos(z)"), 2: ("-z2*z1", "-z1*sin(z)")}
    for p in pairs:
        dens, flux = expected[p.order]
        assert is_zero(normalize(p.density - parse(dens), inst.ctx), inst.ctx)
        assert is_zero(normalize(p.flux - parse(flux), inst.ctx), inst.ctx)
        assert not p.trivial
        assert verify_conserved(p, inst.equation, inst.ctx)


def test_series_requires_known_parameter():
    inst = _sg()
    with pytest.raises(SeriesError):
        series_densities(inst.coframe, inst.equation, "nope",
                         center="infinity", order=1, ctx=inst.ctx)


def test_kdv_series_raises_with_differential_diagnosis():
    # The cataloged coframe has parameter-independent det X = -z/2, so the
    # recursion for the angle coefficients turns differential (a Riccati
    # relation) instead of algebraic.  The failure must be loud and explain
    # itself per candidate leading angle.
    inst = catalog("kdv")
    with pytest.raises(SeriesError) as exc:
        series_densities(inst.coframe, inst.equation, "eta",
                         center="infinity", order=2, ctx=inst.ctx)
    msg = str(exc.value)
    assert "per-branch diagnosis" in msg
    assert "differential, not algebraic" in msg
    assert "D_x(rho_2)" in msg


def test_verify_conserved_rejects_wrong_flux():
    inst = _sg()
    bad = ConservedPair(1, parse("1/2*z1^2"), parse("cos(z)"))
    assert not verify_conserved(bad, inst.equation, inst.ctx)


def test_strip_exact_removes_total_derivative_tail():
    inst = _sg()
    pair = ConservedPair(1, parse("1/2*z1^2+z2"), parse("-cos(z)+sin(z)"))
    assert verify_conserved(pair, inst.equation, inst.ctx)
    stripped = strip_exact(pair, inst.equation, inst.ctx)
    assert is_zero(normalize(stripped.density - parse("1/2*z1^2"), inst.ctx),
                   inst.ctx)
    assert is_zero(normalize(stripped.flux - parse("-cos(z)"), inst.ctx),
                   inst.ctx)
    assert verify_conserved(stripped, inst.equation, inst.ctx)


def test_strip_exact_detects_fully_trivial_density():
    inst = _sg()
    pairs = series_densities(inst.coframe, inst.equation, "eta",
                             center="infinity", order=2, ctx=inst.ctx)
    second = next(p for p in pairs if p.order == 2)
    # -z1*z2 = D_x(-z1^2/2) carries no conserved content
    stripped = strip_exact(second, inst.equation, inst.ctx)
    assert stripped.trivial
    assert is_zero(normalize(stripped.density, inst.ctx), inst.ctx)


def test_pair_json_shape():
    pair = ConservedPair(1, parse("1/2*z1^2"), parse("-cos(z)"))
    doc = pair.to_json()
    assert doc["order"] == 1
    assert doc["verified"] is True
    assert parse(doc["density"]) is not None
    assert parse(doc["flux"]) is not None
