"""Numeric side: grids, exact-solution samplers, metric, curvature."""

import numpy as np
import pytest

from pssforge.families import catalog
from pssforge.numcheck import (
    Grid, MetricSample, NumcheckError, SolutionSampler,
    analytic_metric_fixture, brioschi_curvature, certify_solution,
    curvature_report, metric,
)

from helpers import rng_for


def test_grid_validation_and_spacing():
    with pytest.raises(NumcheckError):
        Grid(0, 1, 0, 1, 4, 100)
    g = Grid(0.0, 1.0, 0.0, 2.0, 101, 51)
    assert abs(g.hx - 0.01) < 1e-15
    assert abs(g.ht - 0.04) < 1e-15
    X, T = g.mesh()
    assert X.shape == (101, 51)


def test_grid_halved_keeps_extent():
    g = Grid(0.0, 1.0, 0.0, 1.0, 9, 9)
    h = g.halved()
    assert h.nx == 17 and h.nt == 17
    assert (h.x0, h.x1, h.t0, h.t1) == (g.x0, g.x1, g.t0, g.t1)
    assert abs(h.hx - g.hx / 2) < 1e-15


def test_kink_sampler_jets_are_consistent_derivatives():
    s = SolutionSampler.sine_gordon_kink(0.8)
    rng = rng_for("sampler-fd")
    eps = 1e-6
    for _ in range(20):
        x = np.array([rng.uniform(-1.5, 1.5)])
        t = np.array([rng.uniform(-1.5, 1.5)])
        j = s.jets(x, t)
        jp = s.jets(x + eps, t)
        jm = s.jets(x - eps, t)
        for lo, hi in (("z", "z1"), ("z1", "z2"), ("z2", "z3"),
                       ("zt", "z1t"), ("z1t", "z2t")):
            fd = (jp[lo][0] - jm[lo][0]) / (2 * eps)
            assert abs(fd - j[hi][0]) < 1e-6 * max(1.0, abs(j[hi][0]))
        jtp = s.jets(x, t + eps)
        jtm = s.jets(x, t - eps)
        fd_t = (jtp["z"][0] - jtm["z"][0]) / (2 * eps)
        assert abs(fd_t - j["zt"][0]) < 1e-6 * max(1.0, abs(j["zt"][0]))


def test_soliton_sampler_solves_kdv():
    s = SolutionSampler.kdv_soliton(1.0)
    inst = catalog("kdv")
    g = Grid(-0.15, 0.45, -0.05, 0.05, 50, 50)
    cert = certify_solution(s, inst.equation, g, inst.ctx)
    assert cert["passed"], cert
    assert cert["max_residual"] < 1e-10


def test_kink_sampler_solves_sine_gordon():
    s = SolutionSampler.sine_gordon_kink(1.0)
    inst = catalog("sine-gordon")
    g = Grid(-1.0, -0.12, -1.03, -0.145, 50, 50)
    cert = certify_solution(s, inst.equation, g, inst.ctx)
    assert cert["passed"], cert


def test_constant_solution_flagged_non_generic():
    s = SolutionSampler.zero()
    inst = catalog("kdv")
    g = Grid(0.0, 1.0, 0.0, 1.0, 16, 16)
    cert = certify_solution(s, inst.equation, g, inst.ctx)
    assert cert["non_generic"]


def test_wrong_solution_fails_certification():
    s = SolutionSampler.sine_gordon_kink(1.0)
    inst = catalog("kdv")
    g = Grid(-1.0, -0.12, -1.03, -0.145, 24, 24)
    cert = certify_solution(s, inst.equation, g, inst.ctx)
    assert not cert["passed"]


def test_metric_positive_on_kink_window():
    inst = catalog("sine-gordon")
    s = SolutionSampler.sine_gordon_kink(1.0)
    g = Grid(-1.0, -0.12, -1.03, -0.145, 40, 40)
    ms = metric(inst.coframe, s, g, {"eta": 1.0}, inst.ctx)
    assert ms.mask.all()
    assert (ms.E * ms.G - ms.F ** 2 > 0).all()


def test_fixture_names():
    g = Grid(0.0, 0.25, 0.0, 0.25, 32, 32)
    for name in ("flat", "hyperbolic", "sphere"):
        ms = analytic_metric_fixture(name, g)
        assert ms.E.shape == (32, 32)
    with pytest.raises(NumcheckError):
        analytic_metric_fixture("torus", g)


def test_brioschi_flat_metric_is_exactly_zero():
    g = Grid(0.0, 0.25, 0.0, 0.25, 64, 64)
    K = brioschi_curvature(analytic_metric_fixture("flat", g), g)
    assert np.nanmax(np.abs(K)) < 1e-12


def test_brioschi_rejects_fully_degenerate_metric():
    g = Grid(0.0, 1.0, 0.0, 1.0, 32, 32)
    X, _ = g.mesh()
    one = np.ones_like(X)
    # E*G - F^2 == 0 everywhere: no cell admits a curvature value
    ms = MetricSample(one, one, one, (one * one - one ** 2) > 1e-10)
    with pytest.raises(NumcheckError):
        brioschi_curvature(ms, g)


def test_curvature_report_pass_flag_requires_fine_spacing():
    inst = catalog("sine-gordon")
    s = SolutionSampler.sine_gordon_kink(1.0)
    coarse = Grid(-1.0, -0.12, -1.03, -0.145, 16, 16)
    report, _, _ = curvature_report(inst.coframe, s, coarse, {"eta": 1.0},
                                    inst.ctx)
    assert report["hx"] > 1e-2
    assert not report["passed"]


def test_curvature_report_kink():
    inst = catalog("sine-gordon")
    s = SolutionSampler.sine_gordon_kink(1.0)
    g = Grid(-1.0, -0.12, -1.03, -0.145, 160, 160)
    report, K, ms = curvature_report(inst.coframe, s, g, {"eta": 1.0},
                                     inst.ctx)
    assert report["delta"] == 1
    assert report["max_abs_K_plus_delta"] <= 1e-3
    assert K.shape == (160, 160)
    assert 0.0 < report["mask_fraction"] <= 1.0
