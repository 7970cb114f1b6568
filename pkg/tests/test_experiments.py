import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diraclab.domain import BaseSpinorProfile, make_domain
from diraclab.experiments import (ExperimentError, IDENTITIES, absorption_margin, algebra_suite,
                                  collapse_distance, dyadic_annuli, fit_decay, gauge_wave_configuration,
                                  harnack_ratio, kato_defect, l12_norm, oracle_slope, prepare,
                                  radial_decay_oracle, rescale, run_axis_decay, run_green_comparison,
                                  run_linear_decay, run_nonlinear_decay, shell_profile,
                                  shoot_two_component, sw_residual_case1, sweep_regression)
from diraclab.solvers import center_node, green_solve
from diraclab.swalgebra import case_data, zero_locus_spinor


def slab(nodes=64, length=4.0):
    h = length / nodes
    return make_domain(L=(length, 8 * h, 8 * h), N=(nodes, 8, 8), singular_set="plane")


# ---------------------------------------------------------------- oracles and fits

def test_two_component_oracle_slope():
    assert abs(oracle_slope(1.0, 0.1) / -10.0 - 1) <= 1e-6


def test_shooting_removes_growing_mode():
    x, ys = shoot_two_component(2.0, 0.1, 1.0)
    # bounded solution q1 = -q2 = e^{-20 x}; roundoff grows like e^{20 x} toward the far end
    near = x <= 0.6
    assert np.allclose(ys[near, 0], np.exp(-20 * x[near]), rtol=1e-4)
    assert np.allclose(ys[near, 1], -np.exp(-20 * x[near]), rtol=1e-4)


def test_radial_oracle_collapses_in_s_not_t():
    def curves(var):
        out = {}
        for e in (0.2, 0.1, 0.05):
            r, y = radial_decay_oracle(e, geometric=False)
            out[e] = (rescale(r, e, var), y)
        return out
    assert max(collapse_distance(curves("s"), 1, 4)[2].values()) < 1e-10
    assert max(collapse_distance(curves("t"), 1, 4)[2].values()) > 0.25


def test_collapse_identical_profiles():
    x = np.linspace(0, 5, 50)
    _, _, pairs = collapse_distance({0.1: (x, -x), "0.1b": (x, -x)}, 1, 4)
    assert list(pairs.values()) == [0.0]


def test_collapse_needs_coverage():
    x = np.linspace(2, 5, 50)
    with pytest.raises(ExperimentError):
        collapse_distance({0.1: (x, -x)}, 1, 4)


def test_shells_are_even_multiples():
    dom = make_domain(L=2.0, N=16)
    R, sup = shell_profile(dom, np.ones(dom.n_nodes))
    assert np.allclose(R / (2 * dom.h), np.round(R / (2 * dom.h)))
    assert np.all(sup == 1.0)


def test_fit_decay_floor():
    R = np.arange(10) * 0.1
    sup = np.exp(-3 * R)
    slope, _, r2, used = fit_decay(R, sup, 0.0, 1.0, 0.0)
    assert np.isclose(slope, -3) and np.isclose(r2, 1) and used == 10
    with pytest.raises(ExperimentError):
        fit_decay(R, sup, 0.0, 1.0, 0.6)


def test_sweep_regression_exact():
    class R:
        def __init__(self, eps):
            self.eps, self.slope, self.Lambda_K = eps, -1.3 / eps, 1.0
    s = sweep_regression([R(e) for e in (0.2, 0.1, 0.05)])
    assert np.isclose(s["c_fit"], 1.3) and s["max_rel_deviation"] < 1e-12 and s["r2"] > 0.999999


# ---------------------------------------------------------------- discrete norms

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_kato_never_positive(seed):
    dom = make_domain(L=1.0, N=8)
    q = np.random.default_rng(seed).standard_normal((dom.n_nodes, 5))
    assert kato_defect(dom, q) <= 1e-12


def test_l12_of_constant():
    dom = make_domain(L=2.0, N=8)
    q = np.tile([3.0, 4.0], (dom.n_nodes, 1))
    assert np.isclose(l12_norm(dom, q), 5.0 * np.sqrt(8.0))


# ---------------------------------------------------------------- decay runs

def test_axis_pipeline_matches_oracle():
    rep = run_axis_decay(nodes=128)
    assert abs(rep.slope / oracle_slope(1.0, 0.1) - 1) <= 0.10
    assert rep.deep_regime and rep.r2 > 0.999
    assert all(s >= 0 for s in rep.shell_sup)


def test_zero_perturbation_gives_flat_profile():
    dom = slab(48, 3.0)
    rep = run_linear_decay(dom, case_data("I"), BaseSpinorProfile("constant_gap", 0.0), 0.1, mode="kernel")
    assert rep.lambda_min <= 1e-8
    assert abs(rep.slope) <= 0.1 / 3.0


def test_small_compact_radius_rejected():
    dom = slab()
    with pytest.raises(ExperimentError):
        run_linear_decay(dom, case_data("I"), BaseSpinorProfile("constant_gap"), 0.1, R_K=dom.h)


def test_kernel_mode_decays():
    dom = slab(128)
    rep = run_linear_decay(dom, case_data("I"), BaseSpinorProfile("sqrt_dist"), 0.1, mode="kernel")
    assert rep.deep_regime and rep.slope < -5
    assert 0 < rep.lambda_min < 200.0 / 0.1


def test_nonlinear_zero_coupling_is_linear():
    dom = slab()
    d = case_data("I")
    prof = BaseSpinorProfile("constant_gap")
    setup = prepare(dom, d, prof)
    lin = run_linear_decay(dom, d, None, 0.1, seed=5, setup=setup)
    nl = run_nonlinear_decay(dom, d, None, 0.1, 0.0, seed=5, setup=setup)
    a, b = lin.to_dict(), nl.decay.to_dict()
    a["solver"].pop("wall_time")
    b["solver"].pop("wall_time")
    assert a == b


def test_nonlinear_small_coupling():
    dom = slab()
    d = case_data("I")
    setup = prepare(dom, d, BaseSpinorProfile("constant_gap"))
    lin = run_linear_decay(dom, d, None, 0.1, setup=setup)
    nl = run_nonlinear_decay(dom, d, None, 0.1, 0.01, setup=setup)
    assert nl.converged and nl.condition_ok
    assert abs(nl.decay.slope / lin.slope - 1) <= 0.15
    assert all(r <= 0.5 for r in nl.contraction_ratios)


def test_nonlinear_flags_large_coupling():
    dom = slab()
    d = case_data("I")
    nl = run_nonlinear_decay(dom, d, BaseSpinorProfile("constant_gap"), 0.1, 50.0, amplitude=5.0, max_steps=6)
    assert not nl.condition_ok
    assert "threshold" in nl.diagnosis


# ---------------------------------------------------------------- Green's functions and annuli

def test_green_flat_ratio_below_one():
    rep = run_green_comparison(0.5, 10.0, 0.0, N=32)
    assert rep.regime_ok and rep.max_ratio_grid <= 1.0 and rep.max_ratio_oracle <= 1.0


def test_absorption_regime():
    r = np.linspace(0.01, 0.5, 100)
    assert absorption_margin(3, 20.0, 0.1, r) <= 1.0
    assert absorption_margin(3, 20.0, 0.0, r) == 0.0
    assert absorption_margin(3, 0.5, 5.0, r) > 1.0


def test_regime_violation_is_flagged():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = run_green_comparison(1.0, 0.5, 5.0, N=16)
    assert not rep.regime_ok and caught


def test_dyadic_examples():
    radii = dyadic_annuli(1.0, 10.0, 1e-3)
    assert np.allclose(radii[:3], [1.0, 0.9, 0.8])
    widths = -np.diff(radii)
    assert np.all(widths <= 0.1 + 1e-15) and np.all(np.diff(radii) < 0) and min(radii) > 0
    tail = [r for r in radii if r < 0.5]
    assert np.allclose(np.array(tail[1:]) / np.array(tail[:-1]), 0.8)
    with pytest.raises(ValueError):
        dyadic_annuli(0.0, 1.0, 0.1)


def test_harnack_constant_and_bounds():
    dom = make_domain(boundary="dirichlet_ball", R0=1.0, N=32)
    x0 = center_node(dom)
    radii = dyadic_annuli(0.8, 5.0, 3 * dom.h)
    ratios, _ = harnack_ratio(dom, np.ones(dom.n_nodes), x0, radii)
    assert ratios.size and np.all(ratios == 1.0)
    G, _ = green_solve(dom, 5.0, x0)
    ratios, _ = harnack_ratio(dom, G, x0, radii, sectors_per_annulus=8)
    assert np.all(ratios >= 1.0) and np.all(np.isfinite(ratios))


# ---------------------------------------------------------------- Seiberg-Witten residual

def test_sw_residual_trivial():
    dom = make_domain(L=2 * np.pi, N=8)
    u = zero_locus_spinor(case_data("I"))
    Phi = np.tile(2.0 * u, (dom.n_nodes, 1))
    r1, r2, r3 = sw_residual_case1(dom, Phi, np.zeros((dom.n_nodes, 3)), 0.1)
    norm = 2.0 * np.sqrt(dom.n_nodes * dom.cell_volume)
    assert r1 == 0.0 and r2 <= 1e-12 and np.isclose(r3, abs(norm - 1))


def test_sw_residual_quadratic(rng):
    dom = make_domain(L=2 * np.pi, N=8)
    Phi = rng.standard_normal((dom.n_nodes, 8))
    A = np.zeros((dom.n_nodes, 3))
    base = sw_residual_case1(dom, Phi, A, 0.1)[1]
    assert np.isclose(sw_residual_case1(dom, 3.0 * Phi, A, 0.1)[1], 9.0 * base)


def test_sw_residual_second_order():
    res = []
    for N in (8, 16, 32):
        dom = make_domain(L=2 * np.pi, N=N)
        res.append(sw_residual_case1(dom, *gauge_wave_configuration(dom, 1.0), 0.1))
    r1 = [r[0] for r in res]
    assert all(3.5 < a / b < 4.5 for a, b in zip(r1[:-1], r1[1:]))
    assert all(r[1] < 1e-12 and r[2] < 1e-12 for r in res)


def test_sw_residual_dimension_error():
    dom = make_domain(L=1.0, N=8)
    with pytest.raises(ValueError):
        sw_residual_case1(dom, np.zeros((dom.n_nodes, 4)), np.zeros((dom.n_nodes, 3)), 0.1)


# ---------------------------------------------------------------- algebra suite

def test_algebra_suite_clean_and_corrupt():
    clean = algebra_suite(samples=20, seed=1)
    assert set(clean) == {"I", "II", "III", "IV"}
    assert all(set(v) == set(IDENTITIES) for v in clean.values())
    assert max(max(v.values()) for v in clean.values()) <= 1e-12
    bad = algebra_suite(["II"], samples=20, seed=1, corrupt=True)["II"]
    assert bad["gamma_symbol"] > 0.1 and bad["commutation"] > 0.1
    assert algebra_suite([], samples=5) == {}
