"""Decay, collapse, Green's-function and Seiberg-Witten residual experiments on model grids."""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import (SparseOperator, assemble_D, assemble_Deps, perturbation_field,
                       _node_blocks)
from .domain import BaseSpinorProfile, GridDomain, make_domain, sample_phi0
from .solvers import (SolverError, center_node, green_solve, kernel_approx,
                      radial_green_ode, solve_inhomogeneous, yukawa, _rk4)
from .clifford import clifford_defect, grading_defect
from .swalgebra import (CASES, SWCaseData, build_A, build_A_eps, case_data, commutation_defect,
                        corrupt_gamma, gamma_action, linearized_moment, moment_map,
                        splitting_at, total_clifford, verify_identity_pair, zero_locus_spinor,
                        _spinor)

log = logging.getLogger(__name__)

EPS_MACH = np.finfo(float).eps


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------- algebra suite

IDENTITIES = ("clifford", "grading", "gamma_symbol", "moment_symbol", "moment_duality",
              "commutation", "commutation_perturbed", "block_degeneracy", "zero_locus")


def _orbit_point(data: SWCaseData, rng) -> np.ndarray:
    """Random scale and group rotation of the reference zero-locus spinor."""
    gen = sum(c * m for c, m in zip(rng.standard_normal(data.lie_dim), data.lie_action))
    return rng.uniform(0.2, 3.0) * (scipy.linalg.expm(gen) @ _spinor(data, zero_locus_spinor(data)))


def algebra_suite(cases=CASES, samples: int = 1000, seed: int = 0, corrupt: bool = False) -> dict:
    """Max defect per identity and case over random fibers."""
    rng = np.random.default_rng(seed)
    out = {}
    for cid in cases:
        data = case_data(cid)
        if corrupt:
            data = corrupt_gamma(data)
        worst = dict.fromkeys(IDENTITIES, 0.0)
        model = total_clifford(data)
        worst["clifford"] = clifford_defect(model)
        worst["grading"] = grading_defect(model)
        ns, nf = data.total_spinor_dim, data.form_dim
        for _ in range(samples):
            xi = rng.standard_normal(data.dim)
            a = rng.standard_normal(nf)
            phi, psi = rng.standard_normal(ns), rng.standard_normal(ns)
            d1, d2 = verify_identity_pair(data, xi, a, phi, psi)
            worst["gamma_symbol"] = max(worst["gamma_symbol"], d1)
            worst["moment_symbol"] = max(worst["moment_symbol"], d2)
            dual = abs(linearized_moment(data, phi, psi) @ a - phi @ gamma_action(data, a, psi))
            worst["moment_duality"] = max(worst["moment_duality"], float(dual))
            worst["commutation"] = max(worst["commutation"], commutation_defect(data, build_A(data, phi)))
            pert = build_A_eps(data, psi, a, rng.uniform(0.01, 1.0))
            worst["commutation_perturbed"] = max(worst["commutation_perturbed"], commutation_defect(data, pert))
            u = _orbit_point(data, rng)
            P = splitting_at(data, u).proj_N
            worst["block_degeneracy"] = max(worst["block_degeneracy"], float(np.max(np.abs(build_A(data, u) @ P))))
            worst["zero_locus"] = max(worst["zero_locus"], float(np.max(np.abs(moment_map(data, u)))))
        out[cid] = worst
    return out


# ---------------------------------------------------------------- shells and fits

@dataclass
class DecayReport:
    eps: float
    mode: str
    shell_radii: list
    shell_sup: list
    norm_L12: float
    Lambda_K: float
    R_K: float
    slope: float
    intercept: float
    r2: float
    window: tuple
    usable_shells: int
    deep_regime: bool
    lambda_min: float | None = None
    solver: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def fit(self):
        return self.slope, self.intercept, self.r2

    def to_dict(self):
        return asdict(self)


def shell_profile(domain: GridDomain, amp: np.ndarray, r_max: float | None = None):
    """Shells [R, R + 2h) in the distance to the singular set; returns (R, sup |amp|)."""
    d = domain.dist_field
    width = 2.0 * domain.h
    top = d[np.isfinite(d)].max() if r_max is None else r_max
    k = np.floor(d / width).astype(np.int64)
    nshell = int(np.floor(top / width)) + 1
    sup = np.zeros(nshell)
    ok = np.isfinite(d) & (k < nshell)
    np.maximum.at(sup, k[ok], amp[ok])
    count = np.bincount(k[ok], minlength=nshell)
    R = np.arange(nshell) * width
    return R[count > 0], sup[count > 0]


def fit_line(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sst = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / sst if sst > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def fit_decay(R, sup, r_lo, r_hi, floor):
    sel = (R >= r_lo) & (R <= r_hi) & (sup > floor)
    if sel.sum() < 3:
        raise ExperimentError(f"only {int(sel.sum())} usable shells in [{r_lo:.3g}, {r_hi:.3g}] above floor {floor:.2e}")
    return fit_line(R[sel], np.log(sup[sel])) + (int(sel.sum()),)


def forward_differences(domain: GridDomain, field_: np.ndarray) -> list:
    """Periodic forward differences of a node field (n_nodes, k) along each axis."""
    g = field_.reshape(domain.nodes + (-1,))
    return [((np.roll(g, -1, axis=a) - g) / h).reshape(domain.n_nodes, -1)
            for a, h in enumerate(domain.spacing)]


def l12_norm(domain: GridDomain, q: np.ndarray, mask=None) -> float:
    """Discrete L^{1,2} norm with forward differences over the node set ``mask``."""
    q = q.reshape(domain.n_nodes, -1)
    dens = np.sum(q ** 2, axis=1)
    for dq in forward_differences(domain, q):
        dens += np.sum(dq ** 2, axis=1)
    if mask is not None:
        dens = dens[mask]
    return float(np.sqrt(dens.sum() * domain.cell_volume))


def kato_defect(domain: GridDomain, q: np.ndarray) -> float:
    """max over nodes and axes of |d+|q|| - |d+ q|; never positive for forward differences."""
    q = q.reshape(domain.n_nodes, -1)
    mod = np.linalg.norm(q, axis=1)[:, None]
    worst = -np.inf
    for dm, dq in zip(forward_differences(domain, mod), forward_differences(domain, q)):
        worst = max(worst, float(np.max(np.abs(dm[:, 0]) - np.linalg.norm(dq, axis=1))))
    return worst


def laplacian_positive(domain: GridDomain, u: np.ndarray) -> np.ndarray:
    """-(7-point Laplacian) of a scalar node field, periodic."""
    g = u.reshape(domain.nodes)
    out = np.zeros_like(g)
    for a, h in enumerate(domain.spacing):
        out -= (np.roll(g, 1, axis=a) - 2 * g + np.roll(g, -1, axis=a)) / h ** 2
    return out.ravel()


def differential_inequality_field(domain: GridDomain, q1: np.ndarray, Aq1: np.ndarray, eps: float) -> np.ndarray:
    """Delta_h |q1|^2 + eps^-2 |A q1|^2 at every node."""
    q1 = q1.reshape(domain.n_nodes, -1)
    Aq1 = Aq1.reshape(domain.n_nodes, -1)
    return laplacian_positive(domain, np.sum(q1 ** 2, axis=1)) + np.sum(Aq1 ** 2, axis=1) / eps ** 2


# ---------------------------------------------------------------- linear decay

@dataclass
class DecaySetup:
    domain: GridDomain
    data: SWCaseData
    profile: BaseSpinorProfile
    D: SparseOperator
    A: SparseOperator
    proj_H: sp.csr_matrix
    proj_N: sp.csr_matrix
    gap: np.ndarray


def prepare(domain: GridDomain, data: SWCaseData, profile: BaseSpinorProfile) -> DecaySetup:
    D = assemble_D(domain, total_clifford(data))
    phi = sample_phi0(domain, profile, data)
    n = domain.n_nodes * data.fiber_dim
    if not np.any(phi):
        zero = sp.csr_matrix((n, n))
        A = SparseOperator(zero, domain.h, data.fiber_dim, None, True)
        ident = sp.identity(n, format="csr")
        return DecaySetup(domain, data, profile, D, A, ident, zero, np.zeros(domain.n_nodes))
    pf = perturbation_field(domain, data, phi)
    return DecaySetup(domain, data, profile, D, pf.A, pf.proj_H, pf.proj_N, pf.gap)


def default_compact_radius(setup: DecaySetup, eps: float) -> float:
    """Smallest R >= 6h on the shell lattice with Lambda_K R / eps >= 3."""
    dom = setup.domain
    d = dom.dist_field
    for R in np.arange(6 * dom.h, dom.inscribed_radius(), dom.h):
        K = d >= R
        if not K.any():
            break
        if setup.gap[K].min() * R / eps >= 3.0 - 1e-12:
            return float(R)
    return float(6 * dom.h)


def core_source(setup: DecaySetup, radius: float, seed: int) -> np.ndarray:
    """Fixed random fiber vector on {dist < radius}, projected onto the gapped bundle."""
    dom = setup.domain
    w = np.random.default_rng(seed).standard_normal(setup.data.fiber_dim)
    f = np.zeros((dom.n_nodes, setup.data.fiber_dim))
    f[dom.dist_field < radius] = w
    return setup.proj_H @ f.ravel()


def smooth_start(setup: DecaySetup, width: float, seed: int) -> np.ndarray:
    dom = setup.domain
    w = np.random.default_rng(seed).standard_normal(setup.data.fiber_dim)
    d = np.where(np.isfinite(dom.dist_field), dom.dist_field, 0.0)
    v = np.exp(-(d / width) ** 2)[:, None] * w[None, :]
    return setup.proj_H @ v.ravel()


def decay_report(setup: DecaySetup, q: np.ndarray, eps: float, R_K: float, mode: str,
                 seed: int, solver: dict, lambda_min=None, solver_tol: float = 0.0) -> DecayReport:
    dom = setup.domain
    amp = np.linalg.norm((setup.proj_H @ q).reshape(dom.n_nodes, -1), axis=1)
    R, sup = shell_profile(dom, amp)
    qnorm = float(np.max(np.abs(q)))
    floor = max(1e3 * EPS_MACH, 10.0 * solver_tol) * qnorm
    r_lo = R_K + 4 * dom.h
    r_hi = 0.9 * dom.inscribed_radius()
    K = dom.dist_field >= R_K
    Lambda_K = float(setup.gap[K].min()) if K.any() else 0.0
    slope, intercept, r2, used = fit_decay(R, sup, r_lo, r_hi, floor)
    Kp = dom.dist_field >= 0.5 * R_K
    return DecayReport(
        eps=float(eps), mode=mode, shell_radii=R.tolist(), shell_sup=sup.tolist(),
        norm_L12=l12_norm(dom, q, Kp), Lambda_K=Lambda_K, R_K=float(R_K),
        slope=slope, intercept=intercept, r2=r2, window=(float(r_lo), float(r_hi)),
        usable_shells=used, deep_regime=bool(Lambda_K * r_hi / eps >= 5.0),
        lambda_min=lambda_min, solver=solver, seed=int(seed))


def solve_linear(setup: DecaySetup, eps: float, mode: str, R_K: float, seed: int,
                 tol: float, source_radius: float | None = None, start_width: float | None = None):
    """q for one eps: inhomogeneous (core source) or the lowest gapped eigenmode."""
    De = assemble_Deps(setup.D, setup.A, eps)
    if mode == "inhomogeneous":
        f = core_source(setup, source_radius or 0.5 * R_K, seed)
        q, rep = solve_inhomogeneous(De, f, tol=tol, maxit=50000)
        return q, {"iterations": rep.iterations, "residual": rep.residual, "wall_time": rep.wall_time}, None, f
    if mode == "kernel":
        gapped = np.any(setup.gap)
        start = smooth_start(setup, start_width or max(R_K, 4 * setup.domain.h), seed)
        lam, q, rep = kernel_approx(
            De, tol=tol, seed=seed, start=start, shift=0.0 if gapped else 1e-3,
            project=(lambda v: setup.proj_H @ v) if gapped else None,
            cell_volume=setup.domain.cell_volume, maxit=500)
        info = {"outer_iterations": rep.outer_iterations, "inner_iterations": rep.inner_iterations,
                "residual": rep.residual, "wall_time": rep.wall_time}
        return q, info, lam, None
    raise ValueError(f"unknown mode {mode!r}")


def run_linear_decay(domain: GridDomain, data: SWCaseData, profile: BaseSpinorProfile, eps: float,
                     mode: str = "inhomogeneous", R_K: float | None = None, seed: int = 0,
                     tol: float = 1e-12, setup: DecaySetup | None = None) -> DecayReport:
    setup = setup or prepare(domain, data, profile)
    R_K = R_K if R_K is not None else default_compact_radius(setup, eps)
    if R_K < 6 * domain.h - 1e-12:
        raise ExperimentError(f"R_K = {R_K:.3g} below 6h = {6 * domain.h:.3g}")
    if mode == "kernel":
        tol = max(tol, 1e-6)
    q, info, lam, _ = solve_linear(setup, eps, mode, R_K, seed, tol)
    return decay_report(setup, q, eps, R_K, mode, seed, info, lam, solver_tol=tol if mode == "inhomogeneous" else 0.0)


def run_axis_decay(lam: float = 1.0, eps: float = 0.1, length: float = 4.0, nodes: int = 128,
                   case: str = "I", seed: int = 0, tol: float = 1e-12) -> DecayReport:
    """Grid pipeline reduced to one axis: singular plane x1 = 0, fields constant across it.

    The transverse axes carry 8 nodes at the same spacing so a slab source stays x2, x3
    invariant and the solution is the two-component ODE in x1.
    """
    h = length / nodes
    dom = make_domain(L=(length, 8 * h, 8 * h), N=(nodes, 8, 8), singular_set="plane")
    data = case_data(case)
    setup = prepare(dom, data, BaseSpinorProfile("constant_gap", lam))
    R_K = max(6 * h, 3 * eps / lam)
    return run_linear_decay(dom, data, None, eps, R_K=R_K, seed=seed, tol=tol, setup=setup)


@dataclass
class InequalityLevel:
    N: int
    h: float
    lambda_min: float
    raw_max: float
    tau: float
    kato: float


def differential_inequality_level(domain: GridDomain, data: SWCaseData, profile: BaseSpinorProfile,
                                  eps: float, R_K: float, seed: int = 0, tol: float = 1e-6) -> InequalityLevel:
    """Kernel-mode q1 = pi_H q and max over K of Delta_h |q1|^2 + eps^-2 |A q1|^2."""
    setup = prepare(domain, data, profile)
    q, _, lam, _ = solve_linear(setup, eps, "kernel", R_K, seed, tol)
    # unit L2 norm per unit length along the invariant axis, so slab thickness drops out
    q = q * np.sqrt(domain.lengths[2])
    q1 = setup.proj_H @ q
    field_ = differential_inequality_field(domain, q1, setup.A @ q1, eps)
    K = domain.dist_field >= R_K
    raw = float(field_[K].max())
    return InequalityLevel(domain.nodes[0], domain.h, float(lam), raw, max(0.0, raw),
                           kato_defect(domain, q1))


def run_differential_inequality(eps: float = 0.05, L: float = 1.2, levels=(24, 48, 96),
                                case: str = "I", c2: float = 1.0, seed: int = 0):
    """Refinement study at fixed eps on an x3-invariant slab L x L x 8h.

    R_K is held fixed at its coarsest-level value so K is the same set at every level.
    """
    data = case_data(case)
    # the gap c2 sqrt(dist) gives Lambda_K R_K / eps >= 3 once R_K >= (3 eps / c2)^(2/3)
    profile = BaseSpinorProfile("sqrt_dist", c2=c2)
    R_K = max(6 * L / levels[0], (3 * eps / c2) ** (2.0 / 3.0))
    out = []
    for N in levels:
        dom = make_domain(L=(L, L, 8 * L / N), N=(N, N, 8))
        out.append(differential_inequality_level(dom, data, profile, eps, R_K, seed))
    raw = [lv.raw_max for lv in out]
    decreasing = all(b < a for a, b in zip(raw[:-1], raw[1:]))
    return {"eps": eps, "L": L, "R_K": R_K, "levels": [asdict(lv) for lv in out],
            "raw_max": raw, "tau": [lv.tau for lv in out], "decreasing": bool(decreasing)}


def sweep_regression(reports) -> dict:
    """Fit slope against 1/eps and the single constant c with slope = -c Lambda_K / eps."""
    x = np.array([1.0 / r.eps for r in reports])
    y = np.array([r.slope for r in reports])
    slope, intercept, r2 = fit_line(x, y) if len(x) > 2 else (np.nan, np.nan, np.nan)
    scaled = np.array([-r.slope * r.eps / r.Lambda_K for r in reports])
    c = float(np.exp(np.mean(np.log(scaled)))) if np.all(scaled > 0) else float("nan")
    spread = float(np.max(np.abs(scaled / c - 1.0))) if np.isfinite(c) else float("inf")
    return {"slope_vs_inv_eps": slope, "intercept": intercept, "r2": r2,
            "c_fit": c, "max_rel_deviation": spread, "scaled_slopes": scaled.tolist()}


# ---------------------------------------------------------------- 1-d oracles

def shoot_two_component(lam: float, eps: float, length: float, steps: int = 4000,
                        q0=(1.0, 0.0)):
    """Bounded solution of q1' = (lam/eps) q2, q2' = (lam/eps) q1 on [0, length].

    The two-component system has modes q1 +- q2 growing/decaying at rate lam/eps.
    Shooting on the unknown q2(0) removes the growing mode at the right end.
    Returns (x, q) with q of shape (steps + 1, 2).
    """
    k = lam / eps

    def rhs(t, y):
        return np.array([k * y[1], k * y[0]])

    def shot(q2):
        _, ys = _rk4(rhs, np.array([q0[0], q2]), 0.0, length, steps)
        return ys

    # the end value of the growing combination is affine in q2(0)
    a = shot(0.0)
    b = shot(1.0)
    ga, gb = a[-1, 0] + a[-1, 1], b[-1, 0] + b[-1, 1]
    q2 = -ga / (gb - ga)
    ys = shot(q2)
    return np.linspace(0.0, length, steps + 1), ys


def oracle_slope(lam: float, eps: float, length: float = 1.0) -> float:
    x, ys = shoot_two_component(lam, eps, length)
    amp = np.linalg.norm(ys, axis=1)
    sel = (x >= 0.1 * length) & (x <= 0.6 * length)
    return fit_line(x[sel], np.log(amp[sel]))[0]


def radial_decay_oracle(eps: float, c2: float = 1.0, r0: float = 1e-3, r1: float = 2.0,
                        steps: int = 4000, geometric: bool = True):
    """(r, ln q) for q' = -(c2 sqrt(r) / eps + 1/(2r)) q, the radial model with gap c2 sqrt(r).

    ``geometric`` keeps the 1/(2r) term from the tube's circumference.
    """
    def rhs(r, y):
        rate = c2 * np.sqrt(r) / eps + (0.5 / r if geometric else 0.0)
        return np.array([-rate])

    rs, ys = _rk4(rhs, np.array([0.0]), r0, r1, steps)
    return rs, ys[:, 0]


# ---------------------------------------------------------------- nonlinear decay

def perturbation_basis(data: SWCaseData) -> list:
    """Blocks B_k with A_eps(q) = eps * sum_k q_k B_k over the fiber coordinates of q."""
    ns = data.total_spinor_dim
    basis = []
    for k in range(data.fiber_dim):
        e = np.zeros(data.fiber_dim)
        e[k] = 1.0
        basis.append(build_A_eps(data, e[:ns], e[ns:], 1.0))
    return basis


@dataclass
class NonlinearReport:
    decay: DecayReport
    coupling: float
    updates: list
    contraction_ratios: list
    surrogate_sup: list
    surrogate_L1n: list
    threshold: float
    condition_ok: bool
    converged: bool
    diagnosis: str

    def to_dict(self):
        out = asdict(self)
        out["decay"] = self.decay.to_dict()
        return out


def run_nonlinear_decay(domain: GridDomain, data: SWCaseData, profile: BaseSpinorProfile, eps: float,
                        q1_coupling: float, R_K: float | None = None, seed: int = 0,
                        tol: float = 1e-12, c2: float = 0.1, amplitude: float | None = None,
                        update_tol: float = 1e-6, max_steps: int = 30,
                        setup: DecaySetup | None = None) -> NonlinearReport:
    """Picard iteration for (D + eps^-1 (A + A_eps(q) pi_H)) q = f with a core source f.

    A_eps(q) is the zeroth-order perturbation carried by q, scaled by ``q1_coupling``.
    With ``amplitude`` set, the source is scaled so the linear response has
    sup |pi_H q| = amplitude.  At zero coupling the linear solve is returned untouched.
    """
    setup = setup or prepare(domain, data, profile)
    R_K = R_K if R_K is not None else default_compact_radius(setup, eps)
    De = assemble_Deps(setup.D, setup.A, eps)
    f = core_source(setup, 0.5 * R_K, seed)
    q_lin, rep = solve_inhomogeneous(De, f, tol=tol, maxit=50000)
    peak = np.max(np.linalg.norm((setup.proj_H @ q_lin).reshape(domain.n_nodes, -1), axis=1))
    if amplitude:
        scale = amplitude / peak
        f = f * scale
        q_lin, rep = solve_inhomogeneous(De, f, tol=tol, maxit=50000)
    info = {"iterations": rep.iterations, "residual": rep.residual, "wall_time": rep.wall_time}

    basis = perturbation_basis(data)
    gram = np.array([[np.sum(a * b) for b in basis] for a in basis])
    K = domain.dist_field >= R_K
    Kp = domain.dist_field >= 0.5 * R_K
    Lambda_K = float(setup.gap[K].min())
    threshold = c2 * Lambda_K
    n = domain.dim

    def surrogates(q):
        # eps |Q1(q)| = coupling |A_eps(q)| with Frobenius norms of the node blocks
        qf = q.reshape(domain.n_nodes, -1)
        pointwise = q1_coupling * eps * np.sqrt(np.einsum("ik,kl,il->i", qf, gram, qf))
        dens = pointwise ** n
        for dq in forward_differences(domain, qf):
            dens += (q1_coupling * eps * np.sqrt(np.einsum("ik,kl,il->i", dq, gram, dq))) ** n
        return float(pointwise[Kp].max()), float((dens[Kp].sum() * domain.cell_volume) ** (1.0 / n))

    q = q_lin
    updates, sups, l1n = [], [], []
    converged, diagnosis, growth = False, "", 0
    if q1_coupling == 0.0:
        s_sup, s_l1n = surrogates(q)
        sups.append(s_sup)
        l1n.append(s_l1n)
        converged = True
    for step in range(0 if converged else max_steps):
        s_sup, s_l1n = surrogates(q)
        sups.append(s_sup)
        l1n.append(s_l1n)
        pert = _node_blocks(eps * q.reshape(domain.n_nodes, -1), basis) @ setup.proj_H
        M = SparseOperator((De.matrix + pert * (q1_coupling / eps)).tocsr(), De.h, De.fiber_dim, eps, False)
        q_new, rep = solve_inhomogeneous(M, f, tol=tol, x0=q, maxit=50000)
        upd = float(np.linalg.norm(q_new - q) / np.linalg.norm(q))
        updates.append(upd)
        q = q_new
        if len(updates) > 1 and upd > updates[-2]:
            growth += 1
        else:
            growth = 0
        if growth >= 3:
            diagnosis = f"Picard divergence: update grew for 3 consecutive steps (last {upd:.3e})"
            break
        if upd <= update_tol:
            converged = True
            break
    if not converged and not diagnosis:
        diagnosis = f"no convergence in {max_steps} steps (last update {updates[-1]:.3e})"
    ratios = [b / a for a, b in zip(updates[:-1], updates[1:]) if a > 0]
    cond_ok = all(s <= threshold for s in sups)
    if not cond_ok:
        diagnosis = (diagnosis + "; " if diagnosis else "") + "condition surrogate above threshold"
    report = decay_report(setup, q, eps, R_K, "nonlinear" if q1_coupling else "inhomogeneous",
                          seed, info, None, solver_tol=tol)
    return NonlinearReport(report, float(q1_coupling), updates, ratios, sups, l1n,
                           threshold, cond_ok, converged, diagnosis)


# ---------------------------------------------------------------- scale collapse

@dataclass
class CollapseReport:
    eps: list
    profile: str
    variable: str
    grid: list
    profiles: dict
    pairwise: dict
    max_distance: float

    def to_dict(self):
        return asdict(self)


def rescale(R, eps, variable: str):
    R = np.asarray(R, dtype=float)
    if variable == "s":
        return R ** 1.5 / eps
    if variable == "t":
        return R / eps
    raise ValueError(f"unknown variable {variable!r}")


def collapse_distance(curves: dict, lo: float, hi: float, anchor: float | None = None, samples: int = 61):
    """Curves {eps: (x, ln sup)} normalized at ``anchor``; pairwise sup distance relative to the span."""
    anchor = lo if anchor is None else anchor
    grid = np.linspace(lo, hi, samples)
    norm = {}
    for e, (x, y) in curves.items():
        if x[0] > lo + 1e-12 or x[-1] < hi - 1e-12:
            raise ExperimentError(f"profile for eps={e} covers [{x[0]:.3g}, {x[-1]:.3g}], need [{lo}, {hi}]")
        norm[e] = np.interp(grid, x, y) - np.interp(anchor, x, y)
    span = max(float(np.max(np.abs(v))) for v in norm.values()) or 1.0
    pairs = {}
    keys = list(norm)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            pairs[f"{a}|{b}"] = float(np.max(np.abs(norm[a] - norm[b])) / span)
    return grid, norm, pairs


def collapse_curves(setup: DecaySetup, eps_list, variable: str, seed: int = 0, tol: float = 1e-12,
                    core_scale: float = 0.5):
    """ln shell_sup against the rescaled distance, one inhomogeneous solve per eps.

    The source sits in {dist < core_scale * eps^(2/3)}, inside the characteristic scale.
    """
    dom = setup.domain
    curves, raw = {}, {}
    for eps in eps_list:
        rc = core_scale * eps ** (2.0 / 3.0)
        De = assemble_Deps(setup.D, setup.A, eps)
        f = core_source(setup, rc, seed)
        q, _ = solve_inhomogeneous(De, f, tol=tol, maxit=50000)
        amp = np.linalg.norm((setup.proj_H @ q).reshape(dom.n_nodes, -1), axis=1)
        R, sup = shell_profile(dom, amp, r_max=0.9 * dom.inscribed_radius())
        Rc = R + dom.h
        keep = sup > 1e3 * EPS_MACH * np.max(np.abs(q))
        raw[eps] = (Rc[keep], sup[keep])
        curves[eps] = (rescale(Rc[keep], eps, variable), np.log(sup[keep]))
    return curves, raw


def run_scale_collapse(domain: GridDomain, data: SWCaseData, eps_list, profile: BaseSpinorProfile | None = None,
                       variable: str = "s", s_range=(1.0, 4.0), anchor: float | None = None,
                       seed: int = 0, tol: float = 1e-12, setup: DecaySetup | None = None) -> CollapseReport:
    profile = profile or BaseSpinorProfile("sqrt_dist", c2=1.0)
    setup = setup or prepare(domain, data, profile)
    curves, _ = collapse_curves(setup, eps_list, variable, seed, tol)
    lo, hi = common_range(curves) if s_range is None else s_range
    grid, norm, pairs = collapse_distance(curves, lo, hi, anchor)
    return CollapseReport(
        eps=[float(e) for e in eps_list], profile=profile.kind, variable=variable,
        grid=grid.tolist(), profiles={str(k): v.tolist() for k, v in norm.items()},
        pairwise=pairs, max_distance=max(pairs.values()) if pairs else 0.0)


def common_range(curves: dict):
    lo = max(c[0][0] for c in curves.values())
    hi = min(c[0][-1] for c in curves.values())
    return lo, hi


# ---------------------------------------------------------------- Green's comparison

def radial_laplacian_gap(r, n: int, kappa: float, f, df, d2f):
    """(Delta_0 - Delta_g) f for radial f and g = (1 + kappa r^2) g0, positive Laplacians."""
    phi = 1.0 + kappa * r * r
    dphi = 2.0 * kappa * r
    a = (n - 2) / 2.0
    lap0 = -(d2f + (n - 1) / r * df)
    # Delta_g f = -phi^{-n/2} r^{1-n} (r^{n-1} phi^a f')'
    inner = d2f * phi ** a + df * (a * phi ** (a - 1) * dphi + (n - 1) / r * phi ** a)
    lapg = -phi ** (-n / 2.0) * inner
    return lap0 - lapg


def absorption_margin(n: int, m: float, kappa: float, r) -> float:
    """max over r of |(Delta_0 - Delta_g) G0^{m/2}| / (3 m^2 / 4 G0^{m/2}); the comparison needs <= 1."""
    r = np.asarray(r, dtype=float)
    k = m / 2.0
    G = np.exp(-k * r) / r ** (n - 2)
    dG = G * (-k - (n - 2) / r)
    d2G = G * ((k + (n - 2) / r) ** 2 + (n - 2) / r ** 2)
    gap = radial_laplacian_gap(r, n, kappa, G, dG, d2G)
    return float(np.max(np.abs(gap) / (0.75 * m * m * G)))


@dataclass
class GreenReport:
    n: int
    m: float
    kappa: float
    R0: float
    N: int
    max_ratio_grid: float
    max_ratio_oracle: float
    regime_ok: bool
    absorption: float
    oracle_mismatch: float
    bound_holds: bool
    r_window: tuple

    def to_dict(self):
        return asdict(self)


def free_yukawa(r, m, n):
    if n == 3:
        return yukawa(r, m)
    # n = 4 uses the radial oracle on a large ball as the free-space profile
    return radial_green_ode(4, m, 50.0 / max(m, 1e-3))(r)


def run_green_comparison(R0: float, m: float, kappa: float, n: int = 3, N: int = 64,
                         ratio_margin: float = 1.0, mismatch_window=(0.1, 0.8)) -> GreenReport:
    r_oracle = radial_green_ode(n, m, R0, kappa)
    h = 2 * R0 / N
    rs = np.linspace(3 * h, 0.9 * R0, 200)
    absorption = absorption_margin(n, m, kappa, rs)
    regime_ok = absorption <= 1.0
    ratio_oracle = float(np.max(r_oracle(rs) / free_yukawa(rs, m / 2, n)))
    ratio_grid, mismatch = float("nan"), float("nan")
    if n == 3:
        dom = make_domain(boundary="dirichlet_ball", R0=R0, N=N, kappa=kappa)
        x0 = center_node(dom)
        G, _ = green_solve(dom, m, x0)
        r = np.linalg.norm(dom.coords - dom.coords[x0], axis=1)
        sel = (r >= 3 * h) & (r <= 0.9 * R0) & dom.interior
        ratio_grid = float(np.max(G[sel] / free_yukawa(r[sel], m / 2, n)))
        flat = G
        if kappa != 0.0:
            flat_dom = make_domain(boundary="dirichlet_ball", R0=R0, N=N)
            flat, _ = green_solve(flat_dom, m, x0)
        flat_oracle = radial_green_ode(n, m, R0, 0.0)
        w = (r >= mismatch_window[0] * R0) & (r <= mismatch_window[1] * R0)
        mismatch = float(np.max(np.abs(flat[w] / flat_oracle(r[w]) - 1.0)))
    worst = ratio_grid if np.isfinite(ratio_grid) else ratio_oracle
    holds = bool(worst <= ratio_margin and ratio_oracle <= ratio_margin)
    if not regime_ok:
        warnings.warn(f"absorption inequality fails (margin {absorption:.3f}); bound not asserted")
    return GreenReport(n, float(m), float(kappa), float(R0), int(N), ratio_grid, ratio_oracle,
                       bool(regime_ok), absorption, mismatch, holds, (3 * h, 0.9 * R0))


# ---------------------------------------------------------------- annuli and Harnack

def dyadic_annuli(R0: float, M: float, floor: float) -> list:
    """r_{n+1} = r_n - min(r_n / 5, 1/M), stopping before a radius drops below ``floor``."""
    if R0 <= 0 or M <= 0:
        raise ValueError("R0 and M must be positive")
    radii = [float(R0)]
    while True:
        r = radii[-1]
        nxt = r - min(r / 5.0, 1.0 / M)
        if nxt < floor or nxt <= 0:
            return radii
        radii.append(nxt)


def _sector_labels(vec: np.ndarray, n_theta: int, n_phi: int) -> np.ndarray:
    r = np.linalg.norm(vec, axis=1)
    cos_t = np.clip(vec[:, 2] / r, -1.0, 1.0)
    # equal-area bands in cos(theta)
    it = np.minimum(((cos_t + 1.0) / 2.0 * n_theta).astype(int), n_theta - 1)
    ph = np.arctan2(vec[:, 1], vec[:, 0]) + np.pi
    ip = np.minimum((ph / (2 * np.pi) * n_phi).astype(int), n_phi - 1)
    return it * n_phi + ip


def harnack_ratio(domain: GridDomain, G: np.ndarray, x0: int, radii, sectors_per_annulus: int | None = None):
    """sup/inf of G over angular sectors of each annulus [r_{k+1}, r_k).

    Sector counts are chosen so a sector's diameter stays within the annulus width
    unless ``sectors_per_annulus`` fixes them.  Returns (ratios, skipped).
    """
    vec = domain.coords - domain.coords[x0]
    r = np.linalg.norm(vec, axis=1)
    ratios, skipped = [], 0
    for r_out, r_in in zip(radii[:-1], radii[1:]):
        width = r_out - r_in
        sel = (r >= r_in) & (r < r_out) & domain.interior
        if not sel.any():
            skipped += 1
            continue
        if sectors_per_annulus:
            n_phi = max(1, int(round(np.sqrt(2 * sectors_per_annulus))))
            n_theta = max(1, sectors_per_annulus // n_phi)
        else:
            n_phi = max(1, int(np.ceil(2 * np.pi * r_out / width)))
            n_theta = max(1, int(np.ceil(np.pi * r_out / width)))
        labels = _sector_labels(vec[sel], n_theta, n_phi)
        vals = G[sel]
        total = n_theta * n_phi
        hi = np.full(total, -np.inf)
        lo = np.full(total, np.inf)
        np.maximum.at(hi, labels, vals)
        np.minimum.at(lo, labels, vals)
        filled = np.isfinite(hi)
        skipped += int(total - filled.sum())
        good = filled & (lo > 0)
        ratios.extend((hi[good] / lo[good]).tolist())
    if skipped:
        log.warning("harnack: %d empty sectors skipped (grid too coarse)", skipped)
    return np.array(ratios), skipped


def run_harnack(m: float, R0: float = 1.0, N: int = 64, annulus_fraction: float = 0.8):
    dom = make_domain(boundary="dirichlet_ball", R0=R0, N=N)
    x0 = center_node(dom)
    G, _ = green_solve(dom, m, x0)
    radii = dyadic_annuli(annulus_fraction * R0, m, 3 * dom.h)
    ratios, skipped = harnack_ratio(dom, G, x0, radii)
    return {"m": float(m), "R0": float(R0), "N": int(N), "annuli": len(radii) - 1,
            "max_ratio": float(ratios.max()), "min_ratio": float(ratios.min()),
            "sectors": int(ratios.size), "skipped": int(skipped)}


# ---------------------------------------------------------------- Seiberg-Witten residual

def sw_residual_case1(domain: GridDomain, Phi: np.ndarray, A1: np.ndarray, eps: float):
    """Residual norms of the blown-up Case I equations on a periodic grid.

    Returns (|D_A Phi|, |eps^2 *F_A + 1/2 mu(Phi, Phi)|, | |Phi|_{L2} - 1 |) with
    L2 norms for the measure h^n; A is a real 1-form (the connection is i A).
    """
    data = case_data("I")
    Phi = np.asarray(Phi, dtype=float).reshape(domain.n_nodes, -1)
    A1 = np.asarray(A1, dtype=float).reshape(domain.n_nodes, -1)
    if Phi.shape[1] != data.spinor_dim or A1.shape[1] != domain.dim:
        raise ValueError(f"expected spinor field (n, {data.spinor_dim}) and 1-form (n, {domain.dim})")
    vol = domain.cell_volume
    J = data.lie_action[0]
    g = Phi.reshape(domain.nodes + (-1,))
    dirac = np.zeros_like(Phi)
    for k, h in enumerate(domain.spacing):
        dk = ((np.roll(g, -1, axis=k) - np.roll(g, 1, axis=k)) / (2 * h)).reshape(domain.n_nodes, -1)
        cov = dk + A1[:, k:k + 1] * (Phi @ J.T)
        dirac += cov @ data.rho[k].T
    a = A1.reshape(domain.nodes + (-1,))

    def ddx(f, k):
        return (np.roll(f, -1, axis=k) - np.roll(f, 1, axis=k)) / (2 * domain.spacing[k])

    curl = np.stack([ddx(a[..., 2], 1) - ddx(a[..., 1], 2),
                     ddx(a[..., 0], 2) - ddx(a[..., 2], 0),
                     ddx(a[..., 1], 0) - ddx(a[..., 0], 1)], axis=-1).reshape(domain.n_nodes, 3)
    mu = np.array([moment_map(data, p)[1:4] for p in Phi])
    curv = eps ** 2 * curl + mu
    r1 = float(np.sqrt(np.sum(dirac ** 2) * vol))
    r2 = float(np.sqrt(np.sum(curv ** 2) * vol))
    r3 = abs(float(np.sqrt(np.sum(Phi ** 2) * vol)) - 1.0)
    return r1, r2, r3


def gauge_wave_configuration(domain: GridDomain, k: float = 1.0):
    """Gauge rotation exp(i k x1) u of a unit zero-locus spinor with A = -k dx1.

    This is an exact continuum solution of D_A Phi = 0 with mu = 0 and F_A = 0;
    the discrete residual is the centered-difference error.
    """
    from .swalgebra import zero_locus_spinor
    data = case_data("I")
    u = zero_locus_spinor(data)
    J = data.lie_action[0]
    theta = k * domain.coords[:, 0]
    Phi = np.cos(theta)[:, None] * u[None, :] + np.sin(theta)[:, None] * (J @ u)[None, :]
    vol_total = float(np.prod(domain.lengths))
    Phi /= np.sqrt(vol_total)
    A1 = np.zeros((domain.n_nodes, domain.dim))
    A1[:, 0] = -k
    return Phi, A1
