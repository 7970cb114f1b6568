"""In-house iterative solvers: CG, inverse iteration, grid Green's functions, radial shooting."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .domain import GridDomain

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Non-convergence or breakdown; carries the partial report when available."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    residual: float
    wall_time: float
    converged: bool


def _matvec(M):
    if callable(M) and not hasattr(M, "shape"):
        return M
    if hasattr(M, "matrix"):
        M = M.matrix
    return lambda v: M @ v


def _size(M, b):
    return np.asarray(b).size


def check_symmetric(M, n: int, seed: int = 0, rtol: float = 1e-8) -> float:
    """Sampled asymmetry |<Mu,v> - <u,Mv>| / (|Mu||v|)."""
    mv = _matvec(M)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    mu, mvv = mv(u), mv(v)
    scale = max(np.linalg.norm(mu) * np.linalg.norm(v), 1e-300)
    return abs(u @ mvv - v @ mu) / scale


def cg_solve(M, b, tol: float = 1e-10, maxit: int | None = None, x0=None,
             check: bool = True, raise_on_fail: bool = False):
    """Conjugate gradients for symmetric positive (semi)definite M.

    Stops when ||M x - b|| / ||b|| <= tol, measured on the recurrence residual and
    confirmed on the true residual.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.size
    mv = _matvec(M)
    if check:
        asym = check_symmetric(M, n)
        if asym > 1e-8:
            raise ValueError(f"operator is not symmetric (sampled defect {asym:.2e})")
    maxit = maxit or 10 * n
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, time.perf_counter() - t0, True)
    r = b - mv(x) if x0 is not None else b.copy()
    p = r.copy()
    rr = r @ r
    it = 0
    while it < maxit:
        if np.sqrt(rr) <= tol * bnorm:
            true_res = np.linalg.norm(b - mv(x))
            if true_res <= tol * bnorm:
                break
            # recurrence drifted from the true residual; restart from it
            r = b - mv(x)
            p = r.copy()
            rr = r @ r
            if np.sqrt(rr) <= tol * bnorm:
                break
        Mp = mv(p)
        pMp = p @ Mp
        if pMp <= 0.0:
            break
        alpha = rr / pMp
        x += alpha * p
        r -= alpha * Mp
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    res = np.linalg.norm(b - mv(x)) / bnorm
    report = SolveReport(it, float(res), time.perf_counter() - t0, bool(res <= tol))
    if not report.converged:
        log.warning("cg: residual %.3e after %d iterations (tol %.1e)", res, it, tol)
        if raise_on_fail:
            raise SolverError(f"CG did not reach {tol:g} in {it} iterations (residual {res:.3e})", report)
    return x, report


def normal_operator(Deps):
    """v -> Deps^T Deps v without forming the product."""
    m = Deps.matrix if hasattr(Deps, "matrix") else sp.csr_matrix(Deps)
    mt = m.T.tocsr()
    return lambda v: mt @ (m @ v)


def solve_inhomogeneous(Deps, f, tol: float = 1e-8, proj_N=None, x0=None, maxit=None):
    """Least-squares solution of Deps q = f through CG on the normal equations.

    With ``proj_N`` given, f is first projected onto the kernel bundle.
    """
    m = Deps.matrix if hasattr(Deps, "matrix") else sp.csr_matrix(Deps)
    f = np.asarray(f, dtype=float)
    if proj_N is not None:
        f = proj_N @ f
    rhs = m.T @ f
    q, rep = cg_solve(normal_operator(m), rhs, tol=tol, x0=x0, maxit=maxit, check=False)
    if not rep.converged:
        raise SolverError(f"normal-equation CG stalled at residual {rep.residual:.3e}", rep)
    return q, rep


@dataclass
class EigenReport:
    eigenvalue: float
    residual: float
    outer_iterations: int
    inner_iterations: int
    wall_time: float


def kernel_approx(Deps, tol: float = 1e-8, seed: int = 0, shift: float = 0.0,
                  start=None, project=None, deflate=(), cell_volume: float = 1.0,
                  maxit: int = 200, inner_tol: float | None = None):
    """Smallest eigenpair of Deps^T Deps by inverse iteration with CG inner solves.

    ``shift`` > 0 solves with (Deps^T Deps + shift) so exact kernels stay invertible.
    ``project`` (callable) keeps iterates in an invariant subspace; ``deflate`` lists
    vectors the eigenvector must be orthogonal to.  The returned q has unit discrete
    L2 norm for the measure ``cell_volume``.
    """
    t0 = time.perf_counter()
    normal = normal_operator(Deps) if hasattr(Deps, "matrix") or sp.issparse(Deps) else Deps
    n = Deps.shape[0]
    basis = [np.asarray(d, dtype=float) / np.linalg.norm(d) for d in deflate]

    def clean(v):
        if project is not None:
            v = project(v)
        for d in basis:
            v = v - (d @ v) * d
        return v

    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n) if start is None else np.array(start, dtype=float)
    q = clean(q)
    q /= np.linalg.norm(q)
    shifted = (lambda v: normal(v) + shift * v) if shift else normal
    inner_tol = inner_tol or min(1e-10, 0.01 * tol)
    lam, res, inner = np.inf, np.inf, 0
    for it in range(1, maxit + 1):
        y, rep = cg_solve(shifted, q, tol=inner_tol, check=False)
        inner += rep.iterations
        y = clean(y)
        q = y / np.linalg.norm(y)
        Mq = normal(q)
        lam = float(q @ Mq)
        res = float(np.linalg.norm(Mq - lam * q))
        if res <= tol:
            break
    else:
        raise SolverError(f"inverse iteration residual {res:.3e} after {maxit} steps",
                          EigenReport(lam, res, maxit, inner, time.perf_counter() - t0))
    q = q / np.sqrt(cell_volume)
    return lam, q, EigenReport(lam, res, it, inner, time.perf_counter() - t0)


# ---------------------------------------------------------------- Green's functions

def _conformal_factor(r2, kappa):
    return 1.0 + kappa * r2


def _boundary_fraction(x, step, R0, floor: float = 1e-3):
    """t in (0, 1] with |x + t step| = R0 for x inside the ball; 1 where unreached."""
    a = np.sum(step ** 2, axis=1)
    b = 2.0 * np.sum(x * step, axis=1)
    c = np.sum(x ** 2, axis=1) - R0 ** 2
    t = (-b + np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))) / (2 * a)
    return np.clip(t, floor, 1.0)


def screened_laplacian(domain: GridDomain, m: float):
    """Symmetric matrix of (Delta_g + m^2) on interior nodes of a Dirichlet ball.

    Divergence form with face weights phi^{(n-2)/2}, phi = 1 + kappa r^2, and mass
    weight phi^{n/2}; the volume factor is multiplied through so the matrix stays
    symmetric.  Links that cross the sphere see the Dirichlet value at the crossing
    point (weight / theta), which removes the staircase error and keeps symmetry.
    Returns (matrix, interior index array).
    """
    if domain.boundary != "dirichlet_ball":
        raise ValueError("Green's solves need a dirichlet_ball domain")
    n = domain.dim
    h = domain.h
    inside = domain.interior
    idx = -np.ones(domain.n_nodes, dtype=np.int64)
    interior = np.flatnonzero(inside)
    idx[interior] = np.arange(interior.size)
    shape = domain.nodes
    grid_index = np.arange(domain.n_nodes).reshape(shape)
    coords = domain.coords
    kappa = domain.kappa
    a_exp = (n - 2) / 2.0

    rows, cols, vals = [], [], []
    diag = m ** 2 * _conformal_factor(np.sum(coords[interior] ** 2, axis=1), kappa) ** (n / 2.0)
    for axis in range(n):
        for step in (1, -1):
            nb = np.roll(grid_index, -step, axis=axis).ravel()
            # drop wrap-around neighbors: they are outside the ball anyway
            pos = np.indices(shape)[axis].ravel()
            valid = (pos + step >= 0) & (pos + step < shape[axis])
            src = interior
            nbr = nb[src]
            ok = valid[src]
            mid = 0.5 * (coords[src] + coords[nbr])
            w = _conformal_factor(np.sum(mid ** 2, axis=1), kappa) ** a_exp / h ** 2
            link = ok & (idx[nbr] >= 0)
            # links leaving the ball end on the sphere at fraction theta of the step
            theta = _boundary_fraction(coords[src], coords[nbr] - coords[src], domain.ball_radius)
            diag += np.where(link, w, w / theta)
            rows.append(idx[src[link]])
            cols.append(idx[nbr[link]])
            vals.append(-w[link])
    rows.append(np.arange(interior.size))
    cols.append(np.arange(interior.size))
    vals.append(diag)
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(interior.size, interior.size))
    return M, interior


def green_solve(domain: GridDomain, m: float, x0: int, tol: float = 1e-11):
    """Grid Green's function of Delta_g + m^2 with pole at node x0, zero on the boundary."""
    if not domain.interior[x0]:
        raise ValueError(f"x0 = {x0} is a boundary node")
    M, interior = screened_laplacian(domain, m)
    b = np.zeros(interior.size)
    pos = int(np.searchsorted(interior, x0))
    b[pos] = domain.h ** (-domain.dim)
    dinv = 1.0 / M.diagonal()
    # diagonal scaling keeps the operator symmetric: S M S y = S b, G = S y
    s = np.sqrt(dinv)
    Ms = sp.diags(s) @ M @ sp.diags(s)
    y, rep = cg_solve(Ms.tocsr(), s * b, tol=tol, check=False)
    if not rep.converged:
        raise SolverError("Green's solve did not converge", rep)
    G = np.zeros(domain.n_nodes)
    G[interior] = s * y
    return G, rep


def center_node(domain: GridDomain) -> int:
    return int(np.argmin(np.sum(domain.coords ** 2, axis=1)))


@dataclass
class RadialProfile:
    r: np.ndarray
    G: np.ndarray
    n: int
    m: float
    R0: float
    kappa: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        t = np.log(self.r)
        return np.interp(np.log(r), t, self.G)


def _rk4(f, y, t0, t1, steps):
    ts = np.linspace(t0, t1, steps + 1)
    dt = ts[1] - ts[0]
    out = np.empty((steps + 1, y.size))
    out[0] = y
    for k in range(steps):
        t = ts[k]
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return ts, out


def sphere_area(n: int) -> float:
    from math import gamma, pi
    return 2 * pi ** (n / 2) / gamma(n / 2)


def radial_green_ode(n: int, m: float, R0: float, kappa: float = 0.0,
                     r_min: float = 1e-5, steps_per_unit: int = 1000) -> RadialProfile:
    """Radial Green's function of Delta_g + m^2, g = (1 + kappa r^2) g0, Dirichlet at R0.

    Integrates inward in t = log r from G(R0) = 0 with RK4 and fixes the scale by
    the unit-flux condition at r_min, including the small mass correction there.
    """
    if n not in (3, 4):
        raise ValueError("n must be 3 or 4")
    if m < 0 or R0 <= 0:
        raise ValueError("need m >= 0 and R0 > 0")
    a_exp = (n - 2) / 2.0

    def rhs(t, y):
        r = np.exp(t)
        phi = 1.0 + kappa * r * r
        return np.array([y[1] * r ** (2 - n) * phi ** (-a_exp),
                         m * m * phi ** (n / 2.0) * r ** n * y[0]])

    t0, t1 = np.log(R0), np.log(r_min)
    steps = max(200, int(np.ceil(steps_per_unit * (t0 - t1))))
    ts, ys = _rk4(rhs, np.array([0.0, -1.0]), t0, t1, steps)
    if not np.all(np.isfinite(ys)):
        raise SolverError("radial shooting produced non-finite values")
    omega = sphere_area(n)
    P = ys[-1, 1]
    # flux through the small sphere plus the mass absorbed inside it
    inner_mass = m * m * r_min ** 2 / (2.0 * (n - 2))
    scale = (1.0 - inner_mass) / (-omega * P)
    if not np.isfinite(scale) or scale <= 0:
        raise SolverError("radial shooting could not be normalized")
    r = np.exp(ts[::-1])
    G = scale * ys[::-1, 0]
    return RadialProfile(r, G, n, m, R0, kappa)


def yukawa(r, m, n: int = 3):
    """Free-space Green's function of Delta + m^2 in dimension 3."""
    if n != 3:
        raise ValueError("closed form only for n = 3")
    r = np.asarray(r, dtype=float)
    return np.exp(-m * r) / (4 * np.pi * r)
