import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from diraclab.assembly import SparseOperator, assemble_D, assemble_Deps
from diraclab.clifford import build_clifford
from diraclab.domain import make_domain
from diraclab.solvers import (SolverError, center_node, cg_solve, green_solve, kernel_approx,
                              radial_green_ode, screened_laplacian, solve_inhomogeneous, yukawa)


def test_cg_identity():
    b = np.arange(1.0, 6.0)
    x, rep = cg_solve(np.eye(5), b)
    assert np.allclose(x, b) and rep.iterations == 1


def test_cg_diagonal():
    x, _ = cg_solve(np.diag([1.0, 2.0]), np.array([1.0, 2.0]))
    assert np.allclose(x, [1.0, 1.0])


def test_cg_zero_rhs():
    x, rep = cg_solve(np.eye(3), np.zeros(3))
    assert not np.any(x) and rep.converged


def test_cg_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        cg_solve(np.array([[2.0, 1.0], [0.0, 2.0]]), np.ones(2))


def test_cg_raise_on_fail(rng):
    M = rng.standard_normal((30, 30))
    M = M @ M.T + 1e-6 * np.eye(30)
    with pytest.raises(SolverError):
        cg_solve(M, rng.standard_normal(30), tol=1e-14, maxit=2, raise_on_fail=True)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_cg_matches_dense(seed):
    r = np.random.default_rng(seed)
    B = r.standard_normal((50, 50))
    M = B @ B.T + 50 * np.eye(50)
    b = r.standard_normal(50)
    x, _ = cg_solve(M, b, tol=1e-12)
    assert np.allclose(x, np.linalg.solve(M, b), atol=1e-8)


def test_cg_energy_error_monotone(rng):
    B = rng.standard_normal((40, 40))
    M = B @ B.T + np.eye(40)
    b = rng.standard_normal(40)
    exact = np.linalg.solve(M, b)
    errs = []
    for k in range(1, 15):
        x, _ = cg_solve(M, b, tol=1e-30, maxit=k)
        e = x - exact
        errs.append(e @ M @ e)
    assert all(b2 <= b1 * (1 + 1e-10) for b1, b2 in zip(errs[:-1], errs[1:]))


def _small_torus_D():
    dom = make_domain(L=2 * np.pi, N=8)
    return dom, assemble_D(dom, build_clifford(3))


def test_inhomogeneous_zero_and_identity(rng):
    _, D = _small_torus_D()
    q, _ = solve_inhomogeneous(D, np.zeros(D.shape[0]))
    assert not np.any(q)
    I = SparseOperator(sp.identity(50, format="csr"), 1.0, 1)
    f = rng.standard_normal(50)
    q, _ = solve_inhomogeneous(I, f)
    assert np.allclose(q, f)


def test_inhomogeneous_vs_dense(rng):
    dom, D = _small_torus_D()
    n = D.shape[0]
    A = SparseOperator(sp.diags(rng.uniform(0.5, 1.5, n)).tocsr(), D.h, 4)
    De = assemble_Deps(D, A, 0.3)
    f = rng.standard_normal(n)
    q, _ = solve_inhomogeneous(De, f, tol=1e-12)
    dense = np.linalg.lstsq(De.matrix.toarray(), f, rcond=None)[0]
    assert np.allclose(q, dense, atol=1e-6)


def test_kernel_of_D_is_constant():
    dom, D = _small_torus_D()
    rng = np.random.default_rng(3)
    start = np.tile(rng.standard_normal(4), dom.n_nodes) + 0.1 * rng.standard_normal(D.shape[0])
    lam, q, rep = kernel_approx(D, tol=1e-8, start=start, shift=1e-3, cell_volume=dom.cell_volume)
    assert lam <= 1e-10
    assert np.isclose(np.sum(q ** 2) * dom.cell_volume, 1.0)
    # centered differences also annihilate the Nyquist sign patterns (-1)^{i+j+k...}
    idx = np.indices(dom.nodes).reshape(3, -1).T
    patterns = [np.prod(np.where(np.array(s) == 1, (-1.0) ** idx, 1.0), axis=1)
                for s in np.ndindex(2, 2, 2)]
    basis = np.column_stack([np.kron(p, np.eye(4)[k]) for p in patterns for k in range(4)])
    coef, *_ = np.linalg.lstsq(basis, q, rcond=None)
    assert np.linalg.norm(basis @ coef - q) <= 1e-6 * np.linalg.norm(q)
    assert np.linalg.matrix_rank(D.matrix.toarray()) == D.shape[0] - 32


def test_kernel_vs_dense_shifted(rng):
    dom, D = _small_torus_D()
    n = D.shape[0]
    c = 0.7
    De = SparseOperator((D.matrix + c * sp.identity(n)).tocsr(), D.h, 4)
    lam, q, _ = kernel_approx(De, tol=1e-8, seed=1, maxit=500)
    M = (De.matrix.T @ De.matrix).toarray()
    dense = np.linalg.eigvalsh(M)
    assert np.isclose(lam, dense[0], rtol=1e-6, atol=1e-9)
    # Rayleigh quotients of random probes never undercut the eigenvalue
    for _ in range(10):
        v = rng.standard_normal(n)
        assert lam <= v @ M @ v / (v @ v) + 1e-9


def test_kernel_deflation_orthogonal():
    dom, D = _small_torus_D()
    n = D.shape[0]
    De = SparseOperator((D.matrix + 0.7 * sp.identity(n)).tocsr(), D.h, 4)
    lam1, q1, _ = kernel_approx(De, tol=1e-8, seed=1, maxit=500)
    lam2, q2, _ = kernel_approx(De, tol=1e-8, seed=2, deflate=[q1], maxit=500)
    assert abs(q1 @ q2) / (np.linalg.norm(q1) * np.linalg.norm(q2)) <= 1e-8
    assert lam2 >= lam1 - 1e-9


def test_radial_newtonian():
    prof = radial_green_ode(3, 0.0, 1e9)
    r = np.linspace(0.1, 0.8, 30)
    assert np.max(np.abs(prof(r) * 4 * np.pi * r - 1)) <= 1e-6


def test_radial_dirichlet_closed_form():
    # massless Dirichlet Green's function on a ball: 1/(4 pi r) - 1/(4 pi R0)
    prof = radial_green_ode(3, 0.0, 1.0)
    r = np.linspace(0.1, 0.8, 30)
    exact = 1 / (4 * np.pi * r) - 1 / (4 * np.pi)
    assert np.max(np.abs(prof(r) / exact - 1)) <= 1e-6


def test_radial_yukawa_limit():
    r = np.linspace(0.2, 1.0, 9)
    errs = [np.max(np.abs(radial_green_ode(3, 2.0, R0)(r) / yukawa(r, 2.0) - 1)) for R0 in (1.5, 2.0, 3.0, 4.0, 12.0)]
    assert all(a > b for a, b in zip(errs[:4], errs[1:4]))
    assert errs[-1] < 1e-6


def test_radial_monotone():
    for kappa in (0.0, 0.1):
        prof = radial_green_ode(3, 5.0, 1.0, kappa)
        r = np.linspace(0.05, 0.99, 200)
        assert np.all(np.diff(prof(r)) < 0)


def test_radial_bad_args():
    with pytest.raises(ValueError):
        radial_green_ode(5, 1.0, 1.0)
    with pytest.raises(ValueError):
        radial_green_ode(3, -1.0, 1.0)


def test_green_against_yukawa_value():
    dom = make_domain(boundary="dirichlet_ball", R0=2.0, N=64)
    x0 = center_node(dom)
    G, _ = green_solve(dom, 2.0, x0)
    r = np.linalg.norm(dom.coords - dom.coords[x0], axis=1)
    at = np.isclose(r, 0.5)
    assert at.any()
    assert np.allclose(G[at], np.exp(-1) / (2 * np.pi), rtol=0.02)


def test_green_symmetric_positive():
    dom = make_domain(boundary="dirichlet_ball", R0=1.0, N=16, kappa=0.1)
    M, interior = screened_laplacian(dom, 3.0)
    assert abs(M - M.T).max() <= 1e-12 * abs(M).max()
    a, b = interior[10], interior[len(interior) // 2]
    Ga, _ = green_solve(dom, 3.0, a)
    Gb, _ = green_solve(dom, 3.0, b)
    assert np.isclose(Ga[b], Gb[a], rtol=1e-9)
    assert np.all(Ga[dom.interior] > 0)
    assert not np.any(Ga[~dom.interior])


def test_green_rejects_boundary_pole():
    dom = make_domain(boundary="dirichlet_ball", R0=1.0, N=16)
    with pytest.raises(ValueError):
        green_solve(dom, 1.0, 0)
