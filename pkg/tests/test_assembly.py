import numpy as np
import pytest
import scipy.sparse as sp

from diraclab.assembly import (AssemblyError, SparseOperator, assemble_A, assemble_D, assemble_Deps,
                               export_matrix_market, perturbation_field, read_matrix_market,
                               splitting_leak, weitzenbock_extract)
from diraclab.clifford import build_clifford
from diraclab.domain import BaseSpinorProfile, make_domain, sample_phi0
from diraclab.swalgebra import case_data, corrupt_gamma, splitting_at, total_clifford, zero_locus_spinor


@pytest.fixture(scope="module")
def torus8():
    return make_domain(L=2 * np.pi, N=8)


def test_D_shape_and_stencil():
    dom = make_domain(L=2 * np.pi, N=16)
    D = assemble_D(dom, build_clifford(3))
    assert D.shape == (16384, 16384)
    counts = np.diff(D.matrix.indptr)
    assert np.all(counts == 6)
    assert abs(D.matrix - D.matrix.T).max() == 0


def test_D_kills_constants(torus8):
    D = assemble_D(torus8, build_clifford(3))
    v = np.tile(np.arange(1.0, 5.0), torus8.n_nodes)
    assert np.max(np.abs(D @ v)) < 1e-13


def test_plane_wave_symbol():
    dom = make_domain(L=2 * np.pi, N=64)
    D = assemble_D(dom, build_clifford(3))
    h = dom.h
    x = dom.coords[:, 0]
    v = np.array([1.0, -2.0, 0.5, 3.0])
    s1 = build_clifford(3).gamma[0]
    # e^{ix} v = cos x v + i sin x v; the centered difference multiplies by i sin(h)/h
    c = (np.cos(x)[:, None] * v).ravel()
    s = (np.sin(x)[:, None] * v).ravel()
    k = np.sin(h) / h
    assert np.linalg.norm(D @ c + k * (np.sin(x)[:, None] * (s1 @ v)).ravel()) <= 1e-10
    assert np.linalg.norm(D @ s - k * (np.cos(x)[:, None] * (s1 @ v)).ravel()) <= 1e-10


def test_D_rejects_mismatch(torus8):
    with pytest.raises(AssemblyError):
        assemble_D(torus8, build_clifford(4))
    ball = make_domain(boundary="dirichlet_ball", R0=1.0, N=8)
    with pytest.raises(AssemblyError):
        assemble_D(ball, build_clifford(3))


def test_A_zero_and_constant(torus8):
    d = case_data("I")
    A0 = assemble_A(torus8, d, np.zeros((torus8.n_nodes, 8)))
    assert A0.nnz == 0
    A = assemble_A(torus8, d, sample_phi0(torus8, BaseSpinorProfile("constant_gap", 1.0), d)).matrix
    f = d.fiber_dim
    first = A[:f, :f].toarray()
    for i in range(1, torus8.n_nodes, 97):
        assert np.array_equal(A[i * f:(i + 1) * f, i * f:(i + 1) * f].toarray(), first)


def test_A_gap_sqrt_profile(torus8):
    d = case_data("I")
    phi = sample_phi0(torus8, BaseSpinorProfile("sqrt_dist", c2=1.3), d)
    pf = perturbation_field(torus8, d, phi)
    A = pf.A.matrix
    f = d.fiber_dim
    for i in range(0, torus8.n_nodes, 61):
        blk = A[i * f:(i + 1) * f, i * f:(i + 1) * f].toarray()
        Q = splitting_at(d, phi[i]).proj_H
        sv = np.linalg.svd(blk @ Q, compute_uv=False)
        sv = sv[sv > 1e-9 * sv[0]]
        assert np.isclose(sv.min(), 1.3 * np.sqrt(torus8.dist_field[i]), rtol=1e-10)
        assert np.isclose(pf.gap[i], sv.min(), rtol=1e-10)


def test_A_preserves_splitting(torus8):
    d = case_data("I")
    pf = perturbation_field(torus8, d, sample_phi0(torus8, BaseSpinorProfile("smooth_bump"), d))
    assert abs(pf.proj_N @ pf.A.matrix).max() <= 1e-12
    assert abs(pf.A.matrix @ pf.proj_N).max() <= 1e-12


def test_Deps_limits(torus8):
    d = case_data("I")
    D = assemble_D(torus8, total_clifford(d))
    A = assemble_A(torus8, d, sample_phi0(torus8, BaseSpinorProfile("constant_gap"), d))
    big = assemble_Deps(D, A, 1e300)
    assert abs(big.matrix - D.matrix).max() < 1e-290
    n = D.shape[0]
    ident = SparseOperator(sp.identity(n, format="csr"), D.h, D.fiber_dim, None, True)
    shifted = assemble_Deps(D, ident, 1.0)
    assert np.allclose(shifted.matrix.diagonal(), 1.0)
    with pytest.raises(AssemblyError):
        assemble_Deps(D, A, 0.0)


@pytest.mark.parametrize("eps", [0.3, 0.05])
def test_weitzenbock_identity(torus8, eps):
    d = case_data("I")
    D = assemble_D(torus8, total_clifford(d))
    A = assemble_A(torus8, d, sample_phi0(torus8, BaseSpinorProfile("smooth_bump"), d))
    De = assemble_Deps(D, A, eps).matrix
    parts = weitzenbock_extract(D, A)
    assert abs(De.T @ De - parts.normal_operator(eps)).max() <= 1e-9 * abs(De.T @ De).max()


def test_constant_field_cross_term_vanishes(torus8):
    d = case_data("I")
    D = assemble_D(torus8, total_clifford(d))
    A = assemble_A(torus8, d, sample_phi0(torus8, BaseSpinorProfile("constant_gap", 2.0), d))
    assert weitzenbock_extract(D, A).cross_norm <= 1e-12


def _cross(N, data_for_A):
    dom = make_domain(L=2 * np.pi, N=N)
    d = case_data("I")
    D = assemble_D(dom, total_clifford(d))
    A = assemble_A(dom, data_for_A, sample_phi0(dom, BaseSpinorProfile("smooth_bump"), d))
    return weitzenbock_extract(D, A).cross_norm


def test_cross_term_dichotomy():
    good = _cross(32, case_data("I")) / _cross(16, case_data("I"))
    bad = _cross(32, corrupt_gamma(case_data("I"))) / _cross(16, corrupt_gamma(case_data("I")))
    assert 0.5 <= good <= 1.5
    assert bad >= 1.8


def test_restricted_rows(torus8):
    d = case_data("I")
    D = assemble_D(torus8, total_clifford(d))
    A = assemble_A(torus8, d, sample_phi0(torus8, BaseSpinorProfile("smooth_bump"), d))
    none = np.zeros(torus8.n_nodes, dtype=bool)
    assert weitzenbock_extract(D, A, rows=none).cross_norm == 0.0


def test_splitting_leak_constant(torus8):
    d = case_data("I")
    D = assemble_D(torus8, total_clifford(d))
    pf = perturbation_field(torus8, d, sample_phi0(torus8, BaseSpinorProfile("smooth_bump"), d))
    assert pf.constant_direction
    assert splitting_leak(D, pf) <= 1e-12


def test_perturbation_field_rejects_zero(torus8):
    d = case_data("I")
    phi = sample_phi0(torus8, BaseSpinorProfile("constant_gap"), d)
    phi[3] = 0.0
    with pytest.raises(AssemblyError):
        perturbation_field(torus8, d, phi)


def test_nonconstant_direction(torus8):
    d = case_data("I")
    u = zero_locus_spinor(d)
    J = d.lie_action[0]
    theta = torus8.coords[:, 2]
    phi = np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * (J @ u)
    pf = perturbation_field(torus8, d, phi)
    assert not pf.constant_direction
    assert np.allclose(pf.gap, pf.gap[0])
    assert abs(pf.proj_N @ pf.A.matrix).max() <= 1e-12


def test_matrix_market_roundtrip(torus8, tmp_path):
    d = case_data("I")
    D = assemble_D(torus8, total_clifford(d))
    A = assemble_A(torus8, d, sample_phi0(torus8, BaseSpinorProfile("constant_gap"), d))
    op = assemble_Deps(D, A, 0.1)
    path = tmp_path / "op.mtx"
    export_matrix_market(op, path, {"eps": 0.1, "case": "I"})
    text = path.read_text().splitlines()
    assert text[0].startswith("%%MatrixMarket matrix coordinate real general")
    assert "eps=0.1" in text[1]
    back = read_matrix_market(path)
    orig = op.matrix.tocoo()
    assert sorted(zip(back.row, back.col, back.data)) == sorted(zip(orig.row, orig.col, orig.data))
    # six D entries per row plus one dense fiber block of A per node
    assert orig.nnz == torus8.n_nodes * d.fiber_dim * 6 + torus8.n_nodes * 16
