"""Sparse assembly of D, A and D_eps on periodic grids, plus the Weitzenbock split."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .clifford import CliffordModel
from .domain import GridDomain, unit_gap
from .swalgebra import SWCaseData, build_A, splitting_at


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class SparseOperator:
    matrix: sp.csr_matrix
    h: float
    fiber_dim: int
    eps: float | None = None
    symmetric: bool = False

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, v):
        return self.matrix @ v

    @property
    def T(self):
        return self.matrix.T


def _axis_difference(n: int, h: float) -> sp.csr_matrix:
    """Periodic centered difference (u[i+1] - u[i-1]) / 2h."""
    off = np.full(n, 1.0 / (2.0 * h))
    m = sp.diags([off[:-1], -off[:-1]], [1, -1], shape=(n, n), format="lil")
    m[n - 1, 0] = 1.0 / (2.0 * h)
    m[0, n - 1] = -1.0 / (2.0 * h)
    return m.tocsr()


def difference_operators(domain: GridDomain) -> list:
    """Centered periodic differences along each axis on the scalar grid."""
    ops = []
    for k, (n, hk) in enumerate(zip(domain.nodes, domain.spacing)):
        parts = [sp.identity(m, format="csr") for m in domain.nodes]
        parts[k] = _axis_difference(n, hk)
        op = parts[0]
        for p in parts[1:]:
            op = sp.kron(op, p, format="csr")
        ops.append(op)
    return ops


def assemble_D(domain: GridDomain, model: CliffordModel) -> SparseOperator:
    if domain.metric != "flat":
        raise AssemblyError("D is assembled on flat metrics only")
    if domain.boundary != "periodic":
        raise AssemblyError("D is assembled on periodic grids only")
    if model.dim != domain.dim:
        raise AssemblyError(f"model dimension {model.dim} does not match domain {domain.dim}")
    D = None
    for dk, g in zip(difference_operators(domain), model.gamma):
        term = sp.kron(dk, sp.csr_matrix(g), format="csr")
        D = term if D is None else D + term
    D = D.tocsr()
    D.eliminate_zeros()
    return SparseOperator(D, domain.h, model.fiber_dim, None, True)


def _node_blocks(values: np.ndarray, basis_blocks: list) -> sp.csr_matrix:
    """sum_k diag(values[:, k]) (x) B_k."""
    out = None
    for k, B in enumerate(basis_blocks):
        if not np.any(values[:, k]) or not np.any(B):
            continue
        term = sp.kron(sp.diags(values[:, k]), sp.csr_matrix(B), format="csr")
        out = term if out is None else out + term
    n = values.shape[0] * basis_blocks[0].shape[0]
    if out is None:
        return sp.csr_matrix((n, n))
    out = out.tocsr()
    out.eliminate_zeros()
    return out


def assemble_A(domain: GridDomain, data: SWCaseData, phi0_field) -> SparseOperator:
    phi = np.asarray(phi0_field, dtype=float)
    if phi.shape[0] != domain.n_nodes:
        raise AssemblyError(f"field has {phi.shape[0]} nodes, domain has {domain.n_nodes}")
    if phi.shape[1] not in (data.spinor_dim, data.total_spinor_dim):
        raise AssemblyError(f"field carries {phi.shape[1]} spinor components, case {data.case_id} expects {data.spinor_dim}")
    basis = [build_A(data, np.eye(phi.shape[1])[k]) for k in range(phi.shape[1])]
    return SparseOperator(_node_blocks(phi, basis), domain.h, data.fiber_dim, None, True)


def assemble_Deps(D: SparseOperator, A: SparseOperator, eps: float) -> SparseOperator:
    if D.shape != A.shape:
        raise AssemblyError(f"shape mismatch {D.shape} vs {A.shape}")
    if eps <= 0:
        raise AssemblyError("eps must be positive")
    M = (D.matrix + A.matrix * (1.0 / eps)).tocsr()
    return SparseOperator(M, D.h, D.fiber_dim, eps, D.symmetric and A.symmetric)


@dataclass(frozen=True)
class WeitzenbockParts:
    DtD: sp.csr_matrix
    AtA: sp.csr_matrix
    B_h: sp.csr_matrix

    @property
    def cross_norm(self) -> float:
        """Max absolute row sum of the cross term."""
        return sparse_inf_norm(self.B_h)

    def normal_operator(self, eps: float) -> sp.csr_matrix:
        return (self.DtD + self.AtA / eps ** 2 + self.B_h / eps).tocsr()


def sparse_inf_norm(m) -> float:
    m = sp.csr_matrix(m)
    if m.nnz == 0:
        return 0.0
    return float(np.max(np.asarray(abs(m).sum(axis=1)).ravel()))


def weitzenbock_extract(D: SparseOperator, A: SparseOperator, rows=None) -> WeitzenbockParts:
    """Split D_eps^T D_eps; ``rows`` (node mask) restricts B_h to a compact set."""
    if D.shape != A.shape:
        raise AssemblyError(f"shape mismatch {D.shape} vs {A.shape}")
    d, a = D.matrix, A.matrix
    B = (d.T @ a + a.T @ d).tocsr()
    if rows is not None:
        mask = np.repeat(np.asarray(rows, dtype=bool), D.fiber_dim)
        B = sp.diags(mask.astype(float)) @ B
    return WeitzenbockParts((d.T @ d).tocsr(), (a.T @ a).tocsr(), B.tocsr())


# ---------------------------------------------------------------- splittings

@dataclass(frozen=True)
class PerturbationField:
    """Grid field A(y) with the node projectors and the degeneracy gap Lambda(y)."""

    A: SparseOperator
    proj_N: sp.csr_matrix
    proj_H: sp.csr_matrix
    gap: np.ndarray
    constant_direction: bool


def perturbation_field(domain: GridDomain, data: SWCaseData, phi0_field, tol: float = 1e-9) -> PerturbationField:
    phi = np.asarray(phi0_field, dtype=float)
    A = assemble_A(domain, data, phi)
    mags = np.linalg.norm(phi, axis=1)
    if np.any(mags <= tol):
        raise AssemblyError("base spinor vanishes at a node; the grid touches the singular set")
    dirs = phi / mags[:, None]
    constant = bool(np.allclose(dirs, dirs[0], atol=1e-14, rtol=0))
    f = data.fiber_dim
    if constant:
        P = splitting_at(data, dirs[0], tol).proj_N
        PN = sp.kron(sp.identity(domain.n_nodes), sp.csr_matrix(P), format="csr")
        gap = mags * unit_gap(data, dirs[0])
    else:
        blocks, gap = [], np.empty(domain.n_nodes)
        for i in range(domain.n_nodes):
            blocks.append(splitting_at(data, phi[i], tol).proj_N)
            gap[i] = mags[i] * unit_gap(data, dirs[i])
        PN = sp.block_diag(blocks, format="csr")
    PH = (sp.identity(domain.n_nodes * f, format="csr") - PN).tocsr()
    return PerturbationField(A, PN, PH, gap, constant)


def splitting_leak(D: SparseOperator, field: PerturbationField) -> float:
    """Max-entry size of pi_H D pi_N; zero when the splitting is parallel."""
    m = (field.proj_H @ D.matrix @ field.proj_N).tocsr()
    m.eliminate_zeros()
    return float(np.max(np.abs(m.data))) if m.nnz else 0.0


# ---------------------------------------------------------------- export

def export_matrix_market(op: SparseOperator, path, header: dict) -> None:
    comment = " ".join(f"{k}={v}" for k, v in header.items())
    scipy.io.mmwrite(str(path), sp.coo_matrix(op.matrix), comment=comment,
                     field="real", precision=17, symmetry="general")


def read_matrix_market(path) -> sp.coo_matrix:
    return sp.coo_matrix(scipy.io.mmread(str(path)))
