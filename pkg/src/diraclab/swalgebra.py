"""Fiber algebra of generalized Seiberg-Witten data, Cases I-IV.

Layout conventions
------------------
Spinors and forms both carry a Lie index ``alpha`` and a quaternion index ``q``;
the flat coordinate is ``4 * alpha + q`` (Case I has a single Lie index, and
its spinor has two quaternion-sized blocks ``alpha`` and ``beta``).

The form fiber F of a 3-d case is (Omega^0 + Omega^1)(g); coordinate ``4*alpha + j``
holds the e^j (j=0 is the 0-form) component along t_alpha.  In dimension 4 the form
fiber is F+ + F- with F+ = Omega^1(g) and F- = (Omega^0 + Lambda^2_+)(g), each
laid out as above, and the spinor inputs of the public functions live in S+.

Sign conventions
----------------
gamma(e^j x t) = -rho(e^j) t  (rho(e^0) = Id) and mu_J(phi, psi) = <phi, gamma(E_J) psi>.
The overall minus sign makes the gauge row of mu equal to <t phi, psi> and the
Case II moment map equal to -1/2 *[Psi ^ Psi].  The form symbol is then forced
to be cl(xi) = -L_xi on H = Omega^0 + Omega^1, i.e. the symbol of
[[0, -d*], [-d, -*d]] for the orientation s1 s2 s3 = -Id.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import product

import numpy as np

from .clifford import CliffordModel, left_mult, right_mult, unit

CASES = ("I", "II", "III", "IV")


class DegenerateFiberError(ValueError):
    """Raised when the base spinor vanishes, i.e. the fiber sits on the singular set."""


class FiberDimensionError(ValueError):
    pass


def _realify(m: np.ndarray) -> np.ndarray:
    """Complex n x n matrix -> real 2n x 2n acting on (Re z0, Im z0, Re z1, ...)."""
    n = m.shape[0]
    out = np.zeros((2 * n, 2 * n))
    for a in range(n):
        for b in range(n):
            z = m[a, b]
            out[2 * a:2 * a + 2, 2 * b:2 * b + 2] = [[z.real, -z.imag], [z.imag, z.real]]
    return out


def su2_structure() -> np.ndarray:
    """ad(t_alpha) as 3x3 matrices, (ad t_a)[c, b] = eps_{abc}, so [t1, t2] = t3."""
    eps = np.zeros((3, 3, 3))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[a, b, c] = 1.0
        eps[b, a, c] = -1.0
    return np.array([eps[a].T for a in range(3)])


def su2_basis() -> np.ndarray:
    """t_alpha = -(i/2) Pauli_alpha; orthonormal for <X, Y> = -2 tr(XY)."""
    pauli = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])
    return -0.5j * pauli


@dataclass(frozen=True)
class SWCaseData:
    case_id: str
    group: str
    dim: int
    spinor_dim: int
    form_dim: int
    lie_basis: np.ndarray
    frame: tuple
    rho: tuple
    cl: tuple
    frame_gamma: tuple
    lie_action: tuple

    @property
    def total_spinor_dim(self) -> int:
        return self.rho[0].shape[0]

    @property
    def fiber_dim(self) -> int:
        return self.total_spinor_dim + self.form_dim

    @property
    def lie_dim(self) -> int:
        return len(self.lie_action)


def _freeze(mats):
    out = []
    for m in mats:
        m = np.array(m, dtype=float)
        m.setflags(write=False)
        out.append(m)
    return tuple(out)


def _case_3d(case_id, group, lie_basis, spin_rho, lie_action, g_dim):
    quat_L = [left_mult(unit(k)) for k in range(4)]
    cl = [np.kron(np.eye(g_dim), -quat_L[k]) for k in (1, 2, 3)]
    gammas, frame = [], []
    for alpha in range(g_dim):
        for j in range(4):
            r = np.eye(spin_rho[0].shape[0]) if j == 0 else spin_rho[j - 1]
            gammas.append(-r @ lie_action[alpha])
            frame.append((j, alpha))
    return SWCaseData(
        case_id=case_id, group=group, dim=3,
        spinor_dim=spin_rho[0].shape[0], form_dim=4 * g_dim,
        lie_basis=lie_basis, frame=tuple(frame),
        rho=_freeze(spin_rho), cl=_freeze(cl),
        frame_gamma=_freeze(gammas), lie_action=_freeze(lie_action),
    )


def _case_4d(case_id, group, lie_basis, plus_action, copies, g_dim):
    """Spinors S+ = S- = R^copies (x) H with Lie action ``plus_action`` on both halves."""
    half = 4 * copies
    z = np.zeros((half, half))
    rho = []
    for k in range(4):
        lk = np.kron(np.eye(copies), left_mult(unit(k)))
        rho.append(np.block([[z, -lk.T], [lk, z]]))
    fz = np.zeros((4 * g_dim, 4 * g_dim))
    cl = []
    for k in range(4):
        c = np.kron(np.eye(g_dim), left_mult(unit(k)).T)
        cl.append(np.block([[fz, -c.T], [c, fz]]))
    gammas, frame = [], []
    for part in ("+", "-"):
        for alpha in range(g_dim):
            for j in range(4):
                blk = -np.kron(np.eye(copies), left_mult(unit(j))) @ plus_action[alpha]
                g = np.zeros((2 * half, 2 * half))
                if part == "+":
                    g[half:, :half] = blk
                else:
                    g[:half, :half] = blk
                gammas.append(g)
                frame.append((part, j, alpha))
    action = [np.block([[t, z], [z, t]]) for t in plus_action]
    return SWCaseData(
        case_id=case_id, group=group, dim=4,
        spinor_dim=half, form_dim=8 * g_dim,
        lie_basis=lie_basis, frame=tuple(frame),
        rho=_freeze(rho), cl=_freeze(cl),
        frame_gamma=_freeze(gammas), lie_action=_freeze(action),
    )


def case_data(case_id: str) -> SWCaseData:
    if case_id == "I":
        # complex Clifford matrices on W, c1 c2 = c3, orientation -1
        c = [np.diag([-1j, 1j]), np.array([[0, -1j], [-1j, 0]]), np.array([[0, -1], [1, 0]], dtype=complex)]
        # W (x) E, complex order (alpha1, alpha2, beta1, beta2)
        rho = [_realify(np.kron(ck, np.eye(2))) for ck in c]
        J = _realify(1j * np.eye(4))
        return _case_3d("I", "U1", np.array([[[1j]]]), rho, [J], 1)
    if case_id == "II":
        ad = su2_structure()
        rho = [np.kron(np.eye(3), left_mult(unit(k))) for k in (1, 2, 3)]
        act = [np.kron(ad[a], np.eye(4)) for a in range(3)]
        return _case_3d("II", "SU2", su2_basis(), rho, act, 3)
    if case_id == "III":
        act = [np.kron(np.eye(2), right_mult(unit(1)))]
        return _case_4d("III", "U1", np.array([[[1j]]]), act, 2, 1)
    if case_id == "IV":
        ad = su2_structure()
        act = [np.kron(ad[a], np.eye(4)) for a in range(3)]
        return _case_4d("IV", "SU2", su2_basis(), act, 3, 3)
    raise ValueError(f"unknown case {case_id!r}; expected one of {CASES}")


def total_clifford(data: SWCaseData) -> CliffordModel:
    """Clifford module on E = S + F with symbol diag(rho, cl)."""
    ns = data.total_spinor_dim
    mats = []
    for r, c in zip(data.rho, data.cl):
        m = np.zeros((data.fiber_dim, data.fiber_dim))
        m[:ns, :ns] = r
        m[ns:, ns:] = c
        mats.append(m)
    grading = None
    if data.dim == 4:
        hs, hf = ns // 2, data.form_dim // 2
        plus = tuple(range(hs)) + tuple(ns + k for k in range(hf))
        minus = tuple(range(hs, ns)) + tuple(ns + hf + k for k in range(hf))
        grading = (plus, minus)
    return CliffordModel(data.dim, data.fiber_dim, tuple(mats), grading)


# ---------------------------------------------------------------- vectors

def _spinor(data: SWCaseData, psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=float).ravel()
    if psi.size == data.total_spinor_dim:
        return psi
    if psi.size == data.spinor_dim:
        out = np.zeros(data.total_spinor_dim)
        out[:psi.size] = psi
        return out
    raise FiberDimensionError(f"spinor has {psi.size} entries; case {data.case_id} expects {data.spinor_dim}")


def _form(data: SWCaseData, a) -> np.ndarray:
    a = np.asarray(a, dtype=float).ravel()
    if a.size != data.form_dim:
        raise FiberDimensionError(f"form has {a.size} entries; case {data.case_id} expects {data.form_dim}")
    return a


def _covector(data: SWCaseData, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.size != data.dim:
        raise FiberDimensionError(f"covector has {xi.size} entries; expected {data.dim}")
    return xi


def case1_spinor(alpha, beta) -> np.ndarray:
    """Realify (alpha, beta) in C^2 + C^2 to R^8."""
    z = np.concatenate([np.asarray(alpha, dtype=complex), np.asarray(beta, dtype=complex)])
    return np.column_stack([z.real, z.imag]).ravel()


def tensor_vector(data: SWCaseData, entries: dict) -> np.ndarray:
    """Vector with coefficient c at t_alpha (x) e^j, keys (alpha, j) with alpha 1-based."""
    n = data.form_dim if data.dim == 3 else data.spinor_dim
    out = np.zeros(n)
    for (alpha, j), c in entries.items():
        out[4 * (alpha - 1) + j] += c
    return out


def zero_locus_spinor(data: SWCaseData) -> np.ndarray:
    """A fixed unit spinor with mu(psi, psi) = 0, used as the direction of synthetic base spinors."""
    if data.case_id == "I":
        return case1_spinor([1, 0], [0, 1]) / np.sqrt(2.0)
    if data.case_id in ("II", "IV"):
        return tensor_vector(data, {(1, 1): 1.0})
    for p, q in product(range(4), repeat=2):
        psi = np.concatenate([unit(p), unit(q)]) / np.sqrt(2.0)
        if np.max(np.abs(moment_map(data, psi))) < 1e-14:
            return psi
    raise RuntimeError("no zero-locus spinor among basis pairs")


# ---------------------------------------------------------------- maps

def gamma_action(data: SWCaseData, a, psi) -> np.ndarray:
    a = _form(data, a)
    psi = _spinor(data, psi)
    out = np.zeros(data.total_spinor_dim)
    for c, g in zip(a, data.frame_gamma):
        if c != 0.0:
            out += c * (g @ psi)
    return out


def gamma_matrix(data: SWCaseData, a) -> np.ndarray:
    a = _form(data, a)
    return sum(c * g for c, g in zip(a, data.frame_gamma))


def coupling_map(data: SWCaseData, phi0) -> np.ndarray:
    """Matrix of a -> gamma(a) phi0, from forms to spinors."""
    phi0 = _spinor(data, phi0)
    return np.column_stack([g @ phi0 for g in data.frame_gamma])


def linearized_moment(data: SWCaseData, phi, psi) -> np.ndarray:
    """mu_J(phi, psi) = <phi, gamma(E_J) psi>, including the gauge (0-form) row."""
    phi = _spinor(data, phi)
    return coupling_map(data, psi).T @ phi


def moment_polar(data: SWCaseData, phi, psi) -> np.ndarray:
    """Symmetric polarization of the moment map; moment_polar(psi, psi) = 2 moment_map(psi)."""
    return 0.5 * (linearized_moment(data, phi, psi) + linearized_moment(data, psi, phi))


def moment_map(data: SWCaseData, psi) -> np.ndarray:
    """1/2 mu(psi, psi) as a form-fiber vector in the frame {e^j (x) t_alpha}."""
    return 0.5 * linearized_moment(data, psi, psi)


def frame_components(data: SWCaseData, form) -> np.ndarray:
    """Reshape a 3-d form vector to [alpha, j] with j = 0..3."""
    return np.asarray(form).reshape(data.lie_dim, 4)


def build_A(data: SWCaseData, phi0) -> np.ndarray:
    """A = [[0, gamma(-)phi0], [mu(-, phi0), 0]] on S + F."""
    G = coupling_map(data, phi0)
    ns = data.total_spinor_dim
    A = np.zeros((data.fiber_dim, data.fiber_dim))
    A[:ns, ns:] = G
    A[ns:, :ns] = G.T
    return A


def bracket_block(data: SWCaseData, a) -> np.ndarray:
    """b -> [b, a0] on the form fiber, a0 the 0-form part of a (zero for abelian cases).

    This is the only bracket-type block compatible with the symbol commutation;
    see ``wedge_bracket_block`` for the full 1-form version.
    """
    a = _form(data, a)
    if data.group != "SU2" or data.dim != 3:
        return np.zeros((data.form_dim, data.form_dim))
    ad = su2_structure()
    a0 = frame_components(data, a)[:, 0]
    return -np.kron(np.tensordot(a0, ad, axes=1), np.eye(4))


def wedge_bracket_block(data: SWCaseData, a) -> np.ndarray:
    """Case II map b -> [b, a0] + *[b ^ a] on 1-form parts; fails the symbol commutation."""
    a = frame_components(data, _form(data, a))
    ad = su2_structure()
    out = -np.kron(np.tensordot(a[:, 0], ad, axes=1), np.eye(4))
    eps3 = {(1, 2): 3, (2, 3): 1, (3, 1): 2}
    for (j, k), l in eps3.items():
        for jj, kk, sign in ((j, k, 1.0), (k, j, -1.0)):
            # *(e^jj ^ e^kk) = sign * e^l ; [b_jj, a_kk] lands in slot l
            brk = np.tensordot(a[:, kk], ad, axes=1)  # c -> [a_kk, c]
            for beta in range(3):
                for gam in range(3):
                    out[4 * gam + l, 4 * beta + jj] += -sign * brk[gam, beta]
    return out


def build_A_eps(data: SWCaseData, phi, a, eps: float) -> np.ndarray:
    """Zeroth-order perturbation carried by a solution (phi, a) at scale eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    phi = eps * _spinor(data, phi)
    a = eps * _form(data, a)
    M = build_A(data, phi)
    ns = data.total_spinor_dim
    M[ns:, ns:] += bracket_block(data, a)
    return M


@dataclass(frozen=True)
class FiberSplitting:
    proj_N: np.ndarray
    proj_H: np.ndarray
    base_spinor: np.ndarray

    @property
    def rank_N(self) -> int:
        return int(round(np.trace(self.proj_N)))


def _kernel_projector(m: np.ndarray, rel_tol: float) -> np.ndarray:
    n = m.shape[1]
    if m.size == 0 or not np.any(m):
        return np.eye(n)
    _, s, vt = np.linalg.svd(m)
    cut = rel_tol * s[0]
    rank = int(np.sum(s > cut))
    null = vt[rank:].T
    return null @ null.T


def splitting_at(data: SWCaseData, phi0, tol: float = 1e-9) -> FiberSplitting:
    """Split S + F into the kernel bundle N = ker mu(-, phi0) + ker gamma(-)phi0 and its complement."""
    phi0 = _spinor(data, phi0)
    if np.linalg.norm(phi0) <= tol:
        raise DegenerateFiberError(f"|phi0| = {np.linalg.norm(phi0):.3e} <= {tol}: fiber lies on the singular set")
    G = coupling_map(data, phi0)
    ns = data.total_spinor_dim
    P = np.zeros((data.fiber_dim, data.fiber_dim))
    P[:ns, :ns] = _kernel_projector(G.T, tol)
    P[ns:, ns:] = _kernel_projector(G, tol)
    return FiberSplitting(proj_N=P, proj_H=np.eye(data.fiber_dim) - P, base_spinor=phi0)


# ---------------------------------------------------------------- identity checks

def verify_identity_pair(data: SWCaseData, xi, a, phi, psi) -> tuple[float, float]:
    xi = _covector(data, xi)
    a = _form(data, a)
    phi = _spinor(data, phi)
    psi = _spinor(data, psi)
    r = sum(c * m for c, m in zip(xi, data.rho))
    c = sum(c * m for c, m in zip(xi, data.cl))
    d1 = r @ gamma_action(data, a, phi) + gamma_action(data, c @ a, phi)
    d2 = c @ linearized_moment(data, phi, psi) + linearized_moment(data, r @ phi, psi)
    return float(np.linalg.norm(d1)), float(np.linalg.norm(d2))


def commutation_defect(data: SWCaseData, A: np.ndarray) -> float:
    """max over basis xi of |A^T sigma(xi) - sigma(xi)^T A| for the total symbol."""
    model = total_clifford(data)
    return max(float(np.max(np.abs(A.T @ g - g.T @ A))) for g in model.gamma)


def corrupt_gamma(data: SWCaseData, index: int = 1) -> SWCaseData:
    """Negative control: flip the sign of one frame block of gamma."""
    gammas = list(data.frame_gamma)
    gammas[index] = -gammas[index]
    return replace(data, frame_gamma=_freeze(gammas))
