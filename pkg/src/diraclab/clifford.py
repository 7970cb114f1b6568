"""Real Clifford modules in dimensions 3 and 4 built from quaternion multiplication.

Dimension 3 uses left multiplication by i, j, k on H = R^4 (basis 1, i, j, k).
Dimension 4 uses H + H with sigma(xi)(x+, x-) = (-conj(xi) x-, xi x+).

All matrices are signed permutations, so every relation checked here is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_UNITS = ("1", "i", "j", "k")

# Hamilton product table: _QMUL[a][b] = (sign, index) with e_a * e_b = sign * e_index
_QMUL = (
    ((1, 0), (1, 1), (1, 2), (1, 3)),
    ((1, 1), (-1, 0), (1, 3), (-1, 2)),
    ((1, 2), (-1, 3), (-1, 0), (1, 1)),
    ((1, 3), (1, 2), (-1, 1), (-1, 0)),
)


def quat_mul(p, q):
    """Hamilton product of two quaternions given as length-4 arrays."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(4)
    for a in range(4):
        for b in range(4):
            s, c = _QMUL[a][b]
            out[c] += s * p[a] * q[b]
    return out


def left_mult(q) -> np.ndarray:
    """Matrix of x -> q x on R^4."""
    q = np.asarray(q, dtype=float)
    m = np.zeros((4, 4))
    for a in range(4):
        for b in range(4):
            s, c = _QMUL[a][b]
            m[c, b] += s * q[a]
    return m


def right_mult(q) -> np.ndarray:
    """Matrix of x -> x q on R^4."""
    q = np.asarray(q, dtype=float)
    m = np.zeros((4, 4))
    for a in range(4):
        for b in range(4):
            s, c = _QMUL[a][b]
            m[c, a] += s * q[b]
    return m


def unit(k: int, n: int = 4) -> np.ndarray:
    e = np.zeros(n)
    e[k] = 1.0
    return e


class CliffordError(ValueError):
    pass


@dataclass(frozen=True)
class CliffordModel:
    dim: int
    fiber_dim: int
    gamma: tuple
    grading: tuple | None = field(default=None)

    def __post_init__(self):
        if len(self.gamma) != self.dim:
            raise CliffordError(f"expected {self.dim} symbol matrices, got {len(self.gamma)}")
        frozen = []
        for g in self.gamma:
            g = np.array(g, dtype=float)
            if g.shape != (self.fiber_dim, self.fiber_dim):
                raise CliffordError(f"symbol matrix has shape {g.shape}, fiber is {self.fiber_dim}")
            g.setflags(write=False)
            frozen.append(g)
        object.__setattr__(self, "gamma", tuple(frozen))


def quaternion_symbols_3d() -> list[np.ndarray]:
    return [left_mult(unit(k)) for k in (1, 2, 3)]


def quaternion_symbols_4d() -> list[np.ndarray]:
    mats = []
    for k in range(4):
        lx = left_mult(unit(k))
        z = np.zeros((4, 4))
        mats.append(np.block([[z, -lx.T], [lx, z]]))
    return mats


def build_clifford(dim: int) -> CliffordModel:
    if dim == 3:
        return CliffordModel(3, 4, tuple(quaternion_symbols_3d()))
    if dim == 4:
        grading = (tuple(range(4)), tuple(range(4, 8)))
        return CliffordModel(4, 8, tuple(quaternion_symbols_4d()), grading)
    raise CliffordError(f"unsupported dimension {dim}; only 3 and 4 are available")


def symbol(model: CliffordModel, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.size != model.dim:
        raise CliffordError(f"covector has {xi.size} entries, model dimension is {model.dim}")
    out = np.zeros((model.fiber_dim, model.fiber_dim))
    for c, g in zip(xi, model.gamma):
        out += c * g
    return out


def clifford_defect(model: CliffordModel) -> float:
    """Largest entry of |s_i s_j + s_j s_i + 2 delta_ij Id| over all pairs."""
    n = model.fiber_dim
    worst = 0.0
    for i in range(model.dim):
        for j in range(i, model.dim):
            gi, gj = model.gamma[i], model.gamma[j]
            m = gi @ gj + gj @ gi
            if i == j:
                m = m + 2.0 * np.eye(n)
            worst = max(worst, float(np.max(np.abs(m))))
    return worst


def grading_defect(model: CliffordModel) -> float:
    """Size of the parity-preserving blocks of each symbol; zero for a graded module."""
    if model.grading is None:
        return 0.0
    plus, minus = (list(p) for p in model.grading)
    worst = 0.0
    for g in model.gamma:
        worst = max(worst, float(np.max(np.abs(g[np.ix_(plus, plus)]))),
                    float(np.max(np.abs(g[np.ix_(minus, minus)]))))
    return worst
