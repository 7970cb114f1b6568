"""Model geometries: periodic tori and Dirichlet balls on half-offset grids."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .swalgebra import SWCaseData, coupling_map, zero_locus_spinor

BOUNDARIES = ("periodic", "dirichlet_ball")
METRICS = ("flat", "radial")
SINGULAR_SETS = ("tube", "point", "plane", "none")


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class GridDomain:
    """Cell-centered periodic grid; node i on axis k sits at -L_k/2 + (i + 1/2) h_k.

    Nodes are ordered C-style (last axis fastest).  A Dirichlet ball uses the
    vertex-centered box [-R0, R0)^dim with nodes -R0 + i h, so the center is a node;
    nodes with r >= R0 are boundary nodes.
    """

    dim: int
    lengths: tuple
    nodes: tuple
    boundary: str = "periodic"
    ball_radius: float | None = None
    metric: str = "flat"
    kappa: float = 0.0
    singular_set: str = "tube"
    coords: np.ndarray = field(repr=False, compare=False, default=None)
    dist_field: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.lengths, self.nodes))

    @property
    def h(self) -> float:
        """Grid spacing; the minimum over axes when the grid is anisotropic."""
        return min(self.spacing)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coords ** 2, axis=1))

    @property
    def interior(self) -> np.ndarray:
        if self.boundary == "dirichlet_ball":
            return self.radius < self.ball_radius
        return np.ones(self.n_nodes, dtype=bool)

    def grid_shape(self, field_):
        return np.asarray(field_).reshape(self.nodes + np.shape(field_)[1:])

    def inscribed_radius(self) -> float:
        """Largest R for which the set {dist = R} is a full shell inside one periodic cell."""
        if self.singular_set == "tube":
            return 0.5 * min(self.lengths[0], self.lengths[1])
        if self.singular_set == "plane":
            return 0.5 * self.lengths[0]
        return 0.5 * min(self.lengths)


def _distance(coords: np.ndarray, singular_set: str) -> np.ndarray:
    if singular_set == "tube":
        return np.hypot(coords[:, 0], coords[:, 1])
    if singular_set == "point":
        return np.sqrt(np.sum(coords ** 2, axis=1))
    if singular_set == "plane":
        return np.abs(coords[:, 0])
    return np.full(coords.shape[0], np.inf)


def make_domain(spec: dict | None = None, **kw) -> GridDomain:
    """Build a GridDomain from a flat spec.

    Keys: dim (3), L (scalar or per-axis), N (scalar or per-axis), boundary,
    R0 (ball radius; sets L = 2 R0), metric, kappa, singular_set.
    """
    s = dict(spec or {})
    s.update(kw)
    dim = int(s.get("dim", 3))
    if dim not in (3, 4):
        raise DomainError(f"dimension {dim} not supported")
    boundary = s.get("boundary", "periodic")
    if boundary not in BOUNDARIES:
        raise DomainError(f"unknown boundary {boundary!r}")
    R0 = s.get("R0")
    if boundary == "dirichlet_ball":
        if R0 is None or float(R0) <= 0:
            raise DomainError("dirichlet_ball needs a positive R0")
        R0 = float(R0)
        L = [2.0 * R0] * dim
    else:
        L = s.get("L", 2.0 * np.pi)
        L = [float(L)] * dim if np.isscalar(L) else [float(v) for v in L]
    N = s.get("N", 16)
    N = [int(N)] * dim if np.isscalar(N) else [int(v) for v in N]
    if len(L) != dim or len(N) != dim:
        raise DomainError("L and N must have one entry per axis")
    if any(v <= 0 for v in L):
        raise DomainError(f"lengths must be positive, got {L}")
    if any(n < 8 for n in N):
        raise DomainError(f"need at least 8 nodes per axis, got {N}")
    metric = s.get("metric", "flat")
    if metric not in METRICS:
        raise DomainError(f"unknown metric {metric!r}")
    kappa = float(s.get("kappa", 0.0))
    if metric == "flat" and kappa != 0.0:
        metric = "radial"
    singular = s.get("singular_set", "tube" if boundary == "periodic" else "none")
    if singular not in SINGULAR_SETS:
        raise DomainError(f"unknown singular set {singular!r}")

    offset = 0.0 if boundary == "dirichlet_ball" else 0.5
    axes = [-Lk / 2 + (np.arange(nk) + offset) * (Lk / nk) for Lk, nk in zip(L, N)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    coords.setflags(write=False)
    dist = _distance(coords, singular)
    dist.setflags(write=False)
    return GridDomain(dim, tuple(L), tuple(N), boundary, R0, metric, kappa, singular, coords, dist)


def compact_radius(domain: GridDomain, R: float) -> float:
    """R_K for K = {dist >= R}: the smallest node distance inside K."""
    d = domain.dist_field
    inside = d[d >= R]
    if inside.size == 0:
        raise DomainError(f"no nodes with dist >= {R}")
    return float(inside.min())


# ---------------------------------------------------------------- base spinors

PROFILES = ("constant_gap", "sqrt_dist", "smooth_bump")


@dataclass(frozen=True)
class BaseSpinorProfile:
    kind: str
    lambda0: float = 1.0
    c2: float = 1.0
    amplitude: float = 0.5

    def __post_init__(self):
        if self.kind not in PROFILES:
            raise DomainError(f"unknown profile {self.kind!r}")

    def magnitude(self, domain: GridDomain) -> np.ndarray:
        if self.kind == "constant_gap":
            return np.full(domain.n_nodes, float(self.lambda0))
        if self.kind == "sqrt_dist":
            if domain.singular_set == "none":
                raise DomainError("sqrt_dist profile needs a singular set")
            return self.c2 * np.sqrt(domain.dist_field)
        bump = np.ones(domain.n_nodes)
        for k, Lk in enumerate(domain.lengths):
            bump *= np.sin(np.pi * (domain.coords[:, k] + Lk / 2) / Lk) ** 2
        return self.lambda0 * (1.0 + self.amplitude * bump)


def sample_phi0(domain: GridDomain, profile: BaseSpinorProfile, data: SWCaseData) -> np.ndarray:
    """Phi0(y) = |Phi0|(y) u with a fixed unit u in the moment-map zero locus."""
    if data.dim != domain.dim:
        raise DomainError(f"case {data.case_id} lives in dimension {data.dim}, domain has {domain.dim}")
    if data.dim != 3 and profile.kind != "constant_gap":
        raise DomainError("4-d cases only support constant profiles")
    u = zero_locus_spinor(data)
    return profile.magnitude(domain)[:, None] * u[None, :]


def unit_gap(data: SWCaseData, u) -> float:
    """Smallest nonzero singular value of the coupling map at a unit spinor."""
    s = np.linalg.svd(coupling_map(data, u), compute_uv=False)
    return float(s[s > 1e-9 * s[0]].min())
