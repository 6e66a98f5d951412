"""Polynomial bases, quadrature rules and the global degree-of-freedom map.

Element bases are scaled monomials ``((x-x_T)/h_T)^a ((y-y_T)/h_T)^b`` in
graded-lexicographic order; edge bases are Legendre polynomials in the edge
parameter ``t`` on ``[-1, 1]`` anchored at the lower-index endpoint.  Two
quadrature tiers are built: an exact tier for polynomial integrands and a
higher-order tier for data integrals (source terms and reference solutions).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .mesh import ElementGeometry, Mesh


class ConfigurationError(ValueError):
    """Invalid space or problem configuration."""


def poly_dim(degree: int) -> int:
    """Dimension of bivariate polynomials of total degree <= degree."""
    return (degree + 1) * (degree + 2) // 2


@dataclass(frozen=True)
class SpaceConfig:
    """Degrees of the weak state space (k) and the multiplier space (r)."""

    k: int
    r: int

    def __post_init__(self):
        if self.k < 2:
            raise ConfigurationError(f"state degree k must be >= 2, got {self.k}")
        if self.r < 1:
            raise ConfigurationError(f"multiplier degree r must be >= 1, got {self.r}")
        if self.r not in (self.k - 2, self.k - 1):
            raise ConfigurationError(
                f"multiplier degree r must be k-2 or k-1, got k={self.k}, r={self.r}"
            )


def default_multiplier_degree(k: int) -> int:
    """Lowest admissible multiplier degree: k-2, except r=1 for k=2."""
    return 1 if k == 2 else k - 2


def _graded_exponents(degree: int) -> np.ndarray:
    exps = [(d - b, b) for d in range(degree + 1) for b in range(d + 1)]
    return np.asarray(exps, dtype=np.int64)


@dataclass(frozen=True)
class ElementBasis:
    """Scaled monomial basis on one triangle."""

    degree: int
    centroid: np.ndarray
    h: float
    exponents: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "exponents", _graded_exponents(self.degree))

    @property
    def dim(self) -> int:
        return self.exponents.shape[0]

    def values(self, points: np.ndarray) -> np.ndarray:
        """Basis values at points, shape (npts, dim)."""
        pts = np.atleast_2d(points)
        X = (pts[:, 0, None] - self.centroid[0]) / self.h
        Y = (pts[:, 1, None] - self.centroid[1]) / self.h
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        return X ** a * Y ** b

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Basis gradients at points, shape (npts, dim, 2)."""
        pts = np.atleast_2d(points)
        X = (pts[:, 0, None] - self.centroid[0]) / self.h
        Y = (pts[:, 1, None] - self.centroid[1]) / self.h
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        gx = np.where(a > 0, a * X ** np.maximum(a - 1, 0) * Y ** b, 0.0) / self.h
        gy = np.where(b > 0, b * X ** a * Y ** np.maximum(b - 1, 0), 0.0) / self.h
        return np.stack((gx, gy), axis=-1)

    def laplacians(self, points: np.ndarray) -> np.ndarray:
        """Basis Laplacians at points, shape (npts, dim)."""
        pts = np.atleast_2d(points)
        X = (pts[:, 0, None] - self.centroid[0]) / self.h
        Y = (pts[:, 1, None] - self.centroid[1]) / self.h
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        lxx = np.where(a > 1, a * (a - 1) * X ** np.maximum(a - 2, 0) * Y ** b, 0.0)
        lyy = np.where(b > 1, b * (b - 1) * X ** a * Y ** np.maximum(b - 2, 0), 0.0)
        return (lxx + lyy) / self.h**2


@dataclass(frozen=True)
class EdgeBasis:
    """Legendre basis in the edge parameter t in [-1, 1].

    ``p0`` (the lower-index endpoint for mesh edges) sits at t = -1, so both
    elements sharing an edge read identical coefficients.
    """

    degree: int
    p0: np.ndarray
    p1: np.ndarray

    @property
    def dim(self) -> int:
        return self.degree + 1

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    def points(self, t: np.ndarray) -> np.ndarray:
        """Physical coordinates of parameter values, shape (npts, 2)."""
        t = np.atleast_1d(t)
        mid = 0.5 * (self.p0 + self.p1)
        half = 0.5 * (self.p1 - self.p0)
        return mid[None, :] + t[:, None] * half[None, :]

    def values(self, t: np.ndarray) -> np.ndarray:
        """Legendre values P_0..P_degree at t, shape (npts, degree+1)."""
        return np.polynomial.legendre.legvander(np.atleast_1d(t), self.degree)

    def derivatives(self, t: np.ndarray) -> np.ndarray:
        """d/dt of each Legendre term at t, shape (npts, degree+1)."""
        t = np.atleast_1d(t)
        out = np.zeros((t.size, self.degree + 1))
        for q in range(1, self.degree + 1):
            coeff = np.zeros(q + 1)
            coeff[q] = 1.0
            out[:, q] = np.polynomial.legendre.legval(
                t, np.polynomial.legendre.legder(coeff)
            )
        return out

    def mass_diagonal(self) -> np.ndarray:
        """Diagonal of the edge mass matrix: |e| / (2q+1) for term q."""
        q = np.arange(self.degree + 1)
        return self.length / (2.0 * q + 1.0)


def eval_basis(basis, points):
    """Values, first derivatives and (element bases only) Laplacians.

    For an :class:`ElementBasis`, ``points`` are (npts, 2) coordinates and
    the result is ``(values, gradients, laplacians)``.  For an
    :class:`EdgeBasis`, ``points`` are parameter values in [-1, 1] and the
    Laplacian slot is None.
    """
    if isinstance(basis, ElementBasis):
        return basis.values(points), basis.gradients(points), basis.laplacians(points)
    if isinstance(basis, EdgeBasis):
        return basis.values(points), basis.derivatives(points), None
    raise TypeError(f"unsupported basis type: {type(basis).__name__}")


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray       # (n, 2) on the reference triangle, or (n,) on [-1, 1]
    weights: np.ndarray
    exact_degree: int


@lru_cache(maxsize=None)
def triangle_rule(exact_degree: int) -> QuadRule:
    """Conical-product Gauss rule on the triangle (0,0), (1,0), (0,1).

    Positive weights summing to the reference area 1/2; exact for all
    polynomials of total degree <= exact_degree.
    """
    n = exact_degree // 2 + 1
    xg, wg = leggauss(n)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (xj + 1.0)
    wv = 0.25 * wj
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack(((uu * (1.0 - vv)).ravel(), vv.ravel()))
    wts = np.outer(wu, wv).ravel()
    return QuadRule(points=pts, weights=wts, exact_degree=exact_degree)


@lru_cache(maxsize=None)
def edge_rule(exact_degree: int) -> QuadRule:
    """Gauss-Legendre rule on [-1, 1], exact through exact_degree."""
    n = exact_degree // 2 + 1
    x, w = leggauss(n)
    return QuadRule(points=x, weights=w, exact_degree=exact_degree)


def map_to_element(rule: QuadRule, geom: ElementGeometry):
    """Map a reference-triangle rule to physical points and weights."""
    v0, v1, v2 = geom.vertices
    pts = v0 + np.outer(rule.points[:, 0], v1 - v0) + np.outer(rule.points[:, 1], v2 - v0)
    return pts, rule.weights * (2.0 * geom.area)


@dataclass(frozen=True)
class DofMap:
    """Global unknown layout: interior, edge-value, edge-normal, multiplier.

    Edge-normal unknowns are omitted on homogeneous-Neumann edges, which
    imposes the constrained space directly.  ``vn_offset[e]`` is -1 there.
    """

    k: int
    r: int
    num_triangles: int
    num_edges: int
    vn_offset: np.ndarray       # (E,) start of each edge's v_n block, -1 if absent
    tri_edges: np.ndarray       # (T, 3)
    tri_edge_signs: np.ndarray  # (T, 3)
    n_interior: int
    n_vb: int
    n_vn: int
    n_lambda: int

    @property
    def dim_k(self) -> int:
        return poly_dim(self.k)

    @property
    def dim_r(self) -> int:
        return poly_dim(self.r)

    @property
    def vb_base(self) -> int:
        return self.n_interior

    @property
    def vn_base(self) -> int:
        return self.n_interior + self.n_vb

    @property
    def n_u(self) -> int:
        """Number of state unknowns (interior + edge-value + edge-normal)."""
        return self.n_interior + self.n_vb + self.n_vn

    @property
    def lambda_base(self) -> int:
        return self.n_u

    @property
    def n_total(self) -> int:
        return self.n_u + self.n_lambda

    def interior_dofs(self, t: int) -> np.ndarray:
        return np.arange(t * self.dim_k, (t + 1) * self.dim_k)

    def vb_dofs(self, e: int) -> np.ndarray:
        base = self.vb_base + e * (self.k + 1)
        return np.arange(base, base + self.k + 1)

    def vn_dofs(self, e: int):
        """Edge-normal unknowns of edge e, or None if eliminated."""
        off = int(self.vn_offset[e])
        if off < 0:
            return None
        return np.arange(off, off + self.k)

    def lambda_dofs(self, t: int) -> np.ndarray:
        base = self.lambda_base + t * self.dim_r
        return np.arange(base, base + self.dim_r)

    def element_dofs(self, t: int):
        """Global state indices and signs for one element's local layout.

        Returns ``(idx, sign)`` of length dim_k + 3(k+1) + 3k, following the
        local ordering interior / edge-value / edge-normal.  Eliminated
        edge-normal slots carry index -1.
        """
        k = self.k
        idx = np.empty(self.dim_k + 3 * (k + 1) + 3 * k, dtype=np.int64)
        sign = np.ones_like(idx)
        idx[: self.dim_k] = self.interior_dofs(t)
        pos = self.dim_k
        for le in range(3):
            idx[pos : pos + k + 1] = self.vb_dofs(int(self.tri_edges[t, le]))
            pos += k + 1
        for le in range(3):
            vn = self.vn_dofs(int(self.tri_edges[t, le]))
            if vn is None:
                idx[pos : pos + k] = -1
            else:
                idx[pos : pos + k] = vn
                sign[pos : pos + k] = self.tri_edge_signs[t, le]
            pos += k
        return idx, sign


def build_dofmap(mesh: Mesh, config: SpaceConfig) -> DofMap:
    T, E = mesh.num_triangles, mesh.num_edges
    k = config.k
    n_interior = T * poly_dim(k)
    n_vb = E * (k + 1)
    vn_offset = np.full(E, -1, dtype=np.int64)
    pos = n_interior + n_vb
    for e, edge in enumerate(mesh.edges):
        if edge.on_N:
            continue
        vn_offset[e] = pos
        pos += k
    n_vn = pos - n_interior - n_vb
    return DofMap(
        k=k,
        r=config.r,
        num_triangles=T,
        num_edges=E,
        vn_offset=vn_offset,
        tri_edges=mesh.tri_edges,
        tri_edge_signs=mesh.tri_edge_signs,
        n_interior=n_interior,
        n_vb=n_vb,
        n_vn=n_vn,
        n_lambda=T * poly_dim(config.r),
    )


@dataclass(frozen=True)
class Space:
    """All per-mesh discretization state: bases, quadrature tiers, DOF map."""

    mesh: Mesh
    config: SpaceConfig
    elem_basis: tuple[ElementBasis, ...]    # degree k, one per triangle
    mult_basis: tuple[ElementBasis, ...]    # degree r, one per triangle
    edge_value_basis: tuple[EdgeBasis, ...]  # degree k, one per edge
    edge_flux_basis: tuple[EdgeBasis, ...]   # degree k-1, one per edge
    quad_cell: QuadRule
    quad_cell_data: QuadRule
    quad_edge: QuadRule
    quad_edge_data: QuadRule
    dofmap: DofMap


def make_space(mesh: Mesh, config: SpaceConfig) -> Space:
    """Build bases, quadrature rules and the DOF map for a mesh."""
    k = config.k
    elem_basis = tuple(
        ElementBasis(degree=k, centroid=g.centroid, h=g.h) for g in mesh.geometry
    )
    mult_basis = tuple(
        ElementBasis(degree=config.r, centroid=g.centroid, h=g.h) for g in mesh.geometry
    )
    edge_value_basis = []
    edge_flux_basis = []
    for edge in mesh.edges:
        p, q = edge.endpoints
        p0, p1 = mesh.vertices[p], mesh.vertices[q]
        edge_value_basis.append(EdgeBasis(degree=k, p0=p0, p1=p1))
        edge_flux_basis.append(EdgeBasis(degree=k - 1, p0=p0, p1=p1))
    return Space(
        mesh=mesh,
        config=config,
        elem_basis=elem_basis,
        mult_basis=mult_basis,
        edge_value_basis=tuple(edge_value_basis),
        edge_flux_basis=tuple(edge_flux_basis),
        quad_cell=triangle_rule(2 * k + 2),
        quad_cell_data=triangle_rule(2 * k + 8),
        quad_edge=edge_rule(2 * k + 2),
        quad_edge_data=edge_rule(2 * k + 8),
        dofmap=build_dofmap(mesh, config),
    )
