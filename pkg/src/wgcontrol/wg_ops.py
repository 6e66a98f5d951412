"""Element-local weak Galerkin operators and L2 projections.

A weak function on a triangle is a coefficient triplet: an interior
polynomial of degree k, an edge-value polynomial of degree k per edge, and
an edge-normal polynomial of degree k-1 per edge.  The local coefficient
layout is interior first, then the three edge-value blocks, then the three
edge-normal blocks.  Edge-normal coefficients are handled here in the
element-local (outward) convention; the caller applies the per-edge sign
when gathering from or scattering to global unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .fe_space import (
    EdgeBasis,
    ElementBasis,
    QuadRule,
    Space,
    SpaceConfig,
    edge_rule,
    map_to_element,
    poly_dim,
    triangle_rule,
)
from .mesh import _element_geometry


def local_size(k: int) -> int:
    return poly_dim(k) + 3 * (k + 1) + 3 * k


def vb_slice(k: int, local_edge: int) -> slice:
    base = poly_dim(k) + local_edge * (k + 1)
    return slice(base, base + k + 1)


def vn_slice(k: int, local_edge: int) -> slice:
    base = poly_dim(k) + 3 * (k + 1) + local_edge * k
    return slice(base, base + k)


@dataclass(frozen=True)
class ElementContext:
    """Everything needed to build one element's local operators."""

    geom: "object"
    basis_k: ElementBasis
    basis_r: ElementBasis
    edge_value_basis: tuple[EdgeBasis, ...]
    edge_flux_basis: tuple[EdgeBasis, ...]
    quad_cell: QuadRule
    quad_cell_data: QuadRule
    quad_edge: QuadRule
    quad_edge_data: QuadRule

    @property
    def k(self) -> int:
        return self.basis_k.degree

    @property
    def r(self) -> int:
        return self.basis_r.degree


def element_context(space: Space, t: int) -> ElementContext:
    """Context for triangle t of a discretized mesh."""
    eids = space.mesh.tri_edges[t]
    return ElementContext(
        geom=space.mesh.geometry[t],
        basis_k=space.elem_basis[t],
        basis_r=space.mult_basis[t],
        edge_value_basis=tuple(space.edge_value_basis[e] for e in eids),
        edge_flux_basis=tuple(space.edge_flux_basis[e] for e in eids),
        quad_cell=space.quad_cell,
        quad_cell_data=space.quad_cell_data,
        quad_edge=space.quad_edge,
        quad_edge_data=space.quad_edge_data,
    )


def standalone_context(coords, config: SpaceConfig) -> ElementContext:
    """Context for a free-standing triangle (tests, single-element studies).

    Edge parametrizations follow the counterclockwise traversal order.
    """
    coords = np.asarray(coords, dtype=float)
    geom = _element_geometry(coords)
    k = config.k
    evb, efb = [], []
    for le in range(3):
        p0, p1 = coords[le], coords[(le + 1) % 3]
        evb.append(EdgeBasis(degree=k, p0=p0, p1=p1))
        efb.append(EdgeBasis(degree=k - 1, p0=p0, p1=p1))
    return ElementContext(
        geom=geom,
        basis_k=ElementBasis(degree=k, centroid=geom.centroid, h=geom.h),
        basis_r=ElementBasis(degree=config.r, centroid=geom.centroid, h=geom.h),
        edge_value_basis=tuple(evb),
        edge_flux_basis=tuple(efb),
        quad_cell=triangle_rule(2 * k + 2),
        quad_cell_data=triangle_rule(2 * k + 8),
        quad_edge=edge_rule(2 * k + 2),
        quad_edge_data=edge_rule(2 * k + 8),
    )


@dataclass(frozen=True)
class LocalOps:
    """Per-element matrices entering assembly and error evaluation."""

    DW: np.ndarray    # (dim_r, N): weak-Laplacian coefficients of each local slot
    S: np.ndarray     # (N, N): stabilizer, symmetric PSD
    Bmat: np.ndarray  # (dim_r, N): coupling pairings b_T
    M_k: np.ndarray   # interior mass
    M_r: np.ndarray   # multiplier mass
    M_kr: np.ndarray  # interior x multiplier mass


def mass_matrix(basis: ElementBasis, geom, rule: QuadRule) -> np.ndarray:
    pts, w = map_to_element(rule, geom)
    V = basis.values(pts)
    return V.T @ (w[:, None] * V)


def mixed_mass_matrix(basis_a: ElementBasis, basis_b: ElementBasis, geom, rule: QuadRule) -> np.ndarray:
    pts, w = map_to_element(rule, geom)
    return basis_a.values(pts).T @ (w[:, None] * basis_b.values(pts))


def _edge_quad(ctx: ElementContext, le: int, data: bool = False):
    """Edge quadrature in the edge's own parametrization: (t, w_ds, x)."""
    rule = ctx.quad_edge_data if data else ctx.quad_edge
    eb = ctx.edge_value_basis[le]
    t = rule.points
    w = rule.weights * (0.5 * eb.length)
    return t, w, eb.points(t)


def _pairing_matrix(ctx: ElementContext) -> np.ndarray:
    """Right-hand pairings defining the discrete weak Laplacian.

    Row i, column j holds the action of local weak basis slot j tested
    against multiplier basis term i: the interior block pairs with the
    multiplier Laplacian, edge values with its normal derivative (negated),
    and edge normals with its trace.
    """
    k, N = ctx.k, local_size(ctx.k)
    G = np.zeros((ctx.basis_r.dim, N))
    pts, w = map_to_element(ctx.quad_cell, ctx.geom)
    lap_r = ctx.basis_r.laplacians(pts)
    G[:, : ctx.basis_k.dim] = lap_r.T @ (w[:, None] * ctx.basis_k.values(pts))
    for le in range(3):
        n = ctx.geom.outward_normals[le]
        t, w_e, x = _edge_quad(ctx, le)
        phi = ctx.basis_r.values(x)
        dphi_n = ctx.basis_r.gradients(x) @ n
        G[:, vb_slice(k, le)] -= dphi_n.T @ (w_e[:, None] * ctx.edge_value_basis[le].values(t))
        G[:, vn_slice(k, le)] += phi.T @ (w_e[:, None] * ctx.edge_flux_basis[le].values(t))
    return G


def discrete_weak_laplacian(ctx: ElementContext) -> np.ndarray:
    """Matrix mapping local weak coefficients to multiplier-space
    coefficients of the discrete weak Laplacian."""
    M_r = mass_matrix(ctx.basis_r, ctx.geom, ctx.quad_cell)
    return cho_solve(cho_factor(M_r), _pairing_matrix(ctx))


def stabilizer(ctx: ElementContext) -> np.ndarray:
    """Symmetric PSD stabilizer: h^-3-weighted trace mismatch, h^-1-weighted
    normal-flux mismatch, plus the interior projection-mismatch term."""
    k, N = ctx.k, local_size(ctx.k)
    S = np.zeros((N, N))
    h = ctx.geom.h
    nq = ctx.quad_edge.points.size
    for le in range(3):
        n = ctx.geom.outward_normals[le]
        t, w_e, x = _edge_quad(ctx, le)
        D1 = np.zeros((nq, N))
        D1[:, : ctx.basis_k.dim] = ctx.basis_k.values(x)
        D1[:, vb_slice(k, le)] = -ctx.edge_value_basis[le].values(t)
        S += (h**-3) * (D1.T @ (w_e[:, None] * D1))
        D2 = np.zeros((nq, N))
        D2[:, : ctx.basis_k.dim] = ctx.basis_k.gradients(x) @ n
        D2[:, vn_slice(k, le)] = -ctx.edge_flux_basis[le].values(t)
        S += (h**-1) * (D2.T @ (w_e[:, None] * D2))
    M_k = mass_matrix(ctx.basis_k, ctx.geom, ctx.quad_cell)
    M_r = mass_matrix(ctx.basis_r, ctx.geom, ctx.quad_cell)
    M_kr = mixed_mass_matrix(ctx.basis_k, ctx.basis_r, ctx.geom, ctx.quad_cell)
    # (u0 - Qh u0, v0 - Qh v0): Schur complement of the multiplier mass
    S[: ctx.basis_k.dim, : ctx.basis_k.dim] += M_k - M_kr @ cho_solve(cho_factor(M_r), M_kr.T)
    return 0.5 * (S + S.T)


def coupling(ctx: ElementContext, DW: np.ndarray | None = None) -> np.ndarray:
    """Pairings of (-weak Laplacian + interior value) against the multiplier
    basis; rows are multiplier terms, columns local weak slots."""
    if DW is None:
        DW = discrete_weak_laplacian(ctx)
    M_r = mass_matrix(ctx.basis_r, ctx.geom, ctx.quad_cell)
    M_kr = mixed_mass_matrix(ctx.basis_k, ctx.basis_r, ctx.geom, ctx.quad_cell)
    B = -(M_r @ DW)
    B[:, : ctx.basis_k.dim] += M_kr.T
    return B


def element_ops(ctx: ElementContext) -> LocalOps:
    """All local operators with shared intermediates computed once."""
    k, N = ctx.k, local_size(ctx.k)
    M_k = mass_matrix(ctx.basis_k, ctx.geom, ctx.quad_cell)
    M_r = mass_matrix(ctx.basis_r, ctx.geom, ctx.quad_cell)
    M_kr = mixed_mass_matrix(ctx.basis_k, ctx.basis_r, ctx.geom, ctx.quad_cell)
    cf = cho_factor(M_r)
    G = _pairing_matrix(ctx)
    DW = cho_solve(cf, G)
    B = -G.copy()
    B[:, : ctx.basis_k.dim] += M_kr.T

    S = np.zeros((N, N))
    h = ctx.geom.h
    nq = ctx.quad_edge.points.size
    for le in range(3):
        n = ctx.geom.outward_normals[le]
        t, w_e, x = _edge_quad(ctx, le)
        D1 = np.zeros((nq, N))
        D1[:, : ctx.basis_k.dim] = ctx.basis_k.values(x)
        D1[:, vb_slice(k, le)] = -ctx.edge_value_basis[le].values(t)
        S += (h**-3) * (D1.T @ (w_e[:, None] * D1))
        D2 = np.zeros((nq, N))
        D2[:, : ctx.basis_k.dim] = ctx.basis_k.gradients(x) @ n
        D2[:, vn_slice(k, le)] = -ctx.edge_flux_basis[le].values(t)
        S += (h**-1) * (D2.T @ (w_e[:, None] * D2))
    S[: ctx.basis_k.dim, : ctx.basis_k.dim] += M_k - M_kr @ cho_solve(cf, M_kr.T)
    S = 0.5 * (S + S.T)
    return LocalOps(DW=DW, S=S, Bmat=B, M_k=M_k, M_r=M_r, M_kr=M_kr)


def _shape_key(space: Space, t: int) -> bytes:
    geom = space.mesh.geometry[t]
    rel = np.round((geom.vertices - geom.centroid) / geom.h, 12)
    # edge parametrization orientation: does the lower-index endpoint lead
    # the counterclockwise traversal on each local edge?
    tri = space.mesh.triangles[t]
    orient = tuple(int(tri[le] < tri[(le + 1) % 3]) for le in range(3))
    return rel.tobytes() + bytes(orient) + bytes([space.config.k, space.config.r])


def compute_local_ops(space: Space) -> list[LocalOps]:
    """Local operators for every element.

    On uniform grids elements repeat up to translation, and all operator
    entries are translation invariant, so congruent elements share one
    computed set.
    """
    cache: dict[bytes, LocalOps] = {}
    ops = []
    for t in range(space.mesh.num_triangles):
        key = _shape_key(space, t)
        if key not in cache:
            cache[key] = element_ops(element_context(space, t))
        ops.append(cache[key])
    return ops


# ---------------------------------------------------------------------------
# L2 projections into the weak space and the multiplier space


def project_volume(basis: ElementBasis, geom, rule_exact: QuadRule, rule_data: QuadRule, func) -> np.ndarray:
    """Coefficients of the elementwise L2 projection of func onto basis."""
    M = mass_matrix(basis, geom, rule_exact)
    pts, w = map_to_element(rule_data, geom)
    rhs = basis.values(pts).T @ (w * func(pts[:, 0], pts[:, 1]))
    return cho_solve(cho_factor(M), rhs)


def project_edge_values(edge_basis: EdgeBasis, rule: QuadRule, func) -> np.ndarray:
    """Legendre coefficients of the edge L2 projection of func."""
    t = rule.points
    x = edge_basis.points(t)
    rhs = edge_basis.values(t).T @ (rule.weights * func(x[:, 0], x[:, 1]))
    q = np.arange(edge_basis.degree + 1)
    # edge mass is diagonal: |e|/(2q+1); the parameter-space rhs carries
    # a factor |e|/2 relative to arclength, leaving (2q+1)/2
    return 0.5 * (2.0 * q + 1.0) * rhs


def project_edge_flux(edge_basis: EdgeBasis, rule: QuadRule, grad_func, normal) -> np.ndarray:
    """Edge L2 projection of the normal derivative along a given normal."""

    def flux(x, y):
        gx, gy = grad_func(x, y)
        return gx * normal[0] + gy * normal[1]

    return project_edge_values(edge_basis, rule, flux)


def project_weak_local(ctx: ElementContext, u, grad_u) -> np.ndarray:
    """Local weak coefficients of the projection of a smooth function.

    Edge-normal components use the element's outward normals (local
    convention), matching what assembly gathers from the global vector.
    """
    k = ctx.k
    coeffs = np.zeros(local_size(k))
    coeffs[: ctx.basis_k.dim] = project_volume(
        ctx.basis_k, ctx.geom, ctx.quad_cell, ctx.quad_cell_data, u
    )
    for le in range(3):
        coeffs[vb_slice(k, le)] = project_edge_values(
            ctx.edge_value_basis[le], ctx.quad_edge_data, u
        )
        coeffs[vn_slice(k, le)] = project_edge_flux(
            ctx.edge_flux_basis[le],
            ctx.quad_edge_data,
            grad_u,
            ctx.geom.outward_normals[le],
        )
    return coeffs


def project_weak(space: Space, u, grad_u) -> np.ndarray:
    """Global state-unknown vector of the weak projection of u.

    Edge-normal coefficients follow each edge's global normal; entries on
    homogeneous-Neumann edges are eliminated with the space.
    """
    dm = space.dofmap
    out = np.zeros(dm.n_u)
    for t in range(space.mesh.num_triangles):
        geom = space.mesh.geometry[t]
        out[dm.interior_dofs(t)] = project_volume(
            space.elem_basis[t], geom, space.quad_cell, space.quad_cell_data, u
        )
    for e in range(space.mesh.num_edges):
        out[dm.vb_dofs(e)] = project_edge_values(
            space.edge_value_basis[e], space.quad_edge_data, u
        )
        vn = dm.vn_dofs(e)
        if vn is not None:
            out[vn] = project_edge_flux(
                space.edge_flux_basis[e],
                space.quad_edge_data,
                grad_u,
                space.mesh.edges[e].global_normal,
            )
    return out


def project_multiplier(space: Space, func) -> np.ndarray:
    """Elementwise L2 projection onto the multiplier space, stacked in the
    lambda-block layout (without the global offset)."""
    dm = space.dofmap
    out = np.zeros(dm.n_lambda)
    for t in range(space.mesh.num_triangles):
        out[t * dm.dim_r : (t + 1) * dm.dim_r] = project_volume(
            space.mult_basis[t],
            space.mesh.geometry[t],
            space.quad_cell,
            space.quad_cell_data,
            func,
        )
    return out


def gather_element(space: Space, t: int, u_vec: np.ndarray) -> np.ndarray:
    """Local weak coefficients of element t from a global state vector.

    Applies the per-edge signs and substitutes zero for eliminated
    edge-normal slots.
    """
    idx, sign = space.dofmap.element_dofs(t)
    out = np.where(idx >= 0, u_vec[np.where(idx >= 0, idx, 0)], 0.0)
    return out * sign
