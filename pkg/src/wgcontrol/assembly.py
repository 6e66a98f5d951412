"""Global saddle-point system for the boundary-control scheme.

The state block collects the stabilizer plus the observation and
alpha-weighted control boundary masses; the off-diagonal blocks carry the
constraint pairings; the multiplier-multiplier block is zero.  Entries are
emitted in symmetric pairs and accumulated in a fixed element order, so two
assemblies of the same problem agree bitwise and the stored matrix equals
its transpose exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fe_space import ConfigurationError, DofMap, Space, map_to_element
from .wg_ops import LocalOps, compute_local_ops


@dataclass(frozen=True)
class GlobalSystem:
    matrix: sp.csr_matrix   # order n_total, symmetric indefinite
    rhs: np.ndarray
    alpha: float
    dofmap: DofMap


def _edge_mass(space: Space, e: int, flux: bool) -> np.ndarray:
    """Mass matrix of an edge basis via the exact quadrature tier."""
    eb = (space.edge_flux_basis if flux else space.edge_value_basis)[e]
    t = space.quad_edge.points
    w = space.quad_edge.weights * (0.5 * eb.length)
    V = eb.values(t)
    M = V.T @ (w[:, None] * V)
    return 0.5 * (M + M.T)  # bitwise symmetric for exact global symmetry


def assemble(space: Space, problem, local_ops: list[LocalOps] | None = None) -> GlobalSystem:
    """Assemble the coupled system for a classified mesh and problem data.

    ``problem`` provides fields ``f``, ``c0`` and ``alpha``; the mesh inside
    ``space`` must already carry the boundary tags.
    """
    if problem.alpha <= 0:
        raise ConfigurationError(f"alpha must be positive, got {problem.alpha}")
    mesh = space.mesh
    observed = [e for e in range(mesh.num_edges) if mesh.edges[e].on_O]
    if not observed:
        raise ConfigurationError("no observation edges tagged; the problem is not solvable")

    if local_ops is None:
        local_ops = compute_local_ops(space)
    dm = space.dofmap
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    rhs = np.zeros(dm.n_total)

    def emit(r, c, v):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    for t in range(mesh.num_triangles):
        idx, sign = dm.element_dofs(t)
        keep = idx >= 0
        iu = idx[keep]
        su = sign[keep].astype(float)

        S = local_ops[t].S[np.ix_(keep, keep)] * np.outer(su, su)
        emit(*np.meshgrid(iu, iu, indexing="ij"), S)

        B = local_ops[t].Bmat[:, keep] * su[None, :]
        il = dm.lambda_dofs(t)
        rl, cl = np.meshgrid(il, iu, indexing="ij")
        emit(rl, cl, B)
        emit(cl.T, rl.T, B.T)

        pts, w = _data_points(space, t)
        rhs[il] = space.mult_basis[t].values(pts).T @ (w * problem.f(pts[:, 0], pts[:, 1]))

    for e in observed:
        ib = dm.vb_dofs(e)
        M = _edge_mass(space, e, flux=False)
        emit(*np.meshgrid(ib, ib, indexing="ij"), M)
        eb = space.edge_value_basis[e]
        tq = space.quad_edge_data.points
        wq = space.quad_edge_data.weights * (0.5 * eb.length)
        x = eb.points(tq)
        rhs[ib] += eb.values(tq).T @ (wq * problem.c0(x[:, 0], x[:, 1]))

    for e in range(mesh.num_edges):
        if not mesh.edges[e].on_C:
            continue
        iv = dm.vn_dofs(e)
        if iv is None:
            continue
        emit(*np.meshgrid(iv, iv, indexing="ij"), problem.alpha * _edge_mass(space, e, flux=True))

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dm.n_total, dm.n_total),
    ).tocsr()
    return GlobalSystem(matrix=matrix, rhs=rhs, alpha=problem.alpha, dofmap=dm)


def _data_points(space: Space, t: int):
    from .fe_space import map_to_element

    return map_to_element(space.quad_cell_data, space.mesh.geometry[t])


def symmetry_defect(system: GlobalSystem) -> float:
    """Largest absolute entry of M - M^T over stored entries."""
    d = system.matrix - system.matrix.T
    return 0.0 if d.nnz == 0 else float(np.abs(d.data).max())
