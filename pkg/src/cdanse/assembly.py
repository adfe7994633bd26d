"""Sparse assembly of the Taylor-Hood forms.

All element loops are vectorized over triangles; global matrices are built
from COO triplets in fixed element order, so results are reproducible.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import StructuredTriMesh
from .spaces import TaylorHoodSpace, VelocityPressureField

DEFAULT_DEGREE = 4


def _scatter(local, rows, cols, shape):
    ne, a, b = local.shape
    r = np.broadcast_to(rows[:, :, None], (ne, a, b)).ravel()
    c = np.broadcast_to(cols[:, None, :], (ne, a, b)).ravel()
    mat = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    mat.sum_duplicates()
    return mat


def _vector_block(scalar):
    return sp.block_diag((scalar, scalar), format="csr")


def scalar_stiffness(space: TaylorHoodSpace, degree: int = DEFAULT_DEGREE):
    ed = space.element_data(degree)
    local = np.einsum("eq,eqid,eqjd->eij", ed.wdet, ed.dphi, ed.dphi)
    cells = space.scalar_cells
    return _scatter(local, cells, cells, (space.n_scalar, space.n_scalar))


def scalar_mass(space: TaylorHoodSpace, degree: int = DEFAULT_DEGREE):
    ed = space.element_data(degree)
    local = np.einsum("eq,qi,qj->eij", ed.wdet, ed.phi, ed.phi)
    cells = space.scalar_cells
    return _scatter(local, cells, cells, (space.n_scalar, space.n_scalar))


def assemble_stiffness(space: TaylorHoodSpace, nu: float = 1.0, degree: int = DEFAULT_DEGREE):
    """Vector Laplacian ``A[i, j] = (nu grad phi_j, grad phi_i)``."""
    return _vector_block(nu * scalar_stiffness(space, degree))


def assemble_mass(space: TaylorHoodSpace, degree: int = DEFAULT_DEGREE):
    """Velocity mass matrix (both components)."""
    return _vector_block(scalar_mass(space, degree))


def p1_mass(mesh: StructuredTriMesh):
    """Exact scalar P1 mass matrix of ``mesh``."""
    area = np.abs(mesh.triangle_areas())
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = area[:, None, None] * ref[None]
    tris = mesh.triangles
    return _scatter(local, tris, tris, (mesh.n_vertices, mesh.n_vertices))


def p1_vector_mass(mesh: StructuredTriMesh):
    return _vector_block(p1_mass(mesh))


def assemble_divergence(space: TaylorHoodSpace, degree: int = DEFAULT_DEGREE):
    """``B[q, v] = (psi_q, div phi_v)`` with one row per pressure DOF."""
    ed = space.element_data(degree)
    local = np.einsum("eq,qi,eqjc->eicj", ed.wdet, ed.psi, ed.dphi)  # (ne, 3, 2, 6)
    ne = local.shape[0]
    local = local.reshape(ne, 3, 12)
    return _scatter(
        local,
        space.pressure_cells,
        space.velocity_cells,
        (space.pressure_dof_count, space.velocity_dof_count),
    )


def pressure_mean_vector(space: TaylorHoodSpace) -> np.ndarray:
    """Integrals of the P1 pressure basis, so ``m @ p = integral of p``."""
    area = np.abs(space.mesh.triangle_areas())
    return np.bincount(
        space.pressure_cells.ravel(),
        weights=np.repeat(area / 3.0, 3),
        minlength=space.pressure_dof_count,
    )


def velocity_at_quadrature(space: TaylorHoodSpace, velocity: np.ndarray, degree: int = DEFAULT_DEGREE):
    """Velocity values ``(ne, nq, 2)`` and gradients ``(ne, nq, 2, 2)``.

    ``grad[..., c, d]`` is the derivative of component ``c`` along ``d``.
    """
    ed = space.element_data(degree)
    cells = space.scalar_cells
    n = space.n_scalar
    coef = np.stack([velocity[:n][cells], velocity[n:][cells]], axis=1)  # (ne, 2, 6)
    vals = np.einsum("qi,eci->eqc", ed.phi, coef)
    grads = np.einsum("eqid,eci->eqcd", ed.dphi, coef)
    return vals, grads


def assemble_convection(space: TaylorHoodSpace, w, skew: bool = True, degree: int = DEFAULT_DEGREE):
    """Matrix ``C`` of ``b(w, u, v) = ((w . grad) u, v)``: ``v . (C u)``.

    With ``skew`` the form ``(b(w, u, v) - b(w, v, u)) / 2`` is assembled,
    which is antisymmetric.
    """
    if isinstance(w, VelocityPressureField):
        if w.space is not space:
            raise ValueError("convecting field lives on a different space")
        w = w.velocity
    w = np.asarray(w, dtype=float)
    if w.shape != (space.velocity_dof_count,):
        raise ValueError(f"convecting velocity has shape {w.shape}")
    ed = space.element_data(degree)
    wq, _ = velocity_at_quadrature(space, w, degree)
    # (w . grad phi_j) phi_i
    adv = np.einsum("eqd,eqjd->eqj", wq, ed.dphi)
    local = np.einsum("eq,qi,eqj->eij", ed.wdet, ed.phi, adv)
    if skew:
        local = 0.5 * (local - local.transpose(0, 2, 1))
    cells = space.scalar_cells
    return _vector_block(_scatter(local, cells, cells, (space.n_scalar, space.n_scalar)))


def assemble_rhs(space: TaylorHoodSpace, f, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Load vector ``L[i] = (f, phi_i)`` for ``f(x, y) -> (f1, f2)``."""
    ed = space.element_data(degree)
    x, y = ed.xq[..., 0], ed.xq[..., 1]
    f1, f2 = f(x, y)
    out = np.empty(space.velocity_dof_count)
    cells = space.scalar_cells.ravel()
    for comp, fc in enumerate((f1, f2)):
        fc = np.broadcast_to(fc, x.shape)
        local = np.einsum("eq,eq,qi->ei", ed.wdet, fc, ed.phi)
        out[comp * space.n_scalar : (comp + 1) * space.n_scalar] = np.bincount(
            cells, weights=local.ravel(), minlength=space.n_scalar
        )
    return out
