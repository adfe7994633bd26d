"""Taylor-Hood P2/P1 spaces on a structured triangle mesh.

Scalar P2 nodes are the mesh vertices (indices ``0..V-1``) followed by the
edge midpoints (``V + e`` for edge ``e``). Velocity coefficients are blocked
by component: all x-values, then all y-values. Pressure lives on vertices.
"""

from __future__ import annotations

import numpy as np

from .mesh import StructuredTriMesh
from .quadrature import triangle_rule


def p1_basis(bary):
    """P1 basis values ``(n, 3)`` at barycentric points ``(n, 3)``."""
    return np.asarray(bary, dtype=float).copy()


def p1_basis_grad():
    """Reference gradients ``(3, 2)`` of the P1 basis."""
    return np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def p2_basis(bary):
    """P2 basis values ``(n, 6)``: vertices, then midpoints of edges 01, 12, 20."""
    l0, l1, l2 = np.asarray(bary, dtype=float).T
    return np.column_stack(
        [
            l0 * (2 * l0 - 1),
            l1 * (2 * l1 - 1),
            l2 * (2 * l2 - 1),
            4 * l0 * l1,
            4 * l1 * l2,
            4 * l2 * l0,
        ]
    )


def p2_basis_grad(bary):
    """Reference gradients ``(n, 6, 2)`` of the P2 basis w.r.t. ``(xi, eta)``."""
    l0, l1, l2 = np.asarray(bary, dtype=float).T
    # d(lambda_k)/d(xi, eta): l0 -> (-1, -1), l1 -> (1, 0), l2 -> (0, 1)
    g = np.empty((len(l0), 6, 2))
    g[:, 0, 0] = g[:, 0, 1] = -(4 * l0 - 1)
    g[:, 1, 0], g[:, 1, 1] = 4 * l1 - 1, 0.0
    g[:, 2, 0], g[:, 2, 1] = 0.0, 4 * l2 - 1
    g[:, 3, 0], g[:, 3, 1] = 4 * (l0 - l1), -4 * l1
    g[:, 4, 0], g[:, 4, 1] = 4 * l2, 4 * l1
    g[:, 5, 0], g[:, 5, 1] = -4 * l2, 4 * (l0 - l2)
    return g


class ElementData:
    """Basis values, physical gradients and weights at quadrature points."""

    def __init__(self, mesh: StructuredTriMesh, degree: int):
        rule = triangle_rule(degree)
        self.rule = rule
        p = mesh.vertices[mesh.triangles]  # (ne, 3, 2)
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        invJ = np.empty_like(J)
        invJ[:, 0, 0] = J[:, 1, 1] / det
        invJ[:, 0, 1] = -J[:, 0, 1] / det
        invJ[:, 1, 0] = -J[:, 1, 0] / det
        invJ[:, 1, 1] = J[:, 0, 0] / det

        self.det = det
        self.invJ = invJ
        self.phi = p2_basis(rule.barycentric)  # (nq, 6)
        self.psi = p1_basis(rule.barycentric)  # (nq, 3)
        ref = p2_basis_grad(rule.barycentric)  # (nq, 6, 2)
        self.dphi = np.einsum("qia,eab->eqib", ref, invJ)  # (ne, nq, 6, 2)
        self.dpsi = np.einsum("ia,eab->eib", p1_basis_grad(), invJ)  # (ne, 3, 2)
        self.wdet = np.abs(det)[:, None] * rule.weights[None, :]  # (ne, nq)
        self.xq = np.einsum("qk,ekd->eqd", rule.barycentric, p)  # (ne, nq, 2)


class TaylorHoodSpace:
    """P2 vector velocity / P1 scalar pressure degrees of freedom."""

    def __init__(self, mesh: StructuredTriMesh):
        self.mesh = mesh
        V, E = mesh.n_vertices, mesh.n_edges
        self.n_scalar = V + E
        self.velocity_dof_count = 2 * (V + E)
        self.pressure_dof_count = V

        cells = np.empty((mesh.n_triangles, 6), dtype=np.int64)
        cells[:, :3] = mesh.triangles
        cells[:, 3:] = V + mesh.triangle_edges
        cells.setflags(write=False)
        self.scalar_cells = cells
        self.pressure_cells = mesh.triangles

        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        self.node_coords = np.vstack([mesh.vertices, mids])
        self.node_coords.setflags(write=False)

        on_bnd = np.concatenate([mesh.boundary_vertex_flags, mesh.boundary_edge_flags])
        scalar_bnd = np.flatnonzero(on_bnd)
        self.boundary_scalar_nodes = scalar_bnd
        self.boundary_velocity_dofs = np.concatenate([scalar_bnd, scalar_bnd + self.n_scalar])
        self._element_data = {}

    @property
    def velocity_cells(self) -> np.ndarray:
        """Global velocity DOFs per element, ``(ne, 12)``: x-block then y-block."""
        return np.hstack([self.scalar_cells, self.scalar_cells + self.n_scalar])

    def element_data(self, degree: int = 4) -> ElementData:
        if degree not in self._element_data:
            self._element_data[degree] = ElementData(self.mesh, degree)
        return self._element_data[degree]

    def zero_field(self) -> "VelocityPressureField":
        return VelocityPressureField(
            self, np.zeros(self.velocity_dof_count), np.zeros(self.pressure_dof_count)
        )

    def field(self, velocity=None, pressure=None) -> "VelocityPressureField":
        u = np.zeros(self.velocity_dof_count) if velocity is None else velocity
        p = np.zeros(self.pressure_dof_count) if pressure is None else pressure
        return VelocityPressureField(self, u, p)


class VelocityPressureField:
    """Coefficient vectors of a Taylor-Hood velocity/pressure pair."""

    def __init__(self, space: TaylorHoodSpace, velocity, pressure):
        velocity = np.asarray(velocity, dtype=float)
        pressure = np.asarray(pressure, dtype=float)
        if velocity.shape != (space.velocity_dof_count,):
            raise ValueError(
                f"velocity has shape {velocity.shape}, expected ({space.velocity_dof_count},)"
            )
        if pressure.shape != (space.pressure_dof_count,):
            raise ValueError(
                f"pressure has shape {pressure.shape}, expected ({space.pressure_dof_count},)"
            )
        self.space = space
        self.velocity = velocity
        self.pressure = pressure

    @property
    def ux(self) -> np.ndarray:
        return self.velocity[: self.space.n_scalar]

    @property
    def uy(self) -> np.ndarray:
        return self.velocity[self.space.n_scalar :]

    def copy(self) -> "VelocityPressureField":
        return VelocityPressureField(self.space, self.velocity.copy(), self.pressure.copy())

    def __add__(self, other):
        _check_same_space(self, other)
        return VelocityPressureField(
            self.space, self.velocity + other.velocity, self.pressure + other.pressure
        )

    def __sub__(self, other):
        _check_same_space(self, other)
        return VelocityPressureField(
            self.space, self.velocity - other.velocity, self.pressure - other.pressure
        )

    def __mul__(self, c):
        return VelocityPressureField(self.space, c * self.velocity, c * self.pressure)

    __rmul__ = __mul__

    def evaluate(self, p):
        return evaluate_field(self, p)

    def to_vtk(self, path) -> None:
        """Write vertex velocities and pressures as legacy ASCII VTK."""
        V = self.space.mesh.n_vertices
        vel = np.column_stack([self.ux[:V], self.uy[:V]])
        self.space.mesh.to_vtk(path, {"velocity": vel, "pressure": self.pressure})


def _check_same_space(a, b):
    if a.space is not b.space:
        raise ValueError("fields live on different spaces")


def build_taylor_hood(mesh: StructuredTriMesh) -> TaylorHoodSpace:
    return TaylorHoodSpace(mesh)


def interpolate_function(space: TaylorHoodSpace, velocity=None, pressure=None) -> VelocityPressureField:
    """Nodal interpolant of analytic functions.

    ``velocity(x, y)`` returns the pair ``(u1, u2)`` of arrays and
    ``pressure(x, y)`` an array; either may be omitted (zero).
    """
    u = np.zeros(space.velocity_dof_count)
    p = np.zeros(space.pressure_dof_count)
    if velocity is not None:
        x, y = space.node_coords.T
        u1, u2 = velocity(x, y)
        u[: space.n_scalar] = np.broadcast_to(u1, x.shape)
        u[space.n_scalar :] = np.broadcast_to(u2, x.shape)
    if pressure is not None:
        x, y = space.mesh.vertices.T
        p[:] = np.broadcast_to(pressure(x, y), x.shape)
    return VelocityPressureField(space, u, p)


def evaluate_field(field: VelocityPressureField, p):
    """Velocity 2-vector and pressure of ``field`` at the point ``p``."""
    vel, pres = evaluate_field_at(field, np.asarray(p, dtype=float).reshape(1, 2))
    return vel[0], float(pres[0])


def evaluate_field_at(field: VelocityPressureField, points):
    """Vectorized evaluation: returns velocities ``(n, 2)`` and pressures ``(n,)``."""
    space = field.space
    tri, bary = space.mesh.locate_points(points)
    dofs = space.scalar_cells[tri]
    phi = p2_basis(bary)
    vel = np.column_stack(
        [(phi * field.ux[dofs]).sum(axis=1), (phi * field.uy[dofs]).sum(axis=1)]
    )
    pres = (bary * field.pressure[space.pressure_cells[tri]]).sum(axis=1)
    return vel, pres


def p2_evaluation_matrix(space: TaylorHoodSpace, points):
    """Sparse ``(n, n_scalar)`` matrix evaluating a scalar P2 field at ``points``."""
    import scipy.sparse as sp

    tri, bary = space.mesh.locate_points(points)
    n = len(tri)
    rows = np.repeat(np.arange(n), 6)
    cols = space.scalar_cells[tri].ravel()
    vals = p2_basis(bary).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, space.n_scalar))
