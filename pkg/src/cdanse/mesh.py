"""Structured triangulations of axis-aligned rectangles.

Every cell ``(i, j)`` is split along its lower-left to upper-right diagonal
into the counterclockwise triangles ``(v00, v10, v11)`` and
``(v00, v11, v01)``. Vertices are numbered row-major, ``k = j * (nx + 1) + i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomainError

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StructuredTriMesh:
    nx: int
    ny: int
    domain: tuple[float, float, float, float]
    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)
    triangle_edges: np.ndarray = field(repr=False)
    boundary_vertex_flags: np.ndarray = field(repr=False)
    boundary_edge_flags: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def dx(self) -> float:
        return (self.domain[2] - self.domain[0]) / self.nx

    @property
    def dy(self) -> float:
        return (self.domain[3] - self.domain[1]) / self.ny

    @property
    def H(self) -> float:
        """Characteristic mesh size: largest cell side length."""
        return max(self.dx, self.dy)

    @property
    def diameter(self) -> float:
        """Largest cell diameter (length of the cell diagonal)."""
        return float(np.hypot(self.dx, self.dy))

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def same_domain(self, other: "StructuredTriMesh", tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.domain, other.domain, rtol=0.0, atol=tol))

    def locate_point(self, p) -> tuple[int, np.ndarray]:
        """Return the containing triangle and barycentric coordinates of ``p``.

        Raises
        ------
        OutOfDomainError
            If ``p`` is farther than 1e-12 from the closed rectangle.
        """
        tri, bary = self.locate_points(np.asarray(p, dtype=float).reshape(1, 2))
        return int(tri[0]), bary[0]

    def locate_points(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`locate_point` for an ``(n, 2)`` array."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        x0, y0, x1, y1 = self.domain
        outside = (
            (pts[:, 0] < x0 - BOUNDARY_TOL)
            | (pts[:, 0] > x1 + BOUNDARY_TOL)
            | (pts[:, 1] < y0 - BOUNDARY_TOL)
            | (pts[:, 1] > y1 + BOUNDARY_TOL)
        )
        if np.any(outside):
            bad = pts[np.argmax(outside)]
            raise OutOfDomainError(f"point {tuple(bad)} is outside {self.domain}")

        sx = (pts[:, 0] - x0) / self.dx
        sy = (pts[:, 1] - y0) / self.dy
        i = np.clip(np.floor(sx).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor(sy).astype(np.int64), 0, self.ny - 1)
        s = np.clip(sx - i, 0.0, 1.0)
        t = np.clip(sy - j, 0.0, 1.0)

        lower = s >= t
        tri = 2 * (j * self.nx + i) + np.where(lower, 0, 1)
        bary = np.empty((len(pts), 3))
        # lower triangle (v00, v10, v11); upper triangle (v00, v11, v01)
        bary[:, 0] = np.where(lower, 1.0 - s, 1.0 - t)
        bary[:, 1] = np.where(lower, s - t, s)
        bary[:, 2] = np.where(lower, t, t - s)
        return tri, bary

    def to_vtk(self, path, point_data=None) -> None:
        """Write the mesh as legacy ASCII VTK, optionally with vertex data.

        ``point_data`` maps names to arrays of shape ``(V,)`` (scalars) or
        ``(V, 2)`` (vectors).
        """
        from .vtk import write_vtk

        write_vtk(path, self.vertices, self.triangles, point_data or {})


def build_rect_mesh(nx: int, ny: int, domain=(0.0, 0.0, 1.0, 1.0)) -> StructuredTriMesh:
    """Build an ``nx`` by ``ny`` structured triangulation of ``domain``.

    ``domain`` is ``(x0, y0, x1, y1)``.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    x0, y0, x1, y1 = (float(c) for c in domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {domain}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row-major: y outer, x inner
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    v00 = jj * (nx + 1) + ii
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])

    # local edge k joins local vertices (k, k+1 mod 3)
    local = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    triangle_edges = inverse.reshape(-1, 3)
    boundary_edge_flags = counts == 1

    on_boundary = (
        (np.abs(vertices[:, 0] - x0) <= BOUNDARY_TOL)
        | (np.abs(vertices[:, 0] - x1) <= BOUNDARY_TOL)
        | (np.abs(vertices[:, 1] - y0) <= BOUNDARY_TOL)
        | (np.abs(vertices[:, 1] - y1) <= BOUNDARY_TOL)
    )

    for arr in (vertices, triangles, edges, triangle_edges, boundary_edge_flags, on_boundary):
        arr.setflags(write=False)
    return StructuredTriMesh(
        nx=nx,
        ny=ny,
        domain=(x0, y0, x1, y1),
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        boundary_vertex_flags=on_boundary,
        boundary_edge_flags=boundary_edge_flags,
    )


def locate_point(mesh: StructuredTriMesh, p) -> tuple[int, np.ndarray]:
    """Function form of :meth:`StructuredTriMesh.locate_point`."""
    return mesh.locate_point(p)
