"""Coarse-mesh observation operators and the nudging term.

The observation operator maps fine Taylor-Hood velocities to a coarse
continuous P1 vector field (blocked by component, like the fine space).
Two realizations are available:

``nodal_interp``
    Values of the fine field at the coarse vertices.
``l2_projection``
    L2 projection onto the coarse P1 space, ``M_H^{-1} X v`` where ``X`` is
    the coarse/fine cross mass matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_stiffness, p1_vector_mass
from .mesh import StructuredTriMesh
from .spaces import TaylorHoodSpace, VelocityPressureField, interpolate_function, p2_evaluation_matrix

MODES = ("nodal_interp", "l2_projection")
VARIANTS = ("IH_IH", "IH_v")


@dataclass(frozen=True)
class CoarseObservation:
    """Observed velocity as coarse P1 coefficients ``(2 * V_H,)``."""

    values: np.ndarray


class ObservationOperator:
    def __init__(self, coarse_mesh: StructuredTriMesh, fine_space: TaylorHoodSpace, mode: str = "nodal_interp"):
        if mode not in MODES:
            raise ValueError(f"unknown observation mode {mode!r}; expected one of {MODES}")
        if not coarse_mesh.same_domain(fine_space.mesh):
            raise ValueError(
                f"coarse domain {coarse_mesh.domain} differs from fine domain {fine_space.mesh.domain}"
            )
        self.mode = mode
        self.coarse_mesh = coarse_mesh
        self.fine_space = fine_space
        self.H = coarse_mesh.H
        self.n_coarse = 2 * coarse_mesh.n_vertices
        self.coarse_mass = p1_vector_mass(coarse_mesh).tocsc()
        self._mass_lu = spla.splu(self.coarse_mass)

        # coarse P1 basis and fine P2 basis at fine quadrature points
        ed = fine_space.element_data(4)
        ne, nq = ed.wdet.shape
        pts = ed.xq.reshape(-1, 2)
        tri, bary = coarse_mesh.locate_points(pts)
        rows = np.repeat(np.arange(len(pts)), 3)
        self._coarse_at_q = sp.csr_matrix(
            (bary.ravel(), (rows, coarse_mesh.triangles[tri].ravel())),
            shape=(len(pts), coarse_mesh.n_vertices),
        )
        rows = np.repeat(np.arange(ne * nq), 6)
        cols = np.repeat(fine_space.scalar_cells, nq, axis=0).ravel()
        vals = np.tile(ed.phi, (ne, 1)).ravel()
        self._fine_at_q = sp.csr_matrix((vals, (rows, cols)), shape=(ne * nq, fine_space.n_scalar))
        self._qweights = ed.wdet.ravel()
        cross = (self._coarse_at_q.T @ sp.diags(self._qweights) @ self._fine_at_q).tocsr()
        self.cross_mass = sp.block_diag((cross, cross), format="csr")

        if mode == "nodal_interp":
            ev = p2_evaluation_matrix(fine_space, coarse_mesh.vertices)
            ev.data[np.abs(ev.data) < 1e-14] = 0.0
            ev.eliminate_zeros()
            self.R = sp.block_diag((ev, ev), format="csr")
        else:
            self.R = None

    def apply(self, v) -> np.ndarray:
        """Coarse coefficients of ``I_H v`` for a fine velocity (field or array)."""
        v = _velocity_array(v, self.fine_space)
        if self.R is not None:
            return self.R @ v
        return self._mass_lu.solve(self.cross_mass @ v)

    def observe(self, v) -> CoarseObservation:
        return CoarseObservation(self.apply(v))

    def matrix(self):
        """Explicit ``R``; dense-backed for the projection mode (small meshes only)."""
        if self.R is not None:
            return self.R
        return sp.csr_matrix(self._mass_lu.solve(self.cross_mass.toarray()))

    def coarse_values_at_fine_quadrature(self, coarse: np.ndarray) -> np.ndarray:
        """Coarse vector field at the fine quadrature points, ``(nq_total, 2)``."""
        n = self.coarse_mesh.n_vertices
        return np.column_stack([self._coarse_at_q @ coarse[:n], self._coarse_at_q @ coarse[n:]])

    def fine_values_at_quadrature(self, v: np.ndarray) -> np.ndarray:
        n = self.fine_space.n_scalar
        return np.column_stack([self._fine_at_q @ v[:n], self._fine_at_q @ v[n:]])

    def interpolation_error(self, v) -> float:
        """``||I_H v - v||`` by quadrature on the fine mesh."""
        v = _velocity_array(v, self.fine_space)
        diff = self.coarse_values_at_fine_quadrature(self.apply(v)) - self.fine_values_at_quadrature(v)
        return float(np.sqrt(np.sum(self._qweights[:, None] * diff**2)))

    def coarse_l2_norm(self, coarse: np.ndarray) -> float:
        return float(np.sqrt(max(coarse @ (self.coarse_mass @ coarse), 0.0)))


def _velocity_array(v, space):
    if isinstance(v, VelocityPressureField):
        if v.space is not space:
            raise ValueError("field lives on a different space than the observation operator")
        return v.velocity
    v = np.asarray(v, dtype=float)
    if v.shape != (space.velocity_dof_count,):
        raise ValueError(f"velocity vector has shape {v.shape}")
    return v


def build_observation(coarse_mesh, fine_space, mode: str = "nodal_interp") -> ObservationOperator:
    return ObservationOperator(coarse_mesh, fine_space, mode)


def coarse_coefficients(op: ObservationOperator, observed) -> np.ndarray:
    """Coarse observation vector from a fine field/array or a :class:`CoarseObservation`."""
    if isinstance(observed, CoarseObservation):
        y = np.asarray(observed.values, dtype=float)
        if y.shape != (op.n_coarse,):
            raise ValueError(f"coarse observation has shape {y.shape}, expected ({op.n_coarse},)")
        return y
    return op.apply(observed)


def assemble_nudging(op: ObservationOperator, mu: float, variant: str = "IH_IH"):
    """Nudging matrix ``N`` and a map from observations to the nudging load.

    ``IH_IH``: ``N = mu R^T M_H R`` and load ``mu R^T M_H y``.
    ``IH_v``: ``N = mu X^T R`` and load ``mu X^T y``, i.e. the mismatch is
    tested against the fine test function itself.
    ``y`` is the coarse observation; the returned callable accepts a fine
    field/array or a :class:`CoarseObservation`.
    """
    if mu < 0:
        raise ValueError(f"nudging parameter must be nonnegative, got {mu}")
    if variant not in VARIANTS:
        raise ValueError(f"unknown nudging variant {variant!r}")
    n = op.fine_space.velocity_dof_count
    R = op.matrix()
    if variant == "IH_IH":
        left = (R.T @ op.coarse_mass).tocsr()
    else:
        left = op.cross_mass.T.tocsr()
    if mu == 0:
        N = sp.csr_matrix((n, n))
    else:
        N = (mu * (left @ R)).tocsr()

    def rhs_map(observed):
        return mu * (left @ coarse_coefficients(op, observed))

    return N, rhs_map


def default_probes(coarse_mesh: StructuredTriMesh):
    """Documented probe set for estimating the interpolation constant.

    Smooth fields vanishing on the boundary (a polynomial bubble and two
    low sine modes) plus two modes tied to the coarse grid: the highest mode
    the coarse grid can alias to zero (one half-wave per coarse cell) and
    the mode with two coarse cells per half-wave.
    """
    x0, y0, x1, y1 = coarse_mesh.domain
    lx, ly = x1 - x0, y1 - y0
    nx, ny = coarse_mesh.nx, coarse_mesh.ny
    pi = np.pi

    def sx(x):
        return (x - x0) / lx

    def sy(y):
        return (y - y0) / ly

    def bubble(x, y):
        b = 16 * sx(x) * (1 - sx(x)) * sy(y) * (1 - sy(y))
        return b, b

    def sine11(x, y):
        return np.sin(pi * sx(x)) * np.sin(pi * sy(y)), 0.0 * x

    def sine23(x, y):
        return 0.0 * x, np.sin(2 * pi * sx(x)) * np.sin(3 * pi * sy(y))

    def mode(kx, ky):
        def v(x, y):
            s = np.sin(kx * pi * sx(x)) * np.sin(ky * pi * sy(y))
            return s, s

        return v

    return [
        ("bubble", bubble),
        ("sin(pi x) sin(pi y)", sine11),
        ("sin(2 pi x) sin(3 pi y)", sine23),
        (f"grid mode {nx}x{ny}", mode(nx, ny)),
        (f"grid mode {max(nx // 2, 1)}x{max(ny // 2, 1)}", mode(max(nx // 2, 1), max(ny // 2, 1))),
    ]


def estimate_CI(op: ObservationOperator, probes=None) -> float:
    """Largest ``||I_H v - v|| / (H ||grad v||)`` over ``probes``.

    ``probes`` is a list of velocity callables or ``(name, callable)`` pairs;
    each is interpolated into the fine space. Defaults to
    :func:`default_probes`.
    """
    if probes is None:
        probes = default_probes(op.coarse_mesh)
    A = assemble_stiffness(op.fine_space, 1.0)
    absA = abs(A)
    best = None
    for probe in probes:
        fn = probe[1] if isinstance(probe, tuple) else probe
        v = interpolate_function(op.fine_space, fn).velocity
        energy = v @ (A @ v)
        # a constant probe leaves only round-off in v^T A v
        if energy <= 1e-13 * (np.abs(v) @ (absA @ np.abs(v))):
            continue
        grad = np.sqrt(energy)
        ratio = op.interpolation_error(v) / (op.H * grad)
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise ValueError("every probe has a vanishing gradient")
    return float(best)


def estimate_boundedness(op: ObservationOperator, probes=None) -> float:
    """Largest ``||I_H v|| / ||v||`` over ``probes``."""
    from .assembly import assemble_mass

    if probes is None:
        probes = default_probes(op.coarse_mesh)
    M = assemble_mass(op.fine_space)
    best = 0.0
    for probe in probes:
        fn = probe[1] if isinstance(probe, tuple) else probe
        v = interpolate_function(op.fine_space, fn).velocity
        norm = np.sqrt(max(v @ (M @ v), 0.0))
        if norm > 0:
            best = max(best, op.coarse_l2_norm(op.apply(v)) / norm)
    return float(best)


def load_observations(path, coarse_mesh: StructuredTriMesh, tol: float = 1e-10) -> CoarseObservation:
    """Read a CSV with columns ``x, y, u1, u2`` holding one row per coarse vertex."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"x", "y", "u1", "u2"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = [(float(r["x"]), float(r["y"]), float(r["u1"]), float(r["u2"])) for r in reader]
    data = np.array(rows, dtype=float).reshape(-1, 4)
    nv = coarse_mesh.n_vertices
    if len(data) != nv:
        raise ValueError(f"{path}: {len(data)} rows, coarse mesh has {nv} vertices")
    x0, y0 = coarse_mesh.domain[:2]
    i = np.rint((data[:, 0] - x0) / coarse_mesh.dx).astype(np.int64)
    j = np.rint((data[:, 1] - y0) / coarse_mesh.dy).astype(np.int64)
    idx = j * (coarse_mesh.nx + 1) + i
    ok = (i >= 0) & (i <= coarse_mesh.nx) & (j >= 0) & (j <= coarse_mesh.ny)
    if not np.all(ok):
        raise ValueError(f"{path}: node {tuple(data[np.argmin(ok), :2])} is not a coarse vertex")
    dist = np.abs(coarse_mesh.vertices[idx] - data[:, :2]).max(axis=1)
    if np.any(dist > tol):
        k = int(np.argmax(dist))
        raise ValueError(f"{path}: node {tuple(data[k, :2])} is not a coarse vertex (off by {dist[k]:.3g})")
    if len(np.unique(idx)) != nv:
        raise ValueError(f"{path}: duplicate coarse nodes")
    values = np.empty(2 * nv)
    values[idx] = data[:, 2]
    values[nv + idx] = data[:, 3]
    return CoarseObservation(values)


def write_observations(path, coarse_mesh: StructuredTriMesh, observation: CoarseObservation) -> None:
    nv = coarse_mesh.n_vertices
    y = observation.values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u1", "u2"])
        for k, (x, yy) in enumerate(coarse_mesh.vertices.tolist()):
            w.writerow([repr(x), repr(yy), repr(float(y[k])), repr(float(y[nv + k]))])
