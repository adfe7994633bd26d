"""Stokes, Navier-Stokes and nudged (CDA) Navier-Stokes solvers.

The discrete problem is the mixed Taylor-Hood system

    [ nu A + C(w_k) + N   -B^T   0 ] [u]   [L + nudging load]
    [ -B                   0     m ] [p] = [0]
    [ 0                    m^T   0 ] [l]   [0]

where ``m`` enforces a zero-mean pressure. Dirichlet velocity values are
eliminated by row/column elimination with lifting. Picard iteration lags the
convecting velocity ``w_k``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    assemble_convection,
    assemble_divergence,
    assemble_rhs,
    assemble_stiffness,
    pressure_mean_vector,
    scalar_mass,
    scalar_stiffness,
)
from .errors import LinearSolveError
from .observation import CoarseObservation, assemble_nudging, coarse_coefficients
from .spaces import TaylorHoodSpace, VelocityPressureField, interpolate_function

logger = logging.getLogger(__name__)

LINEAR_RTOL = 1e-10


@dataclass(frozen=True)
class SolveConfig:
    nu: float
    mu: float = 0.0
    tol_rel: float = 1e-9
    tol_abs: float = 1e-12
    max_iter: int = 200
    initial_guess: Any = "zero"
    convection: str = "skew"
    nudging_variant: str = "IH_IH"
    pressure_constraint: str = "mean_zero_lagrange"
    damping: float = 1.0
    quad_degree: int = 4
    blowup: float = 1e8

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if self.mu < 0:
            raise ValueError(f"nudging parameter must be nonnegative, got {self.mu}")
        if not (self.tol_rel > 0 and self.tol_abs > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.convection not in ("skew", "plain"):
            raise ValueError(f"convection must be 'skew' or 'plain', got {self.convection!r}")
        if self.nudging_variant not in ("IH_IH", "IH_v"):
            raise ValueError(f"unknown nudging variant {self.nudging_variant!r}")
        if self.pressure_constraint not in ("mean_zero_lagrange", "pin_dof"):
            raise ValueError(f"unknown pressure constraint {self.pressure_constraint!r}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if isinstance(self.initial_guess, str) and self.initial_guess not in ("zero", "stokes"):
            raise ValueError(f"unknown initial guess {self.initial_guess!r}")
        if self.quad_degree not in (4, 6):
            raise ValueError(f"quad_degree must be 4 or 6, got {self.quad_degree}")

    @property
    def Re(self) -> float:
        return 1.0 / self.nu


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    increment_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    nonlinear_residual: float = float("nan")
    divergence_l2: float = float("nan")
    pressure_mean: float = float("nan")
    wall_time: float = 0.0
    message: str = ""
    condition_report: Any = None

    def as_dict(self) -> dict:
        out = {
            "converged": self.converged,
            "iterations": self.iterations,
            "increment_history": list(self.increment_history),
            "residual_history": list(self.residual_history),
            "nonlinear_residual": self.nonlinear_residual,
            "divergence_l2": self.divergence_l2,
            "pressure_mean": self.pressure_mean,
            "wall_time": self.wall_time,
            "message": self.message,
        }
        if self.condition_report is not None:
            out["condition_report"] = self.condition_report.as_dict()
        return out


def nested_dissection_order(coords: np.ndarray, kind: np.ndarray, leaf: int = 64) -> np.ndarray:
    """Fill-reducing ordering for unknowns attached to a structured lattice.

    ``coords`` are integer lattice coordinates ``(n, 2)`` with cell lines at
    even values; ``kind`` ranks unknowns inside each block (velocity before
    pressure, so pressure pivots see a nonzero Schur diagonal). Boxes are
    split recursively along a cell line; unknowns on the line form the
    separator and are ordered after both halves.
    """
    coords = np.asarray(coords)
    kind = np.asarray(kind)

    def block(idx):
        c = coords[idx]
        return idx[np.lexsort((c[:, 1], c[:, 0], kind[idx]))]

    out = []
    # depth-first: left subtree, right subtree, then the separator
    stack = [(np.arange(len(coords)), False)]
    while stack:
        idx, is_separator = stack.pop()
        if is_separator or len(idx) <= leaf:
            out.append(block(idx))
            continue
        c = coords[idx]
        lo, hi = c.min(axis=0), c.max(axis=0)
        ax = 0 if hi[0] - lo[0] >= hi[1] - lo[1] else 1
        ext = hi[ax] - lo[ax]
        if ext < 4:
            out.append(block(idx))
            continue
        mid = lo[ax] + ext // 2
        mid -= mid % 2
        if mid <= lo[ax]:
            mid += 2
        a = c[:, ax]
        stack.append((idx[a == mid], True))
        stack.append((idx[a > mid], False))
        stack.append((idx[a < mid], False))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _factor(A, perm):
    if perm is None:
        return spla.splu(A).solve
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    lu = spla.splu(
        A[perm][:, perm].tocsc(),
        permc_spec="NATURAL",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )

    def solve(rhs):
        return lu.solve(rhs[perm])[inv]

    return solve


def solve_linear(A, b, perm=None) -> np.ndarray:
    """Sparse direct solve with a relative residual check.

    ``perm`` is an optional symmetric fill-reducing permutation used with
    diagonal pivoting; if that factorization misses the residual bound the
    solve is repeated with SuperLU's default column ordering and partial
    pivoting.

    Raises
    ------
    LinearSolveError
        If the matrix is singular or the relative residual exceeds 1e-10
        after one step of iterative refinement.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"system matrix must be square, got {A.shape}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(A.shape[1])
    res = np.inf
    error = None
    for ordering in ([np.asarray(perm)] if perm is not None else []) + [None]:
        try:
            solve = _factor(A, ordering)
        except RuntimeError as exc:
            error = exc
            continue
        x = solve(b)
        r = b - A @ x
        res = np.linalg.norm(r) / bnorm
        if not res <= LINEAR_RTOL:
            x = x + solve(r)
            res = np.linalg.norm(b - A @ x) / bnorm
        if res <= LINEAR_RTOL:
            return x
        logger.debug("linear solve residual %.3e with ordering %s", res, "nd" if ordering is not None else "colamd")
    if error is not None and not np.isfinite(res):
        raise LinearSolveError(f"sparse factorization failed: {error}") from error
    raise LinearSolveError(f"relative residual {res:.3e} exceeds {LINEAR_RTOL:g}", residual=res)


class DiscreteProblem:
    """Static blocks of a (nudged) Taylor-Hood problem with fixed data.

    Parameters
    ----------
    space : TaylorHoodSpace
    config : SolveConfig
    f : callable or ndarray
        Forcing ``f(x, y) -> (f1, f2)`` or an assembled load vector.
    boundary : callable, optional
        Dirichlet velocity ``g(x, y) -> (g1, g2)``; zero when omitted.
    u_obs : field, array or CoarseObservation, optional
        Observed state; required when ``config.mu > 0``.
    op : ObservationOperator, optional
    """

    def __init__(self, space: TaylorHoodSpace, config: SolveConfig, f=None, boundary=None, u_obs=None, op=None):
        self.space = space
        self.config = config
        deg = config.quad_degree
        nv = space.velocity_dof_count
        self.np_ = space.pressure_dof_count

        if f is None:
            self.load = np.zeros(nv)
        elif callable(f):
            self.load = assemble_rhs(space, f, deg)
        else:
            self.load = np.asarray(f, dtype=float).copy()

        self.g = np.zeros(nv)
        if boundary is not None:
            if isinstance(boundary, VelocityPressureField):
                self.g[:] = boundary.velocity
            else:
                self.g[:] = interpolate_function(space, boundary).velocity
        bnd = space.boundary_velocity_dofs
        mask = np.zeros(nv, dtype=bool)
        mask[bnd] = True
        self.bnd = np.flatnonzero(mask)
        self.free = np.flatnonzero(~mask)
        self.gd = self.g[self.bnd]

        A = assemble_stiffness(space, config.nu, deg)
        self.K1 = scalar_stiffness(space, deg)  # unit-viscosity scalar stiffness, for H1 norms
        self.M1 = scalar_mass(space, deg)
        B = assemble_divergence(space, deg).tocsc()
        self.B = B
        self.m = pressure_mean_vector(space)

        op_needed = config.mu > 0
        self.op = op
        self.augmented = False
        self.nudge_load = np.zeros(nv)
        N = sp.csr_matrix((nv, nv))
        if op_needed:
            if op is None or u_obs is None:
                raise ValueError("nudging with mu > 0 needs an observation operator and observations")
            if op.fine_space is not space:
                raise ValueError("observation operator was built for a different space")
            y = coarse_coefficients(op, u_obs)
            if op.mode == "l2_projection":
                # mu X^T M_H^{-1} X kept implicit through an auxiliary coarse unknown
                self.augmented = True
                X = op.cross_mass.tocsr()
                self.X_f = X[:, self.free]
                self.X_d = X[:, self.bnd]
                self.Mc = op.coarse_mass
                self.nudge_load = config.mu * (X.T @ y)
            else:
                N, rhs_map = assemble_nudging(op, config.mu, config.nudging_variant)
                self.nudge_load = rhs_map(CoarseObservation(y))
        self.N = N

        F0 = (A + N).tocsr()
        self.F0_ff = F0[self.free][:, self.free]
        self.F0_fd = F0[self.free][:, self.bnd]
        self.F0 = F0
        self.B_f = B[:, self.free]
        self.B_d = B[:, self.bnd]
        self.perm = self._ordering()

    def _ordering(self):
        mesh = self.space.mesh
        x0, y0 = mesh.domain[:2]
        half = np.array([mesh.dx / 2, mesh.dy / 2])

        def lattice(xy):
            return np.rint((xy - [x0, y0]) / half).astype(np.int64)

        node = lattice(self.space.node_coords)
        vel = np.vstack([node, node])[self.free]
        pres = lattice(mesh.vertices)
        if self.config.pressure_constraint == "pin_dof":
            pres = pres[1:]
        coords = np.vstack([vel, pres])
        kind = np.concatenate([np.zeros(len(vel), np.int64), np.ones(len(pres), np.int64)])
        order = nested_dissection_order(coords, kind)
        # multiplier and auxiliary coarse unknowns couple globally: keep them last
        n_extra = 1 if self.config.pressure_constraint == "mean_zero_lagrange" else 0
        if self.augmented:
            n_extra += self.Mc.shape[0]
        return np.concatenate([order, len(coords) + np.arange(n_extra)])

    # -- linear systems ----------------------------------------------------
    def convection(self, w_velocity):
        if not np.any(w_velocity):
            return None
        return assemble_convection(
            self.space, w_velocity, skew=self.config.convection == "skew", degree=self.config.quad_degree
        ).tocsr()

    def solve(self, C=None, iteration=None) -> VelocityPressureField:
        """Solve the linear system with convection matrix ``C`` (None for Stokes)."""
        cfg = self.config
        F_ff, F_fd = self.F0_ff, self.F0_fd
        if C is not None:
            C_f = C[self.free]
            F_ff = F_ff + C_f[:, self.free]
            F_fd = F_fd + C_f[:, self.bnd]
        rhs_u = (self.load + self.nudge_load)[self.free] - F_fd @ self.gd
        rhs_p = self.B_d @ self.gd
        npres = self.np_
        if cfg.pressure_constraint == "mean_zero_lagrange":
            mcol = sp.csr_matrix(self.m.reshape(-1, 1))
            blocks = [
                [F_ff, -self.B_f.T, None],
                [-self.B_f, None, mcol],
                [None, mcol.T, None],
            ]
            rhs = [rhs_u, rhs_p, np.zeros(1)]
        else:
            keep = np.arange(1, npres)
            blocks = [[F_ff, -self.B_f[keep].T], [-self.B_f[keep], None]]
            rhs = [rhs_u, rhs_p[keep]]
        if self.augmented:
            nc = self.Mc.shape[0]
            for row in blocks:
                row.append(None)
            blocks[0][-1] = cfg.mu * self.X_f.T
            blocks.append([-self.X_f] + [None] * (len(blocks[0]) - 2) + [self.Mc])
            rhs.append(self.X_d @ self.gd)
            assert rhs[-1].shape == (nc,)
        K = sp.bmat(blocks, format="csc")
        try:
            x = solve_linear(K, np.concatenate(rhs), self.perm)
        except LinearSolveError as exc:
            exc.iteration = iteration
            raise
        nfree = len(self.free)
        u = self.g.copy()
        u[self.free] = x[:nfree]
        if cfg.pressure_constraint == "mean_zero_lagrange":
            p = x[nfree : nfree + npres]
        else:
            p = np.concatenate([[0.0], x[nfree : nfree + npres - 1]])
            p = p - (self.m @ p) / self.m.sum()
        return VelocityPressureField(self.space, u, p)

    # -- diagnostics -------------------------------------------------------
    def h1_seminorm(self, v: np.ndarray) -> float:
        n = self.space.n_scalar
        val = v[:n] @ (self.K1 @ v[:n]) + v[n:] @ (self.K1 @ v[n:])
        return float(np.sqrt(max(val, 0.0)))

    def residual(self, w: VelocityPressureField, C=None) -> float:
        """Euclidean norm of the discrete momentum and continuity residuals (free rows)."""
        u = w.velocity
        Fu = self.F0 @ u
        if self.augmented:
            z = self.op._mass_lu.solve(self.op.cross_mass @ u)
            Fu = Fu + self.config.mu * (self.op.cross_mass.T @ z)
        if C is not None:
            Fu = Fu + C @ u
        r_u = (Fu - self.B.T @ w.pressure - self.load - self.nudge_load)[self.free]
        r_p = self.B @ u
        # mean-zero multiplier absorbs the constant-pressure compatibility defect
        r_p = r_p - self.m * (self.m @ r_p) / (self.m @ self.m)
        return float(np.sqrt(r_u @ r_u + r_p @ r_p))

    def initial_field(self, guess) -> VelocityPressureField:
        if isinstance(guess, VelocityPressureField):
            w = guess.copy()
            w.velocity[self.bnd] = self.gd
            return w
        if isinstance(guess, np.ndarray):
            w = VelocityPressureField(self.space, guess.copy(), np.zeros(self.np_))
            w.velocity[self.bnd] = self.gd
            return w
        if guess == "stokes":
            return self.solve(None, iteration=0)
        return VelocityPressureField(self.space, self.g.copy(), np.zeros(self.np_))


def divergence_l2(space: TaylorHoodSpace, velocity: np.ndarray, degree: int = 4) -> float:
    from .assembly import velocity_at_quadrature

    ed = space.element_data(degree)
    _, grads = velocity_at_quadrature(space, velocity, degree)
    div = grads[..., 0, 0] + grads[..., 1, 1]
    return float(np.sqrt(np.sum(ed.wdet * div**2)))


def _finish(problem: DiscreteProblem, w, report: SolveReport, t0: float):
    C = problem.convection(w.velocity)
    report.nonlinear_residual = problem.residual(w, C)
    report.divergence_l2 = divergence_l2(problem.space, w.velocity, problem.config.quad_degree)
    report.pressure_mean = float(problem.m @ w.pressure / problem.m.sum())
    report.wall_time = time.perf_counter() - t0
    return w, report


def solve_stokes(space, config: SolveConfig, f=None, boundary=None, u_obs=None, op=None):
    """Linear (optionally nudged) Stokes solve."""
    t0 = time.perf_counter()
    problem = DiscreteProblem(space, config, f, boundary, u_obs, op)
    w = problem.solve(None, iteration=0)
    report = SolveReport(converged=True, iterations=1, increment_history=[0.0])
    report.nonlinear_residual = problem.residual(w)
    report.divergence_l2 = divergence_l2(space, w.velocity, config.quad_degree)
    report.pressure_mean = float(problem.m @ w.pressure / problem.m.sum())
    report.wall_time = time.perf_counter() - t0
    return w, report


def picard_step(space, config: SolveConfig, w_k, f=None, u_obs=None, op=None, boundary=None):
    """One Picard update ``w_k -> w_{k+1}`` of the nudged Navier-Stokes system."""
    problem = DiscreteProblem(space, config, f, boundary, u_obs, op)
    wk = w_k.velocity if isinstance(w_k, VelocityPressureField) else np.asarray(w_k, dtype=float)
    if isinstance(w_k, VelocityPressureField) and w_k.space is not space:
        raise ValueError("iterate lives on a different space")
    return problem.solve(problem.convection(wk), iteration=1)


def solve_cda_nse(space, config: SolveConfig, f=None, u_obs=None, op=None, boundary=None, problem=None):
    """Picard iteration for the nudged steady Navier-Stokes equations.

    ``mu = 0`` gives the plain Navier-Stokes solve. Non-convergence is
    reported through ``SolveReport.converged``; linear-solve failures raise
    :class:`LinearSolveError` carrying the iteration index.
    """
    t0 = time.perf_counter()
    if problem is None:
        problem = DiscreteProblem(space, config, f, boundary, u_obs, op)
    cfg = config
    w = problem.initial_field(cfg.initial_guess)
    report = SolveReport(converged=False, iterations=0)
    for k in range(1, cfg.max_iter + 1):
        C = problem.convection(w.velocity)
        report.residual_history.append(problem.residual(w, C))
        w_new = problem.solve(C, iteration=k)
        if cfg.damping < 1.0:
            w_new = VelocityPressureField(
                space,
                cfg.damping * w_new.velocity + (1 - cfg.damping) * w.velocity,
                w_new.pressure,
            )
        inc = problem.h1_seminorm(w_new.velocity - w.velocity)
        size = problem.h1_seminorm(w_new.velocity)
        rel = inc / size if size > 0 else inc
        report.increment_history.append(rel)
        report.iterations = k
        w = w_new
        if not np.isfinite(rel) or inc > cfg.blowup * max(size, 1.0) or size > cfg.blowup:
            report.message = f"iterates diverged at iteration {k}"
            break
        if rel <= cfg.tol_rel or inc <= cfg.tol_abs:
            report.converged = True
            break
    else:
        report.message = f"no convergence within {cfg.max_iter} iterations"
    logger.debug("picard: converged=%s iterations=%d", report.converged, report.iterations)
    return _finish(problem, w, report, t0)


def solve_nse(space, config: SolveConfig, f=None, boundary=None):
    """Plain Navier-Stokes Picard solve (``mu`` is ignored)."""
    return solve_cda_nse(space, replace(config, mu=0.0), f, boundary=boundary)


def solve_with_continuation(space, config: SolveConfig, f_of_nu, boundary=None, Re_steps=()):
    """Plain NSE solve reached through a ramp of Reynolds numbers.

    ``f_of_nu(nu)`` returns the forcing for viscosity ``nu``; each solve
    starts from the previous converged field.
    """
    guess = config.initial_guess
    w = report = None
    for Re in list(Re_steps) + [config.Re]:
        cfg = replace(config, nu=1.0 / Re, mu=0.0, initial_guess=guess)
        w, report = solve_cda_nse(space, cfg, f_of_nu(1.0 / Re), boundary=boundary)
        guess = w
    return w, report
