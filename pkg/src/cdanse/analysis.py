"""Norms, errors against exact solutions and discrete dual norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_rhs, pressure_mean_vector, scalar_stiffness, velocity_at_quadrature
from .spaces import TaylorHoodSpace, VelocityPressureField

ERROR_DEGREE = 6


@dataclass(frozen=True)
class Norms:
    l2: float
    h1_seminorm: float
    divergence_l2: float


def norms(field: VelocityPressureField, degree: int = 4) -> Norms:
    """L2 norm, H1 seminorm and divergence L2 norm of the velocity."""
    space = field.space
    ed = space.element_data(degree)
    vals, grads = velocity_at_quadrature(space, field.velocity, degree)
    w = ed.wdet
    l2 = np.sum(w[..., None] * vals**2)
    h1 = np.sum(w[..., None, None] * grads**2)
    div = np.sum(w * (grads[..., 0, 0] + grads[..., 1, 1]) ** 2)
    return Norms(float(np.sqrt(l2)), float(np.sqrt(h1)), float(np.sqrt(div)))


def h1_seminorm(space: TaylorHoodSpace, velocity) -> float:
    """``||grad v||`` from the unit stiffness matrix."""
    v = velocity.velocity if isinstance(velocity, VelocityPressureField) else np.asarray(velocity)
    K = scalar_stiffness(space)
    n = space.n_scalar
    val = v[:n] @ (K @ v[:n]) + v[n:] @ (K @ v[n:])
    return float(math.sqrt(max(val, 0.0)))


def h1_distance(a: VelocityPressureField, b: VelocityPressureField) -> float:
    if a.space is not b.space:
        raise ValueError("fields live on different spaces")
    return h1_seminorm(a.space, a.velocity - b.velocity)


def convergence_rates(h, errors) -> list:
    """``log(e_prev / e_next) / log(h_prev / h_next)`` for consecutive meshes."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    rates = []
    for k in range(1, len(e)):
        if e[k] > 0 and e[k - 1] > 0:
            rates.append(float(np.log(e[k - 1] / e[k]) / np.log(h[k - 1] / h[k])))
        else:
            rates.append(float("nan"))
    return rates


@dataclass
class ErrorReport:
    """Errors on a sequence of meshes with observed convergence rates."""

    h: list = field(default_factory=list)
    e_L2_u: list = field(default_factory=list)
    e_H1_u: list = field(default_factory=list)
    e_L2_p: list = field(default_factory=list)
    div_L2: list = field(default_factory=list)

    def extend(self, other: "ErrorReport") -> "ErrorReport":
        for name in ("h", "e_L2_u", "e_H1_u", "e_L2_p", "div_L2"):
            getattr(self, name).extend(getattr(other, name))
        return self

    @property
    def rate_L2_u(self) -> list:
        return convergence_rates(self.h, self.e_L2_u)

    @property
    def rate_H1_u(self) -> list:
        return convergence_rates(self.h, self.e_H1_u)

    @property
    def rate_L2_p(self) -> list:
        return convergence_rates(self.h, self.e_L2_p)

    def rows(self) -> list:
        """One dict per mesh; rates are blank on the first row."""
        out = []
        rl2, rh1, rp = self.rate_L2_u, self.rate_H1_u, self.rate_L2_p
        for k, h in enumerate(self.h):
            out.append(
                {
                    "h": h,
                    "e_L2_u": self.e_L2_u[k],
                    "e_H1_u": self.e_H1_u[k],
                    "e_L2_p": self.e_L2_p[k],
                    "div_L2": self.div_L2[k],
                    "rate_L2_u": rl2[k - 1] if k else None,
                    "rate_H1_u": rh1[k - 1] if k else None,
                    "rate_L2_p": rp[k - 1] if k else None,
                }
            )
        return out


def error_vs_exact(field: VelocityPressureField, sol, degree: int = ERROR_DEGREE) -> ErrorReport:
    """Velocity L2/H1 and mean-free pressure L2 errors against ``sol``.

    The exact solution is evaluated at the quadrature points. Pressures are
    compared after removing each one's mean.
    """
    space = field.space
    ed = space.element_data(degree)
    x, y = ed.xq[..., 0], ed.xq[..., 1]
    w = ed.wdet
    vals, grads = velocity_at_quadrature(space, field.velocity, degree)

    u1, u2 = sol.velocity(x, y)
    (u1x, u1y), (u2x, u2y) = sol.velocity_grad(x, y)
    eu = (vals[..., 0] - u1) ** 2 + (vals[..., 1] - u2) ** 2
    eg = (
        (grads[..., 0, 0] - u1x) ** 2
        + (grads[..., 0, 1] - u1y) ** 2
        + (grads[..., 1, 0] - u2x) ** 2
        + (grads[..., 1, 1] - u2y) ** 2
    )
    div = grads[..., 0, 0] + grads[..., 1, 1]

    area = float(np.sum(w))
    ph = np.einsum("qk,ek->eq", ed.psi, field.pressure[space.pressure_cells])
    p = np.broadcast_to(sol.pressure(x, y), x.shape)
    ph = ph - np.sum(w * ph) / area
    p = p - np.sum(w * p) / area
    h = space.mesh.H
    return ErrorReport(
        h=[h],
        e_L2_u=[float(np.sqrt(np.sum(w * eu)))],
        e_H1_u=[float(np.sqrt(np.sum(w * eg)))],
        e_L2_p=[float(np.sqrt(np.sum(w * (ph - p) ** 2)))],
        div_L2=[float(np.sqrt(np.sum(w * div**2)))],
    )


@dataclass(frozen=True)
class DualNorms:
    """Discrete ``||f||_{-1,h}`` (over all velocities) and ``||f||_{*,h}`` (discretely divergence-free)."""

    minus_one: float
    star: float
    h: float


def dual_norm_estimate(f, space: TaylorHoodSpace, degree: int = 4) -> DualNorms:
    """Discrete dual norms of ``f`` through Riesz representatives.

    ``||f||_{-1,h}``: ``(grad r, grad v) = <f, v>`` over the zero-trace velocity
    space. ``||f||_{*,h}``: the velocity part of the unit-viscosity Stokes
    solve, whose H1 seminorm is the supremum over discretely divergence-free
    fields.
    """
    from .solver import SolveConfig, solve_linear, solve_stokes

    load = assemble_rhs(space, f, degree) if callable(f) else np.asarray(f, dtype=float)
    if not np.any(load):
        return DualNorms(0.0, 0.0, space.mesh.H)

    n = space.n_scalar
    K = scalar_stiffness(space, degree)
    interior = np.setdiff1d(np.arange(n), space.boundary_scalar_nodes)
    Kff = K[interior][:, interior].tocsc()
    sq = 0.0
    for comp in range(2):
        b = load[comp * n : (comp + 1) * n][interior]
        if np.any(b):
            r = solve_linear(Kff, b)
            sq += b @ r
    minus_one = math.sqrt(max(sq, 0.0))

    w, _ = solve_stokes(space, SolveConfig(nu=1.0, quad_degree=degree), load)
    star = h1_seminorm(space, w.velocity)
    return DualNorms(minus_one, star, space.mesh.H)


def pressure_mean(field: VelocityPressureField) -> float:
    m = pressure_mean_vector(field.space)
    return float(m @ field.pressure / m.sum())
