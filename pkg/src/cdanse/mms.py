"""Manufactured steady Navier-Stokes solutions with closed-form derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def _zero(x, y):
    return 0.0 * np.asarray(x, dtype=float) + 0.0 * np.asarray(y, dtype=float)


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact velocity/pressure pair on ``domain``.

    Every callable takes coordinate arrays ``(x, y)``. ``velocity`` returns
    ``(u1, u2)``; ``velocity_grad`` returns ``((du1/dx, du1/dy), (du2/dx,
    du2/dy))``; ``velocity_laplacian`` returns ``(lap u1, lap u2)``;
    ``pressure_grad`` returns ``(dp/dx, dp/dy)``.
    """

    name: str
    velocity: Callable
    velocity_grad: Callable
    velocity_laplacian: Callable
    pressure: Callable = _zero
    pressure_grad: Callable = lambda x, y: (_zero(x, y), _zero(x, y))
    divergence_free: bool = True
    domain: tuple = (0.0, 0.0, 1.0, 1.0)

    def divergence(self, x, y):
        (u1x, _), (_, u2y) = self.velocity_grad(x, y)
        return u1x + u2y

    def pressure_mean(self, degree: int = 6, n: int = 64) -> float:
        """Mean of the exact pressure over ``domain`` by composite quadrature."""
        from .quadrature import triangle_rule
        from .mesh import build_rect_mesh

        mesh = build_rect_mesh(n, n, self.domain)
        rule = triangle_rule(degree)
        p = mesh.vertices[mesh.triangles]
        xq = np.einsum("qk,ekd->eqd", rule.barycentric, p)
        area = np.abs(mesh.triangle_areas())
        vals = self.pressure(xq[..., 0], xq[..., 1])
        total = np.sum(2.0 * area[:, None] * rule.weights[None, :] * vals)
        return float(total / mesh.area)


def forcing_from_solution(sol: ManufacturedSolution, nu: float, convection: bool = True):
    """Return ``f(x, y) = -nu lap u + (u . grad) u + grad p``.

    With ``convection=False`` the Stokes forcing ``-nu lap u + grad p``.
    """
    if nu <= 0:
        raise ValueError(f"viscosity must be positive, got {nu}")

    def f(x, y):
        lap1, lap2 = sol.velocity_laplacian(x, y)
        px, py = sol.pressure_grad(x, y)
        f1 = -nu * lap1 + px
        f2 = -nu * lap2 + py
        if convection:
            u1, u2 = sol.velocity(x, y)
            (u1x, u1y), (u2x, u2y) = sol.velocity_grad(x, y)
            f1 = f1 + u1 * u1x + u2 * u1y
            f2 = f2 + u1 * u2x + u2 * u2y
        return f1, f2

    return f


def builtin_paper_solution() -> ManufacturedSolution:
    """``u = (x^2 y^2 + exp(-y), -2 x y^3 / 3 + 2 - pi sin(pi x))``, ``p = 0``."""
    pi = np.pi

    def velocity(x, y):
        return x**2 * y**2 + np.exp(-y), -2.0 * x * y**3 / 3.0 + 2.0 - pi * np.sin(pi * x)

    def grad(x, y):
        return (
            (2.0 * x * y**2, 2.0 * x**2 * y - np.exp(-y)),
            (-2.0 * y**3 / 3.0 - pi**2 * np.cos(pi * x), -2.0 * x * y**2),
        )

    def laplacian(x, y):
        return 2.0 * y**2 + 2.0 * x**2 + np.exp(-y), pi**3 * np.sin(pi * x) - 4.0 * x * y

    return ManufacturedSolution("paper", velocity, grad, laplacian)


def _g(t):
    return t**2 * (1 - t) ** 2


def _g1(t):
    return 2 * t * (1 - t) * (1 - 2 * t)


def _g2(t):
    return 2 * (1 - 6 * t + 6 * t**2)


def _g3(t):
    return 12 * (2 * t - 1)


def homogeneous_solution(amplitude: float = 1.0) -> ManufacturedSolution:
    """Curl of ``amplitude * x^2 (1-x)^2 y^2 (1-y)^2`` with ``p = cos(pi x) cos(pi y)``.

    The velocity vanishes on the boundary of the unit square and the pressure
    has zero mean.
    """
    a = float(amplitude)
    pi = np.pi

    def velocity(x, y):
        return a * _g(x) * _g1(y), -a * _g1(x) * _g(y)

    def grad(x, y):
        return (
            (a * _g1(x) * _g1(y), a * _g(x) * _g2(y)),
            (-a * _g2(x) * _g(y), -a * _g1(x) * _g1(y)),
        )

    def laplacian(x, y):
        return (
            a * (_g2(x) * _g1(y) + _g(x) * _g3(y)),
            -a * (_g3(x) * _g(y) + _g1(x) * _g2(y)),
        )

    def pressure(x, y):
        return np.cos(pi * x) * np.cos(pi * y)

    def pressure_grad(x, y):
        return -pi * np.sin(pi * x) * np.cos(pi * y), -pi * np.cos(pi * x) * np.sin(pi * y)

    return ManufacturedSolution("homogeneous", velocity, grad, laplacian, pressure, pressure_grad)


BUILTIN_SOLUTIONS = {
    "paper": builtin_paper_solution,
    "homogeneous": homogeneous_solution,
}


def get_solution(name: str) -> ManufacturedSolution:
    try:
        return BUILTIN_SOLUTIONS[name]()
    except KeyError:
        raise ValueError(
            f"unknown solution {name!r}; choose from {sorted(BUILTIN_SOLUTIONS)}"
        ) from None
