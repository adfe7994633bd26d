"""Closed-form uniqueness conditions for the nudged steady Navier-Stokes problem.

Notation follows the usual steady NSE analysis:

* ``alpha = M nu^-2 ||f||_*`` measures the data size; ``alpha < 1`` is the
  small-data regime in which the steady solution is unique.
* For large data the nudged problem is uniquely solvable (and reproduces
  the observed solution) when ``H <= 2 M^2 / (3 sqrt(3) C_I M1^2 alpha^2)``
  and ``mu >= nu / (4 C_I^2 H^2)``. In two dimensions the sharper trilinear
  bound relaxes the mesh condition to ``H <= M / (2 C_I M2 alpha)``.

``M``, ``M1``, ``M2`` are the trilinear-form constants of the domain. They
are not computed here; every report carries their provenance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .assembly import assemble_convection, scalar_stiffness
from .spaces import VelocityPressureField


@dataclass(frozen=True)
class TheoryConstants:
    M: float = 1.0
    M1: float = 1.0
    M2: float = 1.0
    C_I: float = 1.0
    provenance: str = "nominal"
    C_I_provenance: str = "nominal"

    def __post_init__(self):
        for name in ("M", "M1", "M2", "C_I"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")


def compute_alpha(nu: float, f_dual_norm: float, M: float = 1.0) -> float:
    """``M nu^-2 ||f||_*``."""
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    if f_dual_norm < 0:
        raise ValueError(f"dual norm must be nonnegative, got {f_dual_norm}")
    return M * f_dual_norm / nu**2


def mu_min(nu: float, C_I: float, H: float) -> float:
    """Smallest nudging parameter allowed by the large-data condition."""
    return nu / (4.0 * C_I**2 * H**2)


def lambda_value(nu: float, C_I: float, H: float, mu: float) -> float:
    return min(mu_min(nu, C_I, H), mu)


def H_max_general(alpha: float, c: TheoryConstants) -> float:
    if alpha == 0:
        return math.inf
    return 2.0 * c.M**2 / (3.0 * math.sqrt(3.0) * c.C_I * c.M1**2 * alpha**2)


def H_max_2d(alpha: float, c: TheoryConstants) -> float:
    if alpha == 0:
        return math.inf
    return c.M / (2.0 * c.C_I * c.M2 * alpha)


def _json_float(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass(frozen=True)
class ConditionReport:
    alpha: float
    f_dual_norm: float
    f_dual_norm_is_estimate: bool
    f_dual_norm_mesh_h: float | None
    nu: float
    H: float
    mu: float
    lambda_: float
    H_max_general: float
    H_max_2d: float
    mu_min: float
    small_data: bool
    condition_satisfied_general: bool
    condition_satisfied_2d: bool
    M: float
    M1: float
    M2: float
    C_I: float
    constants: str
    C_I_source: str

    def as_dict(self) -> dict:
        """JSON-ready mapping; infinities become the strings ``"inf"``."""
        out = {k: _json_float(v) for k, v in asdict(self).items()}
        out["lambda"] = out.pop("lambda_")
        return out


def theorem_bounds(
    constants: TheoryConstants,
    alpha: float,
    nu: float,
    H: float,
    mu: float,
    f_dual_norm: float | None = None,
    f_dual_norm_is_estimate: bool = True,
    f_dual_norm_mesh_h: float | None = None,
) -> ConditionReport:
    """Evaluate the small- and large-data conditions for ``(H, mu)``.

    For ``alpha < 1`` nothing is restricted: both flags are true and the
    mesh bounds are reported as infinite.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    if not H > 0:
        raise ValueError(f"H must be positive, got {H}")
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    small = alpha < 1
    mmin = mu_min(nu, constants.C_I, H)
    if small:
        hg = h2 = math.inf
        ok_g = ok_2 = True
    else:
        hg = H_max_general(alpha, constants)
        h2 = H_max_2d(alpha, constants)
        ok_g = H <= hg and mu >= mmin
        ok_2 = H <= h2 and mu >= mmin
    if f_dual_norm is None:
        f_dual_norm = alpha * nu**2 / constants.M
    return ConditionReport(
        alpha=alpha,
        f_dual_norm=f_dual_norm,
        f_dual_norm_is_estimate=f_dual_norm_is_estimate,
        f_dual_norm_mesh_h=f_dual_norm_mesh_h,
        nu=nu,
        H=H,
        mu=mu,
        lambda_=lambda_value(nu, constants.C_I, H, mu),
        H_max_general=hg,
        H_max_2d=h2,
        mu_min=mmin,
        small_data=small,
        condition_satisfied_general=ok_g,
        condition_satisfied_2d=ok_2,
        M=constants.M,
        M1=constants.M1,
        M2=constants.M2,
        C_I=constants.C_I,
        constants=constants.provenance,
        C_I_source=constants.C_I_provenance,
    )


@dataclass(frozen=True)
class ProofChainRecord:
    """Terms of the energy identity and lower bound for ``e = w - u``.

    ``viscous = nu ||grad e||^2``, ``nudging = mu ||I_H e||^2``,
    ``convective = -b(e, u, e)`` (skew form), ``middle`` and ``lower`` are the
    two stages of the lower bound with ``lambda = min(nu / (4 C_I^2 H^2), mu)``.
    """

    grad_e_sq: float
    e_sq: float
    interp_defect_sq: float
    IH_e_sq: float
    viscous: float
    nudging: float
    convective: float
    middle: float
    lower: float
    lam: float

    @property
    def lhs(self) -> float:
        return self.viscous + self.nudging

    @property
    def identity_gap(self) -> float:
        return self.lhs - self.convective

    @property
    def lower_bound_slack(self) -> float:
        return self.lhs - self.lower

    @property
    def middle_slack(self) -> float:
        return self.lhs - self.middle

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(
            lhs=self.lhs,
            identity_gap=self.identity_gap,
            lower_bound_slack=self.lower_bound_slack,
            middle_slack=self.middle_slack,
        )
        return out


def proof_chain_check(w, u, constants: TheoryConstants, nu: float, mu: float, op, degree: int = 4) -> ProofChainRecord:
    """Evaluate both sides of the energy identity and its lower bound.

    ``w`` and ``u`` are fields (or velocity arrays) on the operator's fine
    space. The nudging term uses the coarse mass matrix, as in the solver;
    the interpolation-defect terms of the lower bound use fine-mesh
    quadrature of ``e``, ``I_H e`` and ``e - I_H e`` consistently.
    """
    space = op.fine_space
    vecs = []
    for fld in (w, u):
        if isinstance(fld, VelocityPressureField):
            if fld.space is not space:
                raise ValueError("field lives on a different space than the observation operator")
            vecs.append(fld.velocity)
        else:
            arr = np.asarray(fld, dtype=float)
            if arr.shape != (space.velocity_dof_count,):
                raise ValueError(f"velocity vector has shape {arr.shape}")
            vecs.append(arr)
    wv, uv = vecs
    e = wv - uv

    n = space.n_scalar
    K = scalar_stiffness(space, degree)
    grad_sq = float(e[:n] @ (K @ e[:n]) + e[n:] @ (K @ e[n:]))
    IHe = op.apply(e)
    nudging = mu * float(IHe @ (op.coarse_mass @ IHe))

    C = assemble_convection(space, e, skew=True, degree=degree)
    convective = -float(e @ (C @ uv))

    coarse_q = op.coarse_values_at_fine_quadrature(IHe)
    fine_q = op.fine_values_at_quadrature(e)
    wq = op._qweights[:, None]
    e_sq = float(np.sum(wq * fine_q**2))
    defect_sq = float(np.sum(wq * (fine_q - coarse_q) ** 2))
    IHe_sq = float(np.sum(wq * coarse_q**2))

    H = op.H
    lam = lambda_value(nu, constants.C_I, H, mu)
    middle = 0.75 * nu * grad_sq + mu_min(nu, constants.C_I, H) * defect_sq + mu * IHe_sq
    lower = 0.75 * nu * grad_sq + 0.5 * lam * e_sq
    return ProofChainRecord(
        grad_e_sq=grad_sq,
        e_sq=e_sq,
        interp_defect_sq=defect_sq,
        IH_e_sq=IHe_sq,
        viscous=nu * grad_sq,
        nudging=nudging,
        convective=convective,
        middle=middle,
        lower=lower,
        lam=lam,
    )


def discrete_CI(op, tol: float = 0.0) -> float:
    """Exact discrete interpolation constant over the zero-trace fine space.

    Largest ``||v - I_H v|| / (H ||grad v||)`` over all fine velocities,
    from a dense generalized eigenproblem; intended for small meshes.
    """
    import scipy.linalg as sla

    space = op.fine_space
    n = space.n_scalar
    interior = np.setdiff1d(np.arange(n), space.boundary_scalar_nodes)
    R = op.matrix()
    Rs = R[: op.coarse_mesh.n_vertices, :n]
    D = (op._coarse_at_q @ Rs - op._fine_at_q)[:, interior].toarray()
    Q = D.T @ (op._qweights[:, None] * D)
    K = scalar_stiffness(space)[interior][:, interior].toarray()
    top = sla.eigh(Q, K, eigvals_only=True, subset_by_index=[len(interior) - 1, len(interior) - 1])[0]
    return float(math.sqrt(max(top, tol)) / op.H)
