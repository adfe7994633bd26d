"""Configuration-driven experiment runner.

Usage::

    cdanse run config.json [--set key=value ...] [--workers N] [--out DIR]
    cdanse schema

The configuration is one JSON document; ``cdanse schema`` prints its JSON
Schema (``config_schema.json`` in this package). Recognised keys:

``experiment``
    ``mms_convergence``, ``cda_sweep``, ``uniqueness_test`` or ``condition_report``.
``solution``
    Built-in manufactured solution (``paper`` or ``homogeneous``); supplies
    the forcing, the boundary data and the reference for errors.
``h``, ``H``
    Fine and coarse mesh sizes: numbers or strings such as ``"1/64"``.
``Re``
    Reynolds numbers (``nu = 1/Re``).
``mu``
    Nudging parameters: numbers, or ``{"mu_min_multiple": k}`` resolved per
    cell to ``k nu / (4 C_I^2 H^2)``.
``observations``
    Optional CSV (``x, y, u1, u2`` at coarse vertices) replacing the
    default observations (the fine interpolant of the exact solution).
``observation_mode``, ``equation``, ``solver``, ``constants``, ``seed``,
``guesses``, ``perturbation``, ``f_dual_norm``, ``vtk``
    Observation operator mode, ``nse``/``stokes`` for convergence runs,
    :class:`~cdanse.solver.SolveConfig` overrides, theory constants
    (``M``, ``M1``, ``M2``, ``C_I``), random seed, initial guesses for the
    uniqueness test, perturbation size, a forced dual norm, and whether to
    dump VTK fields.

Exit status: 0 on a completed run (non-converged cells are data), 2 on a
configuration error, 3 on an I/O error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime
import importlib.resources
import io
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction

import numpy as np

from .analysis import convergence_rates, dual_norm_estimate, error_vs_exact, h1_distance, h1_seminorm
from .errors import LinearSolveError
from .mesh import build_rect_mesh
from .mms import BUILTIN_SOLUTIONS, forcing_from_solution, get_solution
from .observation import MODES, build_observation, estimate_CI, load_observations
from .solver import SolveConfig, solve_cda_nse, solve_stokes
from .spaces import VelocityPressureField, build_taylor_hood, interpolate_function
from .theory import TheoryConstants, compute_alpha, mu_min, theorem_bounds

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

EXPERIMENTS = ("mms_convergence", "cda_sweep", "uniqueness_test", "condition_report")
GUESSES = ("zero", "stokes", "perturbed")

CSV_COLUMNS = [
    "h", "H", "Re", "mu",
    "e_L2_u", "e_H1_u", "e_L2_p", "div_L2",
    "rate_L2_u", "rate_H1_u",
    "iterations", "converged",
    "cell", "experiment", "solution", "mu_spec", "observation_mode", "convection",
    "nudging_variant", "guess", "max_pairwise_H1", "status",
]

_KNOWN_KEYS = {
    "experiment", "solution", "observations", "h", "H", "Re", "mu", "observation_mode",
    "equation", "solver", "constants", "seed", "guesses", "perturbation", "f_dual_norm", "vtk",
}
_SOLVER_KEYS = {f.name for f in fields(SolveConfig)} - {"nu", "mu"}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending line."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    solution: str = "paper"
    h: tuple = ()
    H: tuple = ()
    Re: tuple = (1.0,)
    mu: tuple = (0.0,)
    observations: str | None = None
    observation_mode: str = "nodal_interp"
    equation: str = "nse"
    solver: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    seed: int = 0
    guesses: tuple = GUESSES
    perturbation: float = 0.5
    f_dual_norm: float | None = None
    vtk: bool = False

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        for k in ("h", "H", "Re", "mu", "guesses"):
            out[k] = list(out[k])
        return out


# ----------------------------------------------------------------------------
# configuration parsing


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for k, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return k
    return None


def _set_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {dotted}: {k!r} is not an object")
    node[keys[-1]] = value


def parse_override(item: str) -> tuple:
    """``"solver.mu=1e4"`` -> ``("solver.mu", 10000.0)``; values are JSON if possible."""
    if "=" not in item:
        raise ConfigError(f"--set {item}: expected key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set {item}: empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _mesh_count(value, length: float, where: str) -> int:
    """Number of cells for a mesh size given as a number or ``"1/n"``."""
    try:
        size = float(Fraction(value)) if isinstance(value, str) else float(value)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ConfigError(f"{where}: cannot read mesh size {value!r}") from None
    if not size > 0 or not math.isfinite(size):
        raise ConfigError(f"{where}: mesh size must be positive, got {value!r}")
    n = round(length / size)
    if n < 1 or abs(n * size - length) > 1e-9 * length:
        raise ConfigError(f"{where}: mesh size {value!r} does not divide the domain length {length}")
    return int(n)


def _mu_spec(value, where: str):
    if isinstance(value, bool):
        raise ConfigError(f"{where}: mu entries must be numbers or {{\"mu_min_multiple\": k}}")
    if isinstance(value, (int, float)):
        if value < 0 or not math.isfinite(value):
            raise ConfigError(f"{where}: mu must be nonnegative, got {value}")
        return float(value)
    if isinstance(value, dict) and set(value) == {"mu_min_multiple"}:
        k = value["mu_min_multiple"]
        if isinstance(k, bool) or not isinstance(k, (int, float)) or k < 0:
            raise ConfigError(f"{where}: mu_min_multiple must be a nonnegative number")
        return {"mu_min_multiple": float(k)}
    raise ConfigError(f"{where}: mu entries must be numbers or {{\"mu_min_multiple\": k}}")


def validate_config(doc, text: str = "", source: str = "config", base_dir: str = ".") -> ExperimentConfig:
    """Check a parsed configuration and return an :class:`ExperimentConfig`."""

    def where(key):
        line = _line_of(text, key) if text else None
        return f"{source}:{line}" if line else f"{source}: key {key!r}"

    if not isinstance(doc, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")
    unknown = sorted(set(doc) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"{where(unknown[0])}: unknown key {unknown[0]!r}")
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"{where('experiment')}: experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")

    solution = doc.get("solution", "paper")
    if solution not in BUILTIN_SOLUTIONS:
        raise ConfigError(f"{where('solution')}: unknown solution {solution!r}; choose from {sorted(BUILTIN_SOLUTIONS)}")

    def nonempty_list(key, default=None):
        if key not in doc:
            if default is None:
                raise ConfigError(f"{source}: missing required key {key!r}")
            return list(default)
        value = doc[key]
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{where(key)}: {key!r} must be a non-empty list")
        return value

    needs_H = exp in ("cda_sweep", "uniqueness_test", "condition_report")
    h = nonempty_list("h")
    H = nonempty_list("H") if needs_H else list(doc.get("H", []))
    Re = nonempty_list("Re", [1.0])
    mu = nonempty_list("mu", [0.0])

    domain = get_solution(solution).domain
    length = domain[2] - domain[0]
    if abs((domain[3] - domain[1]) - length) > 1e-12:
        raise ConfigError(f"{where('solution')}: only square domains are supported by mesh-size lists")
    for v in h:
        _mesh_count(v, length, where("h"))
    for v in H:
        _mesh_count(v, length, where("H"))
    for r in Re:
        if isinstance(r, bool) or not isinstance(r, (int, float)) or not r > 0:
            raise ConfigError(f"{where('Re')}: Reynolds numbers must be positive numbers, got {r!r}")
    mu = [_mu_spec(m, where("mu")) for m in mu]

    obs = doc.get("observations")
    if obs is not None:
        if not isinstance(obs, str):
            raise ConfigError(f"{where('observations')}: observations must be a file path")
        path = obs if os.path.isabs(obs) else os.path.join(base_dir, obs)
        if not os.path.isfile(path):
            raise ConfigError(f"{where('observations')}: observation file {obs!r} does not exist")
        obs = os.path.abspath(path)

    mode = doc.get("observation_mode", "nodal_interp")
    if mode not in MODES:
        raise ConfigError(f"{where('observation_mode')}: observation_mode must be one of {list(MODES)}")
    equation = doc.get("equation", "nse")
    if equation not in ("nse", "stokes"):
        raise ConfigError(f"{where('equation')}: equation must be 'nse' or 'stokes'")

    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError(f"{where('solver')}: solver must be an object")
    bad = sorted(set(solver) - _SOLVER_KEYS)
    if bad:
        raise ConfigError(f"{where(bad[0])}: unknown solver option {bad[0]!r}")
    try:
        SolveConfig(nu=1.0, **solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where('solver')}: {exc}") from None

    constants = doc.get("constants", {})
    if not isinstance(constants, dict) or set(constants) - {"M", "M1", "M2", "C_I"}:
        raise ConfigError(f"{where('constants')}: constants may only set M, M1, M2, C_I")
    try:
        TheoryConstants(**{k: float(v) for k, v in constants.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where('constants')}: {exc}") from None

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"{where('seed')}: seed must be a nonnegative integer")
    guesses = doc.get("guesses", list(GUESSES))
    if not isinstance(guesses, list) or not guesses or any(g not in GUESSES for g in guesses):
        raise ConfigError(f"{where('guesses')}: guesses must be a non-empty list drawn from {list(GUESSES)}")
    if exp == "uniqueness_test" and len(guesses) < 3:
        raise ConfigError(f"{where('guesses')}: the uniqueness test needs at least three initial guesses")
    pert = doc.get("perturbation", 0.5)
    if isinstance(pert, bool) or not isinstance(pert, (int, float)) or pert < 0:
        raise ConfigError(f"{where('perturbation')}: perturbation must be a nonnegative number")
    fdn = doc.get("f_dual_norm")
    if fdn is not None and (isinstance(fdn, bool) or not isinstance(fdn, (int, float)) or fdn < 0):
        raise ConfigError(f"{where('f_dual_norm')}: f_dual_norm must be a nonnegative number")
    vtk = doc.get("vtk", False)
    if not isinstance(vtk, bool):
        raise ConfigError(f"{where('vtk')}: vtk must be true or false")

    return ExperimentConfig(
        experiment=exp,
        solution=solution,
        h=tuple(h),
        H=tuple(H),
        Re=tuple(float(r) for r in Re),
        mu=tuple(mu),
        observations=obs,
        observation_mode=mode,
        equation=equation,
        solver=dict(solver),
        constants={k: float(v) for k, v in constants.items()},
        seed=seed,
        guesses=tuple(guesses),
        perturbation=float(pert),
        f_dual_norm=None if fdn is None else float(fdn),
        vtk=vtk,
    )


def load_config(path: str, overrides=()) -> ExperimentConfig:
    """Read, override and validate a JSON configuration file.

    Raises :class:`ConfigError` for malformed content and :class:`OSError`
    if the file cannot be read.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    doc = copy.deepcopy(doc)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    for item in overrides:
        key, value = parse_override(item)
        _set_path(doc, key, value)
    return validate_config(doc, text, source=path, base_dir=os.path.dirname(os.path.abspath(path)))


# ----------------------------------------------------------------------------
# cells


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return format(x, ".12e")
    return str(x)


def _mu_label(spec) -> str:
    if isinstance(spec, dict):
        return f"{spec['mu_min_multiple']:g}*mu_min"
    return format(spec, "g")


def _constants(cfg: ExperimentConfig, op=None) -> TheoryConstants:
    c = dict(cfg.constants)
    provenance = "user" if any(k in c for k in ("M", "M1", "M2")) else "nominal"
    if "C_I" in c:
        ci_source = "user"
    elif op is not None:
        c["C_I"] = estimate_CI(op)
        ci_source = "estimate_CI(default probes)"
    else:
        ci_source = "nominal"
    return TheoryConstants(provenance=provenance, C_I_provenance=ci_source, **c)


def perturbed_guess(space, base: VelocityPressureField, size: float, seed: int) -> VelocityPressureField:
    """``base`` plus a seeded random field with zero trace and ``||grad v|| = size``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(space.velocity_dof_count)
    v[space.boundary_velocity_dofs] = 0.0
    g = h1_seminorm(space, v)
    if g > 0:
        v *= size / g
    return VelocityPressureField(space, base.velocity + v, base.pressure.copy())


def _row(cfg: ExperimentConfig, index: int, **values) -> dict:
    row = {c: None for c in CSV_COLUMNS}
    row.update(
        cell=index,
        experiment=cfg.experiment,
        solution=cfg.solution,
        convection=cfg.solver.get("convection", "skew"),
        nudging_variant=cfg.solver.get("nudging_variant", "IH_IH"),
        status="ok",
    )
    row.update(values)
    return row


def _errors(w, sol) -> dict:
    rep = error_vs_exact(w, sol)
    return {
        "e_L2_u": rep.e_L2_u[0],
        "e_H1_u": rep.e_H1_u[0],
        "e_L2_p": rep.e_L2_p[0],
        "div_L2": rep.div_L2[0],
    }


def _vtk(out_dir, name, w):
    if out_dir is None:
        return
    os.makedirs(os.path.join(out_dir, "fields"), exist_ok=True)
    w.to_vtk(os.path.join(out_dir, "fields", name))


def _run_mms_cell(cfg: ExperimentConfig, index: int, h, Re: float, out_dir):
    sol = get_solution(cfg.solution)
    length = sol.domain[2] - sol.domain[0]
    n = _mesh_count(h, length, "h")
    space = build_taylor_hood(build_rect_mesh(n, n, sol.domain))
    nu = 1.0 / Re
    scfg = SolveConfig(nu=nu, **cfg.solver)
    f = forcing_from_solution(sol, nu, convection=cfg.equation == "nse")
    if cfg.equation == "stokes":
        w, report = solve_stokes(space, scfg, f, boundary=sol.velocity)
    else:
        w, report = solve_cda_nse(space, scfg, f, boundary=sol.velocity)
    row = _row(
        cfg, index,
        h=space.mesh.H, Re=Re, mu=0.0, mu_spec="", iterations=report.iterations,
        converged=report.converged, guess=str(scfg.initial_guess) if cfg.equation == "nse" else "",
        **_errors(w, sol),
    )
    if cfg.vtk:
        _vtk(out_dir, f"cell_{index:03d}.vtk", w)
    return row, {"cell": index, "h": space.mesh.H, "Re": Re, "solve": report.as_dict()}


def _setup_cda(cfg: ExperimentConfig, h, H, Re, mu_spec):
    sol = get_solution(cfg.solution)
    length = sol.domain[2] - sol.domain[0]
    n = _mesh_count(h, length, "h")
    nH = _mesh_count(H, length, "H")
    space = build_taylor_hood(build_rect_mesh(n, n, sol.domain))
    op = build_observation(build_rect_mesh(nH, nH, sol.domain), space, cfg.observation_mode)
    nu = 1.0 / Re
    f = forcing_from_solution(sol, nu)
    exact = interpolate_function(space, sol.velocity, sol.pressure)
    if cfg.observations is not None:
        u_obs = load_observations(cfg.observations, op.coarse_mesh)
    else:
        u_obs = exact
    constants = _constants(cfg, op)
    mu = mu_spec if not isinstance(mu_spec, dict) else mu_spec["mu_min_multiple"] * mu_min(nu, constants.C_I, op.H)
    if cfg.f_dual_norm is not None:
        fdn, estimate, fdn_h = cfg.f_dual_norm, False, None
    else:
        fdn, estimate, fdn_h = dual_norm_estimate(f, space).star, True, space.mesh.H
    alpha = compute_alpha(nu, fdn, constants.M)
    cond = theorem_bounds(constants, alpha, nu, op.H, mu, fdn, estimate, fdn_h)
    scfg = SolveConfig(nu=nu, **{**cfg.solver, "mu": mu})
    return sol, space, op, f, exact, u_obs, scfg, cond


def _run_cda_cell(cfg: ExperimentConfig, index: int, h, H, Re: float, mu_spec, out_dir):
    sol, space, op, f, exact, u_obs, scfg, cond = _setup_cda(cfg, h, H, Re, mu_spec)
    w, report = solve_cda_nse(space, scfg, f, u_obs=u_obs, op=op, boundary=sol.velocity)
    report.condition_report = cond
    row = _row(
        cfg, index,
        h=space.mesh.H, H=op.H, Re=Re, mu=scfg.mu, mu_spec=_mu_label(mu_spec),
        observation_mode=cfg.observation_mode, iterations=report.iterations,
        converged=report.converged, guess=str(scfg.initial_guess), **_errors(w, sol),
    )
    if cfg.vtk:
        _vtk(out_dir, f"cell_{index:03d}.vtk", w)
    return row, {"cell": index, "h": space.mesh.H, "H": op.H, "Re": Re, "mu": scfg.mu, "solve": report.as_dict()}


def _run_uniqueness_cell(cfg: ExperimentConfig, index: int, h, H, Re: float, mu_spec, out_dir):
    sol, space, op, f, exact, u_obs, scfg, cond = _setup_cda(cfg, h, H, Re, mu_spec)
    results = []
    for k, guess in enumerate(cfg.guesses):
        if guess == "perturbed":
            start = perturbed_guess(space, exact, cfg.perturbation, cfg.seed + index)
        else:
            start = guess
        w, report = solve_cda_nse(space, replace(scfg, initial_guess=start), f, u_obs=u_obs, op=op, boundary=sol.velocity)
        report.condition_report = cond
        results.append((guess, w, report))
        if cfg.vtk:
            _vtk(out_dir, f"cell_{index:03d}_{guess}.vtk", w)
    distances = {}
    for (ga, wa, ra), (gb, wb, rb) in itertools.combinations(results, 2):
        distances[f"{ga}-{gb}"] = h1_distance(wa, wb)
    all_converged = all(r.converged for _, _, r in results)
    max_dist = max(distances.values()) if distances else 0.0
    rows = []
    for guess, w, report in results:
        rows.append(
            _row(
                cfg, index,
                h=space.mesh.H, H=op.H, Re=Re, mu=scfg.mu, mu_spec=_mu_label(mu_spec),
                observation_mode=cfg.observation_mode, iterations=report.iterations,
                converged=report.converged, guess=guess, max_pairwise_H1=max_dist,
                **_errors(w, sol),
            )
        )
    info = {
        "cell": index, "h": space.mesh.H, "H": op.H, "Re": Re, "mu": scfg.mu,
        "all_converged": all_converged,
        "pairwise_H1": distances,
        "solves": {g: r.as_dict() for g, _, r in results},
    }
    return rows, info


def _failed_row(cfg, index, cell, exc) -> dict:
    return _row(
        cfg, index, converged=False,
        status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "),
        **{k: v for k, v in cell.items() if k in ("h", "H", "Re")},
        mu_spec=_mu_label(cell["mu_spec"]) if "mu_spec" in cell else "",
    )


def run_cell(task):
    """Execute one sweep cell; returns ``(rows, info)``. Picklable entry point."""
    cfg, index, cell, out_dir = task
    try:
        if cfg.experiment == "mms_convergence":
            row, info = _run_mms_cell(cfg, index, cell["h"], cell["Re"], out_dir)
            return [row], info
        if cfg.experiment == "cda_sweep":
            row, info = _run_cda_cell(cfg, index, cell["h"], cell["H"], cell["Re"], cell["mu_spec"], out_dir)
            return [row], info
        return _run_uniqueness_cell(cfg, index, cell["h"], cell["H"], cell["Re"], cell["mu_spec"], out_dir)
    except (LinearSolveError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("cell %d failed: %s", index, exc)
        return [_failed_row(cfg, index, cell, exc)], {"cell": index, "error": str(exc)}


def cells_for(cfg: ExperimentConfig) -> list:
    """Sweep cells in their deterministic order."""
    if cfg.experiment == "mms_convergence":
        return [{"Re": Re, "h": h} for Re in cfg.Re for h in cfg.h]
    return [
        {"Re": Re, "H": H, "mu_spec": m, "h": h}
        for Re in cfg.Re
        for H in cfg.H
        for m in cfg.mu
        for h in cfg.h
    ]


def _add_rates(rows: list) -> None:
    """Fill convergence rates along consecutive h for each Reynolds number."""
    groups = {}
    for r in rows:
        groups.setdefault(r["Re"], []).append(r)
    for group in groups.values():
        hs = [r["h"] for r in group]
        for key, rate_key in (("e_L2_u", "rate_L2_u"), ("e_H1_u", "rate_H1_u")):
            errs = [r[key] if r[key] is not None else float("nan") for r in group]
            rates = convergence_rates(hs, errs)
            for r, rate in zip(group[1:], rates):
                r[rate_key] = rate


def condition_report(cfg: ExperimentConfig) -> list:
    """Condition reports for every ``(Re, H, mu)`` without solving the flow."""
    sol = get_solution(cfg.solution)
    length = sol.domain[2] - sol.domain[0]
    n = max(_mesh_count(h, length, "h") for h in cfg.h)
    space = None
    out = []
    for Re in cfg.Re:
        nu = 1.0 / Re
        if cfg.f_dual_norm is not None:
            fdn, estimate, fdn_h = cfg.f_dual_norm, False, None
        else:
            space = space or build_taylor_hood(build_rect_mesh(n, n, sol.domain))
            fdn, estimate, fdn_h = dual_norm_estimate(forcing_from_solution(sol, nu), space).star, True, space.mesh.H
        for H in cfg.H:
            nH = _mesh_count(H, length, "H")
            if "C_I" in cfg.constants:
                constants = _constants(cfg)
            else:
                space = space or build_taylor_hood(build_rect_mesh(n, n, sol.domain))
                constants = _constants(cfg, build_observation(build_rect_mesh(nH, nH, sol.domain), space, cfg.observation_mode))
            Hval = length / nH
            for m in cfg.mu:
                mu = m if not isinstance(m, dict) else m["mu_min_multiple"] * mu_min(nu, constants.C_I, Hval)
                alpha = compute_alpha(nu, fdn, constants.M)
                rep = theorem_bounds(constants, alpha, nu, Hval, mu, fdn, estimate, fdn_h)
                out.append({"Re": Re, "mu_spec": _mu_label(m), **rep.as_dict()})
    return out


def write_csv(path: str, rows: list, timestamp: str | None = None) -> None:
    """Write ``rows``; the only non-reproducible content is the header comment."""
    buf = io.StringIO()
    buf.write(f"# cdanse results; generated {timestamp or datetime.datetime.now().isoformat(timespec='seconds')}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _json_clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    return obj


def run_experiment(cfg: ExperimentConfig, out_dir: str, workers: int = 1) -> dict:
    """Run ``cfg`` and write ``results.csv`` (not for condition reports) and ``report.json``."""
    os.makedirs(out_dir, exist_ok=True)
    report = {
        "experiment": cfg.experiment,
        "config": cfg.as_dict(),
        "created": datetime.datetime.now().isoformat(timespec="seconds"),
    }
    if cfg.experiment == "condition_report":
        report["conditions"] = condition_report(cfg)
    else:
        cells = cells_for(cfg)
        vtk_dir = out_dir if cfg.vtk else None
        tasks = [(cfg, k, c, vtk_dir) for k, c in enumerate(cells)]
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_cell, tasks))
        else:
            results = [run_cell(t) for t in tasks]
        rows = [r for rs, _ in results for r in rs]
        if cfg.experiment == "mms_convergence":
            _add_rates(rows)
        write_csv(os.path.join(out_dir, "results.csv"), rows)
        report["cells"] = [info for _, info in results]
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_json_clean(report), fh, indent=2, default=_json_default)
        fh.write("\n")
    return report


def config_schema() -> dict:
    """The published JSON Schema for experiment configurations."""
    text = importlib.resources.files(__package__).joinpath("config_schema.json").read_text()
    return json.loads(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdanse", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment described by a JSON config")
    run.add_argument("config", help="path to the JSON configuration")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config entry, e.g. --set solver.max_iter=50 (repeatable)")
    run.add_argument("--workers", type=int, default=1, help="number of worker processes (default 1)")
    run.add_argument("--out", default="results", help="output directory (default ./results)")
    run.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub.add_parser("schema", help="print the JSON Schema of the configuration file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "schema":
        print(json.dumps(config_schema(), indent=2))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        run_experiment(cfg, args.out, args.workers)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
