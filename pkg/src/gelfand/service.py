"""Command implementations shared by the CLI and the HTTP API.

Each command takes a validated ExperimentConfig and returns a report dict with a
``schema_version``, the echoed config, the numerical results and a table of named
assertions.  ``exit_code`` maps a report to 0 (all assertions hold) or 1.
"""
from __future__ import annotations

import json
import logging
import time
from typing import Callable

import numpy as np

from . import greens
from .ansatz import (AnsatzError, assemble_W, bubble_domain, diagnostic_mesh, kernel_integrals,
                     linearized_diagnostic, reduced_equation_check, tau_limit, xi_scale)
from .config import SCHEMA_VERSION, ConfigError, ExperimentConfig
from .corrections import CorrectionError, w1_certificate
from .finitedim import DegreeError, solve_reduced_equation
from .greens import Domain, DomainError, SolverError
from .reduced import (AdmissibilityError, ReducedFunctional, build_P, eta0_vector, potential_from_spec,
                      reduced_report, sample_points)
from .solver import SolveError, control_experiment, multiplicity_experiment

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

#: exceptions that signal a numerical failure rather than a failed assertion
NUMERICAL_ERRORS = (SolveError, AnsatzError, CorrectionError, SolverError, DegreeError, np.linalg.LinAlgError)
CONFIG_ERRORS = (ConfigError, DomainError, AdmissibilityError, ValueError)


def jsonable(obj):
    """Recursively convert numpy containers and scalars to plain Python."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def dumps(report: dict) -> str:
    return json.dumps(jsonable(report), sort_keys=True, indent=2)


def exit_code(report: dict) -> int:
    return EXIT_OK if all(report.get("assertions", {}).values()) else EXIT_ASSERT


def _domain(cfg: ExperimentConfig) -> Domain:
    return Domain.from_config(cfg.domain.to_domain_dict())


def _rf(cfg: ExperimentConfig, domain: Domain | None = None) -> ReducedFunctional:
    dom = domain or _domain(cfg)
    pot = potential_from_spec(dom, cfg.potential_dict(), cfg.N, cfg.alpha)
    return ReducedFunctional(dom, pot, cfg.N)


def _eta0(cfg: ExperimentConfig, rf: ReducedFunctional) -> np.ndarray:
    return np.asarray(cfg.eta0, dtype=float) if cfg.eta0 is not None else eta0_vector(rf, cfg.N)


# ---- greens ---------------------------------------------------------------

def cmd_greens(cfg: ExperimentConfig) -> dict:
    """Regular-part table, derivative table at the potential center, and an h/2 study."""
    spec = cfg.domain.to_domain_dict()
    disk = cfg.domain.kind == "disk"
    if disk:
        spec["analytic"] = False
    dom = Domain.from_config(spec)
    fine = Domain.from_config({**spec, "h": spec["h"] / 2})
    pts = [p for p in sample_points(40, 0.7, cfg.seed)
           if dom.contains(p[None])[0] and dom.boundary_distance(p[None])[0] > 10 * dom.h][:10]
    rows = []
    for p in pts:
        row = {"xi": p, "H": greens.regular_part(dom, p, p, method="poly"),
               "H_half_h": greens.regular_part(fine, p, p, method="poly")}
        if disk:
            row["H_exact"] = float(greens.disk_regular_part(p[None], p[None])[0])
            row["error"] = abs(row["H"] - row["H_exact"])
        rows.append(row)
    center = cfg.potential.center
    derivs = greens.regular_part_derivatives(dom, 2, center) if dom.contains(np.array([center]))[0] else None
    assertions = {"table_nonempty": bool(rows)}
    if disk:
        tol = 1e-4 * max(1.0, (128 * dom.h) ** 2)
        assertions["disk_closed_form"] = all(r["error"] <= tol for r in rows)
    spread = max((abs(r["H"] - r["H_half_h"]) for r in rows), default=0.0)
    assertions["self_consistent_under_refinement"] = spread <= 1e-2
    return {"table": rows, "derivatives": derivs, "refinement_spread": spread, "h": dom.h,
            "assertions": assertions}


# ---- reduced ----------------------------------------------------------------

def cmd_reduced(cfg: ExperimentConfig) -> dict:
    rf = _rf(cfg)
    rep = reduced_report(rf, cfg.N)
    eta = _eta0(cfg, rf)
    rep["eta0_used"] = eta
    assertions = {"admissible": bool(rep["admissibility"]["admissible"])}
    if cfg.domain.kind == "disk" and cfg.N >= 3 and cfg.eta0 is None:
        assertions["disk_eta0_vanishes"] = bool(np.linalg.norm(eta) <= 2e-3)
    rep["assertions"] = assertions
    return rep


# ---- degree -----------------------------------------------------------------

def cmd_degree(cfg: ExperimentConfig) -> dict:
    rf = _rf(cfg)
    P = build_P(rf, cfg.N)
    eta = _eta0(cfg, rf)
    rep = solve_reduced_equation(P, eta)
    out = rep.to_json()
    out["P"] = P.to_json()
    out["stable"] = [s.to_json() for s in rep.stable_solutions]
    out["assertions"] = {"degree_formula_equals_winding": rep.degree_formula == rep.degree_winding,
                         "zero_count_consistent": len(rep.solutions) >= abs(rep.degree_formula)}
    return out


# ---- verify -----------------------------------------------------------------

def _stable_seeds(cfg: ExperimentConfig, rf: ReducedFunctional) -> list[np.ndarray]:
    if cfg.seeds:
        return [np.asarray(s, dtype=float) for s in cfg.seeds]
    rep = solve_reduced_equation(build_P(rf, cfg.N), _eta0(cfg, rf))
    pts = sorted((tuple(np.round(s.point, 12)) for s in rep.stable_solutions), key=lambda t: (-t[1], t[0]))
    return [np.asarray(p) for p in pts]


def _slope(rhos, vals) -> float:
    return float(np.polyfit(np.log(rhos), np.log(vals), 1)[0])


def verify_point(rho: float, xi0, potential, N: int, P, eta0, p: float, checks, mesh: dict) -> dict:
    """All per-rho ansatz diagnostics at one seed."""
    from dataclasses import replace
    row: dict = {"rho": rho}
    base = Domain.unit_disk(1 / 32)
    xi = xi_scale(rho, N) * np.asarray(xi0, dtype=float)
    tau = tau_limit(ReducedFunctional(base, potential, N), xi)
    if {"kernel", "residual", "reduced"} & set(checks):
        dom = bubble_domain(rho, [xi], tau, **mesh)
        a = assemble_W(rho, xi0, dom, potential, N)
        row.update(tau=a.tau, nodes=dom.n_interior)
        if "residual" in checks:
            row["residual_on"] = a.residual_norm(p)
            row["residual_on_local"] = a.residual_norm(p, radius=0.6)
            row["residual_off"] = replace(a, corrections=False).residual_norm(p)
        if "kernel" in checks:
            row["kernel"] = kernel_integrals(a)
        if "reduced" in checks:
            row["reduced"] = reduced_equation_check(a, P, eta0)
            a2 = assemble_W(rho, 2 * np.asarray(xi0, dtype=float), dom if np.linalg.norm(xi) > 0 else None,
                            potential, N)
            row["reduced_2xi0"] = reduced_equation_check(a2, P, eta0)
    if "linearized" in checks:
        dd = diagnostic_mesh(rho, tau, [xi])
        row["linearized"] = linearized_diagnostic(assemble_W(rho, xi0, dd, potential, N))
    return row


def cmd_verify(cfg: ExperimentConfig) -> dict:
    """Correction certificate, residual scaling, kernel identities, reduced pair, near-kernel."""
    out: dict = {}
    assertions: dict = {}
    checks = set(cfg.checks)
    if "w1" in checks:
        out["w1"] = w1_certificate()
        assertions["w1_certificate"] = out["w1"]["passed"]
    if checks - {"w1"}:
        rf = _rf(cfg)
        P, eta = build_P(rf, cfg.N), _eta0(cfg, rf)
        xi0 = _stable_seeds(cfg, rf)[0]
        rhos = sorted(cfg.rho, reverse=True)
        rows = [verify_point(r, xi0, rf.potential, cfg.N, P, eta, cfg.p, checks, cfg.mesh.model_dump())
                for r in rhos]
        out.update(xi0=xi0, sweep=rows)
        assertions.update(_verify_assertions(rows, rhos, cfg.p, checks, out))
    out["assertions"] = assertions
    return out


def _verify_assertions(rows, rhos, p, checks, out) -> dict:
    a = {}
    if "residual" in checks and len(rows) > 1:
        base = 2 / p - 1
        out["slopes"] = {k: _slope(rhos, [r[f"residual_{k}"] for r in rows]) for k in ("on", "on_local", "off")}
        out["slopes"]["predicted_on"], out["slopes"]["predicted_off"] = base + 2, base
        a["residual_slope_on"] = abs(out["slopes"]["on"] - (base + 2)) <= 0.25
        a["residual_slope_off"] = abs(out["slopes"]["off"] - base) <= 0.25
    if "kernel" in checks:
        a["kernel_delta"] = all(r["kernel"]["delta_deviation"] <= 5e-3 for r in rows)
        a["kernel_log_ratio"] = all(abs(v - 1) <= 0.1 for v in rows[-1]["kernel"]["log_ratio"])
    if "reduced" in checks:
        sc = [r["reduced"]["scaled_pair"] for r in rows]
        a["reduced_pair_decreasing"] = bool(np.all(np.diff(sc) < 0))
        a["reduced_2xi0_within_30pct"] = all(r["reduced_2xi0"]["relative_error"] <= 0.3 for r in rows)
    if "linearized" in checks:
        lin = [r["linearized"] for r in rows]
        band = [d["sigma_perp_log"] for d in lin]
        out["linearized_band"] = max(band) / min(band)
        a["two_isolated_small_singular_values"] = all(d["gap_ratio"] >= 5 for d in lin)
        a["sigma_perp_log_band"] = out["linearized_band"] <= 2.0
    return a


# ---- solve ------------------------------------------------------------------

def cmd_solve(cfg: ExperimentConfig) -> dict:
    """Multiplicity experiment, or the radial control when ``control`` is set."""
    rf = _rf(cfg)
    mesh = cfg.mesh.model_dump()
    if cfg.control:
        seeds = cfg.seeds or [(0.3, 0.2), (-0.3, -0.1)]
        rep = control_experiment(rf.potential, cfg.N, max(cfg.rho), seeds, mesh, cfg.tol)
        rep["assertions"] = {"single_branch": rep["single_branch"]}
        return rep
    seeds = _stable_seeds(cfg, rf)
    if len(seeds) < 2:
        raise ConfigError(f"multiplicity experiment needs at least two stable zeros, found {len(seeds)}")
    rep = multiplicity_experiment(rf.potential, cfg.N, cfg.rho, seeds, mesh, cfg.tol)
    rep["assertions"] = dict(rep["checks"])
    return rep


COMMANDS: dict[str, Callable[[ExperimentConfig], dict]] = {
    "greens": cmd_greens, "reduced": cmd_reduced, "degree": cmd_degree,
    "verify": cmd_verify, "solve": cmd_solve,
}


def run_command(name: str, cfg: ExperimentConfig, timing: bool = False) -> tuple[dict, int]:
    """Run a command; returns (report, exit code).  Errors become reports with codes 2 or 3."""
    if name not in COMMANDS:
        raise ConfigError(f"unknown command {name!r}")
    t0 = time.perf_counter()
    head = {"schema_version": SCHEMA_VERSION, "command": name, "config": cfg.model_dump(mode="json")}
    try:
        body = COMMANDS[name](cfg)
        code = exit_code(body)
        status = "ok" if code == EXIT_OK else "assertion_failure"
    except NUMERICAL_ERRORS as exc:
        body, code, status = {"error": f"{type(exc).__name__}: {exc}"}, EXIT_NUMERIC, "numerical_failure"
    except CONFIG_ERRORS as exc:
        body, code, status = {"error": f"{type(exc).__name__}: {exc}"}, EXIT_CONFIG, "config_error"
    report = {**head, **body, "status": status, "exit_code": code}
    if timing:
        report["elapsed_s"] = time.perf_counter() - t0
    return jsonable(report), code
