"""Batch command-line front end.

Loads model and time-set descriptors, runs certifications and solves, and
writes JSON reports plus plot-ready CSV tables.  Outputs are deterministic
for a fixed seed and configuration: no timestamps, sorted keys, shortest
round-trip float formatting.

Exit status: 0 when every checked inequality verified, 2 when any
verification failed (the witness is dumped in the report), 1 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import observability as obs
from . import control as ctl
from .analytic import derivative_bound_certify, smallness_check
from .exceptions import ConvergenceError, DataIntegrityError, UnobservableError
from .spectral import (
    ObservationOperator,
    make_diagonal,
    make_heat_1d,
    model_from_descriptor,
    model_to_descriptor,
)
from .timesets import make_time_set, timeset_from_dict, timeset_to_dict

SCHEMA_VERSION = 1

COMMANDS = (
    "gramian",
    "obs-l2",
    "fit-interval",
    "certify-h",
    "interp",
    "thm1",
    "thm2",
    "telescope",
    "lemma21",
    "lemma22",
    "tp-solve",
    "bangbang",
    "sweep",
)

PRESETS = {
    "scalar": {"kind": "diagonal", "n": 1, "eigenvalues": [1.0], "generator": "dissipative"},
    "heat-n8": {"kind": "heat1d", "n": 8, "window": [0.3, 0.8], "quad_order": 64},
    "heat-n32": {"kind": "heat1d", "n": 32, "window": [0.3, 0.8], "quad_order": 64},
    "unitary-scalar": {"kind": "diagonal", "n": 1, "eigenvalues": [1.0], "generator": "unitary"},
}


@dataclass
class RunConfig:
    command: str
    model: str = "scalar"
    set_path: str = None
    out_dir: str = "obsmeas-out"
    seed: int = obs.SUITE_SEED
    tol: float = 1e-9
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def _write_csv(path: Path, header, rows, footer_comment=None):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        if footer_comment:
            fh.write(f"# {footer_comment}\n")


def _load_model(spec: str):
    if spec in PRESETS:
        desc = PRESETS[spec]
    else:
        path = Path(spec)
        if not path.exists():
            raise FileNotFoundError(f"model file not found: {spec}")
        try:
            desc = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ValueError(f"{spec}:{err.lineno}: malformed JSON ({err.msg})") from err
    return model_from_descriptor(desc), desc


def _load_set(config: RunConfig, default_T: float = 1.0):
    if config.set_path is None:
        T = float(config.options.get("T", default_T))
        return make_time_set(T, [(0.0, T)])
    path = Path(config.set_path)
    if not path.exists():
        raise FileNotFoundError(f"time-set file not found: {config.set_path}")
    try:
        return timeset_from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as err:
        raise ValueError(f"{config.set_path}:{err.lineno}: malformed JSON ({err.msg})") from err


def _report_payload(config: RunConfig, body: dict) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "command": config.command,
        "seed": f"0x{config.seed:x}",
        **body,
    }


def _obs_report_dict(report: obs.ObservabilityReport, consts: obs.DerivedConstants = None) -> dict:
    out = {
        "kind": report.kind,
        "constant": report.constant if math.isfinite(report.constant) else None,
        "log_constant": report.log_constant,
        "worst_ratio": report.worst_ratio if math.isfinite(report.worst_ratio) else None,
        "witness_state": report.witness_state,
        "verified": report.verified,
        "params": report.params,
    }
    if consts is not None:
        out["derived_constants"] = {
            k: v
            for k, v in (
                ("c_thm1", consts.c_thm1),
                ("q_thm1", consts.q_thm1),
                ("c_interp", consts.c_interp),
                ("interp_rate", consts.interp_rate),
                ("lemma_pair", consts.lemma_pair),
                ("f_horizon", consts.f_horizon),
                ("n_interval_to_l1", consts.n_interval_to_l1),
                ("q_interval_to_l1", consts.q_interval_to_l1),
                ("c_thm2", consts.c_thm2),
                ("q_thm2", consts.q_thm2),
                ("n_thm2", consts.n_thm2),
                ("log_constant", consts.log_constant),
            )
            if v is not None
        }
        out["steps"] = [[name, value] for name, value in consts.steps]
    return out


# ---------------------------------------------------------------------------
# Command bodies: each returns (payload, all_verified)


def _cmd_gramian(config):
    (model, op), desc = _load_model(config.model)
    E = _load_set(config)
    G = obs.gramian_l2(model, op, E)
    eigmin = float(np.linalg.eigvalsh(G)[0].real)
    scale = max(1.0, float(np.linalg.norm(G)))
    body = {
        "model": desc,
        "set": timeset_to_dict(E),
        "gramian_real": G.real,
        "gramian_imag": G.imag if model.is_unitary else None,
        "min_eigenvalue": eigmin,
        "verified": eigmin >= -1e-12 * scale,
    }
    return body, body["verified"]


def _cmd_obs_l2(config):
    (model, op), desc = _load_model(config.model)
    E = _load_set(config)
    T = float(config.options.get("T", E.horizon))
    report = obs.obs_constant_l2(model, op, E, T)
    states = obs.trial_states(model.mode_count, count=1000, seed=config.seed)
    lhs = obs.state_norms(model, [T], states)[0] ** 2
    G = obs.gramian_l2(model, op, E)
    quad = np.einsum("si,ij,sj->s", states, G, states)
    ratios = np.where(quad > 0, lhs / np.where(quad > 0, quad, 1.0), np.inf)
    worst = max(float(np.max(ratios)), report.worst_ratio)
    verified = worst <= report.constant * (1.0 + config.tol + 1e-9)
    body = {
        "model": desc,
        "set": timeset_to_dict(E),
        "report": _obs_report_dict(report),
        "random_worst_ratio": worst,
        "verified": verified,
    }
    return body, verified


def _cmd_fit_interval(config):
    (model, op), desc = _load_model(config.model)
    grid = config.options.get("L_grid") or [round(0.1 * i, 10) for i in range(1, 11)]
    table = obs.interval_constant_table(model, op, grid)
    spec = obs.fit_interval_bound(model, op, grid)
    slack = [spec.d / L**spec.k - math.log(C) for L, C in table]
    body = {
        "model": desc,
        "table": [[L, C] for L, C in table],
        "d": spec.d,
        "k": spec.k,
        "log_envelope_slack": slack,
        "verified": all(s >= -1e-12 for s in slack),
    }
    out = Path(config.out_dir) / "interval_constants.csv"
    _write_csv(out, ["L", "C"], table)
    return body, body["verified"]


def _cmd_certify_h(config):
    (model, op), desc = _load_model(config.model)
    gamma = float(config.options.get("gamma", 0.5))
    cert = obs.certify_hypothesis_h(model, op, gamma)
    margins = cert.margin()
    body = {
        "model": desc,
        "gamma": gamma,
        "N": cert.bigN,
        "mu": cert.mu,
        "lambda1": cert.lambda1,
        "per_mode_constants": cert.per_mode_constants,
        "log_margins": margins,
        "verified": bool(np.all(margins >= -1e-9)),
    }
    rows = [
        (m + 1, float(cert.eigenvalues[m]), float(cert.per_mode_constants[m]))
        for m in range(cert.per_mode_constants.size)
    ]
    _write_csv(Path(config.out_dir) / "spectral_constants.csv", ["m", "lambda_m", "N_m"], rows)
    return body, body["verified"]


def _cmd_interp(config):
    (model, op), desc = _load_model(config.model)
    gamma = float(config.options.get("gamma", 0.5))
    cert = obs.certify_hypothesis_h(model, op, gamma)
    consts = obs.interpolation_one_time(cert, op.operator_norm, 1.0, t=1.0)
    times = config.options.get("times") or [0.05, 0.1, 0.5, 1.0]
    states = obs.trial_states(model.mode_count, seed=config.seed)
    reports = {}
    ok = True
    for t in times:
        rep = obs.verify_interpolation_one_time(model, op, consts, float(t), states)
        reports[repr(float(t))] = _obs_report_dict(rep)
        ok = ok and rep.verified
    tradeoff = obs.decay_tradeoff_maximum(1.0, 0.5, 2.0, 1.0)
    body = {
        "model": desc,
        "gamma": gamma,
        "certified_N": cert.bigN,
        "constants": _obs_report_dict(
            obs.ObservabilityReport(
                kind="interpolation_one_time",
                constant=consts.c_interp if consts.c_interp is not None else math.inf,
                worst_ratio=0.0,
                witness_state=np.zeros(model.mode_count),
                params={},
                log_constant=consts.log_constant,
            ),
            consts,
        ),
        "per_time": reports,
        "tradeoff_check": {
            "maximum": tradeoff[0],
            "maximizer": tradeoff[1],
            "bound": obs.decay_tradeoff_bound(1.0, 0.5, 2.0, 1.0),
        },
        "verified": ok,
    }
    return body, ok


def _cmd_thm1(config):
    (model, op), desc = _load_model(config.model)
    E = _load_set(config)
    T = float(config.options.get("T", E.horizon))
    grid = config.options.get("L_grid") or [round(0.1 * i, 10) for i in range(1, 11)]
    spec = obs.fit_interval_bound(model, op, grid)
    report, consts = obs.obs_measurable_theorem1(model, op, spec, E, T)
    body = {
        "model": desc,
        "set": timeset_to_dict(E),
        "T": T,
        "envelope": {"d": spec.d, "k": spec.k},
        "report": _obs_report_dict(report, consts),
        "verified": report.verified,
    }
    return body, report.verified


def _cmd_thm2(config):
    (model, op), desc = _load_model(config.model)
    E = _load_set(config)
    T = float(config.options.get("T", E.horizon))
    gamma = float(config.options.get("gamma", 0.5))
    cert = obs.certify_hypothesis_h(model, op, gamma)
    report, consts = obs.obs_measurable_theorem2(model, op, cert, E, T)
    body = {
        "model": desc,
        "set": timeset_to_dict(E),
        "T": T,
        "gamma": gamma,
        "certified_N": cert.bigN,
        "report": _obs_report_dict(report, consts),
        "verified": report.verified,
    }
    return body, report.verified


def _cmd_telescope(config):
    d = float(config.options.get("d", 1.0))
    k = float(config.options.get("k", 1.0))
    norm_B = float(config.options.get("norm_B", 1.0))
    bound_M = float(config.options.get("bound_M", 1.0))
    alpha = float(config.options.get("alpha", 0.0))
    T = float(config.options.get("T", 1.0))
    spec = obs.IntervalBoundSpec(d=d, k=k)
    consts = obs.telescope_l2_to_l1(spec, norm_B, bound_M, alpha, T)
    body = {
        "d": d,
        "k": k,
        "T": T,
        "q": consts.q_interval_to_l1,
        "F_T": consts.f_horizon,
        "N": consts.n_interval_to_l1,
        "log_constant": consts.log_constant,
        "steps": [[name, value] for name, value in consts.steps],
    }
    verified = True
    if config.model:
        (model, op), desc = _load_model(config.model)
        rep = obs.verify_l1_on_interval(
            model, op, consts, T, obs.trial_states(model.mode_count, seed=config.seed)
        )
        body["model"] = desc
        body["verification"] = _obs_report_dict(rep)
        verified = rep.verified
    body["verified"] = verified
    return body, verified


def _cmd_lemma21(config):
    (model, op), desc = _load_model(config.model)
    beta_max = int(config.options.get("beta_max", 8))
    count = int(config.options.get("states", 20))
    rng = np.random.default_rng(config.seed)
    states = rng.standard_normal((count, model.mode_count))
    states /= np.linalg.norm(states, axis=1, keepdims=True)
    t_grid = np.round(np.arange(0.1, 1.01, 0.1), 10)
    cert = derivative_bound_certify(model, op, states, 0.0, t_grid, beta_max)
    ok = bool(np.min(cert.residuals) >= 0.0)
    body = {
        "model": desc,
        "K": cert.bigK,
        "rho": cert.rho,
        "beta_max": cert.max_order,
        "min_log_residual": float(np.min(cert.residuals)),
        "verified": ok,
    }
    rows = []
    for beta in range(cert.residuals.shape[0]):
        for j, t in enumerate(cert.t_grid):
            rows.append((beta, float(t), float(cert.residuals[beta, j])))
    _write_csv(Path(config.out_dir) / "derivative_residuals.csv", ["beta", "t", "log_slack"], rows)
    return body, ok


def _cmd_lemma22(config):
    (model, op), desc = _load_model(config.model)
    rng = np.random.default_rng(config.seed)
    u = rng.standard_normal(model.mode_count)
    u /= np.linalg.norm(u)
    t_grid = np.round(np.arange(0.1, 1.01, 0.1), 10)
    cert = derivative_bound_certify(model, op, u, 0.0, t_grid, 6)
    a, s = 0.5, 0.5
    taylor_M = cert.bigK * a**-2 * 1.0
    taylor_rho = min(cert.rho * a / s, 1.0)
    E = make_time_set(1.0, [(0.55, 0.8)])

    def f(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        coef = np.exp(-model.eigenvalues[None, :] * x[:, None])
        return np.sum(((coef * u[None, :]) @ op.matrix.T) ** 2, axis=1)

    result = smallness_check(f, taylor_M, taylor_rho, (a, a + s), E)
    ok = result.sup_norm <= result.fitted_C * taylor_M ** (1 - result.fitted_theta) * result.set_average**result.fitted_theta * (1 + 1e-9)
    body = {
        "model": desc,
        "declared_M": taylor_M,
        "declared_rho": taylor_rho,
        "sup_norm": result.sup_norm,
        "set_average": result.set_average,
        "fitted_C": result.fitted_C,
        "fitted_theta": result.fitted_theta,
        "verified": bool(ok),
    }
    return body, bool(ok)


def _solve_problem(config):
    spec = config.model
    if spec in PRESETS:
        desc = {
            "model": PRESETS[spec],
            "z0": [1.0] + [0.0] * (PRESETS[spec]["n"] - 1),
            "M": float(config.options.get("M", 1.0)),
            "time_tol": float(config.options.get("time_tol", 1e-4)),
        }
        if PRESETS[spec].get("kind") == "heat1d":
            desc["control_window"] = PRESETS[spec]["window"]
    else:
        path = Path(spec)
        if not path.exists():
            raise FileNotFoundError(f"problem file not found: {spec}")
        desc = json.loads(path.read_text())
    problem, time_tol = ctl.problem_from_dict(desc)
    t_opt, solution = ctl.optimal_time(problem, time_tol=time_tol)
    return desc, problem, t_opt, solution


def _dump_control(config, solution):
    grid = solution.control_grid
    mids = grid.midpoints
    norms = np.linalg.norm(grid.values, axis=1)
    rows = []
    for i in range(mids.size):
        rows.append((float(mids[i]), *[float(v) for v in grid.values[i]], float(norms[i])))
    header = ["t"] + [f"f_{j + 1}" for j in range(grid.values.shape[1])] + ["norm"]
    _write_csv(Path(config.out_dir) / "control_trajectory.csv", header, rows)


def _cmd_tp_solve(config):
    desc, problem, t_opt, solution = _solve_problem(config)
    residual_ok = solution.terminal_residual <= 1e-3 * float(np.linalg.norm(problem.z0))
    body = {
        "problem": desc,
        "optimal_time": t_opt,
        "min_norm": solution.min_norm,
        "terminal_residual": solution.terminal_residual,
        "vanishing_nodes": solution.vanishing_nodes,
        "cells": int(solution.control_grid.values.shape[0]),
        "verified": bool(residual_ok),
    }
    _dump_control(config, solution)
    return body, bool(residual_ok)


def _cmd_bangbang(config):
    desc, problem, t_opt, solution = _solve_problem(config)
    tol = float(config.options.get("bang_tol", 1e-2))
    report = ctl.bang_bang_check(solution, problem.bound_M, tol)
    cells = solution.control_grid.values.shape[0]
    ok = (
        report.fraction_on_bound >= 0.99
        and solution.terminal_residual <= 1e-3 * float(np.linalg.norm(problem.z0))
        and solution.vanishing_nodes < 0.01 * cells
    )
    body = {
        "problem": desc,
        "optimal_time": t_opt,
        "min_norm": solution.min_norm,
        "terminal_residual": solution.terminal_residual,
        "fraction_on_bound": report.fraction_on_bound,
        "max_deviation": report.max_deviation,
        "switching_nodes": report.switching_nodes,
        "vanishing_nodes": solution.vanishing_nodes,
        "cells": int(cells),
        "verified": bool(ok),
    }
    _dump_control(config, solution)
    return body, bool(ok)


def _sweep_worker(config, axis, value):
    (model, op), _ = _load_model(config.model)
    if axis == "E":
        T = float(config.options.get("T", 1.0))
        E = make_time_set(T, [(T - value, T)])
        rep = obs.obs_constant_l2(model, op, E, T)
        return {"axis_value": value, "constant": rep.constant, "worst_ratio": rep.worst_ratio}
    if axis == "T":
        sol = ctl.min_norm_control(model, op, _unit_state(model), float(value))
        return {"axis_value": value, "min_norm": sol.min_norm, "terminal_residual": sol.terminal_residual}
    if axis == "M":
        problem = ctl.TimeOptimalProblem(model=model, control_op=op, z0=_unit_state(model), bound_M=float(value))
        t_opt, sol = ctl.optimal_time(problem, time_tol=float(config.options.get("time_tol", 1e-4)))
        return {"axis_value": value, "optimal_time": t_opt, "min_norm": sol.min_norm}
    if axis == "n":
        sub_model, sub_op = make_heat_1d(int(value), (0.3, 0.8), 64)
        E = make_time_set(1.0, [(0.0, 1.0)])
        rep = obs.obs_constant_l2(sub_model, sub_op, E, 1.0)
        return {"axis_value": value, "constant": rep.constant, "worst_ratio": rep.worst_ratio}
    if axis == "window":
        sub_model, sub_op = make_heat_1d(model.mode_count, (0.5 - value / 2, 0.5 + value / 2), 64)
        cert = obs.certify_hypothesis_h(sub_model, sub_op, 0.5)
        return {"axis_value": value, "N": cert.bigN}
    raise ValueError(f"unknown sweep axis {axis!r}")


def _unit_state(model):
    z = np.zeros(model.mode_count)
    z[0] = 1.0
    return z


def _cmd_sweep(config):
    axis = config.options.get("axis")
    values = config.options.get("values")
    if not axis or not values:
        raise ValueError("sweep requires --axis and a nonempty --values list")
    values = [float(v) for v in values]
    threads = max(1, int(os.environ.get("OBSMEAS_THREADS", "1")))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda v: _sweep_worker(config, axis, v), values))
    else:
        rows = [_sweep_worker(config, axis, v) for v in values]
    keys = sorted({k for row in rows for k in row})
    monotone = None
    if len(rows) > 1:
        series_key = [k for k in keys if k != "axis_value"][0]
        series = [row[series_key] for row in rows]
        if all(a <= b + 1e-12 for a, b in zip(series, series[1:])):
            monotone = f"{series_key} nondecreasing"
        elif all(a >= b - 1e-12 for a, b in zip(series, series[1:])):
            monotone = f"{series_key} nonincreasing"
        else:
            monotone = f"{series_key} not monotone"
    _write_csv(
        Path(config.out_dir) / "sweep.csv",
        keys,
        [[row.get(k, "") for k in keys] for row in rows],
        footer_comment=f"monotonicity: {monotone}" if monotone else None,
    )
    body = {"axis": axis, "values": values, "rows": rows, "monotonicity": monotone, "verified": True}
    return body, True


_DISPATCH = {
    "gramian": _cmd_gramian,
    "obs-l2": _cmd_obs_l2,
    "fit-interval": _cmd_fit_interval,
    "certify-h": _cmd_certify_h,
    "interp": _cmd_interp,
    "thm1": _cmd_thm1,
    "thm2": _cmd_thm2,
    "telescope": _cmd_telescope,
    "lemma21": _cmd_lemma21,
    "lemma22": _cmd_lemma22,
    "tp-solve": _cmd_tp_solve,
    "bangbang": _cmd_bangbang,
    "sweep": _cmd_sweep,
}


def run(config: RunConfig) -> int:
    """Execute one command; write artifacts; return the exit status."""
    try:
        body, verified = _DISPATCH[config.command](config)
    except (ValueError, FileNotFoundError, KeyError, UnobservableError,
            DataIntegrityError, ConvergenceError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    payload = _report_payload(config, body)
    _write_json(Path(config.out_dir) / "report.json", payload)
    if not verified:
        print("violated: see report.json for the witness", file=sys.stderr)
        return 2
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_seed(text: str) -> int:
    return int(text, 16)


def _float_list(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="obsmeas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--model", default="scalar", help="preset name or model/problem JSON path")
        p.add_argument("--set", dest="set_path", default=None, help="time-set JSON path")
        p.add_argument("--out", dest="out_dir", default="obsmeas-out")
        p.add_argument("--seed", type=_parse_seed, default=obs.SUITE_SEED, help="hex seed")
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--T", type=float, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--d", type=float, default=None)
        p.add_argument("--k", type=float, default=None)
        p.add_argument("--M", type=float, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--norm-B", dest="norm_B", type=float, default=None)
        p.add_argument("--bound-M", dest="bound_M", type=float, default=None)
        p.add_argument("--time-tol", dest="time_tol", type=float, default=None)
        p.add_argument("--bang-tol", dest="bang_tol", type=float, default=None)
        p.add_argument("--beta-max", dest="beta_max", type=int, default=None)
        p.add_argument("--L-grid", dest="L_grid", type=_float_list, default=None)
        p.add_argument("--times", type=_float_list, default=None)
        p.add_argument("--axis", default=None)
        p.add_argument("--values", type=_float_list, default=None)
    return parser


def config_from_args(args) -> RunConfig:
    options = {
        key: value
        for key, value in vars(args).items()
        if key not in {"command", "model", "set_path", "out_dir", "seed", "tol"}
        and value is not None
    }
    return RunConfig(
        command=args.command,
        model=args.model,
        set_path=args.set_path,
        out_dir=args.out_dir,
        seed=args.seed,
        tol=args.tol,
        options=options,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
