"""Convergence study and geometry diagnostics built on the stepper."""
from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig
from .fespace import ScalarSpace
from .isoparam import build_deformation
from .levelset_geom import discretize_levelset
from .mesh import build_structured
from .problems import check_neumann, check_source, circle_static, get_problem
from .cutquad import interface_points, simplex_rule, volume_points
from .stepper import LOG_COLUMNS, StepperOptions, run_problem
from .vtk import export_state

log = logging.getLogger(__name__)


def mesh_for(config: RunConfig, lx: int, bounds=(-1.0, -1.0, 1.0, 1.0)):
    h = config.h0 * 2.0 ** -lx
    xmin, ymin, xmax, ymax = bounds
    nx = max(1, int(round((xmax - xmin) / h)))
    ny = max(1, int(round((ymax - ymin) / h)))
    return build_structured(xmin, ymin, xmax, ymax, nx, ny)


def stepper_options(config: RunConfig) -> StepperOptions:
    return StepperOptions(
        k=config.k, q=config.q, r=config.r, c_gamma=config.c_gamma,
        delta_safety=config.delta_safety, form=config.form,
        plus_layers=not config.skip_plus_layers, inset_only=config.oswald_inset_only,
        startup=config.startup, solver=config.solver, c_lambda=config.c_lambda,
        refuse_small_dt=config.refuse_small_dt, degree=config.quad_degree,
        k_override=config.k_override, repair_inversions=config.repair_inversions)


def run_cell(config: RunConfig, lx: int, lt: int, log_path=None, vtk_path=None) -> dict:
    """One (Lx, Lt) run; failures are reported in the result instead of raised."""
    t0 = time.perf_counter()
    problem = get_problem(config.name, config.nu)
    problem.T = config.T
    out = {"lx": lx, "lt": lt, "ok": False, "l2_h1": math.nan, "linf_l2": math.nan, "error": ""}
    try:
        mesh = mesh_for(config, lx, problem.bounds)
        dt = config.dt0 * 2.0 ** -lt
        n_steps = int(round(config.T / dt))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = run_problem(problem, mesh, dt, n_steps, stepper_options(config))
        state = res["state"]
        out.update(ok=True, l2_h1=res["l2_h1"], linf_l2=res["linf_l2"],
                   K_max=max((row["K"] for row in state.log_rows), default=0),
                   gp_fallback=sum(row.get("gp_fallback", 0) for row in state.log_rows),
                   repairs=sum(row.get("repairs", 0) for row in state.log_rows))
        if log_path is not None:
            with open(log_path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
                writer.writeheader()
                for row in state.log_rows:
                    writer.writerow({k: row.get(k, "") for k in LOG_COLUMNS})
        if vtk_path is not None:
            geo = state.geometry
            export_state(vtk_path, mesh, state.history[0], geo.slice.phi_lin, geo.active.active,
                         geo.active.elem_class)
    except Exception as exc:  # a failed cell must not stop the study
        out["error"] = f"{type(exc).__name__}: {exc}"
        log.error("cell Lx=%d Lt=%d failed: %s", lx, lt, out["error"])
    out["seconds"] = time.perf_counter() - t0
    return out


def _cell_job(args):
    return run_cell(*args)


def lsq_eoc(errors) -> float:
    """Least-squares slope of -log2(error) over consecutive refinement levels."""
    e = np.asarray(errors, dtype=float)
    if len(e) < 2 or np.any(~np.isfinite(e)) or np.any(e <= 0):
        return math.nan
    levels = np.arange(len(e))
    return float(-np.polyfit(levels, np.log2(e), 1)[0])


def eoc_table(matrix: np.ndarray, axis: int) -> np.ndarray:
    """log2 ratios of adjacent entries along an axis."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if axis == 0:
            return np.log2(matrix[:-1] / matrix[1:])
        return np.log2(matrix[:, :-1] / matrix[:, 1:])


def run_convergence(config: RunConfig, workers: int = 1, out_dir=None) -> dict:
    problem = get_problem(config.name, config.nu)
    if problem.manufactured:
        check_source(problem)
        check_neumann(problem)
    lxs = list(range(config.lx_min, config.lx_max + 1))
    lts = list(range(config.lt_min, config.lt_max + 1))
    out_dir = Path(out_dir or config.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(config, lx, lt, out_dir / f"log_Lx{lx}_Lt{lt}.csv",
             out_dir / f"state_Lx{lx}_Lt{lt}.vtk" if config.vtk else None)
            for lx in lxs for lt in lts]
    # the most expensive cells first keeps a process pool busy
    jobs.sort(key=lambda j: -(4 ** j[1] * 2 ** j[2]))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_job, jobs))
    else:
        cells = [_cell_job(j) for j in jobs]
    by_key = {(c["lx"], c["lt"]): c for c in cells}
    tables = {}
    for norm in ("linf_l2", "l2_h1"):
        mat = np.array([[by_key[(lx, lt)][norm] for lt in lts] for lx in lxs])
        tables[norm] = mat
        _write_matrix(out_dir / f"errors_{norm}.csv", mat, lxs, lts, "Lx", "Lt")
        if len(lxs) > 1:
            _write_matrix(out_dir / f"eoc_space_{norm}.csv", eoc_table(mat, 0),
                          [f"{a}-{b}" for a, b in zip(lxs, lxs[1:])], lts, "Lx", "Lt")
        if len(lts) > 1:
            _write_matrix(out_dir / f"eoc_time_{norm}.csv", eoc_table(mat, 1),
                          lxs, [f"{a}-{b}" for a, b in zip(lts, lts[1:])], "Lx", "Lt")
    with open(out_dir / "cells.csv", "w", newline="") as fh:
        cols = ["lx", "lt", "ok", "l2_h1", "linf_l2", "K_max", "gp_fallback", "repairs", "seconds", "error"]
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for c in sorted(cells, key=lambda c: (c["lx"], c["lt"])):
            writer.writerow({k: c.get(k, "") for k in cols})
    summary = {"cells": cells, "tables": tables, "lxs": lxs, "lts": lts,
               "all_ok": all(c["ok"] for c in cells)}
    summary.update(summarize_rates(tables))
    return summary


def summarize_rates(tables: dict) -> dict:
    """Spatial rates on the finest time column and temporal rates on the finest space row,
    fitted over the last two increments."""
    out = {}
    for norm, mat in tables.items():
        col = mat[-3:, -1] if mat.shape[0] >= 3 else mat[:, -1]
        row = mat[-1, -3:] if mat.shape[1] >= 3 else mat[-1, :]
        out[f"eoc_space_{norm}"] = lsq_eoc(col)
        out[f"eoc_time_{norm}"] = lsq_eoc(row)
    return out


def _write_matrix(path, mat, rows, cols, rname, cname):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{rname}\\{cname}"] + [str(c) for c in cols])
        for r, vals in zip(rows, mat):
            w.writerow([str(r)] + [f"{v:.6e}" for v in vals])


# ------------------------------------------------------------------ geometry

def geometry_check(q_values=(2, 3), levels=(2, 3, 4, 5), h0: float = 0.25, radius: float = 0.5,
                   center=(0.0, 0.0)) -> dict:
    """Interface level-set residual and deformation bounds on a static circle."""
    problem = circle_static(radius=radius, center=center)
    rows = []
    for q in q_values:
        for lev in levels:
            h = h0 * 2.0 ** -lev
            n = int(round(2.0 / h))
            mesh = build_structured(-1, -1, 1, 1, n, n)
            space = ScalarSpace(mesh, q)
            sl = discretize_levelset(problem.levelset, 0.0, q, mesh, space)
            theta = build_deformation(sl, mesh)
            elems = np.arange(mesh.n_elements)
            ip = interface_points(theta, mesh, sl.phi_lin, elems, 2 * q + 2)
            vp = volume_points(theta, mesh, sl.phi_lin, elems, 2 * q + 2)
            residual = float(np.abs(problem.levelset(ip.x[:, 0], ip.x[:, 1], 0.0)).max())
            disp = float(np.linalg.norm(theta.displacement, axis=1).max())
            rule = simplex_rule(2 * q)
            sup = np.flatnonzero(theta.support)
            E = np.repeat(sup, len(rule.weights))
            _, J = theta.map_points(E, np.tile(rule.points, (len(sup), 1)))
            _, A = mesh.affine()
            DT = J @ np.linalg.inv(A[E]) - np.eye(2)
            rows.append({
                "q": q, "level": lev, "h": h, "residual": residual,
                "area_error": abs(vp.w.sum() - math.pi * radius ** 2),
                "length_error": abs(ip.w.sum() - 2 * math.pi * radius),
                "theta_over_h2": disp / h ** 2,
                "dtheta_over_h": float(np.abs(DT).max()) / h if len(DT) else 0.0,
            })
    rates = {}
    for q in q_values:
        res = [r["residual"] for r in rows if r["q"] == q]
        rates[q] = lsq_eoc(res[-4:])
    return {"rows": rows, "rates": rates}
