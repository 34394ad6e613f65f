"""Eulerian BDF-r time loop on the moving discrete domain.

Per step: discretize the level set, build the deformation and the active
sets, transfer the stored history onto the new mesh, assemble, solve and
measure errors. Stored fields always live on the newest deformation.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import assembly as asm
from .fespace import FEField, ScalarSpace, interpolate
from .isoparam import MeshDeformation, build_deformation, deformation_report
from .levelset_geom import ActiveSlice, LevelSetSlice, active_sets, discretize_levelset, verify_path_assumption
from .mesh import BackgroundMesh
from .problems import Problem
from .solver import DIRECT, solve
from .transfer import project_chain

log = logging.getLogger(__name__)

INTERPOLATE, BOOTSTRAP = "INTERPOLATE", "BOOTSTRAP"


class StepError(RuntimeError):
    pass


@dataclass
class StepperOptions:
    k: int = 2
    q: int = 2
    r: int = 2
    c_gamma: float = 0.1
    delta_safety: float = 1.1
    form: str = asm.EXPERIMENT
    plus_layers: bool = True
    inset_only: bool = True
    startup: str = INTERPOLATE
    solver: str = DIRECT
    c_lambda: float = 0.5
    refuse_small_dt: bool = True     # h^4 / (nu dt) > 1 aborts instead of warning
    degree: int | None = None
    k_override: int | None = None
    track_energy: bool = False
    repair_inversions: bool = True   # damp the deformation on inverted elements instead of aborting


@dataclass
class Geometry:
    t: float
    slice: LevelSetSlice
    theta: MeshDeformation
    active: ActiveSlice
    K: int
    M: int


@dataclass
class TimeStepperState:
    n: int
    t: float
    history: list                       # FEFields on the newest deformation, newest first
    geometry: Geometry
    l2h1_sq: float = 0.0
    linf_l2: float = 0.0
    energy: list = field(default_factory=list)
    log_rows: list = field(default_factory=list)
    dissipation: float = 0.0


LOG_COLUMNS = ["n", "t", "dofs", "K", "gamma", "theta_max", "l2_error", "h1_error", "residual",
               "class_changes", "gp_fallback", "repairs"]


class Stepper:
    def __init__(self, problem: Problem, mesh: BackgroundMesh, dt: float, n_steps: int,
                 options: StepperOptions | None = None):
        self.problem = problem
        self.mesh = mesh
        self.dt = float(dt)
        self.N = int(n_steps)
        self.opt = opt = options or StepperOptions()
        if opt.startup not in (INTERPOLATE, BOOTSTRAP):
            raise ValueError(f"unknown startup policy {opt.startup!r}")
        if opt.startup == BOOTSTRAP and opt.r == 3 and self.N < 3:
            raise ValueError("too few steps")
        self.space = ScalarSpace(mesh, opt.k)
        self.space_q = ScalarSpace(mesh, opt.q)

        nodes = self.space.dof_coordinates()
        times = np.linspace(0.0, self.dt * self.N, min(self.N, 64) + 1)
        self.w_sup = problem.velocity_sup(nodes, times)
        self.divw_sup = problem.div_sup(nodes, times)
        self.delta = opt.delta_safety * self.dt * self.w_sup
        self.h = asm.default_penalty_h(mesh)
        self.params = asm.SchemeParams(
            nu=problem.nu, velocity=problem.velocity, div_velocity=problem.div_velocity,
            source=problem.source, r=opt.r, delta=self.delta, c_gamma=opt.c_gamma, form=opt.form,
            degree=opt.degree, k_override=opt.k_override)
        self.params.check_delta(self.dt, self.w_sup)
        self.xi = self.params.check_timestep(self.dt, self.w_sup, self.divw_sup)
        ratio = self.h ** 4 / (problem.nu * self.dt)
        if ratio > 1:
            msg = f"h^4/(nu dt) = {ratio:.3g} > 1: time step too small for the mesh"
            if opt.refuse_small_dt:
                raise ValueError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        self._geom: dict = {}

    # ------------------------------------------------------------ geometry
    def geometry(self, t: float, n: int = 0) -> Geometry:
        key = round(t / self.dt * 4)        # substeps of BOOTSTRAP use quarter steps
        if key in self._geom:
            return self._geom[key]
        sl = discretize_levelset(self.problem.levelset, t, self.opt.q, self.mesh, self.space_q)
        theta = build_deformation(sl, self.mesh, self.opt.c_lambda, 2 * self.opt.q + 2,
                                  repair=self.opt.repair_inversions)
        with warnings.catch_warnings():
            # an active set reaching the background boundary is expected for large time steps
            warnings.simplefilter("ignore")
            act = active_sets(sl, self.delta, self.opt.r, self.mesh, self.space, n, self.opt.plus_layers)
        K, M = verify_path_assumption(act, sl, self.mesh)
        g = Geometry(t, sl, theta, act, K, M)
        self._geom = {k: v for k, v in self._geom.items() if k >= key - 4 * (self.opt.r + 1)}
        self._geom[key] = g
        return g

    def _check_inclusion(self, prev: Geometry, new: Geometry):
        vals = new.slice.phi_lin[self.mesh.triangles]
        touching = vals.min(axis=1) < 0
        if np.any(touching & ~prev.active.active):
            raise StepError("extension too small, increase delta or reduce dt "
                            f"(step at t={new.t:g})")

    # ------------------------------------------------------------ startup
    def _initial(self, geo: Geometry) -> FEField:
        u = interpolate(self.space, self.problem.exact, geo.theta, geo.t)
        return u.restrict(geo.active.active_dofs)

    def startup(self) -> TimeStepperState:
        r = self.opt.r
        n0 = min(r, self.N + 1)
        state = None
        if self.opt.startup == INTERPOLATE or r == 1:
            history: list = []
            for j in range(n0):
                geo = self.geometry(j * self.dt, j)
                if history:
                    self._check_inclusion(state.geometry, geo)
                    history = project_chain(history, geo.theta, geo.active, self.opt.inset_only)
                history = [self._initial(geo)] + history
                if state is None:
                    state = TimeStepperState(j, geo.t, history, geo)
                else:
                    state.n, state.t, state.history, state.geometry = j, geo.t, history, geo
                if j > 0:
                    self._record(state, history[0], geo, None, 0.0, None)
            return state
        # BDF1 with quarter steps fills the remaining history levels
        geo = self.geometry(0.0, 0)
        u = self._initial(geo)
        state = TimeStepperState(0, 0.0, [u], geo)
        passengers: list = [u]
        sub = self.dt / 4
        bdf1 = asm.SchemeParams(**{**self.params.__dict__, "r": 1})
        for s in range(1, 4 * (n0 - 1) + 1):
            t = s * sub
            new = self.geometry(t, s)
            self._check_inclusion(state.geometry, new)
            moved = project_chain(passengers, new.theta, new.active, self.opt.inset_only)
            u_prev = moved[0]
            gamma_K = new.K
            sys = asm.assemble_step_system(self.space, new.theta, new.slice, new.active, [u_prev],
                                           bdf1, sub, t, gamma_K)
            x, res = solve(sys, self.opt.solver)
            u = FEField(self.space, sys.to_global(x, self.space.n_dofs), new.theta)
            passengers = [u] + moved[1:] if s % 4 else [u] + moved
            state.geometry, state.t = new, t
            if s % 4 == 0:
                state.n = s // 4
                self._record(state, u, new, sys, res, None)
        state.history = passengers[:r]
        return state

    # ------------------------------------------------------------ time loop
    def advance(self, state: TimeStepperState) -> TimeStepperState:
        n = state.n + 1
        if n > self.N:
            raise StepError("no steps left")
        t = n * self.dt
        try:
            geo = self.geometry(t, n)
            self._check_inclusion(state.geometry, geo)
            report = deformation_report(state.geometry.theta, geo.theta)
            projected = project_chain(state.history, geo.theta, geo.active, self.opt.inset_only)
            mats = asm.assemble_step_matrices(self.space, geo.theta, geo.slice, geo.active,
                                              self.params, t, geo.K)
            sys = asm.assemble_step_system(self.space, geo.theta, geo.slice, geo.active, projected,
                                           self.params, self.dt, t, geo.K, mats)
            x, res = solve(sys, self.opt.solver)
        except Exception as exc:
            raise StepError(f"step {n} (t={t:g}) failed: {exc}") from exc
        u = FEField(self.space, sys.to_global(x, self.space.n_dofs), geo.theta)
        new_state = state
        new_state.history = ([u] + projected)[:self.opt.r]
        new_state.n, new_state.t, new_state.geometry = n, t, geo
        if self.opt.track_energy:
            self._energy(new_state, u, projected, mats)
        self._record(new_state, u, geo, sys, res, report["n_changed"])
        new_state.log_rows[-1]["gp_fallback"] = mats.stats.get("gp_fallback", 0)
        return new_state

    def _energy(self, state, u, projected, mats):
        M = mats.mass
        c = u.coeffs
        if self.opt.r >= 2:
            level = asm.tuple_norm_sq(M, c, projected[0].coeffs)
        else:
            level = float(c @ (M @ c))
        state.dissipation += self.dt * (self.problem.nu * float(c @ (mats.stiffness @ c))
                                        + 2 * mats.gamma * float(c @ (mats.ghost @ c)))
        state.energy.append(level + state.dissipation)

    def _record(self, state, u, geo, sys, res, changes):
        l2 = h1 = float("nan")
        if self.problem.manufactured and self.problem.exact is not None:
            l2, h1 = asm.error_norms(u, self.problem.exact, self.problem.exact_grad, geo.theta,
                                     geo.slice, geo.active, geo.t, self.params.volume_degree(self.opt.k))
            state.l2h1_sq += self.dt * h1 ** 2
            state.linf_l2 = max(state.linf_l2, l2)
        state.log_rows.append({
            "n": state.n, "t": geo.t, "dofs": len(geo.active.active_dofs), "K": geo.K,
            "gamma": asm.gamma_weight(self.params, geo.K),
            "theta_max": float(np.linalg.norm(geo.theta.displacement, axis=1).max()),
            "l2_error": l2, "h1_error": h1, "residual": res,
            "class_changes": changes if changes is not None else 0,
            "gp_fallback": 0,
            "repairs": geo.theta.info.get("repairs", 0),
        })

    def run(self) -> TimeStepperState:
        state = self.startup()
        while state.n < self.N:
            state = self.advance(state)
        return state


def run_problem(problem: Problem, mesh: BackgroundMesh, dt: float, n_steps: int,
                options: StepperOptions | None = None) -> dict:
    """Full run; returns the space-time error norms and the final state."""
    stepper = Stepper(problem, mesh, dt, n_steps, options)
    state = stepper.run()
    return {
        "l2_h1": math.sqrt(state.l2h1_sq),
        "linf_l2": state.linf_l2,
        "state": state,
        "stepper": stepper,
    }
