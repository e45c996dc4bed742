"""Implicit-Euler time stepping with Newton iterations.

Each step: (1) evaluate hydrodynamic loads explicitly from the committed
velocities, (2) advance the motor natural twist by the scheduled rate,
(3) Newton-solve the backward-Euler equations with contact forces from the
current contact set, (4) after convergence re-detect contact; newly
penetrating pairs add penalty forces and trigger a re-solve (bounded outer
loop), (5) commit positions, velocities, and frames.

The Newton system is banded (half-bandwidth 10) and is solved with a banded
LU; the hydrodynamic force Jacobian is dropped (forward-Euler coupling), the
elastic part is the exact force Jacobian so convergence is quadratic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import contact, dofs, elasticity, frames as frames_mod, hydrodynamics

log = logging.getLogger(__name__)

HALF_BW = 10
MAX_NEWTON_ITER = 50
MAX_CONTACT_RESOLVES = 10
MAX_DT_HALVINGS = 4
DT_RECOVERY_STEPS = 100


class NewtonError(RuntimeError):
    """Newton iterations failed to converge."""


class StepError(RuntimeError):
    """A time step could not be completed (after dt halvings)."""


@dataclass
class ActuationSchedule:
    """Motor rate ramp: omega(t) = omega_target * min(t / t_ramp, 1)."""

    omega_target: float            # rad/s relative flagellum-head rate
    t_ramp: float = 30.0
    signs: tuple = (1.0, 1.0)      # equal signs = "run" (co-rotation)
    mode: str = "natural_twist"    # or "constrained_theta"

    def rate(self, t: float) -> float:
        if t < 0.0:
            return 0.0
        if self.t_ramp <= 0.0 or t >= self.t_ramp:
            return self.omega_target
        return self.omega_target * (t / self.t_ramp)


@dataclass
class SimState:
    t: float
    q: np.ndarray
    qdot: np.ndarray
    frames: frames_mod.FrameSet
    motor_twist: np.ndarray            # accumulated natural twist per motor
    f_head: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque_head: float = 0.0
    contact_count: int = 0
    max_penetration: float = 0.0
    newton_iters: int = 0

    def copy_shallow(self):
        return SimState(self.t, self.q.copy(), self.qdot.copy(),
                        self.frames.copy(), self.motor_twist.copy(),
                        self.f_head.copy(), self.torque_head,
                        self.contact_count, self.max_penetration,
                        self.newton_iters)


def initial_state(topo, q0) -> SimState:
    fs = frames_mod.init_reference_frames(q0, topo.n_nodes)
    fs.ref_twist = frames_mod.reference_twist(fs)
    frames_mod.material_frames(fs, q0[3::4])
    return SimState(t=0.0, q=q0.copy(), qdot=np.zeros_like(q0), frames=fs,
                    motor_twist=np.zeros(len(topo.actuation_nodes)))


def residual(topo, q_new, q_old, qdot_old, f_ext, dt, fs) -> np.ndarray:
    """Backward-Euler force balance, Newton's second law per DOF."""
    inertia = topo.mass * (q_new - q_old - dt * qdot_old) / dt**2
    grad = -elasticity.elastic_force(topo, q_new, fs)
    return inertia + grad - f_ext


def _frames_at(topo, q, frames_committed):
    fs = frames_mod.time_update_frames(frames_committed, q, topo.n_nodes)
    fs.ref_twist = frames_mod.reference_twist(fs, guess=frames_committed.ref_twist)
    frames_mod.material_frames(fs, q[3::4])
    return fs


def newton_solve(topo, q_guess, q_old, qdot_old, f_ext, dt, frames_committed,
                 tol, fixed_dofs=None, max_iter=MAX_NEWTON_ITER, history=None):
    """Solve the implicit step equations; returns (q_new, frames_new, iters).

    Frames and reference twist are recomputed from the committed state at
    every iterate. fixed_dofs (index array) are held at their q_guess values.
    history, when given, collects the 1-norm residual at every iterate.
    """
    n = topo.n_dof
    q = q_guess.copy()
    ab = np.empty((2 * HALF_BW + 1, n))
    inv_dt2 = 1.0 / dt**2

    for it in range(1, max_iter + 1):
        fs = _frames_at(topo, q, frames_committed)
        ab[:, :] = 0.0
        grad = elasticity.gradient_and_banded_hessian(topo, q, fs, ab, HALF_BW)
        f = topo.mass * (q - q_old - dt * qdot_old) * inv_dt2 + grad - f_ext
        ab[HALF_BW, :] += topo.mass * inv_dt2

        if fixed_dofs is not None and fixed_dofs.size:
            f[fixed_dofs] = 0.0
            for idx in fixed_dofs:
                lo = max(idx - HALF_BW, 0)
                hi = min(idx + HALF_BW, n - 1)
                for j in range(lo, hi + 1):
                    ab[HALF_BW + idx - j, j] = 1.0 if j == idx else 0.0

        err = np.abs(f).sum()
        if history is not None:
            history.append(err)
        if not np.isfinite(err):
            raise NewtonError(f"non-finite residual at iteration {it}")
        if err < tol:
            return q, fs, it
        dq = solve_banded((HALF_BW, HALF_BW), ab, f,
                          overwrite_ab=True, check_finite=False)
        q = q - dq
        if fixed_dofs is not None and fixed_dofs.size:
            q[fixed_dofs] = q_guess[fixed_dofs]

    if history is not None:
        return q, fs, max_iter
    raise NewtonError(f"no convergence after {max_iter} iterations "
                      f"(residual {err:.3e}, tol {tol:.3e})")


def apply_actuation(topo, schedule: ActuationSchedule, t, dt, motor_twist):
    """Advance the natural twist at the motor nodes by omega(t) * dt."""
    rate = schedule.rate(t)
    for i, node in enumerate(topo.actuation_nodes):
        d_tw = schedule.signs[i] * rate * dt
        topo.tau_bar[node - 1] += d_tw
        motor_twist[i] += d_tw
    return rate


class Simulation:
    """Owns one robot instance and marches it through time."""

    def __init__(self, topo, params, schedule: ActuationSchedule, q0=None, *,
                 contact_stiffness=None, enable_hydro=True, enable_contact=True,
                 newton_tol_factor=1.0):
        self.topo = topo
        self.params = params
        self.schedule = schedule
        if q0 is None:
            raise ValueError("q0 required")
        self.state = initial_state(topo, q0)
        self.enable_hydro = enable_hydro
        self.enable_contact = enable_contact
        if contact_stiffness is None:
            contact_stiffness = 0.01 * params.EA / params.rod_radius
        self.contact_stiffness = contact_stiffness
        self.newton_tol = 1.0e-6 * params.EA * params.dt * newton_tol_factor
        self.dt = params.dt
        self._dt_halvings = 0
        self._steps_since_halving = 0
        self._theta_fixed = None
        if schedule.mode == "constrained_theta":
            shafts = [topo.motor_edges[0]]
            if len(topo.motor_edges) > 3:
                shafts.append(topo.motor_edges[3])
            self._theta_fixed = np.array([4 * e + 3 for e in shafts])

    # -- per-step force assembly -------------------------------------------

    def _external_forces(self):
        topo, p, st = self.topo, self.params, self.state
        f_ext = np.zeros(topo.n_dof)
        if self.enable_hydro:
            f_h = hydrodynamics.drag_forces(topo, st.q, st.qdot,
                                            p.epsilon_reg, p.viscosity)
            f_ext += f_h
            v_head = np.array([
                st.qdot[4 * topo.head_nodes + 0].mean(),
                st.qdot[4 * topo.head_nodes + 1].mean(),
                st.qdot[4 * topo.head_nodes + 2].mean(),
            ])
            w_head = float(np.mean([st.qdot[4 * e + 3] for e in topo.head_edges]))
            drag = hydrodynamics.head_drag(v_head, w_head, p)
            hydrodynamics.spread_head_drag(topo, drag, out=f_ext)
            st.f_head = drag.force
            st.torque_head = drag.torque
        else:
            st.f_head = np.zeros(3)
            st.torque_head = 0.0
        return f_ext

    def step(self):
        """One time step of the full algorithm; commits the new state."""
        topo, p, st = self.topo, self.params, self.state
        dt = self.dt

        f_ext = self._external_forces()
        apply_actuation(topo, self.schedule, st.t, dt, st.motor_twist)

        fixed = self._theta_fixed
        q_guess = st.q.copy()
        if fixed is not None:
            rate = self.schedule.rate(st.t)
            # shaft A twist runs opposite the chain twist measure; shaft B with it
            q_guess[fixed[0]] -= self.schedule.signs[0] * rate * dt
            if fixed.size > 1:
                q_guess[fixed[1]] += self.schedule.signs[1] * rate * dt

        f_c = np.zeros(topo.n_dof)
        known_pairs = set()
        if self.enable_contact:
            f_c, pairs = contact.contact_forces(topo, st.q, p.rod_radius,
                                                self.contact_stiffness)
            known_pairs = {(pr.edge_l, pr.edge_m) for pr in pairs}

        total_iters = 0
        for resolve in range(MAX_CONTACT_RESOLVES + 1):
            q_new, fs_new, iters = newton_solve(
                topo, q_guess, st.q, st.qdot, f_ext + f_c, dt, st.frames,
                self.newton_tol, fixed_dofs=fixed)
            total_iters += iters
            if not self.enable_contact:
                pairs_after = []
                break
            pairs_after = contact.detect_all(topo, q_new, p.rod_radius)
            new_keys = {(pr.edge_l, pr.edge_m) for pr in pairs_after}
            if new_keys <= known_pairs:
                break
            if resolve == MAX_CONTACT_RESOLVES:
                raise StepError(
                    f"contact loop exceeded {MAX_CONTACT_RESOLVES} re-solves at "
                    f"t={st.t:.6f}")
            known_pairs |= new_keys
            f_c = np.zeros(topo.n_dof)
            for pr in pairs_after:
                fp = contact.penalty_response(pr, self.contact_stiffness)
                for node, fi in ((pr.edge_l, fp[0]), (pr.edge_l + 1, fp[1]),
                                 (pr.edge_m, fp[2]), (pr.edge_m + 1, fp[3])):
                    f_c[4 * node:4 * node + 3] += fi

        st.qdot = (q_new - st.q) / dt
        st.q = q_new
        st.frames = fs_new
        st.t += dt
        st.newton_iters = total_iters
        st.contact_count = len(pairs_after)
        st.max_penetration = max((pr.penetration for pr in pairs_after),
                                 default=0.0)
        return st

    def step_with_rejection(self):
        """step() with local dt halving on Newton failure."""
        saved = self.state.copy_shallow()
        saved_tau = self.topo.tau_bar.copy()
        while True:
            try:
                out = self.step()
                self._steps_since_halving += 1
                if self._dt_halvings and self._steps_since_halving >= DT_RECOVERY_STEPS:
                    self._dt_halvings -= 1
                    self.dt *= 2.0
                    self._steps_since_halving = 0
                    log.info("dt restored to %.3e at t=%.4f", self.dt, self.state.t)
                return out
            except NewtonError as err:
                self.state = saved.copy_shallow()
                self.topo.tau_bar[:] = saved_tau
                if self._dt_halvings >= MAX_DT_HALVINGS:
                    raise StepError(
                        f"step rejected {MAX_DT_HALVINGS} times at t={saved.t:.6f}: "
                        f"{err}") from err
                self._dt_halvings += 1
                self._steps_since_halving = 0
                self.dt *= 0.5
                log.warning("Newton failed (%s); dt halved to %.3e", err, self.dt)

    def run_until(self, t_end, callback=None, callback_interval=None):
        """March to t_end; invoke callback at the output cadence."""
        next_cb = self.state.t
        while self.state.t < t_end - 1e-12:
            if callback is not None and self.state.t >= next_cb - 1e-12:
                callback(self.state)
                next_cb = self.state.t + callback_interval
            self.step_with_rejection()
        if callback is not None:
            callback(self.state)
        return self.state
