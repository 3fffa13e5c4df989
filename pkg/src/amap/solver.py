"""Relaxation of the spring-mass system: RK4 integration, settling
detection, whole-model imagination, and placement of new point-masses."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .model import (
    FRICTION_COEFF,
    PointMass,
    SpringSpec,
    SpringTable,
    SystemState,
    _accumulate_forces,
    _kernel_args,
    _potential_energy,
    as_table,
    fixed_u8,
    spring_force_at,
    spring_potential,
)


class NonFiniteState(ValueError):
    """The integration diverged; the run is aborted."""


@dataclass
class SolverConfig:
    """Integration step, settling thresholds, and placement parameters."""

    dt: float = 0.02
    accel_threshold: float = 0.1
    vel_threshold: float = 0.1
    max_sim_time: float = 300.0
    placement_descent_steps: int = 200
    placement_learning_rate: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.accel_threshold <= 0 or self.vel_threshold <= 0:
            raise ValueError("settling thresholds must be positive")
        if self.max_sim_time < self.dt:
            raise ValueError("max_sim_time must cover at least one step")


@dataclass
class ImaginationResult:
    """Settled (or timed-out) system plus the relaxation diagnostics."""

    state: SystemState
    settled: bool
    steps: int
    sim_time: float
    energy: np.ndarray  # rows of (t, kinetic, potential)


@njit(cache=True)
def _rk4_arrays(pos, vel, fixed,
                d_a, d_b, d_k, d_rn,
                a_a, a_b, a_k, a_tn,
                r_a, r_b, r_c, r_k, r_tn,
                cx, cy, has_centre, mu, h, f1):
    m = pos.shape[0]
    f2 = np.zeros((m, 2))
    f3 = np.zeros((m, 2))
    f4 = np.zeros((m, 2))
    p2 = pos + (0.5 * h) * vel
    v2 = vel + (0.5 * h) * f1
    _accumulate_forces(p2, v2, fixed,
                       d_a, d_b, d_k, d_rn, a_a, a_b, a_k, a_tn,
                       r_a, r_b, r_c, r_k, r_tn, cx, cy, has_centre, mu, f2)
    p3 = pos + (0.5 * h) * v2
    v3 = vel + (0.5 * h) * f2
    _accumulate_forces(p3, v3, fixed,
                       d_a, d_b, d_k, d_rn, a_a, a_b, a_k, a_tn,
                       r_a, r_b, r_c, r_k, r_tn, cx, cy, has_centre, mu, f3)
    p4 = pos + h * v3
    v4 = vel + h * f3
    _accumulate_forces(p4, v4, fixed,
                       d_a, d_b, d_k, d_rn, a_a, a_b, a_k, a_tn,
                       r_a, r_b, r_c, r_k, r_tn, cx, cy, has_centre, mu, f4)
    new_pos = pos + (h / 6.0) * (vel + 2.0 * v2 + 2.0 * v3 + v4)
    new_vel = vel + (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
    return new_pos, new_vel


@njit(cache=True)
def _imagine_loop(pos, vel, fixed,
                  d_a, d_b, d_k, d_rn,
                  a_a, a_b, a_k, a_tn,
                  r_a, r_b, r_c, r_k, r_tn,
                  cx, cy, has_centre, mu, h, max_steps, la, lv, energies):
    m = pos.shape[0]
    la2 = la * la
    lv2 = lv * lv
    t = 0.0
    f = np.zeros((m, 2))
    for step in range(max_steps + 1):
        _accumulate_forces(pos, vel, fixed,
                           d_a, d_b, d_k, d_rn, a_a, a_b, a_k, a_tn,
                           r_a, r_b, r_c, r_k, r_tn, cx, cy, has_centre, mu, f)
        ke = 0.0
        for i in range(m):
            if not fixed[i]:
                ke += 0.5 * (vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1])
        pe = _potential_energy(pos,
                               d_a, d_b, d_k, d_rn, a_a, a_b, a_k, a_tn,
                               r_a, r_b, r_c, r_k, r_tn)
        energies[step, 0] = t
        energies[step, 1] = ke
        energies[step, 2] = pe
        if not math.isfinite(ke + pe):
            return pos, vel, step, 2, t
        settled_now = True
        for i in range(m):
            if fixed[i]:
                continue
            v2 = vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1]
            a2 = f[i, 0] * f[i, 0] + f[i, 1] * f[i, 1]
            if v2 >= lv2 or a2 >= la2:
                settled_now = False
                break
        if settled_now:
            return pos, vel, step, 1, t
        if step == max_steps:
            return pos, vel, step, 0, t
        pos, vel = _rk4_arrays(pos, vel, fixed,
                               d_a, d_b, d_k, d_rn, a_a, a_b, a_k, a_tn,
                               r_a, r_b, r_c, r_k, r_tn,
                               cx, cy, has_centre, mu, h, f)
        t += h
    return pos, vel, max_steps, 0, t


def _centre_args(centre):
    if centre is None:
        return 0.0, 0.0, False
    return float(centre[0]), float(centre[1]), True


def rk4_step(
    t: float,
    state: SystemState,
    springs,
    centre=None,
    h: float = 0.02,
    friction: float = FRICTION_COEFF,
) -> SystemState:
    """One classical Runge-Kutta step; fixed masses never move."""
    if h <= 0:
        raise ValueError("step size must be positive")
    table = as_table(springs, state.count)
    cx, cy, has_c = _centre_args(centre)
    fixed = fixed_u8(state)
    f1 = np.zeros((state.count, 2))
    _accumulate_forces(state.positions, state.velocities, fixed,
                       *_kernel_args(table), cx, cy, has_c, friction, f1)
    pos, vel = _rk4_arrays(state.positions, state.velocities, fixed,
                           *_kernel_args(table), cx, cy, has_c, friction, h, f1)
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
        raise NonFiniteState("integration step produced non-finite state")
    return state.with_arrays(pos, vel)


def settled(state: SystemState, accelerations: np.ndarray, cfg: SolverConfig) -> bool:
    """True iff every free mass is strictly under both motion thresholds."""
    free = ~state.fixed
    if not np.any(free):
        return True
    speed = np.sqrt(np.sum(state.velocities[free] ** 2, axis=1))
    accel = np.sqrt(np.sum(np.asarray(accelerations)[free] ** 2, axis=1))
    return bool(np.all(speed < cfg.vel_threshold) and np.all(accel < cfg.accel_threshold))


def imagine(
    state: SystemState,
    springs,
    centre=None,
    cfg: SolverConfig | None = None,
) -> ImaginationResult:
    """Integrate until the settling criteria hold or time runs out.

    A timeout is not fatal: the last state is returned with
    settled=False and remains usable.
    """
    cfg = cfg or SolverConfig()
    table = as_table(springs, state.count)
    cx, cy, has_c = _centre_args(centre)
    max_steps = int(math.ceil(cfg.max_sim_time / cfg.dt - 1e-12))
    energies = np.empty((max_steps + 1, 3))
    pos, vel, steps, code, t = _imagine_loop(
        state.positions.copy(), state.velocities.copy(), fixed_u8(state),
        *_kernel_args(table), cx, cy, has_c, FRICTION_COEFF,
        cfg.dt, max_steps, cfg.accel_threshold, cfg.vel_threshold, energies,
    )
    if code == 2:
        raise NonFiniteState(f"imagination diverged after {steps} steps")
    return ImaginationResult(
        state=state.with_arrays(pos, vel),
        settled=code == 1,
        steps=steps,
        sim_time=t,
        energy=energies[: steps + 1].copy(),
    )


def _placement_rng(cfg: SolverConfig, toponym: str) -> np.random.Generator:
    seed = np.random.SeedSequence(
        [cfg.rng_seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(toponym.encode("utf-8"))]
    )
    return np.random.default_rng(seed)


def initial_placement(
    toponym: str,
    attached_springs: Sequence[SpringSpec],
    state: SystemState,
    cfg: SolverConfig,
    placed: np.ndarray | None = None,
) -> np.ndarray:
    """Descend the attached-spring potential to a starting position.

    Springs touching masses that are themselves unplaced are skipped;
    they relax later.  The returned point is the lowest-energy iterate
    seen during the descent.
    """
    i = state.index[toponym]
    if placed is None:
        placed = np.ones(state.count, dtype=bool)
        placed[i] = False
    usable = [
        s for s in attached_springs
        if i in s.endpoints and all(placed[e] for e in s.endpoints if e != i)
    ]
    neighbours = sorted({e for s in usable for e in s.endpoints if e != i})

    rng = _placement_rng(cfg, toponym)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    jitter = 0.1 * np.array([math.cos(angle), math.sin(angle)])
    if neighbours:
        start = state.positions[neighbours].mean(axis=0) + jitter
    elif np.any(placed):
        start = state.positions[placed].mean(axis=0) + jitter
    else:
        start = jitter.copy()

    work = state.positions.copy()

    def energy(p):
        work[i] = p
        return sum(spring_potential(s, work) for s in usable)

    def force(p):
        work[i] = p
        total = np.zeros(2)
        for s in usable:
            forces = spring_force_at(s, work)
            for endpoint, fvec in zip(s.endpoints, forces):
                if endpoint == i:
                    total += fvec
        return total

    x = start.copy()
    best_u = energy(x)
    best = x.copy()
    for _ in range(cfg.placement_descent_steps):
        x = x + cfg.placement_learning_rate * force(x)
        if not np.all(np.isfinite(x)):
            break
        u = energy(x)
        if u < best_u:
            best_u = u
            best = x.copy()
    return best


def add_clauses(
    springs_new: Sequence[SpringSpec],
    state: SystemState,
    cfg: SolverConfig,
    new_masses: Sequence[PointMass] = (),
) -> tuple[SystemState, list[SpringSpec]]:
    """Register and place new point-masses for a batch of new springs.

    New free masses are placed most-constrained first (total attached
    stiffness, ties by name) with zero velocity; fixed masses keep
    their stated coordinates.  Existing masses are never touched.
    Returns the extended state and the list of appended springs.
    """
    out = state.copy()
    first_new = out.count
    for pm in new_masses:
        out.add(PointMass(pm.toponym, pm.x, pm.y, 0.0, 0.0, fixed=pm.fixed))
    for s in springs_new:
        if any(e < 0 or e >= out.count for e in s.endpoints):
            raise IndexError(f"spring endpoints {s.endpoints} unresolvable")

    placed = np.ones(out.count, dtype=bool)
    free_new = []
    for i in range(first_new, out.count):
        if out.fixed[i]:
            continue  # anchors stay where the observation put them
        placed[i] = False
        free_new.append(i)

    totals = {i: 0.0 for i in free_new}
    for s in springs_new:
        for e in s.endpoints:
            if e in totals:
                totals[e] += s.stiffness
    order = sorted(free_new, key=lambda i: (-totals[i], out.names[i]))
    for i in order:
        attached = [s for s in springs_new if i in s.endpoints]
        out.positions[i] = initial_placement(out.names[i], attached, out, cfg, placed)
        out.velocities[i] = 0.0
        placed[i] = True
    return out, list(springs_new)
