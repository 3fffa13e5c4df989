"""Point-mass state and the spring, friction, and expansion forces.

All spring forces are exact negative gradients of quadratic potentials,
so the damped system strictly dissipates energy and every analytic
force can be checked against finite differences of the potential:

    distance        U = K/2 (|d| - r_n)^2       d = B - A
    absolute angle  U = K/2 wrap(dir(A-B) - theta_n)^2
    relative angle  U = K/2 wrap(phi - theta_n)^2,
                    phi = dir(A-B) - dir(C-B)  (counter-clockwise positive)

Angle forces are tangential with magnitude K|dtheta|/|d| and are clamped
to zero below an endpoint separation of EPS to avoid singularities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numba import njit

EPS = 1e-6
FRICTION_COEFF = 0.1
EXPANSION_COEFF = 0.01
OBSERVATION_STIFFNESS = 2.5
TWO_PI = 2.0 * math.pi

DISTANCE = "distance"
ABSOLUTE_ANGLE = "absolute-angle"
RELATIVE_ANGLE = "relative-angle"
SPRING_KINDS = (DISTANCE, ABSOLUTE_ANGLE, RELATIVE_ANGLE)

TEMPLATE = "template"
HIERARCHY = "hierarchy"
OBSERVATION = "observation"
SPRING_ORIGINS = (TEMPLATE, HIERARCHY, OBSERVATION)


class NonFinite(ValueError):
    pass


class UnknownSpringKind(ValueError):
    pass


class DuplicateToponym(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Normalise an angle into (-pi, pi]."""
    if not math.isfinite(a):
        raise NonFinite(f"cannot wrap non-finite angle {a!r}")
    w = (a + math.pi) % TWO_PI - math.pi
    if w == -math.pi:
        w = math.pi
    return w


@dataclass
class PointMass:
    """A toponym's unit point-mass with planar position and velocity."""

    toponym: str
    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    mass: float = 1.0
    fixed: bool = False

    def __post_init__(self):
        if self.mass != 1.0:
            raise ValueError(f"point-masses are unit mass, got {self.mass}")
        for v in (self.x, self.y, self.vx, self.vy):
            if not math.isfinite(v):
                raise NonFinite(f"non-finite state component for {self.toponym!r}")
        if self.fixed and (self.vx != 0.0 or self.vy != 0.0):
            raise ValueError("fixed masses must have zero velocity")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])


class SystemState:
    """Ordered point-mass collection with a toponym -> index bijection."""

    def __init__(self, masses: Iterable[PointMass] = ()):
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.positions = np.zeros((0, 2))
        self.velocities = np.zeros((0, 2))
        self.fixed = np.zeros(0, dtype=bool)
        for m in masses:
            self.add(m)

    @property
    def count(self) -> int:
        return len(self.names)

    def add(self, mass: PointMass) -> int:
        if mass.toponym in self.index:
            raise DuplicateToponym(f"{mass.toponym!r} already registered")
        i = self.count
        self.names.append(mass.toponym)
        self.index[mass.toponym] = i
        self.positions = np.vstack([self.positions, [[mass.x, mass.y]]])
        self.velocities = np.vstack([self.velocities, [[mass.vx, mass.vy]]])
        self.fixed = np.append(self.fixed, mass.fixed)
        return i

    def point(self, toponym: str) -> PointMass:
        i = self.index[toponym]
        return PointMass(
            toponym,
            float(self.positions[i, 0]), float(self.positions[i, 1]),
            float(self.velocities[i, 0]), float(self.velocities[i, 1]),
            fixed=bool(self.fixed[i]),
        )

    @property
    def masses(self) -> list[PointMass]:
        return [self.point(n) for n in self.names]

    def position_of(self, toponym: str) -> np.ndarray:
        return self.positions[self.index[toponym]].copy()

    def copy(self) -> "SystemState":
        out = SystemState()
        out.names = list(self.names)
        out.index = dict(self.index)
        out.positions = self.positions.copy()
        out.velocities = self.velocities.copy()
        out.fixed = self.fixed.copy()
        return out

    def with_arrays(self, positions: np.ndarray, velocities: np.ndarray) -> "SystemState":
        """Same masses, new motion state (arrays are adopted, not copied)."""
        out = SystemState()
        out.names = list(self.names)
        out.index = dict(self.index)
        out.positions = positions
        out.velocities = velocities
        out.fixed = self.fixed.copy()
        return out

    def require_finite(self) -> None:
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise NonFinite("system state diverged to non-finite values")


@dataclass
class SpringSpec:
    """One spring constraint between registered point-mass indices.

    Distance and absolute-angle springs connect (A, B); relative-angle
    springs connect (A, B, C) with B the vertex.  Observation springs
    carry the reserved stiffness 2.5; all template and hierarchy
    springs stay at or below 1.
    """

    kind: str
    endpoints: tuple[int, ...]
    stiffness: float
    natural_length: float | None = None
    natural_angle: float | None = None
    origin: str = TEMPLATE

    def __post_init__(self):
        if self.kind not in SPRING_KINDS:
            raise UnknownSpringKind(f"unknown spring kind {self.kind!r}")
        if self.origin not in SPRING_ORIGINS:
            raise ValueError(f"unknown spring origin {self.origin!r}")
        want = 3 if self.kind == RELATIVE_ANGLE else 2
        if len(self.endpoints) != want:
            raise ValueError(f"{self.kind} spring needs {want} endpoints")
        if len(set(self.endpoints)) != len(self.endpoints):
            raise ValueError("spring endpoints must be distinct")
        if self.stiffness <= 0:
            raise ValueError("stiffness must be positive")
        if self.origin == OBSERVATION:
            if self.stiffness != OBSERVATION_STIFFNESS:
                raise ValueError("observation springs use the reserved stiffness 2.5")
        elif self.stiffness > 1.0:
            raise ValueError("non-observation springs must have stiffness <= 1")
        if self.kind == DISTANCE:
            if self.natural_length is None or self.natural_angle is not None:
                raise ValueError("distance springs take a natural length only")
            if self.natural_length < 0:
                raise ValueError("natural length must be >= 0")
        else:
            if self.natural_angle is None or self.natural_length is not None:
                raise ValueError("angle springs take a natural angle only")
            self.natural_angle = wrap_angle(self.natural_angle)


_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0)


class SpringTable:
    """Springs flattened into per-kind arrays for the numeric kernels."""

    __slots__ = ("n_masses", "d_a", "d_b", "d_k", "d_rn",
                 "a_a", "a_b", "a_k", "a_tn",
                 "r_a", "r_b", "r_c", "r_k", "r_tn")

    def __init__(self, springs: Sequence[SpringSpec], n_masses: int):
        self.n_masses = n_masses
        dist = [s for s in springs if s.kind == DISTANCE]
        absa = [s for s in springs if s.kind == ABSOLUTE_ANGLE]
        rela = [s for s in springs if s.kind == RELATIVE_ANGLE]
        for s in springs:
            if any(i < 0 or i >= n_masses for i in s.endpoints):
                raise IndexError(f"spring endpoints {s.endpoints} outside system of {n_masses}")
        self.d_a = np.array([s.endpoints[0] for s in dist], dtype=np.int64) if dist else _EMPTY_I
        self.d_b = np.array([s.endpoints[1] for s in dist], dtype=np.int64) if dist else _EMPTY_I
        self.d_k = np.array([s.stiffness for s in dist]) if dist else _EMPTY_F
        self.d_rn = np.array([s.natural_length for s in dist]) if dist else _EMPTY_F
        self.a_a = np.array([s.endpoints[0] for s in absa], dtype=np.int64) if absa else _EMPTY_I
        self.a_b = np.array([s.endpoints[1] for s in absa], dtype=np.int64) if absa else _EMPTY_I
        self.a_k = np.array([s.stiffness for s in absa]) if absa else _EMPTY_F
        self.a_tn = np.array([s.natural_angle for s in absa]) if absa else _EMPTY_F
        self.r_a = np.array([s.endpoints[0] for s in rela], dtype=np.int64) if rela else _EMPTY_I
        self.r_b = np.array([s.endpoints[1] for s in rela], dtype=np.int64) if rela else _EMPTY_I
        self.r_c = np.array([s.endpoints[2] for s in rela], dtype=np.int64) if rela else _EMPTY_I
        self.r_k = np.array([s.stiffness for s in rela]) if rela else _EMPTY_F
        self.r_tn = np.array([s.natural_angle for s in rela]) if rela else _EMPTY_F


def as_table(springs, n_masses: int) -> SpringTable:
    if isinstance(springs, SpringTable):
        if springs.n_masses != n_masses:
            raise IndexError("spring table built for a different system size")
        return springs
    return SpringTable(springs, n_masses)


@njit(cache=True)
def _wrap(a):
    w = (a + np.pi) % TWO_PI - np.pi
    if w == -np.pi:
        w = np.pi
    return w


@njit(cache=True)
def _accumulate_forces(pos, vel, fixed,
                       d_a, d_b, d_k, d_rn,
                       a_a, a_b, a_k, a_tn,
                       r_a, r_b, r_c, r_k, r_tn,
                       cx, cy, has_centre, mu, out):
    m = pos.shape[0]
    for i in range(m):
        out[i, 0] = 0.0
        out[i, 1] = 0.0
    for j in range(d_a.shape[0]):
        ia = d_a[j]
        ib = d_b[j]
        dx = pos[ib, 0] - pos[ia, 0]
        dy = pos[ib, 1] - pos[ia, 1]
        dist = math.sqrt(dx * dx + dy * dy)
        if dist < EPS:
            continue
        f = d_k[j] * (dist - d_rn[j]) / dist
        out[ia, 0] += f * dx
        out[ia, 1] += f * dy
        out[ib, 0] -= f * dx
        out[ib, 1] -= f * dy
    for j in range(a_a.shape[0]):
        ia = a_a[j]
        ib = a_b[j]
        ux = pos[ia, 0] - pos[ib, 0]
        uy = pos[ia, 1] - pos[ib, 1]
        d2 = ux * ux + uy * uy
        if d2 < EPS * EPS:
            continue
        dth = _wrap(math.atan2(uy, ux) - a_tn[j])
        f = a_k[j] * dth / d2
        out[ia, 0] += f * uy
        out[ia, 1] -= f * ux
        out[ib, 0] -= f * uy
        out[ib, 1] += f * ux
    for j in range(r_a.shape[0]):
        ia = r_a[j]
        ib = r_b[j]
        ic = r_c[j]
        ux = pos[ia, 0] - pos[ib, 0]
        uy = pos[ia, 1] - pos[ib, 1]
        wx = pos[ic, 0] - pos[ib, 0]
        wy = pos[ic, 1] - pos[ib, 1]
        du2 = ux * ux + uy * uy
        dw2 = wx * wx + wy * wy
        if du2 < EPS * EPS or dw2 < EPS * EPS:
            continue
        phi = _wrap(math.atan2(uy, ux) - math.atan2(wy, wx))
        kd = r_k[j] * _wrap(phi - r_tn[j])
        fax = kd * uy / du2
        fay = -kd * ux / du2
        fcx = -kd * wy / dw2
        fcy = kd * wx / dw2
        out[ia, 0] += fax
        out[ia, 1] += fay
        out[ic, 0] += fcx
        out[ic, 1] += fcy
        out[ib, 0] -= fax + fcx
        out[ib, 1] -= fay + fcy
    for i in range(m):
        if fixed[i]:
            out[i, 0] = 0.0
            out[i, 1] = 0.0
        else:
            out[i, 0] -= mu * vel[i, 0]
            out[i, 1] -= mu * vel[i, 1]
            if has_centre:
                out[i, 0] += EXPANSION_COEFF * (pos[i, 0] - cx)
                out[i, 1] += EXPANSION_COEFF * (pos[i, 1] - cy)


@njit(cache=True)
def _potential_energy(pos,
                      d_a, d_b, d_k, d_rn,
                      a_a, a_b, a_k, a_tn,
                      r_a, r_b, r_c, r_k, r_tn):
    u = 0.0
    for j in range(d_a.shape[0]):
        dx = pos[d_b[j], 0] - pos[d_a[j], 0]
        dy = pos[d_b[j], 1] - pos[d_a[j], 1]
        stretch = math.sqrt(dx * dx + dy * dy) - d_rn[j]
        u += 0.5 * d_k[j] * stretch * stretch
    for j in range(a_a.shape[0]):
        ux = pos[a_a[j], 0] - pos[a_b[j], 0]
        uy = pos[a_a[j], 1] - pos[a_b[j], 1]
        if ux * ux + uy * uy < EPS * EPS:
            continue
        dth = _wrap(math.atan2(uy, ux) - a_tn[j])
        u += 0.5 * a_k[j] * dth * dth
    for j in range(r_a.shape[0]):
        ux = pos[r_a[j], 0] - pos[r_b[j], 0]
        uy = pos[r_a[j], 1] - pos[r_b[j], 1]
        wx = pos[r_c[j], 0] - pos[r_b[j], 0]
        wy = pos[r_c[j], 1] - pos[r_b[j], 1]
        if ux * ux + uy * uy < EPS * EPS or wx * wx + wy * wy < EPS * EPS:
            continue
        phi = _wrap(math.atan2(uy, ux) - math.atan2(wy, wx))
        dphi = _wrap(phi - r_tn[j])
        u += 0.5 * r_k[j] * dphi * dphi
    return u


def _kernel_args(table: SpringTable):
    return (table.d_a, table.d_b, table.d_k, table.d_rn,
            table.a_a, table.a_b, table.a_k, table.a_tn,
            table.r_a, table.r_b, table.r_c, table.r_k, table.r_tn)


def spring_potential(spring: SpringSpec, positions: np.ndarray) -> float:
    """Potential energy of one spring given a raw (m, 2) position array."""
    if spring.kind == DISTANCE:
        a, b = spring.endpoints
        d = positions[b] - positions[a]
        stretch = math.hypot(d[0], d[1]) - spring.natural_length
        return 0.5 * spring.stiffness * stretch * stretch
    if spring.kind == ABSOLUTE_ANGLE:
        a, b = spring.endpoints
        u = positions[a] - positions[b]
        if math.hypot(u[0], u[1]) < EPS:
            return 0.0
        dth = wrap_angle(math.atan2(u[1], u[0]) - spring.natural_angle)
        return 0.5 * spring.stiffness * dth * dth
    a, b, c = spring.endpoints
    u = positions[a] - positions[b]
    w = positions[c] - positions[b]
    if math.hypot(u[0], u[1]) < EPS or math.hypot(w[0], w[1]) < EPS:
        return 0.0
    phi = wrap_angle(math.atan2(u[1], u[0]) - math.atan2(w[1], w[0]))
    dphi = wrap_angle(phi - spring.natural_angle)
    return 0.5 * spring.stiffness * dphi * dphi


def spring_force_at(spring: SpringSpec, positions: np.ndarray) -> tuple[np.ndarray, ...]:
    """Force on each endpoint, ordered as spring.endpoints."""
    if spring.kind == DISTANCE:
        a, b = spring.endpoints
        d = positions[b] - positions[a]
        dist = math.hypot(d[0], d[1])
        if dist < EPS:
            return np.zeros(2), np.zeros(2)
        fa = spring.stiffness * (dist - spring.natural_length) / dist * d
        return fa, -fa
    if spring.kind == ABSOLUTE_ANGLE:
        a, b = spring.endpoints
        u = positions[a] - positions[b]
        d2 = u[0] * u[0] + u[1] * u[1]
        if d2 < EPS * EPS:
            return np.zeros(2), np.zeros(2)
        dth = wrap_angle(math.atan2(u[1], u[0]) - spring.natural_angle)
        f = spring.stiffness * dth / d2
        fa = np.array([f * u[1], -f * u[0]])
        return fa, -fa
    a, b, c = spring.endpoints
    u = positions[a] - positions[b]
    w = positions[c] - positions[b]
    du2 = u[0] * u[0] + u[1] * u[1]
    dw2 = w[0] * w[0] + w[1] * w[1]
    if du2 < EPS * EPS or dw2 < EPS * EPS:
        return np.zeros(2), np.zeros(2), np.zeros(2)
    phi = wrap_angle(math.atan2(u[1], u[0]) - math.atan2(w[1], w[0]))
    kd = spring.stiffness * wrap_angle(phi - spring.natural_angle)
    fa = np.array([kd * u[1] / du2, -kd * u[0] / du2])
    fc = np.array([-kd * w[1] / dw2, kd * w[0] / dw2])
    return fa, -(fa + fc), fc


def spring_force(spring: SpringSpec, state: SystemState) -> tuple[np.ndarray, ...]:
    return spring_force_at(spring, state.positions)


def friction_force(mass: PointMass) -> np.ndarray:
    """Viscous drag; fixed masses do not move and feel none."""
    if mass.fixed:
        return np.zeros(2)
    return np.array([-FRICTION_COEFF * mass.vx, -FRICTION_COEFF * mass.vy])


def expansion_force(mass: PointMass, centre=None) -> np.ndarray:
    """Push away from the centre of explored mass, growing with distance."""
    if centre is None or mass.fixed:
        return np.zeros(2)
    return EXPANSION_COEFF * np.array([mass.x - centre[0], mass.y - centre[1]])


def motion_model(
    t: float,
    state: SystemState,
    springs,
    centre=None,
    friction: float = FRICTION_COEFF,
) -> np.ndarray:
    """Accelerations (m, 2) of every mass; fixed rows are zero."""
    table = as_table(springs, state.count)
    out = np.zeros((state.count, 2))
    cx, cy = (float(centre[0]), float(centre[1])) if centre is not None else (0.0, 0.0)
    _accumulate_forces(
        state.positions, state.velocities, fixed_u8(state),
        *_kernel_args(table),
        cx, cy, centre is not None, friction, out,
    )
    return out


def fixed_u8(state: SystemState) -> np.ndarray:
    return state.fixed.astype(np.uint8)


def total_energy(state: SystemState, springs) -> tuple[float, float]:
    """(kinetic, potential) in joules; fixed masses carry no kinetic term."""
    table = as_table(springs, state.count)
    free = ~state.fixed
    kinetic = 0.5 * float(np.sum(state.velocities[free] ** 2))
    potential = float(_potential_energy(state.positions, *_kernel_args(table)))
    return kinetic, potential
