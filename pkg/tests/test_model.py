import math

import numpy as np
import pytest

from amap.model import (
    ABSOLUTE_ANGLE,
    DISTANCE,
    OBSERVATION,
    OBSERVATION_STIFFNESS,
    RELATIVE_ANGLE,
    DuplicateToponym,
    NonFinite,
    PointMass,
    SpringSpec,
    SystemState,
    expansion_force,
    friction_force,
    motion_model,
    spring_force,
    spring_force_at,
    spring_potential,
    total_energy,
    wrap_angle,
)


def finite_difference_force(spring, positions, step=1e-6):
    """Independent oracle: central differences of the spring potential."""
    forces = np.zeros_like(positions)
    for i in spring.endpoints:
        for c in range(2):
            plus = positions.copy()
            minus = positions.copy()
            plus[i, c] += step
            minus[i, c] -= step
            grad = (spring_potential(spring, plus) - spring_potential(spring, minus)) / (2 * step)
            forces[i, c] = -grad
    return tuple(forces[i] for i in spring.endpoints)


def random_spring(kind, rng):
    stiffness = float(rng.uniform(0.05, 1.0))
    if rng.random() < 0.2:
        stiffness = OBSERVATION_STIFFNESS
        origin = OBSERVATION
    else:
        origin = "template"
    if kind == DISTANCE:
        return SpringSpec(DISTANCE, (0, 1), stiffness,
                          natural_length=float(rng.uniform(0.0, 5.0)), origin=origin)
    if kind == ABSOLUTE_ANGLE:
        return SpringSpec(ABSOLUTE_ANGLE, (0, 1), stiffness,
                          natural_angle=float(rng.uniform(-math.pi, math.pi)), origin=origin)
    return SpringSpec(RELATIVE_ANGLE, (0, 1, 2), stiffness,
                      natural_angle=float(rng.uniform(-math.pi, math.pi)), origin=origin)


def random_positions(n, rng, min_sep=0.2):
    while True:
        pos = rng.uniform(-5.0, 5.0, size=(n, 2))
        ok = all(
            np.hypot(*(pos[i] - pos[j])) > min_sep
            for i in range(n) for j in range(i + 1, n)
        )
        if ok:
            return pos


def smooth_region(spring, positions):
    """Keep finite differencing away from the wrap discontinuity."""
    if spring.kind == DISTANCE:
        return True
    if spring.kind == ABSOLUTE_ANGLE:
        a, b = spring.endpoints
        u = positions[a] - positions[b]
        delta = wrap_angle(math.atan2(u[1], u[0]) - spring.natural_angle)
    else:
        a, b, c = spring.endpoints
        u = positions[a] - positions[b]
        w = positions[c] - positions[b]
        phi = wrap_angle(math.atan2(u[1], u[0]) - math.atan2(w[1], w[0]))
        delta = wrap_angle(phi - spring.natural_angle)
    return abs(delta) < math.pi - 0.1


class TestWrapAngle:
    def test_three_half_pi(self):
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)

    def test_pi_included(self):
        assert wrap_angle(math.pi) == math.pi

    def test_negative_pi_maps_to_pi(self):
        assert wrap_angle(-math.pi) == math.pi

    def test_congruence_property(self):
        rng = np.random.default_rng(7)
        for a in rng.uniform(-50, 50, size=500):
            w = wrap_angle(float(a))
            assert -math.pi < w <= math.pi
            assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
            assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)

    def test_non_finite_rejected(self):
        with pytest.raises(NonFinite):
            wrap_angle(float("nan"))


class TestSpringForce:
    def test_distance_example(self):
        spring = SpringSpec(DISTANCE, (0, 1), 1.0, natural_length=1.0)
        state = SystemState([PointMass("a", 0, 0), PointMass("b", 2, 0)])
        fa, fb = spring_force(spring, state)
        assert fa == pytest.approx([1.0, 0.0])
        assert fb == pytest.approx([-1.0, 0.0])
        oracle = finite_difference_force(spring, state.positions)
        assert fa == pytest.approx(oracle[0], rel=1e-4)

    def test_distance_at_natural_length(self):
        spring = SpringSpec(DISTANCE, (0, 1), 1.0, natural_length=2.0)
        state = SystemState([PointMass("a", 0, 0), PointMass("b", 2, 0)])
        fa, fb = spring_force(spring, state)
        assert np.allclose(fa, 0) and np.allclose(fb, 0)

    def test_absolute_angle_example(self):
        spring = SpringSpec(ABSOLUTE_ANGLE, (0, 1), 1.0, natural_angle=math.pi / 2)
        state = SystemState([PointMass("a", 1, 0), PointMass("b", 0, 0)])
        fa, fb = spring_force(spring, state)
        assert fa == pytest.approx([0.0, math.pi / 2])
        assert fb == pytest.approx([0.0, -math.pi / 2])
        oracle = finite_difference_force(spring, state.positions)
        assert fa == pytest.approx(oracle[0], rel=1e-4)

    def test_relative_angle_right_of_equilibrium_side(self):
        # figure A, referent B (vertex), context C; right-of is +pi/2:
        # with C north of B, the equilibrium sits west of B.
        spring = SpringSpec(RELATIVE_ANGLE, (0, 1, 2), 1.0, natural_angle=math.pi / 2)
        west = SystemState([PointMass("A", -1, 0), PointMass("B", 0, 0), PointMass("C", 0, 1)])
        for f in spring_force(spring, west):
            assert np.allclose(f, 0.0)
        east = SystemState([PointMass("A", 1, 0), PointMass("B", 0, 0), PointMass("C", 0, 1)])
        assert any(np.linalg.norm(f) > 0.1 for f in spring_force(spring, east))

    def test_gradient_consistency_sample(self):
        rng = np.random.default_rng(42)
        for kind in (DISTANCE, ABSOLUTE_ANGLE, RELATIVE_ANGLE):
            n = 3 if kind == RELATIVE_ANGLE else 2
            checked = 0
            while checked < 200:
                spring = random_spring(kind, rng)
                pos = random_positions(n, rng)
                if not smooth_region(spring, pos):
                    continue
                analytic = spring_force_at(spring, pos)
                oracle = finite_difference_force(spring, pos)
                scale = max(max(np.linalg.norm(f) for f in oracle), 1e-12)
                if scale < 1e-3:
                    continue
                err = max(
                    np.linalg.norm(a - o) for a, o in zip(analytic, oracle)
                ) / scale
                assert err < 1e-4
                checked += 1

    def test_momentum_neutrality(self):
        rng = np.random.default_rng(3)
        for kind in (DISTANCE, ABSOLUTE_ANGLE, RELATIVE_ANGLE):
            n = 3 if kind == RELATIVE_ANGLE else 2
            for _ in range(200):
                spring = random_spring(kind, rng)
                forces = spring_force_at(spring, random_positions(n, rng))
                assert np.linalg.norm(sum(forces)) < 1e-12

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(11)
        angle = 0.7
        rot = np.array([[math.cos(angle), -math.sin(angle)],
                        [math.sin(angle), math.cos(angle)]])
        for kind in (DISTANCE, RELATIVE_ANGLE):
            n = 3 if kind == RELATIVE_ANGLE else 2
            for _ in range(100):
                spring = random_spring(kind, rng)
                pos = random_positions(n, rng)
                base = spring_force_at(spring, pos)
                rotated = spring_force_at(spring, pos @ rot.T)
                for f, fr in zip(base, rotated):
                    assert fr == pytest.approx(rot @ f, abs=1e-9)

    def test_coincident_endpoints_clamp_to_zero(self):
        spring = SpringSpec(ABSOLUTE_ANGLE, (0, 1), 1.0, natural_angle=0.5)
        pos = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-9]])
        for f in spring_force_at(spring, pos):
            assert np.allclose(f, 0.0)
            assert np.all(np.isfinite(f))


class TestBackgroundForces:
    def test_friction_examples(self):
        assert friction_force(PointMass("a", 0, 0, 1, 0)) == pytest.approx([-0.1, 0.0])
        assert friction_force(PointMass("a", 0, 0, 0, 0)) == pytest.approx([0.0, 0.0])
        assert friction_force(PointMass("a", 5, 5, fixed=True)) == pytest.approx([0.0, 0.0])

    def test_expansion_examples(self):
        f = expansion_force(PointMass("a", 3, 4), (0.0, 0.0))
        assert f == pytest.approx([0.03, 0.04])
        assert np.linalg.norm(f) == pytest.approx(0.05)
        assert expansion_force(PointMass("a", 1, 1), (1.0, 1.0)) == pytest.approx([0, 0])
        assert expansion_force(PointMass("a", 3, 4), None) == pytest.approx([0, 0])
        assert expansion_force(PointMass("a", 3, 4, fixed=True), (0.0, 0.0)) == pytest.approx([0, 0])


class TestMotionModel:
    def test_lone_mass_friction_only(self):
        state = SystemState([PointMass("a", 0, 0, 1, 0)])
        acc = motion_model(0.0, state, [])
        assert acc[0] == pytest.approx([-0.1, 0.0])

    def test_equilibrium_is_still(self):
        state = SystemState([PointMass("a", 0, 0), PointMass("b", 1, 0)])
        springs = [SpringSpec(DISTANCE, (0, 1), 1.0, natural_length=1.0)]
        assert np.allclose(motion_model(0.0, state, springs), 0.0)

    def test_fixed_mass_gets_zero_acceleration(self):
        state = SystemState([PointMass("anchor", 0, 0, fixed=True), PointMass("b", 3, 0)])
        springs = [SpringSpec(DISTANCE, (0, 1), 1.0, natural_length=1.0)]
        acc = motion_model(0.0, state, springs)
        assert np.allclose(acc[0], 0.0)
        assert not np.allclose(acc[1], 0.0)

    def test_matches_per_spring_sum(self):
        rng = np.random.default_rng(5)
        state = SystemState([
            PointMass(f"m{i}", *rng.uniform(-3, 3, 2), *rng.uniform(-1, 1, 2))
            for i in range(6)
        ])
        springs = []
        for _ in range(10):
            kind = rng.choice([DISTANCE, ABSOLUTE_ANGLE, RELATIVE_ANGLE])
            size = 3 if kind == RELATIVE_ANGLE else 2
            ends = tuple(int(i) for i in rng.choice(6, size=size, replace=False))
            if kind == DISTANCE:
                springs.append(SpringSpec(kind, ends, 0.5, natural_length=1.0))
            else:
                springs.append(SpringSpec(kind, ends, 0.5, natural_angle=1.0))
        centre = (0.5, -0.5)
        acc = motion_model(0.0, state, springs, centre=centre)
        expected = np.zeros_like(acc)
        for s in springs:
            for endpoint, force in zip(s.endpoints, spring_force(s, state)):
                expected[endpoint] += force
        for i, name in enumerate(state.names):
            expected[i] += friction_force(state.point(name))
            expected[i] += expansion_force(state.point(name), centre)
        assert acc == pytest.approx(expected, abs=1e-12)


class TestEnergy:
    def test_all_at_rest_natural(self):
        state = SystemState([PointMass("a", 0, 0), PointMass("b", 1, 0)])
        springs = [SpringSpec(DISTANCE, (0, 1), 1.0, natural_length=1.0)]
        assert total_energy(state, springs) == (0.0, 0.0)

    def test_kinetic(self):
        state = SystemState([PointMass("a", 0, 0, 2, 0)])
        ke, pe = total_energy(state, [])
        assert ke == pytest.approx(2.0)
        assert pe == 0.0

    def test_potential(self):
        state = SystemState([PointMass("a", 0, 0), PointMass("b", 2, 0)])
        springs = [SpringSpec(DISTANCE, (0, 1), 1.0, natural_length=1.0)]
        ke, pe = total_energy(state, springs)
        assert pe == pytest.approx(0.5)

    def test_fixed_mass_has_no_kinetic_energy(self):
        state = SystemState([PointMass("a", 0, 0, fixed=True), PointMass("b", 0, 1, 1, 1)])
        ke, _ = total_energy(state, [])
        assert ke == pytest.approx(1.0)


class TestValidation:
    def test_mass_must_be_unit(self):
        with pytest.raises(ValueError):
            PointMass("a", 0, 0, mass=2.0)

    def test_fixed_mass_zero_velocity(self):
        with pytest.raises(ValueError):
            PointMass("a", 0, 0, vx=1.0, fixed=True)

    def test_duplicate_toponym(self):
        state = SystemState([PointMass("a", 0, 0)])
        with pytest.raises(DuplicateToponym):
            state.add(PointMass("a", 1, 1))

    def test_observation_stiffness_reserved(self):
        with pytest.raises(ValueError):
            SpringSpec(DISTANCE, (0, 1), 2.5, natural_length=1.0)
        with pytest.raises(ValueError):
            SpringSpec(DISTANCE, (0, 1), 1.5, natural_length=1.0, origin="observation")

    def test_endpoint_arity(self):
        with pytest.raises(ValueError):
            SpringSpec(RELATIVE_ANGLE, (0, 1), 1.0, natural_angle=0.0)
        with pytest.raises(ValueError):
            SpringSpec(DISTANCE, (0, 0), 1.0, natural_length=1.0)
