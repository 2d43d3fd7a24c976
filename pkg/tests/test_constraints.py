"""Wall margins, control half-planes, polytope enumeration, corner predicates."""

import numpy as np
import pytest

from swarmsim.constraints import (
    ConstraintKind,
    ControlConstraint,
    HalfPlane,
    RectDomain,
    SafetyParams,
    discrete_wall_guards,
    flocking_constraint,
    lemma1_infeasible,
    lemma2_infeasible,
    lemma3_infeasible,
    polytope_vertices,
    predator_constraint,
    safety_margin,
    wall_control_constraints,
    wall_margins,
)
from swarmsim.errors import PremiseViolated, StateUnsafe
from swarmsim.oracles import corner_margin, lemma_grid_feasible

U_MAX = 0.1
PARAMS = SafetyParams(alpha=1.0, u_max=U_MAX)
DOMAIN = RectDomain.square(6.0)


class TestSafetyMargin:
    def test_direct_substitution(self):
        wall = HalfPlane(np.array([1.0, 0.0]), -3.0)
        g = safety_margin((2.9, 0.0), (0.1, 0.0), wall, PARAMS)
        assert g == pytest.approx(-0.05, abs=1e-12)

    def test_tangential_velocity_gives_signed_distance(self):
        wall = HalfPlane(np.array([1.0, 0.0]), -3.0)
        g = safety_margin((2.0, 1.0), (0.0, 0.2), wall, PARAMS)
        assert g == pytest.approx(-1.0, abs=1e-12)

    def test_on_wall_at_rest_is_zero(self):
        wall = HalfPlane(np.array([1.0, 0.0]), -3.0)
        assert safety_margin((3.0, 0.0), (0.0, 0.0), wall, PARAMS) == 0.0


class TestWallControlConstraints:
    def test_active_wall_moving_toward(self):
        cs = wall_control_constraints((5.985, 3.0), (0.05, 0.0), DOMAIN, PARAMS)
        assert len(cs) == 1
        (c,) = cs
        assert c.kind is ConstraintKind.WALL and c.wall_index == 0
        assert np.allclose(c.a, (1, 0)) and c.c == pytest.approx(-U_MAX)

    def test_active_wall_moving_away(self):
        cs = wall_control_constraints((5.985, 3.0), (-0.05, 0.0), DOMAIN, PARAMS)
        (c,) = cs
        assert np.allclose(c.a, (-1, 0)) and c.c == pytest.approx(U_MAX)

    def test_active_wall_tangential_emits_nothing(self):
        cs = wall_control_constraints((5.9995, 3.0), (0.0, 0.05), DOMAIN, PARAMS)
        assert cs == []

    def test_inactive_wall_emits_nothing(self):
        cs = wall_control_constraints((3.0, 3.0), (0.05, 0.0), DOMAIN, PARAMS)
        assert cs == []

    def test_unsafe_state_raises(self):
        with pytest.raises(StateUnsafe):
            wall_control_constraints((5.999, 3.0), (0.05, 0.0), DOMAIN, PARAMS)

    def test_containment_chain_candidate_feasible(self):
        # For any safe state, the braking constraints plus box admit the
        # two-wall candidate control -(u_max/alpha)(n1 + n2).
        rng = np.random.default_rng(5)
        for _ in range(300):
            alpha = float(rng.uniform(1.0, 3.0))
            params = SafetyParams(alpha=alpha, u_max=U_MAX)
            p = rng.uniform(0.0, 6.0, 2)
            v = rng.normal(0.0, 0.1, 2)
            margins = wall_margins(p, v, DOMAIN, params)
            if margins.max() > 0:
                continue
            cs = wall_control_constraints(p, v, DOMAIN, params)
            candidate = np.zeros(2)
            for k, wall in enumerate(DOMAIN.walls):
                if margins[k] >= -params.activation_margin and float(v @ wall.normal) > 0:
                    candidate -= (U_MAX / alpha) * wall.normal
            assert all(c.violation(candidate) <= 1e-12 for c in cs)
            assert np.max(np.abs(candidate)) <= U_MAX + 1e-15
            verts = polytope_vertices(cs, U_MAX)
            assert len(verts) > 0


class TestDiscreteWallGuards:
    def test_parked_at_active_wall_blocks_inward(self):
        cs = discrete_wall_guards((5.9995, 3.0), (0.0, 0.05), DOMAIN, PARAMS, dt=0.05)
        (c,) = cs
        assert np.allclose(c.a, (1, 0)) and c.c == 0.0 and c.wall_index == 0

    def test_fast_approach_not_guarded(self):
        # braking constraint handles |v.n| above the one-step quantum
        cs = discrete_wall_guards((5.985, 3.0), (0.05, 0.0), DOMAIN, PARAMS, dt=0.05)
        assert cs == []

    def test_receding_above_quantum_not_guarded(self):
        cs = discrete_wall_guards((5.9995, 3.0), (-0.006, 0.0), DOMAIN, PARAMS, dt=0.05)
        assert cs == []

    def test_slowly_receding_is_guarded(self):
        cs = discrete_wall_guards((5.9995, 3.0), (-0.004, 0.0), DOMAIN, PARAMS, dt=0.05)
        (c,) = cs
        assert np.allclose(c.a, (1, 0)) and c.c == 0.0

    def test_inactive_wall_not_guarded(self):
        assert discrete_wall_guards((3.0, 3.0), (0.0, 0.0), DOMAIN, PARAMS, dt=0.05) == []

    def test_one_step_margin_never_increases_under_guard(self):
        # The point of the guard: from |v.n| < dt*u_max with u.n <= 0,
        # the semi-implicit Euler margin increment is nonpositive.
        rng = np.random.default_rng(9)
        dt = 0.05
        wall = DOMAIN.walls[0]
        for _ in range(2000):
            s = rng.uniform(-dt * U_MAX, 1e-12)
            a = rng.uniform(-U_MAX, 0.0)
            s2 = s + dt * a
            dg = dt * s2 + PARAMS.alpha * (s2 * s2 - s * s) / (2 * U_MAX)
            assert dg <= 1e-15


class TestFlockingConstraint:
    def test_direct_substitution(self):
        c = flocking_constraint((1.0, 0.0), (1.0, 0.0), U_MAX)
        assert np.allclose(c.a, (10.0, 0.0)) and c.c == pytest.approx(-1.0)

    def test_orthogonal_drift(self):
        c = flocking_constraint((0.0, 1.0), (1.0, 0.0), U_MAX)
        assert np.allclose(c.a, (0.0, 10.0)) and c.c == pytest.approx(0.0)

    def test_zero_r_dot_absent(self):
        assert flocking_constraint((1.0, 0.0), (0.0, 0.0), U_MAX) is None

    def test_boundary_identity(self):
        # any u on the constraint boundary evaluates the original
        # inequality to zero
        rng = np.random.default_rng(11)
        for _ in range(200):
            r = rng.normal(0, 1, 2)
            r_dot = rng.normal(0, 0.3, 2)
            if np.hypot(*r_dot) == 0:
                continue
            c = flocking_constraint(r, r_dot, U_MAX)
            na2 = float(c.a @ c.a)
            base = c.a * (c.c / na2)
            perp = np.array([-c.a[1], c.a[0]])
            for t in (-1.0, 0.0, 2.5):
                u = base + t * perp
                lhs = (np.hypot(*r_dot) / U_MAX) * float(u @ r) + float(r_dot @ r)
                assert abs(lhs) < 1e-12 * max(1.0, abs(c.c), np.hypot(*u) * np.hypot(*c.a))

    def test_unit_vector_scaling_equivalence(self):
        # normalizing r and r_dot rescales the half-plane by |r||r_dot|
        # without moving it
        rng = np.random.default_rng(13)
        for _ in range(200):
            r = rng.normal(0, 1, 2)
            r_dot = rng.normal(0, 0.3, 2)
            nr, nrd = np.hypot(*r), np.hypot(*r_dot)
            if nrd < 1e-12 or nr < 1e-12:
                continue
            raw = flocking_constraint(r, r_dot, U_MAX)
            unit = flocking_constraint(r / nr, r_dot / nrd, U_MAX)
            for _ in range(10):
                u = rng.uniform(-0.1, 0.1, 2)
                assert raw.violation(u) == pytest.approx(unit.violation(u) * nr * nrd, rel=1e-9, abs=1e-12)


class TestPredatorConstraint:
    def test_direct_substitution(self):
        c = predator_constraint((0.1, 0.0), (-0.1, 0.0), U_MAX)
        assert np.allclose(c.a, (-0.1, 0.0)) and c.c == pytest.approx(-0.01)
        # equivalently u_x >= 0.1: u = (0.1, anything) is on the boundary
        assert c.violation((0.1, 0.0)) == pytest.approx(0.0, abs=1e-15)

    def test_zero_d_dot_absent(self):
        assert predator_constraint((0.1, 0.0), (0.0, 0.0), U_MAX) is None

    def test_already_separating_satisfied_by_zero(self):
        c = predator_constraint((0.0, 0.2), (0.0, 0.1), U_MAX)
        assert np.allclose(c.a, (0.0, -0.2)) and c.c == pytest.approx(0.02)
        assert c.violation((0.0, 0.0)) <= 0


class TestPolytopeVertices:
    def test_box_only(self):
        verts = polytope_vertices([], U_MAX)
        assert np.allclose(verts, [(-0.1, -0.1), (0.1, -0.1), (0.1, 0.1), (-0.1, 0.1)])

    def test_box_face(self):
        cc = ControlConstraint(np.array([1.0, 0.0]), -0.1, ConstraintKind.WALL, 0)
        verts = polytope_vertices([cc], U_MAX)
        assert np.allclose(verts, [(-0.1, -0.1), (-0.1, 0.1)])

    def test_contradictory_empty(self):
        c1 = ControlConstraint(np.array([1.0, 0.0]), -0.1, ConstraintKind.WALL, 0)
        c2 = ControlConstraint(np.array([-1.0, 0.0]), -0.1, ConstraintKind.WALL, 2)
        assert polytope_vertices([c1, c2], U_MAX) == []

    def test_corner_pinch_single_point(self):
        c1 = ControlConstraint(np.array([1.0, 0.0]), -0.1, ConstraintKind.WALL, 0)
        c2 = ControlConstraint(np.array([0.0, 1.0]), -0.1, ConstraintKind.WALL, 1)
        verts = polytope_vertices([c1, c2], U_MAX)
        assert len(verts) == 1 and np.allclose(verts[0], (-0.1, -0.1))

    def test_vertices_satisfy_constraints_and_adjacency(self):
        rng = np.random.default_rng(17)
        checked = 0
        while checked < 150:
            witness = rng.uniform(-U_MAX, U_MAX, 2)
            ccs = []
            for _ in range(int(rng.integers(1, 4))):
                a = rng.normal(0, 1, 2)
                a /= np.hypot(*a)
                c = float(a @ witness) + abs(rng.normal(0, 0.04))
                ccs.append(ControlConstraint(a, c, ConstraintKind.FLOCKING))
            verts = polytope_vertices(ccs, U_MAX)
            if len(verts) < 3:
                continue
            checked += 1
            rows = [(np.array([1.0, 0]), U_MAX), (np.array([-1.0, 0]), U_MAX),
                    (np.array([0, 1.0]), U_MAX), (np.array([0, -1.0]), U_MAX)]
            rows += [(c.a / np.hypot(*c.a), c.c / np.hypot(*c.a)) for c in ccs]
            for v in verts:
                assert max(float(a @ v) - c for a, c in rows) <= 1e-9
            # CCW ordering and shared active constraint between neighbors
            area2 = 0.0
            for i in range(len(verts)):
                j = (i + 1) % len(verts)
                area2 += verts[i][0] * verts[j][1] - verts[j][0] * verts[i][1]
                active_i = {k for k, (a, c) in enumerate(rows) if abs(float(a @ verts[i]) - c) <= 1e-8}
                active_j = {k for k, (a, c) in enumerate(rows) if abs(float(a @ verts[j]) - c) <= 1e-8}
                shared = active_i & active_j
                assert len(shared) == 1
            assert area2 > 0


def _random_corner_instance(rng):
    theta = rng.uniform(0, 2 * np.pi)
    n1 = np.array([np.cos(theta), np.sin(theta)])
    n2 = np.array([-np.sin(theta), np.cos(theta)])
    alpha = float(rng.uniform(1.0, 3.0))
    v = rng.uniform(0, 1) * n1 + rng.uniform(0, 1) * n2
    r = rng.normal(0, 1, 2)
    r *= rng.uniform(0.05, 2.0) / np.hypot(*r)
    r_dot = rng.normal(0, 0.2, 2)
    d = rng.normal(0, 1, 2)
    d *= rng.uniform(0.3, 2.0) / np.hypot(*d)
    d_dot = rng.normal(0, 0.2, 2)
    return n1, n2, alpha, v, r, r_dot, d, d_dot


def _rows(n1, n2, r, r_dot, d, d_dot):
    r_hat = r / np.hypot(*r)
    d_hat = d / np.hypot(*d)
    nrd = np.hypot(*r_dot)
    ndd = np.hypot(*d_dot)
    row_r = [nrd * float(n1 @ r_hat), nrd * float(n2 @ r_hat)]
    row_d = [-ndd * float(n1 @ d_hat), -ndd * float(n2 @ d_hat)]
    return row_r, float(r_dot @ r_hat), row_d, -float(d_dot @ d_hat)


class TestLemmaPredicates:
    R = 0.025
    GAMMA = 0.25

    def test_alpha_one_degenerates_to_single_row(self):
        # bounds force u1 = u2 = u_max: exactly one corner condition
        n1 = np.array([1.0, 0.0])
        n2 = np.array([0.0, 1.0])
        v = np.array([0.1, 0.1])
        r = np.array([1.0, 1.0])
        r_dot = np.array([0.05, 0.05])
        infeasible = lemma1_infeasible(n1, n2, v, r, r_dot, self.R, 1.0)
        r_hat = r / np.hypot(*r)
        lhs = np.hypot(*r_dot) * (float(n1 @ r_hat) + float(n2 @ r_hat))
        assert infeasible == (not lhs >= float(r_dot @ r_hat))

    def test_opposing_relative_motion_infeasible(self):
        # r along +(n1+n2): moving away faster than any admissible
        # control can counter
        n1 = np.array([1.0, 0.0])
        n2 = np.array([0.0, 1.0])
        v = np.array([0.1, 0.1])
        r = np.array([1.0, 1.0])
        r_dot = np.array([0.2, 0.2])  # r_dot . r_hat > |r_dot| (n1+n2) . r_hat is false here
        row_r, rhs_r, _, _ = _rows(n1, n2, r, r_dot, r, r_dot)
        want = not lemma_grid_feasible([row_r], [rhs_r], 1.0)
        assert lemma1_infeasible(n1, n2, v, r, r_dot, self.R, 1.0) == want

    def test_receding_flock_feasible(self):
        n1 = np.array([1.0, 0.0])
        n2 = np.array([0.0, 1.0])
        v = np.array([0.1, 0.1])
        r = np.array([1.0, 1.0])
        r_dot = np.array([-0.2, -0.2])
        assert not lemma1_infeasible(n1, n2, v, r, r_dot, self.R, 1.0)

    def test_premise_violations(self):
        n1 = np.array([1.0, 0.0])
        n2 = np.array([0.0, 1.0])
        ok_v = np.array([0.1, 0.1])
        with pytest.raises(PremiseViolated):
            lemma1_infeasible(n1, np.array([0.5, 0.5]), ok_v, (1, 1), (0, 0), self.R, 1.0)
        with pytest.raises(PremiseViolated):
            lemma1_infeasible(n1, n2, np.array([-0.1, 0.1]), (1, 1), (0, 0), self.R, 1.0)
        with pytest.raises(PremiseViolated):
            lemma1_infeasible(n1, n2, ok_v, (0.01, 0.0), (0, 0), self.R, 1.0)
        with pytest.raises(PremiseViolated):
            lemma2_infeasible(n1, n2, ok_v, (0.1, 0.0), (0, 0), self.GAMMA, 1.0)
        with pytest.raises(PremiseViolated):
            lemma1_infeasible(n1, n2, ok_v, (1, 1), (0, 0), self.R, 0.5)

    @pytest.mark.parametrize("which", [1, 2, 3])
    def test_agrees_with_grid_oracle(self, which):
        rng = np.random.default_rng(100 + which)
        tested = 0
        while tested < 120:
            n1, n2, alpha, v, r, r_dot, d, d_dot = _random_corner_instance(rng)
            row_r, rhs_r, row_d, rhs_d = _rows(n1, n2, r, r_dot, d, d_dot)
            if which == 1:
                rows, rhs, excl = [row_r], [rhs_r], 1e-6
                got = lemma1_infeasible(n1, n2, v, r, r_dot, self.R, alpha)
            elif which == 2:
                rows, rhs, excl = [row_d], [rhs_d], 1e-6
                got = lemma2_infeasible(n1, n2, v, d, d_dot, self.GAMMA, alpha)
            else:
                rows, rhs, excl = [row_r, row_d], [rhs_r, rhs_d], 1.5e-3
                got = lemma3_infeasible(n1, n2, v, r, r_dot, d, d_dot, self.R, self.GAMMA, alpha)
            if abs(corner_margin(rows, rhs, alpha)) <= excl:
                continue
            tested += 1
            assert got == (not lemma_grid_feasible(rows, rhs, alpha))
