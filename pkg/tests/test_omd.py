import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from olkm import omd
from olkm.metric import (
    FractionalSolution,
    MetricError,
    MetricRegistry,
    WeightedInstance,
    fractional_costs,
)

# frozen reference values (30-digit scalar evaluation of the formulas)
MIRROR_SCALAR = 0.932283006762294744  # sinh(arcsinh(1) + 0.5) / 2
BREGMAN_1_0 = 0.467160024646447976  # arcsinh(1) - sqrt(2) + 1


def feasible_mass(rng, d, k, box=True):
    z = rng.random(d)
    z *= k / z.sum()
    if box:
        while z.max() > 1.0:
            excess = np.clip(z - 1.0, 0, None).sum()
            z = np.minimum(z, 1.0)
            room = 1.0 - z
            z += excess * room / room.sum()
    return z


class TestEntropy:
    def test_frozen_divergence(self):
        assert omd.bregman_divergence([1.0], [0.0], 1.0) == pytest.approx(
            BREGMAN_1_0, abs=1e-12
        )

    def test_zero_on_equal(self):
        x = np.array([0.2, 0.5, 0.3])
        assert omd.bregman_divergence(x, x, 0.25) == pytest.approx(0.0, abs=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 8))
        x, y = rng.random(d) * 2, rng.random(d) * 2
        assert omd.bregman_divergence(x, y, 1.0 / d) >= -1e-12

    def test_strong_convexity_on_simplex(self):
        # divergence dominates the squared l1 distance over the capped
        # simplex, with modulus 1/(k+1)
        rng = np.random.default_rng(3)
        for _ in range(200):
            k = int(rng.integers(1, 4))
            d = int(rng.integers(k + 1, 12))
            x = feasible_mass(rng, d, k)
            y = feasible_mass(rng, d, k)
            b = omd.bregman_divergence(x, y, 1.0 / d)
            l1 = np.abs(x - y).sum()
            assert b >= l1 * l1 / (2 * (k + 1)) - 1e-9

    def test_diameter_bound(self):
        # divergence between feasible points stays below k*log(7d)
        rng = np.random.default_rng(4)
        for _ in range(200):
            k = int(rng.integers(1, 4))
            d = int(rng.integers(k + 1, 30))
            x = feasible_mass(rng, d, k)
            y = feasible_mass(rng, d, k)
            assert omd.bregman_divergence(x, y, 1.0 / d) <= k * np.log(7 * d) + 1e-9

    def test_beta_validation(self):
        with pytest.raises(MetricError):
            omd.hyperbolic_entropy([1.0], 0.0)
        with pytest.raises(MetricError):
            omd.bregman_divergence([1.0], [1.0], -1.0)


class TestSubgradient:
    def test_hand_example(self):
        # two points at distance 2, y = (1/2, 1/2), client at the first:
        # the threshold distance is 2 and only the co-located coordinate
        # can reduce the cost
        reg = MetricRegistry()
        ids = reg.add_points([[0.0], [2.0]])
        y = FractionalSolution(list(ids), np.array([0.5, 0.5]), 1)
        state = omd.OmdState(y=y)
        g = omd.compute_subgradient(reg, state, WeightedInstance.unit([0]))
        np.testing.assert_allclose(g.values, [-2.0, 0.0])
        assert g.per_client_M[0] == pytest.approx(2.0)

    def test_zero_when_client_is_integral_center(self):
        reg = MetricRegistry()
        ids = reg.add_points([[0.0], [3.0]])
        y = FractionalSolution.indicator([0], 1)
        state = omd.OmdState(y=y)
        g = omd.compute_subgradient(reg, state, WeightedInstance.unit([0]))
        np.testing.assert_allclose(g.values, [0.0])

    def test_nonpositive_and_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            k = int(rng.integers(1, 4))
            d = int(rng.integers(k + 1, 10))
            reg = MetricRegistry()
            ids = reg.add_points(rng.random((d, 2)) * 3)
            y = FractionalSolution(list(ids), feasible_mass(rng, d, k), k)
            R = WeightedInstance(
                [(int(i), float(w)) for i, w in zip(ids, rng.random(d) + 0.1)]
            )
            g = omd.compute_subgradient(reg, omd.OmdState(y=y), R)
            assert np.all(g.values <= 1e-12)
            assert g.inf_norm <= float(R.weights.sum()) * reg.aspect_ratio() * reg.dist_matrix(ids, ids).max() + 1e-9

    def test_exhaustive_vertex_inequality(self):
        from itertools import combinations

        rng = np.random.default_rng(6)
        for _ in range(25):
            k = int(rng.integers(1, 4))
            d = int(rng.integers(k + 1, 9))
            reg = MetricRegistry()
            ids = reg.add_points(rng.random((d, 2)) * 4)
            mass = feasible_mass(rng, d, k)
            y = FractionalSolution(list(ids), mass, k)
            R = WeightedInstance(
                [(int(i), float(w)) for i, w in zip(ids, rng.random(d) + 0.2)]
            )
            g = omd.compute_subgradient(reg, omd.OmdState(y=y), R)
            fy, _ = fractional_costs(reg, y, R.ids)
            base = float(fy @ R.weights)
            for combo in combinations(range(d), k):
                z = np.zeros(d)
                z[list(combo)] = 1.0
                fz, _ = fractional_costs(
                    reg, FractionalSolution(list(ids), z, k), R.ids
                )
                lhs = float(fz @ R.weights)
                assert lhs >= base + float(g.values @ (z - mass)) - 1e-9


class TestLearningRate:
    def test_formula(self):
        state = omd.OmdState(
            y=FractionalSolution([0], np.array([1.0]), 1), G=2.0, t=4
        )
        g = omd.Subgradient(values=np.array([-1.0]), per_client_M={})
        assert omd.learning_rate(state, g) == pytest.approx(0.25)

    def test_g_update(self):
        state = omd.OmdState(
            y=FractionalSolution([0], np.array([1.0]), 1), G=1.0, t=9
        )
        g = omd.Subgradient(values=np.array([-3.0]), per_client_M={})
        assert omd.learning_rate(state, g) == pytest.approx(1 / 9)
        assert state.G == 3.0

    def test_zero_gradient(self):
        state = omd.OmdState(y=FractionalSolution([0], np.array([1.0]), 1), t=1)
        g = omd.Subgradient(values=np.array([0.0]), per_client_M={})
        assert omd.learning_rate(state, g) == 0.0


class TestMirrorUpdate:
    def test_frozen_scalar(self):
        y = FractionalSolution([0, 1], np.array([0.5, 0.5]), 1)
        state = omd.OmdState(y=y)
        g = omd.Subgradient(values=np.array([-2.0, 0.0]), per_client_M={})
        x = omd.mirror_update(state, g, eta=0.25)
        assert x[0] == pytest.approx(MIRROR_SCALAR, abs=1e-12)
        assert x[1] == pytest.approx(0.5)

    def test_zero_cases(self):
        y = FractionalSolution([0, 1], np.array([1.0, 0.0]), 1)
        state = omd.OmdState(y=y)
        g = omd.Subgradient(values=np.array([0.0, 0.0]), per_client_M={})
        np.testing.assert_allclose(omd.mirror_update(state, g, 0.5), [1.0, 0.0])
        g2 = omd.Subgradient(values=np.array([-1.0, -2.0]), per_client_M={})
        np.testing.assert_allclose(omd.mirror_update(state, g2, 0.0), [1.0, 0.0])

    def test_outputs_nonnegative(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            d = int(rng.integers(2, 10))
            y = FractionalSolution(
                list(range(d)), feasible_mass(rng, d, 1), 1
            )
            state = omd.OmdState(y=y)
            g = omd.Subgradient(values=-rng.random(d) * 5, per_client_M={})
            assert np.all(omd.mirror_update(state, g, rng.random()) >= 0)


class TestProjection:
    def test_feasible_point_fixed(self):
        x = np.array([0.5, 0.5, 1.0])
        out = omd.bregman_project(x, 2, 3, simplex_only=False)
        np.testing.assert_allclose(out, x, atol=1e-9)

    def test_capped_coordinate(self):
        out = omd.bregman_project(np.array([2.0, 0.0]), 1, 2, simplex_only=False)
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-8)

    def test_symmetry(self):
        out = omd.bregman_project(np.array([3.0, 3.0]), 1, 2, simplex_only=False)
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-9)

    def test_simplex_only_exceeds_box(self):
        out = omd.bregman_project(np.array([10.0, 0.1]), 2, 2, simplex_only=True)
        assert out[0] > 1.0
        assert out.sum() == pytest.approx(2.0, abs=1e-8)

    def test_box_infeasible_dimension(self):
        with pytest.raises(MetricError):
            omd.bregman_project(np.array([1.0]), 2, 1, simplex_only=False)

    def test_rejects_bad_input(self):
        with pytest.raises(MetricError):
            omd.bregman_project(np.array([-0.1, 1.0]), 1, 2)
        with pytest.raises(MetricError):
            omd.bregman_project(np.array([np.nan, 1.0]), 1, 2)

    def test_optimality_against_random_feasible(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            k = int(rng.integers(1, 4))
            d = int(rng.integers(k + 1, 12))
            x = rng.random(d) * 4
            proj = omd.bregman_project(x, k, d, simplex_only=False)
            assert abs(proj.sum() - k) <= 1e-8
            assert proj.min() >= -1e-10 and proj.max() <= 1 + 1e-8
            bp = omd.bregman_divergence(proj, x, 1.0 / d)
            for _ in range(60):
                z = feasible_mass(rng, d, k)
                assert bp <= omd.bregman_divergence(z, x, 1.0 / d) + 1e-9

    def test_tiny_input_bracket(self):
        # mass far below k forces the dual bracket to expand downward
        out = omd.bregman_project(np.array([1e-9, 1e-12, 0.0]), 2, 3, simplex_only=False)
        assert out.sum() == pytest.approx(2.0, abs=1e-8)


class TestStep:
    def make_line_state(self):
        reg = MetricRegistry()
        ids = reg.add_points([[0.0], [2.0]])
        R0 = WeightedInstance.unit(ids)
        state = omd.initialize(reg, WeightedInstance.unit([ids[0], ids[1]]), 1)
        return reg, ids, state

    def test_initialize_lowest_ids(self):
        reg = MetricRegistry()
        ids = reg.add_points([[0.0], [1.0], [2.0]])
        state = omd.initialize(reg, WeightedInstance.unit([2, 0, 1]), 2)
        assert state.y.ids == [0, 1]
        np.testing.assert_allclose(state.y.mass, [1.0, 1.0])
        with pytest.raises(MetricError):
            omd.initialize(reg, WeightedInstance.unit([0]), 2)

    def test_mass_migrates_toward_persistent_client(self):
        reg, ids, state = self.make_line_state()
        # start fully on v0, stream clients at v1
        state.y = FractionalSolution(list(ids), np.array([1.0, 0.0]), 1)
        masses = []
        for _ in range(50):
            omd.step(reg, state, WeightedInstance.unit([ids[1]]))
            masses.append(state.y.mass[1])
        assert all(b >= a - 1e-12 for a, b in zip(masses, masses[1:]))
        assert masses[-1] > 0.9

    def test_zero_gradient_step_is_noop(self):
        reg, ids, state = self.make_line_state()
        state.y = FractionalSolution.indicator([ids[0]], 1)
        state.y.ids = [ids[0]]
        before = state.y.mass.copy()
        omd.step(reg, state, WeightedInstance.unit([ids[0]]))
        np.testing.assert_allclose(state.y.mass[:1], before)

    def test_gradient_identity(self):
        # the dual move of the update step equals eta times the subgradient
        rng = np.random.default_rng(11)
        reg = MetricRegistry()
        ids = reg.add_points(rng.random((6, 2)) * 2)
        state = omd.initialize(reg, WeightedInstance.unit(ids[:3]), 2)
        for t in range(5):
            R = WeightedInstance.unit(rng.choice(ids, 4, replace=False))
            omd.extend_with_new_points(state, R.ids)
            y_before = state.y.mass.copy()
            d = state.d
            g = omd.compute_subgradient(reg, state, R)
            state.t += 1
            eta = omd.learning_rate(state, g)
            x = omd.mirror_update(state, g, eta)
            lhs = np.arcsinh(d * y_before) - np.arcsinh(d * x)
            np.testing.assert_allclose(lhs, eta * g.values, atol=1e-9)
            state.y.mass = omd.bregman_project(x, state.y.k, d)

    def test_new_points_enter_with_zero_mass(self):
        reg = MetricRegistry()
        ids = reg.add_points([[0.0], [1.0], [5.0], [6.0]])
        state = omd.initialize(reg, WeightedInstance.unit(ids[:2]), 1)
        omd.step(reg, state, WeightedInstance.unit(ids))
        assert state.y.ids == ids
        state.y.validate(box=False)

    def test_json_roundtrip(self):
        reg = MetricRegistry()
        ids = reg.add_points([[0.0], [1.0], [2.0]])
        state = omd.initialize(reg, WeightedInstance.unit(ids), 2)
        omd.step(reg, state, WeightedInstance.unit(ids))
        blob = json.dumps(state.to_json())
        back = omd.OmdState.from_json(json.loads(blob))
        assert back.t == state.t and back.G == state.G
        np.testing.assert_allclose(back.y.mass, state.y.mass)
        assert back.y.ids == state.y.ids
