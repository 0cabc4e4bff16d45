"""Constraints, projection, steady-state solver, and the benchmark system.

The solver has an independent oracle here: the five-species network
reduces to one scalar equation in the neutral density (every other
species is a closed-form function of it), solved by bisection.
"""

import numpy as np
import pytest

from cdmkit.data import Dataset
from cdmkit.errors import ConfigError, SampleRejectionError
from cdmkit.physics import (
    AffineB,
    ConstraintSet,
    ReactionNetwork,
    SteadyStateSolverConfig,
    default_benchmark,
    default_conserved_totals,
    generate_benchmark_dataset,
    parse_constraint_file,
    project,
    residuals,
    solve_steady_state,
)


@pytest.fixture(scope="module")
def benchmark():
    return default_benchmark()


def oracle_steady_state(net, x):
    """Bisection on the scalar neutral-density equation.

    At equilibrium: e = A+ = (k1/k4) A, A* = k2 e A / (k3 + k5 A),
    A2 = (k5/k6) A A*, and the nuclei total closes the system. The left
    side is strictly increasing in A, so the root is unique.
    """
    k1, k2, k3, k4, k5, k6 = net.rate_constants_of_x(x)
    total = default_conserved_totals(x)[1]
    alpha = k1 / k4

    def nuclei(a):
        e = alpha * a
        excited = k2 * e * a / (k3 + k5 * a)
        dimer = (k5 / k6) * a * excited
        return a + e + excited + 2 * dimer

    lo, hi = 0.0, total
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if nuclei(mid) > total:
            hi = mid
        else:
            lo = mid
    a = 0.5 * (lo + hi)
    e = alpha * a
    excited = k2 * e * a / (k3 + k5 * a)
    dimer = (k5 / k6) * a * excited
    return np.array([e, a, e, excited, dimer])


class TestConstraintSet:
    def test_affine_residuals_zero_at_feasible_point(self):
        cs = ConstraintSet(
            a_matrix=np.array([[1.0, -1.0]]), b_of_x=AffineB(np.zeros(1), np.zeros((1, 2)))
        )
        np.testing.assert_allclose(residuals(cs, np.zeros(2), np.array([2.0, 2.0])), 0.0)

    def test_scale_halves_reported_value(self):
        a = np.array([[1.0, 0.0]])
        b = AffineB(np.zeros(1), np.zeros((1, 1)))
        cs1 = ConstraintSet(a_matrix=a, b_of_x=b, scale=np.array([1.0]))
        cs2 = ConstraintSet(a_matrix=a, b_of_x=b, scale=np.array([2.0]))
        y = np.array([3.0, 0.0])
        assert residuals(cs2, np.zeros(1), y)[0] == residuals(cs1, np.zeros(1), y)[0] / 2

    def test_rank_deficient_rejected_at_build(self):
        with pytest.raises(ConfigError):
            ConstraintSet(
                a_matrix=np.array([[1.0, 2.0], [2.0, 4.0]]),
                b_of_x=AffineB(np.zeros(2), np.zeros((2, 1))),
            )

    def test_data_driven_scales_positive(self, benchmark):
        _, cs, _ = benchmark
        rng = np.random.default_rng(0)
        y = rng.uniform(0.1, 2.0, size=(50, 5))
        scaled = cs.with_scale_from_data(y)
        assert np.all(scaled.scale > 0)
        # feature-weighted row norm: sqrt(sum_j a_ij^2 var_j)
        var = y.var(axis=0)
        expected = np.sqrt((cs.a_matrix**2) @ var)
        np.testing.assert_allclose(scaled.scale, expected, rtol=1e-12)


class TestProject:
    def test_feasible_point_unchanged(self):
        cs = ConstraintSet(
            a_matrix=np.array([[1.0, -1.0]]), b_of_x=AffineB(np.zeros(1), np.zeros((1, 1)))
        )
        y = np.array([0.7, 0.7])
        np.testing.assert_allclose(project(cs, np.zeros(1), y), y, atol=1e-15)

    def test_hand_computed_example(self):
        # constraint y1 - y2 = 0; the closest feasible point to (1, 0) is
        # the midpoint (0.5, 0.5)
        cs = ConstraintSet(
            a_matrix=np.array([[1.0, -1.0]]), b_of_x=AffineB(np.zeros(1), np.zeros((1, 1)))
        )
        np.testing.assert_allclose(
            project(cs, np.zeros(1), np.array([1.0, 0.0])), [0.5, 0.5], atol=1e-14
        )

    def test_idempotent(self, benchmark):
        _, cs, _ = benchmark
        rng = np.random.default_rng(1)
        x = np.array([2.0, 1.0, 1.0])
        y = rng.standard_normal(5) + 1.0
        once = project(cs, x, y)
        twice = project(cs, x, once)
        np.testing.assert_allclose(once, twice, atol=1e-12)

    def test_projection_is_nearest_feasible_point(self, benchmark):
        _, cs, _ = benchmark
        rng = np.random.default_rng(2)
        x = np.array([1.5, 0.8, 1.2])
        b = cs.b_of_x(x)
        a = cs.a_matrix
        y_hat = rng.standard_normal(5)
        proj = project(cs, x, y_hat)
        d_proj = np.linalg.norm(proj - y_hat)
        for _ in range(100):
            z = rng.standard_normal(5)
            z = z - a.T @ np.linalg.solve(a @ a.T, a @ z - b)  # random feasible
            assert np.linalg.norm(z - y_hat) >= d_proj - 1e-12

    def test_gauss_newton_refinement_with_nonlinear_residual(self):
        # affine row y1 + y2 = 2 plus nonlinear circle y1^2 + y2^2 = 2;
        # from a nearby start both must end satisfied
        cs = ConstraintSet(
            a_matrix=np.array([[1.0, 1.0]]),
            b_of_x=AffineB(np.array([2.0]), np.zeros((1, 1))),
            nonlinear=[lambda x, y: y[0] ** 2 + y[1] ** 2 - 2.0],
        )
        out = project(cs, np.zeros(1), np.array([1.4, 0.9]))
        assert abs(out.sum() - 2.0) < 1e-10
        assert abs(out @ out - 2.0) < 1e-10


class TestReactionNetwork:
    def test_conservation_vectors_annihilate_stoichiometry(self, benchmark):
        net, _, _ = benchmark
        drift = net.conservation_matrix @ net.stoichiometry
        np.testing.assert_array_equal(drift, 0.0)

    def test_quasi_neutrality_row(self, benchmark):
        net, cs, _ = benchmark
        np.testing.assert_array_equal(cs.a_matrix[0], [1.0, 0.0, -1.0, 0.0, 0.0])
        np.testing.assert_array_equal(cs.b_of_x(np.array([2.0, 1.0, 1.0])), [0.0, 2.0])

    def test_declared_invariant_validation(self):
        with pytest.raises(ConfigError):
            ReactionNetwork(
                species=["a", "b"],
                stoichiometry=np.array([[1.0], [0.0]]),  # a created from nothing
                reactant_orders=np.array([[0, 1]]),
                rate_constants_of_x=lambda x: np.array([1.0]),
                conservation_matrix=np.array([[1.0, 1.0]]),
            )

    def test_rate_laws_are_mass_action(self, benchmark):
        net, _, _ = benchmark
        y = np.array([0.3, 1.2, 0.3, 0.2, 0.1])
        k = net.rate_constants_of_x(np.array([2.0, 1.0, 1.0]))
        laws = net.rate_laws
        assert laws[0](y, k) == pytest.approx(k[0] * y[0] * y[1], rel=1e-15)
        assert laws[2](y, k) == pytest.approx(k[2] * y[3], rel=1e-15)
        np.testing.assert_allclose(
            net.rates(y, k), [law(y, k) for law in laws], rtol=1e-15
        )

    def test_jacobian_matches_finite_differences(self, benchmark):
        net, _, _ = benchmark
        rng = np.random.default_rng(3)
        y = rng.uniform(0.1, 1.0, 5)
        k = net.rate_constants_of_x(np.array([1.0, 1.0, 1.0]))
        jac = net.jacobian(y, k)
        h = 1e-7
        for j in range(5):
            bump = np.zeros(5)
            bump[j] = h
            fd = (net.rhs(y + bump, k) - net.rhs(y - bump, k)) / (2 * h)
            np.testing.assert_allclose(jac[:, j], fd, atol=1e-6)


class TestSteadyStateSolver:
    def test_detailed_balance_toy(self):
        # single reversible reaction a <-> b with equal rates: the steady
        # state splits the conserved total evenly
        net = ReactionNetwork(
            species=["a", "b"],
            stoichiometry=np.array([[-1.0, 1.0], [1.0, -1.0]]),
            reactant_orders=np.array([[1, 0], [0, 1]]),
            rate_constants_of_x=lambda x: np.array([1.0, 1.0]),
            conservation_matrix=np.array([[1.0, 1.0]]),
        )
        y = solve_steady_state(net, np.array([3.0]), lambda x: np.array([float(x[0])]))
        np.testing.assert_allclose(y, [1.5, 1.5], rtol=1e-10)

    def test_matches_independent_oracle(self, benchmark):
        # the polish tolerance is an absolute residual bound, so species
        # far below unit scale carry absolute (not relative) accuracy
        net, _, box = benchmark
        rng = np.random.default_rng(4)
        for _ in range(25):
            x = box.draw(rng)
            y = solve_steady_state(net, x, default_conserved_totals)
            y_oracle = oracle_steady_state(net, x)
            np.testing.assert_allclose(y, y_oracle, rtol=1e-6, atol=1e-10)

    def test_deterministic_and_positive(self, benchmark):
        net, _, box = benchmark
        x = box.draw(np.random.default_rng(5))
        y1 = solve_steady_state(net, x, default_conserved_totals)
        y2 = solve_steady_state(net, x, default_conserved_totals)
        np.testing.assert_array_equal(y1, y2)
        assert np.all(y1 > 0)

    def test_newton_polish_residual(self, benchmark):
        net, _, _ = benchmark
        x = np.array([2.0, 1.0, 1.0])  # box center scale
        y, info = solve_steady_state(
            net, x, default_conserved_totals, return_info=True
        )
        assert info.final_residual < 1e-12
        k = net.rate_constants_of_x(x)
        assert float(np.max(np.abs(net.rhs(y, k)))) < 1e-12

    def test_box_center_regression_anchor(self, benchmark):
        # frozen from the first converged computation; guards against
        # silent changes to rate maps, solver, or conservation handling
        net, _, box = benchmark
        center = np.sqrt(np.asarray(box.lo) * np.asarray(box.hi))
        y = solve_steady_state(net, center, default_conserved_totals)
        anchor = np.array([
            0.15293074407679255,
            1.323904633379723,
            0.15293074407679255,
            0.10441979874173712,
            0.20937241190087347,
        ])
        np.testing.assert_allclose(y, anchor, rtol=1e-10)

    def test_march_preserves_linear_invariants(self, benchmark):
        net, _, box = benchmark
        rng = np.random.default_rng(6)
        for _ in range(5):
            x = box.draw(rng)
            y, info = solve_steady_state(
                net, x, default_conserved_totals, return_info=True
            )
            scale = max(1.0, float(default_conserved_totals(x)[1]))
            assert info.max_conservation_drift < 1e-10 * scale

    def test_constraints_hold_at_solution(self, benchmark):
        net, cs, box = benchmark
        rng = np.random.default_rng(7)
        for _ in range(10):
            x = box.draw(rng)
            y = solve_steady_state(net, x, default_conserved_totals)
            r = residuals(cs, x, y)
            assert np.max(np.abs(r)) < 1e-8

    def test_non_convergence_raises_rejection(self, benchmark):
        net, _, _ = benchmark
        config = SteadyStateSolverConfig(march_max_steps=3)
        with pytest.raises(SampleRejectionError):
            solve_steady_state(
                net, np.array([2.0, 1.0, 1.0]), default_conserved_totals, config
            )


class TestDatasetGeneration:
    def test_split_counts_and_determinism(self, tmp_path):
        ds1, meta1 = generate_benchmark_dataset(60, seed=9)
        ds2, meta2 = generate_benchmark_dataset(60, seed=9)
        np.testing.assert_array_equal(ds1.x, ds2.x)
        np.testing.assert_array_equal(ds1.y, ds2.y)
        assert meta1["rejected"] == meta2["rejected"]
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        ds1.save_csv(p1)
        ds2.save_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_samples_inside_box(self, benchmark):
        _, _, box = benchmark
        ds, _ = generate_benchmark_dataset(40, seed=10)
        assert np.all(ds.x >= np.asarray(box.lo) * (1 - 1e-12))
        assert np.all(ds.x <= np.asarray(box.hi) * (1 + 1e-12))
        assert np.all(ds.y > 0)

    def test_dims(self):
        ds, meta = generate_benchmark_dataset(10, seed=11)
        assert ds.dim_x == 3 and ds.dim_y == 5
        assert meta["species"] == ["e", "A", "A+", "A*", "A2"]


class TestConstraintFile:
    def test_round_trip_parse(self, tmp_path):
        path = tmp_path / "constraints.txt"
        path.write_text(
            "# quasi-neutrality and nuclei count\n"
            "a: 1 0 -1 0 0 ; b: 0\n"
            "a: 0 1 1 1 2 ; b: 1.0*x1\n"
        )
        cs = parse_constraint_file(path, dim_x=3, dim_y=5)
        x = np.array([2.5, 1.0, 1.0])
        np.testing.assert_allclose(cs.b_of_x(x), [0.0, 2.5])
        np.testing.assert_array_equal(cs.a_matrix[0], [1, 0, -1, 0, 0])

    def test_constant_plus_linear_terms(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("a: 1 1 ; b: 0.5 + 2.0*x2 + -1.0*x1\n")
        cs = parse_constraint_file(path, dim_x=2, dim_y=2)
        np.testing.assert_allclose(cs.b_of_x(np.array([1.0, 3.0])), [0.5 + 6.0 - 1.0])

    def test_bad_lines_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("a: 1 2 3 ; b: 0\n")
        with pytest.raises(ConfigError):
            parse_constraint_file(path, dim_x=2, dim_y=2)
        path.write_text("a: 1 2 ; b: 1.0*x9\n")
        with pytest.raises(ConfigError):
            parse_constraint_file(path, dim_x=2, dim_y=2)
