import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchprox import problems

ALL_DATASET_KINDS = ["linreg", "absreg", "logistic", "halfspace", "power"]


def small_instances(seed=0):
    return [
        problems.generate_problem("linreg", N=30, n=4, sigma=0.5, seed=seed),
        problems.generate_problem("absreg", N=30, n=4, sigma=0.5, seed=seed + 1),
        problems.generate_problem("logistic", N=30, n=4, p=0.1, seed=seed + 2),
        problems.generate_problem("halfspace", N=30, n=4, seed=seed + 3),
        problems.generate_problem("power", N=30, n=4, gamma=0.5, seed=seed + 4),
        problems.generate_problem("twopoint", delta=0.3, radius=2.0, gamma=0.0,
                                  seed=seed + 5),
    ]


class TestGeneration:
    def test_benchmark_default_shapes(self):
        inst = problems.generate_problem("linreg", N=1000, n=40, sigma=0.5, seed=7)
        assert inst.A.shape == (1000, 40)
        assert inst.b.shape == (1000,)
        assert inst.noise.sigma == 0.5

    def test_label_flip_rate(self):
        flips, total = 0, 0
        for seed in range(40):
            inst = problems.generate_problem("logistic", N=500, n=5, p=0.01,
                                             seed=seed)
            flips += inst.flips_applied
            total += inst.N
        rate = flips / total
        assert abs(rate - 0.01) < 3 * np.sqrt(0.01 * 0.99 / total)

    def test_noiseless_linreg_interpolates(self):
        inst = problems.generate_problem("linreg", N=50, n=5, sigma=0.0, seed=3)
        ref = problems.reference_optimum(inst)
        assert ref.f_star == 0.0
        assert problems.objective_value(inst, ref.x_star) < 1e-24

    def test_condition_number_ramp(self):
        inst = problems.generate_problem("linreg", N=100, n=10, cond=50.0, seed=1)
        s = np.linalg.svd(inst.A, compute_uv=False)
        assert s[0] / s[-1] == pytest.approx(50.0, rel=1e-9)

    def test_halfspace_planted_interior(self):
        inst = problems.generate_problem("halfspace", N=60, n=6, seed=2)
        slack = inst.b - inst.A @ inst.x_planted
        assert np.all(slack >= 0.1 - 1e-12) and np.all(slack <= 1.0 + 1e-12)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            problems.generate_problem("linreg", N=0, n=3)
        with pytest.raises(ValueError):
            problems.generate_problem("power", N=5, n=2, gamma=1.5)
        with pytest.raises(ValueError):
            problems.generate_problem("twopoint", delta=1.5)

    def test_config_round_trip(self):
        inst = problems.generate_problem("absreg", N=40, n=3, sigma=0.25, seed=9)
        clone = problems.from_config(inst.to_config())
        np.testing.assert_array_equal(inst.A, clone.A)
        np.testing.assert_array_equal(inst.b, clone.b)


class TestLossEval:
    def test_linreg_at_optimum(self):
        inst = problems.generate_problem("linreg", N=20, n=3, sigma=0.0, seed=5)
        v, g, inf = problems.loss_eval(inst, inst.x_planted, 4)
        assert v == pytest.approx(0.0, abs=1e-24)
        np.testing.assert_allclose(g, 0.0, atol=1e-12)
        assert inf == 0.0

    def test_absreg_hand_value(self):
        # Half-weighted convention: F = |a x - b| / 2.
        inst = problems.make_custom_linreg(np.array([[2.0]]), np.array([0.0]))
        inst.kind = problems.ABSREG
        v, g, inf = problems.loss_eval(inst, np.array([3.0]), 0)
        assert v == pytest.approx(3.0)
        np.testing.assert_allclose(g, [1.0])
        assert inf == 0.0

    def test_value_by_finite_differences(self):
        # Oracle: central differences of the value function away from kinks.
        rng = np.random.default_rng(11)
        for inst in small_instances(20):
            if inst.kind == problems.TWOPOINT:
                continue
            for _ in range(5):
                x = rng.standard_normal(inst.n)
                i = int(rng.integers(inst.N))
                v, g, _ = problems.loss_eval(inst, x, i)
                d = rng.standard_normal(inst.n)
                d /= np.linalg.norm(d)
                h = 1e-6
                vp, _, _ = problems.loss_eval(inst, x + h * d, i)
                vm, _, _ = problems.loss_eval(inst, x - h * d, i)
                fd = (vp - vm) / (2 * h)
                # Skip near-kink evaluations where the derivative jumps.
                if abs(vp - 2 * v + vm) > 1e-7:
                    continue
                assert fd == pytest.approx(float(g @ d), abs=2e-4)

    def test_halfspace_inside_is_zero(self):
        inst = problems.generate_problem("halfspace", N=20, n=4, seed=6)
        v, g, inf = problems.loss_eval(inst, inst.x_planted, 3)
        assert v == 0.0 and inf == 0.0
        np.testing.assert_array_equal(g, np.zeros(4))

    def test_index_out_of_range(self):
        inst = problems.generate_problem("linreg", N=10, n=2, seed=0)
        with pytest.raises(IndexError):
            problems.loss_eval(inst, np.zeros(2), 10)

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_convexity_along_segments(self, seed):
        rng = np.random.default_rng(seed)
        for inst in small_instances(seed % 7):
            x = rng.standard_normal(inst.n)
            y = rng.standard_normal(inst.n)
            t = float(rng.random())
            i = int(rng.integers(inst.N))
            vx, _, _ = problems.loss_eval(inst, x, i)
            vy, _, _ = problems.loss_eval(inst, y, i)
            vm, _, _ = problems.loss_eval(inst, t * x + (1 - t) * y, i)
            assert vm <= t * vx + (1 - t) * vy + 1e-10

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_subgradient_inequality(self, seed):
        rng = np.random.default_rng(seed)
        for inst in small_instances(seed % 5):
            x = rng.standard_normal(inst.n)
            y = rng.standard_normal(inst.n)
            i = int(rng.integers(inst.N))
            vx, gx, _ = problems.loss_eval(inst, x, i)
            vy, _, _ = problems.loss_eval(inst, y, i)
            assert vy >= vx + float(gx @ (y - x)) - 1e-10

    def test_interpolation_definition(self):
        # Every per-sample loss is minimized at the planted point.
        for kind, kwargs in (
            ("linreg", dict(sigma=0.0)),
            ("absreg", dict(sigma=0.0)),
            ("power", dict(gamma=0.7)),
            ("halfspace", dict()),
        ):
            inst = problems.generate_problem(kind, N=40, n=5, seed=8, **kwargs)
            vals, _, infs = problems.batch_losses(inst, inst.x_planted,
                                                  np.arange(inst.N))
            np.testing.assert_allclose(vals, infs, atol=1e-20)


class TestObjective:
    def test_hand_linreg(self):
        inst = problems.make_custom_linreg(np.array([[2.0]]), np.array([4.0]))
        assert problems.objective_value(inst, np.array([0.0])) == pytest.approx(8.0)

    def test_matches_mean_of_loss_eval(self):
        rng = np.random.default_rng(3)
        for inst in small_instances(2):
            if inst.kind == problems.TWOPOINT:
                continue
            x = rng.standard_normal(inst.n)
            vals = [problems.loss_eval(inst, x, i)[0] for i in range(inst.N)]
            assert problems.objective_value(inst, x) == pytest.approx(
                float(np.mean(vals)), rel=1e-14
            )

    def test_twopoint_population_objective(self):
        inst = problems.generate_problem("twopoint", delta=0.25, radius=2.0,
                                         gamma=1.0, seed=4)
        x = np.array([0.5])
        r = abs(0.5 - inst.sign * 2.0)
        assert problems.objective_value(inst, x) == pytest.approx(
            0.25 * r**2 / 2.0
        )


class TestSampling:
    def test_single_index(self):
        inst = problems.generate_problem("linreg", N=10, n=2, seed=0)
        idx = problems.sample_batch(inst, 1, np.random.default_rng(0))
        assert idx.shape == (1,)

    def test_determinism(self):
        inst = problems.generate_problem("linreg", N=10, n=2, seed=0)
        a = problems.sample_batch(inst, 16, np.random.default_rng(42))
        b = problems.sample_batch(inst, 16, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_zero_batch_rejected(self):
        inst = problems.generate_problem("linreg", N=10, n=2, seed=0)
        with pytest.raises(ValueError):
            problems.sample_batch(inst, 0, np.random.default_rng(0))

    def test_uniformity_chi_square(self):
        inst = problems.generate_problem("linreg", N=10, n=2, seed=0)
        idx = problems.sample_batch(inst, 100_000, np.random.default_rng(1))
        counts = np.bincount(idx, minlength=10)
        expected = 10_000.0
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        # 9 dof; 3-sigma-ish acceptance
        assert chi2 < 27.9

    def test_twopoint_frequency(self):
        inst = problems.generate_problem("twopoint", delta=0.3, seed=1)
        idx = problems.sample_batch(inst, 50_000, np.random.default_rng(2))
        freq0 = float(np.mean(idx == 0))
        assert abs(freq0 - 0.7) < 3 * np.sqrt(0.3 * 0.7 / 50_000)


class TestReferenceOptimum:
    def test_linreg_two_solve_paths_agree(self):
        inst = problems.generate_problem("linreg", N=80, n=7, sigma=0.7, seed=13)
        ref = problems.reference_optimum(inst)
        x_ne = np.linalg.solve(inst.A.T @ inst.A, inst.A.T @ inst.b)
        assert np.linalg.norm(ref.x_star - x_ne) < 1e-8
        assert ref.f_star == pytest.approx(
            problems.objective_value(inst, x_ne), abs=1e-12
        )

    def test_absreg_lp_vs_subgradient_certificate(self):
        inst = problems.generate_problem("absreg", N=60, n=5, sigma=0.5, seed=17)
        ref = problems.reference_optimum(inst)
        # No descent direction among +-coordinates and random directions.
        rng = np.random.default_rng(0)
        f0 = problems.objective_value(inst, ref.x_star)
        assert f0 == pytest.approx(ref.f_star, abs=1e-12)
        for _ in range(40):
            d = rng.standard_normal(inst.n)
            d /= np.linalg.norm(d)
            assert problems.objective_value(inst, ref.x_star + 1e-6 * d) \
                >= f0 - 1e-12

    def test_absreg_lp_vs_own_prox_solver(self):
        # Independent cross-check of the LP reference: high-accuracy full
        # prox iteration on the whole dataset.
        inst = problems.generate_problem("absreg", N=30, n=3, sigma=0.5, seed=19)
        ref = problems.reference_optimum(inst)
        from batchprox import prox

        x = np.zeros(3)
        for _ in range(60):
            res = prox.prox_step_absreg(x, inst.A, inst.b, alpha=50.0, tol=1e-12)
            x = res.x_next
        assert problems.objective_value(inst, x) == pytest.approx(
            ref.f_star, abs=1e-8
        )

    def test_separable_logistic(self):
        inst = problems.generate_problem("logistic", N=40, n=4, p=0.0, seed=23)
        ref = problems.reference_optimum(inst)
        assert ref.f_star == 0.0

    def test_flipped_logistic_stationary(self):
        inst = problems.generate_problem("logistic", N=100, n=4, p=0.1, seed=29)
        ref = problems.reference_optimum(inst)
        assert ref.converged and ref.tolerance <= 1e-8
        assert ref.f_star > 0.0

    def test_cached(self):
        inst = problems.generate_problem("linreg", N=20, n=3, sigma=0.3, seed=1)
        assert problems.reference_optimum(inst) is problems.reference_optimum(inst)


class TestOrthCol:
    def test_m_equals_n_identifies(self):
        gen = problems.make_orthcol_regression(4, 4, R=1.0, seed=0)
        A, b, idx = gen.draw_round(np.random.default_rng(0))
        x_hat = np.linalg.solve(A, b)
        np.testing.assert_allclose(x_hat, gen.x_star, atol=1e-10)

    def test_identity_basis_reveals_coordinates(self):
        gen = problems.make_orthcol_regression(4, 1, R=1.0, seed=0,
                                               use_identity=True)
        A, b, idx = gen.draw_round(np.random.default_rng(3))
        assert A.shape == (1, 4)
        np.testing.assert_allclose(A[0, idx[0]], 2.0)  # sqrt(n/m) = 2
        assert b[0] == pytest.approx(2.0 * gen.x_star[idx[0]])

    def test_second_moment_identity(self):
        gen = problems.make_orthcol_regression(6, 2, R=1.0, seed=1)
        rng = np.random.default_rng(5)
        acc = np.zeros((6, 6))
        draws = 10_000
        for _ in range(draws):
            A, _, _ = gen.draw_round(rng)
            acc += A.T @ A
        acc /= draws
        assert np.abs(acc - np.eye(6)).max() < 0.02 * 6

    def test_invalid(self):
        with pytest.raises(ValueError):
            problems.make_orthcol_regression(4, 5, R=1.0, seed=0)


class TestDistanceToOptimum:
    def test_twopoint(self):
        inst = problems.generate_problem("twopoint", delta=0.2, radius=3.0,
                                         seed=2)
        d = problems.distance_to_optimum(inst, np.array([0.0]))
        assert d == pytest.approx(3.0)

    def test_halfspace_uses_projection(self):
        inst = problems.generate_problem("halfspace", N=25, n=3, seed=3)
        assert problems.distance_to_optimum(inst, inst.x_planted) == 0.0
        x = inst.x_planted + 10.0 * np.ones(3)
        d = problems.distance_to_optimum(inst, x)
        assert d > 0.0
        # Projection feasibility: the projected point satisfies every halfspace.
        from batchprox.prox import project_polyhedron

        proj = project_polyhedron(inst.A, inst.b, x)
        assert np.all(inst.A @ proj - inst.b <= 1e-7)
