import numpy as np
import pytest

from pinnopt.mlp import MlpArchitecture, MlpParams, flatten_layers, forward_values, init_params
from pinnopt.problems import (
    Batch,
    PdeProblem,
    assemble_residual,
    batch_loss,
    eval_points,
    fokker_planck_variance,
    l2_error,
    make_heat,
    make_log_fokker_planck,
    make_poisson,
    make_problem,
    sample_batch,
)

ALL_PROBLEMS = [
    make_poisson(2, "cosine"),
    make_poisson(5, "cosine"),
    make_poisson(4, "harmonic"),
    make_heat(),
    make_log_fokker_planck(),
]


def linear_stub(d=2, scale=1.0):
    """A problem whose exact solution is an affine function realized exactly
    by a single-layer network, so residuals vanish identically."""
    arch = MlpArchitecture((d, 1))
    w = np.arange(1.0, d + 1.0)
    params = MlpParams(arch, np.concatenate([scale * w, [0.5 * scale]]))

    def exact(x):
        return forward_values(params, x)

    def residual(x, u, grads, diag2):
        from pinnopt.jets import JetCoeffs

        coeffs = JetCoeffs.zeros(len(u), d)
        coeffs.c_h = -np.ones((len(u), d))
        return -diag2.sum(axis=1), coeffs

    base = make_poisson(d, "cosine")
    problem = PdeProblem(
        name="linear_stub", input_dim=d, has_time=False, lo=base.lo, hi=base.hi,
        residual=residual, boundary_data=exact,
        forcing=lambda x: np.zeros(len(x)),
        exact_solution=exact, exact_jets=None,
    )
    return problem, params


class TestPoisson:
    def test_cosine_5d_values_at_origin(self):
        p = make_poisson(5, "cosine")
        x = np.zeros((1, 5))
        assert p.exact_solution(x)[0] == pytest.approx(5.0, abs=0)
        assert p.forcing(x)[0] == pytest.approx(5.0 * np.pi**2, rel=1e-15)

    def test_harmonic_100d_at_ones(self):
        p = make_poisson(100, "harmonic")
        x = np.ones((1, 100))
        assert p.exact_solution(x)[0] == pytest.approx(50.0, abs=0)
        assert p.forcing(x)[0] == 0.0

    def test_cosine_1d_at_half(self):
        p = make_poisson(1, "cosine")
        x = np.full((1, 1), 0.5)
        assert abs(p.exact_solution(x)[0]) < 1e-15
        assert abs(p.forcing(x)[0]) < 1e-14

    def test_harmonic_odd_dimension_rejected(self):
        with pytest.raises(ValueError):
            make_poisson(3, "harmonic")

    def test_lookup_by_name(self):
        assert make_problem("poisson5d_cos").name == "poisson5d_cos"
        assert make_problem("poisson10d_harmonic").input_dim == 10
        assert make_problem("poisson100d_harmonic").input_dim == 100
        assert make_problem("heat4+1d").has_time
        assert make_problem("logfp9+1d").input_dim == 10
        with pytest.raises(ValueError):
            make_problem("wave1d")


class TestHeat:
    def test_exact_at_origin(self):
        p = make_heat()
        assert p.exact_solution(np.zeros((1, 5)))[0] == 0.0

    def test_boundary_value_at_t1(self):
        p = make_heat()
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(4, 5))
        x[:, 0] = 1.0
        expected = np.exp(-1.0) * np.sin(2.0 * x[:, 1:]).sum(axis=1)
        assert np.allclose(p.boundary_data(x), expected, rtol=1e-15)

    def test_exact_solution_annihilates_residual(self):
        p = make_heat()
        rng = np.random.default_rng(1)
        x = rng.uniform(p.lo, p.hi, size=(1000, 5))
        u, g, h = p.exact_jets(x)
        vals, _ = p.residual(x, u, g, h)
        assert np.abs(vals).max() <= 1e-10


class TestLogFokkerPlanck:
    def test_variance_endpoints(self):
        assert fokker_planck_variance(np.array([0.0]))[0] == 1.0
        assert fokker_planck_variance(np.array([700.0]))[0] == pytest.approx(2.0, abs=1e-15)

    def test_exact_solution_annihilates_residual(self):
        p = make_log_fokker_planck()
        rng = np.random.default_rng(2)
        x = rng.uniform(p.lo, p.hi, size=(1000, 10))
        u, g, h = p.exact_jets(x)
        vals, _ = p.residual(x, u, g, h)
        assert np.abs(vals).max() <= 1e-8

    def test_initial_condition_is_standard_normal_logdensity(self):
        p = make_log_fokker_planck()
        x = np.zeros((1, 10))
        expected = -4.5 * np.log(2.0 * np.pi)
        assert p.exact_solution(x)[0] == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: p.name)
def test_exact_residual_annihilation_all(problem):
    rng = np.random.default_rng(3)
    x = rng.uniform(problem.lo, problem.hi, size=(1000, problem.input_dim))
    u, g, h = problem.exact_jets(x)
    vals, _ = problem.residual(x, u, g, h)
    assert np.abs(vals).max() <= 1e-8


class TestSampling:
    def test_1d_boundary_on_endpoints(self):
        p = make_poisson(1, "cosine")
        batch = sample_batch(p, np.random.default_rng(0), 4, 4)
        assert set(batch.x_bnd[:, 0]) <= {0.0, 1.0}

    @pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: p.name)
    def test_interior_strictly_inside(self, problem):
        batch = sample_batch(problem, np.random.default_rng(1), 256, 32)
        assert np.all(batch.x_int > problem.lo) and np.all(batch.x_int < problem.hi)

    def test_equal_seeds_identical_batches(self):
        p = make_heat()
        a = sample_batch(p, np.random.default_rng(42), 16, 8)
        b = sample_batch(p, np.random.default_rng(42), 16, 8)
        assert np.array_equal(a.x_int, b.x_int)
        assert np.array_equal(a.x_bnd, b.x_bnd)

    def test_heat_boundary_split(self):
        p = make_heat()
        batch = sample_batch(p, np.random.default_rng(5), 8, 10)
        init = batch.bnd_kind == "initial"
        assert init.sum() == 5
        assert np.all(batch.x_bnd[init, 0] == 0.0)
        spatial = batch.x_bnd[~init]
        on_face = (spatial[:, 1:] == 0.0) | (spatial[:, 1:] == 1.0)
        assert np.all(on_face.any(axis=1))

    def test_logfp_all_initial(self):
        p = make_log_fokker_planck()
        batch = sample_batch(p, np.random.default_rng(6), 8, 12)
        assert np.all(batch.bnd_kind == "initial")
        assert np.all(batch.x_bnd[:, 0] == 0.0)

    def test_bad_sizes_rejected(self):
        with pytest.raises(ValueError):
            sample_batch(make_heat(), np.random.default_rng(0), 0, 4)


class TestAssemble:
    def test_exact_params_zero_residual(self):
        problem, params = linear_stub(d=2)
        batch = sample_batch(problem, np.random.default_rng(7), 16, 8)
        system = assemble_residual(problem, params, batch)
        assert np.all(system.r == 0.0)
        assert system.loss == 0.0

    def test_single_interior_point_unscaled(self):
        p = make_poisson(2, "cosine")
        params = init_params(MlpArchitecture((2, 8, 1)), seed=0)
        batch = sample_batch(p, np.random.default_rng(8), 1, 1)
        system = assemble_residual(p, params, batch)
        from pinnopt.jets import forward_jets
        jets = forward_jets(params, batch.x_int)
        rho = p.residual(batch.x_int, jets.u, jets.grads, jets.diag2)[0][0]
        assert system.r[0] == pytest.approx(rho, rel=1e-15)

    @pytest.mark.parametrize("problem_name", ["poisson2d_cos", "heat4+1d", "logfp9+1d"])
    def test_jacobian_rows_vs_finite_differences(self, problem_name):
        problem = make_problem(problem_name)
        arch = MlpArchitecture((problem.input_dim, 6, 1))
        params = init_params(arch, seed=3)
        batch = sample_batch(problem, np.random.default_rng(9), 3, 2)
        system = assemble_residual(problem, params, batch)

        from pinnopt.problems import residual_vector
        h = 1e-6
        theta = params.theta
        fd = np.zeros_like(system.jac)
        for p_idx in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[p_idx] += h
            tm[p_idx] -= h
            rp = residual_vector(problem, params.replace_theta(tp), batch)
            rm = residual_vector(problem, params.replace_theta(tm), batch)
            fd[:, p_idx] = (rp - rm) / (2.0 * h)
        for i in range(system.jac.shape[0]):
            denom = max(np.linalg.norm(fd[i]), 1e-12)
            assert np.linalg.norm(system.jac[i] - fd[i]) / denom <= 1e-4

    def test_loss_matches_residual_norm(self):
        p = make_poisson(2, "cosine")
        params = init_params(MlpArchitecture((2, 8, 1)), seed=1)
        batch = sample_batch(p, np.random.default_rng(10), 8, 4)
        system = assemble_residual(p, params, batch)
        assert system.loss == 0.5 * float(system.r @ system.r)
        assert batch_loss(p, params, batch) == pytest.approx(system.loss, rel=1e-15)

    def test_loss_invariant_under_duplication(self):
        p = make_poisson(2, "cosine")
        params = init_params(MlpArchitecture((2, 8, 1)), seed=2)
        batch = sample_batch(p, np.random.default_rng(11), 8, 4)
        doubled = Batch(
            x_int=np.vstack([batch.x_int, batch.x_int]),
            x_bnd=np.vstack([batch.x_bnd, batch.x_bnd]),
            bnd_kind=np.concatenate([batch.bnd_kind, batch.bnd_kind]),
            w_int=1.0 / np.sqrt(16), w_bnd=1.0 / np.sqrt(8),
        )
        l1 = batch_loss(p, params, batch)
        l2 = batch_loss(p, params, doubled)
        assert l2 == pytest.approx(l1, rel=1e-14)

    def test_measure_weights_scale_residuals(self):
        p = make_poisson(2, "cosine")
        params = init_params(MlpArchitecture((2, 8, 1)), seed=3)
        rng_a, rng_b = np.random.default_rng(20), np.random.default_rng(20)
        plain = sample_batch(p, rng_a, 8, 4)
        weighted = sample_batch(p, rng_b, 8, 4, weight_interior=4.0, weight_boundary=9.0)
        r_plain = assemble_residual(p, params, plain).r
        r_weighted = assemble_residual(p, params, weighted).r
        assert np.allclose(r_weighted[:8], 2.0 * r_plain[:8], rtol=1e-14)
        assert np.allclose(r_weighted[8:], 3.0 * r_plain[8:], rtol=1e-14)
        with pytest.raises(ValueError):
            sample_batch(p, rng_a, 8, 4, weight_interior=0.0)

    def test_gramian_symmetric_psd(self):
        p = make_poisson(2, "cosine")
        params = init_params(MlpArchitecture((2, 6, 1)), seed=4)
        batch = sample_batch(p, np.random.default_rng(12), 12, 6)
        jac = assemble_residual(p, params, batch).jac
        gram = jac.T @ jac
        assert np.allclose(gram, gram.T, atol=1e-12)
        eigs = np.linalg.eigvalsh(gram)
        assert eigs.min() >= -1e-10 * max(eigs.max(), 1.0)


class TestL2Error:
    def test_zero_for_exact_params(self):
        problem, params = linear_stub(d=3)
        pts = eval_points(problem, np.random.default_rng(13), 200)
        assert l2_error(problem, params, pts) == 0.0

    def test_zero_predictor_of_constant_target(self):
        d = 2
        base = make_poisson(d, "cosine")
        problem = PdeProblem(
            name="const", input_dim=d, has_time=False, lo=base.lo, hi=base.hi,
            residual=base.residual, boundary_data=base.boundary_data,
            forcing=base.forcing, exact_solution=lambda x: np.full(len(x), 3.0),
        )
        params = MlpParams(MlpArchitecture((d, 1)), np.zeros(3))
        pts = eval_points(problem, np.random.default_rng(14), 100)
        assert l2_error(problem, params, pts) == pytest.approx(1.0, rel=1e-15)

    def test_scaling_error(self):
        problem, params = linear_stub(d=2)
        scaled = MlpParams(params.arch, 1.1 * params.theta)
        pts = eval_points(problem, np.random.default_rng(15), 500)
        assert l2_error(problem, scaled, pts) == pytest.approx(0.1, rel=1e-12)

    def test_all_zero_exact_falls_back_to_rms(self):
        d = 2
        base = make_poisson(d, "cosine")
        problem = PdeProblem(
            name="zero", input_dim=d, has_time=False, lo=base.lo, hi=base.hi,
            residual=base.residual, boundary_data=base.boundary_data,
            forcing=base.forcing, exact_solution=lambda x: np.zeros(len(x)),
        )
        params = MlpParams(MlpArchitecture((d, 1)), np.array([1.0, 0.0, 0.0]))
        pts = eval_points(problem, np.random.default_rng(16), 100)
        value, relative = l2_error(problem, params, pts, detail=True)
        assert not relative
        expected = np.sqrt(np.mean(forward_values(params, pts) ** 2))
        assert value == pytest.approx(expected, rel=1e-12)
