import numpy as np
import pytest

from _oracles import evidence_gradient_oracle, random_gp_instance
from gpselect import (
    AscConfig,
    Criterion,
    Dataset,
    GPModel,
    KernelSpec,
    MeanSpec,
    ObjectiveSpec,
    OptimizationFailed,
    SingularCovariance,
    evaluate_criterion,
    finite_diff_gradient,
    log_evidence,
    optimize,
    sample_partitions,
)
from gpselect.harness import sample_synthetic
from gpselect.optimize import lbfgs_minimize


def se_template():
    return GPModel(MeanSpec(), KernelSpec.create("se", lengthscale=1.0, signal=1.0, noise=1.0))


class TestFiniteDiffGradient:
    def test_quadratic(self):
        grad, flags = finite_diff_gradient(lambda t: float(t @ t), np.array([1.0, 2.0]))
        np.testing.assert_allclose(grad, [2.0, 4.0], atol=1e-6)
        assert not flags.any()

    def test_constant(self):
        grad, flags = finite_diff_gradient(lambda t: 5.0, np.array([0.3, -0.7, 2.0]))
        np.testing.assert_array_equal(grad, np.zeros(3))
        assert not flags.any()

    def test_non_finite_probe_flagged(self):
        def f(t):
            return np.inf if t[0] > 1.0 else float(t @ t)

        grad, flags = finite_diff_gradient(f, np.array([1.0, 0.5]))
        assert flags[0] and not flags[1]
        assert grad[0] == 0.0

    def test_evidence_gradient_matches_analytic_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            model, data = random_gp_instance(rng, n_lo=8, n_hi=12)
            kern = model.kernel

            def f(theta):
                return log_evidence(GPModel(model.mean, kern.with_theta(theta)), data)

            numeric, _ = finite_diff_gradient(f, kern.theta())
            analytic = evidence_gradient_oracle(model, data)
            np.testing.assert_allclose(
                numeric, analytic, atol=1e-4 * max(1.0, float(np.max(np.abs(analytic))))
            )


class TestLbfgs:
    def test_quadratic_smoke(self):
        result = lbfgs_minimize(lambda t: float((t[0] - 3.0) ** 2), np.array([-1.0]))
        assert result.converged
        assert result.x[0] == pytest.approx(3.0, abs=1e-6)

    def test_rosenbrock_2d(self):
        def rosen(t):
            return float(100.0 * (t[1] - t[0] ** 2) ** 2 + (1.0 - t[0]) ** 2)

        result = lbfgs_minimize(rosen, np.array([-1.2, 1.0]), maxiter=500)
        np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-4)

    def test_infinite_region_avoided(self):
        def f(t):
            if t[0] < 0.5:
                return np.inf
            return float((t[0] - 1.0) ** 2)

        result = lbfgs_minimize(f, np.array([4.0]))
        assert np.isfinite(result.fun)
        assert result.x[0] == pytest.approx(1.0, abs=1e-5)

    def test_infinite_start_reported(self):
        result = lbfgs_minimize(lambda t: np.inf, np.array([0.0]))
        assert not result.converged
        assert not np.isfinite(result.fun)


class TestOptimize:
    def test_deterministic(self):
        rng = np.random.default_rng(1)
        model, data = random_gp_instance(rng, n_lo=16, n_hi=16)
        spec = ObjectiveSpec(Criterion.EVIDENCE)
        first = optimize(spec, se_template(), data, restarts=2, seed=11)
        second = optimize(spec, se_template(), data, restarts=2, seed=11)
        np.testing.assert_array_equal(first.theta, second.theta)
        assert first.objective_value == second.objective_value
        assert first.converged == second.converged

    def test_returned_value_is_fresh(self):
        rng = np.random.default_rng(2)
        model, data = random_gp_instance(rng, n_lo=16, n_hi=16)
        result = optimize(ObjectiveSpec(Criterion.EVIDENCE), se_template(), data, 2, seed=3)
        fitted = GPModel(MeanSpec(), se_template().kernel.with_theta(result.theta))
        value, _ = evaluate_criterion(Criterion.EVIDENCE, fitted, data)
        assert result.objective_value == pytest.approx(value, abs=1e-9)

    def test_gradient_small_when_converged(self):
        rng = np.random.default_rng(3)
        teacher = GPModel(MeanSpec(), KernelSpec.create("se", lengthscale=1.0, signal=1.0, noise=0.3))
        train, _ = sample_synthetic(teacher, 32, 1, seed=5)
        result = optimize(ObjectiveSpec(Criterion.EVIDENCE), se_template(), train, 2, seed=5)
        if result.converged:
            kern = se_template().kernel

            def f(theta):
                return log_evidence(GPModel(MeanSpec(), kern.with_theta(theta)), train)

            grad, _ = finite_diff_gradient(f, result.theta)
            assert np.linalg.norm(grad) < 1e-3 * (1.0 + abs(result.objective_value))

    def test_more_restarts_never_worse(self):
        rng = np.random.default_rng(4)
        model, data = random_gp_instance(rng, n_lo=14, n_hi=14, structure="per")
        spec = ObjectiveSpec(Criterion.EVIDENCE)
        template = GPModel(
            MeanSpec(), KernelSpec.create("per", lengthscale=1.0, period=1.0, signal=1.0, noise=1.0)
        )
        one = optimize(spec, template, data, restarts=1, seed=9)
        eight = optimize(spec, template, data, restarts=8, seed=9)
        assert eight.objective_value >= one.objective_value - 1e-12

    def test_loo_direction_minimizes(self):
        rng = np.random.default_rng(5)
        model, data = random_gp_instance(rng, n_lo=16, n_hi=16)
        result = optimize(ObjectiveSpec(Criterion.LOO), se_template(), data, 2, seed=6)
        fitted = GPModel(MeanSpec(), se_template().kernel.with_theta(result.theta))
        at_fit, _ = evaluate_criterion(Criterion.LOO, fitted, data)
        perturbed = GPModel(MeanSpec(), se_template().kernel.with_theta(result.theta + 0.5))
        worse, _ = evaluate_criterion(Criterion.LOO, perturbed, data)
        assert at_fit <= worse + 1e-9

    def test_asc_requires_config(self):
        with pytest.raises(ValueError):
            ObjectiveSpec(Criterion.BAYESIAN_ASC)

    def test_asc_fit_reports_partition_fraction(self):
        rng = np.random.default_rng(6)
        model, data = random_gp_instance(rng, n_lo=16, n_hi=16)
        spec = ObjectiveSpec(Criterion.BAYESIAN_ASC, AscConfig(M=1, J=4, seed=2))
        result = optimize(spec, se_template(), data, restarts=1, seed=7)
        assert result.failed_partition_fraction is not None
        assert 0.0 <= result.failed_partition_fraction <= 1.0
        assert np.isfinite(result.objective_value)

    def test_all_failures_raise(self, monkeypatch):
        import importlib

        optimize_module = importlib.import_module("gpselect.optimize")
        rng = np.random.default_rng(7)
        model, data = random_gp_instance(rng, n_lo=8, n_hi=8)

        def always_singular(*args, **kwargs):
            raise SingularCovariance("forced")

        monkeypatch.setattr(optimize_module, "log_evidence", always_singular)
        with pytest.raises(OptimizationFailed):
            optimize(ObjectiveSpec(Criterion.EVIDENCE), se_template(), data, 2, seed=8)

    def test_evidence_recovers_teacher_scale(self):
        # single-replicate smoke: the full recovery study is in acceptance
        teacher = GPModel(
            MeanSpec(), KernelSpec.create("se", lengthscale=1.0, signal=1.0, noise=0.1)
        )
        train, _ = sample_synthetic(teacher, 64, 1, seed=123)
        result = optimize(ObjectiveSpec(Criterion.EVIDENCE), se_template(), train, 3, seed=4)
        recovered = np.exp(result.theta)
        assert 0.3 < recovered[0] < 3.0  # lengthscale
        assert 0.25 < recovered[1] < 4.0  # signal
