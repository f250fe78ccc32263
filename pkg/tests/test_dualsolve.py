import math

import numpy as np
import pytest

from conftest import make_instance, synthetic_data
from sosot.dualsolve import (
    Hyperparameters,
    assemble,
    convexity_constants,
    dual_gradient,
    dual_objective,
    duality_gap,
    default_tolerance,
    primal_value,
    recover_b_matrix,
    solve,
    warm_start,
)
from sosot.kernels import (
    FillingPairs,
    KernelSpec,
    SampleSet,
    kernel_eval,
    paired_fill,
)

HYPER = Hyperparameters(lambda1=1e-2, lambda2=1e-2, delta=1e3)


def brute_objective(data, gamma):
    """Independent evaluation: explicit loop, eigendecomposition, clipping."""
    h = data.hyper
    ell = data.ell
    m = np.zeros((data.features.shape[0],) * 2)
    for j in range(ell):
        phi = data.features[:, j]
        m -= gamma[j] * np.outer(phi, phi)
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    proj = (v * np.clip(w, 0.0, None)) @ v.T
    ridge = 0.0 if math.isinf(h.delta) else ell / h.delta
    return (
        gamma @ (data.qmat @ gamma) / (4 * h.lambda2)
        - data.z @ gamma / (2 * h.lambda2)
        + np.sum(proj * proj) / (2 * h.lambda1)
        + ridge * (gamma @ gamma) / 2
        + data.q_sq / (4 * h.lambda2)
    )


class TestAssemble:
    def test_single_coincident_pair(self):
        spec = KernelSpec("gaussian", bandwidth=1.0, dim=2)
        origin = SampleSet([[0.0, 0.0]])
        fill = paired_fill(origin, origin)
        data = assemble(spec, spec, spec, origin, origin, fill, HYPER)
        assert np.allclose(data.qmat, [[2.0]])
        assert np.allclose(data.z, [2.0])
        assert abs(data.q_sq - 2.0) <= 1e-12

    def test_far_separated_tiny_bandwidth(self):
        spec = KernelSpec("gaussian", bandwidth=1e-3, dim=1)
        mu = SampleSet([[0.0], [100.0], [200.0]])
        nu = SampleSet([[50.0], [150.0], [250.0]])
        data = assemble(spec, spec, spec, mu, nu, paired_fill(mu, nu), HYPER)
        assert np.allclose(data.qmat, 2.0 * np.eye(3), atol=1e-12)

    def test_elementwise_oracle(self, rng):
        spec = KernelSpec("sobolev", bandwidth=1.0, dim=2, smoothness=20.0)
        mu = SampleSet(rng.standard_normal((5, 2)))
        nu = SampleSet(rng.standard_normal((5, 2)))
        fill = paired_fill(mu, nu)
        data = assemble(spec, spec, spec, mu, nu, fill, HYPER, z_variant="paper")
        for i in range(5):
            for j in range(5):
                want = kernel_eval(spec, fill.x_points[i], fill.x_points[j]) + kernel_eval(
                    spec, fill.y_points[i], fill.y_points[j]
                )
                assert abs(data.qmat[i, j] - want) <= 1e-12
        for j in range(5):
            emb = sum(kernel_eval(spec, p, fill.x_points[j]) for p in mu.points) / 5
            emb += sum(kernel_eval(spec, p, fill.y_points[j]) for p in nu.points) / 5
            ip = float(fill.x_points[j] @ fill.y_points[j])
            assert abs(data.z[j] - (ip + emb)) <= 1e-12

    def test_z_variants_differ_by_lambda2_scaling(self, rng):
        spec = KernelSpec("gaussian", bandwidth=1.0, dim=2)
        mu = SampleSet(rng.standard_normal((4, 2)))
        nu = SampleSet(rng.standard_normal((4, 2)))
        fill = paired_fill(mu, nu)
        paper = assemble(spec, spec, spec, mu, nu, fill, HYPER, z_variant="paper")
        derived = assemble(spec, spec, spec, mu, nu, fill, HYPER, z_variant="derived")
        want = derived.embed + 2 * HYPER.lambda2 * derived.inner
        assert np.allclose(derived.z, want)
        assert np.allclose(paper.z, paper.embed + paper.inner)

    def test_rank_exceeding_pairs_rejected(self, rng):
        spec = KernelSpec("gaussian", bandwidth=1.0, dim=2)
        mu = SampleSet(rng.standard_normal((3, 2)))
        nu = SampleSet(rng.standard_normal((3, 2)))
        with pytest.raises(ValueError):
            assemble(
                spec, spec, spec, mu, nu, paired_fill(mu, nu),
                Hyperparameters(1e-2, 1e-2, rank=4),
            )

    def test_with_hyper_guards_rank(self):
        data, _, _ = make_instance(0, n=6)
        with pytest.raises(ValueError):
            data.with_hyper(Hyperparameters(1e-2, 1e-2, rank=3))


class TestObjective:
    def test_zero_gamma(self):
        data, _, _ = make_instance(1, n=8)
        want = data.q_sq / (4 * data.hyper.lambda2)
        assert abs(dual_objective(data, np.zeros(8)) - want) <= 1e-12

    def test_nonnegative_gamma_drops_sos_term(self, rng):
        data, _, _ = make_instance(2, n=8)
        gamma = np.abs(rng.standard_normal(8))
        h = data.hyper
        want = (
            gamma @ (data.qmat @ gamma) / (4 * h.lambda2)
            - data.z @ gamma / (2 * h.lambda2)
            + 8 / h.delta * (gamma @ gamma) / 2
            + data.q_sq / (4 * h.lambda2)
        )
        assert abs(dual_objective(data, gamma) - want) <= 1e-10 * (1 + abs(want))

    def test_brute_force_oracle(self, rng):
        data, _, _ = make_instance(3, n=4)
        for _ in range(5):
            gamma = rng.standard_normal(4)
            got = dual_objective(data, gamma)
            want = brute_objective(data, gamma)
            assert abs(got - want) <= 1e-9 * (1 + abs(want))

    def test_rejects_bad_gamma(self):
        data, _, _ = make_instance(4, n=5)
        with pytest.raises(ValueError):
            dual_objective(data, np.zeros(4))
        with pytest.raises(ValueError):
            dual_objective(data, np.full(5, np.nan))

    def test_convexity_along_segments(self, rng):
        data, _, _ = make_instance(5, n=6)
        for _ in range(200):
            a, b = rng.standard_normal(6), rng.standard_normal(6)
            t = rng.uniform()
            lhs = dual_objective(data, t * a + (1 - t) * b)
            rhs = t * dual_objective(data, a) + (1 - t) * dual_objective(data, b)
            assert lhs <= rhs + 1e-10 * (1 + abs(rhs))


class TestGradient:
    def test_zero_gamma(self):
        data, _, _ = make_instance(6, n=7)
        want = -data.z / (2 * data.hyper.lambda2)
        assert np.allclose(dual_gradient(data, np.zeros(7)), want)

    def test_positive_gamma_formula(self, rng):
        data, _, _ = make_instance(7, n=7)
        gamma = np.abs(rng.standard_normal(7))
        h = data.hyper
        want = (data.qmat @ gamma - data.z) / (2 * h.lambda2) + 7 / h.delta * gamma
        assert np.allclose(dual_gradient(data, gamma), want, rtol=1e-10, atol=1e-12)

    def test_finite_difference_oracle(self, rng):
        data, _, _ = make_instance(8, n=6, lam1=1e-1, lam2=1e-1, delta=10.0)
        active = 0
        for _ in range(20):
            gamma = rng.standard_normal(6)
            feats = data.features
            neg = -(feats * gamma) @ feats.T
            if np.linalg.eigvalsh(0.5 * (neg + neg.T))[-1] > 1e-10:
                active += 1
            got = dual_gradient(data, gamma)
            h = 1e-6 * (1 + np.linalg.norm(gamma))
            want = np.zeros(6)
            for i in range(6):
                step = np.zeros(6)
                step[i] = h
                want[i] = (
                    dual_objective(data, gamma + step)
                    - dual_objective(data, gamma - step)
                ) / (2 * h)
            assert np.linalg.norm(got - want) <= 1e-5 * (1 + np.linalg.norm(want))
        assert active >= 10  # the SoS term must be exercised


class TestConstants:
    def test_frozen_example(self):
        hyper = Hyperparameters(1.0, 1.0, delta=1.0)
        data = synthetic_data(
            2 * np.eye(3), np.eye(3), np.zeros(3), np.zeros(3), 0.0, hyper
        )
        alpha, lip = convexity_constants(data)
        assert alpha == pytest.approx(4.0)
        assert lip == pytest.approx(5.0)

    def test_delta_inf_limit(self):
        hyper = Hyperparameters(1.0, 0.5, delta=math.inf)
        data = synthetic_data(
            np.diag([3.0, 1.0]), np.eye(2), np.zeros(2), np.zeros(2), 0.0, hyper
        )
        alpha, _ = convexity_constants(data)
        assert alpha == pytest.approx(1.0 / (2 * 0.5))

    def test_lambda_min_clamped(self):
        hyper = Hyperparameters(1.0, 1.0, delta=1.0)
        data = synthetic_data(
            np.diag([1.0, -1e-9]), np.eye(2), np.zeros(2), np.zeros(2), 0.0, hyper
        )
        alpha, _ = convexity_constants(data)
        assert alpha == pytest.approx(2.0)  # ridge only; negative eig clamped

    def test_secant_sandwich_oracle(self, rng):
        data, _, _ = make_instance(9, n=8, lam1=5e-2, lam2=5e-2, delta=50.0)
        alpha, lip = convexity_constants(data)
        for _ in range(50):
            a, b = rng.standard_normal(8), rng.standard_normal(8)
            diff = a - b
            inner = (dual_gradient(data, a) - dual_gradient(data, b)) @ diff
            nsq = diff @ diff
            assert alpha * nsq <= inner + 1e-8
            assert inner <= lip * nsq + 1e-8


class TestSolve:
    def test_zero_features_closed_form(self, rng):
        hyper = Hyperparameters(1e-2, 1e-1, delta=100.0)
        q = np.eye(4) + 0.2 * np.ones((4, 4))
        inner = rng.standard_normal(4)
        embed = rng.standard_normal(4) ** 2
        data = synthetic_data(q, np.zeros((4, 4)), inner, embed, 1.0, hyper)
        sol = solve(data, tol=1e-12)
        lam2 = hyper.lambda2
        want = np.linalg.solve(q / (2 * lam2) + 4 / hyper.delta * np.eye(4), data.z / (2 * lam2))
        assert sol.converged
        assert np.linalg.norm(sol.gamma - want) <= 1e-10 * (1 + np.linalg.norm(want))

    def test_zero_data_gives_zero(self):
        hyper = Hyperparameters(1e-2, 1e-2, delta=10.0)
        data = synthetic_data(
            np.eye(3), np.eye(3), np.zeros(3), np.zeros(3), 0.0, hyper
        )
        sol = solve(data)
        assert sol.converged
        assert np.allclose(sol.gamma, 0.0)
        assert sol.objective_value == pytest.approx(0.0, abs=1e-15)

    def test_matches_long_plain_gradient_reference(self, rng):
        data, _, _ = make_instance(10, n=6, lam1=1e-1, lam2=1e-1, delta=10.0)
        sol = solve(data, tol=1e-11)
        _, lip = convexity_constants(data)
        gamma = warm_start(data)
        for _ in range(200_000):
            g = dual_gradient(data, gamma)
            nxt = gamma - g / lip
            if np.linalg.norm(g) <= 1e-12 * lip:
                break
            gamma = nxt
        ref = dual_objective(data, gamma)
        assert abs(sol.objective_value - ref) <= 1e-8 * (1 + abs(ref))

    def test_non_convergence_flagged(self):
        data, _, _ = make_instance(11, n=10, lam1=1e-6, lam2=1e-6)
        sol = solve(data, tol=1e-14, max_iter=5)
        assert not sol.converged
        assert sol.iterations == 5

    def test_b_matrix_psd_and_complementarity(self, rng):
        data, _, _ = make_instance(12, n=10, lam1=1e-3, lam2=1e-3, delta=100.0)
        sol = solve(data, max_iter=30_000)
        b = sol.b_matrix
        assert np.linalg.eigvalsh(b)[0] >= -1e-10 * max(np.linalg.eigvalsh(b)[-1], 1)
        s = (data.features * sol.gamma) @ data.features.T
        comp = np.sum(b * (data.hyper.lambda1 * b + 0.5 * (s + s.T)))
        assert abs(comp) <= 1e-8 * (1 + np.sum(b * b))

    def test_delta_big_matches_hard_constraint_dual(self):
        data_big, _, _ = make_instance(13, n=8, lam1=1e-2, lam2=1e-2, delta=1e9)
        hard = data_big.with_hyper(Hyperparameters(1e-2, 1e-2, delta=math.inf))
        sol_big = solve(data_big, tol=1e-8, max_iter=200_000)
        sol_hard = solve(hard, tol=1e-8, max_iter=200_000)
        rel = abs(sol_big.objective_value - sol_hard.objective_value) / (
            1 + abs(sol_hard.objective_value)
        )
        assert rel <= 1e-4

    def test_default_tolerance_formula(self):
        data, _, _ = make_instance(14, n=5)
        want = 1e-8 * (1 + np.linalg.norm(data.z) / (2 * data.hyper.lambda2))
        assert default_tolerance(data) == pytest.approx(want)


class TestPrimalAndGap:
    def test_primal_at_zero_direct_evaluation(self, rng):
        data, _, _ = make_instance(15, n=6)
        h = data.hyper
        got = primal_value(data, np.zeros(6), np.zeros_like(data.feature_gram))
        resid = -data.embed / (2 * h.lambda2) - data.inner
        want = -data.q_sq / (4 * h.lambda2) + h.delta / (2 * 6) * resid @ resid
        assert abs(got - want) <= 1e-10 * (1 + abs(want))

    def test_gap_identity_for_derived_variant(self, rng):
        data, _, _ = make_instance(16, n=7, lam1=3e-2, lam2=2e-2, delta=500.0)
        for _ in range(10):
            gamma = rng.standard_normal(7) * 10.0 ** rng.integers(-2, 2)
            gap = duality_gap(data, gamma)
            grad = dual_gradient(data, gamma)
            want = data.hyper.delta / (2 * 7) * (grad @ grad)
            assert abs(gap - want) <= 1e-8 * (1 + abs(want))

    def test_gap_vanishes_at_convergence(self):
        data, _, _ = make_instance(17, n=10, lam1=1e-2, lam2=1e-2)
        sol = solve(data, tol=1e-9, max_iter=100_000)
        assert sol.converged
        assert sol.gap <= 1e-6 * (1 + abs(sol.objective_value))

    def test_paper_variant_gap_does_not_vanish(self):
        data, _, _ = make_instance(18, n=10, lam1=1e-2, lam2=1e-2, z_variant="paper")
        sol = solve(data, tol=1e-9, max_iter=100_000)
        assert sol.converged
        assert sol.gap > 1e-2 * (1 + abs(sol.objective_value))

    def test_primal_requires_finite_delta(self):
        data, _, _ = make_instance(19, n=4, delta=math.inf)
        with pytest.raises(ValueError):
            primal_value(data, np.zeros(4), np.zeros_like(data.feature_gram))

    def test_recover_b_scaling(self, rng):
        data, _, _ = make_instance(20, n=5, lam1=0.5)
        gamma = rng.standard_normal(5)
        feats = data.features
        neg = -(feats * gamma) @ feats.T
        w, v = np.linalg.eigh(0.5 * (neg + neg.T))
        want = (v * np.clip(w, 0, None)) @ v.T / 0.5
        assert np.allclose(recover_b_matrix(data, gamma), want, atol=1e-10)
