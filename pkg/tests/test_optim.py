import math

import numpy as np
import pytest

from lieopt.diff import ParamSet
from lieopt.errors import DomainError, EvaluationError, SolverError
from lieopt.optim import (
    Adaptive,
    Cauchy,
    Constant,
    Huber,
    Model,
    NormalEquations,
    OptState,
    ResidualBlock,
    StopOnPlateau,
    Trivial,
    TrustRegion,
    apply_kernel,
    build_normal_equations,
    correct_fast_triggs,
    evaluate,
    init_state,
    lm_step,
    solve_cholesky,
    solve_pcg,
    strategy_update,
)


def scalar_model(theta0, target, weight=None):
    return Model(ParamSet(np.array([theta0])),
                 lambda p: p[0].reshape(1, 1),
                 targets=np.array([[target]]),
                 weights=weight,
                 independent=False)


class TestKernels:
    def test_trivial(self):
        rho, drho = apply_kernel(Trivial(), 4.0)
        assert (rho, drho) == (4.0, 1.0)

    def test_huber_inlier(self):
        rho, drho = apply_kernel(Huber(1.0), 0.25)
        assert (rho, drho) == (0.25, 1.0)

    def test_huber_outlier(self):
        rho, drho = apply_kernel(Huber(1.0), 4.0)
        assert (rho, drho) == (3.0, 0.5)

    def test_cauchy_zero(self):
        rho, drho = apply_kernel(Cauchy(1.0), 0.0)
        assert (rho, drho) == (0.0, 1.0)

    def test_negative_cost_rejected(self):
        with pytest.raises(DomainError):
            apply_kernel(Huber(1.0), -1.0)

    @pytest.mark.parametrize("kernel", [Trivial(), Huber(0.7), Cauchy(2.0)])
    def test_kernel_invariants(self, kernel):
        c = np.linspace(0.0, 50.0, 200)
        rho, drho = apply_kernel(kernel, c)
        assert rho[0] == 0.0
        assert (drho > 0).all()
        assert (np.diff(rho) >= -1e-12).all()          # non-decreasing
        assert (np.diff(drho) <= 1e-12).all()          # concave: rho' non-increasing

    def test_vectorized(self):
        rho, drho = apply_kernel(Huber(1.0), np.array([0.25, 4.0]))
        np.testing.assert_array_equal(rho, [0.25, 3.0])
        np.testing.assert_array_equal(drho, [1.0, 0.5])


class TestFastTriggs:
    def _block(self, r, j=None, w=None):
        r = np.atleast_1d(np.asarray(r, dtype=np.float64))
        j = np.atleast_2d(j) if j is not None else np.eye(len(r))
        cost = float(r @ r) if w is None else float(r @ w @ r)
        return ResidualBlock(r, j, w, cost)

    def test_trivial_noop(self):
        blk = self._block([2.0])
        out = correct_fast_triggs(blk, Trivial())
        assert out is blk

    def test_huber_scaling(self):
        blk = self._block([2.0])  # cost 4 -> rho' = 0.5
        out = correct_fast_triggs(blk, Huber(1.0))
        s = math.sqrt(0.5)
        np.testing.assert_allclose(out.residual, [2.0 * s])
        np.testing.assert_allclose(out.jacobian, [[s]])
        np.testing.assert_allclose(out.cost, 2.0)

    def test_zero_residual(self):
        blk = self._block([0.0])
        out = correct_fast_triggs(blk, Cauchy(1.0))
        np.testing.assert_array_equal(out.residual, [0.0])

    def test_equivalence_with_prescaled_normal_equations(self):
        # correcting then assembling equals assembling sqrt(rho')-scaled blocks
        rng = np.random.default_rng(0)
        blocks = []
        for _ in range(5):
            r = rng.normal(size=3) * 3
            j = rng.normal(size=(3, 4))
            w = np.eye(3)
            blocks.append(ResidualBlock(r, j, w, float(r @ w @ r)))
        kernel = Huber(1.0)
        corrected = [correct_fast_triggs(b, kernel) for b in blocks]
        eq1 = build_normal_equations(corrected, 0.3)
        manual = []
        for b in blocks:
            _, drho = apply_kernel(kernel, b.cost)
            s = math.sqrt(float(drho))
            manual.append(ResidualBlock(s * b.residual, s * b.jacobian, b.weight,
                                        float(drho) * b.cost))
        eq2 = build_normal_equations(manual, 0.3)
        np.testing.assert_allclose(eq1.a, eq2.a, atol=1e-12)
        np.testing.assert_allclose(eq1.b, eq2.b, atol=1e-12)


class TestNormalEquations:
    def test_single_scalar_block(self):
        blk = ResidualBlock(np.array([2.0]), np.array([[1.0]]), None, 4.0)
        eq = build_normal_equations([blk], 0.0)
        assert eq.a[0, 0] == 1.0 and eq.b[0] == -2.0

    def test_damped_scalar_block(self):
        blk = ResidualBlock(np.array([2.0]), np.array([[1.0]]), None, 4.0)
        eq = build_normal_equations([blk], 1.0)
        assert eq.a[0, 0] == 2.0 and eq.b[0] == -2.0
        assert solve_cholesky(eq)[0] == pytest.approx(-1.0, abs=1e-15)

    def test_two_blocks_double(self):
        blk = ResidualBlock(np.array([2.0]), np.array([[1.0]]), None, 4.0)
        eq1 = build_normal_equations([blk], 0.5)
        eq2 = build_normal_equations([blk, blk], 0.5)
        np.testing.assert_allclose(eq2.a, 2 * eq1.a)
        np.testing.assert_allclose(eq2.b, 2 * eq1.b)

    def test_sparse_matches_dense(self):
        rng = np.random.default_rng(1)
        blocks = []
        for k in range(6):
            cols = np.sort(rng.choice(12, size=4, replace=False))
            j = rng.normal(size=(3, 4))
            r = rng.normal(size=3)
            w = np.diag(rng.uniform(0.5, 2.0, size=3))
            blocks.append(ResidualBlock(r, j, w, float(r @ w @ r), cols))
        dense = build_normal_equations(blocks, 0.1, n=12, sparse=False)
        sparse = build_normal_equations(blocks, 0.1, n=12, sparse=True)
        np.testing.assert_allclose(sparse.a.toarray(), dense.a, atol=1e-14)
        np.testing.assert_allclose(sparse.b, dense.b, atol=1e-14)


class TestSolvers:
    def test_identity(self):
        eq = NormalEquations(np.eye(3), np.array([1.0, 2.0, 3.0]), np.ones(3), 0.0)
        np.testing.assert_array_equal(solve_cholesky(eq), [1, 2, 3])
        np.testing.assert_allclose(solve_pcg(eq), [1, 2, 3], atol=1e-12)

    def test_diagonal(self):
        eq = NormalEquations(np.diag([1.0, 2.0]), np.array([2.0, 2.0]), np.ones(2), 0.0)
        np.testing.assert_allclose(solve_cholesky(eq), [2, 1], atol=1e-15)

    @pytest.mark.parametrize("n", [20, 80, 200])
    def test_cross_solver_oracle(self, n):
        rng = np.random.default_rng(n)
        m = rng.normal(size=(n, n))
        a = m @ m.T + n * np.eye(n)
        b = rng.normal(size=n)
        eq = NormalEquations(a, b, np.diag(a).copy(), 0.0)
        d1 = solve_cholesky(eq)
        d2 = solve_pcg(eq, tol=1e-12)
        assert np.abs(d1 - d2).max() / (1 + np.abs(d1).max()) < 1e-8

    def test_jitter_rescues_semidefinite(self):
        a = np.diag([1.0, 0.0])  # PSD but singular
        eq = NormalEquations(a, np.array([1.0, 0.0]), np.ones(2), 0.0)
        d = solve_cholesky(eq)
        assert np.isfinite(d).all()

    def test_indefinite_fails(self):
        a = np.diag([1.0, -5.0])
        eq = NormalEquations(a, np.array([1.0, 1.0]), np.ones(2), 0.0)
        with pytest.raises(SolverError):
            solve_cholesky(eq)

    def test_pcg_iteration_cap(self):
        rng = np.random.default_rng(9)
        m = rng.normal(size=(40, 40))
        a = m @ m.T + 1e-8 * np.eye(40)  # terrible conditioning
        eq = NormalEquations(a, rng.normal(size=40), np.diag(a).copy(), 0.0)
        with pytest.raises(SolverError) as exc:
            solve_pcg(eq, tol=1e-14, max_iter=3)
        assert exc.value.residual_norm is not None

    def test_pcg_zero_rhs(self):
        eq = NormalEquations(np.eye(2), np.zeros(2), np.ones(2), 0.0)
        np.testing.assert_array_equal(solve_pcg(eq), np.zeros(2))


class TestStrategies:
    def test_trust_region_full_gain(self):
        lam, nu, accept = strategy_update(TrustRegion(), 1.0, 2.0, 1.0)
        assert accept and lam == pytest.approx(1.0 / 3.0) and nu == 2.0

    def test_trust_region_rejection(self):
        lam, nu, accept = strategy_update(TrustRegion(), 1.0, 2.0, -0.5)
        assert not accept and lam == 2.0 and nu == 4.0

    def test_constant(self):
        lam, nu, accept = strategy_update(Constant(1e-4), 1e-4, 2.0, 0.5)
        assert accept and lam == 1e-4
        _, _, rejected = strategy_update(Constant(1e-4), 1e-4, 2.0, -0.1)
        assert not rejected

    def test_adaptive(self):
        lam, _, accept = strategy_update(Adaptive(), 1.0, 2.0, 0.9)
        assert accept and lam == 0.5
        lam, _, accept = strategy_update(Adaptive(), 1.0, 2.0, 0.1)
        assert accept and lam == 2.0
        lam, _, _ = strategy_update(Adaptive(), 1.0, 2.0, 0.5)
        assert lam == 1.0

    def test_lambda_clamped(self):
        lam, _, _ = strategy_update(TrustRegion(), 1e-12, 2.0, 1.0)
        assert lam == 1e-12
        lam, _, _ = strategy_update(TrustRegion(), 1e12, 2.0, -1.0)
        assert lam == 1e12


class TestLMStep:
    def test_gauss_newton_limit_exact_on_linear(self):
        model = scalar_model(0.0, 2.0)
        state = init_state(model.params, Constant(1e-14))
        state = lm_step(state, model, strategy=Constant(1e-14))
        assert state.status == "accepted"
        assert abs(state.params[0][0] - 2.0) < 1e-10

    def test_constant_damping_halves_step(self):
        model = scalar_model(0.0, 2.0)
        state = init_state(model.params, Constant(1.0))
        state = lm_step(state, model, strategy=Constant(1.0))
        assert abs(state.params[0][0] - 1.0) < 1e-9

    def test_at_optimum_converged(self):
        model = scalar_model(2.0, 2.0)
        state = init_state(model.params, Constant(1e-4))
        out = lm_step(state, model, strategy=Constant(1e-4))
        assert out.status == "converged"
        assert out.params[0][0] == 2.0
        assert out.loss == 0.0

    def test_weighted_linear_solution(self):
        # two targets with different weights: optimum is the weighted mean
        targets = np.array([[0.0], [10.0]])
        weights = np.array([[[3.0]], [[1.0]]])
        model = Model(ParamSet(np.array([5.0])),
                      lambda p: np.repeat(p[0].reshape(1, 1), 2, axis=0),
                      targets=targets, weights=weights, independent=False)
        state = init_state(model.params, Constant(1e-13))
        state = lm_step(state, model, strategy=Constant(1e-13))
        assert abs(state.params[0][0] - 2.5) < 1e-9

    def test_rejection_and_retry(self):
        # loss increases for the full step at lambda ~ 0 on this curved model;
        # TrustRegion must retry with larger damping inside one lm_step
        def fn(p):
            x = p[0][0]
            return np.array([[np.exp(x) - 1.0 + 0.1 * x**3]])

        model = Model(ParamSet(np.array([2.5])), fn, independent=False)
        strategy = TrustRegion(damping=1e-12)
        state = init_state(model.params, strategy)
        out = lm_step(state, model, strategy=strategy)
        assert out.status in ("accepted", "failed")
        if out.status == "accepted":
            assert out.loss < evaluate(model, model.params)[1]

    def test_accepted_losses_non_increasing(self):
        rng = np.random.default_rng(5)
        xs = rng.normal(size=(20, 1))
        ys = 3.0 * xs + 1.0 + rng.normal(size=(20, 1)) * 0.1

        def fn(p):
            return p[0][0] * xs + p[0][1] * np.tanh(xs * p[0][0])

        model = Model(ParamSet(np.array([0.5, 0.5])), fn, targets=ys, independent=False)
        strategy = TrustRegion()
        state = init_state(model.params, strategy)
        losses = [evaluate(model, state.params)[1]]
        for _ in range(15):
            state = lm_step(state, model, strategy=strategy)
            if state.status == "accepted":
                losses.append(state.loss)
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_evaluation_error_at_base_propagates(self):
        model = Model(ParamSet(np.array([np.inf])), lambda p: p[0].reshape(1, 1),
                      independent=False)
        state = init_state(model.params, Constant())
        with pytest.raises(EvaluationError):
            lm_step(state, model, strategy=Constant())


class TestEvaluate:
    def test_trivial_loss(self):
        model = scalar_model(2.0, 0.0)
        blocks, loss = evaluate(model, model.params)
        assert loss == 4.0
        assert blocks[0].cost == 4.0

    def test_huber_loss(self):
        model = scalar_model(2.0, 0.0)
        _, loss = evaluate(model, model.params, kernel=Huber(1.0))
        assert loss == pytest.approx(3.0)

    def test_at_ground_truth(self):
        model = scalar_model(7.0, 7.0)
        _, loss = evaluate(model, model.params)
        assert loss == 0.0

    def test_nonfinite_index(self):
        def fn(p):
            out = np.ones((3, 1))
            out[1] = np.nan
            return out

        model = Model(ParamSet(np.zeros(1)), fn, independent=False)
        with pytest.raises(EvaluationError) as exc:
            evaluate(model, model.params)
        assert exc.value.index == 1


class TestRobustLocation:
    """Contaminated 1D location: 9 inliers near 0, one outlier at 100.

    Residuals are weighted by the inlier information 1/sigma^2, so Huber(1)
    switches to its linear zone at one whitened sigma.
    """

    SIGMA = 0.01

    @classmethod
    def _data(cls):
        rng = np.random.default_rng(17)
        y = np.concatenate([rng.normal(0.0, cls.SIGMA, size=9), [100.0]])
        return y.reshape(-1, 1)

    @classmethod
    def _model(cls, theta0=50.0):
        y = cls._data()
        weights = np.full((10, 1, 1), 1.0 / cls.SIGMA ** 2)
        return Model(ParamSet(np.array([theta0])),
                     lambda p: np.repeat(p[0].reshape(1, 1), 10, axis=0),
                     targets=y, weights=weights, independent=False), y

    @classmethod
    def _grid_minimum(cls, y, kernel):
        grid = np.linspace(-2.0, 60.0, 400001)
        costs = (grid[None, :] - y) ** 2 / cls.SIGMA ** 2
        rho, _ = apply_kernel(kernel, costs)
        return grid[rho.sum(axis=0).argmin()]

    def _optimize(self, kernel):
        model, y = self._model()
        strategy = TrustRegion(damping=1e-4)
        state = init_state(model.params, strategy)
        sched = StopOnPlateau(steps=100, patience=5, decreasing=1e-10)
        while sched.continual():
            state = lm_step(state, model, kernel=kernel, strategy=strategy)
            sched.step(state.loss)
        return float(state.params[0][0]), y

    def test_trivial_lands_on_contaminated_mean(self):
        est, y = self._optimize(Trivial())
        assert abs(est - 10.0) < 0.5
        assert abs(est - self._grid_minimum(y, Trivial())) < 1e-3

    def test_huber_resists_outlier(self):
        est, y = self._optimize(Huber(1.0))
        assert abs(est) < 0.1
        assert abs(est - self._grid_minimum(y, Huber(1.0))) < 1e-3


class TestStopOnPlateau:
    def test_flat_losses(self):
        sched = StopOnPlateau(steps=10, patience=3, decreasing=1e-3)
        results = [sched.step(10.0) for _ in range(4)]
        assert results == [None, None, None, "plateau"]

    def test_budget(self):
        sched = StopOnPlateau(steps=10, patience=3, decreasing=1e-3)
        results = [sched.step(10.0 / 2 ** k) for k in range(10)]
        assert results[:-1] == [None] * 9
        assert results[-1] == "budget"

    def test_slow_decrease(self):
        sched = StopOnPlateau(steps=10, patience=3, decreasing=1e-3)
        results = [sched.step(v) for v in (10.0, 9.0, 8.9995, 8.999, 8.9985)]
        assert results == [None, None, None, None, "plateau"]

    def test_nan_diverges(self):
        sched = StopOnPlateau()
        assert sched.step(float("nan")) == "diverged"
        assert not sched.continual()

    def test_continual_loop(self):
        sched = StopOnPlateau(steps=3, patience=2, decreasing=1e-3)
        n = 0
        while sched.continual():
            n += 1
            sched.step(1.0 / n)
        assert n == 3
