import numpy as np
import pytest

from helpers import multistart_oracle, random_qcqp
from starris_ee.qcqp import (BallBlock, CurvatureError, QcqpProblem, QuadConstraint, SolverOptions,
                             Status, kkt_residual, maximize, project_ball_blocks)


def neg_dist(c):
    # -||x - c||^2 = -x^T x + 2 c^T x - c^T c
    n = len(c)
    return QcqpProblem(-np.eye(n), np.asarray(c, float), -float(np.dot(c, c)))


class TestProblem:
    def test_curvature_checks(self):
        with pytest.raises(CurvatureError):
            QcqpProblem(np.eye(2), np.zeros(2))
        with pytest.raises(CurvatureError):
            QcqpProblem(-np.eye(2), np.zeros(2), 0.0, [QuadConstraint(-np.eye(2), np.zeros(2))])

    def test_overlapping_blocks(self):
        with pytest.raises(ValueError):
            QcqpProblem(-np.eye(3), np.zeros(3), 0.0, [],
                        [BallBlock(np.array([0, 1]), 1.0), BallBlock(np.array([1, 2]), 1.0)])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            QcqpProblem(-np.eye(3), np.zeros(2))


@pytest.mark.parametrize("method", ["barrier", "alm"])
class TestMaximize:
    def test_unconstrained(self, method):
        c = np.array([1.0, -2.0, 0.5])
        sol = maximize(neg_dist(c), np.array([5.0, 5.0, 5.0]), SolverOptions(method=method))
        np.testing.assert_allclose(sol.x, c, atol=1e-7)
        assert sol.objective_value == pytest.approx(0.0, abs=1e-10)
        assert sol.status is Status.CONVERGED

    def test_linear_over_ball(self, method):
        c = np.array([3.0, -4.0])
        prob = QcqpProblem(np.zeros((2, 2)), c, 0.0, [], [BallBlock(np.arange(2), 1.0)])
        sol = maximize(prob, np.zeros(2), SolverOptions(method=method))
        np.testing.assert_allclose(sol.x, c / 5.0, atol=1e-6)
        assert sol.objective_value == pytest.approx(10.0, rel=1e-6)
        assert sol.status is Status.CONVERGED

    def test_infeasible_start(self, method):
        prob = QcqpProblem(np.zeros((2, 2)), np.ones(2), 0.0, [], [BallBlock(np.arange(2), 1.0)])
        sol = maximize(prob, np.array([2.0, 0.0]), SolverOptions(method=method))
        assert sol.status is Status.INFEASIBLE
        np.testing.assert_array_equal(sol.x, [2.0, 0.0])

    def test_zero_gradient_start(self, method):
        c = np.array([0.3, 0.1])
        sol = maximize(neg_dist(c), c.copy(), SolverOptions(method=method))
        assert sol.status is Status.CONVERGED and sol.iterations == 0
        np.testing.assert_array_equal(sol.x, c)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_multistart_oracle(self, method, seed):
        prob = random_qcqp(seed, dim=6, n_constraints=2)
        ref = multistart_oracle(prob, n_starts=100, seed=seed)
        sol = maximize(prob, np.zeros(prob.dim), SolverOptions(method=method))
        assert abs(sol.objective_value - ref) <= 1e-5 * abs(ref)

    def test_deterministic(self, method):
        prob = random_qcqp(11)
        a = maximize(prob, np.zeros(prob.dim), SolverOptions(method=method))
        b = maximize(prob, np.zeros(prob.dim), SolverOptions(method=method))
        assert a.x.tobytes() == b.x.tobytes() and a.objective_value == b.objective_value


class TestContract:
    def test_ascent_and_feasibility_1000(self):
        rng = np.random.default_rng(0)
        for seed in range(1000):
            prob = random_qcqp(seed)
            # feasible random start: shrink a random point toward the feasible origin
            x0 = rng.standard_normal(prob.dim)
            while np.max(prob.violations(x0), initial=-1) > 0:
                x0 *= 0.5
            f0 = prob.objective(x0)
            sol = maximize(prob, x0)
            assert sol.objective_value >= f0 - 1e-12 * (1 + abs(f0))
            tol = 1e-8 * prob.scale()
            assert np.max(prob.violations(sol.x), initial=-1) <= tol
            if sol.status is Status.CONVERGED:
                assert sol.kkt_residual <= 1e-7 * prob.scale()

    @pytest.mark.parametrize("seed", range(5))
    def test_scale_invariance(self, seed):
        prob = random_qcqp(seed + 100)
        scaled = QcqpProblem(7.5 * prob.q0, 7.5 * prob.c0, 7.5 * prob.d0, prob.constraints,
                             prob.ball_blocks)
        a = maximize(prob, np.zeros(prob.dim))
        b = maximize(scaled, np.zeros(prob.dim))
        np.testing.assert_allclose(a.x, b.x, atol=1e-6)

    def test_trace_file(self, tmp_path):
        path = tmp_path / "trace.csv"
        prob = random_qcqp(3)
        maximize(prob, np.zeros(prob.dim), SolverOptions(trace_path=str(path)))
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,objective,residual"
        assert len(lines) > 1 and len(lines[1].split(",")) == 3

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            SolverOptions(method="nope")


class TestKkt:
    def test_unconstrained_optimum(self):
        c = np.array([1.0, 2.0])
        assert kkt_residual(neg_dist(c), c) == 0.0

    def test_ball_pair(self):
        c = np.array([0.6, -0.8]) * 2.5
        prob = QcqpProblem(np.zeros((2, 2)), c, 0.0, [], [BallBlock(np.arange(2), 1.0)])
        x = c / np.linalg.norm(c)
        # gradient 2c = lambda * 2x  =>  lambda = ||c||
        assert kkt_residual(prob, x, [np.linalg.norm(c)]) <= 1e-10

    def test_non_optimal_positive(self):
        prob = random_qcqp(5)
        assert kkt_residual(prob, np.zeros(prob.dim), np.zeros(len(prob.violations(np.zeros(prob.dim))))) > 0

    def test_negative_multiplier(self):
        c = np.array([1.0, 2.0])
        prob = QcqpProblem(np.zeros((2, 2)), c, 0.0, [], [BallBlock(np.arange(2), 1.0)])
        with pytest.raises(ValueError):
            kkt_residual(prob, np.zeros(2), [-1.0])


class TestProjection:
    def test_shrink(self):
        out = project_ball_blocks(np.array([2.0, 0.0]), [BallBlock(np.arange(2), 1.0)])
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_inside(self):
        x = np.array([0.3, 0.4])
        np.testing.assert_array_equal(project_ball_blocks(x, [BallBlock(np.arange(2), 1.0)]), x)

    def test_joint_element(self):
        out = project_ball_blocks(np.array([1.0, 0.0, 1.0, 0.0]), [BallBlock(np.arange(4), 1.0)])
        np.testing.assert_allclose(out, [1 / np.sqrt(2), 0, 1 / np.sqrt(2), 0], atol=1e-15)
        assert out[0] ** 2 + out[2] ** 2 == pytest.approx(1.0, abs=1e-15)

    def test_idempotent(self):
        blocks = [BallBlock(np.array([0, 2]), 0.7), BallBlock(np.array([1]), 0.2)]
        x = np.random.default_rng(0).standard_normal(4) * 3
        once = project_ball_blocks(x, blocks)
        np.testing.assert_array_equal(project_ball_blocks(once, blocks), once)

    def test_overlap(self):
        with pytest.raises(ValueError):
            project_ball_blocks(np.zeros(3), [BallBlock(np.array([0, 1]), 1.0),
                                              BallBlock(np.array([1, 2]), 1.0)])
