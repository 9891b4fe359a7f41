"""Shared generators and independent oracles for the test-suite."""

import numpy as np
from scipy.optimize import minimize

from starris_ee.qcqp import BallBlock, QcqpProblem, QuadConstraint


def random_qcqp(seed, dim=None, n_constraints=2, with_ball=None):
    """Random concave QCQP whose unconstrained maximizer is usually infeasible.

    The origin is strictly feasible, so it doubles as the start point.
    """
    rng = np.random.default_rng(seed)
    n = dim or int(rng.integers(2, 9))
    a = rng.standard_normal((n, n))
    q0 = -(a @ a.T / n + 0.05 * np.eye(n))
    c0 = 3.0 * rng.standard_normal(n)
    cons = []
    for _ in range(n_constraints):
        b = rng.standard_normal((n, n))
        q = b @ b.T / n + 0.1 * np.eye(n)
        c = 0.3 * rng.standard_normal(n)
        cons.append(QuadConstraint(q, c, 0.0, float(rng.uniform(0.5, 2.0))))
    balls = []
    if with_ball if with_ball is not None else rng.uniform() < 0.5:
        k = int(rng.integers(1, n + 1))
        balls.append(BallBlock(np.sort(rng.choice(n, k, replace=False)), float(rng.uniform(0.5, 1.5))))
    return QcqpProblem(q0, c0, float(rng.standard_normal()), cons, balls)


def multistart_oracle(problem, n_starts=100, seed=0):
    """Best objective from SLSQP local searches started at random points.

    Independent of the package solvers: it only uses the problem data.
    """
    rng = np.random.default_rng(seed)
    n = problem.dim
    cons = [{"type": "ineq", "fun": (lambda x, c=c: -(x @ c.q @ x + 2 * c.c @ x + c.d - c.bound)),
             "jac": (lambda x, c=c: -2 * (c.q @ x + c.c))} for c in problem.constraints]
    for b in problem.ball_blocks:
        idx = b.indices
        cons.append({"type": "ineq", "fun": (lambda x, idx=idx, cap=b.cap: cap ** 2 - x[idx] @ x[idx])})
    f = lambda x: -(x @ problem.q0 @ x + 2 * problem.c0 @ x + problem.d0)
    jac = lambda x: -2 * (problem.q0 @ x + problem.c0)
    best = -np.inf
    for _ in range(n_starts):
        x0 = rng.uniform(-2, 2, n)
        res = minimize(f, x0, jac=jac, constraints=cons, method="SLSQP",
                       options={"ftol": 1e-14, "maxiter": 500})
        x = res.x
        g = problem.violations(x)
        if g.size == 0 or np.max(g) <= 1e-9:
            best = max(best, problem.objective(x))
    return best
