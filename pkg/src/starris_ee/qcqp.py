"""Concave QCQP maximization in real variables.

Problems have the form

    maximize    x^T Q0 x + 2 c0^T x + d0
    subject to  x^T Qi x + 2 ci^T x + di <= bound_i      (Qi PSD)
                ||x[B]||^2 <= cap_B^2                    (ball blocks)

Two algorithms share one contract:

* ``"barrier"`` (default): log-barrier path following with damped Newton
  steps and a phase-I search for a strictly feasible start.
* ``"alm"``: augmented Lagrangian outer loop around projected-gradient
  ascent; with only ball blocks it reduces to plain projected gradient.

Either way the returned point is feasible and never worse than ``x0``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

log = logging.getLogger(__name__)


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


class CurvatureError(ValueError):
    """Objective not concave or a constraint not convex."""


@dataclass(frozen=True)
class QuadConstraint:
    q: np.ndarray
    c: np.ndarray
    d: float = 0.0
    bound: float = 0.0

    def value(self, x):
        return float(x @ self.q @ x + 2.0 * self.c @ x + self.d - self.bound)


@dataclass(frozen=True)
class BallBlock:
    indices: np.ndarray
    cap: float


@dataclass
class QcqpProblem:
    q0: np.ndarray
    c0: np.ndarray
    d0: float = 0.0
    constraints: list = field(default_factory=list)
    ball_blocks: list = field(default_factory=list)
    check_curvature: bool = True

    def __post_init__(self):
        self.q0 = 0.5 * (np.asarray(self.q0, float) + np.asarray(self.q0, float).T)
        self.c0 = np.asarray(self.c0, float)
        n = self.c0.size
        if self.q0.shape != (n, n):
            raise ValueError("q0 and c0 disagree on the dimension")
        self.constraints = [
            QuadConstraint(0.5 * (np.asarray(c.q, float) + np.asarray(c.q, float).T),
                           np.asarray(c.c, float), float(c.d), float(c.bound))
            for c in self.constraints
        ]
        blocks = []
        seen = np.zeros(n, bool)
        for b in self.ball_blocks:
            idx = np.asarray(b.indices, int)
            if np.any(seen[idx]):
                raise ValueError("ball blocks overlap")
            seen[idx] = True
            blocks.append(BallBlock(idx, float(b.cap)))
        self.ball_blocks = blocks
        if self.check_curvature:
            self._check_curvature()

    @property
    def dim(self):
        return self.c0.size

    def _check_curvature(self):
        def extreme(q, largest):
            if not np.any(q):
                return 0.0
            ev = np.linalg.eigvalsh(q)
            return ev[-1] if largest else ev[0]

        scale = max(1.0, float(np.max(np.abs(self.q0), initial=0.0)))
        if extreme(self.q0, True) > 1e-9 * scale:
            raise CurvatureError("objective matrix is not negative semidefinite")
        for i, con in enumerate(self.constraints):
            scale = max(1.0, float(np.max(np.abs(con.q), initial=0.0)))
            if extreme(con.q, False) < -1e-9 * scale:
                raise CurvatureError(f"constraint {i} matrix is not positive semidefinite")

    def objective(self, x):
        return float(x @ self.q0 @ x + 2.0 * self.c0 @ x + self.d0)

    def gradient(self, x):
        return 2.0 * (self.q0 @ x + self.c0)

    def violations(self, x):
        """Constraint values ``g(x) <= 0``: quadratic constraints first, then balls."""
        quad = [c.value(x) for c in self.constraints]
        ball = [float(x[b.indices] @ x[b.indices]) - b.cap ** 2 for b in self.ball_blocks]
        return np.array(quad + ball)

    def constraint_gradients(self, x):
        rows = [2.0 * (c.q @ x + c.c) for c in self.constraints]
        for b in self.ball_blocks:
            g = np.zeros_like(x)
            g[b.indices] = 2.0 * x[b.indices]
            rows.append(g)
        return np.array(rows).reshape(len(rows), x.size)

    def scale(self):
        return 1.0 + float(np.linalg.norm(self.c0))


@dataclass(frozen=True)
class SolverOptions:
    method: str = "barrier"
    tol_kkt: float | None = None  # default 1e-7 * (1 + ||c0||)
    tol_feas: float = 1e-8
    max_inner: int = 5000
    max_outer: int = 60
    trace_path: str | None = None

    def __post_init__(self):
        if self.method not in ("barrier", "alm", "projected-gradient"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class QcqpSolution:
    x: np.ndarray
    objective_value: float
    kkt_residual: float
    iterations: int
    status: Status
    multipliers: np.ndarray | None = None


def kkt_residual(problem: QcqpProblem, x, multipliers=None):
    """Max of stationarity, complementarity and primal infeasibility."""
    g = problem.violations(x)
    lam = np.zeros(g.size) if multipliers is None else np.asarray(multipliers, float)
    if lam.size != g.size:
        raise ValueError("one multiplier per constraint (quadratic first, then balls)")
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    grad = problem.gradient(x)
    if g.size:
        grad = grad - lam @ problem.constraint_gradients(x)
    stat = float(np.max(np.abs(grad), initial=0.0))
    comp = float(np.max(np.abs(lam * g), initial=0.0))
    feas = float(np.max(np.maximum(g, 0.0), initial=0.0))
    return max(stat, comp, feas)


def project_ball_blocks(x, ball_blocks):
    """Rescale every block whose norm exceeds its cap back onto the cap."""
    out = np.array(x, float, copy=True)
    seen = np.zeros(out.size, bool)
    for b in ball_blocks:
        idx = np.asarray(b.indices, int)
        if np.any(seen[idx]):
            raise ValueError("ball blocks overlap")
        seen[idx] = True
        nrm = np.linalg.norm(out[idx])
        # a few ulps of slack keep the map idempotent after rounding
        if nrm > b.cap * (1.0 + 4.0 * np.finfo(float).eps):
            out[idx] *= b.cap / nrm
    return out


class _Tracer:
    def __init__(self, path):
        self._fh = open(path, "w") if path else None
        if self._fh:
            self._fh.write("iteration,objective,residual\n")

    def __call__(self, it, obj, res):
        if self._fh:
            self._fh.write(f"{it},{obj:.12g},{res:.6g}\n")

    def close(self):
        if self._fh:
            self._fh.close()


def maximize(problem: QcqpProblem, x0, opts: SolverOptions | None = None):
    """Maximize ``problem`` starting from the feasible point ``x0``."""
    opts = opts or SolverOptions()
    x0 = np.asarray(x0, float)
    tol_feas = opts.tol_feas * problem.scale()
    tol_kkt = opts.tol_kkt if opts.tol_kkt is not None else 1e-7 * problem.scale()
    f0 = problem.objective(x0)
    g0 = problem.violations(x0)
    if g0.size and np.max(g0) > tol_feas:
        return QcqpSolution(x0, f0, float("inf"), 0, Status.INFEASIBLE)
    if not np.any(problem.gradient(x0)):
        lam = np.zeros(g0.size)
        return QcqpSolution(x0, f0, kkt_residual(problem, x0, lam), 0, Status.CONVERGED, lam)

    tracer = _Tracer(opts.trace_path)
    try:
        if opts.method == "barrier":
            x, lam, iters = _barrier(problem, x0, opts, tracer)
        elif opts.method in ("alm", "projected-gradient"):
            x, lam, iters = _alm(problem, x0, opts, tol_kkt, tracer)
        else:
            raise ValueError(f"unknown method {opts.method!r}")
    finally:
        tracer.close()

    g = problem.violations(x)
    if (g.size and np.max(g) > tol_feas) or problem.objective(x) < f0:
        x = x0
    lam = _best_multipliers(problem, x, lam)
    res = kkt_residual(problem, x, lam)
    status = Status.CONVERGED if res <= tol_kkt else Status.MAX_ITER
    return QcqpSolution(x, problem.objective(x), res, iters, status, lam)


def _best_multipliers(problem, x, lam):
    """Refit multipliers of nearly active constraints by NNLS; keep the better set.

    Barrier multipliers ``1/(t*slack)`` inherit the cancellation error of the
    slack, so close to the boundary a direct fit of the stationarity equations
    is more accurate.
    """
    g = problem.violations(x)
    if not g.size:
        return lam
    base = np.zeros(g.size) if lam is None or len(lam) != g.size else np.asarray(lam, float)
    jac = problem.constraint_gradients(x)
    scale = np.maximum(1.0, np.abs(g) + np.linalg.norm(jac, axis=1))
    near = -g <= 1e-6 * scale
    if not np.any(near):
        return base
    fit = base.copy()
    fit[near] = 0.0
    rhs = problem.gradient(x) - fit @ jac
    fit[near] = nnls(jac[near].T, rhs)[0]
    if kkt_residual(problem, x, fit) < kkt_residual(problem, x, base):
        return fit
    return base


# ---------------------------------------------------------------------------
# log-barrier method
# ---------------------------------------------------------------------------


class _Barrier:
    """Vectorized values/derivatives of all constraints (balls handled sparsely).

    With ``phase_one`` an extra trailing variable ``s`` is appended and every
    constraint becomes ``g_i(x) - s <= 0``.
    """

    def __init__(self, problem: QcqpProblem, phase_one=False):
        n = problem.dim
        # constant constraints carry no information once x0 is known feasible
        self.kept = [i for i, c in enumerate(problem.constraints) if np.any(c.q) or np.any(c.c)]
        keep = [problem.constraints[i] for i in self.kept]
        self.n_quad = len(problem.constraints)
        nv = n + 1 if phase_one else n
        self.q = np.zeros((len(keep), nv, nv))
        self.c = np.zeros((len(keep), nv))
        for i, con in enumerate(keep):
            self.q[i, :n, :n] = con.q
            self.c[i, :n] = con.c
        if phase_one:
            self.c[:, -1] = -0.5
        self.d = np.array([c.d - c.bound for c in keep])
        self.member = np.zeros((len(problem.ball_blocks), nv))
        for i, b in enumerate(problem.ball_blocks):
            self.member[i, b.indices] = 1.0
        self.caps2 = np.array([b.cap ** 2 for b in problem.ball_blocks])
        self.phase_one = phase_one

    @property
    def m(self):
        return len(self.d) + len(self.caps2)

    def values(self, x):
        qx = self.q @ x
        quad = qx @ x + 2.0 * self.c @ x + self.d
        ball = self.member @ (x * x) - self.caps2
        if self.phase_one:
            ball = ball - x[-1]
        return np.concatenate([quad, ball]), qx

    def derivatives(self, x, qx, slack):
        """Gradient and Hessian of ``-sum log(slack)``."""
        nq = len(self.d)
        inv = 1.0 / slack
        jq = 2.0 * (qx + self.c)
        grad = inv[:nq] @ jq
        hess = 2.0 * np.einsum("i,ijk->jk", inv[:nq], self.q) + (jq.T * inv[:nq] ** 2) @ jq
        if len(self.caps2):
            ib = inv[nq:]
            jb = self.member * (2.0 * x)
            if self.phase_one:
                jb[:, -1] = -1.0
            grad = grad + jb.T @ ib
            hess = hess + np.diag(2.0 * (self.member.T @ ib)) + (jb.T * ib ** 2) @ jb
        return grad, hess

    def multipliers(self, slack, t):
        lam = np.zeros(self.n_quad + len(self.caps2))
        nq = len(self.d)
        lam[self.kept] = 1.0 / (t * slack[:nq])
        lam[self.n_quad:] = 1.0 / (t * slack[nq:])
        return lam


_NEWTON_STEPS = 200


def _newton_solve(hess, grad):
    try:
        low = np.linalg.cholesky(hess)
        return -np.linalg.solve(low.T, np.linalg.solve(low, grad))
    except np.linalg.LinAlgError:
        reg = 1e-12 * max(1.0, float(np.trace(hess)) / hess.shape[0])
        return -np.linalg.lstsq(hess + reg * np.eye(hess.shape[0]), grad, rcond=None)[0]


def _center(obj_grad_hess, bar: _Barrier, x, t, max_steps, stop_below_zero=False):
    """Damped Newton minimization of ``t * obj(x) - sum log(-g(x))``.

    Inside the quadratic-convergence region (Newton decrement below 1/4) full
    steps are taken without a line search, so the final digits are not lost
    to roundoff in the barrier value.
    """
    steps = 0
    g, qx = bar.values(x)
    prev_dec = np.inf
    for _ in range(max_steps):
        slack = -g
        fval, fgrad, fhess = obj_grad_hess(x)
        bgrad, bhess = bar.derivatives(x, qx, slack)
        grad = t * fgrad + bgrad
        hess = t * fhess + bhess
        dx = _newton_solve(hess, grad)
        dec = -grad @ dx
        steps += 1
        if not np.isfinite(dec) or dec / 2.0 <= 1e-16:
            break
        if dec < 0.25:
            if dec < 1e-8 and dec >= 0.5 * prev_dec:
                break  # roundoff floor
            xn = x + dx
            gn, qxn = bar.values(xn)
            if np.all(gn < 0):
                x, g, qx = xn, gn, qxn
                prev_dec = dec
                if stop_below_zero and x[-1] < 0:
                    break
                continue
        phi = t * fval - np.sum(np.log(slack))
        step = 1.0
        while step > 1e-14:
            xn = x + step * dx
            gn, qxn = bar.values(xn)
            if np.all(gn < 0):
                phin = t * obj_grad_hess(xn)[0] - np.sum(np.log(-gn))
                if phin <= phi - 0.25 * step * dec:
                    break
            step *= 0.5
        else:
            break
        x, g, qx = xn, gn, qxn
        prev_dec = dec
        if stop_below_zero and x[-1] < 0:
            break
    return x, g, steps


def _barrier(problem: QcqpProblem, x0, opts, tracer):
    bar = _Barrier(problem)
    neg_q0 = -2.0 * problem.q0

    def negobj(x):
        return -problem.objective(x), -problem.gradient(x), neg_q0

    if bar.m == 0:
        x, _, it = _center(negobj, bar, x0, 1.0, opts.max_inner)
        tracer(it, problem.objective(x), 0.0)
        return x, np.zeros(0), it

    x, total = _phase_one(problem, bar, x0, opts)
    if x is None:
        return x0, bar.multipliers(np.ones(bar.m), np.inf), total

    f_scale = 1.0 + abs(problem.objective(x0))
    tol_gap = 1e-9 * f_scale
    t = max(bar.m / f_scale, 1e-8)
    slack = -bar.values(x)[0]
    for outer in range(opts.max_outer):
        x, g, it = _center(negobj, bar, x, t, _NEWTON_STEPS)
        total += it
        slack = -g
        tracer(outer, problem.objective(x), bar.m / t)
        if bar.m / t <= tol_gap or total >= opts.max_inner:
            break
        t *= 20.0
    return x, bar.multipliers(slack, t), total


def _phase_one(problem: QcqpProblem, bar: _Barrier, x0, opts):
    """Find a strictly feasible point; ``None`` if the interior looks empty."""
    g0, _ = bar.values(x0)
    margin = 1e-9 * (1.0 + np.max(np.abs(g0)))
    if np.max(g0) < -margin:
        return x0, 0
    n = x0.size
    aug = _Barrier(problem, phase_one=True)
    lin = np.zeros(n + 1)
    lin[-1] = 1.0
    zero = np.zeros((n + 1, n + 1))

    def sobj(y):
        return y[-1], lin, zero

    y = np.concatenate([x0, [np.max(g0) + 1.0]])
    total = 0
    t = 1.0
    for _ in range(opts.max_outer):
        y, _, it = _center(sobj, aug, y, t, _NEWTON_STEPS, stop_below_zero=True)
        total += it
        if y[-1] < 0:
            return y[:n], total
        if aug.m / t < 1e-12 * (1.0 + abs(y[-1])):
            break
        t *= 20.0
    return None, total


# ---------------------------------------------------------------------------
# augmented Lagrangian / projected gradient
# ---------------------------------------------------------------------------


def _alm(problem: QcqpProblem, x0, opts, tol_kkt, tracer):
    cons = problem.constraints
    lam = np.zeros(len(cons))
    rho = 10.0 / problem.scale()
    x = x0.copy()
    total = 0

    def lagrangian(z):
        f = problem.objective(z)
        grad = problem.gradient(z)
        for i, con in enumerate(cons):
            gi = con.value(z)
            shifted = max(0.0, lam[i] + rho * gi)
            f -= (shifted ** 2 - lam[i] ** 2) / (2.0 * rho)
            grad = grad - shifted * 2.0 * (con.q @ z + con.c)
        return f, grad

    prev_viol = np.inf
    outer_iters = opts.max_outer if cons else 1
    for outer in range(outer_iters):
        x, it = _projected_gradient(lagrangian, problem.ball_blocks, x, opts.max_inner, tol_kkt)
        total += it
        if not cons:
            break
        g = np.array([c.value(x) for c in cons])
        lam = np.maximum(0.0, lam + rho * g)
        viol = float(np.max(np.maximum(g, 0.0)))
        res = kkt_residual(problem, x, _with_ball_multipliers(problem, x, lam))
        tracer(outer, problem.objective(x), res)
        if res <= tol_kkt:
            break
        if viol > 0.25 * prev_viol:
            rho *= 10.0
        prev_viol = viol
    if cons:
        x = _pull_back(problem, x0, x)
    return x, _with_ball_multipliers(problem, x, lam), total


def _pull_back(problem, x0, x, tol=0.0):
    """Largest step from feasible ``x0`` towards ``x`` that stays feasible."""
    def ok(tau):
        g = problem.violations(x0 + tau * (x - x0))
        return not g.size or np.max(g) <= tol

    if ok(1.0):
        return x
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return x0 + lo * (x - x0)


def _with_ball_multipliers(problem, x, lam_quad):
    """Least-squares ball multipliers for the remaining stationarity residual."""
    if not problem.ball_blocks:
        return lam_quad
    grad = problem.gradient(x)
    for i, con in enumerate(problem.constraints):
        grad = grad - lam_quad[i] * 2.0 * (con.q @ x + con.c)
    mus = []
    for b in problem.ball_blocks:
        xb = x[b.indices]
        active = abs(xb @ xb - b.cap ** 2) <= 1e-6 * max(1.0, b.cap ** 2)
        denom = 2.0 * (xb @ xb)
        mus.append(max(0.0, grad[b.indices] @ (2.0 * xb) / (2.0 * denom)) if active and denom else 0.0)
    return np.concatenate([lam_quad, mus])


def _projected_gradient(fun, blocks, x, max_iter, tol):
    """Projected gradient ascent with backtracking (Armijo on the projection arc)."""
    f, g = fun(x)
    step = 1.0 / max(1.0, np.linalg.norm(g))
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            xn = project_ball_blocks(x + step * g, blocks)
            fn, gn = fun(xn)
            d = xn - x
            if fn >= f + 1e-4 * (g @ d) or step < 1e-16:
                break
            step *= 0.5
        moved = np.linalg.norm(d, np.inf)
        x, f, g = xn, fn, gn
        if moved <= 1e-14 * (1.0 + np.linalg.norm(x, np.inf)):
            break
        # gradient mapping as a stationarity measure
        pg = project_ball_blocks(x + g, blocks) - x
        if np.linalg.norm(pg, np.inf) <= tol * 1e-2:
            break
        step *= 2.0
    return x, it
