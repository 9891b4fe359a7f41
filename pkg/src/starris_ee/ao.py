"""Alternating optimization of precoders and STAR-RIS coefficients.

Each outer iteration runs

1. a precoder step: the sum of ratios is handled with the quadratic
   transform (``zeta``/``gamma`` auxiliaries) and every rate is replaced by its
   concave minorizer, giving a concave QCQP in the precoders;
2. an RIS step (STAR or reflective surfaces only): the rates are replaced by
   minorizers that are concave in the surface coefficients, giving a concave
   QCQP over the per-element unit balls.

Both steps start their solver at the current iterate, so the true weighted sum
energy efficiency never decreases.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (Dimensions, LinkSet, RISMode, RISProfile, Side, compose_all,
                      stream, validate_ris)
from .fbl import FBLParams, PowerParams, rates
from .linalg import realify_hermitian, realify_vector
from .qcqp import BallBlock, QcqpProblem, QuadConstraint, SolverOptions, Status, maximize
from .surrogate import ExpansionPoint, build_coeffs, gamma_model, theta_model

log = logging.getLogger(__name__)


class Method(enum.Enum):
    STAR_ES = "star-es"
    STAR_MS = "star-ms"
    RIS_REFLECTIVE = "ris"
    RIS_RANDOM = "ris-rand"
    NO_RIS = "no-ris"

    @property
    def optimizes_ris(self):
        return self in (Method.STAR_ES, Method.STAR_MS, Method.RIS_REFLECTIVE)


@dataclass(frozen=True)
class ProblemInstance:
    links: LinkSet
    fbl: FBLParams
    power: PowerParams
    method: Method = Method.STAR_ES
    n_streams: int | None = None

    def __post_init__(self):
        k = len(self.links.side)
        if len(self.power.weights) != k or len(self.power.rate_floors) != k:
            raise ValueError(f"weights and rate floors must have {k} entries")
        dims = self.links.dims
        n = self.n_streams or min(dims.n_bs, dims.n_u)
        Dimensions(dims.n_bs, dims.n_u, dims.n_users, dims.n_ris, n)
        object.__setattr__(self, "n_streams", n)
        object.__setattr__(self, "method", Method(self.method))

    @property
    def dims(self):
        d = self.links.dims
        return replace(d, n_streams=self.n_streams)

    def normalized(self):
        """Same problem with noise power 1 (user-side channels divided by sigma)."""
        sigma = np.sqrt(self.fbl.noise_power)
        return replace(self, links=self.links.scaled(1.0 / sigma),
                       fbl=replace(self.fbl, noise_power=1.0))


@dataclass(frozen=True)
class AOConfig:
    max_outer: int = 50
    tol_outer: float = 1e-4
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0
    ascent_slack: float = 1e-12

    def __post_init__(self):
        if self.max_outer < 0 or self.tol_outer <= 0:
            raise ValueError("max_outer must be >= 0 and tol_outer > 0")


@dataclass(frozen=True)
class IterState:
    gammas: np.ndarray
    ris: RISProfile
    active: np.ndarray  # users with a non-zero precoder


@dataclass(frozen=True)
class FractionalState:
    zeta: np.ndarray
    gamma_aux: np.ndarray


@dataclass
class IterationRecord:
    iteration: int
    sum_ee: float
    rates: np.ndarray
    rtilde: np.ndarray
    power_used: float
    ris_residual: float
    statuses: dict = field(default_factory=dict)
    qt_gap: float = 0.0


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    gammas: np.ndarray | None = None
    ris: RISProfile | None = None
    status: str = "converged"
    wall_clock: float = 0.0
    ris_steps: int = 0
    rejected_steps: int = 0

    @property
    def sum_ee(self):
        return np.array([r.sum_ee for r in self.records])

    @property
    def final(self):
        return self.records[-1]


# ---------------------------------------------------------------------------
# fractional updates
# ---------------------------------------------------------------------------


def zeta_update(rates_k, gammas, power: PowerParams):
    alpha = np.asarray(power.weights)
    return np.sqrt(alpha * np.maximum(rates_k, 0.0)) / power.denominators(gammas)


def gamma_update(rtilde, weights):
    return np.sqrt(np.asarray(weights) * np.maximum(rtilde, 0.0))


def transform_value(zeta, gamma_aux, gammas, power: PowerParams):
    return float(np.sum(2.0 * zeta * gamma_aux - zeta ** 2 * power.denominators(gammas)))


def sum_ee_of(instance: ProblemInstance, state: IterState):
    h = compose_all(instance.links, state.ris)
    r = rates(h, state.gammas, instance.fbl)
    ee = np.asarray(instance.power.weights) * r / instance.power.denominators(state.gammas)
    return float(np.sum(ee)), r


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _random_phases(rng, m):
    return np.exp(2j * np.pi * rng.uniform(size=m))


def initial_ris(method: Method, n_ris, seed):
    rng = stream(seed, "ris-init")
    pr, pt = _random_phases(rng, n_ris), _random_phases(rng, n_ris)
    if method in (Method.STAR_ES, Method.RIS_RANDOM):
        return RISProfile(RISMode.ENERGY_SPLITTING, pr / np.sqrt(2), pt / np.sqrt(2))
    if method is Method.STAR_MS:
        m_g = n_ris // 2
        idx = np.arange(n_ris)
        return RISProfile(RISMode.MODE_SWITCHING, np.where(idx < m_g, pr, 0),
                          np.where(idx >= m_g, pt, 0), m_g)
    if method is Method.RIS_REFLECTIVE:
        return RISProfile(RISMode.ENERGY_SPLITTING, pr, np.zeros(n_ris, complex))
    return RISProfile.off(n_ris)


def matched_filter(channels, n_streams, p_budget):
    """Dominant right singular vectors of each channel, equal power split."""
    k, _, n_bs = channels.shape
    out = np.empty((k, n_bs, n_streams), complex)
    for i, h in enumerate(channels):
        _, _, vh = np.linalg.svd(h)
        out[i] = np.conj(vh[:n_streams]).T
    norms = np.linalg.norm(out, axis=(1, 2))
    return out * (np.sqrt(p_budget / k) / norms)[:, None, None]


def switch_off_negative(instance: ProblemInstance, state: IterState):
    """Zero the precoders of users with a negative rate and no rate floor.

    A zero precoder gives rate 0, which makes such users feasible for the
    ``gamma^2 <= alpha * rtilde`` constraint.
    """
    floors = np.asarray(instance.power.rate_floors)
    for _ in range(len(floors)):
        _, r = sum_ee_of(instance, state)
        bad = state.active & (r < 0) & (floors == 0)
        if not np.any(bad):
            break
        gammas = state.gammas.copy()
        gammas[bad] = 0.0
        state = IterState(gammas, state.ris, state.active & ~bad)
    return state


def initialize(instance: ProblemInstance, config: AOConfig, ris: RISProfile | None = None):
    dims = instance.dims
    ris = ris if ris is not None else initial_ris(instance.method, dims.n_ris, config.seed)
    h = compose_all(instance.links, ris)
    gammas = matched_filter(h, instance.n_streams, instance.power.p_budget)
    return IterState(gammas, ris, np.ones(dims.n_users, bool))


# ---------------------------------------------------------------------------
# precoder step
# ---------------------------------------------------------------------------


def _stack(gammas, users):
    return np.concatenate([gammas[j].reshape(-1, order="F") for j in users])


def _unstack(z, users, template):
    out = np.zeros_like(template)
    size = template.shape[1] * template.shape[2]
    for i, j in enumerate(users):
        out[j] = z[i * size:(i + 1) * size].reshape(template.shape[1:], order="F")
    return out


def _gamma_quadratics(coeffs, channels, sigma2, users, n_streams):
    """Realified ``(R, c, const)`` with ``rtilde = const + 2 c^T x - x^T R x``."""
    out = []
    blocks = len(users) * n_streams
    for cf in coeffs:
        model = gamma_model(cf, channels, sigma2)
        big = np.kron(np.eye(blocks), model.gram)
        lin = _stack(model.lin, users)
        out.append((realify_hermitian(big), realify_vector(lin), model.const))
    return out


def beamforming_step(state: IterState, instance: ProblemInstance, config: AOConfig):
    """One quadratic-transform / minorization update of the precoders.

    Returns the new state, the fractional auxiliaries used, and diagnostics.
    """
    fbl, power = instance.fbl, instance.power
    sigma2 = fbl.noise_power
    alpha = np.asarray(power.weights)
    floors = np.asarray(power.rate_floors)
    users = np.flatnonzero(state.active)
    h = compose_all(instance.links, state.ris)
    old_ee, r = sum_ee_of(instance, state)
    zeta = zeta_update(r, state.gammas, power)
    diag = {"status": None, "rejected": False, "old_sum_ee": old_ee}
    if users.size == 0:
        diag["status"] = Status.CONVERGED
        return state, FractionalState(zeta, np.zeros_like(zeta)), diag

    point = ExpansionPoint(state.gammas, state.ris, h, instance.links)
    coeffs = [build_coeffs(point, fbl, k) for k in users]
    rtilde = np.zeros(len(r))
    rtilde[users] = [c.expansion_rate for c in coeffs]
    gamma_aux = gamma_update(rtilde, alpha)
    diag["qt_gap"] = abs(transform_value(zeta, gamma_aux, state.gammas, power)
                         - float(np.sum(alpha * np.maximum(rtilde, 0.0)
                                        / power.denominators(state.gammas))))

    quads = _gamma_quadratics(coeffs, h, sigma2, users, instance.n_streams)
    nz = len(users) * state.gammas.shape[1] * state.gammas.shape[2]
    na = len(users)
    n = 2 * nz + na

    def pad(mat, vec):
        qq = np.zeros((n, n))
        qq[:2 * nz, :2 * nz] = mat
        cc = np.zeros(n)
        cc[:2 * nz] = vec
        return qq, cc

    q0 = np.zeros((n, n))
    c0 = np.zeros(n)
    per_user = state.gammas.shape[1] * state.gammas.shape[2]
    for i, k in enumerate(users):
        sel = np.r_[i * per_user:(i + 1) * per_user]
        q0[sel, sel] = -power.beta * zeta[k] ** 2
        q0[nz + sel, nz + sel] = -power.beta * zeta[k] ** 2
        c0[2 * nz + i] = zeta[k]
    d0 = -float(np.sum(zeta[users] ** 2)) * power.p_static

    cons = []
    for i, (k, (rq, rc, const)) in enumerate(zip(users, quads)):
        qq, cc = pad(rq, rc)
        cons.append(QuadConstraint(qq, -cc, -const, -floors[k]))
        qg = alpha[k] * qq
        qg[2 * nz + i, 2 * nz + i] += 1.0
        cons.append(QuadConstraint(qg, -alpha[k] * cc, -alpha[k] * const, 0.0))
    ball = [BallBlock(np.arange(2 * nz), np.sqrt(power.p_budget))]
    problem = QcqpProblem(q0, c0, d0, cons, ball)

    z0 = _stack(state.gammas, users)
    x0 = np.concatenate([z0.real, z0.imag, gamma_aux[users]])
    sol = maximize(problem, x0, config.solver)
    diag["status"] = sol.status
    diag["subproblem_gain"] = sol.objective_value - problem.objective(x0)
    if sol.status is Status.INFEASIBLE:
        log.warning("precoder subproblem infeasible at the current iterate")
        diag["rejected"] = True
        return state, FractionalState(zeta, gamma_aux), diag

    z = sol.x[:nz] + 1j * sol.x[nz:2 * nz]
    new = IterState(_unstack(z, users, state.gammas), state.ris, state.active)
    new_ee, _ = sum_ee_of(instance, new)
    rt_new = np.zeros(len(r))
    for c, k in zip(coeffs, users):
        model = gamma_model(c, h, sigma2)
        rt_new[k] = model.value(new.gammas)
    diag["rtilde_new"] = rt_new
    if new_ee < old_ee - config.ascent_slack * abs(old_ee):
        diag["rejected"] = True
        return state, FractionalState(zeta, gamma_aux), diag
    return new, FractionalState(zeta, np.sqrt(alpha * np.maximum(rt_new, 0.0))), diag


# ---------------------------------------------------------------------------
# RIS step
# ---------------------------------------------------------------------------


def _ris_layout(method: Method, ris: RISProfile):
    """Free element indices on each side."""
    m = ris.n_elements
    idx = np.arange(m)
    if method is Method.STAR_MS:
        return idx[idx < ris.m_g], idx[idx >= ris.m_g]
    if method is Method.RIS_REFLECTIVE:
        return idx, idx[:0]
    return idx, idx


def ris_step(state: IterState, instance: ProblemInstance, config: AOConfig):
    """One minorization update of the surface coefficients."""
    method = instance.method
    if not method.optimizes_ris:
        raise ValueError(f"ris_step must not be called for method {method.value}")
    fbl, power, links = instance.fbl, instance.power, instance.links
    sigma2 = fbl.noise_power
    users = np.flatnonzero(state.active)
    old_ee, r = sum_ee_of(instance, state)
    diag = {"status": None, "rejected": False, "old_sum_ee": old_ee}
    ris = state.ris
    idx_r, idx_t = _ris_layout(method, ris)
    nz = idx_r.size + idx_t.size
    if users.size == 0 or nz == 0:
        diag["status"] = Status.CONVERGED
        return state, diag

    h = compose_all(links, ris)
    point = ExpansionPoint(state.gammas, ris, h, links)
    weights = np.asarray(power.weights) / power.denominators(state.gammas)
    floors = np.maximum(np.asarray(power.rate_floors), 0.0)

    n = 2 * nz
    q0 = np.zeros((n, n))
    c0 = np.zeros(n)
    d0 = 0.0
    cons = []
    for k in users:
        cf = build_coeffs(point, fbl, k)
        model = theta_model(cf, state.gammas, links, sigma2)
        idx, offset = (idx_r, 0) if model.side is Side.REFLECTION else (idx_t, idx_r.size)
        pz = np.zeros((nz, nz), complex)
        qz = np.zeros(nz, complex)
        sl = slice(offset, offset + idx.size)
        pz[sl, sl] = model.gram[np.ix_(idx, idx)]
        qz[sl] = model.lin[idx]
        rq, rc = realify_hermitian(pz), realify_vector(qz)
        q0 -= weights[k] * rq
        c0 += weights[k] * rc
        d0 += weights[k] * model.const
        cons.append(QuadConstraint(rq, -rc, -model.const, -floors[k]))

    if method is Method.STAR_MS or method is Method.RIS_REFLECTIVE:
        balls = [BallBlock(np.array([i, nz + i]), 1.0) for i in range(nz)]
    else:
        m = ris.n_elements
        balls = [BallBlock(np.array([i, nz + i, m + i, nz + m + i]), 1.0) for i in range(m)]
    problem = QcqpProblem(q0, c0, d0, cons, balls)

    z0 = np.concatenate([ris.theta_r[idx_r], ris.theta_t[idx_t]])
    x0 = np.concatenate([z0.real, z0.imag])
    sol = maximize(problem, x0, config.solver)
    diag["status"] = sol.status
    if sol.status is Status.INFEASIBLE:
        log.warning("RIS subproblem infeasible at the current iterate")
        diag["rejected"] = True
        return state, diag

    z = sol.x[:nz] + 1j * sol.x[nz:]
    tr = np.zeros(ris.n_elements, complex)
    tt = np.zeros(ris.n_elements, complex)
    tr[idx_r] = z[:idx_r.size]
    tt[idx_t] = z[idx_r.size:]
    new = IterState(state.gammas, replace(ris, theta_r=tr, theta_t=tt), state.active)
    new_ee, _ = sum_ee_of(instance, new)
    if new_ee < old_ee - config.ascent_slack * abs(old_ee):
        diag["rejected"] = True
        return state, diag
    return new, diag


# ---------------------------------------------------------------------------
# QoS restoration
# ---------------------------------------------------------------------------


def feasibility_restore(state: IterState, instance: ProblemInstance, config: AOConfig,
                        max_iter=100):
    """Raise ``min_k (r_k - floor_k)`` over users with a floor until it is >= 0.

    Returns ``(state, True)`` on success and ``(state, False)`` when the
    minorize-maximize iteration stalls below zero.
    """
    fbl, power = instance.fbl, instance.power
    floors = np.asarray(power.rate_floors)
    qos = np.flatnonzero(floors > 0)
    if qos.size == 0:
        return state, True
    if not np.all(state.active[qos]):
        return state, False
    sigma2 = fbl.noise_power
    users = np.flatnonzero(state.active)
    per_user = state.gammas.shape[1] * state.gammas.shape[2]
    nz = len(users) * per_user
    n = 2 * nz + 1
    prev = -np.inf
    for _ in range(max_iter):
        _, r = sum_ee_of(instance, state)
        margin = float(np.min(r[qos] - floors[qos]))
        if margin >= 0:
            return state, True
        if margin <= prev + 1e-9 * (1 + abs(prev)):
            return state, False
        prev = margin
        h = compose_all(instance.links, state.ris)
        point = ExpansionPoint(state.gammas, state.ris, h, instance.links)
        coeffs = [build_coeffs(point, fbl, k) for k in qos]
        quads = _gamma_quadratics(coeffs, h, sigma2, users, instance.n_streams)
        cons = []
        for k, (rq, rc, const) in zip(qos, quads):
            qq = np.zeros((n, n))
            qq[:2 * nz, :2 * nz] = rq
            cc = np.zeros(n)
            cc[:2 * nz] = -rc
            cc[-1] = 0.5
            cons.append(QuadConstraint(qq, cc, -const, -floors[k]))
        c0 = np.zeros(n)
        c0[-1] = 0.5
        problem = QcqpProblem(np.zeros((n, n)), c0, 0.0, cons,
                              [BallBlock(np.arange(2 * nz), np.sqrt(power.p_budget))])
        # strictly interior start: slightly inside the power ball, slack below the margin
        z0 = _stack(state.gammas, users) * (1 - 1e-6)
        x0 = np.concatenate([z0.real, z0.imag, [margin - 1.0 - abs(margin)]])
        sol = maximize(problem, x0, config.solver)
        z = sol.x[:nz] + 1j * sol.x[nz:2 * nz]
        state = IterState(_unstack(z, users, state.gammas), state.ris, state.active)
    _, r = sum_ee_of(instance, state)
    return state, bool(np.min(r[qos] - floors[qos]) >= 0)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _record(instance, state, it, statuses, rtilde=None, qt_gap=0.0):
    ee, r = sum_ee_of(instance, state)
    return IterationRecord(
        iteration=it,
        sum_ee=ee,
        rates=r,
        rtilde=r.copy() if rtilde is None else rtilde,
        power_used=float(np.sum(np.abs(state.gammas) ** 2)),
        ris_residual=validate_ris(state.ris).max_violation,
        statuses=statuses,
        qt_gap=qt_gap,
    )


def optimize(instance: ProblemInstance, config: AOConfig | None = None,
             init: IterState | RISProfile | None = None):
    """Run the alternating optimization and return the full trace."""
    config = config or AOConfig()
    start = time.perf_counter()
    inst = instance.normalized()
    if isinstance(init, IterState):
        state = init
    else:
        state = initialize(inst, config, ris=init)
    trace = SolveTrace()

    if np.any(np.asarray(inst.power.rate_floors) > 0):
        state, ok = feasibility_restore(state, inst, config)
        if not ok:
            trace.status = "infeasible"
    state = switch_off_negative(inst, state)
    trace.records.append(_record(inst, state, 0, {}))

    if trace.status != "infeasible":
        for it in range(1, config.max_outer + 1):
            prev = trace.records[-1].sum_ee
            state, frac, d_bf = beamforming_step(state, inst, config)
            statuses = {"beamforming": d_bf["status"]}
            rejected = d_bf["rejected"]
            if inst.method.optimizes_ris:
                state, d_ris = ris_step(state, inst, config)
                statuses["ris"] = d_ris["status"]
                rejected = rejected or d_ris["rejected"]
                trace.ris_steps += 1
            trace.rejected_steps += int(rejected)
            rec = _record(inst, state, it, statuses,
                          d_bf.get("rtilde_new"), d_bf.get("qt_gap", 0.0))
            trace.records.append(rec)
            if abs(rec.sum_ee - prev) <= config.tol_outer * max(abs(prev), 1e-300):
                break
        else:
            if config.max_outer > 0:
                trace.status = "max_outer"

    trace.gammas = state.gammas
    trace.ris = state.ris
    trace.wall_clock = time.perf_counter() - start
    return trace


def run_baseline(kind: Method | str, instance: ProblemInstance, config: AOConfig | None = None):
    """Run one of the five compared schemes on ``instance``.

    Random and no-RIS schemes keep the surface fixed and only optimize the
    precoders.
    """
    return optimize(replace(instance, method=Method(kind)), config)
