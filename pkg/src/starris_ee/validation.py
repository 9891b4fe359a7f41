"""Randomized self-checks: minorizer tangency / lower-bound / gradient, and AO ascent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ao import AOConfig, Method, ProblemInstance, optimize
from .channel import (Dimensions, LinkSet, RISMode, RISProfile, Side, default_scenario,
                      sample_links, stream, validate_ris)
from .fbl import FBLParams, PowerParams
from .surrogate import ExpansionPoint, check_minorization


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_point(seed, max_users=4, max_antennas=2, max_ris=8):
    """A random small instance (links, RIS state, precoders, FBL params).

    Channel gains and blocklength are drawn log-uniformly so that low, moderate
    and high SNR expansion points all appear.
    """
    rng = stream(seed, "validation")
    k = int(rng.integers(1, max_users + 1))
    n_bs = int(rng.integers(1, max_antennas + 1))
    n_u = int(rng.integers(1, max_antennas + 1))
    m = int(rng.integers(1, max_ris + 1))
    n_streams = int(rng.integers(1, min(n_bs, n_u) + 1))
    gain = 10 ** rng.uniform(-1, 1.5)
    g = _cn(rng, (m, n_bs))
    f = np.sqrt(gain) * _cn(rng, (k, n_u, m))
    d = np.sqrt(gain) * _cn(rng, (k, n_u, n_bs))
    side = tuple(Side.REFLECTION if s else Side.REFRACTION for s in rng.integers(0, 2, k))
    links = LinkSet(g, f, d, side)
    if rng.uniform() < 0.5:
        amp = np.sqrt(rng.uniform(size=m))
        ris = RISProfile(RISMode.ENERGY_SPLITTING,
                         amp * np.exp(2j * np.pi * rng.uniform(size=m)),
                         np.sqrt(1 - amp ** 2) * np.exp(2j * np.pi * rng.uniform(size=m)))
    else:
        m_g = int(rng.integers(0, m + 1))
        ph = np.exp(2j * np.pi * rng.uniform(size=(2, m))) * np.sqrt(rng.uniform(size=(2, m)))
        idx = np.arange(m)
        ris = RISProfile(RISMode.MODE_SWITCHING, np.where(idx < m_g, ph[0], 0),
                         np.where(idx >= m_g, ph[1], 0), m_g)
    gammas = _cn(rng, (k, n_bs, n_streams)) * np.sqrt(rng.uniform(0.2, 1.0, (k, 1, 1)))
    fbl = FBLParams(float(rng.choice([64, 128, 256, 1024])), float(10 ** rng.uniform(-7, -2)), 1.0)
    return ExpansionPoint.from_links(links, ris, gammas), fbl


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    lines: list = field(default_factory=list)

    def summary(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def minorization_suite(n_instances=200, n_samples=1000, radius=0.5, seed=0, gradient=True):
    """Tangency, sampled lower bound (in precoders and RIS) and gradient match."""
    worst = {"tangency": 0.0, "gap_gamma": -np.inf, "gap_theta": -np.inf, "gradient": 0.0}
    failed = []
    lines = []
    for i in range(n_instances):
        point, fbl = random_point(seed + i)
        rep = check_minorization(point, fbl, n_samples=n_samples, radius=radius, seed=seed + i,
                                 gradient=gradient)
        worst["tangency"] = max(worst["tangency"], rep.tangency_error)
        worst["gap_gamma"] = max(worst["gap_gamma"], rep.max_gap_gamma)
        worst["gap_theta"] = max(worst["gap_theta"], rep.max_gap_theta)
        worst["gradient"] = max(worst["gradient"], rep.gradient_mismatch)
        if not rep.passed:
            failed.append(seed + i)
            lines.append(f"instance seed {seed + i}\n{rep.to_text()}")
    detail = (f"{n_instances} instances, tangency {worst['tangency']:.2e}, "
              f"max gap gamma {worst['gap_gamma']:.2e}, theta {worst['gap_theta']:.2e}, "
              f"gradient {worst['gradient']:.2e}")
    if failed:
        detail += f", failing seeds {failed[:10]}"
    return SuiteResult("minorization", not failed, detail, lines)


def ascent_instance(seed, n_users=3, n_ris=8, n_antennas=2, method=Method.STAR_ES,
                    p_budget=0.01, p_static=0.01):
    dims = Dimensions(n_antennas, n_antennas, n_users, n_ris)
    scenario = default_scenario(dims)
    links = sample_links(scenario, seed)
    return ProblemInstance(links, FBLParams(256, 1e-5, scenario.noise_power),
                           PowerParams.uniform(n_users, p_static=p_static, p_budget=p_budget),
                           method)


def check_trace(trace, instance, slack=1e-6, qt_tol=1e-10, feas_tol=1e-8):
    """Monotonicity, transform exactness and feasibility of one AO trace."""
    ee = trace.sum_ee
    drops = (ee[:-1] - ee[1:]) / np.maximum(np.abs(ee[:-1]), 1e-300)
    worst_drop = float(np.max(drops, initial=-np.inf))
    qt = max((r.qt_gap for r in trace.records), default=0.0)
    power_ok = all(r.power_used <= instance.power.p_budget + feas_tol for r in trace.records)
    ris_ok = validate_ris(trace.ris, tol=feas_tol).feasible and all(
        r.ris_residual <= feas_tol for r in trace.records)
    return {"monotone": worst_drop <= slack, "worst_drop": worst_drop,
            "qt_exact": qt <= qt_tol, "qt_gap": qt, "feasible": power_ok and ris_ok}


def ascent_suite(n_runs=100, seed=0, config: AOConfig | None = None, **kwargs):
    """AO runs on the default geometry: ascent, transform exactness, feasibility."""
    bad = []
    worst_drop, worst_qt = -np.inf, 0.0
    for i in range(n_runs):
        inst = ascent_instance(seed + i, **kwargs)
        trace = optimize(inst, config or AOConfig(seed=seed + i))
        chk = check_trace(trace, inst.normalized())
        worst_drop = max(worst_drop, chk["worst_drop"])
        worst_qt = max(worst_qt, chk["qt_gap"])
        if not (chk["monotone"] and chk["qt_exact"] and chk["feasible"]):
            bad.append(seed + i)
    detail = f"{n_runs} runs, worst relative drop {worst_drop:.2e}, transform gap {worst_qt:.2e}"
    if bad:
        detail += f", failing seeds {bad[:10]}"
    return SuiteResult("ascent", not bad, detail)
