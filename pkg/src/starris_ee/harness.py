"""Monte Carlo trials, parameter sweeps and their CSV / plot-data output."""

from __future__ import annotations

import csv
import enum
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .ao import AOConfig, Method, ProblemInstance, run_baseline
from .channel import ScenarioConfig, sample_links, validate_ris
from .fbl import FBLParams, PowerParams
from .qcqp import SolverOptions

LN2 = math.log(2.0)


class SweepAxis(enum.Enum):
    STATIC_POWER = "ps"
    BLOCKLENGTH = "l"
    EPSILON = "eps"
    RIS_ELEMENTS = "m"


@dataclass(frozen=True)
class RunParams:
    """Everything a trial needs besides the scenario geometry."""

    blocklength: float = 256
    epsilon: float = 1e-5
    p_static: float = 0.01
    beta: float = 1.0
    p_budget: float = 0.01
    weight: float = 1.0
    rate_floor: float = 0.0
    max_outer: int = 50
    tol_outer: float = 1e-4
    solver: str = "barrier"

    def __post_init__(self):
        # validate eagerly so config errors surface before any trial runs
        FBLParams(self.blocklength, self.epsilon)
        PowerParams.uniform(1, p_static=self.p_static, beta=self.beta, p_budget=self.p_budget,
                            weight=self.weight, rate_floor=self.rate_floor)
        AOConfig(self.max_outer, self.tol_outer)
        SolverOptions(method=self.solver)

    def instance(self, links, noise_power, method):
        k = len(links.side)
        return ProblemInstance(
            links,
            FBLParams(self.blocklength, self.epsilon, noise_power),
            PowerParams.uniform(k, p_static=self.p_static, beta=self.beta, p_budget=self.p_budget,
                                weight=self.weight, rate_floor=self.rate_floor),
            Method(method),
        )

    def ao_config(self, seed):
        return AOConfig(self.max_outer, self.tol_outer, SolverOptions(method=self.solver), seed=seed)

    def with_axis(self, axis: SweepAxis, value):
        if axis is SweepAxis.STATIC_POWER:
            return replace(self, p_static=float(value))
        if axis is SweepAxis.BLOCKLENGTH:
            return replace(self, blocklength=float(value))
        if axis is SweepAxis.EPSILON:
            return replace(self, epsilon=float(value))
        return self


def scenario_with_ris(scenario: ScenarioConfig, n_ris):
    return replace(scenario, dims=replace(scenario.dims, n_ris=int(n_ris)))


@dataclass(frozen=True)
class SweepSpec:
    axis: SweepAxis
    values: tuple
    methods: tuple = tuple(m.value for m in Method)
    n_trials: int = 50
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axis", SweepAxis(self.axis))
        vals = tuple(self.values)
        if not vals:
            raise ValueError("sweep values must be nonempty")
        if list(vals) != sorted(vals):
            raise ValueError("sweep values must be sorted")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "methods", tuple(Method(m).value for m in self.methods))
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")

    def seed(self, trial):
        return int(self.base_seed) + int(trial)


@dataclass
class TrialRecord:
    method: str
    axis: str
    axis_value: float
    trial: int
    seed: int
    sum_ee_nats: float = float("nan")
    sum_ee_bits: float = float("nan")
    rates: tuple = ()
    iterations: int = 0
    status: str = ""
    power_used: float = 0.0
    ris_power: float = 0.0
    ris_residual: float = 0.0
    power_ok: bool = False
    ris_ok: bool = False
    qos_ok: bool = False
    rejected_steps: int = 0
    wall_clock: float = 0.0
    error: str = ""

    @property
    def feasible(self):
        return self.power_ok and self.ris_ok and self.qos_ok and not self.error


def run_trial(scenario: ScenarioConfig, params: RunParams, method, seed, *, axis="",
              axis_value=float("nan"), trial=0):
    """Sample links for ``seed``, optimize with ``method`` and summarize.

    Errors are caught and returned in the record's ``error`` field so that a
    sweep keeps going.
    """
    method = Method(method)
    rec = TrialRecord(method.value, axis, float(axis_value), int(trial), int(seed))
    start = time.perf_counter()
    try:
        links = sample_links(scenario, seed)
        inst = params.instance(links, scenario.noise_power, method)
        trace = run_baseline(method, inst, params.ao_config(seed))
    except Exception as exc:  # noqa: BLE001 - recorded per row
        rec.error = f"seed {seed}, method {method.value}: {type(exc).__name__}: {exc}"
        rec.wall_clock = time.perf_counter() - start
        return rec
    final = trace.final
    floors = np.asarray(inst.power.rate_floors)
    rates = final.rates
    # negative rates only ever shown clamped in the displayed efficiency
    ee = float(np.sum(np.asarray(inst.power.weights) * np.maximum(rates, 0.0)
                      / inst.power.denominators(trace.gammas)))
    rec.sum_ee_nats = ee
    rec.sum_ee_bits = ee / LN2
    rec.rates = tuple(float(r) for r in rates)
    rec.iterations = len(trace.records) - 1
    rec.status = trace.status
    rec.power_used = final.power_used
    rec.ris_power = float(np.sum(np.abs(trace.ris.theta_r) ** 2 + np.abs(trace.ris.theta_t) ** 2))
    rec.ris_residual = final.ris_residual
    rec.power_ok = final.power_used <= params.p_budget + 1e-8
    rec.ris_ok = validate_ris(trace.ris, tol=1e-8).feasible
    rec.qos_ok = trace.status != "infeasible" and bool(np.all(rates >= floors - 1e-6))
    rec.rejected_steps = trace.rejected_steps
    rec.wall_clock = time.perf_counter() - start
    return rec


def _task(args):
    return run_trial(*args[:4], axis=args[4], axis_value=args[5], trial=args[6])


def sweep_tasks(spec: SweepSpec, scenario: ScenarioConfig, params: RunParams):
    tasks = []
    for value in spec.values:
        sc = scenario
        if spec.axis is SweepAxis.RIS_ELEMENTS:
            sc = scenario_with_ris(scenario, value)
        pr = params.with_axis(spec.axis, value)
        for method in spec.methods:
            for t in range(spec.n_trials):
                tasks.append((sc, pr, method, spec.seed(t), spec.axis.value, value, t))
    return tasks


def sweep(spec: SweepSpec, scenario: ScenarioConfig, params: RunParams | None = None,
          workers: int | None = 1):
    """Run every (value, method, trial) combination, ordered deterministically."""
    params = params or RunParams()
    tasks = sweep_tasks(spec, scenario, params)
    if workers is not None and workers <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves task order regardless of completion order
        return list(pool.map(_task, tasks, chunksize=1))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

BASE_COLUMNS = ("method", "axis", "axis_value", "trial", "seed", "sum_ee_nats", "sum_ee_bits",
                "iterations", "status", "power_used", "ris_power", "ris_residual", "power_ok",
                "ris_ok", "qos_ok", "rejected_steps", "error")


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "%.9g" % v
    return str(v)


def emit_csv(table, path, include_wall_clock=False):
    """Write one row per record; floats carry 9 significant digits.

    Wall-clock is left out by default so repeated runs give identical bytes.
    """
    n_rates = max((len(r.rates) for r in table), default=0)
    header = list(BASE_COLUMNS) + [f"rate_{k + 1}" for k in range(n_rates)]
    if include_wall_clock:
        header.append("wall_clock")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for rec in table:
                d = asdict(rec)
                row = [_fmt(d[c]) for c in BASE_COLUMNS]
                rates = list(rec.rates) + [float("nan")] * (n_rates - len(rec.rates))
                row += [_fmt(float(r)) for r in rates]
                if include_wall_clock:
                    row.append(_fmt(rec.wall_clock))
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path):
    """Parse an ``emit_csv`` file back into ``TrialRecord`` objects."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rates = []
            k = 1
            while f"rate_{k}" in row:
                v = float(row[f"rate_{k}"])
                if not math.isnan(v):
                    rates.append(v)
                k += 1
            out.append(TrialRecord(
                method=row["method"], axis=row["axis"], axis_value=float(row["axis_value"]),
                trial=int(row["trial"]), seed=int(row["seed"]),
                sum_ee_nats=float(row["sum_ee_nats"]), sum_ee_bits=float(row["sum_ee_bits"]),
                rates=tuple(rates), iterations=int(row["iterations"]), status=row["status"],
                power_used=float(row["power_used"]), ris_power=float(row["ris_power"]),
                ris_residual=float(row["ris_residual"]), power_ok=row["power_ok"] == "1",
                ris_ok=row["ris_ok"] == "1", qos_ok=row["qos_ok"] == "1",
                rejected_steps=int(row["rejected_steps"]), error=row["error"],
                wall_clock=float(row.get("wall_clock") or 0.0),
            ))
    return out


@dataclass
class Aggregate:
    key: tuple
    mean_nats: float
    stderr_nats: float
    mean_bits: float
    stderr_bits: float
    count: int


def _mean_stderr(x):
    x = np.asarray(x, float)
    if x.size == 1:
        return float(x[0]), 0.0
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size))


_GROUP_FIELDS = {"axis": "axis_value", "axis_value": "axis_value", "value": "axis_value",
                 "method": "method"}


def aggregate(table, group_by=("axis", "method")):
    """Mean, standard error and count of the final sum EE per group.

    Rows carrying an error are skipped. Groups keep first-appearance order.
    """
    fields = [_GROUP_FIELDS[g] for g in group_by]
    groups: dict[tuple, list] = {}
    for rec in table:
        if rec.error:
            continue
        groups.setdefault(tuple(getattr(rec, f) for f in fields), []).append(rec.sum_ee_nats)
    out = []
    for key, vals in groups.items():
        m, s = _mean_stderr(vals)
        out.append(Aggregate(key, m, s, m / LN2, s / LN2, len(vals)))
    return out


def emit_plotdata(table, group_by=("axis", "method"), path=None):
    """Write the per-group series shown in the sum-EE figures."""
    if not table:
        raise ValueError("empty table")
    aggs = aggregate(table, group_by)
    header = [_GROUP_FIELDS[g] for g in group_by] + [
        "mean_ee_nats", "stderr_ee_nats", "mean_ee_bits", "stderr_ee_bits", "count"]
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for a in aggs:
                w.writerow([_fmt(k) for k in a.key]
                           + [_fmt(a.mean_nats), _fmt(a.stderr_nats), _fmt(a.mean_bits),
                              _fmt(a.stderr_bits), a.count])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return aggs
