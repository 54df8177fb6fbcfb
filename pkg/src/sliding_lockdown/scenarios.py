"""Scenario definitions, cycle metrics, parameter sweeps and vaccination runs."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .controller import ControllerConfig, Regime
from .errors import ConfigError, DomainError
from .integrator import IntegratorConfig, Trajectory, detect_herd_crossing, simulate
from .models import (
    ModelKind,
    ModelParams,
    VaccinationSchedule,
    beta_from_rn,
    critical_contact_rate,
    default_initial_state,
    infectious_total,
    make_state,
)

log = logging.getLogger(__name__)

__all__ = [
    "Scenario",
    "gamma_for_rn",
    "CycleRecord",
    "MetricsReport",
    "SweepSpec",
    "SweepResult",
    "SWEEP_AXES",
    "measure_cycles",
    "steady_cycle",
    "max_deviation_pct",
    "extinction_time",
    "compute_metrics",
    "run_sweep",
    "robustness_grid",
    "rn_sweep",
    "vaccination_scenarios",
    "beta_lockdown_sensitivity",
    "write_metrics_csv",
    "write_cycles_csv",
]

STEADY_CYCLES = 3
EXTINCTION_LEVEL = 1e-6
EXTINCTION_SUSTAIN = 30.0

SWEEP_AXES = ("RN", "RN_gamma", "gamma", "epsilon", "epsilon1", "epsilon2", "vaccination_rate",
              "beta_lockdown", "lambda", "phi")


def gamma_for_rn(kind: ModelKind, params: ModelParams, rn: float) -> float:
    """Recovery rate giving reproduction number ``rn`` at the current ``beta_freedom``."""
    kind = ModelKind.parse(kind)
    if not rn > 0:
        raise DomainError(f"RN must be positive, got {rn}")
    bf = params.beta_freedom
    if kind is ModelKind.SEIR:
        return bf / rn
    e1, e2 = params.epsilon1, params.epsilon2
    denom = rn * (e1 + e2) - bf
    if not denom > 0:
        raise DomainError(f"no positive gamma gives RN={rn} with beta_freedom={bf}")
    return bf * e1 / denom


@dataclass(frozen=True)
class Scenario:
    """Everything needed for one closed-loop run.

    When ``rn_freedom`` / ``rn_lockdown`` are set the matching contact rate
    is derived from them and recomputed whenever a rate parameter changes.
    """

    kind: ModelKind
    params: ModelParams
    controller: ControllerConfig
    integrator: IntegratorConfig = IntegratorConfig()
    vaccination: VaccinationSchedule | None = None
    initial_state: dict[str, float] | None = None
    initial_prevalence: float = 0.001
    rn_freedom: float | None = None
    rn_lockdown: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        object.__setattr__(self, "params", self._derive_betas(self.params))

    def _derive_betas(self, params: ModelParams) -> ModelParams:
        if self.rn_freedom is not None:
            params = params.replace(beta_freedom=beta_from_rn(self.kind, params, self.rn_freedom))
        if self.rn_lockdown is not None:
            params = params.replace(beta_lockdown=beta_from_rn(self.kind, params, self.rn_lockdown))
        return params

    def init_state(self) -> np.ndarray:
        if self.initial_state is not None:
            return make_state(self.kind, **self.initial_state)
        return default_initial_state(self.kind, self.initial_prevalence)

    def with_axis(self, axis: str, value: float) -> "Scenario":
        """Copy of the scenario with one sweep axis set to ``value``."""
        value = float(value)
        if axis == "RN":
            return replace(self, rn_freedom=value)
        if axis == "RN_gamma":
            return replace(self, params=self.params.replace(gamma=gamma_for_rn(self.kind, self.params, value)),
                           rn_freedom=None)
        if axis in ("gamma", "epsilon", "epsilon1", "epsilon2"):
            return replace(self, params=self.params.replace(**{axis: value}))
        if axis == "beta_lockdown":
            return replace(self, params=self.params.replace(beta_lockdown=value), rn_lockdown=None)
        if axis == "vaccination_rate":
            vacc = self.vaccination or VaccinationSchedule()
            return replace(self, vaccination=replace(vacc, daily_rate=value))
        if axis == "lambda":
            return replace(self, controller=replace(self.controller, lam=value))
        if axis == "phi":
            return replace(self, controller=replace(self.controller, phi=value))
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}", "sweep.axis")

    def run(self) -> Trajectory:
        return simulate(self.kind, self.params, self.controller, self.vaccination,
                        self.init_state(), self.integrator)


@dataclass(frozen=True)
class CycleRecord:
    freedom_duration: float
    lockdown_duration: float
    cycle_start: float

    @property
    def period(self) -> float:
        return self.freedom_duration + self.lockdown_duration

    @property
    def end(self) -> float:
        return self.cycle_start + self.period

    @property
    def duty_cycle(self) -> float:
        return self.lockdown_duration / self.period


@dataclass
class MetricsReport:
    cycles: list[CycleRecord]
    steady_freedom: float
    steady_lockdown: float
    max_deviation_pct: float
    peak_infected: float
    duty_cycles: list[float]
    herd_time: float | None
    extinction_time: float | None
    transient_cutoff: float
    switch_count: int = 0
    lockdowns_after_herd: int = 0
    warnings: list[str] = field(default_factory=list)


def _default_cutoff(traj: Trajectory) -> float:
    if len(traj.switch_events) >= 2:
        return traj.switch_events[1].time
    return float(traj.times[0])


def measure_cycles(traj: Trajectory, transient_cutoff: float | None = None) -> list[CycleRecord]:
    """Completed freedom+lockdown cycles starting at or after ``transient_cutoff``.

    A cycle runs from a lockdown-to-freedom switch through the next
    lockdown to the following return to freedom. The default cutoff is
    the time of the second switch.
    """
    events = traj.switch_events
    if transient_cutoff is None:
        if len(events) < 2:
            log.warning("fewer than two switch events; no cycles measured")
            return []
        transient_cutoff = events[1].time
    events = [ev for ev in events if ev.time >= transient_cutoff]
    cycles = []
    for a, b, c in zip(events, events[1:], events[2:]):
        if a.to_regime is Regime.FREEDOM and b.to_regime is Regime.LOCKDOWN and c.to_regime is Regime.FREEDOM:
            cycles.append(CycleRecord(b.time - a.time, c.time - b.time, a.time))
    if not cycles:
        log.warning("no completed cycle after t=%.3g", transient_cutoff)
    return cycles


def steady_cycle(cycles: Sequence[CycleRecord], until: float | None = None,
                 last: int = STEADY_CYCLES) -> tuple[float, float]:
    """Median (freedom, lockdown) over the last ``last`` cycles ending by ``until``."""
    usable = [c for c in cycles if until is None or c.end <= until]
    if not usable:
        return math.nan, math.nan
    tail = usable[-last:]
    return (float(np.median([c.freedom_duration for c in tail])),
            float(np.median([c.lockdown_duration for c in tail])))


def _window(traj: Trajectory, start: float, until: float | None) -> np.ndarray:
    mask = traj.times >= start
    if until is not None:
        mask &= traj.times <= until
    return mask


def max_deviation_pct(traj: Trajectory, i_target: float, transient_cutoff: float,
                      until: float | None = None) -> float:
    """``100 * max |I - I0| / I0`` over logged samples with ``t >= transient_cutoff``."""
    mask = _window(traj, transient_cutoff, until)
    if not mask.any():
        raise DomainError(f"no samples after cutoff t={transient_cutoff}")
    return float(100.0 * np.max(np.abs(traj.infected[mask] - i_target)) / i_target)


def extinction_time(traj: Trajectory, level: float = EXTINCTION_LEVEL,
                    sustain: float = EXTINCTION_SUSTAIN) -> float | None:
    """Start of the first run of samples with all infectious compartments below ``level``
    that lasts at least ``sustain`` days inside the record."""
    below = infectious_total(traj.kind, traj.states) < level
    t = traj.times
    j = 0
    n = len(t)
    while j < n:
        if not below[j]:
            j += 1
            continue
        k = j
        while k + 1 < n and below[k + 1]:
            k += 1
        if t[k] - t[j] >= sustain:
            return float(t[j])
        j = k + 1
    return None


def compute_metrics(traj: Trajectory, params: ModelParams, controller: ControllerConfig,
                    transient_cutoff: float | None = None) -> MetricsReport:
    notes = []
    cutoff = _default_cutoff(traj) if transient_cutoff is None else transient_cutoff
    if len(traj.switch_events) < 2:
        notes.append("fewer than two switch events")
    herd = detect_herd_crossing(traj, traj.kind, params)
    cycles = measure_cycles(traj, cutoff) if len(traj.switch_events) >= 2 else []
    freedom, lockdown = steady_cycle(cycles, until=herd)
    if math.isnan(freedom):
        notes.append("no completed cycle before herd crossing or horizon")
    until = herd if herd is not None and herd > cutoff else None
    mask = _window(traj, cutoff, until)
    after_herd = 0
    if herd is not None:
        after_herd = sum(1 for ev in traj.switch_events
                         if ev.time > herd and ev.to_regime is Regime.LOCKDOWN)
    return MetricsReport(
        cycles=cycles,
        steady_freedom=freedom,
        steady_lockdown=lockdown,
        max_deviation_pct=max_deviation_pct(traj, controller.i_target, cutoff, until),
        peak_infected=float(traj.infected[mask].max()),
        duty_cycles=[c.duty_cycle for c in cycles],
        herd_time=herd,
        extinction_time=extinction_time(traj),
        transient_cutoff=cutoff,
        switch_count=len(traj.switch_events),
        lockdowns_after_herd=after_herd,
        warnings=notes,
    )


def _run_metrics(scenario: Scenario) -> MetricsReport:
    traj = scenario.run()
    return compute_metrics(traj, scenario.params, scenario.controller)


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian grid over one or more named axes around ``base``."""

    axes: dict[str, tuple[float, ...]]
    base: Scenario

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("at least one axis is required", "sweep.axes")
        for name, values in self.axes.items():
            if name not in SWEEP_AXES:
                raise ConfigError(f"unknown axis {name!r}; expected one of {', '.join(SWEEP_AXES)}", "sweep.axis")
            if len(values) == 0:
                raise ConfigError("values must be nonempty", f"sweep.{name}")

    def cells(self) -> list[tuple[int, dict[str, float]]]:
        names = list(self.axes)
        combos = itertools.product(*(self.axes[n] for n in names))
        return [(i, dict(zip(names, combo))) for i, combo in enumerate(combos)]

    def scenario(self, values: dict[str, float]) -> Scenario:
        sc = self.base
        for name, value in values.items():
            sc = sc.with_axis(name, value)
        return sc


@dataclass
class SweepResult:
    run_id: int
    axis_values: dict[str, float]
    metrics: MetricsReport | None
    error: str | None = None


def _safe_run(scenario: Scenario):
    try:
        return _run_metrics(scenario), None
    except Exception as exc:  # per-cell failures are reported, not fatal
        return None, f"{type(exc).__name__}: {exc}"


def _map(fn, items: list, jobs: int | None):
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def run_sweep(spec: SweepSpec, jobs: int | None = 1) -> list[SweepResult]:
    """Run every grid cell; results are ordered by ``run_id`` whatever ``jobs`` is."""
    cells = spec.cells()
    outcomes = _map(_safe_run, [spec.scenario(v) for _, v in cells], jobs)
    results = []
    for (run_id, values), (metrics, error) in zip(cells, outcomes):
        if error:
            log.error("sweep cell %d %s failed: %s", run_id, values, error)
        results.append(SweepResult(run_id, values, metrics, error))
    return results


def robustness_grid(base: Scenario, gamma_range=(0.03, 0.07), epsilon_range=(0.1, 0.3),
                    grid_size: int = 5, jobs: int | None = 1) -> list[SweepResult]:
    """Fixed controller over a uniform gamma x epsilon grid (SEIR)."""
    spec = SweepSpec({
        "gamma": tuple(np.linspace(*gamma_range, grid_size)),
        "epsilon": tuple(np.linspace(*epsilon_range, grid_size)),
    }, base)
    return run_sweep(spec, jobs)


def rn_sweep(base: Scenario, rn_values: Sequence[float] = tuple(np.linspace(1.2, 1.6, 9)),
             vary: str = "gamma", jobs: int | None = 1) -> list[tuple[float, float, float]]:
    """``(RN, steady_freedom, steady_lockdown)`` per reproduction number.

    ``vary="gamma"`` reaches each RN by changing the recovery rate with
    ``beta_freedom`` fixed; ``vary="beta"`` scales ``beta_freedom`` instead.
    """
    axis = {"gamma": "RN_gamma", "beta": "RN"}.get(vary)
    if axis is None:
        raise ConfigError(f"expected 'gamma' or 'beta', got {vary!r}", "sweep.vary")
    results = run_sweep(SweepSpec({axis: tuple(rn_values)}, base), jobs)
    out = []
    for res in results:
        m = res.metrics
        out.append((float(res.axis_values[axis]), m.steady_freedom if m else math.nan,
                    m.steady_lockdown if m else math.nan))
    return out


def vaccination_scenarios(base: Scenario, rates: Sequence[float],
                          schedule: VaccinationSchedule | None = None,
                          jobs: int | None = 1) -> dict[float, MetricsReport]:
    """Metrics per daily vaccination rate with a shared start/activation schedule."""
    if any(r < 0 for r in rates):
        raise DomainError("vaccination rates must be nonnegative")
    schedule = schedule or base.vaccination or VaccinationSchedule()
    scenarios = [replace(base, vaccination=replace(schedule, daily_rate=float(r))) for r in rates]
    reports = _map(_run_metrics, scenarios, jobs)
    return dict(zip((float(r) for r in rates), reports))


def beta_lockdown_sensitivity(base: Scenario, beta_lockdown_alt: float = 0.02,
                              jobs: int | None = 1) -> tuple[float, float]:
    """Change in (freedom, lockdown) duration when the lockdown contact rate is replaced.

    The two runs' cycles are paired by order of occurrence and compared
    over the last ``STEADY_CYCLES`` pairs both runs completed, so slow
    drift of the cycle length with time does not leak into the difference.
    """
    b0 = critical_contact_rate(base.kind, base.params, base.init_state()[0])
    if not (base.params.beta_lockdown < b0 and beta_lockdown_alt < b0):
        raise DomainError(f"both lockdown rates must stay below the critical rate {b0:.4g}")
    alt = base.with_axis("beta_lockdown", beta_lockdown_alt)
    ref_m, alt_m = _map(_run_metrics, [base, alt], jobs)
    ref_c = [c for c in ref_m.cycles if ref_m.herd_time is None or c.end <= ref_m.herd_time]
    alt_c = [c for c in alt_m.cycles if alt_m.herd_time is None or c.end <= alt_m.herd_time]
    n = min(len(ref_c), len(alt_c))
    if n == 0:
        return math.nan, math.nan
    lo = max(0, n - STEADY_CYCLES)
    ref_f, ref_l = steady_cycle(ref_c[lo:n])
    alt_f, alt_l = steady_cycle(alt_c[lo:n])
    return alt_f - ref_f, alt_l - ref_l


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.10g}"


METRIC_COLUMNS = ("steady_freedom", "steady_lockdown", "max_dev_pct", "peak_I", "herd_time", "extinction_time")


def _metric_row(m: MetricsReport | None) -> list[str]:
    if m is None:
        return [""] * len(METRIC_COLUMNS)
    return [_fmt(m.steady_freedom), _fmt(m.steady_lockdown), _fmt(m.max_deviation_pct),
            _fmt(m.peak_infected), _fmt(m.herd_time), _fmt(m.extinction_time)]


def write_metrics_csv(results: Sequence[SweepResult], path, axis_names: Sequence[str] = (),
                      extra: Sequence[str] = ()) -> Path:
    """One row per run: ``run_id,<axes>,steady_freedom,...,extinction_time[,<extra>]``.

    ``extra`` names further :class:`MetricsReport` attributes to append.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", *axis_names, *METRIC_COLUMNS, *extra])
        for res in results:
            tail = [_fmt(getattr(res.metrics, e)) if res.metrics else "" for e in extra]
            w.writerow([res.run_id, *(_fmt(res.axis_values[a]) for a in axis_names),
                        *_metric_row(res.metrics), *tail])
    return path


def write_cycles_csv(metrics: MetricsReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "cycle_start", "freedom_duration", "lockdown_duration", "duty_cycle"])
        for j, c in enumerate(metrics.cycles):
            w.writerow([j, _fmt(c.cycle_start), _fmt(c.freedom_duration), _fmt(c.lockdown_duration),
                        _fmt(c.duty_cycle)])
    return path
