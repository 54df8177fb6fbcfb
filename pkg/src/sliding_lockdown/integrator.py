"""Fixed-step closed-loop integration of a model under the switching law."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .controller import (
    ControllerConfig,
    ControllerState,
    Regime,
    surface_residual,
    switch_decision,
)
from .errors import ConfigError, NumericalError
from .models import (
    ModelKind,
    ModelParams,
    VaccinationSchedule,
    check_actuator_range,
    check_state,
    compartments,
    herd_threshold,
    index,
    observable_derivatives,
    rhs_function,
)

__all__ = [
    "IntegratorConfig",
    "SwitchEvent",
    "Trajectory",
    "rk4_step",
    "simulate",
    "detect_herd_crossing",
    "write_trajectory_csv",
    "TRAJECTORY_COLUMNS",
]

RENORMALIZE_TOL = 1e-12
ABORT_TOL = 1e-6
TRAJECTORY_COLUMNS = ("t", "S", "E", "A", "I", "R", "regime", "beta", "residual")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.01
    horizon: float = 400.0
    record_stride: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"must be positive, got {self.dt}", "integrator.dt")
        if not self.horizon > 0:
            raise ConfigError(f"must be positive, got {self.horizon}", "integrator.horizon")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.record_stride}", "integrator.record_stride")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


class SwitchEvent(NamedTuple):
    time: float
    from_regime: Regime
    to_regime: Regime


@dataclass
class Trajectory:
    """Logged closed-loop run; row ``j`` holds the state at ``times[j]`` and the
    regime, contact rate and residual the controller chose there."""

    kind: ModelKind
    times: np.ndarray
    states: np.ndarray
    regimes: np.ndarray
    betas: np.ndarray
    residuals: np.ndarray
    switch_events: list[SwitchEvent] = field(default_factory=list)
    dt: float = 0.01

    def __len__(self) -> int:
        return len(self.times)

    def compartment(self, name: str) -> np.ndarray:
        return self.states[:, index(self.kind, name)]

    @property
    def infected(self) -> np.ndarray:
        return self.compartment("I")

    @property
    def susceptible(self) -> np.ndarray:
        return self.compartment("S")

    def lockdown_switches(self) -> list[float]:
        return [ev.time for ev in self.switch_events if ev.to_regime is Regime.LOCKDOWN]


def _rk4(f, y, params, beta, v, dt):
    k1 = f(y, params, beta, v)
    k2 = f(y + (0.5 * dt) * k1, params, beta, v)
    k3 = f(y + (0.5 * dt) * k2, params, beta, v)
    k4 = f(y + dt * k3, params, beta, v)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _finish_step(y, v, t):
    if v > 0 and y[0] < 0:
        # vaccination exhausted S within the step: move only what was there
        y[-1] += y[0]
        y[0] = 0.0
    total = y.sum()
    if not math.isfinite(total):
        raise NumericalError(f"non-finite state {y} after step at t={t:.6g}")
    drift = abs(total - 1.0)
    if drift > ABORT_TOL:
        raise NumericalError(f"compartments sum to {total:.12g} after step at t={t:.6g}")
    if drift > RENORMALIZE_TOL:
        y /= total
    return y


def rk4_step(kind: ModelKind, state, params: ModelParams, beta: float, v: float, dt: float,
             t: float = 0.0) -> np.ndarray:
    """Advance ``state`` by one classical Runge-Kutta step of length ``dt``."""
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    y = _rk4(rhs_function(kind), np.asarray(state, dtype=float), params, beta, v, dt)
    return _finish_step(y, v, t)


def simulate(kind: ModelKind, params: ModelParams, controller: ControllerConfig,
             vaccination: VaccinationSchedule | None, init, integ: IntegratorConfig) -> Trajectory:
    """Run the closed loop from ``init`` to ``integ.horizon``.

    Each step evaluates the residual with the incumbent regime's contact
    rate, applies the switching law, then integrates one RK4 step with the
    (possibly new) regime held constant.
    """
    kind = ModelKind.parse(kind)
    params.validate(kind)
    controller.validate(kind)
    y = check_state(kind, init).copy()
    vaccination = vaccination or VaccinationSchedule()
    check_actuator_range(kind, params, y[0])

    f = rhs_function(kind)
    betas = (params.beta_freedom, params.beta_lockdown)
    dt, stride, n_steps = integ.dt, int(integ.record_stride), integ.n_steps
    i_idx = index(kind, "I")

    n_rec = n_steps // stride + 1
    times = np.empty(n_rec)
    states = np.empty((n_rec, len(y)))
    regimes = np.empty(n_rec, dtype=np.int8)
    beta_log = np.empty(n_rec)
    residuals = np.empty(n_rec)
    events: list[SwitchEvent] = []

    ctrl = ControllerState()
    regime = ctrl.regime
    rec = 0
    for step in range(n_steps + 1):
        t = step * dt
        i_dot, i_ddot = observable_derivatives(kind, y, params, betas[regime])
        r = surface_residual(controller, y[i_idx], i_dot, i_ddot)
        new_regime, ctrl = switch_decision(controller, ctrl, r, t)
        if new_regime is not regime:
            events.append(SwitchEvent(t, regime, new_regime))
            regime = new_regime
        beta = betas[regime]
        if step % stride == 0:
            times[rec] = t
            states[rec] = y
            regimes[rec] = regime
            beta_log[rec] = beta
            residuals[rec] = r
            rec += 1
        if step == n_steps:
            break
        v = vaccination.rate_at(t, y[0])
        y = _finish_step(_rk4(f, y, params, beta, v, dt), v, t)

    return Trajectory(kind, times[:rec], states[:rec], regimes[:rec], beta_log[:rec],
                      residuals[:rec], events, dt)


def detect_herd_crossing(traj: Trajectory, kind: ModelKind, params: ModelParams) -> float | None:
    """First time S falls to the herd threshold, linearly interpolated between samples."""
    s_herd = herd_threshold(kind, params)
    s = traj.susceptible
    below = np.flatnonzero(s <= s_herd)
    if below.size == 0:
        return None
    j = int(below[0])
    if j == 0:
        return float(traj.times[0])
    s0, s1 = s[j - 1], s[j]
    t0, t1 = traj.times[j - 1], traj.times[j]
    return float(t0 + (s0 - s_herd) / (s0 - s1) * (t1 - t0))


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """Write ``t,S,E,A,I,R,regime,beta,residual``; absent compartments stay empty."""
    path = Path(path)
    names = compartments(traj.kind)
    cols = {c: traj.states[:, j] for j, c in enumerate(names)}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for j, t in enumerate(traj.times):
            row = [f"{t:.10g}"]
            row += [f"{cols[c][j]:.12g}" if c in cols else "" for c in ("S", "E", "A", "I", "R")]
            row += [Regime(traj.regimes[j]).code, f"{traj.betas[j]:.10g}", f"{traj.residuals[j]:.12g}"]
            w.writerow(row)
    return path
