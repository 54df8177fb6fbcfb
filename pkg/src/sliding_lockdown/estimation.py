"""Daily epidemiological counts -> smoothed infected fraction -> replayed switching.

Daily series are scaled to an infected-fraction estimate
(``I = H * count / population``), smoothed with a local cubic
least-squares fit whose analytic derivative gives ``I_dot``, and fed
day by day through the same hysteresis law used in simulation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.signal import savgol_filter

from .controller import ControllerConfig, ControllerState, Regime, surface_residual, switch_decision
from .errors import DomainError, ParseError

__all__ = [
    "SeriesKind",
    "DailySeries",
    "SmoothedSignal",
    "ReplayDecision",
    "ingest_csv",
    "scale_to_infected",
    "smooth_and_differentiate",
    "replay_control",
    "write_replay_csv",
    "export_daily_counts",
]


class SeriesKind(str, Enum):
    DiagnosedInfected = "DiagnosedInfected"
    Hospitalized = "Hospitalized"
    CriticalCare = "CriticalCare"


@dataclass
class DailySeries:
    start_date: date
    values: np.ndarray
    population: float
    kind: SeriesKind = SeriesKind.DiagnosedInfected
    interpolated: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.interpolated is None:
            self.interpolated = np.zeros(len(self.values), dtype=bool)
        if not self.population > 0:
            raise DomainError(f"population must be positive, got {self.population}")
        if np.any(self.values < 0):
            raise DomainError("counts must be nonnegative")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def has_gaps(self) -> bool:
        return bool(self.interpolated.any())

    def dates(self) -> list[date]:
        return [self.start_date + timedelta(days=j) for j in range(len(self))]


@dataclass
class SmoothedSignal:
    times: np.ndarray
    i_hat: np.ndarray
    i_dot_hat: np.ndarray
    window: int
    degree: int


class ReplayDecision(NamedTuple):
    time: float
    regime: Regime
    residual: float


def _rows(source):
    if isinstance(source, (str, Path)) and Path(source).exists():
        with Path(source).open(newline="") as fh:
            yield from enumerate(csv.reader(fh), start=1)
    elif hasattr(source, "read"):
        yield from enumerate(csv.reader(source), start=1)
    else:
        yield from enumerate(csv.reader(io.StringIO(str(source))), start=1)


def ingest_csv(source, population: float = 6.0e7,
               kind: SeriesKind | str = SeriesKind.DiagnosedInfected) -> DailySeries:
    """Parse a ``date,count`` file (ISO dates, optional header row).

    Missing days are filled by linear interpolation and flagged in
    ``DailySeries.interpolated``.
    """
    days: list[date] = []
    counts: list[float] = []
    for lineno, row in _rows(source):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", lineno)
        raw_date, raw_count = (cell.strip() for cell in row)
        try:
            day = date.fromisoformat(raw_date)
        except ValueError:
            if not days and lineno == 1:
                continue  # header
            raise ParseError(f"bad date {raw_date!r}", lineno) from None
        try:
            count = float(raw_count)
        except ValueError:
            raise ParseError(f"bad count {raw_count!r}", lineno) from None
        if not np.isfinite(count):
            raise ParseError(f"non-finite count {raw_count!r}", lineno)
        if count < 0:
            raise ParseError(f"negative count {count:g}", lineno)
        if days and day <= days[-1]:
            raise ParseError(f"date {day} does not follow {days[-1]}", lineno)
        days.append(day)
        counts.append(count)
    if not days:
        raise ParseError("no data rows")

    offsets = np.array([(d - days[0]).days for d in days])
    full = np.arange(offsets[-1] + 1)
    values = np.interp(full, offsets, counts)
    interpolated = ~np.isin(full, offsets)
    return DailySeries(days[0], values, population, SeriesKind(kind), interpolated)


def scale_to_infected(series: DailySeries, h_factor: float = 1.0) -> np.ndarray:
    """Infected-fraction estimate ``h_factor * count / population``."""
    if series.kind is SeriesKind.CriticalCare and h_factor < 1:
        raise DomainError(f"critical-care scale factor must be >= 1, got {h_factor}")
    if not h_factor > 0:
        raise DomainError(f"scale factor must be positive, got {h_factor}")
    fractions = series.values * h_factor / series.population
    if np.any(fractions > 1):
        raise DomainError(f"scaled fraction exceeds 1 (max {fractions.max():.4g}); check h_factor and population")
    return fractions


def smooth_and_differentiate(fractions, window: int = 7, degree: int = 3, dt: float = 1.0) -> SmoothedSignal:
    """Local polynomial least-squares fit; edges use the nearest full window."""
    x = np.asarray(fractions, dtype=float)
    if window % 2 == 0 or window < degree + 2:
        raise DomainError(f"window must be odd and >= degree + 2, got window={window}, degree={degree}")
    if len(x) < window:
        raise DomainError(f"series of length {len(x)} is shorter than window {window}")
    i_hat = savgol_filter(x, window, degree, deriv=0, mode="interp")
    i_dot = savgol_filter(x, window, degree, deriv=1, delta=dt, mode="interp")
    return SmoothedSignal(np.arange(len(x)) * dt, i_hat, i_dot, window, degree)


def replay_control(signal: SmoothedSignal, config: ControllerConfig,
                   phi: float | None = None) -> list[ReplayDecision]:
    """Daily regime decisions from estimated (I, I_dot), starting in freedom.

    ``phi`` overrides the dead band of ``config``. In closed loop the
    residual only touches the band edge at the switching instant, so a
    daily sampled, smoothed replay at the same band tends to stay just
    inside it.
    """
    if config.mu != 0:
        raise DomainError("replay has no second-derivative estimate; mu must be 0")
    if phi is not None:
        config = replace(config, phi=phi)
    ctrl = ControllerState()
    out = []
    for t, i, i_dot in zip(signal.times, signal.i_hat, signal.i_dot_hat):
        r = surface_residual(config, i, i_dot)
        regime, ctrl = switch_decision(config, ctrl, r, float(t))
        out.append(ReplayDecision(float(t), regime, r))
    return out


def write_replay_csv(path, start_date: date, signal: SmoothedSignal, decisions: list[ReplayDecision]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "I_hat", "I_dot_hat", "residual", "regime"])
        for j, d in enumerate(decisions):
            day = start_date + timedelta(days=int(round(d.time)))
            w.writerow([day.isoformat(), f"{signal.i_hat[j]:.10g}", f"{signal.i_dot_hat[j]:.10g}",
                        f"{d.residual:.10g}", d.regime.code])
    return path


def export_daily_counts(times, infected, path, start_date: date = date(2020, 3, 1),
                        population: float = 6.0e7, h_factor: float = 1.0) -> Path:
    """Sample I(t) at whole days and write it as a ``date,count`` file."""
    times = np.asarray(times, dtype=float)
    days = np.arange(int(np.ceil(times[0])), int(np.floor(times[-1])) + 1)
    counts = np.interp(days, times, np.asarray(infected, dtype=float)) * population / h_factor
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "count"])
        for d, c in zip(days, counts):
            w.writerow([(start_date + timedelta(days=int(d))).isoformat(), f"{c:.10g}"])
    return path
