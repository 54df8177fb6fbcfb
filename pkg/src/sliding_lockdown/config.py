"""YAML run configuration: loading, validation with field paths, and round-trip dumping.

A minimal file::

    model: SEIR
    params: {gamma: 0.05, epsilon: 0.2, beta_freedom: 0.065, beta_lockdown: 0.01}
    controller: {lambda: 0.2, phi: 1.0e-4, i_target: 0.002}
    initial_prevalence: 0.001

Contact rates may be given instead as ``rn_freedom`` / ``rn_lockdown``.
Optional sections: ``integrator``, ``vaccination``, ``initial_state``,
``output_dir``, ``sweep``, ``rates`` and ``data``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .controller import ControllerConfig
from .errors import ConfigError, SlidingLockdownError
from .estimation import SeriesKind
from .integrator import IntegratorConfig
from .models import ModelKind, ModelParams, VaccinationSchedule, compartments
from .scenarios import SWEEP_AXES, Scenario

__all__ = [
    "DataConfig",
    "SweepConfig",
    "RunConfig",
    "load_config",
    "parse_config",
    "dump_config",
    "preset_names",
    "preset_path",
]

_TOP_KEYS = {"model", "params", "controller", "integrator", "vaccination", "initial_prevalence",
             "initial_state", "output_dir", "sweep", "rates", "data"}
_PARAM_KEYS = {"gamma", "epsilon", "epsilon1", "epsilon2", "beta_freedom", "beta_lockdown",
               "rn_freedom", "rn_lockdown"}
_CONTROLLER_KEYS = {"lambda", "phi", "i_target", "mu", "derivative_source"}
_INTEGRATOR_KEYS = {"dt", "horizon", "record_stride"}
_VACCINATION_KEYS = {"start_time", "activation_delay", "daily_rate"}
_SWEEP_KEYS = {"axes", "beta_lockdown_alt"}
_DATA_KEYS = {"path", "kind", "population", "h_factor", "window", "degree"}


@dataclass(frozen=True)
class DataConfig:
    path: str | None = None
    kind: SeriesKind = SeriesKind.DiagnosedInfected
    population: float = 6.0e7
    h_factor: float = 50.0
    window: int = 7
    degree: int = 3


@dataclass(frozen=True)
class SweepConfig:
    axes: dict[str, tuple[float, ...]]
    beta_lockdown_alt: float | None = None


@dataclass
class RunConfig:
    scenario: Scenario
    output_dir: str = "out"
    sweep: SweepConfig | None = None
    rates: tuple[float, ...] = ()
    data: DataConfig = field(default_factory=DataConfig)


def _section(raw: Any, path: str, allowed: set[str]) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"expected a mapping, got {type(raw).__name__}", path)
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; allowed: {sorted(allowed)}", path)
    return raw


def _number(raw: Any, path: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        try:
            return float(str(raw))  # yaml reads "1e-4" as a string
        except ValueError:
            raise ConfigError(f"expected a number, got {raw!r}", path) from None
    return float(raw)


def _optional(sec: dict, key: str, path: str) -> float | None:
    return None if sec.get(key) is None else _number(sec[key], f"{path}.{key}")


def _values(raw: Any, path: str) -> tuple[float, ...]:
    """A list of numbers or ``{start, stop, num}`` (inclusive linspace)."""
    if isinstance(raw, dict):
        sec = _section(raw, path, {"start", "stop", "num"})
        try:
            start, stop = _number(sec["start"], f"{path}.start"), _number(sec["stop"], f"{path}.stop")
            num = int(_number(sec["num"], f"{path}.num"))
        except KeyError as exc:
            raise ConfigError(f"missing {exc.args[0]!r}", path) from None
        if num < 1:
            raise ConfigError("num must be >= 1", f"{path}.num")
        return tuple(float(x) for x in np.linspace(start, stop, num))
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError("expected a nonempty list of numbers or {start, stop, num}", path)
    return tuple(_number(x, f"{path}[{j}]") for j, x in enumerate(raw))


def _wrap(fn, path_prefix: str):
    """Re-raise validation errors from dataclass constructors under ``path_prefix``."""
    try:
        return fn()
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(str(exc), path_prefix) from None
        raise
    except (SlidingLockdownError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path_prefix) from None


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a configuration mapping and build a :class:`RunConfig`."""
    top = _section(raw, "<root>", _TOP_KEYS)
    if "model" not in top:
        raise ConfigError("is required", "model")
    kind = _wrap(lambda: ModelKind.parse(top["model"]), "model")

    p = _section(top.get("params"), "params", _PARAM_KEYS)
    if "gamma" not in p:
        raise ConfigError("is required", "params.gamma")
    rn_f, rn_l = _optional(p, "rn_freedom", "params"), _optional(p, "rn_lockdown", "params")
    for beta, rn in (("beta_freedom", rn_f), ("beta_lockdown", rn_l)):
        if (p.get(beta) is None) == (rn is None):
            other = "rn_" + beta.split("_")[1]
            raise ConfigError(f"give exactly one of {beta} and {other}", f"params.{beta}")
    params = ModelParams(
        gamma=_number(p["gamma"], "params.gamma"),
        beta_freedom=_optional(p, "beta_freedom", "params") or 0.0,
        beta_lockdown=_optional(p, "beta_lockdown", "params") or 0.0,
        epsilon=_optional(p, "epsilon", "params"),
        epsilon1=_optional(p, "epsilon1", "params"),
        epsilon2=_optional(p, "epsilon2", "params"),
    )

    c = _section(top.get("controller"), "controller", _CONTROLLER_KEYS)
    for key in ("lambda", "phi", "i_target"):
        if key not in c:
            raise ConfigError("is required", f"controller.{key}")
    if c.get("derivative_source", "model") != "model":
        raise ConfigError("only 'model' is supported in simulation", "controller.derivative_source")
    controller = ControllerConfig(
        lam=_number(c["lambda"], "controller.lambda"),
        phi=_number(c["phi"], "controller.phi"),
        i_target=_number(c["i_target"], "controller.i_target"),
        mu=_number(c.get("mu", 0.0), "controller.mu"),
    )

    i = _section(top.get("integrator"), "integrator", _INTEGRATOR_KEYS)
    integ = IntegratorConfig(**{k: _number(v, f"integrator.{k}") for k, v in i.items()})
    if "record_stride" in i:
        integ = IntegratorConfig(integ.dt, integ.horizon, int(integ.record_stride))

    vaccination = None
    if top.get("vaccination") is not None:
        v = _section(top["vaccination"], "vaccination", _VACCINATION_KEYS)
        vaccination = VaccinationSchedule(**{k: _number(x, f"vaccination.{k}") for k, x in v.items()})

    initial_state = None
    if top.get("initial_state") is not None:
        s = _section(top["initial_state"], "initial_state", set(compartments(kind)))
        initial_state = {k: _number(x, f"initial_state.{k}") for k, x in s.items()}
    prevalence = _number(top.get("initial_prevalence", 0.001), "initial_prevalence")

    scenario = _wrap(lambda: Scenario(kind, params, controller, integ, vaccination, initial_state,
                                      prevalence, rn_f, rn_l), "params")
    _wrap(lambda: scenario.params.validate(kind), "params")
    _wrap(lambda: controller.validate(kind), "controller")
    _wrap(scenario.init_state, "initial_state" if initial_state else "initial_prevalence")

    sweep = None
    if top.get("sweep") is not None:
        sw = _section(top["sweep"], "sweep", _SWEEP_KEYS)
        axes_raw = _section(sw.get("axes"), "sweep.axes", set(SWEEP_AXES))
        if not axes_raw:
            raise ConfigError("at least one axis is required", "sweep.axes")
        axes = {name: _values(vals, f"sweep.axes.{name}") for name, vals in axes_raw.items()}
        sweep = SweepConfig(axes, _optional(sw, "beta_lockdown_alt", "sweep"))

    rates: tuple[float, ...] = ()
    if top.get("rates") is not None:
        rates = _values(top["rates"], "rates")
        for j, r in enumerate(rates):
            if r < 0:
                raise ConfigError(f"must be nonnegative, got {r}", f"rates[{j}]")

    d = _section(top.get("data"), "data", _DATA_KEYS)
    data_path = d.get("path")
    if data_path is not None and base_dir is not None and not Path(data_path).is_absolute():
        data_path = str(base_dir / data_path)
    data = DataConfig(
        path=data_path,
        kind=_wrap(lambda: SeriesKind(d.get("kind", "DiagnosedInfected")), "data.kind"),
        population=_number(d.get("population", 6.0e7), "data.population"),
        h_factor=_number(d.get("h_factor", 50.0), "data.h_factor"),
        window=int(_number(d.get("window", 7), "data.window")),
        degree=int(_number(d.get("degree", 3), "data.degree")),
    )
    return RunConfig(scenario, str(top.get("output_dir", "out")), sweep, rates, data)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", str(path)) from None
    return parse_config(raw, base_dir=path.parent)


def dump_config(cfg: RunConfig) -> dict:
    """Effective configuration with every default filled in; ``parse_config`` inverts it."""
    sc = cfg.scenario
    params = sc.params.as_dict()
    if sc.rn_freedom is not None:
        params.pop("beta_freedom")
        params["rn_freedom"] = sc.rn_freedom
    if sc.rn_lockdown is not None:
        params.pop("beta_lockdown")
        params["rn_lockdown"] = sc.rn_lockdown
    out: dict[str, Any] = {
        "model": sc.kind.value,
        "params": params,
        "controller": {"lambda": sc.controller.lam, "phi": sc.controller.phi,
                       "i_target": sc.controller.i_target, "mu": sc.controller.mu,
                       "derivative_source": "model"},
        "integrator": {"dt": sc.integrator.dt, "horizon": sc.integrator.horizon,
                       "record_stride": int(sc.integrator.record_stride)},
        "output_dir": cfg.output_dir,
    }
    if sc.initial_state is not None:
        out["initial_state"] = dict(sc.initial_state)
    else:
        out["initial_prevalence"] = sc.initial_prevalence
    if sc.vaccination is not None:
        v = sc.vaccination
        out["vaccination"] = {"start_time": v.start_time, "activation_delay": v.activation_delay,
                              "daily_rate": v.daily_rate}
    if cfg.sweep is not None:
        out["sweep"] = {"axes": {k: list(v) for k, v in cfg.sweep.axes.items()}}
        if cfg.sweep.beta_lockdown_alt is not None:
            out["sweep"]["beta_lockdown_alt"] = cfg.sweep.beta_lockdown_alt
    if cfg.rates:
        out["rates"] = list(cfg.rates)
    d = cfg.data
    out["data"] = {"path": d.path, "kind": d.kind.value, "population": d.population,
                   "h_factor": d.h_factor, "window": d.window, "degree": d.degree}
    return out


def preset_names() -> list[str]:
    root = resources.files("sliding_lockdown") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_path(name: str) -> Path:
    path = Path(str(resources.files("sliding_lockdown") / "presets" / f"{name}.yaml"))
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}", "--preset")
    return path
