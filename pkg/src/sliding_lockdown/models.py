"""SEIR, SAIR and SEAIR compartmental models.

States are 1-D float arrays of population fractions, ordered as in
:func:`compartments`:

    SEIR   [S, E, I, R]
    SAIR   [S, A, I, R]
    SEAIR  [S, E, A, I, R]

The contact rate ``beta`` is the single actuated quantity; a vaccination
input ``v`` moves mass directly from S to R.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

__all__ = [
    "ModelKind",
    "ModelParams",
    "VaccinationSchedule",
    "compartments",
    "index",
    "make_state",
    "check_state",
    "default_initial_state",
    "rhs",
    "rhs_function",
    "reproduction_number",
    "critical_contact_rate",
    "beta_from_rn",
    "herd_threshold",
    "equilibrium_state",
    "epidemic_duration_bound",
    "observable_derivatives",
    "infectious_load",
    "infectious_total",
]


class ModelKind(str, Enum):
    SEIR = "SEIR"
    SAIR = "SAIR"
    SEAIR = "SEAIR"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, ModelKind):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(f"unknown model kind {value!r}; expected one of SEIR, SAIR, SEAIR") from None


_COMPARTMENTS = {
    ModelKind.SEIR: ("S", "E", "I", "R"),
    ModelKind.SAIR: ("S", "A", "I", "R"),
    ModelKind.SEAIR: ("S", "E", "A", "I", "R"),
}

# rate fields each kind needs besides gamma and the two contact rates
_REQUIRED_RATES = {
    ModelKind.SEIR: ("epsilon",),
    ModelKind.SAIR: ("epsilon1", "epsilon2"),
    ModelKind.SEAIR: ("epsilon", "epsilon1", "epsilon2"),
}


def compartments(kind: ModelKind) -> tuple[str, ...]:
    """Compartment names of ``kind`` in state-vector order."""
    return _COMPARTMENTS[ModelKind.parse(kind)]


def index(kind: ModelKind, name: str) -> int:
    """Position of compartment ``name`` in the state vector of ``kind``."""
    try:
        return compartments(kind).index(name)
    except ValueError:
        raise ShapeError(f"{kind.value} has no compartment {name!r}") from None


@dataclass(frozen=True)
class ModelParams:
    """Epidemiological rates (per day) and the two admissible contact rates."""

    gamma: float
    beta_freedom: float
    beta_lockdown: float
    epsilon: float | None = None
    epsilon1: float | None = None
    epsilon2: float | None = None

    def validate(self, kind: ModelKind) -> "ModelParams":
        kind = ModelKind.parse(kind)
        for name in ("gamma", "beta_freedom", "beta_lockdown") + _REQUIRED_RATES[kind]:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"required for {kind.value}", f"params.{name}")
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"must be a positive rate, got {value}", f"params.{name}")
        if self.beta_lockdown > self.beta_freedom:
            raise ConfigError(
                f"beta_lockdown={self.beta_lockdown} exceeds beta_freedom={self.beta_freedom}",
                "params.beta_lockdown",
            )
        return self

    def replace(self, **changes) -> "ModelParams":
        values = asdict(self)
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class VaccinationSchedule:
    """Constant-rate vaccination switched on at ``start_time + activation_delay``."""

    start_time: float = 0.0
    activation_delay: float = 0.0
    daily_rate: float = 0.0

    def __post_init__(self):
        for name in ("start_time", "activation_delay", "daily_rate"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"must be nonnegative, got {value}", f"vaccination.{name}")

    @property
    def effective_from(self) -> float:
        return self.start_time + self.activation_delay

    def rate_at(self, t: float, susceptible: float) -> float:
        if self.daily_rate > 0 and t >= self.effective_from and susceptible > 0:
            return self.daily_rate
        return 0.0


def check_state(kind: ModelKind, state, tol: float = 1e-9) -> np.ndarray:
    """Validate ``state`` for ``kind`` and return it as a float array."""
    kind = ModelKind.parse(kind)
    x = np.asarray(state, dtype=float)
    n = len(_COMPARTMENTS[kind])
    if x.shape != (n,):
        raise ShapeError(f"{kind.value} state needs shape ({n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"non-finite state {x}")
    if np.any(x < -tol) or np.any(x > 1 + tol):
        raise DomainError(f"compartments must lie in [0, 1], got {x}")
    if abs(x.sum() - 1.0) > tol:
        raise DomainError(f"compartments must sum to 1, got {x.sum():.15g}")
    return x


def make_state(kind: ModelKind, **fractions: float) -> np.ndarray:
    """Build a state from named compartments; S defaults to the remainder."""
    kind = ModelKind.parse(kind)
    names = _COMPARTMENTS[kind]
    unknown = set(fractions) - set(names)
    if unknown:
        raise ShapeError(f"{kind.value} has no compartment(s) {sorted(unknown)}")
    x = np.array([float(fractions.get(c, 0.0)) for c in names])
    if "S" not in fractions:
        x[0] = 1.0 - x[1:].sum()
    return check_state(kind, x)


def default_initial_state(kind: ModelKind, prevalence: float = 0.001) -> np.ndarray:
    """``prevalence`` in every infectious compartment (E, A, I), rest in S."""
    kind = ModelKind.parse(kind)
    infectious = [c for c in _COMPARTMENTS[kind] if c in ("E", "A", "I")]
    return make_state(kind, **{c: prevalence for c in infectious})


def _seir_rhs(state, params, beta, v):
    s, e, i, r = state
    infection = beta * s * i
    progression = params.epsilon * e
    recovery = params.gamma * i
    return np.array([-infection - v, infection - progression, progression - recovery, recovery + v])


def _sair_rhs(state, params, beta, v):
    s, a, i, r = state
    infection = beta * s * (a + i)
    to_symptomatic = params.epsilon1 * a
    a_recovery = params.epsilon2 * a
    recovery = params.gamma * i
    return np.array([
        -infection - v,
        infection - to_symptomatic - a_recovery,
        to_symptomatic - recovery,
        a_recovery + recovery + v,
    ])


def _seair_rhs(state, params, beta, v):
    s, e, a, i, r = state
    infection = beta * s * (a + i)
    progression = params.epsilon * e
    to_symptomatic = params.epsilon1 * a
    a_recovery = params.epsilon2 * a
    recovery = params.gamma * i
    return np.array([
        -infection - v,
        infection - progression,
        progression - to_symptomatic - a_recovery,
        to_symptomatic - recovery,
        a_recovery + recovery + v,
    ])


_RHS = {ModelKind.SEIR: _seir_rhs, ModelKind.SAIR: _sair_rhs, ModelKind.SEAIR: _seair_rhs}


def rhs_function(kind: ModelKind):
    """Unchecked ``f(state, params, beta, v)`` for ``kind``; used in inner loops."""
    return _RHS[ModelKind.parse(kind)]


def rhs(kind: ModelKind, state, params: ModelParams, beta: float, v: float = 0.0) -> np.ndarray:
    """Time derivative of ``state`` under contact rate ``beta`` and vaccination ``v``.

    Every flow leaves one compartment and enters another, so the components
    sum to zero.
    """
    kind = ModelKind.parse(kind)
    x = np.asarray(state, dtype=float)
    n = len(_COMPARTMENTS[kind])
    if x.shape != (n,):
        raise ShapeError(f"{kind.value} state needs shape ({n},), got {x.shape}")
    if beta < 0 or v < 0:
        raise DomainError(f"beta and v must be nonnegative, got beta={beta}, v={v}")
    return _RHS[kind](x, params, beta, v)


def reproduction_number(beta: float, gamma: float) -> float:
    """RN = beta / gamma."""
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    return beta / gamma


def critical_contact_rate(kind: ModelKind, params: ModelParams, s: float) -> float:
    """Contact rate at which a nonzero infected equilibrium exists for susceptible fraction ``s``."""
    if not s > 0:
        raise DomainError(f"susceptible fraction must be positive, got {s}")
    kind = ModelKind.parse(kind)
    if kind is ModelKind.SEIR:
        return params.gamma / s
    g, e1, e2 = params.gamma, params.epsilon1, params.epsilon2
    return g * (e1 + e2) / ((g + e1) * s)


def beta_from_rn(kind: ModelKind, params: ModelParams, rn: float) -> float:
    """Contact rate giving reproduction number ``rn`` in a fully susceptible population.

    For SEIR this is ``rn * gamma``; for SAIR/SEAIR the next-generation
    threshold ``critical_contact_rate(S=1)`` replaces gamma.
    """
    return rn * critical_contact_rate(kind, params, 1.0)


def herd_threshold(kind: ModelKind, params: ModelParams) -> float:
    """Susceptible fraction below which full freedom no longer grows the epidemic."""
    return critical_contact_rate(kind, params, 1.0) / params.beta_freedom


def equilibrium_state(kind: ModelKind, params: ModelParams, i0: float) -> dict[str, float]:
    """Companion compartments that hold I at ``i0`` (I-dot = 0, A-dot = 0, E-dot = 0)."""
    if not i0 > 0:
        raise DomainError(f"target infected fraction must be positive, got {i0}")
    kind = ModelKind.parse(kind)
    g = params.gamma
    if kind is ModelKind.SEIR:
        return {"E": g * i0 / params.epsilon, "I": i0}
    a0 = g * i0 / params.epsilon1
    if kind is ModelKind.SAIR:
        return {"A": a0, "I": i0}
    e0 = g * (params.epsilon1 + params.epsilon2) * i0 / (params.epsilon1 * params.epsilon)
    return {"E": e0, "A": a0, "I": i0}


def epidemic_duration_bound(params: ModelParams, kind: ModelKind, i0: float) -> float:
    """Shortest epidemic length (days) compatible with I(t) <= i0.

    Holding I at ``i0`` drains susceptibles at the equilibrium infection
    flux (``gamma * i0`` for SEIR), so reaching the herd threshold takes
    ``(1 - S_herd) / flux`` days.
    """
    if not i0 > 0:
        raise DomainError(f"target infected fraction must be positive, got {i0}")
    kind = ModelKind.parse(kind)
    flux = params.gamma * i0
    if kind is not ModelKind.SEIR:
        flux *= (params.epsilon1 + params.epsilon2) / params.epsilon1
    return max(0.0, 1.0 - herd_threshold(kind, params)) / flux


def observable_derivatives(kind: ModelKind, state, params: ModelParams, beta: float):
    """Exact (I-dot, I-double-dot) at ``state``; the second is ``None`` except for SEAIR."""
    kind = ModelKind.parse(kind)
    g = params.gamma
    if kind is ModelKind.SEIR:
        _, e, i, _ = state
        return params.epsilon * e - g * i, None
    if kind is ModelKind.SAIR:
        _, a, i, _ = state
        return params.epsilon1 * a - g * i, None
    _, e, a, i, _ = state
    i_dot = params.epsilon1 * a - g * i
    a_dot = params.epsilon * e - (params.epsilon1 + params.epsilon2) * a
    return i_dot, params.epsilon1 * a_dot - g * i_dot


def infectious_load(kind: ModelKind, states) -> np.ndarray | float:
    """E+I (SEIR) or A+I (SAIR, SEAIR); accepts one state or an (n, k) stack."""
    kind = ModelKind.parse(kind)
    x = np.asarray(states, dtype=float)
    first = "E" if kind is ModelKind.SEIR else "A"
    return x[..., index(kind, first)] + x[..., index(kind, "I")]


def infectious_total(kind: ModelKind, states) -> np.ndarray | float:
    """Sum of every non-S, non-R compartment."""
    x = np.asarray(states, dtype=float)
    return x[..., 1:-1].sum(axis=-1)


def check_actuator_range(kind: ModelKind, params: ModelParams, s: float) -> bool:
    """Warn unless beta_freedom > critical rate > beta_lockdown at susceptible ``s``."""
    b0 = critical_contact_rate(kind, params, s)
    ok = params.beta_freedom > b0 > params.beta_lockdown
    if not ok:
        warnings.warn(
            f"critical contact rate {b0:.5g} at S={s:.5g} is not bracketed by "
            f"beta_lockdown={params.beta_lockdown} and beta_freedom={params.beta_freedom}; "
            "the switching law cannot hold the target",
            RuntimeWarning,
            stacklevel=2,
        )
    return ok
