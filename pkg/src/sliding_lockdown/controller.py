"""Sliding-surface gains, residuals and the hysteresis switching law.

The residual driving the actuator is

    r = lam * (I - I0) + I_dot + mu * I_ddot

Under freedom a lockdown starts when ``r > phi``; under lockdown freedom
returns when ``r < -phi``; inside the dead band the regime is held.

For cross-checks the module also builds the reduced linear system written
in deviations from the equilibrium (``x_dot = F x + g u``) together with
the surface row ``K`` and the closed-loop matrix ``P = F + g K F`` obtained
with the equivalent input ``u_eq = K F x``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .errors import ConfigError, DomainError, StabilityError
from .models import ModelKind, ModelParams, equilibrium_state, index

__all__ = [
    "Regime",
    "ControllerConfig",
    "ControllerState",
    "SurfaceGains",
    "regime_beta",
    "gains_from_lambda",
    "gains_from_deltas",
    "deltas_from_gains",
    "deltas_from_lambda_mu",
    "lambda_mu_from_deltas",
    "surface_gains",
    "surface_residual",
    "surface_residual_statespace",
    "sliding_variable",
    "switch_decision",
    "reduced_system",
    "equivalent_input",
]


class Regime(IntEnum):
    FREEDOM = 0
    LOCKDOWN = 1

    @property
    def code(self) -> str:
        return "L" if self is Regime.LOCKDOWN else "F"

    @classmethod
    def from_code(cls, code: str) -> "Regime":
        return {"F": cls.FREEDOM, "L": cls.LOCKDOWN}[code.strip().upper()]


def regime_beta(regime: Regime, params: ModelParams) -> float:
    return params.beta_lockdown if regime is Regime.LOCKDOWN else params.beta_freedom


@dataclass(frozen=True)
class ControllerConfig:
    """Design parameters of the switching law.

    ``lam`` sets the decay rate on the sliding surface, ``phi`` is the
    residual dead band, ``mu`` weights the second derivative of I (SEAIR
    only) and ``i_target`` is the infected fraction to hold.
    """

    lam: float
    phi: float
    i_target: float
    mu: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"must be positive, got {self.lam}", "controller.lambda")
        if not self.phi >= 0:
            raise ConfigError(f"must be nonnegative, got {self.phi}", "controller.phi")
        if not self.mu >= 0:
            raise ConfigError(f"must be nonnegative, got {self.mu}", "controller.mu")
        if not self.i_target > 0:
            raise ConfigError(f"must be positive, got {self.i_target}", "controller.i_target")

    def validate(self, kind: ModelKind) -> "ControllerConfig":
        if ModelKind.parse(kind) is not ModelKind.SEAIR and self.mu != 0:
            raise ConfigError(f"must be 0 for {ModelKind.parse(kind).value}", "controller.mu")
        return self


@dataclass(frozen=True)
class ControllerState:
    regime: Regime = Regime.FREEDOM
    last_switch_time: float | None = None
    switch_count: int = 0


@dataclass(frozen=True)
class SurfaceGains:
    """Coefficients of ``K = (-h, -1)`` or ``K = (-h, -k, -1)`` (SEAIR)."""

    h: float
    k: float | None = None
    delta1: float | None = None
    delta0: float | None = None


def gains_from_lambda(kind: ModelKind, lam: float, params: ModelParams) -> SurfaceGains:
    """Surface gain ``h`` placing the closed-loop eigenvalue at ``-lam``."""
    kind = ModelKind.parse(kind)
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if kind is ModelKind.SEIR:
        return SurfaceGains(h=(lam - (params.gamma + params.epsilon)) / params.epsilon)
    if kind is ModelKind.SAIR:
        return SurfaceGains(h=(lam - params.gamma) / params.epsilon1)
    raise DomainError("SEAIR surfaces have two gains; use gains_from_deltas")


def _seair_offsets(params: ModelParams) -> tuple[float, float]:
    g, e1, e2 = params.gamma, params.epsilon1, params.epsilon2
    return g + e1 + e2, g * (e1 + e2)


def gains_from_deltas(delta1: float, delta0: float, params: ModelParams) -> SurfaceGains:
    """SEAIR gains (h, k) giving closed-loop polynomial ``s (s^2 + delta1 s + delta0)``."""
    if not (delta1 > 0 and delta0 > 0):
        raise StabilityError(f"delta1 and delta0 must be positive, got {delta1}, {delta0}")
    c1, c0 = _seair_offsets(params)
    g, e, e1 = params.gamma, params.epsilon, params.epsilon1
    k = (delta1 - c1) / e
    h = (delta0 - c0 - g * (delta1 - c1)) / (e * e1)
    return SurfaceGains(h=h, k=k, delta1=delta1, delta0=delta0)


def deltas_from_gains(h: float, k: float, params: ModelParams) -> tuple[float, float]:
    """Inverse of :func:`gains_from_deltas`."""
    c1, c0 = _seair_offsets(params)
    g, e, e1 = params.gamma, params.epsilon, params.epsilon1
    return c1 + e * k, c0 + g * e * k + e1 * e * h


def deltas_from_lambda_mu(lam: float, mu: float, f: float = 1.0) -> tuple[float, float]:
    """(delta1, delta0) whose surface has the same sign as ``lam*(I-I0) + I_dot + mu*I_ddot``."""
    if not (lam > 0 and mu > 0 and f > 0):
        raise StabilityError(f"lambda, mu and f must be positive, got {lam}, {mu}, {f}")
    delta1 = 1.0 / (f * mu)
    return delta1, lam * delta1


def lambda_mu_from_deltas(delta1: float, delta0: float, f: float = 1.0) -> tuple[float, float]:
    return delta0 / delta1, 1.0 / (f * delta1)


def surface_gains(kind: ModelKind, config: ControllerConfig, params: ModelParams) -> SurfaceGains | None:
    """Gains matching ``config``; ``None`` for SEAIR with ``mu = 0`` (no finite gains)."""
    kind = ModelKind.parse(kind)
    if kind is not ModelKind.SEAIR:
        return gains_from_lambda(kind, config.lam, params)
    if config.mu == 0:
        return None
    return gains_from_deltas(*deltas_from_lambda_mu(config.lam, config.mu), params)


def surface_residual(config: ControllerConfig, i: float, i_dot: float, i_ddot: float | None = None) -> float:
    r = config.lam * (i - config.i_target) + i_dot
    if config.mu:
        if i_ddot is None:
            raise DomainError("mu > 0 needs the second derivative of I")
        r += config.mu * i_ddot
    return r


def surface_residual_statespace(kind: ModelKind, gains: SurfaceGains | None, config: ControllerConfig,
                                state, params: ModelParams) -> float:
    """Residual written in the state variables instead of derivatives of I.

    Equals :func:`surface_residual` evaluated with the model's exact
    derivatives. The decay rate is recovered from ``gains`` so that the two
    routes share only the model parameters.
    """
    kind = ModelKind.parse(kind)
    x = np.asarray(state, dtype=float)
    g, i0 = params.gamma, config.i_target
    i = x[index(kind, "I")]
    if kind is ModelKind.SEIR:
        lam = g + params.epsilon * (1.0 + gains.h)
        return params.epsilon * x[index(kind, "E")] + (lam - g) * i - lam * i0
    a = x[index(kind, "A")]
    if kind is ModelKind.SAIR:
        lam = g + params.epsilon1 * gains.h
        return params.epsilon1 * a + (lam - g) * i - lam * i0
    if gains is None:
        lam = config.lam
        return params.epsilon1 * a + (lam - g) * i - lam * i0
    e1, e = params.epsilon1, params.epsilon
    d1, d0 = deltas_from_gains(gains.h, gains.k, params)
    c1, _ = _seair_offsets(params)
    form = (d0 - g * d1 + g * g) * i + e1 * (d1 - c1) * a + e1 * e * x[index(kind, "E")] - d0 * i0
    return form / d1


def _deviation(kind: ModelKind, state, params: ModelParams, i_target: float) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    eq = equilibrium_state(kind, params, i_target)
    i = x[index(kind, "I")]
    if kind is ModelKind.SEIR:
        w = x[index(kind, "E")] + i
        return np.array([i - i_target, w - (eq["E"] + i_target)])
    if kind is ModelKind.SAIR:
        return np.array([i - i_target, x[index(kind, "A")] - eq["A"]])
    return np.array([i - i_target, x[index(kind, "A")] - eq["A"], x[index(kind, "E")] - eq["E"]])


def sliding_variable(kind: ModelKind, gains: SurfaceGains, params: ModelParams, state, i_target: float) -> float:
    """``K x`` with ``x`` the deviation of (I, W) / (I, A) / (I, A, E) from equilibrium."""
    kind = ModelKind.parse(kind)
    dx = _deviation(kind, state, params, i_target)
    return float(_k_row(kind, gains) @ dx)


def _k_row(kind: ModelKind, gains: SurfaceGains) -> np.ndarray:
    if kind is ModelKind.SEAIR:
        return np.array([-gains.h, -gains.k, -1.0])
    return np.array([-gains.h, -1.0])


def reduced_system(kind: ModelKind, params: ModelParams, gains: SurfaceGains):
    """Return ``(F, g, K, P)`` of the deviation dynamics."""
    kind = ModelKind.parse(kind)
    gm = params.gamma
    if kind is ModelKind.SEIR:
        e = params.epsilon
        F = np.array([[-(gm + e), e], [0.0, 0.0]])
    else:
        e1, e2 = params.epsilon1, params.epsilon2
        c = gm * (e1 + e2) / (gm + e1)
        if kind is ModelKind.SAIR:
            F = np.array([[-gm, e1], [c, -e1 * (e1 + e2) / (gm + e1)]])
        else:
            e = params.epsilon
            F = np.array([[-gm, e1, 0.0], [0.0, -(e1 + e2), e], [c, c, -e]])
    g = np.zeros(F.shape[0])
    g[-1] = 1.0
    K = _k_row(kind, gains)
    P = F + np.outer(g, K @ F)
    return F, g, K, P


def equivalent_input(kind: ModelKind, gains: SurfaceGains, params: ModelParams, reduced_state) -> float:
    """Continuous input ``K F x`` that keeps the deviation state on ``K x = 0``."""
    F, _, K, _ = reduced_system(kind, params, gains)
    return float(K @ F @ np.asarray(reduced_state, dtype=float))


def switch_decision(config: ControllerConfig, ctrl: ControllerState, r: float, t: float):
    """Apply the hysteresis law; returns ``(regime, new_state)``."""
    if ctrl.regime is Regime.FREEDOM and r > config.phi:
        target = Regime.LOCKDOWN
    elif ctrl.regime is Regime.LOCKDOWN and r < -config.phi:
        target = Regime.FREEDOM
    else:
        return ctrl.regime, ctrl
    return target, replace(ctrl, regime=target, last_switch_time=t, switch_count=ctrl.switch_count + 1)
