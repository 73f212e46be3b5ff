"""Adaptive attack compensation.

The compensation term for a certificate with input gain ``a = L_g phi`` is

    Psi = ||a||^2 / (||a|| + varphi(t)) * exp(gain)

with a vanishing regulariser ``varphi(t) = exp(-alpha t^2)`` and a gain driven
by ``gain_dot = k ||a||``.  For vector ``a`` the outer product ``a a^T`` is
contracted to ``||a||^2`` so it can sit in a scalar QP row.

Gains grow without a forgetting term, so ``exp(gain)`` is evaluated in the log
domain and clipped at ``psi_cap``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegularizerSchedule:
    alpha: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")


@dataclass(frozen=True)
class GainState:
    """Adaptive gains ``rho`` (Lyapunov channel) and ``eta`` (barrier channel)."""

    rho: float = 0.0
    eta: float = 0.0


@dataclass(frozen=True)
class AdaptationParams:
    q: float = 3.0
    p: float = 3.0
    rho0: float = 0.0
    eta0: float = 0.0
    psi_cap: float = 1e9

    def __post_init__(self):
        if not (self.q > 0 and self.p > 0):
            raise ValueError("adaptation rates q and p must be > 0")
        if not (self.rho0 >= 0 and self.eta0 >= 0):
            raise ValueError("initial gains rho0 and eta0 must be >= 0")
        if not self.psi_cap > 0:
            raise ValueError("psi_cap must be > 0")

    def initial_gains(self) -> GainState:
        return GainState(self.rho0, self.eta0)


@dataclass(frozen=True)
class EnvelopeParams:
    """Attack growth envelope ``||d(t)|| <= gamma * exp(kappa t)`` (analysis only)."""

    gamma: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be > 0, got {self.gamma!r}")
        if not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be >= 0, got {self.kappa!r}")

    def bound(self, t: float) -> float:
        return self.gamma * math.exp(self.kappa * t)


def phi(sched: RegularizerSchedule, t: float) -> float:
    """``exp(-alpha t^2)``; underflows to 0.0 only for ``alpha t^2 > ~745``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return math.exp(-sched.alpha * t * t)


def regularized_envelope(sched: RegularizerSchedule, env: EnvelopeParams, t: float) -> float:
    """``varphi(t) * gamma * exp(kappa t)``, peaking at ``t = kappa / (2 alpha)``."""
    return env.gamma * math.exp(env.kappa * t - sched.alpha * t * t)


def _norm(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(math.sqrt(float(v @ v))) if v.ndim else abs(float(v))


def _compensation(lg, gain: float, phi_t: float, cap: float) -> float:
    a = _norm(lg)
    if a == 0.0:
        return 0.0
    if phi_t < 0:
        raise ValueError("phi_t must be >= 0")
    log_psi = 2.0 * math.log(a) - math.log(a + phi_t) + gain
    if log_psi >= math.log(cap):
        return float(cap)
    return math.exp(log_psi)


def psi_clf(lg_v, rho: float, phi_t: float, cap: float = 1e9) -> float:
    """Lyapunov-channel compensation ``||L_g V||^2 e^rho / (||L_g V|| + varphi)``."""
    return _compensation(lg_v, rho, phi_t, cap)


def psi_cbf(lg_h, eta: float, phi_t: float, cap: float = 1e9) -> float:
    """Barrier-channel compensation ``||L_g h||^2 e^eta / (||L_g h|| + varphi)``."""
    return _compensation(lg_h, eta, phi_t, cap)


def gain_rates(lg_v, lg_h, params: AdaptationParams) -> tuple[float, float]:
    """``(rho_dot, eta_dot) = (q ||L_g V||, p ||L_g h||)``."""
    return params.q * _norm(lg_v), params.p * _norm(lg_h)


def _domination(lg_norm: float, gain: float, t: float, env: EnvelopeParams, sched: RegularizerSchedule) -> bool:
    # ||a|| (e^g - gamma e^{kappa t}) >= varphi gamma e^{kappa t}
    #   <=>  g >= log gamma + kappa t + log(1 + varphi / ||a||)   (for ||a|| > 0)
    if not lg_norm > 0.0:
        return False
    log_ratio = -sched.alpha * t * t - math.log(lg_norm)
    excess = math.log1p(math.exp(log_ratio)) if log_ratio < 700 else log_ratio
    return gain >= math.log(env.gamma) + env.kappa * t + excess


def clf_domination_holds(
    lg_v_norm: float, rho: float, t: float, env: EnvelopeParams, sched: RegularizerSchedule
) -> bool:
    """Runtime monitor for ``||L_g V|| (e^rho - gamma e^{kappa t}) >= varphi(t) gamma e^{kappa t}``.

    Evaluated in the log domain without the ``psi_cap`` clip.  Diagnostics only;
    never feeds back into the controller.
    """
    return _domination(lg_v_norm, rho, t, env, sched)


def cbf_domination_holds(
    lg_h_norm: float, eta: float, t: float, env: EnvelopeParams, sched: RegularizerSchedule
) -> bool:
    """Barrier-channel counterpart of :func:`clf_domination_holds`."""
    return _domination(lg_h_norm, eta, t, env, sched)
