"""Lyapunov and barrier certificates for the two example plants.

The decay/barrier rates are the linear class-K specialisations ``C * V`` and
``lambda * h`` used throughout the AR-CLF / AR-CBF constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from arcbf.dynamics import RobotParams, SystemModel

Array = np.ndarray


def _zero_target(x) -> float:
    return 0.0


@dataclass(frozen=True)
class ClfSpec:
    """Control Lyapunov function with the right-hand side of its decrease condition.

    The QP row reads ``L_f V + L_g V u + Psi_V <= -decay_rate * V + decrease_target(x) + delta``.
    ``decay_rate`` may be zero when the target alone provides the decrease
    (the robot uses ``-qdot^T K_d qdot``).
    """

    value: Callable[[Array], float] = field(repr=False)
    gradient: Callable[[Array], Array] = field(repr=False)
    decay_rate: float = 1.0
    decrease_target: Callable[[Array], float] = field(default=_zero_target, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.decay_rate) and self.decay_rate >= 0):
            raise ValueError(f"decay_rate must be >= 0, got {self.decay_rate!r}")


@dataclass(frozen=True)
class CbfSpec:
    """Relative-degree-one barrier ``h`` with linear rate ``lambda``."""

    value: Callable[[Array], float] = field(repr=False)
    gradient: Callable[[Array], Array] = field(repr=False)
    rate: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.rate) and self.rate > 0):
            raise ValueError(f"rate must be > 0, got {self.rate!r}")


@dataclass(frozen=True)
class HocbfSpec:
    """Relative-degree-two barrier, enforced as ``L_f^2 h + L_g L_f h u >= -kp h - kd L_f h``."""

    value: Callable[[Array], float] = field(repr=False)
    lfh: Callable[[Array], float] = field(repr=False)
    lf2h: Callable[[Array], float] = field(repr=False)
    lglfh: Callable[[Array], Array] = field(repr=False)
    kp: float = 1.0
    kd: float = 1.73

    def __post_init__(self):
        if not (self.kp > 0 and self.kd > 0):
            raise ValueError("kp and kd must be > 0")


class LieData(NamedTuple):
    lf: float
    lg: Array
    phi_value: float


class HocbfTerms(NamedTuple):
    h: float
    lfh: float
    lf2h: float
    lglfh: Array


def lie_derivatives(
    spec_gradient: Callable[[Array], Array],
    spec_value: Callable[[Array], float],
    model: SystemModel,
    x,
) -> LieData:
    """``L_f phi = grad(phi) . f`` and ``L_g phi = grad(phi)^T g`` at ``x``."""
    x = np.asarray(x, dtype=float)
    grad = np.asarray(spec_gradient(x), dtype=float)
    lf = float(grad @ model.drift(x))
    lg = grad @ model.input_matrix(x)
    return LieData(lf, lg, float(spec_value(x)))


def hocbf_terms(spec: HocbfSpec, x) -> HocbfTerms:
    return HocbfTerms(
        float(spec.value(x)), float(spec.lfh(x)), float(spec.lf2h(x)), np.asarray(spec.lglfh(x), dtype=float)
    )


# --- scalar example -----------------------------------------------------------


def scalar_clf(decay_rate: float = 1.0) -> ClfSpec:
    """``V(x) = x^2``."""
    return ClfSpec(
        value=lambda x: float(x[0] * x[0]),
        gradient=lambda x: np.array([2.0 * x[0]]),
        decay_rate=decay_rate,
    )


def scalar_cbf(rate: float = 1.0) -> CbfSpec:
    """``h(x) = 1 - x``; safe set is ``x <= 1``."""
    return CbfSpec(
        value=lambda x: float(1.0 - x[0]),
        gradient=lambda x: np.array([-1.0]),
        rate=rate,
    )


# --- robot example ------------------------------------------------------------


def robot_clf(
    params: RobotParams | None = None,
    q_d=(0.0, 1.5),
    Kp=None,
    Kd=None,
) -> ClfSpec:
    """Energy CLF ``V = (q - q_d)^T Kp (q - q_d) + qdot^T D(q) qdot``.

    The gradient keeps the configuration dependence of ``D``: the ``r`` slot
    carries ``qdot^T (dD/dr) qdot = 2 m r thetadot^2``.  The decrease target is
    ``-qdot^T Kd qdot`` with no ``-C V`` term, so ``decay_rate`` is 0.
    """
    params = params or RobotParams()
    q_d = np.asarray(q_d, dtype=float)
    Kp = np.eye(2) if Kp is None else np.asarray(Kp, dtype=float)
    Kd = np.eye(2) if Kd is None else np.asarray(Kd, dtype=float)
    Ksym = Kp + Kp.T
    m, inertia0 = params.m_link, params.M_link * params.L**2 / 3.0

    def value(x):
        e = x[:2] - q_d
        _, r, thd, rd = x
        return float(e @ Kp @ e + (m * r * r + inertia0) * thd * thd + m * rd * rd)

    def gradient(x):
        e = x[:2] - q_d
        _, r, thd, rd = x
        gq = Ksym @ e
        return np.array([
            gq[0],
            gq[1] + 2.0 * m * r * thd * thd,
            2.0 * (m * r * r + inertia0) * thd,
            2.0 * m * rd,
        ])

    def target(x):
        qd = x[2:]
        return -float(qd @ Kd @ qd)

    return ClfSpec(value=value, gradient=gradient, decay_rate=0.0, decrease_target=target)


def robot_hocbf(
    params: RobotParams | None = None,
    r_max: float = 2.0,
    kp: float = 1.0,
    kd: float = 1.73,
) -> HocbfSpec:
    """Radial limit ``h = r_max - r`` (relative degree two in ``T``)."""
    params = params or RobotParams()
    inv_m = 1.0 / params.m_link

    return HocbfSpec(
        value=lambda x: float(r_max - x[1]),
        lfh=lambda x: float(-x[3]),
        # drift part of -rddot; rddot = r thetadot^2 + T / m
        lf2h=lambda x: float(-x[1] * x[2] * x[2]),
        lglfh=lambda x: np.array([0.0, -inv_m]),
        kp=kp,
        kd=kd,
    )


def robot_nominal_control(q_d=(0.0, 1.5), Kp=None, Kd=None) -> Callable[[Array], Array]:
    """PD law ``u_nom = -Kp (q - q_d) - Kd qdot``.

    With the energy CLF above this gives ``Vdot = -2 qdot^T Kd qdot`` in the
    attack-free case, so the nominal input already meets the CLF target.
    """
    q_d = np.asarray(q_d, dtype=float)
    Kp = np.eye(2) if Kp is None else np.asarray(Kp, dtype=float)
    Kd = np.eye(2) if Kd is None else np.asarray(Kd, dtype=float)

    def u_nom(x):
        return -Kp @ (x[:2] - q_d) - Kd @ x[2:]

    return u_nom
