"""Control-affine plant models.

Every plant is written as ``xdot = f(x) + g(x) u``.  The attack enters through
the same input matrix (the actuator receives ``u + d``), so the simulator only
needs ``f`` and ``g``.

Robot state layout is ``x = (theta, r, theta_dot, r_dot)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray


class SingularMassMatrixError(ValueError):
    """Raised when a diagonal entry of the robot mass matrix is (numerically) zero."""


@dataclass(frozen=True)
class SystemModel:
    """Control-affine plant ``xdot = drift(x) + input_matrix(x) @ u``."""

    n: int
    m: int
    drift: Callable[[Array], Array] = field(repr=False)
    input_matrix: Callable[[Array], Array] = field(repr=False)
    label: str = ""
    # optional pure-float rhs(x, v) -> list, same maths; used by the hot loop
    rhs_float: Callable[[list, list], list] | None = field(default=None, repr=False, compare=False)

    def rhs(self, x: Array, u: Array) -> Array:
        return self.drift(x) + self.input_matrix(x) @ u


def scalar_system() -> SystemModel:
    """Scalar plant with ``f(x) = x`` and ``g(x) = x``."""

    def drift(x):
        return np.array([x[0]])

    def input_matrix(x):
        return np.array([[x[0]]])

    def rhs_float(x, v):
        return [x[0] + x[0] * v[0]]

    return SystemModel(n=1, m=1, drift=drift, input_matrix=input_matrix, label="scalar", rhs_float=rhs_float)


@dataclass(frozen=True)
class RobotParams:
    """Physical constants of the revolute-prismatic robot (kg, kg, m)."""

    m_link: float = 1.0
    M_link: float = 1.0
    L: float = 3.0

    def __post_init__(self):
        for name in ("m_link", "M_link", "L"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"RobotParams.{name} must be finite and > 0, got {v!r}")


def robot_mass_matrix(q, params: RobotParams) -> Array:
    """``D(q) = diag(m r^2 + M L^2 / 3, m)`` for ``q = (theta, r)``."""
    r = float(q[1])
    return np.diag([params.m_link * r * r + params.M_link * params.L**2 / 3.0, params.m_link])


def robot_coriolis(q, qdot, params: RobotParams) -> Array:
    """Velocity-product vector ``C(q, qdot) = (2 m r rdot thetadot, -m r thetadot^2)``."""
    r = float(q[1])
    thd, rd = float(qdot[0]), float(qdot[1])
    m = params.m_link
    return np.array([2.0 * m * r * rd * thd, -m * r * thd * thd])


def robot_system(params: RobotParams | None = None) -> SystemModel:
    """First-order form of ``D(q) qddot + C(q, qdot) = u``.

    ``D`` is diagonal, so its inverse is taken entry-wise instead of through a
    linear solve.
    """
    params = params or RobotParams()
    m, inertia0 = params.m_link, params.M_link * params.L**2 / 3.0

    def _dinv(r):
        d11 = m * r * r + inertia0
        if d11 < 1e-12 or m < 1e-12:
            raise SingularMassMatrixError(f"mass matrix singular at r={r!r}")
        return 1.0 / d11, 1.0 / m

    def drift(x):
        _, r, thd, rd = x
        i11, i22 = _dinv(r)
        return np.array([
            thd,
            rd,
            -i11 * (2.0 * m * r * rd * thd),
            i22 * (m * r * thd * thd),
        ])

    def input_matrix(x):
        i11, i22 = _dinv(x[1])
        return np.array([[0.0, 0.0], [0.0, 0.0], [i11, 0.0], [0.0, i22]])

    def rhs_float(x, v):
        _, r, thd, rd = x
        i11, i22 = _dinv(r)
        return [thd, rd, i11 * (v[0] - 2.0 * m * r * rd * thd), i22 * (v[1] + m * r * thd * thd)]

    return SystemModel(n=4, m=2, drift=drift, input_matrix=input_matrix, label="robot", rhs_float=rhs_float)


def central_difference(fn: Callable[[Array], Array], x, step: float = 1e-5) -> Array:
    """Central-difference Jacobian of ``fn`` at ``x`` (rows: outputs, cols: inputs).

    Scalar-valued functions give a 1-row matrix.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        fp = np.atleast_1d(np.asarray(fn(x + e), dtype=float))
        fm = np.atleast_1d(np.asarray(fn(x - e), dtype=float))
        jac[:, j] = (fp - fm) / (2.0 * step)
    return jac


def finite_difference_jacobian(model: SystemModel, x, step: float = 1e-5) -> Array:
    """Central-difference Jacobian of ``model.drift`` (test oracle only)."""
    return central_difference(model.drift, x, step)
