"""Closed-loop simulation with a zero-order-hold QP controller.

One QP is solved per step of length ``dt``; the command is held while the
augmented state ``(x, rho, eta)`` is advanced by classical RK4.  The attack is
sampled at every RK4 stage time, so the plant sees ``u + d(t)`` while the
controller never sees ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from arcbf.attacks import AttackProfile, eval_attack
from arcbf.certificates import (
    hocbf_terms,
    lie_derivatives,
    robot_clf,
    robot_hocbf,
    robot_nominal_control,
    scalar_cbf,
    scalar_clf,
)
from arcbf.dynamics import RobotParams, SystemModel, robot_system, scalar_system
from arcbf.qp import (
    INFEASIBLE,
    QpSolution,
    QpWeights,
    assemble_ar_hocbf_qp,
    assemble_ar_qp,
    solve_active_set,
)
from arcbf.resilience import (
    AdaptationParams,
    EnvelopeParams,
    GainState,
    RegularizerSchedule,
    cbf_domination_holds,
    clf_domination_holds,
    phi,
    psi_cbf,
    psi_clf,
)

Array = np.ndarray

AR = "ar_clf_cbf"
NOMINAL = "nominal_clf_cbf"
ISSF = "issf_cbf"
VARIANTS = (AR, NOMINAL, ISSF)

PLANTS = ("scalar", "robot")

STATUS_OK = "ok"
STATUS_DIVERGED = "diverged"
STATUS_INFEASIBLE = "cbf_infeasible"


@dataclass(frozen=True)
class ControllerKind:
    variant: str = AR
    issf_epsilon: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown controller variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == ISSF:
            if self.issf_epsilon is None or not self.issf_epsilon > 0:
                raise ValueError("issf_cbf needs issf_epsilon > 0")
        elif self.issf_epsilon is not None:
            raise ValueError("issf_epsilon is only meaningful for issf_cbf")


@dataclass(frozen=True)
class CertificateParams:
    """Rates and targets for the certificates of both plants.

    ``clf_rate`` / ``cbf_rate`` are ``C`` / ``lambda`` of the scalar plant;
    ``kp``, ``kd``, ``r_max`` and ``q_d`` belong to the robot.
    """

    clf_rate: float = 1.0
    cbf_rate: float = 1.0
    kp: float = 1.0
    kd: float = 1.73
    r_max: float = 2.0
    q_d: tuple = (0.0, 1.5)


@dataclass(frozen=True)
class SimConfig:
    plant: str = "scalar"
    controller: ControllerKind = ControllerKind()
    attack: AttackProfile = AttackProfile()
    adaptation: AdaptationParams = AdaptationParams()
    regularizer: RegularizerSchedule = RegularizerSchedule()
    weights: QpWeights = QpWeights()
    envelope: EnvelopeParams = EnvelopeParams()
    certificates: CertificateParams = CertificateParams()
    robot: RobotParams = RobotParams()
    x0: tuple = (0.5,)
    dt: float = 1e-3
    t_end: float = 25.0
    seed: int = 0
    divergence_threshold: float = 1e3

    def __post_init__(self):
        if self.plant not in PLANTS:
            raise ValueError(f"unknown plant {self.plant!r}; expected one of {PLANTS}")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        n, m = (1, 1) if self.plant == "scalar" else (4, 2)
        if len(self.x0) != n:
            raise ValueError(f"x0 must have length {n} for plant {self.plant!r}")
        if not all(math.isfinite(v) for v in self.x0):
            raise ValueError("x0 must be finite")
        if self.attack.m != m:
            raise ValueError(f"attack profile has m={self.attack.m}, plant needs m={m}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ValueError(f"t_end must be > 0, got {self.t_end!r}")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        if not self.divergence_threshold > 0:
            raise ValueError("divergence_threshold must be > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


class StepResult(NamedTuple):
    u: Array
    delta: float
    solution: QpSolution


class _StepInfo(NamedTuple):
    u: Array
    delta: float
    solution: QpSolution
    V: float
    h: float
    psi_v: float
    psi_h: float
    lg_v_norm: float
    lg_h_norm: float


class Plant:
    """Model plus certificates and nominal input for one configuration."""

    def __init__(self, cfg: SimConfig):
        cp = cfg.certificates
        if cfg.plant == "scalar":
            self.model = scalar_system()
            self.clf = scalar_clf(cp.clf_rate)
            self.cbf = scalar_cbf(cp.cbf_rate)
            self.hocbf = None
            u_nom = cfg.weights.nominal(1)
            self.u_nom = lambda x: u_nom
            self.target = np.zeros(1)
        else:
            self.model = robot_system(cfg.robot)
            self.clf = robot_clf(cfg.robot, cp.q_d)
            self.cbf = None
            self.hocbf = robot_hocbf(cfg.robot, cp.r_max, cp.kp, cp.kd)
            if len(cfg.weights.u_nom):
                u_fixed = cfg.weights.nominal(2)
                self.u_nom = lambda x: u_fixed
            else:
                self.u_nom = robot_nominal_control(cp.q_d)
            self.target = np.array([cp.q_d[0], cp.q_d[1], 0.0, 0.0])

    def lyapunov_gain(self, x) -> Array:
        return self.clf.gradient(x) @ self.model.input_matrix(x)

    def barrier_gain(self, x) -> Array:
        """``L_g h`` for a first-order barrier, ``L_g L_f h`` for the HOCBF."""
        if self.hocbf is not None:
            return np.asarray(self.hocbf.lglfh(x), dtype=float)
        return self.cbf.gradient(x) @ self.model.input_matrix(x)

    def gain_rate(self, params: AdaptationParams) -> Callable[[Array], tuple[float, float]]:
        q, p = params.q, params.p
        grad_v, input_matrix = self.clf.gradient, self.model.input_matrix
        if self.hocbf is not None:
            lglfh = self.hocbf.lglfh

            def rate(x):
                a = grad_v(x) @ input_matrix(x)
                b = lglfh(x)
                return q * math.sqrt(float(a @ a)), p * math.sqrt(float(b @ b))
        else:
            grad_h = self.cbf.gradient

            def rate(x):
                g = input_matrix(x)
                a = grad_v(x) @ g
                b = grad_h(x) @ g
                return q * math.sqrt(float(a @ a)), p * math.sqrt(float(b @ b))

        return rate

    def gain_rate_float(self, params: AdaptationParams, robot: RobotParams) -> Callable[[list], tuple[float, float]]:
        """Float version of :meth:`gain_rate` (``||L_g V||`` and ``||L_g h||`` in closed form)."""
        q, p = params.q, params.p
        if self.hocbf is None:
            # L_g V = 2 x^2, L_g h = -x
            return lambda x: (q * 2.0 * x[0] * x[0], p * abs(x[0]))
        m, inertia0 = robot.m_link, robot.M_link * robot.L**2 / 3.0
        eta_rate = p / m

        def rate(x):
            _, r, thd, rd = x
            # L_g V = (2 D11 thd / D11, 2 m rd / m)
            a0 = 2.0 * (m * r * r + inertia0) * thd / (m * r * r + inertia0)
            a1 = 2.0 * m * rd / m
            return q * math.sqrt(a0 * a0 + a1 * a1), eta_rate

        return rate


def _control(plant: Plant, cfg: SimConfig, x, t: float, gains: GainState, variant: str) -> _StepInfo:
    x = np.asarray(x, dtype=float)
    lie_v = lie_derivatives(plant.clf.gradient, plant.clf.value, plant.model, x)
    phi_t = phi(cfg.regularizer, t)
    cap = cfg.adaptation.psi_cap
    lg_v_norm = math.sqrt(float(lie_v.lg @ lie_v.lg))
    if plant.hocbf is not None:
        terms = hocbf_terms(plant.hocbf, x)
        barrier_vec, h = terms.lglfh, terms.h
    else:
        lie_h = lie_derivatives(plant.cbf.gradient, plant.cbf.value, plant.model, x)
        barrier_vec, h = lie_h.lg, lie_h.phi_value
    lg_h_norm = math.sqrt(float(barrier_vec @ barrier_vec))

    if variant == AR:
        psi_v = psi_clf(lie_v.lg, gains.rho, phi_t, cap)
        psi_h = psi_cbf(barrier_vec, gains.eta, phi_t, cap)
    elif variant == NOMINAL:
        psi_v = psi_h = 0.0
    else:
        psi_v = 0.0
        psi_h = lg_h_norm**2 / cfg.controller.issf_epsilon

    u_nom = plant.u_nom(x)
    if plant.hocbf is not None:
        qp = assemble_ar_hocbf_qp(lie_v, terms, psi_v, psi_h, plant.clf, plant.hocbf, cfg.weights, x, u_nom)
    else:
        qp = assemble_ar_qp(lie_v, lie_h, psi_v, psi_h, plant.clf, plant.cbf, cfg.weights, x, u_nom)
    sol = solve_active_set(qp)
    return _StepInfo(sol.u.copy(), sol.delta, sol, lie_v.phi_value, h, psi_v, psi_h, lg_v_norm, lg_h_norm)


def ar_control_step(x, t: float, gains: GainState, cfg: SimConfig, plant: Plant | None = None) -> StepResult:
    """Solve the compensated QP at ``(x, t)``; the attack is never consulted."""
    info = _control(plant or Plant(cfg), cfg, x, t, gains, AR)
    return StepResult(info.u, info.delta, info.solution)


def nominal_control_step(x, t: float, cfg: SimConfig, plant: Plant | None = None) -> StepResult:
    """Same QP without compensation terms."""
    info = _control(plant or Plant(cfg), cfg, x, t, GainState(), NOMINAL)
    return StepResult(info.u, info.delta, info.solution)


def issf_control_step(x, t: float, cfg: SimConfig, plant: Plant | None = None) -> StepResult:
    """Barrier row tightened by ``||L_g h||^2 / eps`` (ISSf-CBF baseline)."""
    if cfg.controller.issf_epsilon is None:
        raise ValueError("issf_control_step needs cfg.controller.issf_epsilon")
    info = _control(plant or Plant(cfg), cfg, x, t, GainState(), ISSF)
    return StepResult(info.u, info.delta, info.solution)


def rk4_step(
    model: SystemModel,
    u,
    attack: AttackProfile | None,
    x,
    t: float,
    dt: float,
    gains: GainState | None = None,
    gain_rate: Callable[[Array], tuple[float, float]] | None = None,
) -> tuple[Array, GainState | None]:
    """Advance ``(x, rho, eta)`` by one RK4 step with ``u`` held constant."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    adapt = gain_rate is not None and gains is not None

    ch = None if attack is None else attack.channel

    def f(tt, xx):
        ua = u
        if ch is not None:
            dv = attack.scalar(tt)
            if dv != 0.0:
                ua = u.copy()
                ua[ch] += dv
        dx = model.drift(xx) + model.input_matrix(xx) @ ua
        if adapt:
            rd, ed = gain_rate(xx)
            return dx, rd, ed
        return dx, 0.0, 0.0

    h2 = 0.5 * dt
    k1, r1, e1 = f(t, x)
    k2, r2, e2 = f(t + h2, x + h2 * k1)
    k3, r3, e3 = f(t + h2, x + h2 * k2)
    k4, r4, e4 = f(t + dt, x + dt * k3)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not adapt:
        return x_next, gains
    g_next = GainState(
        gains.rho + (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4),
        gains.eta + (dt / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4),
    )
    return x_next, g_next


def _rk4_float(rhs, rate, u: list, attack: AttackProfile, x: list, t: float, dt: float, rho: float, eta: float):
    """List-based twin of :func:`rk4_step` for the simulation loop."""
    ch = attack.channel
    n = len(x)
    R = range(n)

    def f(tt, xx):
        v = list(u)
        v[ch] += attack.scalar(tt)
        dx = rhs(xx, v)
        if rate is None:
            return dx, 0.0, 0.0
        rd, ed = rate(xx)
        return dx, rd, ed

    h2 = 0.5 * dt
    k1, r1, e1 = f(t, x)
    k2, r2, e2 = f(t + h2, [x[i] + h2 * k1[i] for i in R])
    k3, r3, e3 = f(t + h2, [x[i] + h2 * k2[i] for i in R])
    k4, r4, e4 = f(t + dt, [x[i] + dt * k3[i] for i in R])
    s = dt / 6.0
    x_next = [x[i] + s * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in R]
    return x_next, rho + s * (r1 + 2.0 * r2 + 2.0 * r3 + r4), eta + s * (e1 + 2.0 * e2 + 2.0 * e3 + e4)


@dataclass
class Trace:
    """Per-step record of a closed-loop run (row ``k`` is time ``k * dt``)."""

    t: Array
    x: Array
    u: Array
    d: Array
    u_act: Array
    rho: Array
    eta: Array
    V: Array
    h: Array
    psi_v: Array
    psi_h: Array
    delta: Array
    lg_v_norm: Array
    lg_h_norm: Array
    clf_dom: Array
    cbf_dom: Array
    qp_status: list = field(default_factory=list)
    active_set: list = field(default_factory=list)
    status: str = STATUS_OK
    x_final: Array | None = None
    t_final: float = 0.0
    dt: float = 0.0
    t_end: float = 0.0
    plant: str = ""
    controller: str = ""
    attack_intervals: list = field(default_factory=list)
    target: Array | None = None
    alpha: float = 1.0

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def __len__(self) -> int:
        return self.t.size

    @classmethod
    def from_arrays(cls, t, x=None, h=None, **kw) -> "Trace":
        """Build a trace from a few columns; everything else is zero-filled (tests, synthetic data)."""
        t = np.asarray(t, dtype=float)
        N = t.size
        x = np.zeros((N, 1)) if x is None else np.asarray(x, dtype=float).reshape(N, -1)
        h = np.zeros(N) if h is None else np.asarray(h, dtype=float)
        m = kw.pop("m", 1)
        cols = {
            name: np.zeros(N)
            for name in ("rho", "eta", "V", "psi_v", "psi_h", "delta", "lg_v_norm", "lg_h_norm")
        }
        cols.update({"clf_dom": np.zeros(N, bool), "cbf_dom": np.zeros(N, bool)})
        for name in ("u", "d", "u_act"):
            cols[name] = np.zeros((N, m))
        for k, v in kw.items():
            if k in cols:
                cols[k] = np.asarray(v)
        extra = {k: v for k, v in kw.items() if k not in cols}
        dt = float(t[1] - t[0]) if N > 1 else 0.0
        extra.setdefault("dt", dt)
        extra.setdefault("t_end", float(t[-1]) if N else 0.0)
        extra.setdefault("t_final", float(t[-1]) if N else 0.0)
        extra.setdefault("qp_status", ["optimal"] * N)
        extra.setdefault("active_set", [()] * N)
        return cls(t=t, x=x, h=h, **cols, **extra)


def run_closed_loop(cfg: SimConfig) -> Trace:
    """Simulate ``cfg`` to ``t_end`` (or until divergence / barrier infeasibility).

    A partial trace is always returned; ``trace.status`` is one of ``ok``,
    ``diverged`` or ``cbf_infeasible``.
    """
    plant = Plant(cfg)
    model = plant.model
    variant = cfg.controller.variant
    adapt = variant == AR
    rate = plant.gain_rate_float(cfg.adaptation, cfg.robot) if adapt else None
    fast = model.rhs_float is not None
    gains = cfg.adaptation.initial_gains() if adapt else GainState()
    env, sched = cfg.envelope, cfg.regularizer
    dt, N = cfg.dt, cfg.n_steps

    rec = {k: [] for k in (
        "t", "x", "u", "d", "u_act", "rho", "eta", "V", "h", "psi_v", "psi_h", "delta",
        "lg_v_norm", "lg_h_norm", "clf_dom", "cbf_dom", "qp_status", "active_set",
    )}
    x = np.array(cfg.x0, dtype=float)
    status = STATUS_OK
    t = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N + 1):
            t = k * dt
            info = _control(plant, cfg, x, t, gains, variant)
            d = eval_attack(cfg.attack, t)
            sol = info.solution
            rec["t"].append(t)
            rec["x"].append(x)
            rec["u"].append(info.u)
            rec["d"].append(d)
            rec["u_act"].append(info.u + d)
            rec["rho"].append(gains.rho)
            rec["eta"].append(gains.eta)
            rec["V"].append(info.V)
            rec["h"].append(info.h)
            rec["psi_v"].append(info.psi_v)
            rec["psi_h"].append(info.psi_h)
            rec["delta"].append(info.delta)
            rec["lg_v_norm"].append(info.lg_v_norm)
            rec["lg_h_norm"].append(info.lg_h_norm)
            rec["clf_dom"].append(clf_domination_holds(info.lg_v_norm, gains.rho, t, env, sched))
            rec["cbf_dom"].append(cbf_domination_holds(info.lg_h_norm, gains.eta, t, env, sched))
            rec["qp_status"].append(sol.status)
            rec["active_set"].append(tuple(sol.active_set))
            if sol.status == INFEASIBLE:
                status = STATUS_INFEASIBLE
                break
            if k == N:
                break
            if fast:
                xl, rho, eta = _rk4_float(
                    model.rhs_float, rate, info.u.tolist(), cfg.attack, x.tolist(), t, dt, gains.rho, gains.eta
                )
                x_next = np.array(xl)
                gains = GainState(rho, eta) if adapt else gains
            else:
                x_next, gains = rk4_step(model, info.u, cfg.attack, x, t, dt, gains, plant.gain_rate(cfg.adaptation) if adapt else None)
            if not np.all(np.isfinite(x_next)) or np.linalg.norm(x_next) > cfg.divergence_threshold:
                x = x_next
                t = (k + 1) * dt
                status = STATUS_DIVERGED
                break
            x = x_next

    return Trace(
        t=np.array(rec["t"]),
        x=np.array(rec["x"]),
        u=np.array(rec["u"]),
        d=np.array(rec["d"]),
        u_act=np.array(rec["u_act"]),
        rho=np.array(rec["rho"]),
        eta=np.array(rec["eta"]),
        V=np.array(rec["V"]),
        h=np.array(rec["h"]),
        psi_v=np.array(rec["psi_v"]),
        psi_h=np.array(rec["psi_h"]),
        delta=np.array(rec["delta"]),
        lg_v_norm=np.array(rec["lg_v_norm"]),
        lg_h_norm=np.array(rec["lg_h_norm"]),
        clf_dom=np.array(rec["clf_dom"], dtype=bool),
        cbf_dom=np.array(rec["cbf_dom"], dtype=bool),
        qp_status=rec["qp_status"],
        active_set=rec["active_set"],
        status=status,
        x_final=np.array(x),
        t_final=t,
        dt=dt,
        t_end=cfg.t_end,
        plant=cfg.plant,
        controller=variant,
        attack_intervals=cfg.attack.active_intervals(),
        target=plant.target,
        alpha=cfg.regularizer.alpha,
    )
