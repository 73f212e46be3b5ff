"""Trace metrics: excursion depth, recovery time, ultimate bound, domination onset.

These are the finite-horizon stand-ins for ultimate safety and ultimate
boundedness.  All functions are pure and only read the trace.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from arcbf.resilience import EnvelopeParams, RegularizerSchedule, cbf_domination_holds, clf_domination_holds
from arcbf.sim import STATUS_DIVERGED, Trace

TOL_H = 1e-9


@dataclass(frozen=True)
class SafetyMetrics:
    min_h: float
    excursion_depth: float
    # last unsafe sample + dt; 0 if never unsafe; inf if still unsafe at the end
    recovery_time: float
    violated: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StabilityMetrics:
    ultimate_bound: float
    settled: bool
    max_norm: float
    diverged: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DominationReport:
    clf_onset: float  # inf when the flag is false at the last sample
    cbf_onset: float
    recovery_bound_check: bool | None  # None when no first-order rate applies

    def to_dict(self) -> dict:
        return asdict(self)


def _require(trace: Trace):
    if len(trace) == 0:
        raise ValueError("trace is empty")


def _dt(trace: Trace) -> float:
    if trace.dt > 0:
        return trace.dt
    return float(trace.t[1] - trace.t[0]) if len(trace) > 1 else 0.0


def safety_metrics(trace: Trace, tol_h: float = TOL_H) -> SafetyMetrics:
    _require(trace)
    h = np.asarray(trace.h, dtype=float)
    min_h = float(np.min(h))
    unsafe = np.flatnonzero(~(h >= -tol_h))  # NaN counts as unsafe
    if unsafe.size == 0:
        t_rec = 0.0
    elif unsafe[-1] == h.size - 1:
        t_rec = math.inf
    else:
        t_rec = float(trace.t[unsafe[-1]]) + _dt(trace)
    return SafetyMetrics(
        min_h=min_h,
        excursion_depth=max(0.0, -min_h),
        recovery_time=t_rec,
        violated=bool(unsafe.size > 0),
    )


def stability_metrics(trace: Trace, window: float = 0.2, threshold: float = 0.1, target=None) -> StabilityMetrics:
    """Norms are taken relative to ``target`` (default: the trace's own target, else 0).

    The ultimate bound is the largest norm over the last ``window`` fraction of
    the recorded time span.
    """
    _require(trace)
    if not 0 < window <= 1:
        raise ValueError("window must be in (0, 1]")
    x = np.asarray(trace.x, dtype=float)
    if target is None:
        target = trace.target if trace.target is not None else np.zeros(x.shape[1])
    err = np.linalg.norm(x - np.asarray(target, dtype=float), axis=1)
    t = trace.t
    t_cut = t[-1] - window * (t[-1] - t[0])
    tail = err[t >= t_cut - 1e-12 * max(1.0, abs(t_cut))]
    finite = bool(np.all(np.isfinite(err)))
    ult = float(np.max(tail)) if finite else math.inf
    max_norm = float(np.max(err)) if finite else math.inf
    diverged = trace.status == STATUS_DIVERGED or not finite
    return StabilityMetrics(
        ultimate_bound=ult,
        settled=bool(ult < threshold and not diverged),
        max_norm=max_norm,
        diverged=diverged,
    )


def persistent_onset(t, flags) -> float:
    """First time from which ``flags`` stays true to the end (``inf`` if the last flag is false)."""
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0 or not flags[-1]:
        return math.inf
    false_idx = np.flatnonzero(~flags)
    k = 0 if false_idx.size == 0 else int(false_idx[-1]) + 1
    return float(t[k])


def domination_flags(trace: Trace, env: EnvelopeParams, sched: RegularizerSchedule | None = None):
    """Recompute both monitor flags for every sample under ``env``."""
    sched = sched or RegularizerSchedule(trace.alpha)
    clf = np.array([
        clf_domination_holds(a, g, t, env, sched) for a, g, t in zip(trace.lg_v_norm, trace.rho, trace.t)
    ], dtype=bool)
    cbf = np.array([
        cbf_domination_holds(a, g, t, env, sched) for a, g, t in zip(trace.lg_h_norm, trace.eta, trace.t)
    ], dtype=bool)
    return clf, cbf


def domination_report(
    trace: Trace,
    env: EnvelopeParams,
    lam: float | None,
    sched: RegularizerSchedule | None = None,
    tol_h: float = TOL_H,
    slack_steps: int = 1,
) -> DominationReport:
    """Onsets of persistent domination and the recovery-time bound.

    The bound is ``T_rec <= cbf_onset + ln 2 / lam + slack_steps * dt``.  Pass
    ``lam=None`` when the barrier has no first-order rate (the check is then
    ``None``).  A run that never recovers fails the check.
    """
    _require(trace)
    clf, cbf = domination_flags(trace, env, sched)
    clf_on = persistent_onset(trace.t, clf)
    cbf_on = persistent_onset(trace.t, cbf)
    check = None
    if lam is not None:
        if not lam > 0:
            raise ValueError("lam must be > 0")
        t_rec = safety_metrics(trace, tol_h).recovery_time
        check = bool(t_rec <= cbf_on + math.log(2.0) / lam + slack_steps * _dt(trace))
    return DominationReport(clf_on, cbf_on, check)


def clf_decrease_counterexamples(trace: Trace, decay_rate: float, delta_tol: float = 1e-9, slack: float = 1e-6):
    """Steps where the CLF monitor holds with no slack but ``V`` fails to decay.

    Returns ``(qualifying_steps, counterexample_indices)``; a counterexample
    is ``V[k+1] > V[k] exp(-C dt) + slack``.
    """
    V = np.asarray(trace.V, dtype=float)
    if V.size < 2:
        return 0, np.zeros(0, dtype=int)
    qual = trace.clf_dom[:-1] & (np.asarray(trace.delta[:-1]) <= delta_tol)
    bad = qual & (V[1:] > V[:-1] * math.exp(-decay_rate * _dt(trace)) + slack)
    return int(qual.sum()), np.flatnonzero(bad)


def metrics_report(trace: Trace, env: EnvelopeParams, lam: float | None, sched=None) -> dict:
    """Flat key-value summary used for ``metrics.json``."""
    s = safety_metrics(trace)
    st = stability_metrics(trace)
    d = domination_report(trace, env, lam, sched)
    out = {
        "plant": trace.plant,
        "controller": trace.controller,
        "status": trace.status,
        "t_final": float(trace.t_final),
        "steps": len(trace),
    }
    out.update({f"safety.{k}": v for k, v in s.to_dict().items()})
    out.update({f"stability.{k}": v for k, v in st.to_dict().items()})
    out.update({f"domination.{k}": v for k, v in d.to_dict().items()})
    out["max_rho"] = float(np.max(trace.rho))
    out["max_eta"] = float(np.max(trace.eta))
    if trace.plant == "robot":
        r = np.asarray(trace.x[:, 1], dtype=float)
        out["robot.max_r"] = float(np.max(r))
    return out
