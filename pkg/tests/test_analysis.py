import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arcbf.analysis import (
    TOL_H,
    clf_decrease_counterexamples,
    domination_report,
    metrics_report,
    persistent_onset,
    safety_metrics,
    stability_metrics,
)
from arcbf.resilience import EnvelopeParams, RegularizerSchedule
from arcbf.sim import STATUS_DIVERGED, Trace


def grid(t0=0.0, t1=10.0, dt=1e-3):
    return t0 + dt * np.arange(int(round((t1 - t0) / dt)) + 1)


# --- safety -----------------------------------------------------------------------


def test_safe_trace():
    t = grid()
    s = safety_metrics(Trace.from_arrays(t, h=np.full(t.size, 0.3)))
    assert (s.excursion_depth, s.recovery_time, s.violated) == (0.0, 0.0, False)
    assert s.min_h == 0.3


def test_synthetic_excursion():
    t = grid()
    h = np.where((t >= 3.0 - 1e-12) & (t < 4.0 - 1e-12), -0.1, 0.2)
    s = safety_metrics(Trace.from_arrays(t, h=h))
    assert s.excursion_depth == pytest.approx(0.1)
    assert s.recovery_time == pytest.approx(4.0, abs=1e-12)
    assert s.violated


def test_unrecovered_trace_has_infinite_recovery_time():
    t = grid(0, 1)
    h = np.where(t > 0.5, -0.2, 0.1)
    s = safety_metrics(Trace.from_arrays(t, h=h))
    assert s.recovery_time == math.inf and s.violated


def test_tolerance_separates_noise():
    t = grid(0, 1)
    h = np.full(t.size, 0.5)
    h[10] = -0.5 * TOL_H
    s = safety_metrics(Trace.from_arrays(t, h=h))
    assert not s.violated and s.recovery_time == 0.0
    h[10] = -2 * TOL_H
    assert safety_metrics(Trace.from_arrays(t, h=h)).violated


def test_nan_counts_as_unsafe():
    t = grid(0, 1)
    h = np.full(t.size, 0.5)
    h[-1] = np.nan
    assert safety_metrics(Trace.from_arrays(t, h=h)).recovery_time == math.inf


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        safety_metrics(Trace.from_arrays(np.zeros(0)))


# --- stability ----------------------------------------------------------------------


def test_zero_trace():
    t = grid()
    st_ = stability_metrics(Trace.from_arrays(t, x=np.zeros(t.size)))
    assert st_.ultimate_bound == 0.0 and st_.settled and not st_.diverged


def test_exponential_decay_bound():
    t = grid()
    st_ = stability_metrics(Trace.from_arrays(t, x=np.exp(-t)))
    assert abs(st_.ultimate_bound - math.exp(-8)) <= math.exp(-8) * (1 - math.exp(-1e-3)) + 1e-15
    assert st_.max_norm == 1.0
    assert st_.ultimate_bound <= st_.max_norm


def test_diverged_trace():
    t = grid(0, 1)
    tr = Trace.from_arrays(t, x=np.exp(10 * t), status=STATUS_DIVERGED)
    assert stability_metrics(tr).diverged
    x = np.zeros(t.size)
    x[-1] = np.inf
    assert stability_metrics(Trace.from_arrays(t, x=x)).diverged


def test_norm_is_relative_to_target():
    t = grid(0, 1)
    x = np.tile([0.0, 1.5, 0.0, 0.0], (t.size, 1))
    tr = Trace.from_arrays(t, x=x, target=np.array([0.0, 1.5, 0.0, 0.0]))
    assert stability_metrics(tr).ultimate_bound == 0.0
    assert stability_metrics(tr, target=np.zeros(4)).ultimate_bound == 1.5


def test_window_validation():
    t = grid(0, 1)
    with pytest.raises(ValueError):
        stability_metrics(Trace.from_arrays(t), window=0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 5.0), st.floats(0.01, 1.0), st.floats(1.0, 6.0), st.floats(0.1, 2.0))
def test_time_translation(shift, depth, t_bad, width):
    dt = 0.01
    t = grid(0, 10, dt)
    h = np.where((t >= t_bad) & (t < t_bad + width), -depth, 0.4)
    x = np.exp(-t) + 0.01
    base = Trace.from_arrays(t, x=x, h=h)
    k = int(round(shift / dt))
    t2 = np.concatenate([t[0] - dt * np.arange(k, 0, -1), t]) + k * dt
    pad = np.zeros(k)
    moved = Trace.from_arrays(t2, x=np.concatenate([pad, x]), h=np.concatenate([pad, h]))
    a, b = safety_metrics(base), safety_metrics(moved)
    assert (a.min_h, a.excursion_depth, a.violated) == (b.min_h, b.excursion_depth, b.violated)
    if a.violated:
        assert b.recovery_time == pytest.approx(a.recovery_time + k * dt, abs=1e-9)
    # same absolute window at the end of both traces
    span_a, span_b = t[-1] - t[0], t2[-1] - t2[0]
    sa = stability_metrics(base, window=0.2)
    sb = stability_metrics(moved, window=0.2 * span_a / span_b)
    assert sa.ultimate_bound == sb.ultimate_bound and sa.max_norm == sb.max_norm


# --- domination ------------------------------------------------------------------------


def test_persistent_onset_cases():
    t = np.arange(6) * 0.5
    assert persistent_onset(t, [1, 1, 1, 1, 1, 1]) == 0.0
    assert persistent_onset(t, [0, 0, 0, 1, 1, 1]) == 1.5
    assert persistent_onset(t, [1, 1, 0, 1, 1, 1]) == 1.5
    assert persistent_onset(t, [1, 1, 1, 1, 1, 0]) == math.inf
    assert persistent_onset(t[:0], []) == math.inf


def _dom_trace(t, k_on, lg=1.0):
    # eta high enough from index k_on that the barrier monitor holds (gamma=1, kappa=0)
    eta = np.where(np.arange(t.size) >= k_on, 5.0, -5.0)
    return Trace.from_arrays(t, lg_v_norm=np.full(t.size, lg), lg_h_norm=np.full(t.size, lg), rho=eta, eta=eta)


def test_domination_report_onsets():
    t = grid(0, 2, 0.01)
    env = EnvelopeParams(1.0, 0.0)
    rep = domination_report(_dom_trace(t, 0), env, None, RegularizerSchedule(1.0))
    assert rep.clf_onset == 0.0 and rep.cbf_onset == 0.0 and rep.recovery_bound_check is None
    rep = domination_report(_dom_trace(t, 37), env, 1.0, RegularizerSchedule(1.0))
    assert rep.cbf_onset == pytest.approx(t[37]) and rep.clf_onset == pytest.approx(t[37])
    assert rep.recovery_bound_check  # never unsafe: T = 0


def test_recovery_bound_check_compares_recovery_time():
    t = grid(0, 5, 0.01)
    k_on = 100  # onset at t = 1
    base = _dom_trace(t, k_on)
    lam = 1.0
    edge = 1.0 + math.log(2) / lam
    for t_bad, expect in ((edge - 0.05, True), (edge + 0.05, False)):
        h = np.where(t < t_bad, -0.1, 0.1)
        tr = Trace.from_arrays(t, h=h, lg_h_norm=base.lg_h_norm, lg_v_norm=base.lg_v_norm, rho=base.rho,
                               eta=base.eta)
        rep = domination_report(tr, EnvelopeParams(1.0, 0.0), lam, RegularizerSchedule(1.0))
        assert rep.recovery_bound_check is expect
    with pytest.raises(ValueError):
        domination_report(base, EnvelopeParams(), 0.0)


def test_unrecovered_run_fails_the_bound():
    t = grid(0, 2, 0.01)
    base = _dom_trace(t, 0)
    tr = Trace.from_arrays(t, h=np.full(t.size, -1.0), lg_h_norm=base.lg_h_norm, eta=base.eta)
    assert domination_report(tr, EnvelopeParams(), 1.0, RegularizerSchedule(1.0)).recovery_bound_check is False


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.1, 3.0), st.floats(-1.0, 1.0), st.floats(0.0, 3.0))
def test_comparison_lemma_on_exact_solution(l, lam, h0, t_on):
    # h' = -lam (h - l) solved exactly satisfies h >= l (1 - 2 e^{-lam (t - t_on)}) when h(t_on) >= -l
    h0 = max(h0, -l)
    t = t_on + grid(0, 5, 0.01)
    h = l + (h0 - l) * np.exp(-lam * (t - t_on))
    assert np.all(h >= l * (1 - 2 * np.exp(-lam * (t - t_on))) - 1e-12)


def test_clf_counterexample_counter():
    t = grid(0, 0.01, 1e-3)
    V = np.exp(-t)
    flags = np.ones(t.size, bool)
    tr = Trace.from_arrays(t, V=V, clf_dom=flags)
    n, bad = clf_decrease_counterexamples(tr, 1.0)
    assert n == t.size - 1 and bad.size == 0
    V2 = V.copy()
    V2[5] = V2[4] * 1.01
    n, bad = clf_decrease_counterexamples(Trace.from_arrays(t, V=V2, clf_dom=flags), 1.0)
    assert list(bad) == [4]
    # steps that use slack do not qualify
    n, bad = clf_decrease_counterexamples(Trace.from_arrays(t, V=V2, clf_dom=flags, delta=np.full(t.size, 0.1)), 1.0)
    assert n == 0 and bad.size == 0


def test_metrics_report_is_flat():
    t = grid(0, 1)
    tr = Trace.from_arrays(t, x=np.exp(-t), h=np.full(t.size, 0.2), plant="scalar", controller="ar_clf_cbf")
    rep = metrics_report(tr, EnvelopeParams(), 1.0)
    for key in ("safety.min_h", "safety.recovery_time", "stability.ultimate_bound", "domination.cbf_onset",
                "domination.recovery_bound_check", "max_rho", "max_eta", "status", "steps"):
        assert key in rep
    assert all(not isinstance(v, dict) for v in rep.values())
    assert "robot.max_r" not in rep
