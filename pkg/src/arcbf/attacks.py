"""Piecewise false-data-injection signals on a single input channel.

Segments are half-open ``[t_start, t_end)``; time not covered by any segment
evaluates to zero.  Sinusoid arguments are in radians and ``sgn(0) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from arcbf.resilience import EnvelopeParams

# kind -> (parameter names, value(t, **params))
_KINDS: dict[str, tuple[tuple[str, ...], Callable[..., float]]] = {
    "zero": ((), lambda t: 0.0),
    "constant": (("value",), lambda t, value: value),
    "sinusoid": (
        ("offset", "amplitude", "omega", "phase"),
        lambda t, offset, amplitude, omega, phase: offset + amplitude * math.sin(omega * t + phase),
    ),
    "linear_ramp": (
        ("offset", "slope", "t_ref"),
        lambda t, offset, slope, t_ref: offset + slope * (t - t_ref),
    ),
    "quadratic": (
        ("offset", "coeff", "t_ref"),
        lambda t, offset, coeff, t_ref: offset + coeff * (t - t_ref) ** 2,
    ),
    "exponential": (
        ("offset", "scale", "rate", "t_ref"),
        lambda t, offset, scale, rate, t_ref: offset + scale * math.exp(rate * (t - t_ref)),
    ),
    "square_wave": (
        ("offset", "amplitude", "omega"),
        lambda t, offset, amplitude, omega: offset + amplitude * _sgn(math.sin(omega * t)),
    ),
}

SEGMENT_KINDS = tuple(_KINDS)


def _sgn(v: float) -> float:
    return (v > 0) - (v < 0)


@dataclass(frozen=True)
class AttackSegment:
    t_start: float
    t_end: float
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}; expected one of {SEGMENT_KINDS}")
        names = _KINDS[self.kind][0]
        missing = set(names) - set(self.params)
        extra = set(self.params) - set(names)
        if missing or extra:
            raise ValueError(
                f"{self.kind} segment needs params {names}; missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        if not self.t_start < self.t_end:
            raise ValueError(f"segment needs t_start < t_end, got [{self.t_start}, {self.t_end})")

    def contains(self, t: float) -> bool:
        return self.t_start <= t < self.t_end

    def value(self, t: float) -> float:
        return float(_KINDS[self.kind][1](t, **self.params))


@dataclass(frozen=True)
class AttackProfile:
    """Ordered, non-overlapping segments injected on input ``channel`` (0-based) of ``m`` inputs."""

    segments: tuple = ()
    channel: int = 0
    m: int = 1
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not 0 <= self.channel < self.m:
            raise ValueError(f"channel {self.channel} out of range for m={self.m}")
        for a, b in zip(self.segments, self.segments[1:]):
            if b.t_start < a.t_end:
                raise ValueError("attack segments must be ordered and non-overlapping")

    def scalar(self, t: float) -> float:
        for seg in self.segments:
            if seg.contains(t):
                return seg.value(t)
        return 0.0

    def active_intervals(self) -> list[tuple[float, float]]:
        """Intervals of segments that are not identically zero (for plot shading)."""
        return [(s.t_start, s.t_end) for s in self.segments if s.kind != "zero"]


def eval_attack(profile: AttackProfile, t: float) -> np.ndarray:
    """Attack vector ``d(t)`` of length ``profile.m``."""
    d = np.zeros(profile.m)
    d[profile.channel] = profile.scalar(t)
    return d


def _seg(t0, t1, kind, **params) -> AttackSegment:
    return AttackSegment(float(t0), float(t1), kind, {k: float(v) for k, v in params.items()})


def profile_d1() -> AttackProfile:
    """Multi-stage constant / sinusoid / linear / quadratic attack (scalar example).

    Coefficients are kept exactly as printed, including the jump at t = 12
    where ``2.2 + 0.8 (t - 15)`` starts at -0.2.
    """
    inf = math.inf
    return AttackProfile(
        (
            _seg(0, 5, "zero"),
            _seg(5, 8, "constant", value=3.0),
            _seg(8, 12, "sinusoid", offset=2.0, amplitude=2.0, omega=2.0, phase=0.0),
            _seg(12, 15, "linear_ramp", offset=2.2, slope=0.8, t_ref=15.0),
            _seg(15, 18, "quadratic", offset=2.6, coeff=0.35, t_ref=18.0),
            _seg(18, inf, "zero"),
        ),
        channel=0,
        m=1,
        name="d1",
    )


def profile_d2() -> AttackProfile:
    """Exponential surge followed by a switching phase (scalar example)."""
    inf = math.inf
    return AttackProfile(
        (
            _seg(0, 5, "zero"),
            _seg(5, 10, "exponential", offset=30.0, scale=0.4, rate=0.7, t_ref=5.0),
            _seg(10, 14, "square_wave", offset=10.0, amplitude=4.0, omega=3.0),
            _seg(14, inf, "zero"),
        ),
        channel=0,
        m=1,
        name="d2",
    )


def robot_attack_suite(t_on: float = 5.0, t_off: float = 20.0) -> list[AttackProfile]:
    """Two bounded and two unbounded attacks on the prismatic force ``T``.

    Magnitudes are sized so the sampled loop stays well conditioned; the shipped
    scenario files carry the same values and are the source of truth.
    """
    segs = [
        ("bounded_constant", _seg(t_on, t_off, "constant", value=0.8)),
        ("bounded_sinusoid", _seg(t_on, t_off, "sinusoid", offset=0.0, amplitude=0.8, omega=2.0, phase=0.0)),
        ("linear_ramp", _seg(t_on, t_off, "linear_ramp", offset=0.5, slope=0.5, t_ref=t_on)),
        ("quadratic", _seg(t_on, t_off, "quadratic", offset=0.5, coeff=0.05, t_ref=t_on)),
    ]
    return [AttackProfile((s,), channel=1, m=2, name=name) for name, s in segs]


def check_envelope(
    signal: AttackProfile | Callable[[float], float | np.ndarray],
    env: EnvelopeParams,
    t_grid: Iterable[float],
) -> tuple[bool, float]:
    """Check ``||d(t)|| <= gamma exp(kappa t)`` on a grid.

    Returns ``(holds, worst_margin)`` where the margin is the smallest value of
    ``gamma exp(kappa t) - ||d(t)||`` seen.  Non-finite samples count as violations.
    """
    fn = (lambda t: eval_attack(signal, t)) if isinstance(signal, AttackProfile) else signal
    worst = math.inf
    for t in t_grid:
        t = float(t)
        with np.errstate(over="ignore"):
            dv = np.atleast_1d(np.asarray(fn(t), dtype=float))
            mag = float(np.linalg.norm(dv)) if np.all(np.isfinite(dv)) else math.inf
        margin = env.bound(t) - mag
        worst = min(worst, margin)
    return bool(worst >= 0), worst


def segment_to_dict(seg: AttackSegment) -> dict:
    return {"t_start": seg.t_start, "t_end": seg.t_end, "kind": seg.kind, "params": dict(seg.params)}


def segment_from_dict(d: dict) -> AttackSegment:
    unknown = set(d) - {"t_start", "t_end", "kind", "params"}
    if unknown:
        raise ValueError(f"unknown segment keys {sorted(unknown)}")
    return AttackSegment(
        float(d["t_start"]),
        float(d["t_end"]),
        str(d["kind"]),
        {k: float(v) for k, v in (d.get("params") or {}).items()},
    )


def profile_to_dict(profile: AttackProfile) -> dict:
    return {
        "name": profile.name,
        "channel": profile.channel,
        "segments": [segment_to_dict(s) for s in profile.segments],
    }


def profile_from_dict(d: dict, m: int) -> AttackProfile:
    unknown = set(d) - {"name", "channel", "segments"}
    if unknown:
        raise ValueError(f"unknown attack keys {sorted(unknown)}")
    return AttackProfile(
        tuple(segment_from_dict(s) for s in d.get("segments") or ()),
        channel=int(d.get("channel", 0)),
        m=m,
        name=str(d.get("name", "")),
    )
