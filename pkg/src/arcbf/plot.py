"""Self-contained SVG plots of traces.

One stacked panel per channel, time on the abscissa.  Attack-active intervals
are shaded and the safety limit (``h = 0`` or ``r = r_max``) is drawn as a
horizontal rule.  Long traces are thinned with min/max binning so spikes
survive.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import numpy as np

from arcbf.io import atomic_write_text
from arcbf.sim import Trace

CHANNELS = ("x", "r", "h", "u", "d", "rho", "eta", "norm_x", "V")
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
DASHES = ("", "6,3", "2,2", "8,3,2,3")

WIDTH, PANEL_H, MARGIN_L, MARGIN_R, MARGIN_T, GAP = 720, 160, 70, 20, 30, 36
MAX_POINTS = 1500


def channel_series(trace: Trace, channel: str) -> np.ndarray:
    """Values of ``channel`` as a 2-D array (samples x components)."""
    if channel == "x":
        return trace.x
    if channel == "r":
        if trace.n < 2:
            raise ValueError("channel 'r' needs the robot state")
        return trace.x[:, 1:2]
    if channel == "norm_x":
        return np.linalg.norm(trace.x, axis=1)[:, None]
    if channel in ("u", "d"):
        return getattr(trace, channel)
    if channel in ("h", "rho", "eta", "V"):
        return np.asarray(getattr(trace, channel), dtype=float)[:, None]
    raise ValueError(f"unknown channel {channel!r}; expected one of {CHANNELS}")


def _thin(t: np.ndarray, y: np.ndarray, max_points: int = MAX_POINTS):
    if t.size <= max_points:
        return t, y
    nb = max_points // 2
    edges = np.linspace(0, t.size, nb + 1).astype(int)
    keep = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        seg = y[a:b]
        if np.all(np.isnan(seg)):
            keep.append(a)
            continue
        i, j = a + int(np.nanargmin(seg)), a + int(np.nanargmax(seg))
        keep.extend(sorted({i, j}))
    keep = np.array(keep)
    return t[keep], y[keep]


def _nice_ticks(lo: float, hi: float, n: int = 4) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step) + 1)]


def emit_plot(
    traces: list[Trace],
    channels: list[str],
    path=None,
    labels: list[str] | None = None,
    title: str = "",
    safety_limits: dict | None = None,
) -> str:
    """Render ``traces`` into one SVG document (returned, and written if ``path``).

    ``safety_limits`` maps channel names to the horizontal rule to draw
    (default: ``h -> 0``).
    """
    if not traces:
        raise ValueError("need at least one trace")
    if not channels:
        raise ValueError("need at least one channel")
    for c in channels:
        if c not in CHANNELS:
            raise ValueError(f"unknown channel {c!r}; expected one of {CHANNELS}")
    labels = list(labels) if labels is not None else [tr.controller or f"trace {i}" for i, tr in enumerate(traces)]
    if len(labels) != len(traces):
        raise ValueError("labels must match traces")
    limits = {"h": 0.0}
    limits.update(safety_limits or {})

    height = MARGIN_T + len(channels) * (PANEL_H + GAP) + (24 if len(traces) > 1 else 0)
    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(WIDTH),
        "height": str(height),
        "viewBox": f"0 0 {WIDTH} {height}",
        "font-family": "sans-serif",
        "font-size": "11",
    })
    ET.SubElement(svg, "rect", {"width": str(WIDTH), "height": str(height), "fill": "#ffffff"})
    if title:
        t_el = ET.SubElement(svg, "text", {"x": str(WIDTH / 2), "y": "18", "text-anchor": "middle", "font-size": "13"})
        t_el.text = title

    t0 = min(float(tr.t[0]) for tr in traces)
    t1 = max(float(tr.t[-1]) for tr in traces)
    if t1 <= t0:
        t1 = t0 + 1.0
    pw = WIDTH - MARGIN_L - MARGIN_R
    intervals = sorted({iv for tr in traces for iv in tr.attack_intervals})

    for p, ch in enumerate(channels):
        top = MARGIN_T + p * (PANEL_H + GAP)
        series = [channel_series(tr, ch) for tr in traces]
        vals = np.concatenate([s.ravel() for s in series])
        vals = vals[np.isfinite(vals)]
        lim = limits.get(ch)
        if lim is not None:
            vals = np.append(vals, lim)
        lo, hi = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
        if hi - lo < 1e-12:
            lo, hi = lo - 1.0, hi + 1.0
        pad = 0.05 * (hi - lo)
        lo, hi = lo - pad, hi + pad

        def sx(t):
            return MARGIN_L + (t - t0) / (t1 - t0) * pw

        def sy(v):
            return top + (hi - v) / (hi - lo) * PANEL_H

        g = ET.SubElement(svg, "g", {"class": "panel", "data-channel": ch})
        for a, b in intervals:
            a, b = max(a, t0), min(b, t1)
            if b > a:
                ET.SubElement(g, "rect", {
                    "class": "attack",
                    "x": f"{sx(a):.2f}", "y": f"{top:.2f}",
                    "width": f"{sx(b) - sx(a):.2f}", "height": str(PANEL_H),
                    "fill": "#f4cccc", "fill-opacity": "0.6",
                })
        ET.SubElement(g, "rect", {
            "x": str(MARGIN_L), "y": f"{top:.2f}", "width": str(pw), "height": str(PANEL_H),
            "fill": "none", "stroke": "#444444",
        })
        for tick in _nice_ticks(lo, hi):
            y = sy(tick)
            ET.SubElement(g, "line", {"x1": str(MARGIN_L - 4), "x2": str(MARGIN_L), "y1": f"{y:.2f}", "y2": f"{y:.2f}",
                                      "stroke": "#444444"})
            lab = ET.SubElement(g, "text", {"x": str(MARGIN_L - 6), "y": f"{y + 4:.2f}", "text-anchor": "end"})
            lab.text = f"{tick:.3g}"
        for tick in _nice_ticks(t0, t1, 6):
            x = sx(tick)
            lab = ET.SubElement(g, "text", {"x": f"{x:.2f}", "y": f"{top + PANEL_H + 14:.2f}", "text-anchor": "middle"})
            lab.text = f"{tick:g}"
        name = ET.SubElement(g, "text", {
            "x": "14", "y": f"{top + PANEL_H / 2:.2f}",
            "transform": f"rotate(-90 14 {top + PANEL_H / 2:.2f})", "text-anchor": "middle",
        })
        name.text = ch
        if lim is not None:
            ET.SubElement(g, "line", {
                "class": "safety-limit",
                "x1": str(MARGIN_L), "x2": str(MARGIN_L + pw),
                "y1": f"{sy(lim):.2f}", "y2": f"{sy(lim):.2f}",
                "stroke": "#000000", "stroke-dasharray": "4,3",
            })
        for i, (tr, s) in enumerate(zip(traces, series)):
            for j in range(s.shape[1]):
                tt, yy = _thin(np.asarray(tr.t, dtype=float), s[:, j])
                pts, runs = [], []
                for a, b in zip(tt, yy):
                    if math.isfinite(b):
                        pts.append(f"{sx(a):.2f},{sy(min(max(b, lo), hi)):.2f}")
                    elif pts:
                        runs.append(pts)
                        pts = []
                if pts:
                    runs.append(pts)
                for run in runs:
                    attrs = {
                        "class": "series",
                        "data-trace": str(i),
                        "points": " ".join(run),
                        "fill": "none",
                        "stroke": COLORS[i % len(COLORS)],
                        "stroke-width": "1.3",
                    }
                    dash = DASHES[(i + j) % len(DASHES)]
                    if dash:
                        attrs["stroke-dasharray"] = dash
                    ET.SubElement(g, "polyline", attrs)

    axis = ET.SubElement(svg, "text", {
        "x": str(MARGIN_L + pw / 2), "y": str(MARGIN_T + len(channels) * (PANEL_H + GAP) - 6), "text-anchor": "middle",
    })
    axis.text = "t [s]"
    if len(traces) > 1:
        leg = ET.SubElement(svg, "g", {"class": "legend"})
        y = height - 10
        for i, lab in enumerate(labels):
            x = MARGIN_L + i * 160
            attrs = {"x1": str(x), "x2": str(x + 24), "y1": str(y - 4), "y2": str(y - 4),
                     "stroke": COLORS[i % len(COLORS)], "stroke-width": "2"}
            if DASHES[i % len(DASHES)]:
                attrs["stroke-dasharray"] = DASHES[i % len(DASHES)]
            ET.SubElement(leg, "line", attrs)
            txt = ET.SubElement(leg, "text", {"x": str(x + 30), "y": str(y)})
            txt.text = lab

    doc = '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"
    if path is not None:
        atomic_write_text(path, doc)
    return doc
