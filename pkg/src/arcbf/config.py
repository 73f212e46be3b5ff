"""Experiment configuration documents (YAML).

A document maps one-to-one onto :class:`~arcbf.sim.SimConfig` plus a scenario
name, output settings and an optional comparison block::

    scenario: example1_d1_ar
    plant: scalar
    controller: {variant: ar_clf_cbf}
    attack:
      name: d1
      channel: 0
      segments:
        - {t_start: 0.0, t_end: 5.0, kind: constant, params: {value: 2.0}}
    adaptation: {q: 3.0, p: 3.0}
    x0: [0.5]
    dt: 0.001
    t_end: 25.0
    compare:
      controllers:
        - {variant: ar_clf_cbf}
        - {variant: nominal_clf_cbf}

Unknown keys are rejected and every error carries the offending key path and
source line.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, fields, replace

import yaml

from arcbf.attacks import AttackProfile, profile_from_dict, profile_to_dict
from arcbf.dynamics import RobotParams
from arcbf.qp import QpWeights
from arcbf.resilience import AdaptationParams, EnvelopeParams, RegularizerSchedule
from arcbf.sim import CertificateParams, ControllerKind, SimConfig


class ConfigError(ValueError):
    """Invalid configuration document; ``str()`` is ``source:line: key: message``."""

    def __init__(self, message: str, key: str = "", line: int | None = None, source: str = "<config>"):
        self.key, self.line, self.source, self.message = key, line, source, message
        loc = source if line is None else f"{source}:{line}"
        super().__init__(f"{loc}: {key}: {message}" if key else f"{loc}: {message}")


# section name -> dataclass; every field is a plain scalar, list or null
SECTIONS = {
    "controller": ControllerKind,
    "adaptation": AdaptationParams,
    "regularizer": RegularizerSchedule,
    "weights": QpWeights,
    "envelope": EnvelopeParams,
    "certificates": CertificateParams,
    "robot": RobotParams,
}
TOP_LEVEL = ("plant", "x0", "dt", "t_end", "seed", "divergence_threshold")
META = ("scenario", "output", "compare", "attack")
OUTPUT_KEYS = ("dir", "plot")

_FLOAT_RE = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$|^[-+]?(inf|nan)$", re.I)


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig
    scenario: str = ""
    output_dir: str | None = None
    plot: bool = False
    compare: tuple = ()  # ControllerKind entries; empty means a single run

    def controllers(self) -> tuple:
        return self.compare or (self.sim.controller,)


def _line_index(node, path=(), out=None) -> dict:
    """Map key paths (tuples) to 1-based source lines from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[p] = k.start_mark.line + 1
            _line_index(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (i,)
            out[p] = v.start_mark.line + 1
            _line_index(v, p, out)
    return out


def _numeric(value, key: str):
    # YAML 1.1 reads "1e9" as a string; accept any plain float spelling
    if isinstance(value, bool):
        raise TypeError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str) and _FLOAT_RE.match(value.strip()):
        return float(value)
    raise TypeError(f"expected a number, got {value!r}")


def _coerce(cls, name: str, value):
    """Turn a YAML value into the field type used by ``cls``."""
    if value is None:
        return None
    ftype = {f.name: f.type for f in fields(cls)}[name]
    if "bool" in str(ftype) and "float" not in str(ftype):
        if not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
        return value
    if name == "input_bounds":
        return tuple((_numeric(lo, name), _numeric(hi, name)) for lo, hi in value)
    if "tuple" in str(ftype):
        if not isinstance(value, (list, tuple)):
            raise TypeError(f"expected a list, got {value!r}")
        return tuple(_numeric(v, name) for v in value)
    if "float" in str(ftype):
        return _numeric(value, name)
    if "str" in str(ftype):
        return str(value)
    return value


def _build(cls, data, prefix: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", key=prefix)
    known = {f.name for f in fields(cls)}
    for k in data:
        if k not in known:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(known))})", key=f"{prefix}.{k}")
    kwargs = {}
    for k, v in data.items():
        try:
            kwargs[k] = _coerce(cls, k, v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key=f"{prefix}.{k}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), key=_blame(str(exc), prefix, known)) from None


def _blame(message: str, prefix: str, names) -> str:
    """Pick the field a validation message talks about (first name mentioned)."""
    best = None
    for n in names:
        m = re.search(rf"\b{re.escape(n)}\b", message)
        if m and (best is None or m.start() < best[0]):
            best = (m.start(), n)
    if best is None:
        return prefix
    return f"{prefix}.{best[1]}" if prefix else best[1]


def parse_config(data: dict, source: str = "<config>", lines: dict | None = None) -> ExperimentConfig:
    """Validate a loaded document; ``lines`` maps key paths to source lines."""
    lines = lines or {}
    try:
        return _parse(data)
    except ConfigError as exc:
        path = tuple(p for p in exc.key.split(".") if p)
        line = None
        while path and line is None:
            line = lines.get(path)
            path = path[:-1]
        raise ConfigError(exc.message, exc.key, line, source) from None


def _parse(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    allowed = set(TOP_LEVEL) | set(SECTIONS) | set(META)
    for k in data:
        if k not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", key=str(k))
    sections = {name: _build(cls, data.get(name), name) for name, cls in SECTIONS.items() if name in data}
    plant = data.get("plant", "scalar")
    m = 1 if plant == "scalar" else 2
    attack = AttackProfile(m=m)
    if data.get("attack") is not None:
        try:
            attack = profile_from_dict(data["attack"], m)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc), key="attack") from None
    top = {}
    sim_fields = {f.name: f for f in fields(SimConfig)}
    for k in TOP_LEVEL:
        if k not in data:
            continue
        v = data[k]
        try:
            if k == "plant":
                top[k] = str(v)
            elif k == "seed":
                if isinstance(v, bool) or not isinstance(v, int):
                    raise TypeError(f"expected an integer, got {v!r}")
                top[k] = v
            elif k == "x0":
                if not isinstance(v, (list, tuple)):
                    raise TypeError(f"expected a list, got {v!r}")
                top[k] = tuple(_numeric(e, k) for e in v)
            else:
                top[k] = _numeric(v, k)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key=k) from None
    if "x0" not in top and plant == "robot":
        top["x0"] = (0.3, 1.2, 0.0, 0.0)
    try:
        sim = SimConfig(attack=attack, **sections, **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), key=_blame(str(exc), "", list(sim_fields))) from None

    out = data.get("output") or {}
    if not isinstance(out, dict):
        raise ConfigError("expected a mapping", key="output")
    for k in out:
        if k not in OUTPUT_KEYS:
            raise ConfigError(f"unknown key (allowed: {', '.join(OUTPUT_KEYS)})", key=f"output.{k}")
    plot = out.get("plot", False)
    if not isinstance(plot, bool):
        raise ConfigError(f"expected true/false, got {plot!r}", key="output.plot")

    compare = ()
    if data.get("compare") is not None:
        block = data["compare"]
        if not isinstance(block, dict) or set(block) != {"controllers"}:
            raise ConfigError("compare block needs exactly one key: controllers", key="compare")
        ctrls = block["controllers"]
        if not isinstance(ctrls, list) or not ctrls:
            raise ConfigError("controllers must be a non-empty list", key="compare.controllers")
        compare = tuple(_build(ControllerKind, c, f"compare.controllers.{i}") for i, c in enumerate(ctrls))

    return ExperimentConfig(
        sim=sim,
        scenario=str(data.get("scenario", "")),
        output_dir=None if out.get("dir") is None else str(out["dir"]),
        plot=plot,
        compare=compare,
    )


def loads_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = None if mark is None else mark.line + 1
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", line=line, source=source) from None
    if data is None:
        data = {}
    return parse_config(data, source, _line_index(node) if node is not None else {})


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return loads_config(text, source=str(path))


# --- serialisation -------------------------------------------------------------


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(e) for e in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _section_dict(obj) -> dict:
    return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    sim = cfg.sim
    doc = {"scenario": cfg.scenario, "plant": sim.plant}
    for name in SECTIONS:
        doc[name] = _section_dict(getattr(sim, name))
    if doc["controller"]["issf_epsilon"] is None:
        del doc["controller"]["issf_epsilon"]
    doc["attack"] = profile_to_dict(sim.attack)
    for k in TOP_LEVEL[1:]:
        doc[k] = _plain(getattr(sim, k))
    doc["output"] = {"dir": cfg.output_dir, "plot": cfg.plot}
    if cfg.compare:
        ctrls = []
        for c in cfg.compare:
            d = _section_dict(c)
            if d["issf_epsilon"] is None:
                del d["issf_epsilon"]
            ctrls.append(d)
        doc["compare"] = {"controllers": ctrls}
    return doc


def dumps_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None, width=100)


# --- parameter overrides (sweeps) ----------------------------------------------

SWEEPABLE = tuple(
    [f"{sec}.{f.name}" for sec, cls in SECTIONS.items() for f in fields(cls) if "float" in str(f.type)]
    + ["dt", "t_end", "divergence_threshold"]
)


def with_param(cfg: ExperimentConfig, key: str, value: float) -> ExperimentConfig:
    """Copy of ``cfg`` with one numeric key replaced (validated like a load)."""
    if key not in SWEEPABLE:
        raise ConfigError(f"not a numeric config key (choose from: {', '.join(SWEEPABLE)})", key=key)
    value = float(value)
    try:
        if "." in key:
            sec, name = key.split(".")
            part = replace(getattr(cfg.sim, sec), **{name: value})
            sim = replace(cfg.sim, **{sec: part})
        else:
            sim = replace(cfg.sim, **{key: value})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), key=key) from None
    return dataclasses.replace(cfg, sim=sim)
