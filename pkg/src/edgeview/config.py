"""Experiment configuration: JSON sections mapped onto dataclasses."""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .edges import EdgeParams
from .errors import ConfigError
from .recon import ReconParams

METHODS = ("adaptive", "golden", "fixed")


@dataclass
class PhantomSection:
    preset: str | None = "blocks"
    dims: list[int] = field(default_factory=lambda: [50, 150, 150])
    scale: float = 0.01
    seed: int = 0
    shapes: list[dict] | None = None
    n_random: int | None = None
    path: str | None = None


@dataclass
class AcquisitionSection:
    initial_angles: Any = 3  # int k (k evenly spaced) or an explicit list
    n_views: int = 17
    grid_step: float = 1.0
    method: str = "adaptive"
    fixed_angles: list[float] = field(default_factory=list)


@dataclass
class SelectionSection:
    gamma: float = 1.0
    alpha: float = 1.0


@dataclass
class MeasurementSection:
    i0: float = 10000.0
    seed: int = 0
    noise: bool = True


@dataclass
class ReconSection:
    beta: Any = "auto"
    delta: float | None = None  # None: 10% of the phantom attenuation scale
    max_iter: int = 200
    tol: float = 1e-4
    nonneg: bool = True
    beta_factor: float = 1.0


@dataclass
class CompareSection:
    methods: list[str] = field(default_factory=lambda: ["adaptive", "golden"])
    thresholds: list[float] = field(default_factory=lambda: [0.3, 0.2, 0.1])


@dataclass
class OutputSection:
    dir: str | None = None
    snapshots: bool = True
    images: bool = True


@dataclass
class ExperimentConfig:
    phantom: PhantomSection = field(default_factory=PhantomSection)
    acquisition: AcquisitionSection = field(default_factory=AcquisitionSection)
    selection: SelectionSection = field(default_factory=SelectionSection)
    edges: EdgeParams = field(default_factory=EdgeParams)
    measurement: MeasurementSection = field(default_factory=MeasurementSection)
    recon: ReconSection = field(default_factory=ReconSection)
    compare: CompareSection | None = None
    output: OutputSection = field(default_factory=OutputSection)
    threads: int | None = None

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        cfg = _build(cls, d, "")
        validate(cfg)
        return cfg

    def replace(self, **sections):
        return dataclasses.replace(copy.deepcopy(self), **sections)

    def with_method(self, method):
        acq = dataclasses.replace(self.acquisition, method=method)
        return dataclasses.replace(copy.deepcopy(self), acquisition=acq, compare=None)

    def recon_params(self):
        r = self.recon
        delta = r.delta if r.delta is not None else 0.1 * self.phantom.scale
        beta = None if r.beta in (None, "auto") else float(r.beta)
        return ReconParams(beta=beta, delta=delta, max_iter=int(r.max_iter), tol=float(r.tol),
                           nonneg=bool(r.nonneg), beta_factor=float(r.beta_factor))


_SECTION_TYPES = {
    "phantom": PhantomSection,
    "acquisition": AcquisitionSection,
    "selection": SelectionSection,
    "edges": EdgeParams,
    "measurement": MeasurementSection,
    "recon": ReconSection,
    "compare": CompareSection,
    "output": OutputSection,
}


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where or 'config'}: expected an object, got {type(d).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in d:
            continue
        value = d[f.name]
        sub = _SECTION_TYPES.get(f.name) if cls is ExperimentConfig else None
        if sub is not None and value is not None:
            value = _build(sub, value, f.name)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _angle_ok(a):
    return isinstance(a, (int, float)) and 0 <= a < 180


def validate(cfg: ExperimentConfig):
    acq = cfg.acquisition
    _require(acq.method in METHODS, f"acquisition.method must be one of {METHODS}, got {acq.method!r}")
    _require(isinstance(acq.n_views, int) and acq.n_views >= 1, "acquisition.n_views must be an integer >= 1")
    _require(isinstance(acq.grid_step, (int, float)) and acq.grid_step > 0, "acquisition.grid_step must be > 0")
    ia = acq.initial_angles
    if isinstance(ia, list):
        _require(len(ia) > 0, "acquisition.initial_angles must not be empty")
        _require(all(_angle_ok(a) for a in ia), "acquisition.initial_angles must lie in [0, 180)")
    else:
        _require(isinstance(ia, int) and ia >= 1,
                 "acquisition.initial_angles must be a positive count or a list of angles")
    _require(all(_angle_ok(a) for a in acq.fixed_angles), "acquisition.fixed_angles must lie in [0, 180)")
    if acq.method == "fixed":
        _require(len(acq.fixed_angles) > 0, "acquisition.fixed_angles is required for method 'fixed'")
    ph = cfg.phantom
    if ph.path is None:
        _require(isinstance(ph.dims, list) and len(ph.dims) == 3, "phantom.dims needs three integers")
        _require(ph.preset is not None or ph.shapes is not None or ph.n_random is not None,
                 "phantom needs one of preset, shapes, n_random or path")
    _require(ph.scale > 0, "phantom.scale must be > 0")
    _require(cfg.measurement.i0 > 0, "measurement.i0 must be > 0")
    beta = cfg.recon.beta
    _require(beta in (None, "auto") or (isinstance(beta, (int, float)) and beta >= 0),
             "recon.beta must be 'auto' or a non-negative number")
    _require(cfg.selection.gamma >= 0 and cfg.selection.alpha >= 0, "selection.gamma/alpha must be >= 0")
    if cfg.compare is not None:
        _require(len(cfg.compare.methods) == 2 and all(m in METHODS for m in cfg.compare.methods),
                 f"compare.methods must name two of {METHODS}")
    try:
        cfg.recon_params()
    except ValueError as exc:
        raise ConfigError(f"recon: {exc}") from exc


def parse_value(text):
    """``--set`` values: JSON when it parses, a plain string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(d, dotted, value):
    keys = dotted.split(".")
    node = d
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value
    return d


def load_config_dict(path):
    """Read a config (or a run manifest, whose ``config`` entry is used)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: file not found")
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if isinstance(d, dict) and "config" in d and "tool" in d:
        d = d["config"]
    return d


def load_config(path, overrides=()):
    d = load_config_dict(path)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(d, key.strip(), parse_value(value))
    return ExperimentConfig.from_dict(d)
