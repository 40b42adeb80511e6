"""Closed acquisition/reconstruction loop and the golden-ratio baseline."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import io as eio
from .config import ExperimentConfig
from .errors import (
    ExhaustedCandidatesError,
    GeometryError,
    InvalidComparisonError,
    UndefinedMetricError,
)
from .measurement import CountData, WeightedProjection, counts_to_attenuation, simulate_counts
from .phantom import PhantomSpec, Shape, generate_phantom, preset_spec, random_spec
from .projector import ProjectionGeometry, forward_project
from .recon import ReconParams, solve
from .selection import AngleState, ScoreTable, candidate_grid, next_golden, score_candidates, snap_to_grid

log = logging.getLogger(__name__)


def nrmse(x, ref) -> float:
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise GeometryError(f"shape mismatch: {x.shape} vs {ref.shape}")
    denom = float(np.linalg.norm(ref))
    if denom == 0.0:
        raise UndefinedMetricError("NRMSE is undefined for an all-zero reference")
    return float(np.linalg.norm(x - ref)) / denom


class Instrument(Protocol):
    def measure(self, angle: float) -> CountData: ...


class SimulatedInstrument:
    """Forward-projects a known volume and draws Poisson counts.

    Noise depends only on ``(seed, angle)``. With ``noise=False`` the counts
    are their expected values.
    """

    def __init__(self, volume, geom: ProjectionGeometry, i0=10000.0, seed=0, noise=True):
        self.volume = np.asarray(volume, dtype=np.float64)
        self.geom = geom
        self.i0 = float(i0)
        self.seed = int(seed)
        self.noise = bool(noise)

    def measure(self, angle):
        proj = forward_project(self.volume, angle, self.geom)
        if self.noise:
            return simulate_counts(proj, self.i0, self.seed)
        return CountData(angle=float(angle), counts=self.i0 * np.exp(-proj.values), i0=self.i0)


def acquire(instrument: Instrument, angle) -> WeightedProjection:
    return counts_to_attenuation(instrument.measure(angle))


@dataclass
class StepRecord:
    step: int
    angle: float | None
    n_views: int
    nrmse: float
    selection_ms: float
    recon_ms: float
    recon_iters: int


@dataclass
class ExperimentTrace:
    method: str
    initial_angles: list[float]
    steps: list[StepRecord] = field(default_factory=list)
    score_tables: list[ScoreTable | None] = field(default_factory=list)
    final: np.ndarray | None = None
    truncated: bool = False

    @property
    def angles(self):
        return list(self.initial_angles) + [s.angle for s in self.steps if s.angle is not None]

    @property
    def n_views(self):
        return np.array([s.n_views for s in self.steps])

    @property
    def errors(self):
        return np.array([s.nrmse for s in self.steps])

    def nrmse_at(self, n_views):
        for s in self.steps:
            if s.n_views == n_views:
                return s.nrmse
        raise KeyError(f"trace has no entry with {n_views} views")

    def auc(self, first=None, last=None):
        """Trapezoidal area under NRMSE vs number of views over ``[first, last]``."""
        v, e = self.n_views, self.errors
        sel = np.ones(v.shape, dtype=bool)
        if first is not None:
            sel &= v >= first
        if last is not None:
            sel &= v <= last
        v, e = v[sel], e[sel]
        if v.size < 2:
            return 0.0
        return float(np.sum(0.5 * (e[1:] + e[:-1]) * np.diff(v)))

    def crossing(self, threshold):
        """Fewest views at which NRMSE drops below ``threshold`` (None if never)."""
        for s in self.steps:
            if s.nrmse < threshold:
                return s.n_views
        return None

    def trace_rows(self):
        return [(s.step, "" if s.angle is None else eio.fmt(s.angle), s.n_views, eio.fmt(s.nrmse))
                for s in self.steps]

    def timing_rows(self):
        return [(s.step, f"{s.selection_ms:.3f}", f"{s.recon_ms:.3f}", s.recon_iters) for s in self.steps]


TRACE_HEADER = ("step", "angle", "n_views", "nrmse")
TIMING_HEADER = ("step", "selection_ms", "recon_ms", "recon_iters")


def build_truth(cfg: ExperimentConfig) -> np.ndarray:
    ph = cfg.phantom
    if ph.path is not None:
        return eio.read_volume(ph.path)
    return generate_phantom(phantom_spec(cfg))


def phantom_spec(cfg: ExperimentConfig) -> PhantomSpec:
    ph = cfg.phantom
    dims = tuple(int(n) for n in ph.dims)
    if ph.shapes is not None:
        shapes = tuple(Shape.from_dict(s) for s in ph.shapes)
        return PhantomSpec(dims=dims, shapes=shapes, scale=ph.scale, seed=ph.seed)
    if ph.n_random is not None:
        return random_spec(dims, ph.n_random, ph.scale, ph.seed)
    return preset_spec(ph.preset, dims, ph.scale, ph.seed)


def initial_angles(cfg: ExperimentConfig) -> list[float]:
    acq = cfg.acquisition
    step = float(acq.grid_step)
    if isinstance(acq.initial_angles, list):
        raw = acq.initial_angles
    else:
        k = int(acq.initial_angles)
        raw = [i * 180.0 / k for i in range(k)]
    out = []
    for a in raw:
        s = snap_to_grid(a, step)
        if not any(abs(s - b) < 1e-9 for b in out):
            out.append(s)
    return out


def run_experiment(
    cfg: ExperimentConfig,
    truth: np.ndarray | None = None,
    instrument: Instrument | None = None,
    on_step: Callable[[StepRecord, np.ndarray, ScoreTable | None], None] | None = None,
) -> ExperimentTrace:
    """Initial reconstruction, then ``n_views`` rounds of select / measure / reconstruct."""
    truth = build_truth(cfg) if truth is None else np.asarray(truth, dtype=np.float64)
    dims = truth.shape
    geom = ProjectionGeometry.for_image(dims[1], dims[2])
    if instrument is None:
        m = cfg.measurement
        instrument = SimulatedInstrument(truth, geom, m.i0, m.seed, m.noise)
    params: ReconParams = cfg.recon_params()
    acq = cfg.acquisition
    method = acq.method
    state = AngleState(candidate_grid(acq.grid_step))
    start = initial_angles(cfg)
    for a in start:
        state.add(a)

    trace = ExperimentTrace(method=method, initial_angles=list(start))
    data = [acquire(instrument, a) for a in start]
    t0 = time.perf_counter()
    res = solve(data, geom, None, params, dims)
    recon_ms = 1e3 * (time.perf_counter() - t0)
    x = res.volume
    rec = StepRecord(0, None, len(data), nrmse(x, truth), 0.0, recon_ms, res.n_iter)
    trace.steps.append(rec)
    trace.score_tables.append(None)
    if on_step:
        on_step(rec, x, None)

    golden_n = 0
    fixed = [snap_to_grid(a, acq.grid_step) for a in acq.fixed_angles]
    for n in range(1, acq.n_views + 1):
        t0 = time.perf_counter()
        table = None
        try:
            if method == "adaptive":
                table = score_candidates(x, state, cfg.selection.gamma, cfg.selection.alpha, cfg.edges)
                angle = table.best()
            elif method == "golden":
                golden_n, angle = next_golden(state, golden_n)
                golden_n += 1
            else:
                while fixed and any(abs(fixed[0] - s) < 1e-9 for s in state.selected):
                    fixed.pop(0)
                if not fixed:
                    raise ExhaustedCandidatesError("fixed angle list exhausted")
                angle = fixed.pop(0)
        except ExhaustedCandidatesError as exc:
            log.info("stopping after %d views: %s", len(data), exc)
            trace.truncated = True
            break
        selection_ms = 1e3 * (time.perf_counter() - t0)

        data.append(acquire(instrument, angle))
        state.add(angle)
        t0 = time.perf_counter()
        res = solve(data, geom, x, params, dims)
        recon_ms = 1e3 * (time.perf_counter() - t0)
        x = res.volume
        rec = StepRecord(n, float(angle), len(data), nrmse(x, truth), selection_ms, recon_ms, res.n_iter)
        trace.steps.append(rec)
        trace.score_tables.append(table)
        log.debug("step %d: angle %.1f nrmse %.4f (%d iters)", n, angle, rec.nrmse, res.n_iter)
        if on_step:
            on_step(rec, x, table)
    trace.final = x
    return trace


@dataclass
class Comparison:
    traces: dict[str, ExperimentTrace]
    thresholds: list[float]
    crossings: dict[str, dict[float, int | None]]

    def summary(self):
        out = {}
        for name, tr in self.traces.items():
            out[name] = {
                "final_views": int(tr.steps[-1].n_views),
                "final_nrmse": tr.steps[-1].nrmse,
                "auc": tr.auc(),
                "truncated": tr.truncated,
                "crossings": {repr(float(t)): c for t, c in self.crossings[name].items()},
            }
        return out


_SHARED = ("phantom", "measurement", "recon")


def check_comparable(a: ExperimentConfig, b: ExperimentConfig):
    for name in _SHARED:
        if dataclasses.asdict(getattr(a, name)) != dataclasses.asdict(getattr(b, name)):
            raise InvalidComparisonError(f"configs differ in shared section '{name}'")
    if initial_angles(a) != initial_angles(b):
        raise InvalidComparisonError("configs differ in initial angles")
    if a.acquisition.grid_step != b.acquisition.grid_step:
        raise InvalidComparisonError("configs differ in candidate grid step")


def run_comparison(a: ExperimentConfig, b: ExperimentConfig, thresholds=(0.3,), truth=None,
                   labels=None, on_step=None) -> Comparison:
    """Run two configurations against the same phantom and noise, and compare their curves."""
    check_comparable(a, b)
    truth = build_truth(a) if truth is None else truth
    labels = labels or (a.acquisition.method, b.acquisition.method)
    if labels[0] == labels[1]:
        labels = (f"{labels[0]}_a", f"{labels[1]}_b")
    traces = {}
    for label, cfg in zip(labels, (a, b)):
        cb = (lambda rec, x, table, _l=label: on_step(_l, rec, x, table)) if on_step else None
        traces[label] = run_experiment(cfg, truth, on_step=cb)
    thresholds = [float(t) for t in thresholds]
    crossings = {k: {t: tr.crossing(t) for t in thresholds} for k, tr in traces.items()}
    return Comparison(traces, thresholds, crossings)
