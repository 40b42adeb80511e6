"""Command-line front end.

    edgeview run      --config exp.json [--set KEY=VALUE ...] [--out DIR]
    edgeview compare  --config exp.json ...
    edgeview score    VOLUME.raw --out DIR [--angles 0,90]
    edgeview phantom  --config exp.json --out DIR

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import logging
import sys
import traceback
from pathlib import Path

from . import __version__, _accel
from . import io as eio
from .config import CompareSection, ExperimentConfig, apply_override, load_config_dict, parse_value
from .edges import EdgeParams, edge_alignment_table
from .errors import ConfigError, EdgeViewError
from .selection import angle_spacing_table, candidate_grid
from .workflow import (
    TIMING_HEADER,
    TRACE_HEADER,
    ExperimentTrace,
    build_truth,
    run_comparison,
    run_experiment,
)

log = logging.getLogger("edgeview")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunWriter:
    """Collects artifacts under one output directory and writes the manifest."""

    def __init__(self, out: Path, cfg: ExperimentConfig | None, images=True, snapshots=True):
        self.out = out
        self.cfg = cfg
        self.images = images
        self.snapshots = snapshots
        self.artifacts: list[str] = []
        self.normalization: dict[str, list[float]] = {}
        self.started = _now()
        out.mkdir(parents=True, exist_ok=True)

    def _rel(self, p):
        return Path(p).relative_to(self.out).as_posix()

    def add(self, p):
        self.artifacts.append(self._rel(p))
        return p

    def volume(self, rel, vol):
        path = self.out / f"{rel}.raw"
        path.parent.mkdir(parents=True, exist_ok=True)
        self.add(eio.write_volume(path, vol))
        if self.images:
            pngs, norm = eio.write_slices_png(self.out / f"{rel}_png", vol)
            for p in pngs:
                self.add(p)
            self.normalization[f"{rel}_png"] = [norm[0], norm[1]]

    def csv(self, rel, header, rows):
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        return self.add(eio.write_csv(path, header, rows))

    def text(self, rel, text):
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="ascii")
        return self.add(path)

    def manifest(self, status, extra=None):
        doc = {
            "tool": {"name": "edgeview", "version": __version__, "backend": _accel.BACKEND},
            "status": status,
            "started": self.started,
            "finished": _now(),
            "config": None if self.cfg is None else self.cfg.to_dict(),
            "artifacts": sorted(set(self.artifacts)),
            "image_normalization": self.normalization,
        }
        if extra:
            doc.update(extra)
        path = self.out / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
        return path


def _step_writer(writer: RunWriter, prefix: str):
    def on_step(rec, x, table):
        if writer.snapshots:
            writer.volume(f"{prefix}volumes/step_{rec.step:03d}", x)
        if table is not None:
            writer.csv(f"{prefix}scores/step_{rec.step:03d}.csv", ("theta", "f", "h", "total"),
                       [(float(a), float(f), float(h), float(t)) for a, f, h, t in table.rows()])
    return on_step


def _write_trace(writer: RunWriter, prefix: str, trace: ExperimentTrace):
    writer.csv(f"{prefix}trace.csv", TRACE_HEADER, trace.trace_rows())
    writer.csv(f"{prefix}timings.csv", TIMING_HEADER, trace.timing_rows())
    writer.text(f"{prefix}angles.txt", "".join(f"{eio.fmt(a)}\n" for a in trace.angles))
    writer.volume(f"{prefix}final", trace.final)


def _resolve_config(args) -> ExperimentConfig:
    if not args.config:
        raise UsageError("--config is required")
    d = load_config_dict(args.config)
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(d, key.strip(), parse_value(value))
    if args.seed is not None:
        apply_override(d, "measurement.seed", int(args.seed))
    if args.threads is not None:
        d["threads"] = int(args.threads)
    if args.out is not None:
        apply_override(d, "output.dir", str(args.out))
    return ExperimentConfig.from_dict(d)


def _output_dir(cfg: ExperimentConfig):
    if not cfg.output.dir:
        raise UsageError("no output directory: pass --out or set output.dir")
    return Path(cfg.output.dir)


def _execute(cfg: ExperimentConfig, compare: bool):
    _accel.set_num_threads(cfg.threads)
    out = _output_dir(cfg)
    writer = RunWriter(out, cfg, cfg.output.images, cfg.output.snapshots)
    try:
        truth = build_truth(cfg)
        writer.volume("truth", truth)
        if compare:
            cmp_cfg = cfg.compare or CompareSection()
            m_a, m_b = cmp_cfg.methods
            a, b = cfg.with_method(m_a), cfg.with_method(m_b)
            labels = (m_a, m_b) if m_a != m_b else (f"{m_a}_a", f"{m_b}_b")
            writers = {lab: _step_writer(writer, f"{lab}/") for lab in labels}
            result = run_comparison(a, b, cmp_cfg.thresholds, truth=truth, labels=labels,
                                    on_step=lambda lab, rec, x, t: writers[lab](rec, x, t))
            for lab, trace in result.traces.items():
                _write_trace(writer, f"{lab}/", trace)
            ta, tb = (result.traces[lab] for lab in labels)
            rows = []
            for sa, sb in zip(ta.steps, tb.steps):
                rows.append((sa.n_views, eio.fmt(sa.nrmse), eio.fmt(sb.nrmse)))
            writer.csv("comparison.csv", ("n_views", f"nrmse_{labels[0]}", f"nrmse_{labels[1]}"), rows)
            summary = {"comparison": result.summary()}
        else:
            trace = run_experiment(cfg, truth, on_step=_step_writer(writer, ""))
            _write_trace(writer, "", trace)
            summary = {"summary": {"final_nrmse": trace.steps[-1].nrmse,
                                   "n_views": int(trace.steps[-1].n_views),
                                   "truncated": trace.truncated}}
    except Exception as exc:
        writer.manifest("failed", {"error": f"{type(exc).__name__}: {exc}", "partial": True})
        raise
    writer.manifest("complete", summary)
    return out


def cmd_run(args, compare=False):
    cfg = _resolve_config(args)
    compare = compare or cfg.compare is not None
    out = _execute(cfg, compare)
    print(f"wrote {out / 'manifest.json'}")
    return EXIT_OK


def cmd_compare(args):
    return cmd_run(args, compare=True)


def _parse_angles(text):
    if text is None:
        return None
    try:
        return [float(a) for a in text.split(",") if a.strip()]
    except ValueError as exc:
        raise UsageError(f"--angles expects comma-separated numbers: {exc}") from exc


def cmd_score(args):
    if args.out is None:
        raise UsageError("--out is required")
    path = Path(args.volume)
    if not path.exists():
        raise FileNotFoundError(f"{path}: file not found")
    vol = eio.read_volume(path)
    params = EdgeParams(epsilon=args.epsilon, sigma=args.sigma, seed=args.edge_seed,
                        cone_axis=args.cone_axis)
    grid = candidate_grid(args.grid_step)
    out = Path(args.out)
    writer = RunWriter(out, None, images=False)
    f = edge_alignment_table(vol, grid, params)
    writer.csv("f_curve.csv", ("theta", "f"), [(float(a), float(v)) for a, v in zip(grid, f)])
    angles = _parse_angles(args.angles)
    if angles:
        h = angle_spacing_table(grid, angles, args.alpha)
        writer.csv("h_curve.csv", ("theta", "h"), [(float(a), float(v)) for a, v in zip(grid, h)])
    writer.manifest("complete", {"score": {"volume": str(path), "edges": dataclasses.asdict(params),
                                           "angles": angles, "alpha": args.alpha,
                                           "grid_step": args.grid_step}})
    print(f"wrote {out / 'f_curve.csv'}")
    return EXIT_OK


def cmd_phantom(args):
    cfg = _resolve_config(args)
    out = _output_dir(cfg)
    writer = RunWriter(out, cfg, images=True)
    truth = build_truth(cfg)
    writer.volume("phantom", truth)
    writer.manifest("complete")
    print(f"wrote {out / 'phantom.raw'}")
    return EXIT_OK


def _common(p):
    p.add_argument("--config", help="experiment JSON (a run manifest also works)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a dotted config key; VALUE is parsed as JSON when possible")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--seed", type=int, help="measurement noise seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="edgeview", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"edgeview {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment (or a comparison if the config has one)")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run two acquisition methods on identical data")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("phantom", help="generate and save the configured phantom")
    _common(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("score", help="write edge-alignment / angle-spacing curves for a volume")
    p.add_argument("volume", help="raw volume file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--angles", help="comma-separated measured angles for the spacing curve")
    p.add_argument("--grid-step", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=EdgeParams.epsilon)
    p.add_argument("--sigma", type=float, default=EdgeParams.sigma)
    p.add_argument("--edge-seed", type=int, default=0)
    p.add_argument("--cone-axis", choices=("candidate", "segment"), default="candidate")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None):
        _accel.set_num_threads(args.threads)
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"edgeview: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EdgeViewError, eio.RawFormatError, OSError, ValueError) as exc:
        print(f"edgeview: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
