"""Acceptance checks, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line and then
asserts. Run standalone with ``python3 tests/test_acceptance.py``.
"""

import json
import math
import sys
import time
from decimal import Decimal, getcontext

import numpy as np
import pytest

from conftest import bar_image
from edgeview.cli import main as cli_main
from edgeview.config import ExperimentConfig
from edgeview.edges import (
    SliceFeatures,
    alignment_from_features,
    edge_alignment_table,
    extract_features,
    fold_distance,
    normalize_max,
    ppht,
)
from edgeview.projector import ProjectionGeometry, back_project_many, forward_project_many
from edgeview.recon import ReconParams, solve
from edgeview.selection import angle_spacing_table, candidate_grid, golden_ratio_angle
from edgeview.workflow import SimulatedInstrument, acquire, build_truth, nrmse, run_comparison

GRID = np.arange(180.0)


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail, elapsed=None, budget=None):
        within = budget is None or elapsed < budget
        status = "PASS" if ok and within else "FAIL"
        timing = "" if elapsed is None else f" [{elapsed:.1f}s / budget {budget:g}s]"
        with capsys.disabled():
            print(f"\n[criterion {n}] {status} {detail}{timing}")
        assert ok, detail
        assert within, f"runtime {elapsed:.1f}s over budget {budget}s"

    return _report


# 1 -------------------------------------------------------------------------


def test_c1_projector_adjointness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    g = ProjectionGeometry.for_image(64, 64)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal((1, 64, 64))
        y = rng.standard_normal((1, 1, g.n_channels))
        theta = float(rng.uniform(0, 180))
        lhs = float(np.vdot(forward_project_many(x, [theta], g), y))
        rhs = float(np.vdot(x, back_project_many(y, [theta], g, x.shape)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    report(1, worst < 1e-6, f"max relative adjoint error {worst:.2e} over 100 triples (< 1e-6)",
           time.perf_counter() - t0, 10)


# 2 -------------------------------------------------------------------------


def _oracle_table(edge_map, segments, candidates, eps_deg):
    """Direct per-pixel evaluation: count edge pixels inside each segment's cone.

    The cone sits at the segment midpoint and opens by ``eps`` around the ray
    direction of view ``theta``, which is ``(-sin theta, cos theta)``.
    """
    tol = 1e-9  # inclusive boundary, in degrees
    pixels = [(float(i), float(j)) for i, j in zip(*np.nonzero(edge_map))]
    raw = []
    for theta in candidates:
        t = math.radians(theta)
        rx, ry = -math.sin(t), math.cos(t)
        total = 0
        for s in segments:
            mx, my = 0.5 * (s.x0 + s.x1), 0.5 * (s.y0 + s.y1)
            for px, py in pixels:
                vx, vy = px - mx, py - my
                norm = math.hypot(vx, vy)
                if norm == 0.0:
                    total += 1
                    continue
                # angle between the pixel direction and the ray line, in [0, 90]
                gap = math.degrees(math.acos(min(1.0, abs(vx * rx + vy * ry) / norm)))
                if gap <= eps_deg + tol:
                    total += 1
        raw.append(total)
    top = max(raw)
    return [0.0 if top == 0 else r / top for r in raw]


def _random_edge_map(rng, n=64):
    e = np.zeros((n, n), dtype=np.uint8)
    for _ in range(int(rng.integers(1, 6))):
        while True:
            p0, p1 = rng.uniform(2, n - 3, 2), rng.uniform(2, n - 3, 2)
            if np.hypot(*(p1 - p0)) >= 15:
                break
        m = int(np.ceil(np.hypot(*(p1 - p0)))) + 1
        e[np.rint(np.linspace(p0[0], p1[0], m)).astype(int), np.rint(np.linspace(p0[1], p1[1], m)).astype(int)] = 1
    return e


def test_c2_edge_alignment_matches_brute_force(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    eps = 2.0
    n_maps, mismatches, argmax_bad, n_segs = 20, 0, 0, 0
    for k in range(n_maps):
        e = _random_edge_map(rng)
        # feature level: the edge map itself, with PPHT segments extracted from it
        segs = ppht(e, seed=k)
        got = normalize_max(alignment_from_features([SliceFeatures(e, segs)], GRID))
        want = np.array(_oracle_table(e, segs, GRID, eps))
        # full pipeline: the map treated as an image, features re-extracted
        vol = e[None].astype(float)
        full = edge_alignment_table(vol, GRID)
        feats = extract_features(vol)[0]
        want_full = np.array(_oracle_table(feats.edges, feats.segments, GRID, eps))
        n_segs += len(segs)
        mismatches += int(not np.array_equal(got, want)) + int(not np.array_equal(full, want_full))
        argmax_bad += int(np.argmax(got) != np.argmax(want)) + int(np.argmax(full) != np.argmax(want_full))
    ok = mismatches == 0 and argmax_bad == 0
    report(2, ok, f"{2 * n_maps} tables ({n_segs} segments), {mismatches} mismatches, "
                  f"{argmax_bad} argmax differences", time.perf_counter() - t0, 60)


# 3 -------------------------------------------------------------------------


def _direction(view):
    t = math.radians(view)
    return (-math.sin(t), math.cos(t))


def test_c3_two_bar_alignment_peaks(report):
    t0 = time.perf_counter()
    # one bar whose long side runs along the rays of view 0, one tilted to view 95
    img = np.maximum(
        bar_image(150, (40, 75), _direction(0.0), 110, 14, 0.01),
        bar_image(150, (90, 95), _direction(95.0), 100, 14, 0.01),
    )
    f = edge_alignment_table(img[None], GRID)
    first = float(GRID[np.argmax(f)])
    away = fold_distance(GRID, first) > 10.0
    second = float(GRID[away][np.argmax(f[away])])
    peaks = sorted([first, second], key=lambda a: fold_distance(a, 0.0))
    hit = fold_distance(peaks[0], 0.0) <= 2.0 and fold_distance(peaks[1], 95.0) <= 2.0
    # distinct: both peaks clearly above the floor between them
    valley = float(f[(fold_distance(GRID, 0.0) > 10) & (fold_distance(GRID, 95.0) > 10)].min())
    peak_vals = [float(f[int(p)]) for p in peaks]
    distinct = min(peak_vals) > 2 * max(valley, 1e-12) and min(peak_vals) >= 0.5
    report(3, hit and distinct,
           f"peaks at {peaks[0]:.0f} and {peaks[1]:.0f} deg (expected 0 and 95, tol 2), "
           f"f = {peak_vals[0]:.2f}/{peak_vals[1]:.2f}, floor {valley:.2f}",
           time.perf_counter() - t0, 30)


# 4 -------------------------------------------------------------------------


def test_c4_angle_spacing_shape(report):
    t0 = time.perf_counter()
    sets = ([0.0, 45.0, 90.0, 135.0], [10.0, 55.0, 100.0, 150.0], [20.0, 70.0, 95.0, 160.0])
    lines, ok = [], True
    for sel in sets:
        for step in (1.0, 0.5):
            grid = candidate_grid(step)
            h = angle_spacing_table(grid, sel, alpha=1.0)
            dmin = np.min([fold_distance(grid, s) for s in sel], axis=0)
            far = float(h[dmin >= 15.0].min())
            # window of one grid step around each selected angle, the angle itself included
            near = max(float(h[fold_distance(grid, s) <= step + 1e-9].min()) for s in sel)
            # strict neighbours, excluding the selected angle
            nbr = max(float(h[np.isclose(fold_distance(grid, s), step)].max()) for s in sel)
            good = far >= 0.9 and near < 0.2 and (step > 0.5 or nbr < 0.2)
            ok &= good
            lines.append(f"{sel} step {step}: far>={far:.3f}, neighbour {nbr:.3f}")
    report(4, ok, "; ".join(lines), time.perf_counter() - t0, 5)


# 5 -------------------------------------------------------------------------


def test_c5_spacing_hand_values(report):
    t0 = time.perf_counter()
    h = angle_spacing_table([0.0, 45.0], [90.0], alpha=1.0, normalize=False)
    e0 = abs(h[0] - math.exp(-1.0 / 90.0))
    e45 = abs(h[1] - math.exp(-1.0 / 45.0))
    report(5, e0 <= 1e-12 and e45 <= 1e-12,
           f"h(0)={h[0]:.15f} h(45)={h[1]:.15f}, errors {e0:.1e}/{e45:.1e}",
           time.perf_counter() - t0, 1)


# 6 -------------------------------------------------------------------------


def test_c6_golden_ratio_angles(report):
    t0 = time.perf_counter()
    getcontext().prec = 50
    phi = (1 + Decimal(5).sqrt()) / 2
    step = Decimal(180) / phi
    ours = [golden_ratio_angle(n) for n in range(100)]
    ref = [float((n * step) % 180) for n in range(100)]
    err = max(abs(a - b) for a, b in zip(ours, ref))
    distinct = len({round(a, 1) for a in ours}) == 100
    report(6, err <= 1e-9 and distinct, f"max deviation {err:.1e}, distinct after 0.1 deg rounding: {distinct}",
           time.perf_counter() - t0, 1)


# 7 / 8 ---------------------------------------------------------------------

SEEDS = range(5)
PHANTOMS = ("blocks", "mixed")


def closed_loop_config(preset, seed):
    return ExperimentConfig.from_dict({
        "phantom": {"preset": preset, "dims": [8, 96, 96], "scale": 0.01},
        "acquisition": {"initial_angles": 3, "n_views": 17},
        "selection": {"gamma": 1.0, "alpha": 1.0},
        "measurement": {"i0": 10000.0, "seed": seed},
        "recon": {"beta": 1e5, "delta": 1e-3, "max_iter": 200, "tol": 1e-4},
    })


@pytest.fixture(scope="module")
def closed_loop():
    t0 = time.perf_counter()
    runs = {}
    for preset in PHANTOMS:
        cfg = closed_loop_config(preset, 0)
        truth = build_truth(cfg)
        for seed in SEEDS:
            cfg = closed_loop_config(preset, seed)
            cmp = run_comparison(cfg.with_method("adaptive"), cfg.with_method("golden"), truth=truth)
            runs[preset, seed] = cmp.traces
    return runs, time.perf_counter() - t0


@pytest.mark.slow
def test_c7_adaptive_beats_golden(report, closed_loop):
    runs, elapsed = closed_loop
    ok, parts = True, []
    for preset in PHANTOMS:
        wins, auc_a, auc_g = 0, [], []
        for seed in SEEDS:
            a, g = runs[preset, seed]["adaptive"], runs[preset, seed]["golden"]
            wins += a.nrmse_at(20) <= g.nrmse_at(20)
            auc_a.append(a.auc(4, 20))
            auc_g.append(g.auc(4, 20))
        mean_a, mean_g = float(np.mean(auc_a)), float(np.mean(auc_g))
        ok &= wins >= 4 and mean_a < mean_g
        a20 = np.mean([runs[preset, s]["adaptive"].nrmse_at(20) for s in SEEDS])
        g20 = np.mean([runs[preset, s]["golden"].nrmse_at(20) for s in SEEDS])
        parts.append(f"{preset}: wins {wins}/5 at 20 views (mean {a20:.4f} vs {g20:.4f}), "
                     f"mean AUC(4-20) {mean_a:.3f} vs {mean_g:.3f}")
    report(7, ok, "; ".join(parts), elapsed, 30 * 60)


@pytest.mark.slow
def test_c8_reconstruction_sanity(report, closed_loop):
    t0 = time.perf_counter()
    cfg = closed_loop_config("blocks", 0)
    truth = build_truth(cfg)
    g = ProjectionGeometry.for_image(96, 96)
    inst = SimulatedInstrument(truth, g, 1e4, seed=0, noise=False)
    data = [acquire(inst, a) for a in np.arange(90) * 2.0]
    res = solve(data, g, None, ReconParams(beta=1e5, delta=1e-3, max_iter=200, tol=1e-4), truth.shape)
    dense = nrmse(res.volume, truth)
    runs, _ = closed_loop
    worst_rise = max(float(np.max(np.diff(tr.errors))) for traces in runs.values() for tr in traces.values())
    ok = dense < 0.05 and worst_rise <= 1e-3
    report(8, ok, f"90-view noiseless NRMSE {dense:.4f} (< 0.05); largest step-to-step NRMSE rise "
                  f"over {2 * len(runs)} traces {worst_rise:+.2e} (<= 1e-3)",
           time.perf_counter() - t0, 600)


# 9 -------------------------------------------------------------------------


def test_c9_rerun_from_manifest_is_byte_identical(report, tmp_path):
    t0 = time.perf_counter()
    cfg = {
        "phantom": {"preset": "mixed", "dims": [4, 64, 64]},
        "acquisition": {"initial_angles": 3, "n_views": 5},
        "recon": {"max_iter": 60},
        "compare": {"methods": ["adaptive", "golden"]},
        "output": {"snapshots": False, "images": False},
    }
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(cfg))
    first, second = tmp_path / "first", tmp_path / "second"
    rc1 = cli_main(["run", "--config", str(p), "--out", str(first), "--seed", "7"])
    rc2 = cli_main(["run", "--config", str(first / "manifest.json"), "--out", str(second)])
    files = ["adaptive/trace.csv", "golden/trace.csv", "comparison.csv", "adaptive/angles.txt"]
    same = [(first / f).read_bytes() == (second / f).read_bytes() for f in files]
    ok = rc1 == 0 and rc2 == 0 and all(same)
    report(9, ok, f"exit codes {rc1}/{rc2}; identical: " + ", ".join(f"{f}={s}" for f, s in zip(files, same)),
           time.perf_counter() - t0, 120)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
