"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_backends.py --nz 8 --n 96 --repeat 3

The first numba call (JIT compile or cache load) is excluded from the timings.
"""

import argparse
import timeit

import numpy as np

from edgeview import _accel
from edgeview.edges import EdgeParams, canny, cone_counts, edge_alignment_table, ppht
from edgeview.phantom import generate_phantom, preset_spec
from edgeview.projector import ProjectionGeometry, back_project_many, forward_project_many
from edgeview.recon import ReconParams, huber_prior, solve
from edgeview.workflow import SimulatedInstrument, acquire


def cases(nz, n, n_angles):
    vol = generate_phantom(preset_spec("blocks", dims=(nz, n, n)))
    g = ProjectionGeometry.for_image(n, n)
    angles = np.linspace(0, 180, n_angles, endpoint=False)
    sino = forward_project_many(vol, angles, g)
    edges = canny(vol[nz // 2])
    segs = ppht(edges)
    grid = np.arange(180.0)
    inst = SimulatedInstrument(vol, g, 1e4, seed=0)
    data = [acquire(inst, a) for a in angles]
    params = ReconParams(beta=1e5, max_iter=10, tol=1e-12)
    return {
        "forward projection": lambda: forward_project_many(vol, angles, g),
        "back projection": lambda: back_project_many(sino, angles, g, vol.shape),
        "huber prior": lambda: huber_prior(vol, 1e-3),
        "ppht (one slice)": lambda: ppht(edges),
        "cone accumulation": lambda: cone_counts(edges, segs, (grid + 90.0) % 180.0, 2.0),
        "edge alignment table": lambda: edge_alignment_table(vol, grid, EdgeParams()),
        "10 recon iterations": lambda: solve(data, g, None, params, vol.shape),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nz", type=int, default=8)
    ap.add_argument("--n", type=int, default=96)
    ap.add_argument("--angles", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    _accel.set_num_threads(args.threads)

    work = cases(args.nz, args.n, args.angles)
    print(f"volume {args.nz}x{args.n}x{args.n}, {args.angles} angles, best of {args.repeat}")
    print(f"{'kernel':<24}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, fn in work.items():
        best = {}
        for backend in ("numba", "numpy"):
            with _accel.use_backend(backend):
                fn()  # warm-up
                best[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{best['numba']:>12.2f}{best['numpy']:>12.2f}{best['numpy'] / best['numba']:>9.1f}x")


if __name__ == "__main__":
    main()
