"""Compare the compiled kernels against the numpy reference backend.

Times the three hot paths (normal generation, first-order ensemble stepping,
barrier hitting) on both backends and verifies that outputs agree exactly.

Run:  python benchmarks/compare_backends.py [--paths N] [--steps N]
"""

import argparse
import time

import numpy as np

from shockrep import backend
from shockrep import fields as fl
from shockrep import games as gm
from shockrep.engine import IntegratorConfig, simulate_ensemble
from shockrep.rng import path_normals


def timeit(fn, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=500)
    parser.add_argument("--steps", type=int, default=20000)
    parser.add_argument("--normals", type=int, default=5_000_000)
    args = parser.parse_args()

    if not backend.HAVE_COMPILED:
        print("compiled kernels are not built; nothing to compare")
        return 1

    from shockrep import _kernels

    print(f"{'workload':<38}{'compiled':>12}{'numpy':>12}{'speedup':>10}")

    def row(label, tc, tp, extra=""):
        print(f"{label:<38}{tc:>11.2f}s{tp:>11.2f}s{tp/tc:>9.1f}x{extra}")

    n = args.normals
    tc, zc = timeit(lambda: _kernels.philox_normals(1, 0, 0, n))
    tp, zp = timeit(lambda: path_normals(1, 0, 0, n))
    assert np.array_equal(zc, zp)
    row(f"{n/1e6:.0f}M standard normals", tc, tp)

    game = gm.constant_game([[1.0, 1.0]])
    field = fl.stochastic_replicator_field(game, gm.StrategyNoise([1.0, 1.0]))
    cfg = IntegratorConfig(dt=1e-3, horizon=args.steps * 1e-3,
                           record_stride=args.steps)
    x0 = np.array([0.3, 0.7])

    def run(name):
        return simulate_ensemble(field, x0, cfg, seed=3, n_paths=args.paths,
                                 keep_snapshots=False, backend=name)

    tc, ec = timeit(lambda: run("compiled"), repeat=2)
    tp, ep = timeit(lambda: run("python"), repeat=2)
    assert np.array_equal(ec.terminal, ep.terminal)
    work = args.paths * args.steps
    row(f"ensemble {args.paths} x {args.steps} steps", tc, tp,
        f"   ({work/tc/1e6:.1f}M path-steps/s compiled)")

    from shockrep._kernels_py import run_hitting as hit_py
    tc, hc = timeit(lambda: _kernels.run_hitting(1.0, 1.0, 1e-3, args.steps,
                                                 5, 0, args.paths), repeat=2)
    tp, hp = timeit(lambda: hit_py(1.0, 1.0, 1e-3, args.steps, 5, 0,
                                   args.paths), repeat=2)
    assert np.array_equal(hc["hit"], hp["hit"])
    assert np.array_equal(hc["t_hit"], hp["t_hit"])
    row(f"barrier hitting {args.paths} x {args.steps} steps", tc, tp)

    print("\nall outputs bit-identical across backends")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
