"""Compare the numba and numpy flow kernels.

Times a single right-hand-side evaluation, a block of RK4 steps and a full
hybrid simulation for estimation networks of increasing size. Each backend
is checked against the other before timing.

Usage::

    python3 benchmarks/bench_kernels.py [--sizes 3 5 20] [--steps 20000] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from dmcl import experiments as ex
from dmcl._accel import HAVE_NUMBA
from dmcl.core import simulate


def _best(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def problem_of_size(N: int):
    cfg = ex.load_config("estimation")
    cfg["graph"] = {"preset": "cycle", "n": N}
    cfg["data"]["synthesize"]["offset"] = 0.7 / N
    return ex.build_problem(cfg)


def bench(N: int, steps: int, repeat: int) -> dict:
    prob = problem_of_size(N)
    x0 = prob.initial_state(nt=1).to_vector()
    row = {"N": N, "state_size": int(x0.size)}
    kernels = {b: prob.kernel(1, b) for b in ("numpy", "numba")}
    ref = kernels["numpy"].integrate(0.0, x0, 1e-4, 50)[1][-1]
    got = kernels["numba"].integrate(0.0, x0, 1e-4, 50)[1][-1]
    row["max_abs_diff"] = float(np.max(np.abs(ref - got)))
    for name, kern in kernels.items():
        kern.integrate(0.0, x0, 1e-4, 2)  # compile / warm caches
        rhs_calls = 2000
        row[f"{name}_rhs_us"] = 1e6 * _best(lambda: [kern.rhs(0.0, x0) for _ in range(rhs_calls)],
                                            repeat) / rhs_calls
        row[f"{name}_rk4_s"] = _best(lambda: kern.integrate(0.0, x0, 1e-4, steps, stride=steps), repeat)
        row[f"{name}_simulate_s"] = _best(
            lambda: simulate(prob, "centralized", t_max=5.0, step=5e-4, backend=name), 1)
    row["rk4_speedup"] = row["numpy_rk4_s"] / row["numba_rk4_s"]
    row["simulate_speedup"] = row["numpy_simulate_s"] / row["numba_simulate_s"]
    return row


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[3, 5, 20])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is disabled (DMCL_DISABLE_NUMBA); nothing to compare")
    rows = [bench(N, args.steps, args.repeat) for N in args.sizes]
    hdr = f"{'N':>4} {'rhs np us':>10} {'rhs nb us':>10} {'rk4 np s':>9} {'rk4 nb s':>9} {'x':>6} {'sim x':>6} {'diff':>8}"
    print(hdr)
    for r in rows:
        print(f"{r['N']:>4} {r['numpy_rhs_us']:>10.1f} {r['numba_rhs_us']:>10.1f} {r['numpy_rk4_s']:>9.3f} "
              f"{r['numba_rk4_s']:>9.3f} {r['rk4_speedup']:>6.1f} {r['simulate_speedup']:>6.1f} "
              f"{r['max_abs_diff']:>8.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
