"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--sim]

``--sim`` also times one short simulation under each backend (the fallback
is forced in a subprocess through ``PROSIM_PURE_PYTHON``).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from prosim import kernels

SIM_SNIPPET = (
    "import time; from prosim.sim import SimConfig, run_simulation; t = time.perf_counter(); "
    "run_simulation(SimConfig(algorithm='pro', n_vehicles=100, sim_duration=60)); "
    "print(time.perf_counter() - t)"
)


def cases(rng: np.random.Generator) -> dict:
    n = 150
    x, y = rng.uniform(0, 2000, n), rng.uniform(0, 2000, n)
    vx, vy = rng.normal(0, 12, n), rng.normal(0, 12, n)
    sig = np.ones(n)
    m, S = 12, 2000
    mus = rng.uniform(100, 400, m)
    sds = rng.uniform(1, 30, m)
    los = np.zeros(m)
    present = rng.random((S, m)) < 0.3
    gi = rng.standard_normal(int(present.sum()))
    g0 = rng.standard_normal(S)
    order = rng.permutation(n).astype(np.int64)
    near = rng.uniform(0, 600, 30), rng.uniform(0, 600, 30)
    cands = np.array([1, 4, 9], dtype=np.int64)
    dts = np.array([0.4, 1.0, 1.6])
    return {
        "neighbor_mask n=150": lambda k: k.neighbor_mask(x, y, 250.0),
        "listener_sinr 8x40": lambda k: k.listener_sinr(x[:8], y[:8], x[8:48], y[8:48], 3.0, 1e-9),
        "mc_sinr_count S=2000 m=12": lambda k: k.mc_sinr_count(
            150.0, 10.0, 0.0, mus, sds, los, g0, present.view(np.uint8), gi, 3.0, 10.0, 1e-9, 0.1),
        "mac_select n=150": lambda k: k.mac_select(order, x, y, 500.0),
        "link_probabilities n=150": lambda k: k.link_probabilities(
            x, y, vx, vy, sig, 1000.0, 1000.0, 5.0, 0.0, 1.0, 1.0, 250.0),
        "forecast_links k=3 n=30": lambda k: k.forecast_links(
            0, cands, near[0], near[1], vx[:30], vy[:30], sig[:30], dts, 250.0, 0.01, 0.05, 200,
            3.0, 10.0, 6.4e-9, 0.1, np.random.default_rng(0)),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--sim", action="store_true")
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        print("compiled kernels not built; only the numpy fallback is available")
        return 1
    backends = {name: kernels.get_backend(name) for name in ("cython", "python")}
    table = cases(np.random.default_rng(0))
    print(f"{'kernel':32s} {'cython us':>11s} {'python us':>11s} {'speedup':>8s}")
    for label, fn in table.items():
        t = {}
        for name, mod in backends.items():
            fn(mod)
            t[name] = timeit.timeit(lambda: fn(mod), number=args.repeat) / args.repeat * 1e6
        print(f"{label:32s} {t['cython']:11.1f} {t['python']:11.1f} {t['python'] / t['cython']:8.1f}")
    if args.sim:
        res = {}
        for name, flag in (("cython", "0"), ("python", "1")):
            env = dict(os.environ, PROSIM_PURE_PYTHON=flag)
            out = subprocess.run([sys.executable, "-c", SIM_SNIPPET], env=env, check=True,
                                 capture_output=True, text=True)
            res[name] = float(out.stdout.strip())
        print(f"{'simulation 60 s, n=100, pro':32s} {res['cython'] * 1e6:11.0f} "
              f"{res['python'] * 1e6:11.0f} {res['python'] / res['cython']:8.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
