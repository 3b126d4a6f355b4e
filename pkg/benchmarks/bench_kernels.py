"""Compiled (numba) versus fallback kernels.

    python3 benchmarks/bench_kernels.py [--rows 20000] [--repeat 3]

Runs itself twice, once normally and once with ``STOCHFET_DISABLE_JIT=1``, and
prints per-row timings of the batched mixture CRPS (loop kernel and vectorised
numpy form) and the truncated-mixture inverse CDF.  The fallback process uses a
smaller batch since its loops run as plain Python.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, args, repeat):
    fn(*args)  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def mixtures(rng, n, k=3):
    logits = rng.normal(size=(n, k))
    alpha = np.exp(logits - logits.max(axis=1, keepdims=True))
    alpha /= alpha.sum(axis=1, keepdims=True)
    mu = rng.normal(0.5, 0.5, size=(n, k))
    sigma = rng.uniform(0.05, 0.5, size=(n, k))
    return alpha, mu, sigma


def measure(rows, total, repeat, seed):
    from stochfet._accel import USING_NUMBA
    from stochfet._kernels import crps_batch_loop, crps_batch_numpy, inverse_cdf_rows

    rng = np.random.default_rng(seed)
    # draw the full batch in both processes so the rows compared are identical
    alpha, mu, sigma = (a[:rows] for a in mixtures(rng, total))
    y = rng.uniform(0.0, 1.5, total)[:rows]
    q = rng.uniform(0.05, 0.95, total)[:rows]
    loop = crps_batch_loop(alpha, mu, sigma, y)[0]
    vec = crps_batch_numpy(alpha, mu, sigma, y)[0]
    per_row = {
        "crps loop": best_of(crps_batch_loop, (alpha, mu, sigma, y), repeat) / rows,
        "crps numpy": best_of(crps_batch_numpy, (alpha, mu, sigma, y), repeat) / rows,
        "inverse cdf": best_of(inverse_cdf_rows, (alpha, mu, sigma, q, 200), repeat) / rows,
    }
    x, _ = inverse_cdf_rows(alpha, mu, sigma, q, 200)
    return {
        "numba": USING_NUMBA,
        "per_row": per_row,
        "crps_gap": float(np.max(np.abs(loop - vec))),
        "icdf_head": [float(v) for v in x[:50]],
    }


def run_child(rows, total, repeat, seed, disable):
    env = dict(os.environ)
    env.pop("STOCHFET_DISABLE_JIT", None)
    if disable:
        env["STOCHFET_DISABLE_JIT"] = "1"
    cmd = [sys.executable, __file__, "--child", "--rows", str(rows), "--total", str(total), "--repeat", str(repeat), "--seed", str(seed)]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--total", type=int, default=None, help=argparse.SUPPRESS)
    args = p.parse_args(argv)

    if args.child:
        print(json.dumps(measure(args.rows, args.total or args.rows, args.repeat, args.seed)))
        return

    fast = run_child(args.rows, args.rows, args.repeat, args.seed, disable=False)
    slow = run_child(min(args.rows, max(50, args.rows // 20)), args.rows, 1, args.seed, disable=True)
    if not fast["numba"]:
        print("numba is not importable; both columns use the fallback")
    head = np.max(np.abs(np.subtract(fast["icdf_head"], slow["icdf_head"])))
    print(f"crps loop vs numpy max |diff|: {fast['crps_gap']:.2e}")
    print(f"inverse cdf numba vs fallback max |diff| (first 50 rows): {head:.2e}")
    print(f"{'kernel':<14s}{'numba us/row':>14s}{'fallback us/row':>18s}{'speed-up':>10s}")
    for name, t_fast in fast["per_row"].items():
        t_slow = slow["per_row"][name]
        print(f"{name:<14s}{1e6 * t_fast:14.3f}{1e6 * t_slow:18.3f}{t_slow / t_fast:10.1f}")


if __name__ == "__main__":
    main()
