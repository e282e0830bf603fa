#!/usr/bin/env python3
"""Compare the numba and pure-numpy kernels, and the end-to-end pipeline under both.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 20] [--skip-pipeline]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from causal_anomaly import _kernels as K
from causal_anomaly.regress import DEGREE, knots_for, place_knots


def best_time(fn, repeats):
    fn()  # warm up (JIT compilation)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kde(n_points, n_queries, repeats):
    rng = np.random.default_rng(0)
    pts = np.sort(rng.normal(size=n_points))
    q = rng.normal(size=n_queries)
    a = K.kde_logpdf_numpy(q, pts, 0.2)
    b = K.kde_logpdf_numba(q, pts, 0.2)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-10)
    return (best_time(lambda: K.kde_logpdf_numpy(q, pts, 0.2), repeats),
            best_time(lambda: K.kde_logpdf_numba(q, pts, 0.2), repeats))


def bench_bspline(n, repeats):
    x = np.random.default_rng(1).uniform(-2, 2, n)
    k = place_knots(x, knots_for(x.size))
    t = np.concatenate([[k[0]] * DEGREE, k, [k[-1]] * DEGREE])
    a = K.bspline_basis_numpy(x, t, 3)
    b = K.bspline_basis_numba(x, t, 3)
    assert np.allclose(a, b, atol=1e-12)
    return (best_time(lambda: K.bspline_basis_numpy(x, t, 3), repeats),
            best_time(lambda: K.bspline_basis_numba(x, t, 3), repeats))


PIPELINE = """
import time
import numpy as np
from causal_anomaly.synth import SynthSpec, generate
from causal_anomaly.model import fit_scm
from causal_anomaly.assign import AssignConfig, mle_assign, build_report
from causal_anomaly._kernels import BACKEND
data, truth = generate(SynthSpec(d=8, N=1000, seed=0))
start = time.perf_counter()
scm = fit_scm(data, truth.dag)
_, st = mle_assign(data, scm, config=AssignConfig(seed=0), return_state=True)
rep = build_report(st)
print(BACKEND, time.perf_counter() - start, float(np.nansum(rep.delta)))
"""


def bench_pipeline():
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, CAUSAL_ANOMALY_DISABLE_NUMBA=flag)
        subprocess.run([sys.executable, "-c", PIPELINE], env=env, check=True,
                       capture_output=True)  # warm the numba cache
        res = subprocess.run([sys.executable, "-c", PIPELINE], env=env, check=True,
                             capture_output=True, text=True)
        backend, secs, checksum = res.stdout.split()
        out[backend] = (float(secs), float(checksum))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--skip-pipeline", action="store_true")
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1

    print(f"{'kernel':<34}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    rows = [(f"kde_logpdf {n}x{q}", *bench_kde(n, q, args.repeats))
            for n, q in ((500, 500), (2000, 2000), (2000, 20000))]
    rows += [(f"bspline_basis n={n}", *bench_bspline(n, args.repeats))
             for n in (1000, 10000, 100000)]
    for name, t_np, t_nb in rows:
        print(f"{name:<34}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")

    if not args.skip_pipeline:
        res = bench_pipeline()
        print("\nend-to-end fit + assign + report (d=8, N=1000):")
        for backend, (secs, checksum) in res.items():
            print(f"  {backend:<6}{secs:8.2f} s   sum(delta) = {checksum:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
