"""Compare the compiled solver kernel against the numpy fallback.

Runs the same workloads in two subprocesses, one per backend, because
the backend is chosen once at import time. Reports wall time and the
speedup ratio. Usage:

    python3 benchmarks/bench_kernel.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
import simid
from simid.backend import ba_iterate

repeat = int(sys.argv[1])

rng = np.random.default_rng(12345)
results = {"backend": simid.BACKEND}

# raw kernel: many iterations on a mid-sized tilt matrix
m, u = 8, 8
px = rng.dirichlet(np.ones(m))
tilt = np.exp2(rng.standard_normal((m, u)) * 4.0)
tilt /= tilt.max(axis=1, keepdims=True)
best = float("inf")
for _ in range(repeat):
    q = np.full(u, 1.0 / u)
    t0 = time.perf_counter()
    iters = ba_iterate(px, tilt, q, 1e-12, 100000)
    best = min(best, time.perf_counter() - t0)
results["kernel_seconds"] = best
results["kernel_iterations"] = int(iters)
results["kernel_checksum"] = float(np.sum(q * np.arange(u)))

# end to end: identification rate on a ternary pair, 20-pattern family
px3 = simid.Pmf([0.8, 0.1, 0.1])
best = float("inf")
for _ in range(repeat):
    t0 = time.perf_counter()
    res = simid.r_id_hamming(px3, px3, 0.2, 3, 1e-4)
    best = min(best, time.perf_counter() - t0)
results["rid_seconds"] = best
results["rid_rate"] = res.rate

print(json.dumps(results))
"""


def run_backend(name: str, repeat: int) -> dict:
    env = dict(os.environ, SIMID_BACKEND=name)
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeat)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rows = []
    for name in ("compiled", "python"):
        try:
            rows.append(run_backend(name, args.repeat))
        except subprocess.CalledProcessError as e:
            print(f"{name}: failed\n{e.stderr}", file=sys.stderr)
    if len(rows) < 2:
        print("need both backends for a comparison", file=sys.stderr)
        return 1

    compiled, python = rows
    print(f"{'workload':<22}{'compiled':>12}{'python':>12}{'speedup':>10}")
    for key, label in (("kernel_seconds", "ba_iterate m=u=8"),
                       ("rid_seconds", "r_id_hamming m=3")):
        c, p = compiled[key], python[key]
        print(f"{label:<22}{c:>12.6f}{p:>12.6f}{p / c:>10.2f}x")
    drift = abs(compiled["kernel_checksum"] - python["kernel_checksum"])
    rate_drift = abs(compiled["rid_rate"] - python["rid_rate"])
    print(f"checksum drift {drift:.3e}, rate drift {rate_drift:.3e}")
    return 0 if max(drift, rate_drift) < 1e-9 else 1


if __name__ == "__main__":
    sys.exit(main())
