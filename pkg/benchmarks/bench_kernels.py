"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter (the backend is fixed at import
time by PENBOOT_DISABLE_NUMBA). Usage::

    python benchmarks/bench_kernels.py [--B 2000] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from penboot import _accel
from penboot.model import RegressionProblem, Lasso, SCAD, AdaptiveLasso, PostSelectionOLS
from penboot.solvers import solve_batch

B, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
n, p = 100, 10
X = rng.standard_normal((n, p))
beta = np.r_[3.0, -2.5, 2.0, np.zeros(p - 3)]
Y = X @ beta + rng.standard_normal((B, n))
problem = RegressionProblem(X, Y[0])
specs = {
    "lasso": Lasso(40.0),
    "scad": SCAD(0.3),
    "alasso": AdaptiveLasso(0.05),
    "psols": PostSelectionOLS(80.0),
}
# warm-up compiles (or loads cached) kernels
for s in specs.values():
    solve_batch(problem, s, Y[:2])
out = {"backend": _accel.backend(), "B": B}
for name, s in specs.items():
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        sol = solve_batch(problem, s, Y)
        best = min(best, time.perf_counter() - t)
    out[name] = best
    out[name + "_checksum"] = float(np.abs(sol.betas).sum())
print(json.dumps(out))
"""


def run(backend_off: bool, B: int, repeat: int) -> dict:
    env = dict(os.environ)
    if backend_off:
        env["PENBOOT_DISABLE_NUMBA"] = "1"
    else:
        env.pop("PENBOOT_DISABLE_NUMBA", None)
    res = subprocess.run([sys.executable, "-c", WORKER, str(B), str(repeat)], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--B", type=int, default=2000, help="responses per batch")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print raw JSON")
    args = ap.parse_args(argv)
    fast = run(False, args.B, args.repeat)
    slow = run(True, args.B, args.repeat)
    if args.json:
        print(json.dumps({"numba": fast, "numpy": slow}, indent=2))
        return
    print(f"batch of {args.B} fits, n=100, p=10 (best of {args.repeat})")
    print(f"{'penalty':<8} {'numba s':>10} {'numpy s':>10} {'speedup':>9} {'max checksum diff':>18}")
    for name in ("lasso", "scad", "alasso", "psols"):
        diff = abs(fast[name + "_checksum"] - slow[name + "_checksum"])
        print(f"{name:<8} {fast[name]:>10.4f} {slow[name]:>10.4f} {slow[name] / fast[name]:>8.1f}x {diff:>18.2e}")


if __name__ == "__main__":
    main()
