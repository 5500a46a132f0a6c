"""Compare the compiled pivot kernel against the pure-Python fallback.

The kernel is chosen once at import through CONVEXHEDGE_BACKEND, so the
orchestrator runs the workload twice in child processes, one per
backend, and prints a side-by-side table. Two workloads: dense random
LPs that isolate the simplex pivot loop, and full certification runs
that show what the difference is worth end to end.

Usage:
    python3 benchmarks/benchmark_backends.py [--repeats N] [--seeds N]
"""

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np

TESTS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                         os.pardir, "tests")


@dataclass
class Timing:
    label: str
    seconds: float
    runs: int


def random_lp(rng, m, n):
    # feasible by construction: slack around a random interior point
    x0 = rng.rand(n)
    A = rng.randn(m, n)
    b = A @ x0 + rng.rand(m) + 0.1
    c = rng.rand(n) + 0.1
    return c, A, b


def bench_dense_lps(repeats):
    from convexhedge.lp import make_lp, solve_lp
    timings = []
    for m, n in ((30, 60), (60, 120), (100, 200)):
        rng = np.random.RandomState(1234 + m)
        problems = []
        for _ in range(repeats):
            c, A, b = random_lp(rng, m, n)
            rows = [(A[i], "<=", b[i]) for i in range(m)]
            problems.append(make_lp(c, rows=rows))
        t0 = time.perf_counter()
        for lp in problems:
            sol = solve_lp(lp)
            assert sol.status == "optimal"
        timings.append(Timing(label=f"lp {m}x{n}",
                              seconds=time.perf_counter() - t0,
                              runs=repeats))
    return timings


def bench_certification(seeds):
    sys.path.insert(0, TESTS_DIR)
    import gen
    from convexhedge.hedge import solve_dynamic
    instances = [gen.make_instance(40_000 + i) for i in range(seeds)]
    t0 = time.perf_counter()
    runs = 0
    for inst in instances:
        rng = np.random.RandomState(inst.seed + 7)
        for _, rm in gen.risk_suite(rng, inst.p.probabilities):
            solve_dynamic(inst.tree, inst.p, inst.claim, inst.budget, rm,
                          polytope=inst.polytope)
            runs += 1
    return [Timing(label="certify+hedge", seconds=time.perf_counter() - t0,
                   runs=runs)]


def run_worker(args):
    import convexhedge
    timings = bench_dense_lps(args.repeats) + bench_certification(args.seeds)
    print(json.dumps({"backend": convexhedge.BACKEND,
                      "timings": [t.__dict__ for t in timings]}))
    return 0


def run_orchestrator(args):
    results = {}
    for backend in ("python", "compiled"):
        env = dict(os.environ, CONVEXHEDGE_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--repeats", str(args.repeats), "--seeds", str(args.seeds)],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            print(f"{backend} worker failed; is the extension built?")
            return 1
        doc = json.loads(proc.stdout.strip().splitlines()[-1])
        assert doc["backend"] == backend
        results[backend] = {t["label"]: t for t in doc["timings"]}

    print(f"{'workload':<16} {'runs':>5} {'python':>10} {'compiled':>10} "
          f"{'speedup':>8}")
    for label, py in results["python"].items():
        co = results["compiled"][label]
        ratio = py["seconds"] / co["seconds"] if co["seconds"] > 0 else \
            float("inf")
        print(f"{label:<16} {py['runs']:>5} {py['seconds']:>9.3f}s "
              f"{co['seconds']:>9.3f}s {ratio:>7.2f}x")
    return 0


def main():
    parser = argparse.ArgumentParser(
        description="bench the simplex pivot backends")
    parser.add_argument("--repeats", type=int, default=40,
                        help="dense LPs per size")
    parser.add_argument("--seeds", type=int, default=30,
                        help="markets for the certification workload")
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        return run_worker(args)
    return run_orchestrator(args)


if __name__ == "__main__":
    sys.exit(main())
