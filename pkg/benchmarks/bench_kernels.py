"""Compiled kernels against the pure-Python fallback on the same workloads.

    python benchmarks/bench_kernels.py [--seeds 5]

Each workload replays one seeded simulation, so both kernel sets do identical
work; the script also checks they produce identical results.
"""

import argparse
import time

from hashgraph import kernels
from hashgraph.simnet import FairScheduler, RandomScheduler, SimConfig, Simulation, default_transactions


def workload(n, t, seed, steps):
    corrupted = range(n - t, n)
    cfg = SimConfig(n=n, corrupted=frozenset(corrupted), seed=seed, steps=steps,
                    tx_injection=default_transactions(n, seed, corrupted=corrupted))
    sim = Simulation(cfg, record_trace=False)
    scheduler = RandomScheduler(seed) if t else FairScheduler(seed)
    return sim.run(scheduler)


def timed(module, cases):
    kernels.select(module)
    start = time.perf_counter()
    results = [workload(*case) for case in cases]
    return time.perf_counter() - start, results


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5)
    args = parser.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    configs = [(4, 0, 1000), (7, 2, 600), (10, 3, 600)]
    print(f"{'workload':>18} {'python s':>9} {'compiled s':>10} {'speedup':>7}")
    for n, t, steps in configs:
        cases = [(n, t, seed, steps) for seed in range(args.seeds)]
        py_time, py_res = timed(kernels.python, cases)
        c_time, c_res = timed(kernels.compiled, cases)
        assert py_res == c_res, "kernel implementations disagree"
        print(f"{f'n={n} t={t} x{args.seeds}':>18} {py_time:9.2f} {c_time:10.2f} {py_time / c_time:7.2f}")


if __name__ == "__main__":
    main()
