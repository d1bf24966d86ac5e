"""Time the compiled trial kernel against the pure-Python loops.

    python benchmarks/bench_backends.py [--trials N] [--repeat R]

Both backends run the same trials; the script checks that their outputs are
identical before reporting throughput.
"""

import argparse
import time

import numpy as np

from privsprt import _backend
from privsprt.models import HypothesisPair
from privsprt.sequential_private import PrivTestConfig
from privsprt.simulation import run_batch
from privsprt.sprt import SprtThresholds

CASES = {
    "sprt gaussian(0,1) a=b=log19": (HypothesisPair.gaussian_mean(0.0, 1.0),
                                     PrivTestConfig.non_private(SprtThresholds(np.log(19), np.log(19)))),
    "privsprt bernoulli(.7,.2) A=.5 eps'=1 a=b=43": (HypothesisPair.bernoulli(0.7, 0.2),
                                                     PrivTestConfig.gaussian(SprtThresholds(43, 43), 0.5, 1.0, 1e-5)),
    "laplace bernoulli(.7,.2) A=.5 eps=1 a=b=20": (HypothesisPair.bernoulli(0.7, 0.2),
                                                   PrivTestConfig.laplace(SprtThresholds(20, 20), 0.5, 1.0)),
}


def best_time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = sorted(_backend.AVAILABLE)
    print(f"backends available: {backends}; trials per case: {args.trials}")
    print(f"{'case':48s} {'backend':>9s} {'seconds':>9s} {'steps/s':>12s} {'speedup':>8s}")
    for name, (pair, cfg) in CASES.items():
        results = {}
        for be in backends:
            secs, batch = best_time(lambda: run_batch(pair, cfg, 0, args.trials, seed=1, backend=be), args.repeat)
            results[be] = (secs, batch)
        base = results["python"][0]
        ref = results["python"][1]
        for be, (secs, batch) in results.items():
            same = all(np.array_equal(getattr(batch, f), getattr(ref, f))
                       for f in ("decisions", "stops", "llr_sums", "stats"))
            if not same:
                raise SystemExit(f"{be} output differs from python on {name!r}")
            steps = int(batch.stops.sum())
            print(f"{name:48s} {be:>9s} {secs:9.3f} {steps / secs:12.3e} {base / secs:7.1f}x")
    print("outputs identical across backends")


if __name__ == "__main__":
    main()
