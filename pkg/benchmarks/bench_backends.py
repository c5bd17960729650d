"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_backends.py [--d 50] [--k 5] [--n 20000] [--repeats 3]

Prints one line per (algorithm, backend) with the best wall time and the
speedup of the compiled kernels.
"""

import argparse
import time

import numpy as np

from streampca import backend
from streampca.data_io import SyntheticSpec, synthetic_gaussian
from streampca.updates import LearningSchedule, batch_pca_oracle, init_state, stream

CASES = [
    ("implicit_krasulina", "gram", 0.3),
    ("implicit_krasulina", "pinv", 0.3),
    ("oja", "orthonormal", 0.3),
    ("krasulina", "orthonormal", 0.3),
]


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)

    Y = synthetic_gaussian(SyntheticSpec(args.d, args.n, tuple(np.linspace(5, 0.2, args.d)), 0)).Y
    backends = backend.available()
    print(f"d={args.d} k={args.k} n={args.n}  backends: {', '.join(backends)}")
    jobs = [(f"{algo} ({mode})", algo, mode, base) for algo, mode, base in CASES]
    jobs.append(("oracle (jacobi)", None, None, None))
    for label, algo, mode, base in jobs:
        times = {}
        for b in backends:
            with backend.use_backend(b):
                if algo is None:
                    fn = lambda: batch_pca_oracle(Y, args.k)
                else:
                    s0 = init_state(args.d, args.k, mode, np.random.default_rng(0))
                    eta0 = base * args.d if algo == "implicit_krasulina" else base
                    sched = LearningSchedule(eta0, 0.8 if algo == "implicit_krasulina" else 0.9)
                    fn = lambda: stream(s0, Y, algo, sched)
                times[b] = best_of(fn, args.repeats)
        line = "  ".join(f"{b} {t * 1e3:8.1f} ms" for b, t in times.items())
        if len(times) == 2:
            line += f"  speedup {times['python'] / times['compiled']:5.1f}x"
        print(f"{label:28s} {line}")


if __name__ == "__main__":
    main()
