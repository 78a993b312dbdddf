"""Compare the compiled kernels with the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from qubitid._backend import compiled_kernels, python_kernels
from qubitid.experiments import REFERENCE_BOX, REFERENCE_TIMES as T


def cases(kernels, thetas, P):
    def forward():
        for th in thetas:
            kernels.forward_finite(*th, T.t1, T.tau2, T.t3, 1e5)

    def estimate():
        kernels.estimate_batch(P, T.t1, T.tau2, T.t3, 0)

    return {"forward_finite x100": forward, "estimate_batch x1000": estimate}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    thetas = REFERENCE_BOX.sample(rng, 100)
    p0 = python_kernels.forward_ideal(0.002, 0.015, 0.003, 2.0, T.t1, T.tau2, T.t3)
    P = np.clip(p0 + rng.normal(0, 1e-4, size=(1000, 4)), 1e-6, 1 - 1e-6)

    backends = {"python": python_kernels}
    if compiled_kernels is not None:
        backends["cython"] = compiled_kernels
    else:
        print("compiled extension not built; timing the fallback only")

    results = {}
    for name, kern in backends.items():
        for case, fn in cases(kern, thetas, P).items():
            results[name, case] = min(timeit.repeat(fn, number=1, repeat=args.repeat))

    print(f"{'case':24s} {'backend':8s} {'seconds':>10s} {'speedup':>8s}")
    for (name, case), t in sorted(results.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        base = results["python", case]
        print(f"{case:24s} {name:8s} {t:10.4f} {base / t:8.1f}")


if __name__ == "__main__":
    main()
