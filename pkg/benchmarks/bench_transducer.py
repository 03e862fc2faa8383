#!/usr/bin/env python3
"""Benchmark the transducer DP kernels: numba loops vs numpy wavefront.

Times loss + gradient on random normalized lattices at several sizes and
prints a comparison table. Run from the repo root:

    python3 benchmarks/bench_transducer.py
    python3 benchmarks/bench_transducer.py --sizes 100x20 400x80 --repeats 5
"""

import argparse
import os
import time

import numpy as np

from ent import backend
from ent.numerics import SplitMix64, log_softmax
from ent.transducer import VocabLogProbLattice, transducer_grad, transducer_loss


def make_lattice(T: int, U: int, seed: int = 0) -> VocabLogProbLattice:
    rng = SplitMix64(seed)
    logits = rng.uniform_array((T, U + 1, 5), -2.0, 2.0)
    lsm = log_softmax(logits)
    token_lp = np.empty((T, U))
    for u in range(U):
        token_lp[:, u] = lsm[:, u, 1 + (u % 4)]
    return VocabLogProbLattice(blank_lp=lsm[:, :, 0], token_lp=token_lp)


def time_backend(name: str, lattice, repeats: int) -> float:
    os.environ[backend.ENV_VAR] = name
    loss, post = transducer_loss(lattice)  # warm-up (JIT compile for numba)
    transducer_grad(lattice, post)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        loss, post = transducer_loss(lattice)
        transducer_grad(lattice, post)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", nargs="*", default=["50x10", "200x40", "500x100"],
                        help="lattice sizes as TxU")
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    names = ["numpy"] + (["numba"] if backend.HAVE_NUMBA else [])
    print(f"{'size':>10}  " + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for size in args.sizes:
        T, U = (int(x) for x in size.split("x"))
        lattice = make_lattice(T, U)
        times = {n: time_backend(n, lattice, args.repeats) for n in names}
        speedup = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        row = f"{size:>10}  " + "".join(f"{times[n] * 1e3:>10.3f}ms" for n in names)
        print(row + f"{speedup:>9.1f}x")
    os.environ.pop(backend.ENV_VAR, None)

    # agreement check between the two paths
    if backend.HAVE_NUMBA:
        lattice = make_lattice(60, 12, seed=9)
        os.environ[backend.ENV_VAR] = "numpy"
        loss_np, _ = transducer_loss(lattice)
        os.environ[backend.ENV_VAR] = "numba"
        loss_nb, _ = transducer_loss(lattice)
        os.environ.pop(backend.ENV_VAR, None)
        print(f"\nbackend agreement: |numpy - numba| = {abs(loss_np - loss_nb):.3e}")


if __name__ == "__main__":
    main()
