#!/usr/bin/env python3
"""Time the compiled edit-lattice kernels against the pure-Python fallback.

Run from the repository root after an editable install:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --pairs 5000 --repeats 7

Both backends follow the same operation order, so while timing we also
check that their aggregated outputs agree.
"""

import argparse
import random
import time

import numpy as np

from wordrec._kernels import _pykernels

try:
    from wordrec._kernels import _ckernels
except ImportError:
    _ckernels = None


def make_workload(n_pairs, n_syms, max_len, seed):
    rng = random.Random(seed)
    w = np.random.default_rng(seed).random((n_syms + 1, n_syms + 1)) + 1e-3
    w[0, 0] = 0.0
    logw = np.full_like(w, _pykernels.NEG_INF)
    np.log(w, out=logw, where=w > 0)
    pairs = []
    for _ in range(n_pairs):
        a = [rng.randrange(1, n_syms + 1) for _ in range(rng.randrange(2, max_len + 1))]
        b = [rng.randrange(1, n_syms + 1) for _ in range(rng.randrange(2, max_len + 1))]
        pairs.append((a, b))
    return np.ascontiguousarray(logw), pairs


def run_kernel(impl, name, logw, pairs):
    if name == "levenshtein":
        return sum(impl.levenshtein(a, b) for a, b in pairs)
    if name == "lattice_logsum":
        return sum(impl.lattice_logsum(logw, a, b) for a, b in pairs)
    if name == "lattice_best":
        return sum(impl.lattice_best(logw, a, b) for a, b in pairs)
    counts = np.zeros_like(logw)
    total = 0.0
    for a, b in pairs:
        total += impl.em_accumulate(logw, a, b, counts)
    return total + counts.sum()


def best_time(impl, name, logw, pairs, repeats):
    times, check = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        check = run_kernel(impl, name, logw, pairs)
        times.append(time.perf_counter() - t0)
    return min(times), check


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--symbols", type=int, default=10)
    ap.add_argument("--max-len", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()

    logw, pairs = make_workload(args.pairs, args.symbols, args.max_len, args.seed)
    kernels = ["levenshtein", "lattice_logsum", "lattice_best", "em_accumulate"]

    print(f"{args.pairs} string pairs, {args.symbols} symbols, "
          f"lengths 2..{args.max_len}, best of {args.repeats}")
    if _ckernels is None:
        print("compiled backend unavailable; timing the pure-Python kernels only")
    header = f"{'kernel':<16} {'python':>12} {'cython':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name in kernels:
        t_py, check_py = best_time(_pykernels, name, logw, pairs, args.repeats)
        if _ckernels is None:
            print(f"{name:<16} {t_py * 1e3:>10.1f}ms {'-':>12} {'-':>9}")
            continue
        t_cy, check_cy = best_time(_ckernels, name, logw, pairs, args.repeats)
        if not np.isclose(check_py, check_cy, rtol=0, atol=1e-9):
            raise SystemExit(f"{name}: backends disagree ({check_py!r} vs {check_cy!r})")
        print(f"{name:<16} {t_py * 1e3:>10.1f}ms {t_cy * 1e3:>10.1f}ms "
              f"{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
