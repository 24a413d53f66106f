"""Compiled vs pure-Python click resolution.

    python3 benchmarks/bench_kernels.py [--frames 1000000] [--repeat 5]

Times ``resolve_clicks`` on synthetic per-frame candidates at a few click densities,
with afterpulsing off and on, and a full chunked simulation per backend.  Outputs of
the two backends are compared before timing.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from ppmqkd.channel_model import SourceParams
from ppmqkd.frame import DetectorModel, FrameConfig
from ppmqkd.ppm_sim import BACKEND, SimSetup, simulate
from ppmqkd.ppm_sim import kernels


def candidates(n: int, N: int, density: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    pk = np.where(rng.random(n) < density, rng.integers(0, N, n), N).astype(np.int16)
    pf = np.where(rng.random(n) < density, rng.integers(0, N, n), N).astype(np.int16)
    return (pk, pf, rng.random(n), rng.random(n), rng.geometric(1 / 12.6, n),
            rng.geometric(1 / 12.6, n))


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--N", type=int, default=8)
    args = ap.parse_args(argv)
    if BACKEND != "cython":
        print("compiled kernels are not built; only the Python fallback is available")
        return 1

    print(f"resolve_clicks, {args.frames:,} frames, N={args.N} (best of {args.repeat})")
    print(f"{'density':>8} {'p_ap':>5} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for density in (0.01, 0.05, 0.3):
        for p_ap in (0.0, 0.05):
            cand = candidates(args.frames, args.N, density)
            py = kernels.resolve_clicks(*cand, args.N, p_ap, backend="python")
            cy = kernels.resolve_clicks(*cand, args.N, p_ap, backend="cython")
            assert all(np.array_equal(a, b) for a, b in zip(py, cy)), "backends disagree"
            t_py = best_of(lambda: kernels.resolve_clicks(*cand, args.N, p_ap, backend="python"),
                           args.repeat)
            t_cy = best_of(lambda: kernels.resolve_clicks(*cand, args.N, p_ap, backend="cython"),
                           args.repeat)
            print(f"{density:>8.2f} {p_ap:>5.2f} {t_py:>10.4f} {t_cy:>10.4f} {t_py / t_cy:>7.1f}x")

    setup = SimSetup(FrameConfig(N=args.N), SourceParams(), DetectorModel(afterpulse_prob=0.05),
                     eta_channel=1.0)
    print(f"\nfull simulation, {args.frames:,} frames, afterpulse 5% (best of {args.repeat})")
    times = {}
    for backend in ("python", "cython"):
        times[backend] = best_of(lambda: simulate(setup, 1, args.frames, backend=backend),
                                 args.repeat)
        print(f"{backend:>8}: {times[backend]:.3f} s")
    print(f"speedup: {times['python'] / times['cython']:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
