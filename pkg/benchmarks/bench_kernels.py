"""Compare the compiled Verlet kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--samples N] [--steps K]``.
Both backends start from the same state; the script reports the time per
sample-step and the largest difference between their final states, which
should be exactly zero.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from geomflux._backend import get_kernels


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(kind: str, samples: int, steps: int, repeat: int = 3) -> dict:
    rng = np.random.default_rng(0)
    dof = 2
    r0 = rng.standard_normal((samples, dof))
    p0 = rng.standard_normal((samples, dof))
    center = np.array([0.1, -0.2])
    inv_mass = np.ones(dof)
    out = {}
    finals = {}
    for name in ("compiled", "python"):
        k = get_kernels(name)

        def once():
            r, p = r0.copy(), p0.copy()
            if kind == "quartic":
                k.advance_quartic(r, p, center, 0.05, inv_mass, 5e-4, steps)
            else:
                k.advance_harmonic(r, p, center, np.array([1.0, 1.69]), inv_mass, 1e-3, steps)
            finals[name] = (r, p)

        out[name] = _time(once, repeat) / (samples * steps) * 1e9
    (rc, pc), (rp, pp) = finals["compiled"], finals["python"]
    out["max_diff"] = float(max(np.max(np.abs(rc - rp)), np.max(np.abs(pc - pp))))
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--samples", type=int, default=4096)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        get_kernels("compiled")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<10}{'compiled ns':>14}{'python ns':>12}{'speedup':>10}{'max diff':>11}")
    for kind in ("quartic", "harmonic"):
        res = bench(kind, args.samples, args.steps, args.repeat)
        speed = res["python"] / res["compiled"]
        print(f"{kind:<10}{res['compiled']:>14.2f}{res['python']:>12.2f}{speed:>9.1f}x{res['max_diff']:>11.1e}")


if __name__ == "__main__":
    main()
