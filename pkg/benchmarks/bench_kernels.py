"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--resolution 64] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from krflab import _kernels_py
from krflab import geometry_models as gm
from krflab.tensor_core import random_kahler_tensor

try:
    from krflab import _ckernels
except ImportError:
    _ckernels = None


def cases(N):
    h = 1.0 / N
    psi = gm.to_relative(gm.cosine_potential(N, 0.5 * gm.cosine_positivity_threshold(N)), 0.0)
    g, u = np.empty((N, N)), np.empty((N, N))
    window = np.ascontiguousarray(np.stack([np.full((N, N), 1.0 + 0.01 * k) for k in range(5)]))
    w = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12e-4
    rng = np.random.default_rng(0)
    Q = np.ascontiguousarray(random_kahler_tensor(rng, 3).entries)
    eta = rng.standard_normal((64, 3)) + 1j * rng.standard_normal((64, 3))
    eta /= np.linalg.norm(eta, axis=1)[:, None]
    return {
        "grid_velocity": lambda k: k.grid_velocity(psi, 0.1, h, 1.0),
        "grid_rk4_step": lambda k: k.grid_rk4_step(psi, 0.1, 1e-4, h, 1.0),
        "grid_fields": lambda k: k.grid_fields(psi, 0.1, h, 1.0, g, u),
        "grid_schwarz_extrema": lambda k: k.grid_schwarz_extrema(window, w, 2, u, h, 1.0),
        "hsc_ascent (64 starts, n=3)": lambda k: k.hsc_ascent(Q, eta.copy(), 100, 8.0, 1e-14),
    }


def best_time(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"N = {args.resolution}; times are best of {args.repeat}")
    print(f"{'kernel':30s}" + "".join(f"{name:>14s}" for name, _ in backends) + f"{'speedup':>10s}")
    for label, fn in cases(args.resolution).items():
        times = [best_time(lambda k=k: fn(k), args.repeat) for _, k in backends]
        speed = f"{times[0] / times[1]:9.1f}x" if len(times) > 1 else ""
        print(f"{label:30s}" + "".join(f"{t * 1e6:12.1f}us" for t in times) + f"{speed:>10s}")


if __name__ == "__main__":
    main()
