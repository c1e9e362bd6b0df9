"""Time the compiled kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is called on the
array sizes the solvers actually use and the best of several repeats is kept.
"""

import argparse
import timeit

import numpy as np

from kslab import _kernels_py

try:
    from kslab import _kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    n2 = rng.random(64 * 64)
    g2 = rng.standard_normal((2, 64 * 64))
    u2 = rng.standard_normal((2, 64 * 64))
    n3 = rng.random(48**3)
    g3 = rng.standard_normal((3, 48**3))
    u3 = rng.standard_normal((3, 48**3))
    cells = 200
    nr = rng.random(cells)
    wr = rng.standard_normal(cells - 1)
    lower, upper = rng.random(cells - 1), rng.random(cells - 1)
    diag = 3.0 + rng.random(cells)
    rhs = rng.standard_normal(cells)
    return {
        "chemotactic_flux 64^2": lambda k: k.chemotactic_flux(n2, g2, u2, 1.0, 0.8),
        "chemotactic_flux 48^3": lambda k: k.chemotactic_flux(n3, g3, u3, 1.0, 0.8),
        "radial_face_flux muscl 200": lambda k: k.radial_face_flux(nr, wr, True),
        "thomas 200": lambda k: k.thomas(lower, diag, upper, rhs),
    }


def best_time(fn, impl, repeat, number):
    return min(timeit.repeat(lambda: fn(impl), repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=20)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'python (us)':>14}{'compiled (us)':>16}{'speedup':>10}")
    for name, fn in cases(rng).items():
        py = best_time(fn, _kernels_py, args.repeat, args.number)
        if compiled is None:
            print(f"{name:<28}{py * 1e6:>14.1f}{'n/a':>16}{'n/a':>10}")
            continue
        cc = best_time(fn, compiled, args.repeat, args.number)
        print(f"{name:<28}{py * 1e6:>14.1f}{cc * 1e6:>16.1f}{py / cc:>9.2f}x")


if __name__ == "__main__":
    main()
