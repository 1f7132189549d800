"""Compare the compiled and numpy kernel backends.

Micro benchmarks call both backends in-process via get_backend; the macro
benchmark times a full stage-2 solve in a subprocess per backend, because
the backend is fixed at import time.

Run: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from scoutgame._kernels import BACKEND, get_backend


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def micro_cases(rng):
    delta = rng.uniform(-3.0, 3.0, size=200_000)
    x1 = rng.dirichlet(np.ones(3))
    x2 = rng.dirichlet(np.ones(3))
    beta = np.array([3.0, 2.0, 2.0])
    b_rows = np.array([[3.0, 2.0, 2.0], [2.0, 3.0, 2.0], [2.0, 2.0, 3.0]])
    x2_stack = rng.dirichlet(np.ones(3), size=3)
    pairs1 = rng.dirichlet(np.ones(3), size=50_000)
    pairs2 = rng.dirichlet(np.ones(3), size=50_000)
    return [
        ("zeta_values (200k)", lambda mod: mod.zeta_values(delta, 10.0)),
        ("attacker_terms x10k", lambda mod: [mod.attacker_terms(x1, x2, beta, 10.0) for _ in range(10_000)]),
        ("attacker_terms_batch (3 worlds) x10k", lambda mod: [mod.attacker_terms_batch(x1, x2_stack, b_rows, 10.0) for _ in range(10_000)]),
        ("attacker_values_pairs (50k)", lambda mod: mod.attacker_values_pairs(pairs1, pairs2, beta, 10.0)),
    ]


MACRO_SNIPPET = """
import time
import numpy as np
from scoutgame._kernels import BACKEND
from scoutgame.solver import solve_stage2
from scoutgame.towerdefense import build_game, default_params

spec = build_game(default_params())
r = np.array([0.5, 0.3, 0.2])
solve_stage2(spec, r)  # warm up
best = float("inf")
for _ in range(3):
    t0 = time.perf_counter()
    solve_stage2(spec, r)
    best = min(best, time.perf_counter() - t0)
print(f"{BACKEND} {best:.6f}")
"""


def run_macro(pure_python):
    env = dict(os.environ, SCOUTGAME_PURE_PYTHON="1" if pure_python else "0")
    out = subprocess.run(
        [sys.executable, "-c", MACRO_SNIPPET], env=env, capture_output=True, text=True, check=True
    )
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    try:
        compiled = get_backend("cython")
    except (ImportError, ValueError):
        print("compiled backend not available; build the extension first")
        return 1
    numpy_mod = get_backend("numpy")
    print(f"default backend at import: {BACKEND}\n")

    rng = np.random.default_rng(0)
    width = max(len(name) for name, _ in micro_cases(rng))
    print(f"{'micro kernel':<{width}}  {'cython':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, call in micro_cases(rng):
        t_c = best_of(lambda: call(compiled), args.repeats)
        t_n = best_of(lambda: call(numpy_mod), args.repeats)
        print(f"{name:<{width}}  {t_c * 1e3:>8.2f}ms  {t_n * 1e3:>8.2f}ms  {t_n / t_c:>7.1f}x")

    print("\nmacro: full stage-2 solve (default game, r = [0.5, 0.3, 0.2])")
    backend_c, t_c = run_macro(pure_python=False)
    backend_n, t_n = run_macro(pure_python=True)
    print(f"{backend_c:<8} {t_c * 1e3:8.1f}ms")
    print(f"{backend_n:<8} {t_n * 1e3:8.1f}ms   ({t_n / t_c:.2f}x)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
