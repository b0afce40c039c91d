"""Compare the numba and pure-numpy kernels on representative problem sizes.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both paths are called directly, so the result does not depend on
MSDCLASS_DISABLE_NUMBA. Compilation happens in a warm-up call first.
"""

import argparse
from timeit import repeat

import numpy as np
from scipy import stats

from msdclass import kernels
from msdclass.dsp import _chi_statistic
from msdclass.svm import rbf_kernel


def smo_problem(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 10))
    y = np.where(X[:, 0] + 0.8 * rng.standard_normal(n) > 0, 1.0, -1.0)
    K = rbf_kernel(X, X, 0.1)
    return K, y, np.full(n, 10.0)


def chi_problem(n_series, seed=0):
    rng = np.random.default_rng(seed)
    x = stats.chi.rvs(2.0, size=(257, n_series), random_state=rng)
    return _chi_statistic(x, 1e-12)


def best_of(fn, number, repeats):
    return min(repeat(fn, number=number, repeat=repeats)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rows = []
    for n in (12, 48, 200):
        K, y, ub = smo_problem(n)
        call = (K, y, ub, 1e-3, 200 * n, 10_000_000)
        a_fast = kernels.smo_solve_numba(*call)[0]
        a_ref = kernels.smo_solve_numpy(*call)[0]
        assert np.array_equal(a_fast, a_ref)
        number = max(1, 2000 // n)
        rows.append((f"smo n={n}", best_of(lambda: kernels.smo_solve_numba(*call), number, args.repeat),
                     best_of(lambda: kernels.smo_solve_numpy(*call), max(1, number // 10), args.repeat)))

    for m in (97, 500, 3000):
        c = chi_problem(m)
        call = (c, 0.025, 50.0, 5e-7, 50)
        np.testing.assert_allclose(kernels.chi_half_shape_numba(*call), kernels.chi_half_shape_numpy(*call),
                                   rtol=1e-10)
        rows.append((f"chi shapes m={m}", best_of(lambda: kernels.chi_half_shape_numba(*call), 20, args.repeat),
                     best_of(lambda: kernels.chi_half_shape_numpy(*call), 20, args.repeat)))

    print(f"{'kernel':<18}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, fast, ref in rows:
        print(f"{name:<18}{fast * 1e3:>10.3f}ms{ref * 1e3:>10.3f}ms{ref / fast:>9.1f}x")


if __name__ == "__main__":
    main()
