"""Brute-force reference solver for the soft-margin SVM dual.

Minimises 0.5 a'Qa - 1'a with Q = yy' * K over {y'a = 0, 0 <= a <= ub}
by plain projected gradient with step 1/L. The projection onto the
feasible set is exact: the multiplier of y'a = 0 is located between
sorted kinks and interpolated linearly.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _constraint_sum(v, y, ub, lam):
    s = 0.0
    for i in range(v.shape[0]):
        s += y[i] * min(max(v[i] - lam * y[i], 0.0), ub[i])
    return s


@njit(cache=True)
def _project(v, y, ub):
    # a(lam) = clip(v - lam*y, 0, ub); y'a(lam) is piecewise linear and
    # non-increasing in lam with kinks where a component meets a bound
    n = v.shape[0]
    kinks = np.empty(2 * n)
    for i in range(n):
        kinks[2 * i] = v[i] * y[i]
        kinks[2 * i + 1] = (v[i] - ub[i]) * y[i]
    kinks.sort()
    lo, hi = 0, 2 * n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _constraint_sum(v, y, ub, kinks[mid]) > 0:
            lo = mid
        else:
            hi = mid
    s_lo = _constraint_sum(v, y, ub, kinks[lo])
    s_hi = _constraint_sum(v, y, ub, kinks[hi])
    lam = kinks[lo]
    if s_lo > 0 and s_lo != s_hi:
        lam = kinks[lo] + s_lo * (kinks[hi] - kinks[lo]) / (s_lo - s_hi)
    a = np.empty(n)
    for i in range(n):
        a[i] = min(max(v[i] - lam * y[i], 0.0), ub[i])
    return a


@njit(cache=True)
def projected_gradient(Q, y, ub, iterations):
    n = y.shape[0]
    step = 1.0 / max(np.linalg.eigvalsh(Q)[-1], 1e-12)
    a = np.zeros(n)
    v = np.empty(n)
    for _ in range(iterations):
        for i in range(n):
            g = -1.0
            for j in range(n):
                g += Q[i, j] * a[j]
            v[i] = a[i] - step * g
        a = _project(v, y, ub)
    return a


def solve(K, y, ub, iterations=1_000_000):
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    Q = y[:, None] * y[None, :] * K
    return projected_gradient(Q, y, np.ascontiguousarray(ub, dtype=np.float64), iterations)


def dual_value(alpha, y, K):
    """Maximisation form: sum(a) - 0.5 (a*y)' K (a*y)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def kkt_residuals(alpha, decision, y, ub):
    """Per-point violation of the KKT conditions given training decision values."""
    margin = y * decision
    at_lb = alpha <= 0
    at_ub = alpha >= ub
    free = ~(at_lb | at_ub)
    r = np.zeros_like(margin)
    r[at_lb] = np.maximum(0.0, 1.0 - margin[at_lb])
    r[at_ub] = np.maximum(0.0, margin[at_ub] - 1.0)
    r[free] = np.abs(margin[free] - 1.0)
    return r
