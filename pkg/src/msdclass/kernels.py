"""Hot numeric kernels, each in a compiled and a pure-numpy flavour.

``smo_solve`` and ``chi_half_shape`` dispatch to the numba version unless
``MSDCLASS_DISABLE_NUMBA`` is set. Both flavours are importable directly
so they can be cross-checked and benchmarked against each other.

The two SMO implementations perform the same floating-point operations in
the same order, so they return bit-identical multipliers. The Chi solvers
use different digamma/trigamma implementations (series expansion versus
``scipy.special``) and agree to roughly 1e-12.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from msdclass._accel import USE_NUMBA, njit

TAU = 1e-12

SMO_CONVERGED = 0
SMO_STALLED = 1
SMO_MAX_ITER = 2


# ---------------------------------------------------------------------------
# SMO dual solver
#
#   min_a  0.5 a^T Q a - sum(a)   s.t.  0 <= a_i <= ub_i,  y^T a = 0,
#   Q_ij = y_i y_j K_ij.
# Working pairs are picked by maximal violation with second-order gain.
# ---------------------------------------------------------------------------

@njit
def smo_solve_numba(K, y, ub, tol, stall_limit, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    best_gap = np.inf
    since_best = 0
    status = SMO_MAX_ITER
    it = 0
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < ub[t]) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        if i < 0:
            status = SMO_CONVERGED
            break
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        kii = K[i, i]
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < ub[t]):
                yg = y[t] * grad[t]
                if yg > gmax2:
                    gmax2 = yg
                b = gmax + yg
                if b > 0:
                    a = kii + K[t, t] - 2.0 * K[i, t]
                    if a <= 0:
                        a = TAU
                    obj = -(b * b) / a
                    if obj < obj_min:
                        obj_min = obj
                        j = t
        gap = gmax + gmax2
        if gap < tol or j < 0:
            status = SMO_CONVERGED
            break
        if gap < best_gap:
            best_gap = gap
            since_best = 0
        else:
            since_best += 1
            if since_best > stall_limit:
                status = SMO_STALLED
                break

        old_i = alpha[i]
        old_j = alpha[j]
        ci = ub[i]
        cj = ub[j]
        quad = kii + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            ai = old_i + delta
            aj = old_j + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > ci - cj:
                if ai > ci:
                    ai = ci
                    aj = ci - diff
            else:
                if aj > cj:
                    aj = cj
                    ai = cj + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            ai = old_i - delta
            aj = old_j + delta
            if total > ci:
                if ai > ci:
                    ai = ci
                    aj = total - ci
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > cj:
                if aj > cj:
                    aj = cj
                    ai = total - cj
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        dai = ai - old_i
        daj = aj - old_j
        for t in range(n):
            grad[t] += (y[i] * y[t] * K[i, t]) * dai + (y[j] * y[t] * K[j, t]) * daj
        it += 1
    return alpha, grad, it, status


def smo_solve_numpy(K, y, ub, tol, stall_limit, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    pos = y > 0
    neg = ~pos
    best_gap = np.inf
    since_best = 0
    status = SMO_MAX_ITER
    it = 0
    while it < max_iter:
        up = (pos & (alpha < ub)) | (neg & (alpha > 0))
        if not up.any():
            status = SMO_CONVERGED
            break
        i = int(np.argmax(np.where(up, -y * grad, -np.inf)))
        gmax = -y[i] * grad[i]
        low = (pos & (alpha > 0)) | (neg & (alpha < ub))
        yg = y * grad
        gmax2 = yg[low].max() if low.any() else -np.inf
        b = gmax + yg
        cand = low & (b > 0)
        j = -1
        if cand.any():
            a = diag[i] + diag - 2.0 * K[i]
            a = np.where(a <= 0, TAU, a)
            obj = np.where(cand, -(b * b) / a, np.inf)
            j = int(np.argmin(obj))
        gap = gmax + gmax2
        if gap < tol or j < 0:
            status = SMO_CONVERGED
            break
        if gap < best_gap:
            best_gap = gap
            since_best = 0
        else:
            since_best += 1
            if since_best > stall_limit:
                status = SMO_STALLED
                break
        ai, aj = _pair_update(alpha[i], alpha[j], ub[i], ub[j], y[i] != y[j],
                              grad[i], grad[j], diag[i] + diag[j] - 2.0 * K[i, j])
        dai = ai - alpha[i]
        daj = aj - alpha[j]
        alpha[i] = ai
        alpha[j] = aj
        grad += (y[i] * y * K[i]) * dai + (y[j] * y * K[j]) * daj
        it += 1
    return alpha, grad, it, status


def _pair_update(old_i, old_j, ci, cj, opposite, gi, gj, quad):
    # same clipping rules as the compiled loop, kept scalar
    if quad <= 0:
        quad = TAU
    if opposite:
        delta = (-gi - gj) / quad
        diff = old_i - old_j
        ai = old_i + delta
        aj = old_j + delta
        if diff > 0:
            if aj < 0:
                aj, ai = 0.0, diff
        elif ai < 0:
            ai, aj = 0.0, -diff
        if diff > ci - cj:
            if ai > ci:
                ai, aj = ci, ci - diff
        elif aj > cj:
            aj, ai = cj, cj + diff
    else:
        delta = (gi - gj) / quad
        total = old_i + old_j
        ai = old_i - delta
        aj = old_j + delta
        if total > ci:
            if ai > ci:
                ai, aj = ci, total - ci
        elif aj < 0:
            aj, ai = 0.0, total
        if total > cj:
            if aj > cj:
                aj, ai = cj, total - cj
        elif ai < 0:
            ai, aj = 0.0, total
    return float(ai), float(aj)


def smo_solve(K, y, ub, tol=1e-3, stall_limit=None, max_iter=10_000_000):
    """Solve the soft-margin SVM dual.

    Parameters
    ----------
    K : (n, n) kernel matrix
    y : (n,) labels in {-1, +1}
    ub : (n,) per-sample upper bounds on the multipliers (C times class weight)
    tol : stop once the maximal KKT violation pair gap drops below ``tol``
    stall_limit : iterations without a new best gap before giving up;
        defaults to 200 passes over the data

    Returns ``(alpha, grad, iterations, status)`` where ``grad = Q alpha - 1``.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    ub = np.ascontiguousarray(ub, dtype=np.float64)
    n = y.shape[0]
    if stall_limit is None:
        stall_limit = 200 * n
    solver = smo_solve_numba if USE_NUMBA else smo_solve_numpy
    alpha, grad, it, status = solver(K, y, ub, float(tol), int(stall_limit), int(max_iter))
    return alpha, grad, int(it), int(status)


def smo_bias(alpha, grad, y, ub):
    """Offset ``b`` of ``f(x) = sum a_i y_i K(x_i, x) + b``.

    Averages ``-y_i grad_i`` over free multipliers; with none free, takes the
    midpoint of the feasible interval implied by the bounded ones.
    """
    yg = y * grad
    at_ub = alpha >= ub
    at_lb = alpha <= 0
    free = ~(at_ub | at_lb)
    if free.any():
        rho = yg[free].mean()
    else:
        upper = (at_ub & (y < 0)) | (at_lb & (y > 0))
        lower = (at_ub & (y > 0)) | (at_lb & (y < 0))
        hi = yg[upper].min() if upper.any() else np.inf
        lo = yg[lower].max() if lower.any() else -np.inf
        if np.isinf(hi) and np.isinf(lo):
            rho = 0.0
        elif np.isinf(hi):
            rho = lo
        elif np.isinf(lo):
            rho = hi
        else:
            rho = 0.5 * (hi + lo)
    return -float(rho)


# ---------------------------------------------------------------------------
# Chi shape solver
#
# With the scale profiled out, the Chi(k) likelihood in u = k/2 reduces to
#   log(u) - digamma(u) = c,   c = log(mean(x^2)) - 2 mean(log x) >= 0,
# whose left side decreases monotonically from +inf to 0.
# ---------------------------------------------------------------------------

@njit
def _digamma(x):
    r = 0.0
    while x < 10.0:
        r -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    t = f * (-1.0 / 12 + f * (1.0 / 120 + f * (-1.0 / 252 + f * (1.0 / 240 + f * (-1.0 / 132)))))
    return r + math.log(x) - 0.5 / x + t


@njit
def _trigamma(x):
    r = 0.0
    while x < 10.0:
        r += 1.0 / (x * x)
        x += 1.0
    f = 1.0 / (x * x)
    t = 1.0 / x + 0.5 * f + f / x * (1.0 / 6 + f * (-1.0 / 30 + f * (1.0 / 42 + f * (-1.0 / 30))))
    return r + t


@njit
def _log_moment_start(c):
    # closed-form approximation to the root; exact as c -> 0 and c -> inf
    return (3.0 - c + math.sqrt((c - 3.0) ** 2 + 24.0 * c)) / (12.0 * c)


@njit
def chi_half_shape_numba(c, u_min, u_max, tol, max_iter):
    out = np.empty(c.shape[0])
    g_lo = math.log(u_min) - _digamma(u_min)
    g_hi = math.log(u_max) - _digamma(u_max)
    for m in range(c.shape[0]):
        cm = c[m]
        if cm >= g_lo:
            out[m] = u_min
            continue
        if cm <= g_hi:
            out[m] = u_max
            continue
        a = u_min
        b = u_max
        u = _log_moment_start(cm)
        if not (a < u < b):
            u = 0.5 * (a + b)
        for _ in range(max_iter):
            h = math.log(u) - _digamma(u) - cm
            if h > 0:
                a = u
            else:
                b = u
            dh = 1.0 / u - _trigamma(u)
            un = u - h / dh
            if not (a < un < b):
                un = 0.5 * (a + b)
            if abs(un - u) <= tol:
                u = un
                break
            u = un
        out[m] = u
    return out


def chi_half_shape_numpy(c, u_min, u_max, tol, max_iter):
    c = np.asarray(c, dtype=np.float64)
    g_lo = math.log(u_min) - special.digamma(u_min)
    g_hi = math.log(u_max) - special.digamma(u_max)
    out = np.empty_like(c)
    low = c >= g_lo
    high = (c <= g_hi) & ~low
    out[low] = u_min
    out[high] = u_max
    idx = np.flatnonzero(~(low | high))
    if idx.size == 0:
        return out
    cm = c[idx]
    a = np.full(cm.shape, u_min)
    b = np.full(cm.shape, u_max)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (3.0 - cm + np.sqrt((cm - 3.0) ** 2 + 24.0 * cm)) / (12.0 * cm)
    u = np.where((a < u) & (u < b), u, 0.5 * (a + b))
    active = np.ones(cm.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        ua = u[active]
        h = np.log(ua) - special.digamma(ua) - cm[active]
        aa = np.where(h > 0, ua, a[active])
        bb = np.where(h > 0, b[active], ua)
        dh = 1.0 / ua - special.polygamma(1, ua)
        un = ua - h / dh
        un = np.where((aa < un) & (un < bb), un, 0.5 * (aa + bb))
        done = np.abs(un - ua) <= tol
        a[active] = aa
        b[active] = bb
        u[active] = un
        act_idx = np.flatnonzero(active)
        active[act_idx[done]] = False
    out[idx] = u
    return out


def chi_half_shape(c, u_min, u_max, tol, max_iter):
    """Solve ``log(u) - digamma(u) = c`` elementwise on ``[u_min, u_max]``."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    if USE_NUMBA:
        return chi_half_shape_numba(c, float(u_min), float(u_max), float(tol), int(max_iter))
    return chi_half_shape_numpy(c, float(u_min), float(u_max), float(tol), int(max_iter))
