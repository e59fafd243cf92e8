"""Central-difference derivatives used as fallbacks and as test oracles.

Step sizes follow the usual optimal-scaling rules for central differences:
eps^(1/3) per unit scale for first derivatives and eps^(1/4) for second or
nested derivatives, scaled by max(1, |coordinate|).
"""

from __future__ import annotations

import numpy as np

EPS = float(np.finfo(float).eps)
H_FIRST = EPS ** (1.0 / 3.0)
H_SECOND = EPS ** 0.25


def step_first(x):
    return H_FIRST * np.maximum(1.0, np.abs(x))

def step_second(x):
    return H_SECOND * np.maximum(1.0, np.abs(x))


def grad_x(f, x, h=None):
    """Gradient of scalar f(x) by central differences, shape (d,)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    hh = step_first(x) if h is None else np.full(d, h)
    g = np.empty(d)
    for a in range(d):
        xp, xm = x.copy(), x.copy()
        xp[a] += hh[a]
        xm[a] -= hh[a]
        g[a] = (f(xp) - f(xm)) / (2.0 * hh[a])
    return g


def jac_x(f, x, h=None):
    """Jacobian J[i, a] = d f_i / d x^a of vector-valued f(x)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    hh = step_first(x) if h is None else np.full(d, h)
    cols = []
    for a in range(d):
        xp, xm = x.copy(), x.copy()
        xp[a] += hh[a]
        xm[a] -= hh[a]
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * hh[a]))
    return np.stack(cols, axis=-1)


def hess_x(f, x, h=None):
    """Hessian H[a, b] of scalar f(x), symmetric by construction."""
    x = np.asarray(x, dtype=float)
    d = x.size
    hh = step_second(x) if h is None else np.full(d, h)
    out = np.empty((d, d))
    f0 = f(x)
    for a in range(d):
        xp, xm = x.copy(), x.copy()
        xp[a] += hh[a]
        xm[a] -= hh[a]
        out[a, a] = (f(xp) - 2.0 * f0 + f(xm)) / hh[a] ** 2
    for a in range(d):
        for b in range(a + 1, d):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[a, b]] += hh[[a, b]]
            xpm[a] += hh[a]
            xpm[b] -= hh[b]
            xmp[a] -= hh[a]
            xmp[b] += hh[b]
            xmm[[a, b]] -= hh[[a, b]]
            val = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * hh[a] * hh[b])
            out[a, b] = out[b, a] = val
    return out


def hess_vec_x(f, x, h=None):
    """Second x-derivatives of vector f: out[i, a, b] = d2 f_i / dx^a dx^b."""
    x = np.asarray(x, dtype=float)
    d = x.size
    hh = step_second(x) if h is None else np.full(d, h)
    f0 = np.asarray(f(x), dtype=float)
    out = np.empty(f0.shape + (d, d))
    for a in range(d):
        xp, xm = x.copy(), x.copy()
        xp[a] += hh[a]
        xm[a] -= hh[a]
        out[..., a, a] = (np.asarray(f(xp)) - 2.0 * f0 + np.asarray(f(xm))) / hh[a] ** 2
    for a in range(d):
        for b in range(a + 1, d):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[a, b]] += hh[[a, b]]
            xpm[a] += hh[a]
            xpm[b] -= hh[b]
            xmp[a] -= hh[a]
            xmp[b] += hh[b]
            xmm[[a, b]] -= hh[[a, b]]
            val = (np.asarray(f(xpp)) - np.asarray(f(xpm))
                   - np.asarray(f(xmp)) + np.asarray(f(xmm))) / (4.0 * hh[a] * hh[b])
            out[..., a, b] = out[..., b, a] = val
    return out


def d_s(f, s, h=None):
    """Derivative in the evolution parameter of f(s) (scalar or array valued)."""
    hh = float(step_first(np.asarray(s))) if h is None else h
    return (np.asarray(f(s + hh)) - np.asarray(f(s - hh))) / (2.0 * hh)


def d_ss(f, s, h=None):
    hh = float(step_second(np.asarray(s))) if h is None else h
    return (np.asarray(f(s + hh)) - 2.0 * np.asarray(f(s)) + np.asarray(f(s - hh))) / hh ** 2


def d_xs(f, x, s, h=None):
    """Mixed derivative out[..., a] = d2 f / dx^a ds for f(x, s)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    hx = step_second(x) if h is None else np.full(d, h)
    hs = float(step_second(np.asarray(s))) if h is None else h
    f0 = np.asarray(f(x, s), dtype=float)
    out = np.empty(f0.shape + (d,))
    for a in range(d):
        xp, xm = x.copy(), x.copy()
        xp[a] += hx[a]
        xm[a] -= hx[a]
        val = (np.asarray(f(xp, s + hs)) - np.asarray(f(xp, s - hs))
               - np.asarray(f(xm, s + hs)) + np.asarray(f(xm, s - hs))) / (4.0 * hx[a] * hs)
        out[..., a] = val
    return out


def fd_derivative_order4(y, h):
    """Fourth-order first derivative of uniformly sampled y, one-sided at ends."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 5:
        raise ValueError("need at least 5 samples for 4th-order differencing")
    dy = np.empty_like(y)
    dy[2:-2] = (y[:-4] - 8.0 * y[1:-3] + 8.0 * y[3:-1] - y[4:]) / (12.0 * h)
    dy[0] = (-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]) / (12.0 * h)
    dy[1] = (-3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]) / (12.0 * h)
    dy[-2] = (3.0 * y[-1] + 10.0 * y[-2] - 18.0 * y[-3] + 6.0 * y[-4] - y[-5]) / (12.0 * h)
    dy[-1] = (25.0 * y[-1] - 48.0 * y[-2] + 36.0 * y[-3] - 16.0 * y[-4] + 3.0 * y[-5]) / (12.0 * h)
    return dy
