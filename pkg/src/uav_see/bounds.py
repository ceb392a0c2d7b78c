"""Exact bound functions and their first-order surrogates used by every SCA
step, plus the finite-difference machinery that verifies curvature signs and
gradients numerically.

All functions accept scalars or numpy arrays (broadcasting); every exact
function requires strictly positive arguments and raises on domain
violations rather than clamping.  Surrogates are affine in their variables
and tight at the expansion point.
"""

from __future__ import annotations

import numpy as np


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if np.any(np.asarray(value) <= 0):
            raise ValueError(f"{name} must be strictly positive")


def _require_nonnegative(**kwargs):
    for name, value in kwargs.items():
        if np.any(np.asarray(value) < 0):
            raise ValueError(f"{name} must be nonnegative")


# -- concave pair behind the scheduling/uplink-power block ---------------------

def z1(x, y, a, b):
    """x*ln(1 + a*y/(y + b*x)); jointly concave on x, y > 0."""
    _require_positive(x=x, y=y, a=a, b=b)
    x, y = np.asarray(x, float), np.asarray(y, float)
    return x * np.log1p(a * y / (y + b * x))


def z2(x, y, c):
    """x*ln(1 + c*y/x); jointly concave on x, y > 0."""
    _require_positive(x=x, y=y, c=c)
    x, y = np.asarray(x, float), np.asarray(y, float)
    return x * np.log1p(c * y / x)


def f1_ub(x, y, x0, y0, c):
    """Tangent-plane over-estimator of z2 at (x0, y0); affine in (x, y)."""
    _require_positive(x0=x0, y0=y0, c=c)
    x, y = np.asarray(x, float), np.asarray(y, float)
    ratio = c * y0 / x0
    value0 = x0 * np.log1p(ratio)
    dx = np.log1p(ratio) - c * y0 / (x0 + c * y0)
    dy = c * x0 / (x0 + c * y0)
    return value0 + dx * (x - x0) + dy * (y - y0)


# -- log-of-linear-fractional (relay power block) ------------------------------

def f2(x, a, b, c, d):
    """ln(1 + (a*x+b)/(c*x+d)) on x >= 0; concave iff a*d >= b*c."""
    _require_nonnegative(x=x)
    _require_positive(a=a, b=b, c=c, d=d)
    x = np.asarray(x, float)
    return np.log1p((a * x + b) / (c * x + d))


def f2_lb(x, x0, a, b, c, d, require_concave=True):
    """Tangent of f2 at x0 (affine).

    Being a tangent, it over-estimates f2 globally wherever f2 is concave
    (a*d >= b*c, the regime the relay-power block relies on) and
    under-estimates it in the convex regime a*d < b*c; the sampling tests pin
    both directions.  The name follows the established interface.
    """
    _require_nonnegative(x=x, x0=x0)
    _require_positive(a=a, b=b, c=c, d=d)
    if require_concave and np.any(np.asarray(a) * d < np.asarray(b) * c):
        raise ValueError("concave contract requires a*d >= b*c")
    x = np.asarray(x, float)
    slope = (a * d - b * c) / ((c * x0 + d) * (b + d + (a + c) * x0))
    return f2(x0, a, b, c, d) + slope * (x - x0)


# -- linearized convex term of the jamming block -------------------------------

def f3(pb, pb0, big_h, big_i):
    """Affine under-estimator of ln(1 + H/(pb + I)) around pb0."""
    _require_nonnegative(pb=pb, pb0=pb0)
    _require_positive(big_h=big_h, big_i=big_i)
    pb = np.asarray(pb, float)
    slope = -big_h / ((pb0 + big_i) * (pb0 + big_h + big_i))
    return np.log1p(big_h / (pb0 + big_i)) + slope * (pb - pb0)


def f3_exact(pb, big_h, big_i):
    _require_nonnegative(pb=pb)
    _require_positive(big_h=big_h, big_i=big_i)
    return np.log1p(big_h / (np.asarray(pb, float) + big_i))


# -- convex family behind the trajectory block ---------------------------------

def f41(x, y, a, b):
    """ln(1 + 1/(a*x + b*y)); jointly convex on x, y > 0."""
    _require_positive(x=x, y=y, a=a, b=b)
    return np.log1p(1.0 / (a * np.asarray(x, float) + b * np.asarray(y, float)))


def grad_f41(x, y, a, b):
    _require_positive(x=x, y=y, a=a, b=b)
    s = a * np.asarray(x, float) + b * np.asarray(y, float)
    denom = s * (s + 1.0)
    return -a / denom, -b / denom


def f41_lb(x, y, x0, y0, a, b):
    """Tangent-plane under-estimator of f41 at (x0, y0)."""
    gx, gy = grad_f41(x0, y0, a, b)
    x, y = np.asarray(x, float), np.asarray(y, float)
    return f41(x0, y0, a, b) + gx * (x - x0) + gy * (y - y0)


def f42(x, y, c, d):
    """ln(1 + c/x + d/y); jointly convex on x, y > 0."""
    _require_positive(x=x, y=y, c=c, d=d)
    return np.log1p(c / np.asarray(x, float) + d / np.asarray(y, float))


def grad_f42(x, y, c, d):
    _require_positive(x=x, y=y, c=c, d=d)
    x, y = np.asarray(x, float), np.asarray(y, float)
    s = c * y + d * x + x * y
    return -c * y / (x * s), -d * x / (y * s)


def f42_lb(x, y, x0, y0, c, d):
    gx, gy = grad_f42(x0, y0, c, d)
    x, y = np.asarray(x, float), np.asarray(y, float)
    return f42(x0, y0, c, d) + gx * (x - x0) + gy * (y - y0)


def f43(x, p):
    """x^2*exp(p*x); convex on x > 0 for p >= 0."""
    _require_positive(x=x)
    _require_nonnegative(p=p)
    x = np.asarray(x, float)
    return x * x * np.exp(p * x)


def grad_f43(x, p):
    _require_positive(x=x)
    _require_nonnegative(p=p)
    x = np.asarray(x, float)
    return x * np.exp(p * x) * (p * x + 2.0)


def f43_lb(x, x0, p):
    x = np.asarray(x, float)
    return f43(x0, p) + grad_f43(x0, p) * (x - x0)


def f44(x, r):
    """ln(1 + r/x); convex decreasing on x > 0."""
    _require_positive(x=x, r=r)
    return np.log1p(r / np.asarray(x, float))


def grad_f44(x, r):
    _require_positive(x=x, r=r)
    x = np.asarray(x, float)
    return -r / (x * (x + r))


def f44_lb(x, x0, r):
    x = np.asarray(x, float)
    return f44(x0, r) + grad_f44(x0, r) * (x - x0)


# -- finite-difference self-verification ---------------------------------------
# Central differences.  Gradient step 1e-5*max(1, |x|); Hessian step
# 1e-4*max(1, |x|) because second differences amplify roundoff by 1/h^2
# (eps^(1/4) is the sweet spot), keeping the noise floor under the 1e-6
# eigenvalue tolerance.

def _step(x, scale=1e-5):
    return scale * max(1.0, abs(float(x)))


def fd_gradient(fn, point):
    """Central-difference gradient of fn(*point) w.r.t. each coordinate."""
    point = [float(p) for p in point]
    out = []
    for i, xi in enumerate(point):
        h = _step(xi)
        hi = list(point)
        lo = list(point)
        hi[i] = xi + h
        lo[i] = xi - h
        out.append((fn(*hi) - fn(*lo)) / (2.0 * h))
    return np.asarray(out)


def fd_hessian(fn, point):
    """Central-difference Hessian of a scalar function of len(point) variables."""
    point = [float(p) for p in point]
    n = len(point)
    hess = np.empty((n, n))
    f0 = fn(*point)
    steps = [_step(x, 1e-4) for x in point]
    for i in range(n):
        hi = list(point)
        lo = list(point)
        hi[i] += steps[i]
        lo[i] -= steps[i]
        hess[i, i] = (fn(*hi) - 2.0 * f0 + fn(*lo)) / steps[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            pp = list(point)
            pm = list(point)
            mp = list(point)
            mm = list(point)
            pp[i] += steps[i]; pp[j] += steps[j]
            pm[i] += steps[i]; pm[j] -= steps[j]
            mp[i] -= steps[i]; mp[j] += steps[j]
            mm[i] -= steps[i]; mm[j] -= steps[j]
            hess[i, j] = hess[j, i] = (
                fn(*pp) - fn(*pm) - fn(*mp) + fn(*mm)
            ) / (4.0 * steps[i] * steps[j])
    return hess
