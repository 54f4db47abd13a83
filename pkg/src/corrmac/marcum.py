"""
First-order Marcum Q function.

``Q1(a, b) = P(R > b)`` for a Rician envelope ``R`` with line-of-sight
amplitude ``a`` and unit per-dimension noise variance. Both tails are
evaluated with the Bessel series

    Q1(a, b)     = exp(-(a^2+b^2)/2) * sum_{k>=0} (a/b)^k I_k(ab),  b >= a
    1 - Q1(a, b) = exp(-(a^2+b^2)/2) * sum_{k>=1} (b/a)^k I_k(ab),  b <  a

so the smaller tail is always summed directly and never obtained by
cancellation. ``exp(-(a^2+b^2)/2) I_k(ab)`` is evaluated as
``exp(-(a-b)^2/2) * ive(k, ab)`` which keeps every quantity finite for large
arguments.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ive

__all__ = ["marcum_q1", "marcum_q1_cdf"]

_RTOL = 1e-12
_CHUNK = 64
_MAX_TERMS = 1_000_000


def _bessel_series(ratio: float, x: float, k0: int) -> float:
    """sum_{k>=k0} ratio^k ive(k, x) with ratio in [0, 1]."""
    if ratio == 0.0:
        return float(ive(0, x)) if k0 == 0 else 0.0
    log_ratio = math.log(ratio)
    total = 0.0
    k = k0
    while k < _MAX_TERMS:
        ks = np.arange(k, k + _CHUNK, dtype=float)
        terms = np.exp(ks * log_ratio) * ive(ks, x)
        total += float(terms.sum())
        # terms decrease monotonically in k, so the last one bounds the tail ratio
        last = float(terms[-1])
        if last <= _RTOL * total or last == 0.0:
            break
        k += _CHUNK
    return total


def _split(a: float, b: float) -> tuple[float, float]:
    """Return (Q1, 1 - Q1) computed without cancellation in the small tail."""
    if a < 0 or b < 0 or math.isnan(a) or math.isnan(b):
        raise ValueError(f"Marcum Q needs non-negative arguments, got a={a}, b={b}")
    if b == 0.0:
        return 1.0, 0.0
    if a == 0.0:
        q = math.exp(-0.5 * b * b)
        return q, -math.expm1(-0.5 * b * b)
    if math.isinf(a):
        return 1.0, 0.0
    if math.isinf(b):
        return 0.0, 1.0
    tilt = math.exp(-0.5 * (a - b) ** 2)
    x = a * b
    if b >= a:
        q = tilt * _bessel_series(a / b, x, 0)
        q = min(max(q, 0.0), 1.0)
        return q, 1.0 - q
    c = tilt * _bessel_series(b / a, x, 1)
    c = min(max(c, 0.0), 1.0)
    return 1.0 - c, c


def marcum_q1(a, b):
    """First-order Marcum Q function, vectorised over broadcastable inputs."""
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return _split(float(a), float(b))[0]
    aa, bb = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.empty(aa.shape)
    for idx in np.ndindex(aa.shape):
        out[idx] = _split(aa[idx], bb[idx])[0]
    return out


def marcum_q1_cdf(a, b):
    """``1 - Q1(a, b)``, accurate when it is tiny (``b`` well below ``a``)."""
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return _split(float(a), float(b))[1]
    aa, bb = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.empty(aa.shape)
    for idx in np.ndindex(aa.shape):
        out[idx] = _split(aa[idx], bb[idx])[1]
    return out
