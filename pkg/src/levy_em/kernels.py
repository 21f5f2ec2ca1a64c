"""Hot loops: batched Euler-Maruyama drift accumulation and Hölder seminorms.

Each kernel has a numba version and a numpy version with identical
arithmetic order; ``levy_em._accel`` picks one at import time.
"""
import math

import numpy as np

from ._accel import HAS_NUMBA, njit

ZERO, CONSTANT, SMOOTH_SINE, HOLDER_POWER, WEIERSTRASS = range(5)


# ---------------------------------------------------------------------------
# drift evaluation


@njit(cache=True)
def _drift_scalar(code, params, i, x):
    if code == CONSTANT:
        return params[i]
    if code == SMOOTH_SINE:
        return params[0] * math.sin(params[1] * x)
    if code == HOLDER_POWER:
        u = x - params[2]
        r = min(abs(u) ** params[0], 1.0)
        if u < 0:
            return -params[1] * r
        if u > 0:
            return params[1] * r
        return 0.0
    if code == WEIERSTRASS:
        beta, a, terms, amp = params[0], params[1], int(params[2]), params[3]
        total = 0.0
        ak = 1.0
        for _ in range(terms + 1):
            total += ak ** (-beta) * math.cos(ak * x)
            ak *= a
        return amp * total
    return 0.0


def drift_numpy(code, params, offset, x):
    """Vectorized drift on ``(..., d)`` arrays; mirrors ``_drift_scalar``."""
    x = np.asarray(x, dtype=float)
    if code == ZERO:
        out = np.zeros_like(x)
    elif code == CONSTANT:
        out = np.broadcast_to(params, x.shape).copy()
    elif code == SMOOTH_SINE:
        out = params[0] * np.sin(params[1] * x)
    elif code == HOLDER_POWER:
        u = x - params[2]
        out = np.sign(u) * (params[1] * np.minimum(np.abs(u) ** params[0], 1.0))
    elif code == WEIERSTRASS:
        beta, a, terms, amp = params[0], params[1], int(params[2]), params[3]
        total = np.zeros_like(x)
        ak = 1.0
        for _ in range(terms + 1):
            total += ak ** (-beta) * np.cos(ak * x)
            ak *= a
        out = amp * total
    else:
        raise ValueError(f"unknown drift code {code}")
    return out - offset


# ---------------------------------------------------------------------------
# Euler-Maruyama
#
# State at coarse step k is (x0 + D_k) + W_k, where W_k is the fine cumulative
# noise sampled every `stride` steps and D is the accumulated drift:
#     D_{k+1} = (D_k + b(X_k) h) + shift h.


@njit(cache=True, nogil=True)
def _em_numba(code, params, offset, shift, noise, x0, stride, h):
    B = noise.shape[0]
    d = noise.shape[2]
    n = (noise.shape[1] - 1) // stride
    out = np.zeros((B, n + 1, d))
    for b in range(B):
        for k in range(n):
            w = noise[b, k * stride]
            for i in range(d):
                x = (x0[i] + out[b, k, i]) + w[i]
                f = _drift_scalar(code, params, i, x) - offset[i]
                out[b, k + 1, i] = (out[b, k, i] + f * h) + shift[i] * h
    return out


def _em_numpy(code, params, offset, shift, noise, x0, stride, h):
    B, _, d = noise.shape
    n = (noise.shape[1] - 1) // stride
    out = np.zeros((B, n + 1, d))
    coarse = noise[:, ::stride]
    sh = shift * h
    for k in range(n):
        x = (x0 + out[:, k]) + coarse[:, k]
        f = drift_numpy(code, params, offset, x)
        out[:, k + 1] = (out[:, k] + f * h) + sh
    return out


def em_drift_part(code, params, offset, shift, noise, x0, stride, h):
    """Accumulated drift for a batch of paths.

    noise: ``(B, n_fine + 1, d)`` cumulative noise; returns ``(B, n + 1, d)``
    with ``n = n_fine / stride``.
    """
    args = (
        int(code),
        np.ascontiguousarray(params, dtype=float),
        np.ascontiguousarray(offset, dtype=float),
        np.ascontiguousarray(shift, dtype=float),
        np.ascontiguousarray(noise, dtype=float),
        np.ascontiguousarray(x0, dtype=float),
        int(stride),
        float(h),
    )
    if args[0] in (ZERO, CONSTANT):
        return _em_constant(*args)
    if HAS_NUMBA:
        return _em_numba(*args)
    return _em_numpy(*args)


def _em_constant(code, params, offset, shift, noise, x0, stride, h):
    # closed form c * t_k; k / n is correctly rounded, so coarse and fine
    # grids agree bit for bit at shared times
    B, _, d = noise.shape
    n = (noise.shape[1] - 1) // stride
    c = (params[:d] if code == CONSTANT else np.zeros(d)) - offset + shift
    t = np.arange(n + 1) / n
    return np.broadcast_to(t[:, None] * c, (B, n + 1, d)).copy()


# ---------------------------------------------------------------------------
# Hölder seminorm of a grid function E_k, k = 0..n, t_k = k / n


@njit(cache=True, nogil=True)
def _holder_numba(err, tau, gaps):
    n = err.shape[0] - 1
    d = err.shape[1]
    best = 0.0
    for g in gaps:
        scale = (g / n) ** tau
        for s in range(n - g + 1):
            acc = 0.0
            for i in range(d):
                diff = err[s + g, i] - err[s, i]
                acc += diff * diff
            val = math.sqrt(acc) / scale
            if val > best:
                best = val
    return best


def _holder_numpy(err, tau, gaps):
    n = err.shape[0] - 1
    best = 0.0
    for g in gaps:
        diff = np.sqrt(np.sum((err[g:] - err[:-g]) ** 2, axis=1))
        best = max(best, float(diff.max()) / (g / n) ** tau)
    return best


def holder_seminorm(err, tau, gaps):
    err = np.ascontiguousarray(err, dtype=float)
    gaps = np.ascontiguousarray(gaps, dtype=np.int64)
    if HAS_NUMBA:
        return float(_holder_numba(err, float(tau), gaps))
    return _holder_numpy(err, float(tau), gaps)
