"""Hot loops for tree routing and leaf sufficient statistics.

Compiled with numba when available; the numpy fallbacks implement the
identical contracts so the test suite passes either way (just slower).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True, nogil=True)
def _route_rows_nb(var, threshold, rows):
    n = rows.shape[0]
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        i = 0
        while var[i] >= 0:
            if rows[r, var[i]] <= threshold[i]:
                i = 2 * i + 1
            else:
                i = 2 * i + 2
        out[r] = i
    return out


def _route_rows_np(var, threshold, rows):
    idx = np.zeros(rows.shape[0], dtype=np.int64)
    while True:
        v = var[idx]
        internal = v >= 0
        if not internal.any():
            return idx
        sub = idx[internal]
        go_right = rows[internal, var[sub]] > threshold[sub]
        idx[internal] = 2 * sub + 1 + go_right
    return idx


@njit(cache=True, nogil=True)
def _leaf_stats_nb(leaf_idx, resid, capacity):
    counts = np.zeros(capacity, dtype=np.int64)
    sums = np.zeros(capacity)
    sumsq = np.zeros(capacity)
    for r in range(leaf_idx.shape[0]):
        i = leaf_idx[r]
        counts[i] += 1
        sums[i] += resid[r]
        sumsq[i] += resid[r] * resid[r]
    return counts, sums, sumsq


def _leaf_stats_np(leaf_idx, resid, capacity):
    counts = np.bincount(leaf_idx, minlength=capacity).astype(np.int64)
    sums = np.bincount(leaf_idx, weights=resid, minlength=capacity)
    sumsq = np.bincount(leaf_idx, weights=resid * resid, minlength=capacity)
    return counts, sums, sumsq


@njit(cache=True, nogil=True)
def _marginal_from_stats_nb(var, counts, sums, sumsq, sigma2, smu2):
    log2pi = 1.8378770664093453
    total = 0.0
    for i in range(var.shape[0]):
        if var[i] != -1:
            continue
        n = counts[i]
        if n == 0:
            return -np.inf, True
        denom = sigma2 + n * smu2
        total += (
            -0.5 * n * log2pi
            - 0.5 * ((n - 1) * np.log(sigma2) + np.log(denom))
            - 0.5 * (sumsq[i] - smu2 * sums[i] * sums[i] / denom) / sigma2
        )
    return total, False


def _marginal_from_stats_np(var, counts, sums, sumsq, sigma2, smu2):
    leaves = np.flatnonzero(var == -1)
    n = counts[leaves].astype(np.float64)
    if np.any(n == 0):
        return -np.inf, True
    s, q = sums[leaves], sumsq[leaves]
    denom = sigma2 + n * smu2
    total = np.sum(
        -0.5 * n * np.log(2.0 * np.pi)
        - 0.5 * ((n - 1.0) * np.log(sigma2) + np.log(denom))
        - 0.5 * (q - smu2 * s * s / denom) / sigma2
    )
    return float(total), False


def _ck_draw_block(mean, cov, m, n_z, z):
    """Draw the free (latent) coordinates of the current block."""
    out = mean[:m].copy()
    sub = cov[n_z:m, n_z:m].copy()
    sub = 0.5 * (sub + sub.T)
    w, v = np.linalg.eigh(sub)
    w = np.sqrt(np.maximum(w, 0.0))
    out[n_z:m] = mean[n_z:m] + (v * w) @ z
    return out


def _ck_core(obs, H, R, comp, c_comp, Q, innov_cov, m0, P0, normals, n_z):
    """Kalman filter + backward simulation on the companion state.

    ``normals`` holds the T x J standard normals consumed by the
    backward draws; ``n_z`` is 1 when the first state coordinate is an
    observed (noiseless) series.
    """
    T, n_obs = obs.shape
    D = comp.shape[0]
    m = innov_cov.shape[0]

    filt_m = np.empty((T, D))
    filt_P = np.empty((T, D, D))
    mean = m0.copy()
    cov = P0.copy()
    for t in range(T):
        mean = c_comp + comp @ mean
        cov = comp @ cov @ comp.T + Q
        cov = 0.5 * (cov + cov.T)
        v = obs[t] - H @ mean
        S = H @ cov @ H.T
        for i in range(n_obs):
            S[i, i] += R[i]
        PHt = cov @ H.T
        K = np.linalg.solve(S, PHt.T).T
        mean = mean + K @ v
        cov = cov - K @ S @ K.T
        cov = 0.5 * (cov + cov.T)
        filt_m[t] = mean
        filt_P[t] = cov

    draws = np.empty((T, m))
    draws[T - 1] = _ck_draw_block(filt_m[T - 1], filt_P[T - 1], m, n_z, normals[T - 1])
    A1 = comp[:m].copy()
    c1 = c_comp[:m].copy()
    for t in range(T - 2, -1, -1):
        m_t = filt_m[t]
        P_t = filt_P[t]
        v = draws[t + 1] - (c1 + A1 @ m_t)
        S = A1 @ P_t @ A1.T + innov_cov
        S = 0.5 * (S + S.T)
        PAt = P_t @ A1.T
        K = np.linalg.solve(S, PAt.T).T
        mean_c = m_t + K @ v
        cov_c = P_t - K @ A1 @ P_t
        cov_c = 0.5 * (cov_c + cov_c.T)
        draws[t] = _ck_draw_block(mean_c, cov_c, m, n_z, normals[t])
    return draws


if HAVE_NUMBA:
    route_rows = _route_rows_nb
    leaf_stats = _leaf_stats_nb
    marginal_from_stats = _marginal_from_stats_nb
    _ck_draw_block = njit(cache=True, nogil=True)(_ck_draw_block)
    ck_core = njit(cache=True, nogil=True)(_ck_core)
else:
    route_rows = _route_rows_np
    leaf_stats = _leaf_stats_np
    marginal_from_stats = _marginal_from_stats_np
    ck_core = _ck_core
