"""Hot loops of the solver.

Every kernel exists twice: a numba version (compiled, parallel over
exogenous states) and a plain numpy version.  Set ``BATTDP_DISABLE_NUMBA=1``
to force the numpy path; it is also used when numba is not importable.
Both paths produce the same tables up to floating point summation order.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("BATTDP_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag in ("1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError
    import numba
    from numba import njit, prange
    HAVE_NUMBA = True
    # skip the probe of an outdated TBB, which only emits a warning
    if os.environ.get("NUMBA_THREADING_LAYER") is None:
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled

# relative/absolute slack under which two candidate costs count as a tie
TIE_RTOL = 1e-10
TIE_ATOL = 1e-12
# cells per numpy chunk in the fallback backup (bounds peak memory)
_CHUNK_CELLS = 2_000_000


def set_threads(n: int | None) -> int:
    """Cap numba worker threads; results never depend on this value."""
    if not USE_NUMBA or n is None:
        return 1
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# -- numpy implementations ---------------------------------------------------

def _expected_next_np(indptr, indices, data, J):
    n = indptr.size - 1
    G = np.empty((n, J.shape[1]))
    for x in range(n):
        lo, hi = indptr[x], indptr[x + 1]
        G[x] = data[lo:hi] @ J[indices[lo:hi]]
    return G


def _stage_costs_np(delta, price, demand, inv_eta_c, eta_d, repl):
    up = np.maximum(delta, 0.0)
    down = np.minimum(delta, 0.0)
    # same arithmetic as the compiled kernel: (d + up/eta_c + eta_d*down) * p
    per = demand[:, None, None] + up[None] * inv_eta_c + eta_d * down[None]
    C = per * price[:, None, None]
    if repl > 0:
        C = C + np.where(delta != 0.0, repl, 0.0)[None]
    return C


def _backup_np(G, lo, hi, delta, price, demand, inv_eta_c, eta_d, repl, alpha,
               rtol=TIE_RTOL, atol=TIE_ATOL):
    n_x, n_b = G.shape
    J = np.empty((n_x, n_b))
    arg = np.empty((n_x, n_b), dtype=np.int64)
    ks = np.arange(n_b)
    absd = np.abs(delta)
    chunk = max(1, _CHUNK_CELLS // (n_b * n_b))
    for s in range(0, n_x, chunk):
        e = min(n_x, s + chunk)
        H = _stage_costs_np(delta, price[s:e], demand[s:e], inv_eta_c, eta_d, repl)
        H = H + alpha * G[s:e, None, :]
        feas = (ks[None, None, :] >= lo[s:e, :, None]) & (ks[None, None, :] <= hi[s:e, :, None])
        H = np.where(feas, H, np.inf)
        best = H.min(axis=2)
        thr = best + rtol * np.abs(best) + atol
        key = np.where(H <= thr[..., None], absd[None], np.inf)
        J[s:e] = best
        arg[s:e] = np.argmin(key, axis=2)
    return J, arg


def _policy_costs_np(arg, delta, price, demand, inv_eta_c, eta_d, repl):
    n_b = delta.shape[0]
    d = delta[np.arange(n_b)[None, :], arg]
    up = np.maximum(d, 0.0)
    down = np.minimum(d, 0.0)
    c = (demand[:, None] + up * inv_eta_c + eta_d * down) * price[:, None]
    if repl > 0:
        c = c + np.where(d != 0.0, repl, 0.0)
    return c


def _apply_policy_np(indptr, indices, data, J, arg):
    # (P_pi J)[x, b] = sum_y P[x, y] J[y, arg[x, b]]
    n, n_b = arg.shape
    out = np.empty((n, n_b))
    for x in range(n):
        lo, hi = indptr[x], indptr[x + 1]
        out[x] = data[lo:hi] @ J[indices[lo:hi]][:, arg[x]]
    return out


# -- numba implementations ---------------------------------------------------

if USE_NUMBA:

    @njit(parallel=True, cache=True)
    def _expected_next_nb(indptr, indices, data, J):
        n = indptr.size - 1
        n_b = J.shape[1]
        G = np.zeros((n, n_b))
        for x in prange(n):
            for j in range(indptr[x], indptr[x + 1]):
                y = indices[j]
                w = data[j]
                for b in range(n_b):
                    G[x, b] += w * J[y, b]
        return G

    @njit(cache=True, inline="always")
    def _stage_cost(dlt, p, d, inv_eta_c, eta_d, repl):
        up = dlt if dlt > 0.0 else 0.0
        down = dlt if dlt < 0.0 else 0.0
        c = (d + up * inv_eta_c + eta_d * down) * p
        if repl > 0.0 and dlt != 0.0:
            c += repl
        return c

    @njit(parallel=True, cache=True)
    def _backup_nb(G, lo, hi, delta, price, demand, inv_eta_c, eta_d, repl, alpha,
                   rtol=TIE_RTOL, atol=TIE_ATOL):
        n_x, n_b = G.shape
        J = np.empty((n_x, n_b))
        arg = np.empty((n_x, n_b), dtype=np.int64)
        for x in prange(n_x):
            p = price[x]
            d = demand[x]
            for b in range(n_b):
                best = np.inf
                for k in range(lo[x, b], hi[x, b] + 1):
                    h = _stage_cost(delta[b, k], p, d, inv_eta_c, eta_d, repl) + alpha * G[x, k]
                    if h < best:
                        best = h
                thr = best + rtol * abs(best) + atol
                choice = lo[x, b]
                key = np.inf
                for k in range(lo[x, b], hi[x, b] + 1):
                    h = _stage_cost(delta[b, k], p, d, inv_eta_c, eta_d, repl) + alpha * G[x, k]
                    if h <= thr and abs(delta[b, k]) < key:
                        key = abs(delta[b, k])
                        choice = k
                J[x, b] = best
                arg[x, b] = choice
        return J, arg

    @njit(parallel=True, cache=True)
    def _policy_costs_nb(arg, delta, price, demand, inv_eta_c, eta_d, repl):
        n_x, n_b = arg.shape
        c = np.empty((n_x, n_b))
        for x in prange(n_x):
            for b in range(n_b):
                c[x, b] = _stage_cost(delta[b, arg[x, b]], price[x], demand[x],
                                      inv_eta_c, eta_d, repl)
        return c

    @njit(parallel=True, cache=True)
    def _apply_policy_nb(indptr, indices, data, J, arg):
        n, n_b = arg.shape
        out = np.zeros((n, n_b))
        for x in prange(n):
            for j in range(indptr[x], indptr[x + 1]):
                y = indices[j]
                w = data[j]
                for b in range(n_b):
                    out[x, b] += w * J[y, arg[x, b]]
        return out

    expected_next = _expected_next_nb
    backup = _backup_nb
    policy_costs = _policy_costs_nb
    apply_policy = _apply_policy_nb
else:
    expected_next = _expected_next_np
    backup = _backup_np
    policy_costs = _policy_costs_np
    apply_policy = _apply_policy_np

BACKEND = "numba" if USE_NUMBA else "numpy"
