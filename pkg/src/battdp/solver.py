"""Optimal value function and policy of a discretized storage MDP."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K
from .mdp import Mdp
from .model import immediate_cost, control_set

log = logging.getLogger(__name__)

DIRECT_SOLVE_MAX = 5000
EVAL_TOL = 1e-9


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class ValueFunction:
    values: np.ndarray  # (n_states, n_levels)
    residual: float = 0.0

    def __getitem__(self, idx):
        return self.values[idx]


@dataclass(frozen=True)
class Policy:
    index: np.ndarray  # grid index of the target level, (n_states, n_levels)
    levels: np.ndarray

    @property
    def target(self) -> np.ndarray:
        return self.levels[self.index]

    def __eq__(self, other):
        return isinstance(other, Policy) and np.array_equal(self.index, other.index)

    __hash__ = None


class Solution(NamedTuple):
    value: ValueFunction
    policy: Policy
    iterations: int


def _csr(mdp: Mdp):
    m = mdp.kernel.probs
    return (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(float))


def _cost_args(mdp: Mdp):
    p = mdp.params
    repl = 0.0 if p.replacement is None else p.replacement.q * p.replacement.cost
    return (mdp.deltas, mdp.prices, mdp.demands, 1.0 / p.eta_c, p.eta_d, repl)


def expected_next(mdp: Mdp, J) -> np.ndarray:
    """Kernel-weighted continuation value ``G[x, k] = sum_y f_x(y) J[y, k]``."""
    J = np.ascontiguousarray(getattr(J, "values", J), dtype=float)
    return K.expected_next(*_csr(mdp), J)


def bellman_backup(mdp: Mdp, J) -> tuple[ValueFunction, Policy]:
    """One Jacobi sweep of the Bellman operator with greedy targets.

    Among (near-)minimizers the target that moves the battery least is
    chosen, so doing nothing wins ties.
    """
    G = expected_next(mdp, J)
    lo, hi = mdp.control_bounds
    deltas, price, demand, inv_eta_c, eta_d, repl = _cost_args(mdp)
    Jn, arg = K.backup(G, lo, hi, deltas, price, demand, inv_eta_c, eta_d, repl, mdp.alpha)
    return ValueFunction(Jn), Policy(arg, mdp.levels)


def value_iteration(mdp: Mdp, tol: float = 1e-6, max_iters: int = 100_000) -> Solution:
    if not tol > 0:
        raise ValueError("tol must be positive")
    a = mdp.alpha
    stop = tol * (1 - a) / (2 * a)
    J = np.zeros((mdp.n_states, mdp.n_levels))
    resid = math.inf
    for it in range(1, max_iters + 1):
        vf, pol = bellman_backup(mdp, J)
        resid = float(np.max(np.abs(vf.values - J)))
        J = vf.values
        if resid <= stop:
            return Solution(ValueFunction(J, resid), pol, it)
    raise NonConvergenceError(f"value iteration did not converge in {max_iters} iterations", resid)


def _policy_matrix(mdp: Mdp, arg: np.ndarray) -> sp.csr_array:
    """Sparse ``P_pi`` acting on the flattened (state, level) vector."""
    indptr, indices, data = _csr(mdp)
    n_x, n_b = arg.shape
    counts = np.diff(indptr)
    # every (x, b) row copies row x of the kernel, shifted to column arg[x, b]
    row_x = np.repeat(np.arange(n_x), counts)
    rows = (row_x[:, None] * n_b + np.arange(n_b)[None, :]).ravel()
    cols = (indices[:, None] * n_b + arg[row_x]).ravel()
    vals = np.repeat(data, n_b)
    N = n_x * n_b
    return sp.csr_array((vals, (rows, cols)), shape=(N, N))


def evaluate_policy(mdp: Mdp, policy: Policy, J0=None, tol: float = EVAL_TOL) -> np.ndarray:
    """Solve ``J = c_pi + alpha P_pi J`` for a fixed policy.

    Small systems use a sparse direct solve; larger ones a Krylov solve
    polished by fixed-point sweeps until the Bellman residual is below
    ``tol``.
    """
    arg = np.ascontiguousarray(policy.index, dtype=np.int64)
    c = K.policy_costs(arg, *_cost_args(mdp))
    n_x, n_b = arg.shape
    N = n_x * n_b
    a = mdp.alpha
    Pm = _policy_matrix(mdp, arg)
    A = (sp.identity(N, format="csr") - a * Pm).tocsc()
    if N <= DIRECT_SOLVE_MAX:
        return spla.spsolve(A, c.ravel()).reshape(n_x, n_b)

    x0 = None if J0 is None else np.asarray(J0, dtype=float).ravel()
    sol, info = spla.bicgstab(A, c.ravel(), x0=x0, rtol=1e-14, atol=0.0, maxiter=10 * N)
    J = sol.reshape(n_x, n_b)
    csr = _csr(mdp)
    for _ in range(100_000):
        Jn = c + a * K.apply_policy(*csr, J, arg)
        resid = float(np.max(np.abs(Jn - J)))
        J = Jn
        if resid <= tol:
            return J
    raise NonConvergenceError("policy evaluation did not converge", resid)


def policy_iteration(mdp: Mdp, max_iters: int = 1000) -> Solution:
    """Howard policy iteration from the do-nothing policy.

    Stops when the current policy's targets are near-optimal in every cell
    (within the backup's tie tolerance).  The returned policy is the greedy
    policy of the final value, so it follows the least-movement tie rule.
    """
    levels = mdp.levels
    pol = Policy(mdp.stay_index.copy(), levels)
    J = None
    for it in range(1, max_iters + 1):
        J = evaluate_policy(mdp, pol, J0=J)
        vf, greedy = bellman_backup(mdp, J)
        # improvement only where the current target is beaten beyond tolerance
        H_cur = K.policy_costs(pol.index, *_cost_args(mdp))
        H_cur = H_cur + mdp.alpha * np.take_along_axis(expected_next(mdp, J), pol.index, axis=1)
        best = vf.values
        worse = H_cur > best + K.TIE_RTOL * np.abs(best) + K.TIE_ATOL
        if not worse.any():
            resid = float(np.max(np.abs(best - J)))
            return Solution(ValueFunction(J, resid), greedy, it)
        pol = greedy
    raise NonConvergenceError(f"policy iteration did not converge in {max_iters} iterations",
                              float(np.max(np.abs(vf.values - J))))


def finite_horizon_oracle(mdp: Mdp, n: int) -> ValueFunction:
    """Exact ``n``-slot discounted cost by backward recursion from zero.

    Deliberately independent of the compiled kernels: costs and control
    sets come from the scalar model functions and the continuation is a
    dense matrix product.
    """
    if n < 0:
        raise ValueError("horizon must be >= 0")
    params = mdp.params
    lv = mdp.levels
    n_x, n_b = mdp.n_states, mdp.n_levels
    step = mdp.grids.battery_step
    C = np.full((n_x, n_b, n_b), np.inf)
    for x, s in enumerate(mdp.states):
        for i, b in enumerate(lv):
            u_lo, u_hi = control_set(params, s, float(b))
            for k, beta in enumerate(lv):
                if u_lo - 1e-9 * step <= beta <= u_hi + 1e-9 * step:
                    C[x, i, k] = immediate_cost(params, s, float(beta - params.xi * b))
    P = mdp.kernel.dense()
    J = np.zeros((n_x, n_b))
    for _ in range(n):
        G = P @ J
        J = np.min(C + mdp.alpha * G[:, None, :], axis=2)
    return ValueFunction(J)


def oracle_gap_bound(mdp: Mdp, n: int) -> float:
    """``alpha^n * ||J_1|| / (1 - alpha)``, a bound on ``||J_n - J||``."""
    j1 = float(np.max(mdp.demands * mdp.prices))
    return mdp.alpha ** n * j1 / (1 - mdp.alpha)
