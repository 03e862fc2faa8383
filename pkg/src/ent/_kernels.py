"""Numba-jitted lattice kernels. Imported only when numba is available.

The numpy fallbacks in `transducer` compute the same recursions; the two
paths must agree to ~1e-12 (asserted in tests, timed in benchmarks).
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _lse2(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def alpha_fill(blank_lp, token_lp, alpha):
    T, U1 = blank_lp.shape
    alpha[0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            via_blank = NEG_INF
            if t > 0:
                via_blank = alpha[t - 1, u] + blank_lp[t - 1, u]
            via_token = NEG_INF
            if u > 0:
                via_token = alpha[t, u - 1] + token_lp[t, u - 1]
            alpha[t, u] = _lse2(via_blank, via_token)


@njit(cache=True)
def beta_fill(blank_lp, token_lp, beta):
    T, U1 = blank_lp.shape
    U = U1 - 1
    beta[T - 1, U] = blank_lp[T - 1, U]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            via_blank = NEG_INF
            if t + 1 < T:
                via_blank = blank_lp[t, u] + beta[t + 1, u]
            via_token = NEG_INF
            if u + 1 <= U:
                via_token = token_lp[t, u] + beta[t, u + 1]
            beta[t, u] = _lse2(via_blank, via_token)


@njit(cache=True)
def grad_fill(blank_lp, token_lp, alpha, beta, loglik, grad_blank, grad_token):
    T, U1 = blank_lp.shape
    U = U1 - 1
    for t in range(T):
        for u in range(U1):
            if t + 1 < T:
                nxt = beta[t + 1, u]
            elif u == U:
                nxt = 0.0  # terminal
            else:
                nxt = NEG_INF
            e = alpha[t, u] + blank_lp[t, u] + nxt - loglik
            grad_blank[t, u] = -math.exp(e) if e != NEG_INF else 0.0
            if u < U:
                e = alpha[t, u] + token_lp[t, u] + beta[t, u + 1] - loglik
                grad_token[t, u] = -math.exp(e) if e != NEG_INF else 0.0
