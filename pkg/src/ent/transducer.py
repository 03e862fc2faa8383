"""Alignment-lattice loss for the transducer.

The lattice has nodes (t, u) for t in [0, T), u in [0, U]. A blank at
(t, u) advances t, a token advances u; every alignment carries exactly
T blanks and U tokens and ends with the blank at (T-1, U). The loss is
the negative log marginal over all C(T+U, U) monotone paths, computed by
forward-backward dynamic programming with analytic gradients, plus a
brute-force enumeration oracle for small lattices.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ArgumentError, NumericError
from .numerics import NEG_INF, logsumexp

if backend.HAVE_NUMBA:
    from . import _kernels

ENUMERATION_BOUND = 14  # max T + U for brute_force_loss


@dataclass
class VocabLogProbLattice:
    """Per-node log-probabilities of blank and of the next target token.

    blank_lp has shape (T, U+1); token_lp has shape (T, U), where
    token_lp[t, u] is the log-probability of target token y_{u+1} at
    node (t, u). Entries are finite or -inf.
    """

    blank_lp: np.ndarray
    token_lp: np.ndarray

    def __post_init__(self):
        self.blank_lp = np.ascontiguousarray(self.blank_lp, dtype=np.float64)
        self.token_lp = np.ascontiguousarray(self.token_lp, dtype=np.float64)
        if self.blank_lp.ndim != 2:
            raise ArgumentError("blank_lp must be 2-D (T, U+1)")
        T, U1 = self.blank_lp.shape
        if T < 1:
            raise ArgumentError("lattice needs at least one frame (T >= 1)")
        if self.token_lp.shape != (T, U1 - 1):
            raise ArgumentError(
                f"token_lp shape {self.token_lp.shape} != ({T}, {U1 - 1})"
            )
        for a in (self.blank_lp, self.token_lp):
            if np.isnan(a).any() or np.isposinf(a).any():
                raise NumericError("lattice entries must be finite or -inf")

    @property
    def T(self) -> int:
        return self.blank_lp.shape[0]

    @property
    def U(self) -> int:
        return self.blank_lp.shape[1] - 1


@dataclass
class LatticePosteriors:
    """Forward/backward tables and per-transition loss gradients."""

    alpha: np.ndarray
    loglik: float
    beta: np.ndarray | None = field(default=None)
    grad_blank: np.ndarray | None = field(default=None)
    grad_token: np.ndarray | None = field(default=None)


# ---------------------------------------------------------------------------
# numpy fallback: wavefront over anti-diagonals
# ---------------------------------------------------------------------------


def _alpha_numpy(blank_lp, token_lp, alpha):
    T, U1 = blank_lp.shape
    U = U1 - 1
    alpha[0, 0] = 0.0
    for n in range(1, T + U):
        t_lo = max(0, n - U)
        t_hi = min(T - 1, n)
        if t_lo > t_hi:
            continue
        ts = np.arange(t_lo, t_hi + 1)
        us = n - ts
        tsm = np.maximum(ts - 1, 0)
        via_blank = np.where(
            ts >= 1, alpha[tsm, us] + blank_lp[tsm, us], NEG_INF
        )
        if U > 0:
            usm = np.maximum(us - 1, 0)
            via_token = np.where(
                us >= 1, alpha[ts, usm] + token_lp[ts, usm], NEG_INF
            )
        else:
            via_token = np.full(ts.shape, NEG_INF)
        alpha[ts, us] = np.logaddexp(via_blank, via_token)


def _beta_numpy(blank_lp, token_lp, beta):
    T, U1 = blank_lp.shape
    U = U1 - 1
    beta[T - 1, U] = blank_lp[T - 1, U]
    for n in range(T + U - 2, -1, -1):
        t_lo = max(0, n - U)
        t_hi = min(T - 1, n)
        ts = np.arange(t_lo, t_hi + 1)
        us = n - ts
        tsp = np.minimum(ts + 1, T - 1)
        via_blank = np.where(
            ts + 1 < T, blank_lp[ts, us] + beta[tsp, us], NEG_INF
        )
        if U > 0:
            usp = np.minimum(us + 1, U)
            via_token = np.where(
                us + 1 <= U, token_lp[ts, np.minimum(us, U - 1)] + beta[ts, usp],
                NEG_INF,
            )
        else:
            via_token = np.full(ts.shape, NEG_INF)
        beta[ts, us] = np.logaddexp(via_blank, via_token)


def _grad_numpy(blank_lp, token_lp, alpha, beta, loglik, grad_blank, grad_token):
    T, U1 = blank_lp.shape
    U = U1 - 1
    beta_next = np.full((T, U1), NEG_INF)
    if T > 1:
        beta_next[: T - 1] = beta[1:]
    beta_next[T - 1, U] = 0.0  # terminal transition
    with np.errstate(invalid="ignore"):
        grad_blank[...] = -np.exp(alpha + blank_lp + beta_next - loglik)
        if U > 0:
            grad_token[...] = -np.exp(alpha[:, :U] + token_lp + beta[:, 1:] - loglik)
    np.nan_to_num(grad_blank, copy=False, nan=0.0)
    np.nan_to_num(grad_token, copy=False, nan=0.0)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def transducer_loss(lattice: VocabLogProbLattice):
    """Negative log-marginal over all alignments.

    Returns (loss, posteriors); the posteriors carry the filled alpha
    table and log-likelihood for the matching transducer_grad call.
    Returns +inf when no alignment has nonzero probability.
    """
    T, U = lattice.T, lattice.U
    alpha = np.full((T, U + 1), NEG_INF)
    if backend.use_numba():
        _kernels.alpha_fill(lattice.blank_lp, lattice.token_lp, alpha)
    else:
        _alpha_numpy(lattice.blank_lp, lattice.token_lp, alpha)
    loglik = alpha[T - 1, U] + lattice.blank_lp[T - 1, U]
    loss = float("inf") if loglik == NEG_INF else -float(loglik)
    return loss, LatticePosteriors(alpha=alpha, loglik=float(loglik))


def transducer_grad(lattice: VocabLogProbLattice, post: LatticePosteriors):
    """Loss gradients w.r.t. blank_lp and token_lp.

    Each gradient entry is minus the posterior probability that an
    alignment takes that transition. Fills beta and the gradient tables
    into `post` and returns (grad_blank, grad_token).
    """
    if post.loglik == NEG_INF:
        raise NumericError("gradient of a zero-probability lattice")
    T, U = lattice.T, lattice.U
    beta = np.full((T, U + 1), NEG_INF)
    grad_blank = np.zeros((T, U + 1))
    grad_token = np.zeros((T, U))
    if backend.use_numba():
        _kernels.beta_fill(lattice.blank_lp, lattice.token_lp, beta)
        _kernels.grad_fill(
            lattice.blank_lp, lattice.token_lp, post.alpha, beta,
            post.loglik, grad_blank, grad_token,
        )
    else:
        _beta_numpy(lattice.blank_lp, lattice.token_lp, beta)
        _grad_numpy(
            lattice.blank_lp, lattice.token_lp, post.alpha, beta,
            post.loglik, grad_blank, grad_token,
        )
    post.beta = beta
    post.grad_blank = grad_blank
    post.grad_token = grad_token
    return grad_blank, grad_token


def brute_force_loss(lattice: VocabLogProbLattice) -> float:
    """Literal enumeration of every monotone path; the DP oracle.

    Bounded to T + U <= 14 so it stays fast; sums path probabilities in
    the log domain and returns the negative log total (+inf sentinel if
    every path has zero probability).
    """
    T, U = lattice.T, lattice.U
    if T + U > ENUMERATION_BOUND:
        raise ArgumentError(
            f"brute force bounded to T+U <= {ENUMERATION_BOUND}, got {T + U}"
        )
    path_lps = []
    for token_steps in itertools.combinations(range(T + U), U):
        token_set = set(token_steps)
        t = u = 0
        lp = 0.0
        for step in range(T + U):
            if step in token_set:
                if t >= T:  # token after the last frame: impossible path
                    lp = NEG_INF
                    break
                lp += lattice.token_lp[t, u]
                u += 1
            else:
                lp += lattice.blank_lp[t, u]
                t += 1
            if lp == NEG_INF:
                break
        path_lps.append(lp)
    total = logsumexp(path_lps)
    return float("inf") if total == NEG_INF else -total
