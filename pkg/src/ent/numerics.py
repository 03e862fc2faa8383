"""Deterministic differentiable primitives.

Small fixed-topology layers (linear, embedding, LSTM) with hand-written
backward passes, a portable splitmix64 RNG, Adam, and finite-difference
gradient checking. All math is float64; float32 exists only on disk.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, NumericError

NEG_INF = float("-inf")

# ---------------------------------------------------------------------------
# log-domain helpers
# ---------------------------------------------------------------------------


def logsumexp(values) -> float:
    """Stable log(sum(exp(values))) for a 1-D collection.

    Entries may be -inf (excluded mass); returns -inf if all are.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ArgumentError("logsumexp of empty input")
    if np.isnan(v).any() or np.isposinf(v).any():
        raise NumericError("logsumexp input contains NaN or +inf")
    m = v.max()
    if m == NEG_INF:
        return NEG_INF
    return float(m + np.log(np.exp(v - m).sum()))


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """logits - logsumexp(logits) along `axis`; exp of the result sums to 1."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ArgumentError("log_softmax of empty input")
    if not np.isfinite(z).all():
        raise NumericError("log_softmax input must be finite")
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_softmax_backward(lsm: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. logits given d(loss)/d(log_softmax) along the last axis."""
    return dout - np.exp(lsm) * dout.sum(axis=-1, keepdims=True)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(logits, axis=axis))


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. logits given d(loss)/d(softmax) along the last axis."""
    return probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# RNG: splitmix64, bit-portable across platforms
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Sequential splitmix64 stream; same seed gives the same draws everywhere."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53 high bits -> double in [0, 1)
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def uniform_array(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.uniform(lo, hi)
        return out.reshape(shape)

    def normal(self, std: float = 1.0) -> float:
        # Box-Muller, one draw per two uniforms (no spare caching)
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53  # (0, 1]
        u2 = (self.next_u64() >> 11) * 2.0**-53
        return std * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def normal_array(self, shape, std: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.normal(std)
        return out.reshape(shape)

    def randint(self, n: int) -> int:
        """Integer in [0, n)."""
        if n <= 0:
            raise ArgumentError("randint needs n >= 1")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]


# ---------------------------------------------------------------------------
# parameters and layers
# ---------------------------------------------------------------------------


@dataclass
class Parameter:
    value: np.ndarray
    name: str
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def init_uniform(rng: SplitMix64, shape, fan_in: int) -> np.ndarray:
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform_array(shape, -k, k)


class Linear:
    """y = x @ W.T + b over the last axis; accumulates grads on backward."""

    def __init__(self, in_dim: int, out_dim: int, rng: SplitMix64, name: str):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = Parameter(init_uniform(rng, (out_dim, in_dim), in_dim), f"{name}.W")
        self.b = Parameter(init_uniform(rng, (out_dim,), in_dim), f"{name}.b")

    def forward(self, x: np.ndarray):
        if x.shape[-1] != self.in_dim:
            raise ArgumentError(
                f"{self.W.name}: input dim {x.shape[-1]} != {self.in_dim}"
            )
        return x @ self.W.value.T + self.b.value, x

    def backward(self, cache, dout: np.ndarray) -> np.ndarray:
        x = cache
        x2 = x.reshape(-1, self.in_dim)
        d2 = dout.reshape(-1, self.out_dim)
        self.W.grad += d2.T @ x2
        self.b.grad += d2.sum(axis=0)
        return dout @ self.W.value

    def params(self):
        return [self.W, self.b]


class Embedding:
    """Row lookup table with scatter-add backward."""

    def __init__(self, num_embeddings: int, dim: int, rng: SplitMix64, name: str):
        self.num_embeddings = num_embeddings
        self.table = Parameter(init_uniform(rng, (num_embeddings, dim), dim), name)

    def forward(self, ids: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.num_embeddings):
            raise ArgumentError(
                f"{self.table.name}: id out of range [0, {self.num_embeddings})"
            )
        return self.table.value[ids], ids

    def backward(self, cache, dout: np.ndarray) -> None:
        np.add.at(self.table.grad, cache, dout)

    def params(self):
        return [self.table]


class Lstm:
    """Single-layer LSTM with the usual i/f/g/o gates, unrolled manually.

    Gate order in the stacked weight matrices is input, forget, candidate,
    output. Initial hidden and cell states are zero.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: SplitMix64, name: str):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.Wx = Parameter(
            init_uniform(rng, (4 * hidden_dim, input_dim), input_dim), f"{name}.Wx"
        )
        self.Wh = Parameter(
            init_uniform(rng, (4 * hidden_dim, hidden_dim), hidden_dim), f"{name}.Wh"
        )
        self.b = Parameter(
            init_uniform(rng, (4 * hidden_dim,), hidden_dim), f"{name}.b"
        )

    def _gates(self, x, h):
        H = self.hidden_dim
        z = self.Wx.value @ x + self.Wh.value @ h + self.b.value
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H : 2 * H])
        g = np.tanh(z[2 * H : 3 * H])
        o = _sigmoid(z[3 * H :])
        return i, f, g, o

    def step(self, x: np.ndarray, h: np.ndarray, c: np.ndarray):
        """One cell update; returns (h', c', cache)."""
        if x.shape != (self.input_dim,) or h.shape != (self.hidden_dim,):
            raise ArgumentError(
                f"{self.Wx.name}: step shapes {x.shape}/{h.shape} do not match "
                f"({self.input_dim},)/({self.hidden_dim},)"
            )
        i, f, g, o = self._gates(x, h)
        c2 = f * c + i * g
        h2 = o * np.tanh(c2)
        return h2, c2, (x, h, c, i, f, g, o, c2)

    def step_backward(self, cache, dh: np.ndarray, dc: np.ndarray):
        """Backward through one cell; accumulates grads, returns (dx, dh_prev, dc_prev)."""
        x, h, c, i, f, g, o, c2 = cache
        tc = np.tanh(c2)
        do = dh * tc
        dc_total = dh * o * (1.0 - tc * tc) + dc
        di = dc_total * g
        df = dc_total * c
        dg = dc_total * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        self.Wx.grad += np.outer(dz, x)
        self.Wh.grad += np.outer(dz, h)
        self.b.grad += dz
        dx = self.Wx.value.T @ dz
        dh_prev = self.Wh.value.T @ dz
        dc_prev = dc_total * f
        return dx, dh_prev, dc_prev

    def forward(self, xs: np.ndarray):
        """Run the whole sequence; returns (hs of shape (T, H), cache)."""
        T = xs.shape[0]
        hs = np.zeros((T, self.hidden_dim))
        h = np.zeros(self.hidden_dim)
        c = np.zeros(self.hidden_dim)
        caches = []
        for t in range(T):
            h, c, cache = self.step(xs[t], h, c)
            hs[t] = h
            caches.append(cache)
        return hs, caches

    def backward(self, caches, dhs: np.ndarray) -> np.ndarray:
        T = len(caches)
        dxs = np.zeros((T, self.input_dim))
        dh = np.zeros(self.hidden_dim)
        dc = np.zeros(self.hidden_dim)
        for t in range(T - 1, -1, -1):
            dxs[t], dh, dc = self.step_backward(caches[t], dhs[t] + dh, dc)
        return dxs

    def params(self):
        return [self.Wx, self.Wh, self.b]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_step(x: np.ndarray, h: np.ndarray, c: np.ndarray, cell: Lstm):
    """Functional single-step wrapper around Lstm.step."""
    h2, c2, _ = cell.step(x, h, c)
    return h2, c2


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def make_adam_state(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for p in params:
        state.m[p.name] = np.zeros_like(p.value)
        state.v[p.name] = np.zeros_like(p.value)
    return state


def adam_step(params, state: AdamState) -> None:
    """Bias-corrected Adam update in place; grads are zeroed afterward."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p in params:
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * p.grad * p.grad
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.zero_grad()


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(loss_fn, params, eps: float = 1e-5) -> float:
    """Worst relative error between params' analytic grads and central differences.

    `loss_fn` must be a pure scalar function of the current parameter values.
    Analytic gradients are read from each parameter's `.grad`, so run the
    backward pass before calling. Relative error per coordinate is
    |a - n| / max(|a|, |n|, 1).
    """
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        aflat = p.grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = float(loss_fn())
            flat[idx] = orig - eps
            f_minus = float(loss_fn())
            flat[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite loss while checking {p.name}")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = aflat[idx]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1.0)
            worst = max(worst, err)
    return worst
