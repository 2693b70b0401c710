"""A small MLP velocity network with hand-written derivatives, plus AdamW.

The network maps ``(x, t)`` to a velocity of the same shape as ``x``::

    input  = [x, sin(2 pi w t), cos(2 pi w t)]      (d + 2F features)
    h_i    = silu(h_{i-1} @ W_i + b_i)              (4 hidden layers)
    output = h_L @ W_out + b_out

All parameters live in one flat float64 vector; the per-layer weights are
views into it, so the optimizer updates them in place.  Besides the
parameter gradient the class provides the input-space JVP and VJP used for
likelihood estimation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, NonFiniteInputError


def geometric_frequencies(n_freq=128, low=1.0, high=1000.0) -> np.ndarray:
    if n_freq == 1:
        return np.array([low], dtype=np.float64)
    return np.geomspace(low, high, n_freq)


def time_embed(t, frequencies) -> np.ndarray:
    """``[sin(2 pi w_k t) ..., cos(2 pi w_k t) ...]`` for each scalar ``t``.

    Returns shape ``(len(t), 2 * len(frequencies))`` (or a vector for scalar ``t``).
    """
    t = np.asarray(t, dtype=np.float64)
    frequencies = np.asarray(frequencies, dtype=np.float64)
    phase = np.multiply.outer(t, 2.0 * np.pi * frequencies)
    f = frequencies.shape[0]
    out = np.empty(phase.shape[:-1] + (2 * f,))
    np.sin(phase, out=out[..., :f])
    np.cos(phase, out=out[..., f:])
    return out


def _sigmoid(h):
    # exp(-h) may overflow to inf for very negative h; 1/inf = 0 is the right limit.
    out = np.negative(h)
    with np.errstate(over="ignore"):
        np.exp(out, out=out)
    out += 1.0
    return np.reciprocal(out, out=out)


def _silu_grad(h, sig):
    out = 1.0 - sig
    out *= h
    out += 1.0
    out *= sig
    return out


class VelocityNet:
    """Feed-forward velocity field ``v_theta(x, t)``.

    Parameters
    ----------
    d : int
        Data dimension (input and output).
    hidden : int
        Width of every hidden layer.
    n_layers : int
        Number of hidden (SiLU) layers.
    embed_dim : int
        Size of the sinusoidal time embedding; must be even.
    freq_range : tuple
        Lowest and highest embedding frequency (geometric spacing).
    seed : int or numpy Generator
        Initialization RNG.  Hidden layers are He-uniform, the output
        layer starts at zero so the initial field is identically zero.
    """

    def __init__(self, d, hidden=256, n_layers=4, embed_dim=256, freq_range=(1.0, 1000.0),
                 seed=0, params=None, frequencies=None):
        if embed_dim % 2:
            raise ValueError("embed_dim must be even")
        if n_layers < 1:
            raise ValueError("need at least one hidden layer")
        self.d = int(d)
        self.hidden = int(hidden)
        self.n_layers = int(n_layers)
        self.embed_dim = int(embed_dim)
        if frequencies is None:
            frequencies = geometric_frequencies(embed_dim // 2, *freq_range)
        self.frequencies = np.asarray(frequencies, dtype=np.float64)
        if self.frequencies.shape != (embed_dim // 2,):
            raise ValueError("need embed_dim / 2 frequencies")

        dims = [self.d + self.embed_dim] + [self.hidden] * self.n_layers + [self.d]
        self.shapes = list(zip(dims[:-1], dims[1:]))
        sizes = [i * o + o for i, o in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.n_params = int(self.offsets[-1])

        if params is None:
            self.params = np.zeros(self.n_params)
            self._bind()
            rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
            for W, (fan_in, _) in zip(self.weights[:-1], self.shapes[:-1]):
                bound = math.sqrt(6.0 / fan_in)
                W[...] = rng.uniform(-bound, bound, W.shape)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
            self.params = params.copy()
            self._bind()

    def _bind(self):
        self.weights, self.biases = [], []
        for (i, o), start in zip(self.shapes, self.offsets[:-1]):
            self.weights.append(self.params[start:start + i * o].reshape(i, o))
            self.biases.append(self.params[start + i * o:start + i * o + o])

    def set_params(self, params):
        self.params[...] = params

    def copy(self) -> "VelocityNet":
        return VelocityNet(self.d, self.hidden, self.n_layers, self.embed_dim,
                           params=self.params, frequencies=self.frequencies)

    def config(self) -> dict:
        return {"d": self.d, "hidden": self.hidden, "n_layers": self.n_layers,
                "embed_dim": self.embed_dim}

    # -- forward ------------------------------------------------------------

    def _inputs(self, x, t):
        """Validated ``x`` and the time embedding.

        When every row shares one time the embedding is a single row; its
        contribution to the first layer is then computed once and broadcast.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ValueError(f"x must have shape (b, {self.d}), got {x.shape}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise NonFiniteInputError()
        shared = t.size > 0 and bool(np.all(t == t[0]))
        emb = time_embed(t[:1] if shared else t, self.frequencies)
        return x, emb, shared

    def _forward(self, x, t):
        x, emb, shared = self._inputs(x, t)
        W0 = self.weights[0]
        h = x @ W0[: self.d]
        if shared:
            h += emb @ W0[self.d:] + self.biases[0]
        else:
            h += emb @ W0[self.d:]
            h += self.biases[0]
        sig = _sigmoid(h)
        a = h * sig
        cache = [(x, emb, shared), (h, sig, a)]
        for W, b in zip(self.weights[1:-1], self.biases[1:-1]):
            h = a @ W
            h += b
            sig = _sigmoid(h)
            a = h * sig
            cache.append((h, sig, a))
        out = a @ self.weights[-1]
        out += self.biases[-1]
        return out, cache

    def forward(self, x, t) -> np.ndarray:
        return self._forward(x, t)[0]

    __call__ = forward

    # -- reverse mode -------------------------------------------------------

    def _backward(self, cache, g, need_input=False):
        grad = np.empty(self.n_params)
        gw, gb = self._grad_views(grad)
        np.matmul(cache[-1][2].T, g, out=gw[-1])
        gb[-1][...] = g.sum(axis=0)
        g_a = g @ self.weights[-1].T
        for i in range(self.n_layers - 1, -1, -1):
            h, sig, _ = cache[i + 1]
            g_h = _silu_grad(h, sig)
            g_h *= g_a
            gb[i][...] = g_h.sum(axis=0)
            if i > 0:
                np.matmul(cache[i][2].T, g_h, out=gw[i])
                g_a = g_h @ self.weights[i].T
            else:
                x, emb, shared = cache[0]
                np.matmul(x.T, g_h, out=gw[0][: self.d])
                if shared:
                    np.multiply.outer(emb[0], gb[0], out=gw[0][self.d:])
                else:
                    np.matmul(emb.T, g_h, out=gw[0][self.d:])
                if need_input:
                    g_a = g_h @ self.weights[0][: self.d].T
        return grad, (g_a if need_input else None)

    def _grad_views(self, flat):
        gw, gb = [], []
        for (i, o), start in zip(self.shapes, self.offsets[:-1]):
            gw.append(flat[start:start + i * o].reshape(i, o))
            gb.append(flat[start + i * o:start + i * o + o])
        return gw, gb

    def loss_and_grad(self, x_t, target, t):
        """Mean squared error over all rows and coordinates, and its gradient."""
        out, cache = self._forward(x_t, t)
        resid = out - target
        with np.errstate(over="ignore", invalid="ignore"):
            loss = float(np.mean(resid**2))
        if not math.isfinite(loss):
            raise DivergenceError("non-finite training loss")
        g = resid * (2.0 / resid.size)
        grad, _ = self._backward(cache, g)
        return loss, grad

    def loss(self, x_t, target, t) -> float:
        return float(np.mean((self.forward(x_t, t) - target) ** 2))

    def vjp(self, x, t, u) -> np.ndarray:
        """``u^T dv/dx`` row by row."""
        out, cache = self._forward(x, t)
        _, gx = self._backward(cache, np.asarray(u, dtype=np.float64), need_input=True)
        return gx

    # -- forward mode -------------------------------------------------------

    def jvp(self, x, t, v) -> np.ndarray:
        """Directional derivative ``(dv/dx) v`` row by row.

        ``v`` may carry a leading probe axis, shape ``(K, b, d)``; the forward
        pass is then shared across probes.
        """
        _, cache = self._forward(x, t)
        v = np.asarray(v, dtype=np.float64)
        lead = v.shape[:-2]
        b = cache[0][0].shape[0]
        tang = v.reshape(-1, b, self.d)
        k = tang.shape[0]
        dh = (tang.reshape(k * b, self.d) @ self.weights[0][: self.d]).reshape(k, b, -1)
        for i in range(self.n_layers):
            h, sig, _ = cache[i + 1]
            da = dh * _silu_grad(h, sig)  # broadcasts over the probe axis
            W = self.weights[i + 1]
            dh = (da.reshape(k * b, -1) @ W).reshape(k, b, -1)
        return dh.reshape(*lead, b, self.d)


@dataclass
class OptimizerState:
    """AdamW moments and hyperparameters; updated in place by :func:`adamw_step`."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 5e-3
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip: float | None = 10.0
    last_grad_norm: float = field(default=0.0, repr=False)

    @classmethod
    def for_params(cls, params, **kwargs) -> "OptimizerState":
        return cls(np.zeros_like(params), np.zeros_like(params), **kwargs)


def clip_by_global_norm(grad, max_norm):
    norm = float(np.sqrt(np.dot(grad, grad)))
    if max_norm is not None and norm > max_norm:
        return grad * (max_norm / norm), norm
    return grad, norm


def adamw_step(params: np.ndarray, state: OptimizerState, grad: np.ndarray) -> np.ndarray:
    """One AdamW update of ``params`` (in place) with decoupled weight decay."""
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient")
    grad, state.last_grad_norm = clip_by_global_norm(grad, state.clip)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    if state.weight_decay:
        params *= 1.0 - state.lr * state.weight_decay
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
