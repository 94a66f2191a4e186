"""Single LSTM step (Zaremba formulation), its exact backward pass, and the
learned initial-state head.

Gates read the concatenation ``[h_prev, x_t]``:

    i = sigmoid(W_i [h, x] + b_i)      o = sigmoid(W_o [h, x] + b_o)
    f = sigmoid(W_f [h, x] + b_f)      g = tanh(W_g [h, x] + b_g)
    c_t = f * c_prev + i * g           h_t = o * tanh(c_t)

The per-step functions here are the reference path used by generation and
the tests; batched training goes through ``kernels``.
"""
from dataclasses import dataclass, field

import numpy as np

from .mathops import affine, sigmoid

GATES = ("i", "o", "f", "g")


@dataclass
class LstmParams:
    w_i: np.ndarray
    w_o: np.ndarray
    w_f: np.ndarray
    w_g: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray

    def __post_init__(self):
        shape = self.w_i.shape
        for gate in GATES:
            w = getattr(self, "w_" + gate)
            b = getattr(self, "b_" + gate)
            if w.shape != shape:
                raise ValueError(f"w_{gate} has shape {w.shape}, expected {shape}")
            if b.shape != (shape[0],):
                raise ValueError(f"b_{gate} has shape {b.shape}, expected ({shape[0]},)")
        if shape[0] <= 0 or shape[1] <= shape[0]:
            raise ValueError(f"gate matrices must be hidden x (hidden + input), got {shape}")

    @property
    def hidden_size(self):
        return self.w_i.shape[0]

    @property
    def input_size(self):
        return self.w_i.shape[1] - self.w_i.shape[0]

    @classmethod
    def zeros(cls, hidden_size, input_size):
        cols = hidden_size + input_size
        return cls(
            *(np.zeros((hidden_size, cols)) for _ in GATES),
            *(np.zeros(hidden_size) for _ in GATES),
        )

    def stacked(self):
        """Gate weights and biases stacked in i, o, f, g order."""
        w = np.concatenate([self.w_i, self.w_o, self.w_f, self.w_g])
        b = np.concatenate([self.b_i, self.b_o, self.b_f, self.b_g])
        return w, b


@dataclass
class InitParams:
    w_init: np.ndarray
    b_init: np.ndarray

    def __post_init__(self):
        if self.w_init.ndim != 2 or self.b_init.shape != (self.w_init.shape[0],):
            raise ValueError(
                f"init head shapes disagree: w {self.w_init.shape}, b {self.b_init.shape}"
            )

    @classmethod
    def zeros(cls, hidden_size, input_size):
        return cls(np.zeros((hidden_size, input_size)), np.zeros(hidden_size))


@dataclass
class StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    o: np.ndarray
    f: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    hidden_size: int = field(init=False)

    def __post_init__(self):
        self.hidden_size = self.c.shape[0]


def _check_state(p, x, h_prev, c_prev):
    if x.shape != (p.input_size,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.input_size},)")
    for name, v in (("h_prev", h_prev), ("c_prev", c_prev)):
        if v.shape != (p.hidden_size,):
            raise ValueError(f"{name} has shape {v.shape}, expected ({p.hidden_size},)")


def lstm_step(p, x_t, h_prev, c_prev):
    """One LSTM step. Returns ``(h_t, c_t, cache)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    _check_state(p, x_t, h_prev, c_prev)
    hx = np.concatenate([h_prev, x_t])
    i = sigmoid(affine(p.w_i, p.b_i, hx))
    o = sigmoid(affine(p.w_o, p.b_o, hx))
    f = sigmoid(affine(p.w_f, p.b_f, hx))
    g = np.tanh(affine(p.w_g, p.b_g, hx))
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, StepCache(x_t, h_prev, c_prev, i, o, f, g, c, tanh_c)


def lstm_step_backward(p, cache, dh_t, dc_t):
    """Backpropagate ``dL/dh_t`` and ``dL/dc_t`` through one step.

    Returns ``(grads, dx, dh_prev, dc_prev)`` where ``grads`` maps the
    parameter names of :class:`LstmParams` to arrays of matching shape.
    """
    if cache.hidden_size != p.hidden_size or cache.x.shape != (p.input_size,):
        raise ValueError("cache was not produced with these parameters")
    dh_t = np.asarray(dh_t, dtype=np.float64)
    dc_t = np.asarray(dc_t, dtype=np.float64)
    i, o, f, g = cache.i, cache.o, cache.f, cache.g
    dc = dc_t + dh_t * o * (1.0 - cache.tanh_c**2)
    d_pre = {
        "i": dc * g * i * (1.0 - i),
        "o": dh_t * cache.tanh_c * o * (1.0 - o),
        "f": dc * cache.c_prev * f * (1.0 - f),
        "g": dc * i * (1.0 - g**2),
    }
    hx = np.concatenate([cache.h_prev, cache.x])
    grads = {}
    d_hx = np.zeros_like(hx)
    for gate in GATES:
        grads["w_" + gate] = np.outer(d_pre[gate], hx)
        grads["b_" + gate] = d_pre[gate].copy()
        d_hx += getattr(p, "w_" + gate).T @ d_pre[gate]
    hidden = p.hidden_size
    return grads, d_hx[hidden:], d_hx[:hidden], dc * f


def init_state(ip, x_1):
    """Learned initial state: ``c_0 = w_init x_1 + b_init``, ``h_0 = tanh(c_0)``."""
    c0 = affine(ip.w_init, ip.b_init, x_1)
    return np.tanh(c0), c0


def rnn_step(w, b, x_t, h_prev):
    """Plain tanh RNN step over ``[h_prev, x_t]``; kept as a baseline."""
    hx = np.concatenate([np.asarray(h_prev, dtype=np.float64), np.asarray(x_t, dtype=np.float64)])
    return np.tanh(affine(w, b, hx))
