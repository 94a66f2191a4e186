"""Dense primitives shared by the networks: affine maps, activations and a
central-difference gradient used as a test oracle.

Vectors and matrices are plain float64 numpy arrays.
"""
import numpy as np


def _as_vector(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    return x


def _check_finite(x, name):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")


def affine(w, b, x):
    """Return ``w @ x + b``."""
    w = np.asarray(w, dtype=np.float64)
    b = _as_vector(b, "b")
    x = _as_vector(x, "x")
    if w.ndim != 2:
        raise ValueError(f"w must be 2-D, got shape {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"w has {w.shape[1]} columns but x has length {x.shape[0]}")
    if w.shape[0] != b.shape[0]:
        raise ValueError(f"w has {w.shape[0]} rows but b has length {b.shape[0]}")
    return w @ x + b


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": np.tanh, "softmax": softmax}


def activate(kind, x):
    """Apply ``sigmoid``, ``tanh`` or ``softmax`` to a non-empty vector."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    x = _as_vector(x, "x")
    if x.size == 0:
        raise ValueError("activation input must be non-empty")
    _check_finite(x, "activation input")
    return fn(x)


def finite_diff_grad(f, x, eps=1e-5):
    """Central-difference gradient of the scalar function ``f`` at ``x``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"f is not finite near component {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(x.shape)
