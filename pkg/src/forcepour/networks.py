"""The three task networks (force estimator ``frc``, velocity generator
``vel``, stop classifier ``stp``): parameters, batches, forward passes,
losses with their gradients, and checkpoint files.

Each network is an LSTM over z-scored inputs with a learned initial state
and one fully connected head. ``vel`` and ``stp`` read the full feature
vector ``[theta, f, z]``; ``frc`` reads ``[theta, z]``.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .dataset import N_FEATURES, pad_sequences
from .lstm import GATES, InitParams, LstmParams, init_state, lstm_step
from .mathops import softmax

KINDS = ("frc", "vel", "stp")
OUTPUT_SIZE = {"frc": 1, "vel": 1, "stp": 2}
INPUT_SIZE = {"frc": N_FEATURES - 1, "vel": N_FEATURES, "stp": N_FEATURES}
PARAM_NAMES = (
    tuple("w_" + g for g in GATES)
    + tuple("b_" + g for g in GATES)
    + ("w_init", "b_init", "head_w", "head_b")
)
PROB_FLOOR = 1e-12
CHECKPOINT_FORMAT = "forcepour-checkpoint"


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"unknown network kind {kind!r}; expected one of {KINDS}")


@dataclass
class NetworkBundle:
    kind: str
    lstm: LstmParams
    init: InitParams
    head_w: np.ndarray
    head_b: np.ndarray
    in_mean: np.ndarray
    in_std: np.ndarray
    target_var: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_kind(self.kind)
        n_in = INPUT_SIZE[self.kind]
        n_out = OUTPUT_SIZE[self.kind]
        if self.lstm.input_size != n_in:
            raise ValueError(f"{self.kind} takes {n_in} inputs, LSTM has {self.lstm.input_size}")
        if self.init.w_init.shape != (self.lstm.hidden_size, n_in):
            raise ValueError(f"init head has shape {self.init.w_init.shape}")
        if self.head_w.shape != (n_out, self.lstm.hidden_size) or self.head_b.shape != (n_out,):
            raise ValueError(f"{self.kind} head must map {self.lstm.hidden_size} -> {n_out}")
        if self.in_mean.shape != (n_in,) or self.in_std.shape != (n_in,):
            raise ValueError("scaler statistics have the wrong length")
        if not np.all(self.in_std > 0):
            raise ValueError("scaler standard deviations must be positive")

    @property
    def hidden_size(self):
        return self.lstm.hidden_size

    def params(self):
        """Name -> array mapping. The arrays are the live parameters."""
        out = {}
        for g in GATES:
            out["w_" + g] = getattr(self.lstm, "w_" + g)
            out["b_" + g] = getattr(self.lstm, "b_" + g)
        out["w_init"] = self.init.w_init
        out["b_init"] = self.init.b_init
        out["head_w"] = self.head_w
        out["head_b"] = self.head_b
        return {k: out[k] for k in PARAM_NAMES}

    def copy(self):
        return _from_params(
            self.kind, {k: v.copy() for k, v in self.params().items()},
            self.in_mean.copy(), self.in_std.copy(), self.target_var, dict(self.meta),
        )

    def scale(self, x):
        return (np.asarray(x, dtype=np.float64) - self.in_mean) / self.in_std


def _from_params(kind, p, in_mean, in_std, target_var=1.0, meta=None):
    lstm = LstmParams(*(p["w_" + g] for g in GATES), *(p["b_" + g] for g in GATES))
    return NetworkBundle(
        kind, lstm, InitParams(p["w_init"], p["b_init"]), p["head_w"], p["head_b"],
        in_mean, in_std, target_var, meta or {},
    )


def zero_network(kind, hidden_size=16):
    """All-zero parameters and an identity scaler."""
    _check_kind(kind)
    n_in, n_out = INPUT_SIZE[kind], OUTPUT_SIZE[kind]
    return NetworkBundle(
        kind, LstmParams.zeros(hidden_size, n_in), InitParams.zeros(hidden_size, n_in),
        np.zeros((n_out, hidden_size)), np.zeros(n_out), np.zeros(n_in), np.ones(n_in),
    )


def init_network(kind, hidden_size, rng, in_mean=None, in_std=None, scale=0.08):
    """Uniform(-scale, scale) initialization of every parameter."""
    net = zero_network(kind, hidden_size)
    for arr in net.params().values():
        arr[...] = rng.uniform(-scale, scale, arr.shape)
    if in_mean is not None:
        net.in_mean = np.asarray(in_mean, dtype=np.float64)
    if in_std is not None:
        net.in_std = np.asarray(in_std, dtype=np.float64)
    net.__post_init__()
    return net


# -- data ------------------------------------------------------------------


def velocity_targets(theta):
    """First differences ``omega_t = theta_{t+1} - theta_t``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size < 2:
        raise ValueError("need at least two angles to form a velocity")
    return np.diff(theta)


def stop_labels(length, t_max):
    """One-hot stop targets: class 1 on the last real frame and on every
    padded frame after it, class 0 before."""
    labels = np.zeros((t_max, 2))
    labels[: length - 1, 0] = 1.0
    labels[length - 1 :, 1] = 1.0
    return labels


def network_inputs(kind, trial):
    feats = trial.features()
    if kind == "frc":
        return np.delete(feats, 1, axis=1)
    return feats


@dataclass
class SequenceBatch:
    kind: str
    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        if self.inputs.shape[0] == 0:
            raise ValueError("empty batch")

    @property
    def n_trials(self):
        return self.inputs.shape[0]

    @property
    def t_max(self):
        return self.inputs.shape[1]


def make_batch(kind, trials, t_max=None):
    """Pad trials into a training batch for ``kind``.

    ``vel`` and ``frc`` use zero padding with the loss masked to real
    targets (``T_i - 1`` velocities, ``T_i`` forces). ``stp`` repeats the
    last frame and its mask covers the ``T_i`` real frames.
    """
    _check_kind(kind)
    trials = list(trials)
    if not trials:
        raise ValueError("empty batch")
    if t_max is None:
        t_max = max(tr.length for tr in trials)
    lengths = np.array([tr.length for tr in trials], dtype=np.int64)
    mode = "end_value" if kind == "stp" else "zero"
    inputs, frame_mask = pad_sequences([network_inputs(kind, tr) for tr in trials], t_max, mode)
    if kind == "vel":
        targets, mask = pad_sequences([velocity_targets(tr.theta)[:, None] for tr in trials], t_max, "zero")
    elif kind == "frc":
        targets, mask = pad_sequences([tr.force[:, None] for tr in trials], t_max, "zero")
    else:
        targets = np.stack([stop_labels(n, t_max) for n in lengths])
        mask = frame_mask
    return SequenceBatch(kind, inputs, targets, mask, lengths)


def input_statistics(kind, trials):
    """Per-feature mean and std over real frames; constant features get
    std 1 so they pass through centred."""
    x = np.concatenate([network_inputs(kind, tr) for tr in trials])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-8] = 1.0
    return mean, std


def target_variance(batch):
    if batch.kind == "stp":
        return 1.0
    vals = batch.targets[..., 0][batch.mask]
    var = float(vals.var())
    return var if var > 1e-12 else 1.0


# -- forward passes --------------------------------------------------------


class Stepper:
    """Runs one network a step at a time with private recurrent state."""

    def __init__(self, net):
        self.net = net
        self.h = None
        self.c = None

    def start(self, x_first):
        self.h, self.c = init_state(self.net.init, self.net.scale(x_first))

    def step(self, x_t):
        if self.h is None:
            self.start(x_t)
        self.h, self.c, _ = lstm_step(self.net.lstm, self.net.scale(x_t), self.h, self.c)
        out = self.net.head_w @ self.h + self.net.head_b
        if self.net.kind == "stp":
            return softmax(out)
        return out


def _frames(kind, theta, force, z):
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64)
    cols = [theta[:, None]]
    if kind != "frc":
        cols.append(np.atleast_1d(np.asarray(force, dtype=np.float64))[:, None])
    cols.append(np.broadcast_to(z, (theta.size, z.size)))
    return np.hstack(cols)


def _run(net, kind, frames):
    if net.kind != kind:
        raise ValueError(f"expected a {kind} network, got {net.kind}")
    stepper = Stepper(net)
    stepper.start(frames[0])
    return np.array([stepper.step(x) for x in frames])


def forward_vel(net, theta, force, z):
    """Predicted velocities (degrees per step) for each input frame."""
    return _run(net, "vel", _frames("vel", theta, force, z))[:, 0]


def forward_stp(net, theta, force, z):
    """Per-frame ``[p_continue, p_stop]``."""
    return _run(net, "stp", _frames("stp", theta, force, z))


def forward_frc(net, theta, z):
    """Estimated sensed force (lbf) for each input frame."""
    return _run(net, "frc", _frames("frc", theta, None, z))[:, 0]


def predict_batch(net, inputs):
    """Batched forward pass over padded raw inputs ``(n, T, D)``.

    Returns head outputs ``(n, T, K)`` (logits for ``stp``) and the kernel
    cache for :func:`loss_and_grads`.
    """
    x = np.ascontiguousarray(np.transpose(net.scale(inputs), (1, 0, 2)))
    w, b = net.lstm.stacked()
    hs, cs, gates, tcs, y = kernels.lstm_forward(
        w, b, net.init.w_init, net.init.b_init, net.head_w, net.head_b, x
    )
    return np.transpose(y, (1, 0, 2)), (x, w, hs, cs, gates, tcs)


# -- losses ----------------------------------------------------------------


def loss(kind, predictions, batch):
    """Loss of ``predictions`` against ``batch``.

    ``vel``/``frc``: mean over trials of the mean squared error over real
    targets. ``stp``: cross-entropy summed over trials and every padded
    step; ``predictions`` are probabilities, floored at 1e-12 before the log.
    """
    _check_kind(kind)
    if batch.n_trials == 0:
        raise ValueError("empty batch")
    predictions = np.asarray(predictions, dtype=np.float64)
    if kind == "stp":
        probs = np.maximum(predictions, PROB_FLOOR)
        return float(-np.sum(batch.targets * np.log(probs)))
    pred = predictions.reshape(batch.targets.shape[:2])
    resid = (batch.targets[..., 0] - pred) * batch.mask
    per_trial = np.sum(resid * resid, axis=1) / np.sum(batch.mask, axis=1)
    return float(np.mean(per_trial))


def loss_and_grads(net, batch, return_outputs=False):
    """Loss and exact BPTT gradients for every parameter of ``net``.

    With ``return_outputs`` the head outputs (probabilities for ``stp``)
    are returned as a third element.
    """
    if net.kind != batch.kind:
        raise ValueError(f"{net.kind} network given a {batch.kind} batch")
    out, cache = predict_batch(net, batch.inputs)
    if net.kind == "stp":
        probs = softmax(out)
        value = loss("stp", probs, batch)
        # exact for unfloored probabilities
        d_out = probs - batch.targets
        out = probs
    else:
        value = loss(net.kind, out[..., 0], batch)
        counts = np.sum(batch.mask, axis=1)
        weight = batch.mask / (counts[:, None] * batch.n_trials)
        d_out = (2.0 * (out[..., 0] - batch.targets[..., 0]) * weight)[..., None]
    grads = _backward(net, cache, d_out)
    if return_outputs:
        return value, grads, out
    return value, grads


def _backward(net, cache, d_out):
    x, w, hs, cs, gates, tcs = cache
    dy = np.ascontiguousarray(np.transpose(d_out, (1, 0, 2)))
    dw, db, dw_init, db_init, dhead_w, dhead_b = kernels.lstm_backward(
        w, net.head_w, x, hs, cs, gates, tcs, dy
    )
    hidden = net.hidden_size
    grads = {}
    for k, g in enumerate(GATES):
        grads["w_" + g] = dw[k * hidden : (k + 1) * hidden]
        grads["b_" + g] = db[k * hidden : (k + 1) * hidden]
    grads["w_init"] = dw_init
    grads["b_init"] = db_init
    grads["head_w"] = dhead_w
    grads["head_b"] = dhead_b
    return {k: grads[k] for k in PARAM_NAMES}


def batch_loss(net, batch):
    """Loss of ``net`` on ``batch`` (forward only)."""
    out, _ = predict_batch(net, batch.inputs)
    if net.kind == "stp":
        return loss("stp", softmax(out), batch)
    return loss(net.kind, out[..., 0], batch)


# -- checkpoints -----------------------------------------------------------


def _encode(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": [float(v) for v in arr.reshape(-1)]}


def _decode(obj, name):
    try:
        data = np.array(obj["data"], dtype=np.float64)
        return data.reshape(obj["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ValueError(f"checkpoint field {name}: {exc}") from None


def save_checkpoint(net, path):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "kind": net.kind,
        "hidden_size": net.hidden_size,
        "input_size": INPUT_SIZE[net.kind],
        "params": {k: _encode(v) for k, v in net.params().items()},
        "scaler": {"mean": _encode(net.in_mean), "std": _encode(net.in_std)},
        "target_var": net.target_var,
        "meta": net.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path, kind=None):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if kind is not None and doc["kind"] != kind:
        raise ValueError(f"{path}: holds a {doc['kind']} network, expected {kind}")
    missing = set(PARAM_NAMES) - set(doc["params"])
    if missing:
        raise ValueError(f"{path}: missing parameters {sorted(missing)}")
    params = {k: _decode(doc["params"][k], k) for k in PARAM_NAMES}
    return _from_params(
        doc["kind"], params,
        _decode(doc["scaler"]["mean"], "scaler.mean"), _decode(doc["scaler"]["std"], "scaler.std"),
        float(doc["target_var"]), doc.get("meta", {}),
    )
