"""Adam, full-batch BPTT training and the stop-classifier accuracy."""
import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mathops import softmax
from .networks import (
    batch_loss, init_network, input_statistics, loss_and_grads, make_batch,
    predict_batch, save_checkpoint, target_variance,
)

log = logging.getLogger(__name__)

DEFAULT_EPOCHS = {"vel": 4000, "stp": 2000, "frc": 2000}


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch, value):
        super().__init__(f"loss became {value} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """Bias-corrected Adam update of ``params`` (a name -> array dict) in place.

    A non-finite gradient rejects the whole step before anything changes.
    """
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise ValueError(f"gradient {name!r} does not match any parameter")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def clip_by_global_norm(grads, max_norm):
    """Scale all gradients by one factor so their joint L2 norm is at most
    ``max_norm``. Returns the norm before clipping."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float = 0.01
    hidden_size: int = 16
    seed: int = 0
    clip_norm: float = 5.0
    init_scale: float = 0.08
    log_every: int = 100
    checkpoint_every: int = 0
    checkpoint_dir: str = ""

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")

    @classmethod
    def for_kind(cls, kind, **overrides):
        overrides.setdefault("epochs", DEFAULT_EPOCHS[kind])
        return cls(**overrides)


def _accuracy(probs, batch):
    pred = np.argmax(probs, axis=-1)
    truth = np.argmax(batch.targets, axis=-1)
    return float(np.mean(pred[batch.mask] == truth[batch.mask]))


def classifier_accuracy(net, data):
    """Fraction of real frames whose argmax class matches the stop label.

    ``data`` is a ``stp`` :class:`SequenceBatch` or a list of trials.
    """
    if net.kind != "stp":
        raise ValueError(f"accuracy needs a stp network, got {net.kind}")
    batch = data if hasattr(data, "mask") else make_batch("stp", data)
    if not np.any(batch.mask):
        raise ValueError("no frames to score")
    out, _ = predict_batch(net, batch.inputs)
    return _accuracy(softmax(out), batch)


def train(kind, trials, cfg, t_max=None):
    """Train one network on ``trials`` with full-batch Adam.

    Returns the trained bundle and a per-epoch history of dicts with keys
    ``epoch``, ``loss`` (raw), ``norm_loss`` (loss over target variance; equal
    to ``loss`` for ``stp``), ``accuracy`` (``stp`` only) and ``seconds``.
    The history entry for epoch ``k`` is evaluated before the ``k``-th update.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("no training trials")
    batch = make_batch(kind, trials, t_max)
    rng = np.random.default_rng(cfg.seed)
    mean, std = input_statistics(kind, trials)
    net = init_network(kind, cfg.hidden_size, rng, mean, std, cfg.init_scale)
    net.target_var = target_variance(batch)
    state = AdamState(lr=cfg.learning_rate)
    params = net.params()
    history = []
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        value, grads, out = loss_and_grads(net, batch, return_outputs=True)
        if not np.isfinite(value):
            raise TrainingDiverged(epoch, value)
        rec = {"epoch": epoch, "loss": value, "norm_loss": value / net.target_var}
        if kind == "stp":
            rec["accuracy"] = _accuracy(out, batch)
        clip_by_global_norm(grads, cfg.clip_norm)
        adam_step(state, params, grads)
        rec["seconds"] = time.perf_counter() - start
        history.append(rec)
        if cfg.log_every and epoch % cfg.log_every == 0:
            log.info("%s epoch %d loss %.6g", kind, epoch, rec["norm_loss"])
        if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0 and cfg.checkpoint_dir:
            save_checkpoint(net, Path(cfg.checkpoint_dir) / f"{kind}-epoch{epoch:05d}.json")
    final = batch_loss(net, batch)
    if not np.isfinite(final):
        raise TrainingDiverged(cfg.epochs, final)
    net.meta = {
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
        "clip_norm": cfg.clip_norm,
        "n_trials": len(trials),
        "t_max": batch.t_max,
        "final_loss": final,
        "final_norm_loss": final / net.target_var,
    }
    if kind == "stp":
        net.meta["final_accuracy"] = classifier_accuracy(net, batch)
    return net, history


def write_history(history, path):
    """Per-epoch CSV log. Wall-clock times go to a JSON sidecar so the CSV
    is byte-identical across reruns."""
    path = Path(path)
    has_acc = bool(history) and "accuracy" in history[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "norm_loss"] + (["accuracy"] if has_acc else []))
        for rec in history:
            row = [rec["epoch"], "%.17g" % rec["loss"], "%.17g" % rec["norm_loss"]]
            if has_acc:
                row.append("%.17g" % rec["accuracy"])
            w.writerow(row)
    timing = {"epochs": len(history), "seconds": [round(r["seconds"], 6) for r in history]}
    path.with_suffix(".timing.json").write_text(json.dumps(timing) + "\n")
