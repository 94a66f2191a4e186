import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_net, truncate
from forcepour.lstm import init_state, lstm_step
from forcepour.mathops import finite_diff_grad, softmax
from forcepour.networks import (
    KINDS, PARAM_NAMES, SequenceBatch, batch_loss, forward_frc, forward_stp, forward_vel,
    load_checkpoint, loss, loss_and_grads, make_batch, save_checkpoint, stop_labels,
    velocity_targets, zero_network,
)


@pytest.mark.parametrize("theta, expected", [([0, 1, 3], [1, 2]), ([4, 4, 4], [0, 0]), ([10, 8], [-2])])
def test_velocity_targets(theta, expected):
    np.testing.assert_array_equal(velocity_targets(theta), expected)


def test_velocity_targets_needs_two_angles():
    with pytest.raises(ValueError):
        velocity_targets([1.0])


def test_stop_labels_layout():
    s = stop_labels(3, 5)
    np.testing.assert_array_equal(s[:, 1], [0, 0, 1, 1, 1])
    np.testing.assert_array_equal(s.sum(axis=1), 1)


def _hand_unrolled(net, frames):
    x = net.scale(frames)
    h, c = init_state(net.init, x[0])
    out = []
    for xt in x:
        h, c, _ = lstm_step(net.lstm, xt, h, c)
        out.append(net.head_w @ h + net.head_b)
    return np.array(out)


def test_zero_networks_emit_head_bias(tiny_corpus):
    tr = tiny_corpus.trials[0]
    z = tr.static.as_vector()
    vel = zero_network("vel", 4)
    vel.head_b[:] = 0.3
    np.testing.assert_array_equal(forward_vel(vel, tr.theta, tr.force, z), 0.3)
    frc = zero_network("frc", 4)
    frc.head_b[:] = 1.25
    np.testing.assert_array_equal(forward_frc(frc, tr.theta, z), 1.25)
    np.testing.assert_array_equal(forward_stp(zero_network("stp", 4), tr.theta, tr.force, z), 0.5)


def test_saturated_stop_head():
    stp = zero_network("stp", 3)
    stp.head_b[:] = [0.0, 20.0]
    s = forward_stp(stp, [1.0, 2.0], [0.5, 0.5], np.ones(8))
    np.testing.assert_allclose(s, [[0.0, 1.0]] * 2, atol=1e-8)


@pytest.mark.parametrize("kind, steps", [("vel", 1), ("vel", 3), ("frc", 1), ("frc", 4), ("stp", 3)])
def test_forward_matches_unrolled_oracle(tiny_corpus, kind, steps):
    trials = tiny_corpus.trials[:4]
    net = random_net(kind, trials, hidden=5, seed=steps)
    tr = trials[1]
    z = tr.static.as_vector()
    theta, force = tr.theta[:steps], tr.force[:steps]
    if kind == "frc":
        frames = np.column_stack([theta, np.tile(z, (steps, 1))])
        got = forward_frc(net, theta, z)[:, None]
    else:
        frames = np.column_stack([theta, force, np.tile(z, (steps, 1))])
        got = (forward_vel if kind == "vel" else forward_stp)(net, theta, force, z)
        if kind == "vel":
            got = got[:, None]
    want = _hand_unrolled(net, frames)
    if kind == "stp":
        want = softmax(want)
    np.testing.assert_allclose(got, want, atol=1e-13, rtol=0)


def test_kind_mismatch_rejected():
    with pytest.raises(ValueError):
        forward_vel(zero_network("stp", 2), [0.0], [0.0], np.zeros(8))
    with pytest.raises(ValueError):
        forward_frc(zero_network("vel", 2), [0.0], np.zeros(8))


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.floats(-30, 30))
def test_stop_argmax_shift_invariant(seed, shift):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(5, 2)) * 3
    assert np.array_equal(
        np.argmax(softmax(logits), axis=1), np.argmax(softmax(logits + shift), axis=1)
    )


def _manual_batch(kind, targets, lengths, t_max):
    n = len(lengths)
    mask = np.zeros((n, t_max), dtype=bool)
    for i, k in enumerate(lengths):
        mask[i, :k] = True
    tgt = np.zeros((n, t_max, 1))
    for i, seq in enumerate(targets):
        tgt[i, : len(seq), 0] = seq
    return SequenceBatch(kind, np.zeros((n, t_max, 10)), tgt, mask, np.array(lengths) + 1)


def test_double_mean_hand_example():
    batch = _manual_batch("vel", [[0.0, 0.0], [0.0]], [2, 1], 3)
    pred = np.zeros((2, 3))
    pred[0, :2] = [1.0, 2.0]
    pred[1, 0] = 3.0
    assert loss("vel", pred, batch) == 5.75


def test_exact_predictions_give_zero_loss(tiny_corpus):
    for kind in ("vel", "frc"):
        batch = make_batch(kind, tiny_corpus.trials[:3])
        assert loss(kind, batch.targets[..., 0], batch) == 0.0
    batch = make_batch("stp", tiny_corpus.trials[:3])
    assert abs(loss("stp", batch.targets, batch)) <= 1e-10


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        make_batch("vel", [])


@pytest.mark.parametrize("kind", ["vel", "frc"])
def test_zero_padding_leaves_loss_unchanged(tiny_corpus, kind):
    trials = tiny_corpus.trials[:3]
    net = random_net(kind, trials)
    tight = make_batch(kind, trials)
    loose = make_batch(kind, trials, t_max=tight.t_max + 17)
    assert abs(batch_loss(net, tight) - batch_loss(net, loose)) <= 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_stop_loss_terms_nonnegative(seed):
    rng = np.random.default_rng(seed)
    probs = softmax(rng.normal(size=(2, 6, 2)) * 5)
    targets = np.stack([stop_labels(4, 6), stop_labels(6, 6)])
    batch = SequenceBatch("stp", np.zeros((2, 6, 10)), targets, np.ones((2, 6), bool), np.array([4, 6]))
    terms = -targets * np.log(np.maximum(probs, 1e-12))
    assert np.all(terms >= 0)
    assert loss("stp", probs, batch) >= 0


@pytest.mark.parametrize("kind", KINDS)
def test_gradients_match_finite_differences(short_trials, kind):
    net = random_net(kind, short_trials)
    batch = make_batch(kind, short_trials)
    _, grads = loss_and_grads(net, batch)
    params = net.params()
    for name in PARAM_NAMES:
        arr = params[name]

        def f(v, arr=arr):
            saved = arr.copy()
            arr[...] = v
            try:
                return batch_loss(net, batch)
            finally:
                arr[...] = saved

        numeric = finite_diff_grad(f, arr.copy(), eps=1e-5)
        err = np.abs(grads[name] - numeric)
        assert np.all(err <= 1e-4 * np.abs(numeric) + 1e-7), (name, err.max())


def test_forward_is_deterministic(tiny_corpus):
    tr = tiny_corpus.trials[2]
    net = random_net("vel", tiny_corpus.trials)
    a = forward_vel(net, tr.theta, tr.force, tr.static.as_vector())
    b = forward_vel(net, tr.theta, tr.force, tr.static.as_vector())
    assert a.tobytes() == b.tobytes()


def test_batched_outputs_match_sequential(tiny_corpus):
    trials = [truncate(tiny_corpus.trials[i], n) for i, n in ((0, 9), (3, 5))]
    net = random_net("stp", trials)
    _, _, probs = loss_and_grads(net, make_batch("stp", trials), return_outputs=True)
    for i, tr in enumerate(trials):
        seq = forward_stp(net, tr.theta, tr.force, tr.static.as_vector())
        np.testing.assert_allclose(probs[i, : tr.length], seq, atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_checkpoint_round_trip(tmp_path, tiny_corpus, kind):
    net = random_net(kind, tiny_corpus.trials, hidden=6, seed=11)
    net.meta = {"epochs": 3, "final_loss": 0.1 + 0.2}
    path = tmp_path / f"{kind}.json"
    save_checkpoint(net, path)
    back = load_checkpoint(path, kind=kind)
    for name, arr in net.params().items():
        assert back.params()[name].tobytes() == arr.tobytes()
    assert back.in_mean.tobytes() == net.in_mean.tobytes()
    assert back.in_std.tobytes() == net.in_std.tobytes()
    assert back.meta == net.meta
    with pytest.raises(ValueError):
        load_checkpoint(path, kind="vel" if kind != "vel" else "stp")


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(path)
