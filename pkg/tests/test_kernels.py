import os
import subprocess
import sys

import numpy as np

from forcepour import kernels


def _random_problem(rng, steps=7, batch=5, n_in=3, hidden=4):
    w = rng.normal(size=(4 * hidden, hidden + n_in)) * 0.5
    b = rng.normal(size=4 * hidden) * 0.5
    w_init = rng.normal(size=(hidden, n_in))
    b_init = rng.normal(size=hidden)
    head_w = rng.normal(size=(2, hidden))
    head_b = rng.normal(size=2)
    x = rng.normal(size=(steps, batch, n_in))
    return w, b, w_init, b_init, head_w, head_b, x


def test_compiled_backward_matches_python_source():
    rng = np.random.default_rng(0)
    w, b, w_init, b_init, head_w, head_b, x = _random_problem(rng)
    hs, cs, gates, tcs, y = kernels.lstm_forward(w, b, w_init, b_init, head_w, head_b, x)
    dy = rng.normal(size=y.shape)
    fast = kernels.lstm_backward(w, head_w, x, hs, cs, gates, tcs, dy)
    plain = kernels._lstm_backward(w, head_w, x, hs, cs, gates, tcs, dy)
    for a, c in zip(fast, plain):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-13)


def test_dtw_backends_agree_on_real_valued_sequences():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = np.cumsum(rng.normal(size=rng.integers(1, 60)))
        b = np.cumsum(rng.normal(size=rng.integers(1, 60)))
        assert abs(kernels._dtw_loop(a, b) - kernels._dtw_rowscan(a, b)) <= 1e-9 * (1 + abs(kernels._dtw_loop(a, b)))


def test_pairwise_matches_single_calls():
    rng = np.random.default_rng(2)
    seqs = [rng.normal(size=rng.integers(1, 15)) for _ in range(4)]
    d = kernels.pairwise_dtw(seqs)
    for i in range(4):
        for j in range(4):
            want = kernels.dtw_cost(seqs[i], seqs[j]) / (seqs[i].size + seqs[j].size)
            assert abs(d[i, j] - want) <= 1e-12


def test_disable_flag_selects_numpy():
    env = dict(os.environ, FORCEPOUR_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from forcepour._accel import backend; print(backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
