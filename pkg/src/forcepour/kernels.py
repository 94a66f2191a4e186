"""Hot loops: batched LSTM forward/backward over padded sequences and the
DTW dynamic program.

The backward pass and DTW are written in numba-compatible numpy and compiled
with ``njit`` unless ``FORCEPOUR_DISABLE_NUMBA`` is set (see ``_accel``). DTW
has a separate row-scan implementation for the numpy path because the plain
double loop is far too slow without compilation. The forward pass is never
compiled: it is dominated by exp/tanh, where numpy's vectorized ufuncs beat
numba's scalar libm calls (see benchmarks/bench_kernels.py).

Array layout is time-major: ``x`` is ``(T, B, D)`` so ``x[t]`` is a
contiguous ``(B, D)`` block. Gate weights are stacked as ``(4H, H + D)`` in
the order input, output, forget, candidate and act on ``[h_prev, x_t]``.
"""
import numpy as np

from ._accel import USE_NUMBA, jit


def _lstm_forward(w, b, w_init, b_init, head_w, head_b, x):
    n_steps, batch, _ = x.shape
    hidden = w.shape[0] // 4
    n_out = head_w.shape[0]
    wh_t = np.ascontiguousarray(w[:, :hidden].T)
    wx_t = np.ascontiguousarray(w[:, hidden:].T)
    w_init_t = np.ascontiguousarray(w_init.T)
    head_w_t = np.ascontiguousarray(head_w.T)

    hs = np.empty((n_steps + 1, batch, hidden))
    cs = np.empty((n_steps + 1, batch, hidden))
    gates = np.empty((n_steps, batch, 4 * hidden))
    tcs = np.empty((n_steps, batch, hidden))
    y = np.empty((n_steps, batch, n_out))

    cs[0] = np.dot(x[0], w_init_t) + b_init
    hs[0] = np.tanh(cs[0])
    for t in range(n_steps):
        pre = np.dot(hs[t], wh_t) + np.dot(x[t], wx_t) + b
        gates[t, :, : 3 * hidden] = 1.0 / (1.0 + np.exp(-pre[:, : 3 * hidden]))
        gates[t, :, 3 * hidden :] = np.tanh(pre[:, 3 * hidden :])
        i = gates[t, :, :hidden]
        o = gates[t, :, hidden : 2 * hidden]
        f = gates[t, :, 2 * hidden : 3 * hidden]
        g = gates[t, :, 3 * hidden :]
        cs[t + 1] = f * cs[t] + i * g
        tcs[t] = np.tanh(cs[t + 1])
        hs[t + 1] = o * tcs[t]
        y[t] = np.dot(hs[t + 1], head_w_t) + head_b
    return hs, cs, gates, tcs, y


def _lstm_backward(w, head_w, x, hs, cs, gates, tcs, dy):
    n_steps, batch, n_in = x.shape
    hidden = w.shape[0] // 4
    wh = np.ascontiguousarray(w[:, :hidden])

    dwh_t = np.zeros((hidden, 4 * hidden))
    dwx_t = np.zeros((n_in, 4 * hidden))
    db = np.zeros(4 * hidden)
    dhead_w = np.zeros(head_w.shape)
    dhead_b = np.zeros(head_w.shape[0])
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    dpre = np.empty((batch, 4 * hidden))

    for t in range(n_steps - 1, -1, -1):
        dy_t = dy[t]
        dhead_w += np.dot(dy_t.T, hs[t + 1])
        for k in range(batch):
            dhead_b += dy_t[k]
        dh = np.dot(dy_t, head_w) + dh_next
        i = gates[t, :, :hidden]
        o = gates[t, :, hidden : 2 * hidden]
        f = gates[t, :, 2 * hidden : 3 * hidden]
        g = gates[t, :, 3 * hidden :]
        tc = tcs[t]
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dpre[:, :hidden] = dc * g * i * (1.0 - i)
        dpre[:, hidden : 2 * hidden] = dh * tc * o * (1.0 - o)
        dpre[:, 2 * hidden : 3 * hidden] = dc * cs[t] * f * (1.0 - f)
        dpre[:, 3 * hidden :] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dwh_t += np.dot(hs[t].T, dpre)
        dwx_t += np.dot(x[t].T, dpre)
        for k in range(batch):
            db += dpre[k]
        dh_next = np.dot(dpre, wh)

    dc0 = dc_next + dh_next * (1.0 - hs[0] * hs[0])
    dw_init = np.dot(dc0.T, x[0])
    db_init = np.zeros(hidden)
    for k in range(batch):
        db_init += dc0[k]
    dw = np.empty((4 * hidden, hidden + n_in))
    dw[:, :hidden] = dwh_t.T
    dw[:, hidden:] = dwx_t.T
    return dw, db, dw_init, db_init, dhead_w, dhead_b


def _dtw_loop(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    acc = 0.0
    for j in range(m):
        acc += abs(a[0] - b[j])
        prev[j] = acc
    for i in range(1, n):
        cur[0] = prev[0] + abs(a[i] - b[0])
        for j in range(1, m):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = best + abs(a[i] - b[j])
        prev, cur = cur, prev
    return prev[m - 1]


def _dtw_rowscan(a, b):
    # Within a row, D[j] = min(A[j], c[j] + D[j-1]) with A from the previous
    # row; unrolling gives D = S + cummin(A - S) where S = cumsum(c).
    row = np.cumsum(np.abs(a[0] - b))
    for i in range(1, a.shape[0]):
        c = np.abs(a[i] - b)
        diag_or_up = row.copy()
        diag_or_up[1:] = np.minimum(row[1:], row[:-1])
        anchored = c + diag_or_up
        s = np.cumsum(c)
        row = s + np.minimum.accumulate(anchored - s)
    return row[-1]


def _dtw_pairs(seqs_a, offs_a, seqs_b, offs_b, symmetric):
    na = offs_a.shape[0] - 1
    nb = offs_b.shape[0] - 1
    out = np.zeros((na, nb))
    for i in range(na):
        a = seqs_a[offs_a[i] : offs_a[i + 1]]
        j0 = i + 1 if symmetric else 0
        for j in range(j0, nb):
            b = seqs_b[offs_b[j] : offs_b[j + 1]]
            out[i, j] = _dtw_cost(a, b) / (a.shape[0] + b.shape[0])
    if symmetric:
        for i in range(na):
            for j in range(i + 1, nb):
                out[j, i] = out[i, j]
    return out


lstm_forward = _lstm_forward
lstm_backward = jit(_lstm_backward)

if USE_NUMBA:
    _dtw_cost = jit(_dtw_loop)
    _dtw_pairs = jit(_dtw_pairs)
else:
    _dtw_cost = _dtw_rowscan

dtw_cost = _dtw_cost


def pairwise_dtw(seqs_a, seqs_b=None):
    """Normalized DTW distances between every sequence of ``seqs_a`` and
    every sequence of ``seqs_b`` (or ``seqs_a`` against itself)."""
    symmetric = seqs_b is None
    flat_a, offs_a = _pack(seqs_a)
    if symmetric:
        flat_b, offs_b = flat_a, offs_a
    else:
        flat_b, offs_b = _pack(seqs_b)
    return _dtw_pairs(flat_a, offs_a, flat_b, offs_b, symmetric)


def _pack(seqs):
    seqs = [np.ascontiguousarray(s, dtype=np.float64) for s in seqs]
    offs = np.zeros(len(seqs) + 1, dtype=np.int64)
    offs[1:] = np.cumsum([len(s) for s in seqs])
    flat = np.concatenate(seqs) if seqs else np.zeros(0)
    return flat, offs
