"""Time the hot kernels under the numba and pure-numpy backends.

    python benchmarks/bench_kernels.py [--batch 300] [--steps 140] [--seqs 40]

The backend is fixed at import time, so each one is timed in its own
subprocess (``FORCEPOUR_DISABLE_NUMBA`` set or unset) and the results are
printed side by side. Both backends are also checked for agreement.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def measure(batch, steps, n_seqs, hidden, repeat):
    from forcepour import kernels
    from forcepour._accel import backend

    rng = np.random.default_rng(0)
    n_in = 10
    w = rng.uniform(-0.08, 0.08, (4 * hidden, hidden + n_in))
    b = rng.uniform(-0.08, 0.08, 4 * hidden)
    w_init = rng.uniform(-0.08, 0.08, (hidden, n_in))
    b_init = rng.uniform(-0.08, 0.08, hidden)
    head_w = rng.uniform(-0.08, 0.08, (1, hidden))
    head_b = np.zeros(1)
    x = rng.normal(size=(steps, batch, n_in))
    dy = rng.normal(size=(steps, batch, 1))
    hs, cs, gates, tcs, y = kernels.lstm_forward(w, b, w_init, b_init, head_w, head_b, x)
    seqs = [np.cumsum(rng.normal(size=rng.integers(70, 140))) for _ in range(n_seqs)]

    out = {"backend": backend()}
    out["lstm_forward"] = _best(lambda: kernels.lstm_forward(w, b, w_init, b_init, head_w, head_b, x), repeat)
    out["lstm_backward"] = _best(lambda: kernels.lstm_backward(w, head_w, x, hs, cs, gates, tcs, dy), repeat)
    out["pairwise_dtw"] = _best(lambda: kernels.pairwise_dtw(seqs), repeat)
    grads = kernels.lstm_backward(w, head_w, x, hs, cs, gates, tcs, dy)
    out["checksum_backward"] = float(sum(np.sum(np.abs(g)) for g in grads))
    out["checksum_dtw"] = float(np.sum(kernels.pairwise_dtw(seqs)))
    return out


def _run_backend(disable, args):
    env = dict(os.environ)
    if disable:
        env["FORCEPOUR_DISABLE_NUMBA"] = "1"
    else:
        env.pop("FORCEPOUR_DISABLE_NUMBA", None)
    cmd = [sys.executable, __file__, "--child", "--batch", str(args.batch), "--steps", str(args.steps),
           "--seqs", str(args.seqs), "--hidden", str(args.hidden), "--repeat", str(args.repeat)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch", type=int, default=300)
    p.add_argument("--steps", type=int, default=140)
    p.add_argument("--seqs", type=int, default=40)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.child:
        print(json.dumps(measure(args.batch, args.steps, args.seqs, args.hidden, args.repeat)))
        return

    fast = _run_backend(False, args)
    slow = _run_backend(True, args)
    print(f"batch {args.batch}, steps {args.steps}, hidden {args.hidden}, {args.seqs} DTW sequences")
    print(f"{'kernel':<16}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for name in ("lstm_forward", "lstm_backward", "pairwise_dtw"):
        print(f"{name:<16}{fast[name]:>11.4f}s{slow[name]:>11.4f}s{slow[name] / fast[name]:>9.2f}x")
    for key in ("checksum_backward", "checksum_dtw"):
        a, b = fast[key], slow[key]
        status = "ok" if abs(a - b) <= 1e-9 * max(1.0, abs(a)) else "MISMATCH"
        print(f"{key}: {status} ({a:.12g} vs {b:.12g})")


if __name__ == "__main__":
    main()
