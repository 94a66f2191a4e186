"""Command-line entry point: ``forcepour {synth,train,generate,evaluate}``.

Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.
"""
import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset import (
    CASES, CorpusError, GeneratorSpec, STATIC_FIELDS, default_spec, load_corpus,
    save_corpus, synthesize_corpus,
)
from .evaluation import DEFAULT_THRESHOLD, N_BINS, default_configs, run_case
from .generation import generate_simulated, write_trajectory
from .networks import KINDS, load_checkpoint, save_checkpoint
from .optim import DEFAULT_EPOCHS, TrainConfig, train, write_history

log = logging.getLogger("forcepour")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _cases(text):
    if text == "all":
        return sorted(CASES)
    try:
        ids = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'all' or a comma list of 1..7, got {text!r}")
    bad = [i for i in ids if i not in CASES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown case(s) {bad}")
    return ids


def build_parser():
    p = _Parser(prog="forcepour", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic demonstration corpus")
    s.add_argument("--spec", type=Path, help="generator spec JSON (default: built-in inventory)")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--out", type=Path, required=True)

    t = sub.add_parser("train", help="train one network")
    t.add_argument("--kind", choices=KINDS, required=True)
    t.add_argument("--corpus", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, help="default: vel 4000, stp 2000, frc 2000")
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--checkpoint-every", type=int, default=0)

    g = sub.add_parser("generate", help="generate a trajectory in simulation")
    g.add_argument("--checkpoints", type=Path, required=True,
                   help="directory holding frc.json, vel.json and stp.json")
    g.add_argument("--corpus", type=Path)
    g.add_argument("--trial", help="take theta_1 and z from this corpus trial id")
    g.add_argument("--theta1", type=float)
    g.add_argument("--z", help="comma-separated " + ",".join(STATIC_FIELDS))
    g.add_argument("--t-max", type=int, help="maximum velocity steps (default: T_max - 1 of the training data)")
    g.add_argument("--seed", type=int, default=0, help="unused; generation is deterministic")
    g.add_argument("--out", type=Path, required=True)

    e = sub.add_parser("evaluate", help="run generalization cases")
    e.add_argument("--corpus", type=Path, required=True)
    e.add_argument("--cases", type=_cases, default=sorted(CASES))
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    e.add_argument("--bins", type=int, default=N_BINS)
    for kind in ("vel", "stp", "frc"):
        e.add_argument(f"--epochs-{kind}", type=int, default=DEFAULT_EPOCHS[kind])
    e.add_argument("--unseen-cup", default=None)
    e.add_argument("--unseen-container", default=None)
    e.add_argument("--unseen-material", default=None)
    return p


def cmd_synth(args):
    if args.spec is not None:
        if not args.spec.is_file():
            raise UsageError(f"spec file {args.spec} does not exist")
        spec = GeneratorSpec.load(args.spec)
    else:
        spec = default_spec()
    problems = spec.validate()
    if problems:
        raise UsageError("invalid generator spec:\n  " + "\n  ".join(problems))
    corpus = synthesize_corpus(spec, args.seed)
    save_corpus(corpus, args.out)
    (args.out / "generator_spec.json").write_text(
        json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    print(f"trials {len(corpus)} T_max {corpus.t_max}")


def _corpus(path):
    if not path.is_dir():
        raise UsageError(f"corpus directory {path} does not exist")
    return load_corpus(path)


def cmd_train(args):
    corpus = _corpus(args.corpus)
    epochs = args.epochs or DEFAULT_EPOCHS[args.kind]
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(
        epochs=epochs, learning_rate=args.lr, hidden_size=args.hidden, seed=args.seed,
        checkpoint_every=args.checkpoint_every, checkpoint_dir=str(args.out),
    )
    net, history = train(args.kind, corpus.trials, cfg, t_max=corpus.t_max)
    save_checkpoint(net, args.out / f"{args.kind}.json")
    write_history(history, args.out / f"{args.kind}_log.csv")
    msg = f"{args.kind}: epochs {epochs} final normalized loss {net.meta['final_norm_loss']:.6g}"
    if args.kind == "stp":
        msg += f" accuracy {net.meta['final_accuracy']:.4f}"
    print(msg)


def cmd_generate(args):
    nets = {}
    for kind in ("frc", "vel", "stp"):
        path = args.checkpoints / f"{kind}.json"
        if not path.is_file():
            raise UsageError(f"missing checkpoint {path}")
        nets[kind] = load_checkpoint(path, kind=kind)
    if args.trial is not None:
        if args.corpus is None:
            raise UsageError("--trial needs --corpus")
        matches = [tr for tr in _corpus(args.corpus) if tr.trial_id == args.trial]
        if not matches:
            raise UsageError(f"no trial {args.trial!r} in {args.corpus}")
        theta_1 = matches[0].theta[0]
        z = matches[0].static.as_vector()
    else:
        if args.theta1 is None or args.z is None:
            raise UsageError("give either --trial or both --theta1 and --z")
        theta_1 = args.theta1
        try:
            z = np.array([float(v) for v in args.z.split(",")])
        except ValueError:
            raise UsageError(f"--z must be {len(STATIC_FIELDS)} comma-separated numbers") from None
        if z.size != len(STATIC_FIELDS):
            raise UsageError(f"--z needs {len(STATIC_FIELDS)} values, got {z.size}")
    t_max = args.t_max or int(nets["vel"].meta.get("t_max", 300)) - 1
    traj = generate_simulated(nets["frc"], nets["vel"], nets["stp"], theta_1, z, t_max)
    out = args.out if args.out.suffix == ".csv" else args.out / "trajectory.csv"
    write_trajectory(traj, out)
    print(f"termination {traj.termination} steps {traj.steps} -> {out}")


def cmd_evaluate(args):
    corpus = _corpus(args.corpus)
    configs = default_configs(
        seed=args.seed, vel=args.epochs_vel, stp=args.epochs_stp, frc=args.epochs_frc
    )
    unseen = {
        k: v for k, v in (
            ("cup", args.unseen_cup), ("container", args.unseen_container),
            ("material", args.unseen_material),
        ) if v is not None
    }
    args.out.mkdir(parents=True, exist_ok=True)
    rows, failed = [], False
    for case in args.cases:
        try:
            report = run_case(
                corpus, case, configs=configs, unseen=unseen, threshold=args.threshold,
                bins=args.bins, out_dir=args.out,
            )
        except (CorpusError, FloatingPointError, RuntimeError) as exc:
            failed = True
            err_dir = args.out / f"case{case}"
            err_dir.mkdir(parents=True, exist_ok=True)
            (err_dir / "report.json").write_text(
                json.dumps({"case": case, "error": str(exc)}, indent=2) + "\n"
            )
            rows.append([case, "", "", "", "", "", str(exc)])
            print(f"case {case}: ERROR {exc}")
            continue
        rows.append([
            case, "+".join(report.unseen.values()), report.m, "%.17g" % report.score,
            "pass" if report.passed else "fail", int(report.low_m), "",
        ])
        print(f"case {case}: m={report.m} intersection={report.score:.4f} "
              f"{'pass' if report.passed else 'fail'}{' (low m)' if report.low_m else ''}")
    with open(args.out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "unseen", "m", "score", "verdict", "low_m", "error"])
        w.writerows(rows)
    return 2 if failed else 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args) or 0
    except UsageError as exc:
        print(f"forcepour {args.command}: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, FloatingPointError, RuntimeError, ValueError, OSError) as exc:
        print(f"forcepour {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
