import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from forcepour.cli import build_parser, main
from forcepour.dataset import default_spec, load_corpus
from forcepour.generation import read_trajectory


def _spec_file(path, repeats=2):
    spec = default_spec()
    spec.cups = [spec.cups[0], spec.cups[5]]
    spec.containers = [spec.containers[0], spec.containers[9]]
    spec.materials = spec.materials[:2]
    spec.trials_per_combination = repeats
    path.write_text(json.dumps(spec.to_dict()))
    return path


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = root / "corpus"
    assert main(["synth", "--spec", str(_spec_file(root / "spec.json")), "--seed", "7", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def checkpoints(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    for kind in ("frc", "vel", "stp"):
        assert main(["train", "--kind", kind, "--corpus", str(corpus_dir), "--out", str(out),
                     "--epochs", "5", "--hidden", "4"]) == 0
    return out


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_prints_counts(tmp_path, capsys):
    main(["synth", "--spec", str(_spec_file(tmp_path / "s.json", 1)), "--out", str(tmp_path / "c")])
    assert capsys.readouterr().out.startswith("trials 8 T_max ")
    assert len(load_corpus(tmp_path / "c")) == 8


def test_synth_is_byte_identical(tmp_path, corpus_dir):
    again = tmp_path / "again"
    main(["synth", "--spec", str(_spec_file(tmp_path / "spec.json")), "--seed", "7", "--out", str(again)])
    assert _tree_bytes(again) == _tree_bytes(corpus_dir)


def test_synth_rejects_zero_trials(tmp_path, capsys):
    code = main(["synth", "--spec", str(_spec_file(tmp_path / "s.json", 0)), "--out", str(tmp_path / "c")])
    assert code == 1
    assert "trials_per_combination" in capsys.readouterr().err
    assert not (tmp_path / "c").exists()


def test_usage_errors_exit_one(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["train", "--kind", "xyz", "--corpus", "a", "--out", "b"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 1
    assert main(["train", "--kind", "vel", "--corpus", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1


def test_console_script_usage(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "forcepour.cli", "evaluate", "--cases", "9", "--corpus", "x", "--out", "y"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 1
    assert "usage:" in proc.stderr


def test_train_outputs_and_reproducibility(tmp_path, corpus_dir, checkpoints):
    out = tmp_path / "again"
    main(["train", "--kind", "vel", "--corpus", str(corpus_dir), "--out", str(out), "--epochs", "5", "--hidden", "4"])
    assert (out / "vel.json").read_bytes() == (checkpoints / "vel.json").read_bytes()
    assert (out / "vel_log.csv").read_bytes() == (checkpoints / "vel_log.csv").read_bytes()
    with open(out / "vel_log.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["epoch"]) for r in rows] == [1, 2, 3, 4, 5]
    meta = json.loads((out / "vel.json").read_text())["meta"]
    assert meta["learning_rate"] == 0.01 and meta["epochs"] == 5


def test_train_default_epochs_follow_kind():
    args = build_parser().parse_args(["train", "--kind", "stp", "--corpus", "c", "--out", "o"])
    assert args.epochs is None and args.lr == 0.01 and args.hidden == 16


def test_generate_from_trial(tmp_path, corpus_dir, checkpoints, capsys):
    trial_id = load_corpus(corpus_dir).trials[3].trial_id
    out = tmp_path / "traj.csv"
    args = ["generate", "--checkpoints", str(checkpoints), "--corpus", str(corpus_dir),
            "--trial", trial_id, "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    traj = read_trajectory(out)
    np.testing.assert_array_equal(traj.theta[1:], traj.theta[:-1] + traj.omega)
    assert main(args) == 0
    assert out.read_bytes() == first


def test_generate_explicit_start(tmp_path, corpus_dir, checkpoints):
    z = ",".join(repr(float(v)) for v in load_corpus(corpus_dir).trials[0].static.as_vector())
    out = tmp_path / "g"
    assert main(["generate", "--checkpoints", str(checkpoints), "--theta1", "0", "--z", z,
                 "--t-max", "20", "--out", str(out)]) == 0
    traj = read_trajectory(out / "trajectory.csv")
    assert traj.theta[0] == 0.0 and traj.theta.size <= 21


def test_generate_rejects_kind_mismatch(tmp_path, checkpoints):
    bad = tmp_path / "bad"
    bad.mkdir()
    for kind in ("frc", "vel", "stp"):
        (bad / f"{kind}.json").write_bytes((checkpoints / "vel.json").read_bytes())
    code = main(["generate", "--checkpoints", str(bad), "--theta1", "0", "--z", "1,0.5,0.6,80,90,100,100,1",
                 "--out", str(tmp_path / "t.csv")])
    assert code == 2


def test_generate_needs_a_start(tmp_path, checkpoints):
    assert main(["generate", "--checkpoints", str(checkpoints), "--out", str(tmp_path / "t.csv")]) == 1


def _evaluate(corpus_dir, out, cases="1,7"):
    return main(["evaluate", "--corpus", str(corpus_dir), "--cases", cases, "--out", str(out),
                 "--epochs-vel", "3", "--epochs-stp", "3", "--epochs-frc", "3"])


def test_evaluate_is_deterministic(tmp_path, corpus_dir):
    assert _evaluate(corpus_dir, tmp_path / "a") == 0
    assert _evaluate(corpus_dir, tmp_path / "b") == 0
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    assert a == b
    assert {"summary.csv", "case1/report.json", "case1/h1.csv", "case1/h2.csv",
            "case1/overlay.svg", "case7/report.json"} <= set(a)
    with open(tmp_path / "a" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["case"] for r in rows] == ["1", "7"]
    assert rows[1]["low_m"] == "1"


def test_evaluate_reports_impossible_case(tmp_path, corpus_dir):
    out = tmp_path / "e"
    code = main(["evaluate", "--corpus", str(corpus_dir), "--cases", "1,2", "--out", str(out),
                 "--epochs-vel", "2", "--epochs-stp", "2", "--epochs-frc", "2",
                 "--unseen-container", "ctn-missing"])
    assert code == 2
    assert "error" in json.loads((out / "case2" / "report.json").read_text())
    assert (out / "case1" / "report.json").exists()
