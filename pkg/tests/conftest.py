import numpy as np
import pytest

from forcepour.dataset import TrialRecord, default_spec, synthesize_corpus
from forcepour.networks import init_network, input_statistics


def small_spec(cups=2, containers=2, materials=2, repeats=1):
    spec = default_spec()
    spec.cups = spec.cups[:cups]
    spec.containers = spec.containers[:containers]
    spec.materials = spec.materials[:materials]
    spec.trials_per_combination = repeats
    return spec


def truncate(trial, n):
    return TrialRecord(trial.theta[:n], trial.force[:n], trial.static, trial_id=trial.trial_id)


@pytest.fixture(scope="session")
def tiny_corpus():
    return synthesize_corpus(small_spec(), seed=3)


@pytest.fixture
def short_trials(tiny_corpus):
    """Two trials cut to lengths 3 and 4, for gradient checks."""
    return [truncate(tiny_corpus.trials[0], 3), truncate(tiny_corpus.trials[5], 4)]


def random_net(kind, trials, hidden=4, seed=0, scale=0.5):
    mean, std = input_statistics(kind, trials)
    return init_network(kind, hidden, np.random.default_rng(seed), mean, std, scale)


# -- acceptance verdict lines

ACCEPTANCE = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} {verdict}: {title}" + (f" ({detail})" if detail else ""))
