"""Force-feedback pouring trajectories from three small LSTM networks."""
from ._accel import backend
from .dataset import (
    Corpus, StaticContext, TrialRecord, default_spec, holdout_split, load_corpus,
    save_corpus, synthesize_corpus,
)
from .evaluation import dtw, run_case, similarity
from .generation import GeneratedTrajectory, generate_live, generate_simulated
from .networks import NetworkBundle, load_checkpoint, save_checkpoint
from .optim import TrainConfig, train

__version__ = "0.1.0"
