"""Generalization check: normalized DTW, demo-vs-demo and
generated-vs-demo distance histograms, their intersection, and the
per-case experiment driver."""
import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .dataset import CASES, DEFAULT_UNSEEN, CorpusError, holdout_split
from .generation import generate_simulated
from .networks import save_checkpoint
from .optim import TrainConfig, train

log = logging.getLogger(__name__)

N_BINS = 30
DEFAULT_THRESHOLD = 0.6
LOW_M = 10


def _seq(x, name):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D sequence")
    return x


def dtw(a, b):
    """DTW distance with steps (1,1), (1,0), (0,1), local cost ``|a_i - b_j|``,
    divided by ``len(a) + len(b)``."""
    a = _seq(a, "a")
    b = _seq(b, "b")
    return float(kernels.dtw_cost(a, b)) / (a.size + b.size)


def pairwise_distances(tests):
    """DTW over all ordered pairs ``i != j`` (``m (m - 1)`` values)."""
    if len(tests) < 2:
        raise ValueError("need at least two test sequences")
    d = kernels.pairwise_dtw([_seq(t, "test") for t in tests])
    return d[~np.eye(len(tests), dtype=bool)]


def cross_distances(generated, tests):
    """DTW from every generated sequence to every test sequence."""
    if not generated or not tests:
        raise ValueError("both sequence sets must be non-empty")
    d = kernels.pairwise_dtw(
        [_seq(g, "generated") for g in generated], [_seq(t, "test") for t in tests]
    )
    return d.reshape(-1)


def shared_edges(*value_sets, bins=N_BINS):
    top = max(float(np.max(v)) for v in value_sets)
    if top <= 0:
        top = 1.0
    return np.linspace(0.0, top, bins + 1)


def normalized_hist(values, edges):
    counts, _ = np.histogram(values, bins=edges)
    if counts.sum() != len(values):
        raise ValueError("values fall outside the histogram range")
    return counts / counts.sum()


def pairwise_hist(tests, edges=None, bins=N_BINS):
    """Normalized histogram of demo-vs-demo distances; returns ``(h, edges)``."""
    d = pairwise_distances(tests)
    if edges is None:
        edges = shared_edges(d, bins=bins)
    return normalized_hist(d, edges), edges


def generated_hist(generated, tests, edges=None, bins=N_BINS):
    """Normalized histogram of generated-vs-demo distances; returns ``(h, edges)``."""
    d = cross_distances(generated, tests)
    if edges is None:
        edges = shared_edges(d, bins=bins)
    return normalized_hist(d, edges), edges


@dataclass
class HistogramPair:
    edges: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    n1: int
    n2: int

    @classmethod
    def build(cls, tests, generated, bins=N_BINS):
        d1 = pairwise_distances(tests)
        d2 = cross_distances(generated, tests)
        edges = shared_edges(d1, d2, bins=bins)
        return cls(edges, normalized_hist(d1, edges), normalized_hist(d2, edges), d1.size, d2.size)


def similarity(h1, h2=None):
    """Histogram intersection ``sum_k min(h1_k, h2_k)``.

    Accepts either a :class:`HistogramPair` or two arrays over the same bins.
    """
    if h2 is None:
        h1, h2 = h1.h1, h1.h2
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise ValueError(f"histograms have different binning: {h1.shape} vs {h2.shape}")
    return float(np.sum(np.minimum(h1, h2)))


@dataclass
class CaseReport:
    case: int
    unseen: dict
    m: int
    n_train: int
    score: float
    threshold: float
    passed: bool
    low_m: bool
    terminations: dict
    pair: HistogramPair = field(repr=False)
    training: dict = field(default_factory=dict)

    def summary(self):
        out = asdict(self)
        out.pop("pair")
        out["bins"] = len(self.pair.edges) - 1
        out["bin_range"] = [float(self.pair.edges[0]), float(self.pair.edges[-1])]
        out["h1_samples"] = self.pair.n1
        out["h2_samples"] = self.pair.n2
        return out


def default_configs(seed=0, **epochs):
    """Per-network training configs with the default epochs unless
    overridden via ``vel=...``, ``stp=...``, ``frc=...``."""
    return {
        kind: TrainConfig.for_kind(kind, seed=seed + k, **({"epochs": epochs[kind]} if kind in epochs else {}))
        for k, kind in enumerate(("frc", "vel", "stp"))
    }


def run_case(corpus, case, configs=None, nets=None, out_dir=None, unseen=None,
             threshold=DEFAULT_THRESHOLD, bins=N_BINS):
    """Train (or reuse ``nets``) on the case's training split, generate one
    trajectory per test trial from its first angle and static context, and
    compare the histograms of rotation-angle DTW distances."""
    unseen = dict(DEFAULT_UNSEEN, **(unseen or {}))
    train_set, test_set = holdout_split(corpus, case, unseen)
    m = len(test_set)
    if m < 2:
        raise CorpusError(f"case {case}: only {m} test trial(s); need at least 2")
    t_max = corpus.t_max
    training = {}
    if nets is None:
        configs = configs or default_configs()
        nets = {}
        for kind in ("frc", "vel", "stp"):
            nets[kind], _ = train(kind, train_set.trials, configs[kind], t_max=t_max)
            training[kind] = dict(nets[kind].meta)
            log.info("case %d: trained %s (%s)", case, kind, training[kind])

    generated, terminations = [], {}
    for tr in test_set:
        traj = generate_simulated(
            nets["frc"], nets["vel"], nets["stp"], tr.theta[0], tr.static.as_vector(), t_max - 1
        )
        generated.append(traj.theta)
        terminations[traj.termination] = terminations.get(traj.termination, 0) + 1

    pair = HistogramPair.build([tr.theta for tr in test_set], generated, bins=bins)
    score = similarity(pair)
    report = CaseReport(
        case=case,
        unseen={k: unseen[k] for k in CASES[case]},
        m=m,
        n_train=len(train_set),
        score=score,
        threshold=threshold,
        passed=score >= threshold,
        low_m=m < LOW_M,
        terminations=dict(sorted(terminations.items())),
        pair=pair,
        training=training,
    )
    if out_dir is not None:
        write_case(report, out_dir, nets if training else None)
    return report


def _write_hist(path, edges, h):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "density"])
        for left, right, d in zip(edges[:-1], edges[1:], h):
            w.writerow(["%.17g" % left, "%.17g" % right, "%.17g" % d])


def write_case(report, out_dir, nets=None):
    out = Path(out_dir) / f"case{report.case}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    _write_hist(out / "h1.csv", report.pair.edges, report.pair.h1)
    _write_hist(out / "h2.csv", report.pair.edges, report.pair.h2)
    (out / "overlay.svg").write_text(overlay_svg(report))
    if nets:
        for kind, net in nets.items():
            save_checkpoint(net, out / f"{kind}.json")
    return out


def overlay_svg(report, width=480, height=260):
    """Step outlines of h1 (demos) and h2 (generated) on shared bins."""
    pair = report.pair
    pad_l, pad_r, pad_t, pad_b = 44, 12, 28, 34
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b
    top = max(float(pair.h1.max()), float(pair.h2.max()), 1e-12)
    span = float(pair.edges[-1] - pair.edges[0]) or 1.0

    def xy(x, y):
        return (pad_l + pw * (x - pair.edges[0]) / span, pad_t + ph * (1.0 - y / top))

    def outline(h):
        pts = [xy(pair.edges[0], 0.0)]
        for k, v in enumerate(h):
            pts.append(xy(pair.edges[k], v))
            pts.append(xy(pair.edges[k + 1], v))
        pts.append(xy(pair.edges[-1], 0.0))
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)

    x0, y0 = xy(pair.edges[0], 0.0)
    x1, _ = xy(pair.edges[-1], 0.0)
    _, yt = xy(pair.edges[0], top)
    title = f"case {report.case}: intersection {report.score:.3f} (m={report.m})"
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{pad_l}" y="16">{title}</text>',
        f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="black"/>',
        f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{yt:.2f}" stroke="black"/>',
        f'<text x="{x0:.2f}" y="{y0 + 14:.2f}">0</text>',
        f'<text x="{x1 - 40:.2f}" y="{y0 + 14:.2f}">{pair.edges[-1]:.3g}</text>',
        f'<text x="{width / 2 - 40:.2f}" y="{height - 4}">normalized DTW</text>',
        f'<text x="4" y="{yt + 4:.2f}">{top:.2f}</text>',
        f'<polyline points="{outline(pair.h1)}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>',
        f'<polyline points="{outline(pair.h2)}" fill="none" stroke="#d62728" stroke-width="1.5" '
        f'stroke-dasharray="4 2"/>',
        f'<text x="{width - 150}" y="16" fill="#1f77b4">h1 demo-demo</text>',
        f'<text x="{width - 70}" y="16" fill="#d62728">h2 gen-demo</text>',
        "</svg>",
        "",
    ])
