"""Pouring trials, feature assembly, padding, corpus files and a synthetic
demonstration generator.

A trial is a 60 Hz rotation sequence (degrees), the aligned sensed-force
sequence (lbf) and eight static values. The synthetic generator models the
cup as an open cylinder: the material retained at tilt ``theta`` is the
smaller of what is left and what the tilted cylinder can hold, and the
sensed force is the weight of cup plus retained material.
"""
import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

LBF_PER_GRAM = 0.00220462262185
WATER_G_PER_MM3 = 1e-3
STATIC_FIELDS = (
    "f_init", "f_empty", "f_final", "d_cup", "h_cup", "d_ctn", "h_ctn", "rho",
)
N_FEATURES = 2 + len(STATIC_FIELDS)


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class StaticContext:
    f_init: float
    f_empty: float
    f_final: float
    d_cup: float
    h_cup: float
    d_ctn: float
    h_ctn: float
    rho: float

    def __post_init__(self):
        if not self.f_init >= self.f_empty >= 0:
            raise ValueError(f"need f_init >= f_empty >= 0, got {self.f_init}, {self.f_empty}")
        if min(self.d_cup, self.h_cup, self.d_ctn, self.h_ctn) <= 0:
            raise ValueError("vessel dimensions must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    def as_vector(self):
        return np.array([getattr(self, k) for k in STATIC_FIELDS], dtype=np.float64)

    @classmethod
    def from_vector(cls, z):
        return cls(*(float(v) for v in z))


@dataclass
class TrialRecord:
    theta: np.ndarray
    force: np.ndarray
    static: StaticContext
    trial_id: str = ""
    cup_id: str = ""
    container_id: str = ""
    material_id: str = ""
    provenance: str = "synthetic"

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.force = np.asarray(self.force, dtype=np.float64)
        if self.theta.ndim != 1 or self.theta.shape != self.force.shape:
            raise ValueError("theta and force must be 1-D sequences of equal length")
        if self.theta.size < 2:
            raise ValueError("a trial needs at least two frames")
        if abs(self.theta[0]) > 15.0:
            raise ValueError(f"trial must start near level, got theta_1={self.theta[0]:.2f}")
        if np.any(self.force < 0):
            raise ValueError("forces must be non-negative")

    @property
    def length(self):
        return self.theta.size

    def features(self):
        """All feature vectors ``a_1..a_T`` as a ``(T, 10)`` array."""
        z = np.broadcast_to(self.static.as_vector(), (self.length, len(STATIC_FIELDS)))
        return np.column_stack([self.theta, self.force, z])


@dataclass
class Corpus:
    trials: list
    splits: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    @property
    def t_max(self):
        if not self.trials:
            raise CorpusError("corpus is empty")
        return max(tr.length for tr in self.trials)


def sensed_force(fx, fy, fz):
    """Magnitude of the force vector measured at the cup handle."""
    v = np.array([fx, fy, fz], dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("force components must be finite")
    return float(np.sqrt(np.sum(v * v)))


def assemble_features(trial, t):
    """Feature vector ``a_t`` (1-based ``t``):
    ``[theta_t, f_t, f_init, f_empty, f_final, d_cup, h_cup, d_ctn, h_ctn, rho]``."""
    if not 1 <= t <= trial.length:
        raise IndexError(f"t={t} outside 1..{trial.length}")
    return np.concatenate([[trial.theta[t - 1], trial.force[t - 1]], trial.static.as_vector()])


def pad_sequences(seqs, length, mode):
    """Stack sequences (each ``(T_i, ...)``) into ``(n, length, ...)``.

    ``mode="zero"`` appends zeros; ``mode="end_value"`` repeats each
    sequence's last frame. Returns the padded array and a boolean mask that
    is true on original frames.
    """
    if mode not in ("zero", "end_value"):
        raise ValueError(f"unknown padding mode {mode!r}")
    seqs = [np.asarray(s, dtype=np.float64) for s in seqs]
    if not seqs:
        raise ValueError("nothing to pad")
    tail = seqs[0].shape[1:]
    out = np.zeros((len(seqs), length) + tail)
    mask = np.zeros((len(seqs), length), dtype=bool)
    for k, s in enumerate(seqs):
        n = s.shape[0]
        if n > length:
            raise ValueError(f"sequence {k} has length {n} > {length}")
        out[k, :n] = s
        mask[k, :n] = True
        if mode == "end_value" and n < length:
            out[k, n:] = s[-1]
    return out, mask


def unpad(padded, mask):
    return [row[m] for row, m in zip(padded, mask)]


def pad(corpus, mode):
    """Pad every trial's feature sequence to the corpus ``T_max``."""
    if not corpus.trials:
        raise CorpusError("corpus is empty")
    return pad_sequences([tr.features() for tr in corpus.trials], corpus.t_max, mode)


# -- fill oracle ------------------------------------------------------------


def cylinder_capacity(diameter, height, theta_deg):
    """Volume (mm^3) an open cylinder holds when tilted by ``theta_deg``.

    The free surface is the horizontal plane through the pouring lip. Below
    the angle where that plane reaches the far bottom edge the retained
    volume is a truncated cylinder; past it, a cylindrical wedge.
    """
    r = 0.5 * diameter
    theta = abs(float(theta_deg))
    if theta >= 90.0:
        return 0.0
    k = math.tan(math.radians(theta))
    if height - 2.0 * r * k >= 0.0:
        return math.pi * r * r * (height - r * k)
    x0 = r - height / k
    s = math.sqrt(max(r * r - x0 * x0, 0.0))
    chord_area_right = 0.5 * math.pi * r * r - x0 * s - r * r * math.asin(x0 / r)
    return k * ((2.0 / 3.0) * s**3 - x0 * chord_area_right)


class FillOracle:
    """Quasi-static force of a tilting cup. Poured material never returns,
    so the oracle keeps the smallest volume seen so far."""

    def __init__(self, d_cup, h_cup, cup_mass_g, volume_mm3, rho):
        self.d_cup = d_cup
        self.h_cup = h_cup
        self.cup_mass_g = cup_mass_g
        self.rho = rho
        self.volume = volume_mm3

    @classmethod
    def from_static(cls, z):
        """Rebuild the oracle from a static context (vector or dataclass)."""
        if not isinstance(z, StaticContext):
            z = StaticContext.from_vector(z)
        cup_mass = z.f_empty / LBF_PER_GRAM
        volume = (z.f_init - z.f_empty) / (LBF_PER_GRAM * WATER_G_PER_MM3 * z.rho)
        return cls(z.d_cup, z.h_cup, cup_mass, volume, z.rho)

    def force_at_volume(self, volume):
        mass = self.cup_mass_g + self.rho * WATER_G_PER_MM3 * volume
        return mass * LBF_PER_GRAM

    def retained(self, theta_deg):
        return min(self.volume, cylinder_capacity(self.d_cup, self.h_cup, theta_deg))

    def __call__(self, theta_deg, z=None):
        self.volume = self.retained(theta_deg)
        return self.force_at_volume(self.volume)


# -- synthetic corpus -------------------------------------------------------


@dataclass
class GeneratorSpec:
    cups: list
    containers: list
    materials: list
    trials_per_combination: int = 2
    fill_range: tuple = (0.45, 0.8)
    pour_fraction_range: tuple = (0.4, 0.95)
    start_angle_range: tuple = (0.0, 5.0)
    sample_rate_hz: float = 60.0
    angle_jitter_deg: float = 0.25
    angle_jitter_corr: float = 0.99
    force_jitter_lbf: float = 0.01
    speed_variation: float = 0.06
    max_frames: int = 600

    def validate(self):
        """List every problem with the generator spec (empty when valid)."""
        problems = []
        for kind, items, keys in (
            ("cup", self.cups, ("id", "d", "h", "mass_g")),
            ("container", self.containers, ("id", "d", "h")),
            ("material", self.materials, ("id", "rho")),
        ):
            if not items:
                problems.append(f"no {kind}s listed")
            for n, item in enumerate(items):
                missing = [k for k in keys if k not in item]
                if missing:
                    problems.append(f"{kind} #{n} missing {', '.join(missing)}")
                    continue
                for k in keys[1:]:
                    if not item[k] > 0:
                        problems.append(f"{kind} {item['id']}: {k} must be positive")
            ids = [item.get("id") for item in items]
            if len(set(ids)) != len(ids):
                problems.append(f"duplicate {kind} ids")
        if self.trials_per_combination < 1:
            problems.append("trials_per_combination must be at least 1")
        lo, hi = self.fill_range
        if not 0 < lo <= hi:
            problems.append("fill_range must satisfy 0 < low <= high")
        if hi > 1:
            problems.append("fill_range above 1 overfills the cup (fill above brim)")
        lo, hi = self.pour_fraction_range
        if not 0 < lo <= hi < 1:
            problems.append("pour_fraction_range must satisfy 0 < low <= high < 1")
        lo, hi = self.start_angle_range
        if not -15 <= lo <= hi <= 15:
            problems.append("start_angle_range must lie within [-15, 15] degrees")
        if self.sample_rate_hz <= 0:
            problems.append("sample_rate_hz must be positive")
        if not 0 <= self.angle_jitter_corr < 1:
            problems.append("angle_jitter_corr must lie in [0, 1)")
        if self.angle_jitter_deg < 0 or self.force_jitter_lbf < 0:
            problems.append("jitter levels must be non-negative")
        if self.max_frames < 10:
            problems.append("max_frames must be at least 10")
        return problems

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("fill_range", "pour_fraction_range", "start_angle_range"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise CorpusError(f"unknown generator spec fields: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return asdict(self)


def default_spec():
    """Six cups, ten containers and three materials; 360 trials."""
    cups = [
        {"id": "c1", "d": 64.0, "h": 82.0, "mass_g": 120.0},
        {"id": "c2", "d": 72.0, "h": 96.0, "mass_g": 150.0},
        {"id": "c3", "d": 80.0, "h": 88.0, "mass_g": 210.0},
        {"id": "c4", "d": 86.0, "h": 110.0, "mass_g": 240.0},
        {"id": "c5", "d": 94.0, "h": 102.0, "mass_g": 270.0},
        {"id": "c6", "d": 78.0, "h": 98.0, "mass_g": 185.0},
    ]
    containers = [
        {"id": f"ctn{k + 1}", "d": d, "h": h}
        for k, (d, h) in enumerate([
            (70.0, 90.0), (85.0, 120.0), (100.0, 70.0), (115.0, 140.0), (130.0, 100.0),
            (145.0, 80.0), (160.0, 130.0), (175.0, 110.0), (190.0, 150.0), (122.0, 105.0),
        ])
    ]
    materials = [
        {"id": "water", "rho": 1.0},
        {"id": "beans", "rho": 0.85},
        {"id": "ice", "rho": 0.55},
    ]
    return GeneratorSpec(cups=cups, containers=containers, materials=materials)


def pour_style(z):
    """Controller constants of the simulated demonstrator, as a function of
    the static context: peak tilt speed (deg/s), fraction of the peak angle
    returned to, and return gain (1/s)."""
    speed = 70.0 + 0.25 * (z.d_ctn - 70.0) - 20.0 * (z.rho - 0.55)
    back_to = 0.25 + 0.002 * (z.h_ctn - 70.0)
    gain = 5.0
    return speed, back_to, gain


def _ar1_noise(rng, n, sigma, corr):
    e = rng.normal(0.0, sigma * math.sqrt(1.0 - corr * corr), n)
    out = np.empty(n)
    out[0] = rng.normal(0.0, sigma)
    for k in range(1, n):
        out[k] = corr * out[k - 1] + e[k]
    return out


def synthesize_trial(rng, spec, cup, container, material):
    dt = 1.0 / spec.sample_rate_hz
    fill = rng.uniform(*spec.fill_range)
    pour_fraction = rng.uniform(*spec.pour_fraction_range)
    theta = rng.uniform(*spec.start_angle_range)
    speed_factor = math.exp(spec.speed_variation * rng.normal())

    r = 0.5 * cup["d"]
    volume0 = fill * math.pi * r * r * cup["h"]
    oracle = FillOracle(cup["d"], cup["h"], cup["mass_g"], volume0, material["rho"])
    f_empty = oracle.force_at_volume(0.0)
    f_init = oracle(theta)
    f_target = oracle.force_at_volume(oracle.volume * (1.0 - pour_fraction))
    provisional = StaticContext(
        f_init, f_empty, f_target, cup["d"], cup["h"], container["d"], container["h"], material["rho"]
    )
    speed, back_to, gain = pour_style(provisional)
    speed *= speed_factor

    thetas = [theta]
    forces = [f_init]
    omega = 0.0
    lag = 0.15
    returning = False
    target = 0.0
    force = f_init
    for _ in range(spec.max_frames - 1):
        if not returning:
            remaining = (force - f_target) / (f_init - f_target)
            if remaining <= 0.0:
                returning = True
                target = back_to * theta
        if returning:
            command = -gain * (theta - target)
        else:
            command = speed * (0.3 + 0.7 * min(remaining, 1.0))
        omega += lag * (command * dt - omega)
        theta += omega
        force = oracle(theta)
        thetas.append(theta)
        forces.append(force)
        if returning and abs(theta - target) < 1.0:
            break
    else:
        raise CorpusError("demonstrator did not finish within max_frames")

    thetas = np.array(thetas)
    forces = np.array(forces)
    n = thetas.size
    thetas = thetas + _ar1_noise(rng, n, spec.angle_jitter_deg, spec.angle_jitter_corr)
    thetas[0] = max(min(thetas[0], 15.0), -15.0)
    jitter = rng.normal(0.0, spec.force_jitter_lbf, n)
    jitter[0] = jitter[-1] = 0.0
    forces = np.maximum(forces + jitter, f_empty)
    static = StaticContext(
        f_init, f_empty, float(forces[-1]), cup["d"], cup["h"], container["d"], container["h"],
        material["rho"],
    )
    return thetas, forces, static


def synthesize_corpus(spec, seed):
    """Full factorial of cups x containers x materials, repeated
    ``trials_per_combination`` times, in a fixed order."""
    problems = spec.validate()
    if problems:
        raise CorpusError("invalid generator spec:\n  " + "\n  ".join(problems))
    rng = np.random.default_rng(seed)
    trials = []
    for cup in spec.cups:
        for ctn in spec.containers:
            for mat in spec.materials:
                for rep in range(spec.trials_per_combination):
                    theta, force, static = synthesize_trial(rng, spec, cup, ctn, mat)
                    trials.append(TrialRecord(
                        theta, force, static,
                        trial_id=f"{cup['id']}-{ctn['id']}-{mat['id']}-{rep + 1}",
                        cup_id=cup["id"], container_id=ctn["id"], material_id=mat["id"],
                    ))
    return Corpus(trials)


# -- corpus files -----------------------------------------------------------

MANIFEST = "manifest.csv"
MANIFEST_COLUMNS = (
    ("trial_id", "cup_id", "container_id", "material_id")
    + STATIC_FIELDS
    + ("length", "provenance", "data_file")
)


def _num(x):
    return "%.17g" % x


def save_corpus(corpus, directory):
    if not corpus.trials:
        raise CorpusError("refusing to save an empty corpus")
    directory = Path(directory)
    (directory / "trials").mkdir(parents=True, exist_ok=True)
    with open(directory / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for k, tr in enumerate(corpus.trials):
            name = f"trials/{k:05d}.csv"
            z = tr.static.as_vector()
            w.writerow(
                [tr.trial_id, tr.cup_id, tr.container_id, tr.material_id]
                + [_num(v) for v in z]
                + [tr.length, tr.provenance, name]
            )
            with open(directory / name, "w", newline="") as tf:
                tw = csv.writer(tf, lineterminator="\n")
                tw.writerow(("t", "theta_deg", "force_lbf"))
                for t, (a, f) in enumerate(zip(tr.theta, tr.force), start=1):
                    tw.writerow((t, _num(a), _num(f)))


def _parse_float(text, where):
    try:
        v = float(text)
    except ValueError:
        raise CorpusError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise CorpusError(f"{where}: non-finite value {text!r}")
    return v


def load_corpus(directory):
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.exists():
        raise CorpusError(f"{directory}: no {MANIFEST}; empty corpus")
    trials = []
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_COLUMNS:
            raise CorpusError(f"{manifest}:1: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{manifest}:{lineno}"
            if len(row) != len(MANIFEST_COLUMNS):
                raise CorpusError(f"{where}: expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}")
            rec = dict(zip(MANIFEST_COLUMNS, row))
            z = [_parse_float(rec[k], f"{where} field {k}") for k in STATIC_FIELDS]
            try:
                length = int(rec["length"])
            except ValueError:
                raise CorpusError(f"{where} field length: not an integer") from None
            theta, force = _load_trial(directory / rec["data_file"])
            if theta.size != length:
                raise CorpusError(f"{where}: length {length} but data file has {theta.size} rows")
            try:
                trials.append(TrialRecord(
                    theta, force, StaticContext(*z),
                    trial_id=rec["trial_id"], cup_id=rec["cup_id"],
                    container_id=rec["container_id"], material_id=rec["material_id"],
                    provenance=rec["provenance"],
                ))
            except ValueError as exc:
                raise CorpusError(f"{where}: {exc}") from None
    if not trials:
        raise CorpusError(f"{manifest}: empty corpus")
    return Corpus(trials)


def _load_trial(path):
    if not path.exists():
        raise CorpusError(f"{path}: missing trial file")
    theta, force = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "theta_deg", "force_lbf"]:
            raise CorpusError(f"{path}:1: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            theta.append(_parse_float(row[1], f"{path}:{lineno} theta_deg"))
            force.append(_parse_float(row[2], f"{path}:{lineno} force_lbf"))
    return np.array(theta), np.array(force)


# -- holdout splits ---------------------------------------------------------

CASES = {
    1: ("cup",),
    2: ("container",),
    3: ("material",),
    4: ("cup", "container"),
    5: ("container", "material"),
    6: ("cup", "material"),
    7: ("cup", "container", "material"),
}
DEFAULT_UNSEEN = {"cup": "c6", "container": "ctn10", "material": "beans"}
_ID_ATTR = {"cup": "cup_id", "container": "container_id", "material": "material_id"}


def holdout_split(corpus, case, unseen=None):
    """Split for generalization case 1-7.

    Test trials use every designated unseen element; training trials use
    none of them; trials mixing the two are dropped.
    """
    if case not in CASES:
        raise ValueError(f"case must be 1..7, got {case}")
    unseen = dict(DEFAULT_UNSEEN, **(unseen or {}))
    designated = {kind: unseen[kind] for kind in CASES[case]}
    train, test = [], []
    for tr in corpus.trials:
        hits = [getattr(tr, _ID_ATTR[k]) == v for k, v in designated.items()]
        if all(hits):
            test.append(tr)
        elif not any(hits):
            train.append(tr)
    if not train or not test:
        raise CorpusError(
            f"case {case}: split of {designated} leaves {len(train)} train / {len(test)} test trials"
        )
    return Corpus(train), Corpus(test)
