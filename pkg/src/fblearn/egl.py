"""Experience guided learning: train, smooth the learned bank, re-initialise, retrain.

``run_experiment`` executes one row of the Fix / Trained / Improved
protocol on a list of labelled clips and returns one :class:`RoundReport`
per training run.
"""

from __future__ import annotations

import enum
import json
import logging
import os
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import ClipExample
from .dsp import FrameSpec, Waveform, power_spectrogram, resample, segment_length, split_clip
from .errors import ConfigError, InvalidArgument
from .fblayer import DEFAULT_EPSILON, FBLayerState
from .melbank import FilterBank, Provenance, save_filterbank, triangular_filterbank
from .nn.model import Architecture, Model, ModelConfig
from .nn.optim import TrainSchedule
from .nn.training import FrameDataset, predict_scores, train_model
from .report import accuracy, confusion_matrix, filters_svg
from .smoothing import SavGolSpec, smooth_filterbank

__all__ = [
    "WeightMode",
    "ExperimentConfig",
    "RoundReport",
    "PRESETS",
    "parse_config",
    "load_config",
    "format_config",
    "majority_vote",
    "predict_clip",
    "run_experiment",
    "write_reports",
]

log = logging.getLogger(__name__)


class WeightMode(str, enum.Enum):
    FIX = "Fix"
    TRAINED = "Trained"
    IMPROVED = "Improved"


@dataclass(frozen=True)
class ExperimentConfig:
    window_init: str = "Triangular"
    arch: Architecture = Architecture.SHALLOW
    n_filt: int = 40
    weight_mode: WeightMode = WeightMode.FIX
    clip_seconds: float = 4.0
    segment_seconds: float = 4.0
    sample_rate_hz: int = 8000
    majority_vote: bool = False
    rounds: int = 1
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    savgol: SavGolSpec = field(default_factory=SavGolSpec)
    nfft: int | None = None          # None: equal to the sample rate
    hop: int | None = None           # None: nfft // 4
    fmin: float = 0.0
    fmax: float | None = None        # None: Nyquist
    epsilon: float = DEFAULT_EPSILON
    paper_exact_gradient: bool = False
    leaky_slope: float = 0.33
    clip_negative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "arch", Architecture(self.arch))
        object.__setattr__(self, "weight_mode", WeightMode(self.weight_mode))
        if self.window_init != "Triangular":
            raise InvalidArgument(f"unsupported window_init {self.window_init!r}")
        if self.n_filt < 1:
            raise InvalidArgument("n_filt must be >= 1")
        if not 0 < self.segment_seconds <= self.clip_seconds:
            raise InvalidArgument("need 0 < segment_seconds <= clip_seconds")
        if self.sample_rate_hz <= 0:
            raise InvalidArgument("sample_rate_hz must be positive")
        if self.rounds < 1:
            raise InvalidArgument("rounds must be >= 1")
        if self.weight_mode is not WeightMode.IMPROVED and self.rounds != 1:
            raise InvalidArgument(f"weight_mode={self.weight_mode.value} requires rounds=1")

    @property
    def frame_spec(self) -> FrameSpec:
        return FrameSpec(self.nfft or self.sample_rate_hz, self.hop)

    @property
    def unit_seconds(self) -> float:
        """Length of one network input: a segment under majority voting, else the clip."""
        return self.segment_seconds if self.majority_vote else self.clip_seconds


PRESETS = {
    # UrbanSound8K protocol rows; nfft defaults to the sample rate.
    "urban-8k": dict(arch="Shallow", n_filt=40, clip_seconds=4.0, segment_seconds=4.0,
                     sample_rate_hz=8000, majority_vote=False),
    "urban-22k": dict(arch="DeepVGG", n_filt=128, clip_seconds=1.0, segment_seconds=1.0,
                      sample_rate_hz=22050, majority_vote=False),
    "urban-22k-mv": dict(arch="DeepVGG", n_filt=128, clip_seconds=4.0, segment_seconds=1.0,
                         sample_rate_hz=22050, majority_vote=True),
    # desk-scale synthetic protocol
    "desk": dict(arch="Shallow", n_filt=16, clip_seconds=1.0, segment_seconds=1.0,
                 sample_rate_hz=8000, nfft=1024, majority_vote=False, epochs=30),
}


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _optional(conv):
    return lambda v: None if v.lower() in ("none", "auto", "") else conv(v)


_TOP_KEYS = {
    "window_init": str, "arch": Architecture, "n_filt": int, "weight_mode": WeightMode,
    "clip_seconds": float, "segment_seconds": float, "sample_rate_hz": int,
    "majority_vote": _bool, "rounds": int, "nfft": _optional(int), "hop": _optional(int),
    "fmin": float, "fmax": _optional(float), "epsilon": float,
    "paper_exact_gradient": _bool, "leaky_slope": float, "clip_negative": _bool,
}
_SCHEDULE_KEYS = {
    "base_lr": float, "decay_rate": float, "decay_every_epochs": int,
    "epochs": int, "batch_size": int, "seed": int,
}
_SAVGOL_KEYS = {"savgol_window": int, "savgol_order": int}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment).

    A ``preset = <name>`` line applies one of :data:`PRESETS` before the
    other keys, wherever it appears.  Errors report the offending line.
    """
    values: dict[str, tuple] = {}
    preset_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}: expected 'key = value', got {raw.strip()!r}", lineno)
        if key in values:
            raise ConfigError(f"{source}: duplicate key {key!r}", lineno)
        if key == "preset":
            if value not in PRESETS:
                raise ConfigError(f"{source}: unknown preset {value!r} (have {', '.join(PRESETS)})", lineno)
            preset_line = lineno
        elif key not in _TOP_KEYS and key not in _SCHEDULE_KEYS and key not in _SAVGOL_KEYS:
            raise ConfigError(f"{source}: unknown key {key!r}", lineno)
        values[key] = (value, lineno)

    merged: dict[str, tuple] = {}
    if preset_line is not None:
        for k, v in PRESETS[values["preset"][0]].items():
            merged[k] = (str(v), preset_line)
    merged.update({k: v for k, v in values.items() if k != "preset"})

    top, sched, savgol = {}, {}, {}
    for key, (value, lineno) in merged.items():
        for table, target in ((_TOP_KEYS, top), (_SCHEDULE_KEYS, sched), (_SAVGOL_KEYS, savgol)):
            if key in table:
                try:
                    target[key] = table[key](value)
                except ValueError as exc:
                    raise ConfigError(f"{source}: bad value for {key!r}: {exc}", lineno) from None
    try:
        if "seed" in sched:
            sched["rng_seed"] = sched.pop("seed")
        schedule = TrainSchedule(**sched)
        sg = SavGolSpec(window_len=savgol.get("savgol_window", 9), poly_order=savgol.get("savgol_order", 3))
        return ExperimentConfig(schedule=schedule, savgol=sg, **top)
    except InvalidArgument as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), source=os.fspath(path))


def _plain(v):
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "auto"
    return str(v)


def format_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config`: every field as a ``key = value`` line."""
    lines = []
    for f in fields(cfg):
        if f.name in ("schedule", "savgol"):
            continue
        lines.append(f"{f.name} = {_plain(getattr(cfg, f.name))}")
    s = cfg.schedule
    lines += [
        f"base_lr = {s.base_lr}", f"decay_rate = {s.decay_rate}",
        f"decay_every_epochs = {s.decay_every_epochs}", f"epochs = {s.epochs}",
        f"batch_size = {s.batch_size}", f"seed = {s.rng_seed}",
        f"savgol_window = {cfg.savgol.window_len}", f"savgol_order = {cfg.savgol.poly_order}",
    ]
    return "\n".join(lines) + "\n"


def majority_vote(segment_predictions, segment_scores=None) -> int:
    """Most frequent class among segment predictions.

    Ties go to the class with the larger summed score over all segments,
    then to the lower class index.
    """
    preds = [int(p) for p in segment_predictions]
    if not preds:
        raise InvalidArgument("majority vote needs at least one segment")
    counts = Counter(preds)
    top = max(counts.values())
    tied = sorted(c for c, k in counts.items() if k == top)
    if len(tied) == 1:
        return tied[0]
    if segment_scores is not None and len(segment_scores):
        totals = np.sum(np.asarray(segment_scores, dtype=np.float64), axis=0)
        best = max(totals[c] for c in tied)
        tied = [c for c in tied if totals[c] == best]
    return tied[0]


def _fit_length(w: Waveform, n: int) -> Waveform:
    if len(w) == n:
        return w
    x = np.zeros(n)
    k = min(n, len(w))
    x[:k] = w.samples[:k]
    return Waveform(x, w.sample_rate_hz)


def _units(w: Waveform, cfg: ExperimentConfig) -> list[Waveform]:
    """Network-sized pieces of a clip (already at the configured rate)."""
    n = segment_length(cfg.unit_seconds, cfg.sample_rate_hz)
    if cfg.majority_vote:
        segs = split_clip(w, cfg.segment_seconds)
        return segs or [_fit_length(w, n)]
    return [_fit_length(w, n)]


def _at_rate(w: Waveform, cfg: ExperimentConfig) -> Waveform:
    return w if w.sample_rate_hz == cfg.sample_rate_hz else resample(w, cfg.sample_rate_hz)


def _unit_frames(units, cfg: ExperimentConfig) -> np.ndarray:
    spec = cfg.frame_spec
    return np.stack([power_spectrogram(u, spec).data.T for u in units])


def predict_clip(model: Model, fb_state: FBLayerState, clip: Waveform, cfg: ExperimentConfig) -> int:
    """Class index for one clip, voting over segments when configured."""
    units = _units(_at_rate(clip, cfg), cfg)
    scores = predict_scores(model, fb_state, _unit_frames(units, cfg))
    if not cfg.majority_vote:
        return int(np.argmax(scores[0]))
    return majority_vote(scores.argmax(axis=1), scores)


@dataclass(eq=False)
class RoundReport:
    round_index: int
    weight_mode: WeightMode
    pre_bank: FilterBank
    post_bank: FilterBank
    history: list
    validation_accuracy: float | None
    test_accuracy: float
    confusion: np.ndarray
    model: Model = field(repr=False, default=None)
    fb_state: FBLayerState = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "weight_mode": self.weight_mode.value,
            "pre_bank": {"provenance": self.pre_bank.provenance.value, "file": f"round{self.round_index}_pre.csv"},
            "post_bank": {"provenance": self.post_bank.provenance.value, "file": f"round{self.round_index}_post.csv"},
            "history": self.history,
            "validation_accuracy": self.validation_accuracy,
            "test_accuracy": self.test_accuracy,
            "confusion": self.confusion.tolist(),
        }


def _split_folds(clips, test_fold):
    folds = sorted({c.fold for c in clips})
    if test_fold not in folds:
        raise InvalidArgument(f"test fold {test_fold} not present (folds: {folds})")
    train_folds = [f for f in folds if f != test_fold]
    if not train_folds:
        raise InvalidArgument("no training folds left after holding out the test fold")
    val_fold = train_folds[-1] if len(train_folds) > 1 else None
    pick = lambda keep: [c for c in clips if c.fold in keep]  # noqa: E731
    fit_folds = [f for f in train_folds if f != val_fold]
    return pick(fit_folds), pick([val_fold] if val_fold else []), pick([test_fold])


def _segment_dataset(clips, cfg) -> FrameDataset:
    frames, labels = [], []
    for c in clips:
        units = _units(c.waveform, cfg)
        frames.append(_unit_frames(units, cfg))
        labels.extend([c.label] * len(units))
    return FrameDataset(np.concatenate(frames), np.array(labels))


def _clip_accuracy(model, fb_state, clips, cfg, n_classes):
    preds = [predict_clip(model, fb_state, c.waveform, cfg) for c in clips]
    labels = [c.label for c in clips]
    return accuracy(preds, labels), confusion_matrix(preds, labels, n_classes)


def run_experiment(cfg: ExperimentConfig, clips: list[ClipExample], test_fold: int,
                   n_classes: int | None = None, seed: int | None = None) -> list[RoundReport]:
    """Run the configured weight mode and return one report per training run.

    ``Fix`` trains the CNN over a frozen triangular bank; ``Trained`` makes
    the bank trainable; ``Improved`` follows the trained run with ``rounds``
    cycles of smoothing the learned bank and retraining a freshly
    initialised CNN on top of it.  The last fold (by number) among the
    training folds is held out for validation reporting only.
    """
    if not clips:
        raise InvalidArgument("no clips given")
    seed = cfg.schedule.rng_seed if seed is None else seed
    n_classes = n_classes or (max(c.label for c in clips) + 1)
    clips = [c if c.waveform.sample_rate_hz == cfg.sample_rate_hz
             else replace(c, waveform=_at_rate(c.waveform, cfg)) for c in clips]
    fit, val, test = _split_folds(clips, test_fold)
    train_set = _segment_dataset(fit, cfg)
    val_set = _segment_dataset(val, cfg) if val else None

    spec = cfg.frame_spec
    bank = triangular_filterbank(cfg.n_filt, spec.nfft, cfg.sample_rate_hz, cfg.fmin, cfg.fmax)
    model_cfg = ModelConfig(cfg.arch, n_classes, cfg.leaky_slope,
                            (cfg.n_filt, train_set.frames.shape[2]))
    trainable = cfg.weight_mode is not WeightMode.FIX
    n_runs = 1 + (cfg.rounds if cfg.weight_mode is WeightMode.IMPROVED else 0)

    reports = []
    for r in range(n_runs):
        if r > 0:
            bank = smooth_filterbank(reports[-1].post_bank, cfg.savgol, clip_negative=cfg.clip_negative)
        init_seed, shuffle_seed = np.random.SeedSequence([seed, r]).generate_state(2)
        model = Model(model_cfg, rng=np.random.default_rng(int(init_seed)))
        fb_state = FBLayerState(bank.weights, epsilon=cfg.epsilon, trainable=trainable,
                                paper_exact_gradient=cfg.paper_exact_gradient)
        sched = replace(cfg.schedule, rng_seed=int(shuffle_seed))
        log.info("round %d: training %s bank (%s)", r, bank.provenance.value, cfg.weight_mode.value)
        model, fb_state, history = train_model(model, fb_state, train_set, sched, val=val_set)
        post = bank if not trainable else bank.with_weights(fb_state.W, provenance=Provenance.TRAINED)
        val_acc = _clip_accuracy(model, fb_state, val, cfg, n_classes)[0] if val else None
        test_acc, cm = _clip_accuracy(model, fb_state, test, cfg, n_classes)
        reports.append(RoundReport(r, cfg.weight_mode, bank, post, history, val_acc, test_acc, cm,
                                   model=model, fb_state=fb_state))
    return reports


def write_reports(reports: list[RoundReport], out_dir, svg: bool = True) -> list[str]:
    """Write ``round<k>.json`` plus pre/post bank CSVs (and SVGs) per report."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for rep in reports:
        stem = os.path.join(out_dir, f"round{rep.round_index}")
        with open(stem + ".json", "w", newline="\n") as fh:
            json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        save_filterbank(rep.pre_bank, stem + "_pre.csv")
        save_filterbank(rep.post_bank, stem + "_post.csv")
        written += [stem + ".json", stem + "_pre.csv", stem + "_post.csv"]
        if svg:
            with open(stem + "_post.svg", "w", newline="\n") as fh:
                fh.write(filters_svg(rep.post_bank, overlay=rep.pre_bank,
                                     title=f"round {rep.round_index}: {rep.post_bank.provenance.value} vs initial"))
            written.append(stem + "_post.svg")
    return written


def config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    return json.loads(json.dumps(d, default=lambda v: v.value if isinstance(v, enum.Enum) else str(v)))
