"""Mini-batch training of the filter bank layer and CNN as one network."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument, TrainingDiverged
from ..fblayer import FBLayerState, fb_backward, fb_forward
from .layers import softmax_xent_batch
from .model import Model
from .optim import TrainSchedule, adam_init, adam_step, scheduled_lr

__all__ = ["FrameDataset", "train_model", "predict_scores", "FB_PARAM"]

log = logging.getLogger(__name__)

FB_PARAM = "fb.W"


@dataclass(frozen=True, eq=False)
class FrameDataset:
    """Power frames ``(N, n_bins, T)`` with integer labels ``(N,)``."""

    frames: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if frames.ndim != 3 or labels.shape != (frames.shape[0],):
            raise InvalidArgument(f"bad dataset shapes: frames {frames.shape}, labels {labels.shape}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)


def predict_scores(model: Model, fb_state: FBLayerState, frames, batch_size: int = 256) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    out = []
    for start in range(0, len(frames), batch_size):
        feats, _ = fb_forward(fb_state, frames[start:start + batch_size])
        out.append(model.predict_scores(feats))
    return np.concatenate(out) if out else np.zeros((0, model.cfg.n_classes))


def _calibrate(model: Model, fb_state: FBLayerState, data: FrameDataset) -> None:
    total = count = sq = 0.0
    for start in range(0, len(data), 256):
        feats, _ = fb_forward(fb_state, data.frames[start:start + 256])
        total += feats.sum()
        sq += (feats ** 2).sum()
        count += feats.size
    mean = total / count
    std = np.sqrt(max(sq / count - mean ** 2, 0.0))
    model.input_shift = float(mean)
    model.input_scale = float(std) if std > 1e-12 else 1.0


def train_model(model: Model, fb_state: FBLayerState, dataset: FrameDataset,
                sched: TrainSchedule, val: FrameDataset | None = None,
                calibrate: bool = True):
    """Train ``model`` (and ``fb_state`` when trainable) with Adam.

    Batches are reshuffled every epoch from ``sched.rng_seed``.  The learning
    rate follows :func:`scheduled_lr`.  When ``calibrate`` is set the model's
    input standardisation is fitted to the initial features first.

    Returns:
        ``(model, fb_state, history)`` where ``history`` holds one dict per
        epoch with ``lr``, ``train_loss``, ``train_accuracy`` and
        ``val_accuracy`` (``None`` without a validation set).

    Raises:
        TrainingDiverged: the loss became NaN or infinite.
    """
    if len(dataset) == 0:
        raise InvalidArgument("training set is empty")
    if dataset.frames.shape[1] != fb_state.W.shape[1]:
        raise InvalidArgument(
            f"dataset has {dataset.frames.shape[1]} bins, filter bank expects {fb_state.W.shape[1]}"
        )
    if calibrate:
        _calibrate(model, fb_state, dataset)

    rng = np.random.default_rng(sched.rng_seed)
    params = dict(model.params)
    if fb_state.trainable:
        params[FB_PARAM] = np.array(fb_state.W)
    adam = adam_init(params)
    history = []
    n = len(dataset)

    for epoch in range(sched.epochs):
        lr = scheduled_lr(sched, epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, sched.batch_size):
            idx = order[start:start + sched.batch_size]
            frames, labels = dataset.frames[idx], dataset.labels[idx]
            feats, fb_cache = fb_forward(fb_state, frames)
            logits, caches = model.forward(feats)
            loss, dlogits = softmax_xent_batch(logits, labels)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            grads, dfeats = model.backward(dlogits, caches)
            if fb_state.trainable:
                grads[FB_PARAM], _ = fb_backward(dfeats, fb_cache, fb_state)
            params, adam = adam_step(params, grads, adam, lr)
            model.params = {k: v for k, v in params.items() if k != FB_PARAM}
            if fb_state.trainable:
                fb_state = fb_state.with_W(params[FB_PARAM])
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == labels).sum())

        record = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": loss_sum / n,
            "train_accuracy": correct / n,
            "val_accuracy": None,
        }
        if val is not None and len(val):
            pred = predict_scores(model, fb_state, val.frames).argmax(axis=1)
            record["val_accuracy"] = float((pred == val.labels).mean())
        log.debug("epoch %d: %s", epoch, record)
        history.append(record)
    return model, fb_state, history
