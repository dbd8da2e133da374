"""CNN classifiers that sit on top of the filter bank layer."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from . import layers as L

__all__ = ["Architecture", "ModelConfig", "Model", "save_checkpoint", "load_checkpoint"]

CHECKPOINT_FORMAT = "fblearn-checkpoint"
CHECKPOINT_VERSION = 1


class Architecture(str, enum.Enum):
    SHALLOW = "Shallow"
    DEEP_VGG = "DeepVGG"


@dataclass(frozen=True)
class ModelConfig:
    architecture: Architecture = Architecture.SHALLOW
    n_classes: int = 10
    leaky_slope: float = 0.33
    input_shape: tuple = (40, 28)  # (n_filt, T)

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if not 0 < self.leaky_slope < 1:
            raise InvalidArgument(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.n_classes < 2:
            raise InvalidArgument(f"need at least 2 classes, got {self.n_classes}")
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise InvalidArgument(f"input_shape must be (n_filt, T), got {self.input_shape}")


def _layer_plan(cfg: ModelConfig):
    """Sequence of ``(kind, name, shape)`` tuples; ``shape`` sizes parameters."""
    H, W = cfg.input_shape
    plan = []
    channels = 1

    def conv(name, out_ch):
        nonlocal channels
        plan.append(("conv", name, (out_ch, channels, 3, 3)))
        plan.append(("lrelu", None, None))
        channels = out_ch

    def pool():
        nonlocal H, W
        plan.append(("pool", None, None))
        H, W = H // 2, W // 2

    if cfg.architecture is Architecture.SHALLOW:
        for k, out_ch in enumerate((16, 32), start=1):
            if min(H, W) < 2:
                raise InvalidArgument(f"input {cfg.input_shape} too small for the shallow network")
            conv(f"conv{k}", out_ch)
            pool()
        hidden = 128
    else:
        out_ch = 16
        for block in range(1, 5):
            if min(H, W) < 2:
                break
            conv(f"conv{block}a", out_ch)
            conv(f"conv{block}b", out_ch)
            pool()
            out_ch *= 2
        if not plan:
            raise InvalidArgument(f"input {cfg.input_shape} too small for the VGG network")
        hidden = 256
    flat = channels * H * W
    plan.append(("flatten", None, None))
    plan.append(("dense", "fc1", (flat, hidden)))
    plan.append(("lrelu", None, None))
    plan.append(("dense", "fc2", (hidden, cfg.n_classes)))
    return plan


class Model:
    """Sequential CNN with explicit parameter dictionary.

    Features are standardised by a fixed scalar ``input_shift`` and
    ``input_scale`` before the first convolution.  Both are buffers, not
    trained; the training loop sets them from the initial features.
    """

    def __init__(self, cfg: ModelConfig, params: dict | None = None,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.plan = _layer_plan(cfg)
        self.input_shift = 0.0
        self.input_scale = 1.0
        if params is None:
            params = self._init_params(rng if rng is not None else np.random.default_rng(0))
        self.params = params

    def _init_params(self, rng) -> dict:
        # Kaiming-uniform for leaky ReLU: bound = gain * sqrt(3 / fan_in)
        gain = np.sqrt(2.0 / (1.0 + self.cfg.leaky_slope ** 2))
        params = {}
        for kind, name, shape in self.plan:
            if kind == "conv":
                fan_in = shape[1] * shape[2] * shape[3]
                bound = gain * np.sqrt(3.0 / fan_in)
                params[f"{name}.w"] = rng.uniform(-bound, bound, size=shape)
                params[f"{name}.b"] = np.zeros(shape[0])
            elif kind == "dense":
                bound = gain * np.sqrt(3.0 / shape[0])
                params[f"{name}.w"] = rng.uniform(-bound, bound, size=shape)
                params[f"{name}.b"] = np.zeros(shape[1])
        return params

    def forward(self, x):
        """Logits for features ``x`` of shape ``(N, n_filt, T)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != self.cfg.input_shape:
            raise InvalidArgument(f"model expects (N, {self.cfg.input_shape}), got {x.shape}")
        h = ((x - self.input_shift) / self.input_scale)[:, None]
        caches = []
        slope = self.cfg.leaky_slope
        for kind, name, _ in self.plan:
            if kind == "conv":
                h, c = L.conv2d_forward(h, self.params[f"{name}.w"], self.params[f"{name}.b"])
            elif kind == "dense":
                h, c = L.dense_forward(h, self.params[f"{name}.w"], self.params[f"{name}.b"])
            elif kind == "lrelu":
                h, c = L.leaky_relu_forward(h, slope)
            elif kind == "pool":
                h, c = L.maxpool_forward(h)
            else:
                c = h.shape
                h = h.reshape(h.shape[0], -1)
            caches.append(c)
        return h, caches

    def backward(self, dlogits, caches):
        """Returns ``(grads, dx)``; ``dx`` is the gradient for the input features."""
        grads = {}
        d = dlogits
        for (kind, name, _), c in zip(reversed(self.plan), reversed(caches)):
            if kind == "conv":
                d, grads[f"{name}.w"], grads[f"{name}.b"] = L.conv2d_backward(d, c)
            elif kind == "dense":
                d, grads[f"{name}.w"], grads[f"{name}.b"] = L.dense_backward(d, c)
            elif kind == "lrelu":
                d = L.leaky_relu_backward(d, c)
            elif kind == "pool":
                d = L.maxpool_backward(d, c)
            else:
                d = d.reshape(c)
        dx = d[:, 0] / self.input_scale
        return grads, dx

    def predict_scores(self, x) -> np.ndarray:
        """Softmax class probabilities, ``(N, n_classes)``."""
        logits, _ = self.forward(x)
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def copy(self) -> "Model":
        clone = Model(self.cfg, {k: v.copy() for k, v in self.params.items()})
        clone.input_shift, clone.input_scale = self.input_shift, self.input_scale
        return clone


def _encode(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _decode(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def save_checkpoint(path, model: Model, adam=None, epoch: int = 0, fb_W=None) -> None:
    """JSON checkpoint: versioned header, parameters, Adam moments, epoch."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": model.cfg.architecture.value,
        "config": {
            "n_classes": model.cfg.n_classes,
            "leaky_slope": model.cfg.leaky_slope,
            "input_shape": list(model.cfg.input_shape),
        },
        "epoch": epoch,
        "input_shift": model.input_shift,
        "input_scale": model.input_scale,
        "params": {k: _encode(v) for k, v in sorted(model.params.items())},
    }
    if fb_W is not None:
        doc["fb_W"] = _encode(np.asarray(fb_W))
    if adam is not None:
        doc["adam"] = {
            "step": adam.step, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
            "m": {k: _encode(v) for k, v in sorted(adam.m.items())},
            "v": {k: _encode(v) for k, v in sorted(adam.v.items())},
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Returns ``(model, adam_state_or_None, epoch, fb_W_or_None)``."""
    from .optim import AdamState

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise InvalidArgument(f"{path} is not an fblearn checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InvalidArgument(f"unsupported checkpoint version {doc.get('version')}")
    cfg = ModelConfig(architecture=doc["architecture"], **doc["config"])
    model = Model(cfg, {k: _decode(v) for k, v in doc["params"].items()})
    model.input_shift = doc["input_shift"]
    model.input_scale = doc["input_scale"]
    adam = None
    if "adam" in doc:
        a = doc["adam"]
        adam = AdamState({k: _decode(v) for k, v in a["m"].items()},
                         {k: _decode(v) for k, v in a["v"].items()},
                         a["step"], a["beta1"], a["beta2"], a["eps"])
    fb_W = _decode(doc["fb_W"]) if "fb_W" in doc else None
    return model, adam, doc["epoch"], fb_W
