"""Trainable filter bank layer: ``log(relu(W @ f) + eps)`` with its gradients.

Shapes follow the math: ``W`` is ``n_filt x n_bins``, the power frames ``f``
are ``n_bins x T`` (one column per frame) and the features are
``n_filt x T``.  A leading batch axis on ``f`` is accepted everywhere and
broadcast through the matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dsp import PowerSpectrogram
from .errors import FrozenLayerError, InvalidArgument
from .melbank import FilterBank, Provenance

__all__ = [
    "FBLayerState",
    "FBLayerCache",
    "fb_forward",
    "fb_backward",
    "sgd_weight_update",
    "log_filterbank_features",
]

DEFAULT_EPSILON = 1e-10


@dataclass(frozen=True, eq=False)
class FBLayerState:
    W: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    trainable: bool = True
    # reproduce the gradient rule without the 1/(relu(m)+eps) factor
    paper_exact_gradient: bool = False

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64, copy=True)
        if W.ndim != 2:
            raise InvalidArgument(f"W must be a matrix, got shape {W.shape}")
        if not self.epsilon > 0:
            raise InvalidArgument(f"epsilon must be > 0, got {self.epsilon}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @classmethod
    def from_filterbank(cls, fb: FilterBank, **kwargs) -> "FBLayerState":
        return cls(fb.weights, **kwargs)

    def to_filterbank(self, template: FilterBank, provenance=Provenance.TRAINED) -> FilterBank:
        return template.with_weights(self.W, provenance=provenance)

    def with_W(self, W) -> "FBLayerState":
        return replace(self, W=W)


@dataclass(frozen=True, eq=False)
class FBLayerCache:
    m: np.ndarray   # pre-activation energies, (..., n_filt, T)
    f: np.ndarray   # input power frames, (..., n_bins, T)


def _frames(spec) -> np.ndarray:
    if isinstance(spec, PowerSpectrogram):
        return spec.data.T
    return np.asarray(spec, dtype=np.float64)


def fb_forward(state: FBLayerState, spec) -> tuple[np.ndarray, FBLayerCache]:
    """Filter energies followed by the guarded logarithm.

    ``spec`` is a :class:`PowerSpectrogram` or a raw ``(..., n_bins, T)``
    array of power frames.
    """
    f = _frames(spec)
    if f.ndim < 2 or f.shape[-2] != state.W.shape[1]:
        raise InvalidArgument(
            f"spectrogram has {f.shape[-2] if f.ndim >= 2 else '?'} bins, layer expects {state.W.shape[1]}"
        )
    m = state.W @ f
    features = np.log(np.maximum(m, 0.0) + state.epsilon)
    return features, FBLayerCache(m=m, f=f)


def _local_gradient(m: np.ndarray, state: FBLayerState) -> np.ndarray:
    gate = (m > 0).astype(np.float64)
    if state.paper_exact_gradient:
        return gate
    return gate / (np.maximum(m, 0.0) + state.epsilon)


def fb_backward(grad_features, cache: FBLayerCache, state: FBLayerState):
    """Gradients of the loss with respect to ``W`` and to the input frames.

    With ``g = 1{m > 0} / (relu(m) + eps)``::

        grad_W = (grad_features * g) @ f.T     (summed over any batch axis)
        grad_f = W.T @ (grad_features * g)
    """
    grad_features = np.asarray(grad_features, dtype=np.float64)
    if grad_features.shape != cache.m.shape:
        raise InvalidArgument(
            f"gradient shape {grad_features.shape} does not match features {cache.m.shape}"
        )
    if cache.m.shape[-2] != state.W.shape[0] or cache.f.shape[-2] != state.W.shape[1]:
        raise InvalidArgument("cache was produced by a layer of a different shape")
    delta = grad_features * _local_gradient(cache.m, state)
    grad_W = delta @ np.swapaxes(cache.f, -1, -2)
    if grad_W.ndim > 2:
        grad_W = grad_W.reshape(-1, *grad_W.shape[-2:]).sum(axis=0)
    grad_f = state.W.T @ delta
    return grad_W, grad_f


def sgd_weight_update(state: FBLayerState, grad_W, alpha: float) -> FBLayerState:
    """Plain gradient step ``W - alpha * grad_W``; refuses frozen layers."""
    if not state.trainable:
        raise FrozenLayerError("filter bank layer is frozen; its weights cannot be updated")
    grad_W = np.asarray(grad_W, dtype=np.float64)
    if grad_W.shape != state.W.shape:
        raise InvalidArgument(f"gradient shape {grad_W.shape} does not match W {state.W.shape}")
    return state.with_W(state.W - alpha * grad_W)


def log_filterbank_features(fb: FilterBank, spec: PowerSpectrogram,
                            epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Frozen-layer convenience: log filter bank energies, ``n_filt x T``."""
    features, _ = fb_forward(FBLayerState(fb.weights, epsilon=epsilon, trainable=False), spec)
    return features
