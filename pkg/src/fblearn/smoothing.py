"""Savitzky-Golay smoothing of filter bank rows."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .melbank import FilterBank, Provenance

__all__ = ["EdgeMode", "SavGolSpec", "savgol_kernel", "savgol_smooth", "smooth_filterbank"]


class EdgeMode(str, enum.Enum):
    MIRROR = "mirror"


@dataclass(frozen=True)
class SavGolSpec:
    window_len: int = 9
    poly_order: int = 3
    edge_mode: EdgeMode = EdgeMode.MIRROR

    def __post_init__(self):
        if self.window_len < 1 or self.window_len % 2 == 0:
            raise InvalidArgument(f"window_len must be a positive odd integer, got {self.window_len}")
        if self.poly_order < 0:
            raise InvalidArgument(f"poly_order must be >= 0, got {self.poly_order}")
        if self.poly_order >= self.window_len:
            raise InvalidArgument(
                f"poly_order ({self.poly_order}) must be smaller than window_len ({self.window_len})"
            )
        object.__setattr__(self, "edge_mode", EdgeMode(self.edge_mode))


def savgol_kernel(spec: SavGolSpec) -> np.ndarray:
    """Smoothing weights of a centred least-squares polynomial fit.

    With the Vandermonde matrix ``A[k, p] = x_k ** p`` over offsets
    ``x = -h .. h``, the fitted value at the centre is the constant
    coefficient of the fit, so the weights are ``A (A^T A)^-1 e_0``.
    The kernel is symmetric; convolution and correlation order coincide.
    """
    half = spec.window_len // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    A = np.vander(x, spec.poly_order + 1, increasing=True)
    e0 = np.zeros(spec.poly_order + 1)
    e0[0] = 1.0
    return A @ np.linalg.solve(A.T @ A, e0)


def savgol_smooth(rows, spec: SavGolSpec) -> np.ndarray:
    """Smooth each row of a 2-D array (or a single 1-D signal) independently.

    Edges are mirror padded without repeating the edge sample, so the output
    has the same length as the input.
    """
    rows = np.asarray(rows, dtype=np.float64)
    single = rows.ndim == 1
    rows = np.atleast_2d(rows)
    if rows.shape[1] < spec.window_len:
        raise InvalidArgument(
            f"signal length {rows.shape[1]} is shorter than the smoothing window {spec.window_len}"
        )
    kernel = savgol_kernel(spec)
    half = spec.window_len // 2
    padded = np.pad(rows, ((0, 0), (half, half)), mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, spec.window_len, axis=1)
    out = windows @ kernel
    return out[0] if single else out


def smooth_filterbank(fb: FilterBank, spec: SavGolSpec | None = None,
                      clip_negative: bool = False) -> FilterBank:
    """Smooth every filter row; the result is tagged ``Smoothed``.

    Negative weights produced by the polynomial fit are kept unless
    ``clip_negative`` is set.
    """
    spec = spec or SavGolSpec()
    smoothed = savgol_smooth(fb.weights, spec)
    if clip_negative:
        smoothed = np.maximum(smoothed, 0.0)
    return fb.with_weights(
        smoothed,
        provenance=Provenance.SMOOTHED,
        savgol_window=spec.window_len,
        savgol_order=spec.poly_order,
    )
