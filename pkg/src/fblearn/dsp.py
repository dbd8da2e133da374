"""Waveforms, framing and power spectrograms.

Everything here is a pure function over immutable values.  Arrays stored on
the dataclasses are flagged read-only so a value cannot be mutated after it
has been handed to another stage of the pipeline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "Waveform",
    "WindowKind",
    "FrameSpec",
    "PowerSpectrogram",
    "window_coefficients",
    "dft_power",
    "power_spectrogram",
    "resample",
    "split_clip",
]


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if int(self.sample_rate_hz) != self.sample_rate_hz or self.sample_rate_hz <= 0:
            raise InvalidArgument(f"sample rate must be a positive integer, got {self.sample_rate_hz}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidArgument("waveform samples must be one-dimensional (mono)")
        object.__setattr__(self, "samples", _frozen(samples))
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate_hz


class WindowKind(str, enum.Enum):
    HANN = "hann"
    RECTANGULAR = "rectangular"


@dataclass(frozen=True)
class FrameSpec:
    nfft: int
    hop: int | None = None
    window_kind: WindowKind = WindowKind.HANN

    def __post_init__(self):
        if self.nfft < 2:
            raise InvalidArgument(f"nfft must be >= 2, got {self.nfft}")
        hop = self.nfft // 4 if self.hop is None else self.hop
        if hop < 1:
            raise InvalidArgument(f"hop must be >= 1, got {hop}")
        object.__setattr__(self, "hop", int(hop))
        object.__setattr__(self, "window_kind", WindowKind(self.window_kind))

    @property
    def n_bins(self) -> int:
        return self.nfft // 2 + 1


@dataclass(frozen=True, eq=False)
class PowerSpectrogram:
    """Frames x bins matrix of spectral power.

    ``data[t]`` is the power spectrum of frame ``t``; the filter bank layer
    consumes its transpose, one column per frame.
    """

    data: np.ndarray
    frame_spec: FrameSpec
    sample_rate_hz: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != self.frame_spec.n_bins:
            raise InvalidArgument(
                f"spectrogram must be T x {self.frame_spec.n_bins}, got shape {data.shape}"
            )
        if np.any(data < 0):
            raise InvalidArgument("power spectrogram entries must be non-negative")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]


def window_coefficients(kind, n: int) -> np.ndarray:
    """Symmetric analysis window of length ``n``.

    Hann follows ``0.5 - 0.5 cos(2 pi k / (n - 1))`` so both endpoints are
    exactly zero; a length-1 Hann window is ``[1.0]``.
    """
    if n < 1:
        raise InvalidArgument(f"window length must be >= 1, got {n}")
    kind = WindowKind(kind)
    if kind is WindowKind.RECTANGULAR or n == 1:
        return np.ones(n)
    k = np.arange(n)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))
    # cos() leaves ~1e-17 residue at the endpoints and slightly negative values
    return np.clip(w, 0.0, 1.0)


def dft_power(frame) -> np.ndarray:
    """Squared DFT magnitudes for bins ``0 .. n // 2`` of a real frame.

    Exact for every length, including the non power of two sizes that arise
    when ``nfft`` equals the sample rate.  The frame is never zero padded
    because padding would move the bin centre frequencies.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] < 2:
        raise InvalidArgument(f"frame length must be >= 2, got {frame.shape[-1]}")
    if not np.all(np.isfinite(frame)):
        raise InvalidArgument("frame contains non-finite values")
    spectrum = np.fft.rfft(frame, axis=-1)
    return spectrum.real ** 2 + spectrum.imag ** 2


def power_spectrogram(w: Waveform, spec: FrameSpec) -> PowerSpectrogram:
    """Frame, window and transform a waveform.

    Frame ``t`` covers samples ``[t * hop, t * hop + nfft)``; no centring or
    padding is applied, so ``T = (len - nfft) // hop + 1``.
    """
    n = len(w.samples)
    if n < spec.nfft:
        raise InvalidArgument(f"waveform has {n} samples, fewer than nfft={spec.nfft}")
    frames = np.lib.stride_tricks.sliding_window_view(w.samples, spec.nfft)[:: spec.hop]
    window = window_coefficients(spec.window_kind, spec.nfft)
    power = dft_power(frames * window)
    return PowerSpectrogram(power, spec, w.sample_rate_hz)


_RESAMPLE_BETA = 8.6
_RESAMPLE_ZERO_CROSSINGS = 16  # per side: 32 taps per output phase at the lower rate
_RESAMPLE_CHUNK = 4096


def resample(w: Waveform, target_rate_hz: int) -> Waveform:
    """Band-limited sample rate conversion with a Kaiser-windowed sinc.

    Each output sample is a weighted sum of the input samples within
    16 zero crossings of the anti-alias sinc on either side.  Weights are
    normalised to sum to one so constant signals pass through unchanged away
    from the edges.  The output length is ``round(len * target / source)``.
    """
    if int(target_rate_hz) != target_rate_hz or target_rate_hz <= 0:
        raise InvalidArgument(f"target rate must be a positive integer, got {target_rate_hz}")
    src = w.sample_rate_hz
    if target_rate_hz == src:
        return Waveform(w.samples, src)

    x = w.samples
    n_in = len(x)
    n_out = int(round(n_in * target_rate_hz / src))
    ratio = src / target_rate_hz
    cutoff = min(1.0, target_rate_hz / src)
    half_width = _RESAMPLE_ZERO_CROSSINGS / cutoff
    reach = int(math.ceil(half_width))
    offsets = np.arange(-reach, reach + 1)
    i0_beta = np.i0(_RESAMPLE_BETA)

    out = np.empty(n_out)
    for start in range(0, n_out, _RESAMPLE_CHUNK):
        t = np.arange(start, min(start + _RESAMPLE_CHUNK, n_out)) * ratio
        base = np.floor(t).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        dist = idx - t[:, None]
        inside = np.abs(dist) <= half_width
        valid = (idx >= 0) & (idx < n_in)
        taper = np.sqrt(np.clip(1.0 - (dist / half_width) ** 2, 0.0, 1.0))
        full = cutoff * np.sinc(cutoff * dist) * np.i0(_RESAMPLE_BETA * taper) / i0_beta
        full = np.where(inside, full, 0.0)
        kernel = np.where(valid, full, 0.0)
        # normalised by the untruncated kernel: edges fade rather than get amplified
        norm = full.sum(axis=1)
        samples = x[np.clip(idx, 0, n_in - 1)]
        out[start:start + len(t)] = (kernel * samples).sum(axis=1) / norm
    return Waveform(out, target_rate_hz)


def segment_length(segment_seconds: float, sample_rate_hz: int) -> int:
    # tolerance guards products such as 0.3 * 10 = 2.9999999999999996
    return int(math.floor(segment_seconds * sample_rate_hz + 1e-9))


def split_clip(w: Waveform, segment_seconds: float) -> list[Waveform]:
    """Cut a clip into consecutive, non-overlapping segments.

    A trailing partial segment is zero padded to full length when it spans at
    least half a segment and dropped otherwise.
    """
    seg = segment_length(segment_seconds, w.sample_rate_hz)
    if seg < 1:
        raise InvalidArgument(
            f"segment of {segment_seconds} s at {w.sample_rate_hz} Hz is shorter than one sample"
        )
    x = w.samples
    n_full, rem = divmod(len(x), seg)
    out = [Waveform(x[i * seg:(i + 1) * seg], w.sample_rate_hz) for i in range(n_full)]
    if rem and 2 * rem >= seg:
        tail = np.zeros(seg)
        tail[:rem] = x[n_full * seg:]
        out.append(Waveform(tail, w.sample_rate_hz))
    return out
