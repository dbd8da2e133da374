"""Triangular mel filter banks and their CSV/JSON serialisation."""

from __future__ import annotations

import enum
import io
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateFilterError, InvalidArgument

__all__ = [
    "Provenance",
    "FilterBank",
    "hz_to_mel",
    "mel_to_hz",
    "triangular_filterbank",
    "filterbank_to_csv",
    "filterbank_from_csv",
    "save_filterbank",
    "load_filterbank",
]


class Provenance(str, enum.Enum):
    TRIANGULAR_INIT = "TriangularInit"
    TRAINED = "Trained"
    SMOOTHED = "Smoothed"


@dataclass(frozen=True, eq=False)
class FilterBank:
    """An ``n_filt x (nfft // 2 + 1)`` weight matrix plus how it was made.

    ``meta`` carries free-form construction details (``fmin``/``fmax`` for
    triangular banks, smoothing parameters for smoothed ones) and ends up
    in the JSON sidecar.
    """

    weights: np.ndarray
    nfft: int
    sample_rate_hz: int
    provenance: Provenance
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2:
            raise InvalidArgument(f"filter bank weights must be 2-D, got shape {w.shape}")
        if w.shape[1] != self.nfft // 2 + 1:
            raise InvalidArgument(
                f"filter bank has {w.shape[1]} columns, expected nfft // 2 + 1 = {self.nfft // 2 + 1}"
            )
        if self.sample_rate_hz <= 0:
            raise InvalidArgument("sample rate must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_filt(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate_hz / self.nfft

    def peak_bins(self) -> np.ndarray:
        return np.argmax(self.weights, axis=1)

    def with_weights(self, weights, provenance=None, **meta) -> "FilterBank":
        merged = {**self.meta, **meta}
        return replace(self, weights=weights, provenance=provenance or self.provenance, meta=merged)


def hz_to_mel(f):
    """HTK mel scale, ``2595 log10(1 + f / 700)``."""
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0):
        raise InvalidArgument(f"frequency must be >= 0, got {f}")
    m = 2595.0 * np.log10(1.0 + f_arr / 700.0)
    return float(m) if np.ndim(f) == 0 else m


def mel_to_hz(m):
    m_arr = np.asarray(m, dtype=np.float64)
    if np.any(m_arr < 0):
        raise InvalidArgument(f"mel value must be >= 0, got {m}")
    f = 700.0 * (10.0 ** (m_arr / 2595.0) - 1.0)
    return float(f) if np.ndim(m) == 0 else f


def triangular_filterbank(n_filt: int, nfft: int, sample_rate_hz: int,
                          fmin: float = 0.0, fmax: float | None = None) -> FilterBank:
    """Build ``n_filt`` overlapping triangles equally spaced on the mel axis.

    Edges sit at fractional bin positions ``f * nfft / sample_rate``.  Each
    triangle is sampled at the integer bins and rescaled so its largest
    sampled value is exactly 1.

    Raises:
        InvalidArgument: bad counts or a frequency range outside
            ``[0, sample_rate / 2]``.
        DegenerateFilterError: some triangle covers no bin at all, which
            means ``n_filt`` is too large for this ``nfft``.
    """
    if fmax is None:
        fmax = sample_rate_hz / 2
    if n_filt < 1:
        raise InvalidArgument(f"n_filt must be >= 1, got {n_filt}")
    if nfft < 2:
        raise InvalidArgument(f"nfft must be >= 2, got {nfft}")
    if sample_rate_hz <= 0:
        raise InvalidArgument("sample rate must be positive")
    if not 0 <= fmin < fmax <= sample_rate_hz / 2:
        raise InvalidArgument(
            f"need 0 <= fmin < fmax <= {sample_rate_hz / 2}, got fmin={fmin}, fmax={fmax}"
        )

    mels = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filt + 2)
    hz = mel_to_hz(mels)
    # the outer points are fmin/fmax by definition; avoid round-trip residue
    hz[0], hz[-1] = fmin, fmax
    edges = hz * nfft / sample_rate_hz
    bins = np.arange(nfft // 2 + 1, dtype=np.float64)

    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - lo) / (mid - lo)
    falling = (hi - bins) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    peaks = weights.max(axis=1)
    empty = np.flatnonzero(peaks <= 0)
    if empty.size:
        raise DegenerateFilterError(
            f"filters {empty.tolist()} contain no FFT bin; n_filt={n_filt} is too large for nfft={nfft}"
        )
    weights /= peaks[:, None]
    return FilterBank(weights, nfft, sample_rate_hz, Provenance.TRIANGULAR_INIT,
                      meta={"fmin": float(fmin), "fmax": float(fmax)})


_CSV_MAGIC = "# fblearn-filterbank v1"


def filterbank_to_csv(fb: FilterBank) -> str:
    """Serialise to CSV text: a key=value header comment, then one row per filter.

    Values use 17 significant digits so a reload is lossless.
    """
    out = io.StringIO()
    out.write(
        f"{_CSV_MAGIC} n_filt={fb.n_filt} nfft={fb.nfft} "
        f"sample_rate_hz={fb.sample_rate_hz} provenance={fb.provenance.value}\n"
    )
    for row in fb.weights:
        out.write(",".join(format(v, ".17g") for v in row))
        out.write("\n")
    return out.getvalue()


def filterbank_from_csv(text: str, meta: dict | None = None) -> FilterBank:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(_CSV_MAGIC):
        raise InvalidArgument("not a filter bank CSV: missing header line")
    header = {}
    for token in lines[0][len(_CSV_MAGIC):].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise InvalidArgument(f"malformed header token {token!r}")
        header[key] = value
    try:
        n_filt = int(header["n_filt"])
        nfft = int(header["nfft"])
        sr = int(header["sample_rate_hz"])
        provenance = Provenance(header["provenance"])
    except (KeyError, ValueError) as exc:
        raise InvalidArgument(f"bad filter bank header: {exc}") from None

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise InvalidArgument(f"line {lineno}: non-numeric weight") from None
    if len(rows) != n_filt:
        raise InvalidArgument(f"header says n_filt={n_filt} but found {len(rows)} rows")
    if len({len(r) for r in rows}) != 1:
        raise InvalidArgument("filter rows have differing lengths")
    return FilterBank(np.array(rows), nfft, sr, provenance, meta=meta or {})


def _sidecar(path) -> str:
    root, _ = os.path.splitext(os.fspath(path))
    return root + ".json"


def save_filterbank(fb: FilterBank, path) -> None:
    """Write ``path`` (CSV) and a JSON metadata sidecar next to it."""
    with open(path, "w", newline="\n") as fh:
        fh.write(filterbank_to_csv(fb))
    sidecar = {
        "n_filt": fb.n_filt,
        "nfft": fb.nfft,
        "sample_rate_hz": fb.sample_rate_hz,
        "provenance": fb.provenance.value,
        "meta": fb.meta,
    }
    with open(_sidecar(path), "w", newline="\n") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_filterbank(path) -> FilterBank:
    meta = {}
    side = _sidecar(path)
    if os.path.exists(side):
        with open(side) as fh:
            meta = json.load(fh).get("meta", {})
    with open(path) as fh:
        return filterbank_from_csv(fh.read(), meta=meta)
