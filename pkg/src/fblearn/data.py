"""Audio ingestion, fold manifests and the synthetic band dataset."""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .dsp import Waveform
from .errors import InvalidArgument, ManifestError, UnsupportedFormat, WavParseError

__all__ = [
    "read_wav",
    "write_wav",
    "ManifestEntry",
    "DatasetManifest",
    "load_manifest",
    "write_manifest",
    "kfold_split",
    "ClipExample",
    "load_clips",
    "synth_bands",
    "synth_dataset",
]

_PCM = 0x0001
_IEEE_FLOAT = 0x0003
_EXTENSIBLE = 0xFFFE


def _parse_wav(buf: bytes):
    if len(buf) < 12:
        raise WavParseError("file too short for a RIFF header", len(buf))
    if buf[0:4] != b"RIFF":
        raise WavParseError(f"expected 'RIFF' magic, found {buf[0:4]!r}", 0)
    if buf[8:12] != b"WAVE":
        raise WavParseError(f"expected 'WAVE' form type, found {buf[8:12]!r}", 8)

    fmt = None
    pos = 12
    while pos < len(buf):
        if pos + 8 > len(buf):
            raise WavParseError("truncated chunk header", pos)
        chunk_id = buf[pos:pos + 4]
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        body = pos + 8
        if body + size > len(buf):
            raise WavParseError(
                f"chunk {chunk_id!r} declares {size} bytes but only {len(buf) - body} remain", pos
            )
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavParseError(f"fmt chunk is {size} bytes, need at least 16", pos)
            tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", buf, body)
            if tag == _EXTENSIBLE:
                if size < 40:
                    raise WavParseError("extensible fmt chunk shorter than 40 bytes", pos)
                (tag,) = struct.unpack_from("<H", buf, body + 24)
            fmt = (tag, channels, rate, block_align, bits)
        elif chunk_id == b"data":
            if fmt is None:
                raise WavParseError("data chunk before fmt chunk", pos)
            return fmt, buf[body:body + size], body
        pos = body + size + (size & 1)
    raise WavParseError("no data chunk found", pos)


def read_wav(path) -> Waveform:
    """Read a PCM16 or float32 RIFF/WAVE file as a mono :class:`Waveform`.

    Integer samples are divided by 2**15; multi-channel audio is averaged.
    Nothing is returned unless the whole file parses.

    Raises:
        WavParseError: malformed or truncated container (carries the byte offset).
        UnsupportedFormat: any codec, sample width or channel count other
            than 16-bit PCM / 32-bit float with 1 or 2 channels.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    (tag, channels, rate, block_align, bits), payload, offset = _parse_wav(buf)
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels; only mono and stereo are supported")
    if tag == _PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormat(f"format tag 0x{tag:04x} with {bits} bits per sample")
    if block_align != channels * dtype.itemsize:
        raise WavParseError(f"block align {block_align} inconsistent with {channels}x{bits} bits", offset)
    if len(payload) % block_align:
        raise WavParseError(
            f"data chunk length {len(payload)} is not a multiple of the frame size {block_align}", offset
        )
    if rate == 0:
        raise WavParseError("sample rate is zero", 24)
    samples = np.frombuffer(payload, dtype=dtype).astype(np.float64) * scale
    samples = samples.reshape(-1, channels).mean(axis=1)
    return Waveform(samples, rate)


def write_wav(path, w: Waveform, sample_format: str = "float32") -> None:
    """Write a mono WAV file as ``float32`` (lossless for float32 data) or ``pcm16``."""
    if sample_format == "float32":
        tag, data = _IEEE_FLOAT, w.samples.astype("<f4").tobytes()
        bits = 32
    elif sample_format == "pcm16":
        ints = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
        tag, data, bits = _PCM, ints.tobytes(), 16
    else:
        raise InvalidArgument(f"unknown sample format {sample_format!r}")
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, w.sample_rate_hz, w.sample_rate_hz * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(data)) + data
    if len(data) & 1:
        body += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


@dataclass(frozen=True)
class ManifestEntry:
    file_name: str
    fold: int
    label: int
    class_name: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    class_names: tuple
    root: str
    n_folds: int = 10

    def path_of(self, entry: ManifestEntry) -> str:
        """UrbanSound8K keeps audio under ``fold<k>/``; fall back to the root."""
        nested = os.path.join(self.root, f"fold{entry.fold}", entry.file_name)
        if os.path.exists(nested):
            return nested
        return os.path.join(self.root, entry.file_name)

    @property
    def folds(self) -> list[int]:
        return sorted({e.fold for e in self.entries})


_REQUIRED = ("slice_file_name", "fold", "class")


def load_manifest(csv_path, root=None, n_folds: int = 10) -> DatasetManifest:
    """Parse an UrbanSound8K-style metadata CSV.

    Needs ``slice_file_name``, ``fold`` and ``class`` columns; ``classID`` is
    optional and, when present, fixes each class's label.  Entries keep
    file order.
    """
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ManifestError(f"{csv_path}: empty manifest, no header line")
        missing = [c for c in _REQUIRED if c not in reader.fieldnames]
        if missing:
            raise ManifestError(f"{csv_path}: line 1: missing column(s) {', '.join(missing)}")
        has_ids = "classID" in reader.fieldnames
        rows = []
        for row in reader:
            line = reader.line_num
            name = (row["slice_file_name"] or "").strip()
            if not name:
                raise ManifestError(f"{csv_path}: line {line}: empty file name")
            try:
                fold = int(row["fold"])
            except (TypeError, ValueError):
                raise ManifestError(f"{csv_path}: line {line}: fold {row['fold']!r} is not an integer") from None
            if not 1 <= fold <= n_folds:
                raise ManifestError(f"{csv_path}: line {line}: unknown fold {fold} (expected 1..{n_folds})")
            cls = (row["class"] or "").strip()
            if not cls:
                raise ManifestError(f"{csv_path}: line {line}: empty class name")
            cid = None
            if has_ids:
                try:
                    cid = int(row["classID"])
                except (TypeError, ValueError):
                    raise ManifestError(
                        f"{csv_path}: line {line}: classID {row['classID']!r} is not an integer"
                    ) from None
            rows.append((line, name, fold, cls, cid))
    if not rows:
        raise ManifestError(f"{csv_path}: manifest has no entries")

    seen, dupes = set(), []
    for _, name, *_ in rows:
        if name in seen and name not in dupes:
            dupes.append(name)
        seen.add(name)
    if dupes:
        raise ManifestError(f"{csv_path}: duplicate ids: {', '.join(dupes)}")

    if has_ids:
        by_id = {}
        for line, _, _, cls, cid in rows:
            if by_id.setdefault(cid, cls) != cls:
                raise ManifestError(
                    f"{csv_path}: line {line}: classID {cid} maps to both {by_id[cid]!r} and {cls!r}"
                )
        names_seen = {}
        for cid, cls in by_id.items():
            if cls in names_seen:
                raise ManifestError(f"{csv_path}: class {cls!r} has two ids")
            names_seen[cls] = cid
        if sorted(by_id) != list(range(len(by_id))):
            raise ManifestError(f"{csv_path}: classID values must be 0..{len(by_id) - 1}")
        class_names = tuple(by_id[i] for i in range(len(by_id)))
    else:
        class_names = tuple(dict.fromkeys(cls for *_, cls, _ in rows))
    index = {c: i for i, c in enumerate(class_names)}
    entries = tuple(ManifestEntry(name, fold, index[cls], cls) for _, name, fold, cls, _ in rows)
    root = os.path.dirname(os.path.abspath(csv_path)) if root is None else root
    return DatasetManifest(entries, class_names, root, n_folds)


def write_manifest(path, entries, class_names) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slice_file_name", "fold", "classID", "class"])
        for e in entries:
            writer.writerow([e.file_name, e.fold, e.label, class_names[e.label]])


def kfold_split(manifest: DatasetManifest, test_fold: int):
    """``(train, test)`` entry lists: the test fold against every other fold."""
    if not 1 <= test_fold <= manifest.n_folds:
        raise InvalidArgument(f"test fold {test_fold} outside 1..{manifest.n_folds}")
    train = [e for e in manifest.entries if e.fold != test_fold]
    test = [e for e in manifest.entries if e.fold == test_fold]
    return train, test


@dataclass(frozen=True, eq=False)
class ClipExample:
    waveform: Waveform
    label: int
    fold: int
    id: str


def load_clips(manifest: DatasetManifest, entries=None) -> list[ClipExample]:
    entries = manifest.entries if entries is None else entries
    return [
        ClipExample(read_wav(manifest.path_of(e)), e.label, e.fold, os.path.splitext(e.file_name)[0])
        for e in entries
    ]


def synth_bands(n_classes: int, sample_rate_hz: int, lo_hz: float = 2000.0,
                hi_hz: float | None = None, guard: float = 0.005):
    """Disjoint, log-spaced ``(low, high)`` frequency bands, one per class.

    ``[lo_hz, hi_hz]`` is cut into ``n_classes`` equal pieces on a log axis and
    each piece is shrunk by ``guard`` (relative) on both sides.  The defaults
    (2 kHz to 90% of Nyquist, nearly touching bands) put the class
    boundaries inside the widest mel triangles, where a fixed bank blurs them.
    """
    nyquist = sample_rate_hz / 2
    hi_hz = 0.9 * nyquist if hi_hz is None else hi_hz
    if n_classes < 2:
        raise InvalidArgument(f"need at least 2 classes, got {n_classes}")
    if not 0 < lo_hz < hi_hz:
        raise InvalidArgument(f"need 0 < lo_hz < hi_hz, got {lo_hz}, {hi_hz}")
    if hi_hz > nyquist:
        raise InvalidArgument(f"band edge {hi_hz} Hz exceeds the Nyquist frequency {nyquist} Hz")
    edges = np.geomspace(lo_hz, hi_hz, n_classes + 1)
    return [(a * (1 + guard), b * (1 - guard)) for a, b in zip(edges[:-1], edges[1:])]


def synth_dataset(n_classes: int, clips_per_class: int, clip_seconds: float,
                  sample_rate_hz: int, seed: int, n_folds: int = 5,
                  lo_hz: float = 2000.0, hi_hz: float | None = None,
                  noise_db: float = -20.0, guard: float = 0.005) -> list[ClipExample]:
    """Tone-mixture clips whose class is fixed by a frequency band.

    Each clip of class ``c`` sums 2 or 3 sinusoids with frequencies drawn
    from band ``c`` (see :func:`synth_bands`), random amplitudes and phases,
    plus noise band-limited to the span of all bands at ``noise_db`` relative
    to the tone power.  The overall level is jittered over 20 dB.  Clip
    ``k`` of each class lands in fold ``k % n_folds + 1``.  Output is a
    deterministic function of the arguments.
    """
    if clips_per_class < 1:
        raise InvalidArgument("clips_per_class must be >= 1")
    bands = synth_bands(n_classes, sample_rate_hz, lo_hz, hi_hz, guard)
    n = int(math.floor(clip_seconds * sample_rate_hz + 1e-9))
    if n < 2:
        raise InvalidArgument("clip too short")
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate_hz
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate_hz)
    noise_mask = (freqs >= bands[0][0]) & (freqs <= bands[-1][1])

    clips = []
    for c, (f_lo, f_hi) in enumerate(bands):
        for k in range(clips_per_class):
            n_tones = int(rng.integers(2, 4))
            f = np.exp(rng.uniform(np.log(f_lo), np.log(f_hi), size=n_tones))
            amp = rng.uniform(0.3, 1.0, size=n_tones)
            phase = rng.uniform(0, 2 * np.pi, size=n_tones)
            x = (amp[:, None] * np.sin(2 * np.pi * f[:, None] * t + phase[:, None])).sum(axis=0)
            tone_power = np.mean(x ** 2)

            spectrum = np.fft.rfft(rng.standard_normal(n)) * noise_mask
            noise = np.fft.irfft(spectrum, n)
            noise *= np.sqrt(tone_power * 10 ** (noise_db / 10) / max(np.mean(noise ** 2), 1e-300))
            x = x + noise

            gain = 10 ** (rng.uniform(-20.0, 0.0) / 20)
            x *= gain * 0.9 / np.max(np.abs(x))
            clips.append(ClipExample(Waveform(x, sample_rate_hz), c, k % n_folds + 1, f"synth-c{c}-{k:04d}"))
    return clips
