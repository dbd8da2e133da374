"""Command line entry point.

Exit codes: 0 success, 2 usage or validation error, 3 runtime failure
(I/O, diverged training).  Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import data, egl
from .dsp import FrameSpec, power_spectrogram, resample
from .errors import FBLearnError, TrainingDiverged
from .fblayer import DEFAULT_EPSILON, log_filterbank_features
from .melbank import load_filterbank, save_filterbank, triangular_filterbank
from .report import filters_svg, format_percent
from .smoothing import SavGolSpec, smooth_filterbank

log = logging.getLogger("fblearn")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def cmd_synth(args, parser):
    if args.classes < 2:
        parser.error("--classes must be at least 2")
    if args.clips < 1:
        parser.error("--clips must be at least 1")
    clips = data.synth_dataset(args.classes, args.clips, args.seconds, args.rate, args.seed,
                               n_folds=args.folds)
    os.makedirs(args.out_dir, exist_ok=True)
    entries = []
    for c in clips:
        name = f"{c.id}.wav"
        data.write_wav(os.path.join(args.out_dir, name), c.waveform)
        entries.append(data.ManifestEntry(name, c.fold, c.label, f"band{c.label}"))
    class_names = [f"band{k}" for k in range(args.classes)]
    data.write_manifest(os.path.join(args.out_dir, "manifest.csv"), entries, class_names)
    print(f"wrote {len(clips)} clips ({args.classes} classes x {args.clips}) "
          f"and manifest.csv to {args.out_dir}")
    return EXIT_OK


def cmd_run(args, parser):
    cfg = egl.load_config(args.config) if args.config else egl.ExperimentConfig()
    manifest = data.load_manifest(args.manifest)
    seed = cfg.schedule.rng_seed if args.seed is None else args.seed
    clips = data.load_clips(manifest)
    reports = egl.run_experiment(cfg, clips, args.test_fold, n_classes=len(manifest.class_names), seed=seed)
    os.makedirs(args.out_dir, exist_ok=True)
    egl.write_reports(reports, args.out_dir)
    with open(os.path.join(args.out_dir, "config.txt"), "w", newline="\n") as fh:
        fh.write(egl.format_config(cfg))
    final = reports[-1]
    summary = {
        "weight_mode": cfg.weight_mode.value,
        "seed": seed,
        "test_fold": args.test_fold,
        "rounds": len(reports),
        "test_accuracy": [r.test_accuracy for r in reports],
        "final_test_accuracy": final.test_accuracy,
    }
    with open(os.path.join(args.out_dir, "summary.json"), "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for r in reports:
        log.info("round %d test accuracy %s", r.round_index, format_percent(r.test_accuracy))
    print(format_percent(final.test_accuracy))
    return EXIT_OK


def cmd_features(args, parser):
    w = data.read_wav(args.wav)
    if args.rate and args.rate != w.sample_rate_hz:
        w = resample(w, args.rate)
    if args.filters:
        fb = load_filterbank(args.filters)
        if fb.sample_rate_hz != w.sample_rate_hz:
            w = resample(w, fb.sample_rate_hz)
        nfft = fb.nfft
    else:
        nfft = args.nfft or w.sample_rate_hz
        fb = triangular_filterbank(args.n_filt, nfft, w.sample_rate_hz)
    spec = power_spectrogram(w, FrameSpec(nfft, args.hop))
    feats = log_filterbank_features(fb, spec, epsilon=args.epsilon)
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, f"{_stem(args.wav)}_features.csv")
    np.savetxt(out, feats, delimiter=",", fmt="%.17g")
    print(out)
    return EXIT_OK


def cmd_smooth(args, parser):
    fb = load_filterbank(args.input)
    smoothed = smooth_filterbank(fb, SavGolSpec(args.window, args.order), clip_negative=args.clip_negative)
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, f"{_stem(args.input)}_smoothed.csv")
    save_filterbank(smoothed, out)
    print(out)
    return EXIT_OK


def cmd_plot(args, parser):
    fb = load_filterbank(args.input)
    overlay = load_filterbank(args.overlay) if args.overlay else None
    layout = (args.rows, args.cols) if args.rows and args.cols else None
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, f"{_stem(args.input)}.svg")
    with open(out, "w", newline="\n") as fh:
        fh.write(filters_svg(fb, layout=layout, overlay=overlay))
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fblearn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic band dataset as WAV files plus manifest")
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--clips", type=int, default=60, help="clips per class")
    s.add_argument("--seconds", type=float, default=1.0)
    s.add_argument("--rate", type=int, default=8000)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("run", help="run one Fix/Trained/Improved experiment")
    r.add_argument("--config", help="key = value experiment config file")
    r.add_argument("--manifest", required=True)
    r.add_argument("--test-fold", type=int, required=True)
    r.add_argument("--out-dir", required=True)
    r.add_argument("--seed", type=int, help="overrides the config seed")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("features", help="log filter bank features of a WAV file as CSV")
    f.add_argument("--wav", required=True)
    f.add_argument("--filters", help="filter bank CSV (default: triangular bank)")
    f.add_argument("--n-filt", type=int, default=40)
    f.add_argument("--nfft", type=int, help="default: sample rate")
    f.add_argument("--hop", type=int, help="default: nfft // 4")
    f.add_argument("--rate", type=int, help="resample to this rate first")
    f.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    f.add_argument("--out-dir", required=True)
    f.set_defaults(func=cmd_features)

    m = sub.add_parser("smooth", help="Savitzky-Golay smooth a filter bank CSV")
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--window", type=int, default=9)
    m.add_argument("--order", type=int, default=3)
    m.add_argument("--clip-negative", action="store_true")
    m.add_argument("--out-dir", required=True)
    m.set_defaults(func=cmd_smooth)

    g = sub.add_parser("plot", help="render a filter bank CSV as an SVG grid")
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--overlay", help="second bank drawn in each panel")
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, parser)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FBLearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
