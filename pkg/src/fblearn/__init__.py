"""Learnable log filter bank front end with smoothing and re-initialisation."""

from .dsp import FrameSpec, PowerSpectrogram, Waveform, WindowKind, power_spectrogram
from .egl import ExperimentConfig, RoundReport, WeightMode, run_experiment
from .fblayer import FBLayerState, fb_backward, fb_forward
from .melbank import FilterBank, Provenance, triangular_filterbank
from .smoothing import SavGolSpec, smooth_filterbank

__version__ = "0.1.0"

__all__ = [
    "FrameSpec", "PowerSpectrogram", "Waveform", "WindowKind", "power_spectrogram",
    "ExperimentConfig", "RoundReport", "WeightMode", "run_experiment",
    "FBLayerState", "fb_backward", "fb_forward",
    "FilterBank", "Provenance", "triangular_filterbank",
    "SavGolSpec", "smooth_filterbank",
]
