"""Snore classification pipeline for nocturnal audio recordings.

Stages: WAV ingestion and 10 s windowing (:mod:`snorelab.audio_io`),
spectral-subtraction enhancement (:mod:`snorelab.denoise`), a fixed
50-dimensional feature extractor (:mod:`snorelab.features`), a shared-
covariance LDA classifier (:mod:`snorelab.classifier`), nested
leave-one-patient-out evaluation (:mod:`snorelab.evaluation`), and a seeded
synthetic-corpus generator (:mod:`snorelab.synth`). The ``snorelab`` console
command wires them together.
"""

from .audio_io import (
    AnalysisWindow,
    LabeledEvent,
    Recording,
    SoundClass,
    load_recording,
    window_recording,
)
from .classifier import LdaConfig, LdaModel, fit, load_model, predict, save_model
from .denoise import DenoiseConfig, NoiseProfile, estimate_noise, spectral_subtract
from .evaluation import CvReport, ExperimentKind, ExperimentSpec, SelectionMode, outer_loop
from .features import (
    FEATURE_NAMES,
    FeatureConfig,
    FeatureVector,
    extract_features,
)
from .synth import SynthSpec, generate_corpus

__version__ = "0.1.0"

__all__ = [
    "AnalysisWindow",
    "CvReport",
    "DenoiseConfig",
    "ExperimentKind",
    "ExperimentSpec",
    "FEATURE_NAMES",
    "FeatureConfig",
    "FeatureVector",
    "LabeledEvent",
    "LdaConfig",
    "LdaModel",
    "NoiseProfile",
    "Recording",
    "SelectionMode",
    "SoundClass",
    "SynthSpec",
    "estimate_noise",
    "extract_features",
    "fit",
    "generate_corpus",
    "load_model",
    "load_recording",
    "outer_loop",
    "predict",
    "save_model",
    "spectral_subtract",
    "window_recording",
    "__version__",
]
