import numpy as np
import pytest

from snorelab.audio_io import WINDOW_SAMPLES, AnalysisWindow, SoundClass
from snorelab.features import N_FEATURES, FeatureVector

FS = 16_000


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_window(samples, patient_id="p00", index=0, label=SoundClass.OTHER):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size != WINDOW_SAMPLES:
        raise ValueError("test window must hold exactly 10 s at 16 kHz")
    return AnalysisWindow(
        patient_id=patient_id, index=index, start_s=index * 10.0, samples=samples, label=label
    )


def sine_window(freq_hz, amplitude=1.0, **kwargs):
    t = np.arange(WINDOW_SAMPLES) / FS
    return make_window(amplitude * np.sin(2 * np.pi * freq_hz * t), **kwargs)


def make_feature_corpus(
    n_patients=10,
    windows_per_class=10,
    separation=3.0,
    patient_sigma=0.3,
    informative=(4, 11, 27),
    seed=0,
):
    """Feature-level corpus: Gaussian blobs per class plus patient effects.

    Classes are shifted along the informative dimensions by ``separation``
    standard deviations; every other dimension is pure noise.
    """
    rng = np.random.default_rng(seed)
    shifts = {
        SoundClass.OSA_SNORE: 0.0,
        SoundClass.SIMPLE_SNORE: separation,
        SoundClass.OTHER: 2.0 * separation,
    }
    vectors = []
    for p in range(n_patients):
        pid = f"p{p:02d}"
        patient_offset = patient_sigma * rng.standard_normal(N_FEATURES)
        index = 0
        for cls, shift in shifts.items():
            for _ in range(windows_per_class):
                values = rng.standard_normal(N_FEATURES) + patient_offset
                for dim in informative:
                    values[dim] += shift
                vectors.append(
                    FeatureVector(patient_id=pid, window_index=index, label=cls, values=values)
                )
                index += 1
    return vectors
