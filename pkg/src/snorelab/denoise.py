"""Single-band magnitude spectral subtraction.

Noise is estimated per recording as the mean STFT magnitude over the quietest
fraction of frames, then subtracted Boll-style with over-subtraction and a
spectral floor:

    |Y| = max(|X| - alpha * N, beta * |X|)

The noisy phase is reused and the signal is rebuilt by overlap-add. With the
default 512/256 Hann framing the analysis/synthesis round trip is exact to
machine precision, so a zero noise profile leaves the input untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .audio_io import Recording
from .errors import InsufficientDataError, ValidationError


@dataclass(frozen=True)
class DenoiseConfig:
    fft_size: int = 512  # 32 ms frames at 16 kHz
    hop: int = 256  # 16 ms
    alpha: float = 2.0  # over-subtraction factor
    floor_beta: float = 0.02  # spectral floor, as a fraction of |X|
    noise_fraction: float = 0.10  # quietest share of frames in the noise estimate

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise ValidationError("fft_size must be a positive power of two")
        if not 0 < self.hop <= self.fft_size:
            raise ValidationError("hop must be in (0, fft_size]")
        if self.alpha < 0:
            raise ValidationError("alpha must be non-negative")
        if not 0.0 <= self.floor_beta <= 1.0:
            raise ValidationError("floor_beta must be in [0, 1]")
        if not 0.0 < self.noise_fraction <= 1.0:
            raise ValidationError("noise_fraction must be in (0, 1]")


@dataclass(frozen=True)
class NoiseProfile:
    """Per-bin mean noise magnitude for one STFT geometry."""

    mean_magnitude: np.ndarray  # length fft_size // 2 + 1
    fft_size: int

    def __post_init__(self):
        mag = np.asarray(self.mean_magnitude, dtype=np.float64)
        object.__setattr__(self, "mean_magnitude", mag)
        if mag.shape != (self.fft_size // 2 + 1,):
            raise ValidationError(
                f"noise profile must have fft_size//2+1 = {self.fft_size // 2 + 1} bins"
            )
        if not np.all(np.isfinite(mag)) or np.any(mag < 0):
            raise ValidationError("noise magnitudes must be finite and non-negative")


def estimate_noise(rec: Recording, config: DenoiseConfig = DenoiseConfig()) -> NoiseProfile:
    """Mean STFT magnitude over the quietest ``noise_fraction`` of frames.

    Frames are ranked by energy; only frames fully inside the recording are
    used so zero-padded edges cannot masquerade as silence.
    """
    x = rec.samples
    if x.size < config.fft_size:
        raise InsufficientDataError(
            f"recording of {x.size} samples is shorter than one "
            f"{config.fft_size}-sample STFT frame"
        )
    _, _, spec = signal.stft(
        x,
        fs=rec.sample_rate_hz,
        window="hann",
        nperseg=config.fft_size,
        noverlap=config.fft_size - config.hop,
        boundary=None,
        padded=False,
    )
    mag = np.abs(spec)  # (bins, frames)
    frame_energy = np.sum(mag**2, axis=0)
    n_keep = max(1, int(round(config.noise_fraction * frame_energy.size)))
    quietest = np.argsort(frame_energy, kind="stable")[:n_keep]
    return NoiseProfile(mean_magnitude=mag[:, quietest].mean(axis=1), fft_size=config.fft_size)


def _subtract_magnitudes(
    mag: np.ndarray, noise: np.ndarray, config: DenoiseConfig
) -> np.ndarray:
    """Apply the subtraction rule per (bin, frame); never negative, never above |X|."""
    return np.maximum(mag - config.alpha * noise[:, None], config.floor_beta * mag)


def spectral_subtract(
    rec: Recording, noise: NoiseProfile, config: DenoiseConfig = DenoiseConfig()
) -> Recording:
    """Subtract a noise profile from a recording; output length equals input."""
    if noise.fft_size != config.fft_size:
        raise ValidationError(
            f"noise profile fft_size {noise.fft_size} does not match config "
            f"fft_size {config.fft_size}"
        )
    x = rec.samples
    _, _, spec = signal.stft(
        x,
        fs=rec.sample_rate_hz,
        window="hann",
        nperseg=config.fft_size,
        noverlap=config.fft_size - config.hop,
        boundary="zeros",
        padded=True,
    )
    mag = np.abs(spec)
    out_mag = _subtract_magnitudes(mag, noise.mean_magnitude, config)
    phase = np.exp(1j * np.angle(spec))
    _, y = signal.istft(
        out_mag * phase,
        fs=rec.sample_rate_hz,
        window="hann",
        nperseg=config.fft_size,
        noverlap=config.fft_size - config.hop,
        boundary=True,
    )
    if y.size < x.size:  # pragma: no cover - istft always covers the input span
        y = np.pad(y, (0, x.size - y.size))
    y = np.clip(y[: x.size], -1.0, 1.0)
    return Recording(patient_id=rec.patient_id, samples=y, sample_rate_hz=rec.sample_rate_hz)


def snr_db(reference: np.ndarray, estimate: np.ndarray) -> float:
    """SNR of ``estimate`` against a known clean ``reference``, in dB."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValidationError("reference and estimate must have the same length")
    p_ref = np.sum(reference**2)
    p_err = np.sum((estimate - reference) ** 2)
    if p_err == 0.0:
        return np.inf
    return 10.0 * np.log10(p_ref / p_err) if p_ref > 0 else -np.inf
