"""Seeded synthetic corpora for desk-scale verification.

Each patient gets one recording built from shuffled 10 s segments, one per
labelled window. Snore classes are pulse-train bursts shaped by patient-
specific vocal-tract resonators: the OSA class sits in a low F0 band with
long inter-burst gaps, the simple class uses a higher band and duty cycle.
``other`` segments are breathing-shaped low-pass noise, a fraction of which
carries a faint tonal component so the snore/other boundary is not trivially
clean. Ambient white noise is mixed over everything at a configurable SNR.

Everything derives from per-patient seeded generators, so a spec with the
same seed reproduces bit-identical audio.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from .audio_io import (
    WINDOW_SAMPLES,
    WINDOW_SECONDS,
    LabeledEvent,
    Recording,
    SoundClass,
    write_label_csv,
    write_wav,
)
from .errors import ValidationError


@dataclass(frozen=True)
class SynthSpec:
    n_patients: int = 10
    windows_per_class_per_patient: int = 30
    osa_f0_range: tuple[float, float] = (60.0, 120.0)
    simple_f0_range: tuple[float, float] = (90.0, 180.0)
    osa_duty: float = 0.55
    simple_duty: float = 0.65
    # both snore types come out of the same airway: identical templates,
    # separated per patient by the jitter draw, not by class
    osa_formants: tuple = ((430.0, 130.0), (1250.0, 160.0))
    simple_formants: tuple = ((430.0, 130.0), (1250.0, 160.0))
    tonal_other_fraction: float = 0.50
    snr_db: float = 15.0
    seed: int = 0
    sample_rate_hz: int = 16_000

    def __post_init__(self):
        if self.n_patients <= 0 or self.windows_per_class_per_patient <= 0:
            raise ValidationError("patient and window counts must be positive")
        for name, (lo, hi) in (("osa_f0_range", self.osa_f0_range),
                               ("simple_f0_range", self.simple_f0_range)):
            if not (0 < lo < hi):
                raise ValidationError(f"{name} must satisfy 0 < min < max")
        if not (0 < self.osa_duty <= 1 and 0 < self.simple_duty <= 1):
            raise ValidationError("duty cycles must be in (0, 1]")
        if not 0 <= self.tonal_other_fraction <= 1:
            raise ValidationError("tonal_other_fraction must be in [0, 1]")
        if not np.isfinite(self.snr_db):
            raise ValidationError("snr_db must be finite")
        for name, resonators in (("osa_formants", self.osa_formants),
                                 ("simple_formants", self.simple_formants)):
            for f_hz, bw_hz in resonators:
                if f_hz <= 0 or bw_hz <= 0:
                    raise ValidationError(f"{name} entries must be positive (freq, bw) pairs")


def _resonator(f_hz: float, bw_hz: float, fs: int) -> tuple[list[float], list[float]]:
    r = float(np.exp(-np.pi * bw_hz / fs))
    theta = 2.0 * np.pi * f_hz / fs
    return [1.0], [1.0, -2.0 * r * np.cos(theta), r * r]


def _apply_resonators(x: np.ndarray, resonators, fs: int) -> np.ndarray:
    for f_hz, bw_hz in resonators:
        b, a = _resonator(f_hz, bw_hz, fs)
        x = lfilter(b, a, x)
    return x


def _snore_segment(
    rng: np.random.Generator,
    fs: int,
    f0: float,
    duty: float,
    duty_jitter: tuple[float, float],
    resonators,
    amp_range: tuple[float, float],
) -> np.ndarray:
    """One 10 s segment of pulse-train bursts through the given resonators."""
    n = WINDOW_SAMPLES
    n_cycles = 3  # breath cycles per window
    cycle = n // n_cycles
    x = np.zeros(n)
    for c in range(n_cycles):
        d = min(0.95, duty * rng.uniform(*duty_jitter))
        blen = max(int(0.2 * fs), int(d * cycle))
        start = c * cycle + int(rng.uniform(0.0, 0.08) * cycle)
        blen = min(blen, n - start)
        burst_f0 = f0 * float(np.clip(1.0 + 0.02 * rng.standard_normal(), 0.96, 1.04))
        period = fs / burst_f0
        positions = np.round(np.arange(0, blen, period)).astype(int)
        positions = positions[positions < blen]
        burst = np.zeros(blen)
        burst[positions] = np.clip(1.0 + 0.1 * rng.standard_normal(positions.size), 0.5, None)
        # turbulent aspiration rides along with the pulse excitation
        burst += 0.06 * rng.standard_normal(blen)
        envelope = np.sin(np.pi * (np.arange(blen) + 0.5) / blen) ** 0.5
        x[start : start + blen] += burst * envelope
    y = _apply_resonators(x, resonators, fs)
    peak = np.abs(y).max()
    if peak > 0:
        y *= rng.uniform(*amp_range) / peak
    return y


def _breath_segment(rng: np.random.Generator, fs: int) -> np.ndarray:
    """Breathing-shaped low-pass noise."""
    n = WINDOW_SAMPLES
    sos = butter(4, 350.0, btype="low", fs=fs, output="sos")
    y = sosfilt(sos, rng.standard_normal(n))
    t = np.arange(n) / fs
    rate = rng.uniform(0.2, 0.35)  # breath cycles per second
    envelope = 0.25 + 0.75 * np.abs(np.sin(np.pi * rate * t + rng.uniform(0, np.pi))) ** 2
    y *= envelope
    peak = np.abs(y).max()
    if peak > 0:
        y *= rng.uniform(0.04, 0.10) / peak
    return y


def _tonal_breath_segment(rng: np.random.Generator, fs: int, resonators) -> np.ndarray:
    """Faint rhythmic tonal breathing; deliberately snore-adjacent."""
    tone = _snore_segment(
        rng,
        fs,
        f0=rng.uniform(105.0, 200.0),
        duty=0.62,
        duty_jitter=(0.8, 1.15),
        resonators=resonators,
        amp_range=(0.05, 0.14),
    )
    return tone + _breath_segment(rng, fs) * 0.25


@dataclass(frozen=True)
class _PatientVoice:
    osa_f0: float
    simple_f0: float
    osa_resonators: tuple
    simple_resonators: tuple


def _draw_voice(rng: np.random.Generator, spec: SynthSpec) -> _PatientVoice:
    def inside(lo, hi):
        margin = 0.06 * (hi - lo)
        return rng.uniform(lo + margin, hi - margin)

    def jitter(resonators):
        # per-patient vocal-tract variation keeps leave-one-patient-out honest
        return tuple(
            (float(np.clip(f + 0.06 * f * rng.standard_normal(), 120.0, 7000.0)), bw)
            for f, bw in resonators
        )

    return _PatientVoice(
        osa_f0=inside(*spec.osa_f0_range),
        simple_f0=inside(*spec.simple_f0_range),
        osa_resonators=jitter(spec.osa_formants),
        simple_resonators=jitter(spec.simple_formants),
    )


def _generate_patient(
    patient_index: int, spec: SynthSpec
) -> tuple[Recording, list[LabeledEvent]]:
    fs = spec.sample_rate_hz
    rng = np.random.default_rng([spec.seed, patient_index])
    pid = f"p{patient_index:02d}"
    voice = _draw_voice(rng, spec)

    def drift(f0, band):
        # windows wander around the patient value but stay inside the band
        lo, hi = band
        return float(np.clip(f0 * (1.0 + 0.06 * rng.standard_normal()), lo * 1.02, hi * 0.98))

    segments: list[tuple[SoundClass, np.ndarray]] = []
    for _ in range(spec.windows_per_class_per_patient):
        segments.append(
            (
                SoundClass.OSA_SNORE,
                # hypopnoea snores: sparser and often much quieter, down into
                # the breathing amplitude range
                _snore_segment(
                    rng, fs, drift(voice.osa_f0, spec.osa_f0_range),
                    spec.osa_duty, (0.5, 1.2),
                    voice.osa_resonators, (0.08, 0.35),
                ),
            )
        )
        segments.append(
            (
                SoundClass.SIMPLE_SNORE,
                _snore_segment(
                    rng, fs, drift(voice.simple_f0, spec.simple_f0_range),
                    spec.simple_duty, (0.8, 1.1),
                    voice.simple_resonators, (0.10, 0.45),
                ),
            )
        )
        if rng.uniform() < spec.tonal_other_fraction:
            other = _tonal_breath_segment(rng, fs, voice.simple_resonators)
        else:
            other = _breath_segment(rng, fs)
        segments.append((SoundClass.OTHER, other))

    order = rng.permutation(len(segments))
    samples = np.concatenate([segments[i][1] for i in order])

    clean_rms = float(np.sqrt(np.mean(samples**2)))
    sigma = clean_rms * 10.0 ** (-spec.snr_db / 20.0)
    samples = samples + sigma * rng.standard_normal(samples.size)
    samples = np.clip(samples, -1.0, 1.0)

    events = []
    for slot, i in enumerate(order):
        start = slot * WINDOW_SECONDS
        events.append(
            LabeledEvent(
                patient_id=pid,
                start_s=start,
                end_s=start + WINDOW_SECONDS,
                label=segments[i][0],
            )
        )
    return Recording(patient_id=pid, samples=samples, sample_rate_hz=fs), events


def generate_corpus(spec: SynthSpec = SynthSpec()) -> tuple[list[Recording], list[LabeledEvent]]:
    """All patients' recordings plus the exact label tiling."""
    recordings, labels = [], []
    for p in range(spec.n_patients):
        rec, events = _generate_patient(p, spec)
        recordings.append(rec)
        labels.extend(events)
    return recordings, labels


def spec_digest(spec: SynthSpec) -> str:
    doc = json.dumps(asdict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def write_corpus(
    spec: SynthSpec,
    out_dir: str | Path,
) -> Path:
    """Generate and write WAVs + labels.csv + manifest.json; returns the dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recordings, labels = generate_corpus(spec)
    for rec in recordings:
        write_wav(out_dir / f"{rec.patient_id}.wav", rec)
    write_label_csv(out_dir / "labels.csv", labels, comments=[f"spec_digest={spec_digest(spec)}"])
    manifest = {
        "spec": asdict(spec),
        "spec_digest": spec_digest(spec),
        "patients": [rec.patient_id for rec in recordings],
        "n_labels": len(labels),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out_dir
