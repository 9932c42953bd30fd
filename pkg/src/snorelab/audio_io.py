"""WAV ingestion, canonicalization, and 10 s window segmentation.

The whole pipeline operates on mono 16 kHz audio in [-1, 1]. Anything else
read from disk is averaged down to mono, rescaled, and resampled with a
polyphase windowed-sinc filter. Recordings are then cut into non-overlapping
10 s analysis windows aligned to the recording start; a window inherits a
class label only when labelled events of that class cover more than half of
its duration, otherwise it counts as ``other``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioDecodeError, EmptyAudioError, ValidationError

TARGET_RATE = 16_000
WINDOW_SECONDS = 10.0
WINDOW_SAMPLES = int(TARGET_RATE * WINDOW_SECONDS)

LABEL_CSV_HEADER = ["patient_id", "start_s", "end_s", "label"]


class SoundClass(str, Enum):
    """The three target classes."""

    OSA_SNORE = "osa_snore"
    SIMPLE_SNORE = "simple_snore"
    OTHER = "other"


@dataclass(frozen=True)
class Recording:
    """A mono 16 kHz recording for one patient.

    ``samples`` is float64 with every value finite and inside [-1, 1].
    """

    patient_id: str
    samples: np.ndarray
    sample_rate_hz: int = TARGET_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise EmptyAudioError("recording must hold a non-empty 1-D sample buffer")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("recording contains non-finite samples")
        if np.abs(samples).max() > 1.0:
            raise ValidationError("recording samples exceed [-1, 1]")
        if self.sample_rate_hz != TARGET_RATE:
            raise ValidationError(
                f"canonical sample rate is {TARGET_RATE} Hz, got {self.sample_rate_hz}"
            )

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class LabeledEvent:
    """A labelled time interval on one patient's recording."""

    patient_id: str
    start_s: float
    end_s: float
    label: SoundClass

    def __post_init__(self):
        if not (np.isfinite(self.start_s) and np.isfinite(self.end_s)):
            raise ValidationError("event bounds must be finite")
        if self.start_s < 0:
            raise ValidationError("event start must be non-negative")
        if self.end_s <= self.start_s:
            raise ValidationError("event must end after it starts")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class AnalysisWindow:
    """One 10 s slice of a recording. ``label`` is None when unknown."""

    patient_id: str
    index: int
    start_s: float
    samples: np.ndarray
    label: SoundClass | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.shape != (WINDOW_SAMPLES,):
            raise ValidationError(
                f"analysis window must hold exactly {WINDOW_SAMPLES} samples, "
                f"got {samples.shape}"
            )

    @property
    def end_s(self) -> float:
        return self.start_s + WINDOW_SECONDS


def _scale_to_float(data: np.ndarray) -> np.ndarray:
    """Scale integer/float PCM to float64 in [-1, 1]."""
    kind = data.dtype.kind
    if kind == "u":
        # scipy only produces uint8 for 8-bit PCM
        return (data.astype(np.float64) - 128.0) / 128.0
    if kind == "i":
        # 24-bit PCM arrives left-justified in int32, so the int32 scale applies
        return data.astype(np.float64) / float(-np.iinfo(data.dtype).min)
    if kind == "f":
        return np.clip(data.astype(np.float64), -1.0, 1.0)
    raise AudioDecodeError(f"unsupported WAV sample format: {data.dtype}")


def load_recording(path: str | Path, patient_id: str) -> Recording:
    """Load a PCM WAV file and canonicalize it to mono 16 kHz in [-1, 1].

    Multi-channel audio is averaged across channels. Source rates other than
    16 kHz are resampled with ``scipy.signal.resample_poly`` (windowed-sinc
    polyphase).
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioDecodeError(f"cannot decode {path}: {exc}") from exc
    if data.size == 0:
        raise EmptyAudioError(f"{path} holds no audio samples")
    x = _scale_to_float(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if int(rate) <= 0:
        raise AudioDecodeError(f"{path} reports nonsensical sample rate {rate}")
    if int(rate) != TARGET_RATE:
        ratio = Fraction(TARGET_RATE, int(rate))
        x = resample_poly(x, ratio.numerator, ratio.denominator)
        if x.size == 0:
            raise EmptyAudioError(f"{path} is too short to resample")
        # the sinc filter may overshoot slightly at sharp edges
        x = np.clip(x, -1.0, 1.0)
    return Recording(patient_id=patient_id, samples=x)


def _check_no_overlap(events: Sequence[LabeledEvent]) -> None:
    ordered = sorted(events, key=lambda e: (e.start_s, e.end_s))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start_s < prev.end_s - 1e-9:
            raise ValidationError(
                f"events overlap for patient {prev.patient_id}: "
                f"[{prev.start_s}, {prev.end_s}) and [{cur.start_s}, {cur.end_s})"
            )


def _majority_label(events: Sequence[LabeledEvent], start_s: float, end_s: float) -> SoundClass:
    """Class covering more than half of [start_s, end_s), else OTHER.

    Uncovered time counts toward OTHER, so ties and sparse coverage fall back
    to OTHER. Because events never overlap, at most one class can exceed half.
    """
    half = (end_s - start_s) / 2.0
    for cls in (SoundClass.OSA_SNORE, SoundClass.SIMPLE_SNORE):
        covered = 0.0
        for ev in events:
            if ev.label is cls:
                covered += max(0.0, min(ev.end_s, end_s) - max(ev.start_s, start_s))
        if covered > half:
            return cls
    return SoundClass.OTHER


def window_recording(
    rec: Recording, labels: Sequence[LabeledEvent] | None = None
) -> list[AnalysisWindow]:
    """Cut a recording into consecutive non-overlapping 10 s windows.

    The trailing partial segment is discarded. With ``labels`` given (possibly
    empty), every window gets a concrete class via the majority-coverage rule;
    with ``labels=None`` the windows are emitted unlabelled, as for inference.
    """
    if labels is not None:
        for ev in labels:
            if ev.patient_id != rec.patient_id:
                raise ValidationError(
                    f"label for patient {ev.patient_id!r} attached to "
                    f"recording {rec.patient_id!r}"
                )
        _check_no_overlap(labels)

    n_windows = rec.samples.size // WINDOW_SAMPLES
    windows = []
    for i in range(n_windows):
        start_s = i * WINDOW_SECONDS
        label = None
        if labels is not None:
            label = _majority_label(labels, start_s, start_s + WINDOW_SECONDS)
        windows.append(
            AnalysisWindow(
                patient_id=rec.patient_id,
                index=i,
                start_s=start_s,
                samples=rec.samples[i * WINDOW_SAMPLES : (i + 1) * WINDOW_SAMPLES],
                label=label,
            )
        )
    return windows


def read_label_csv(path: str | Path) -> list[LabeledEvent]:
    """Read a label CSV (header patient_id,start_s,end_s,label; '#' comments)."""
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        header = next(rows, None)
        if header is None or [h.strip() for h in header] != LABEL_CSV_HEADER:
            raise ValidationError(
                f"label file {path} must start with header "
                f"{','.join(LABEL_CSV_HEADER)}"
            )
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValidationError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            patient_id, start_s, end_s, label = (c.strip() for c in row)
            try:
                cls = SoundClass(label)
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: unknown label {label!r} "
                    f"(expected one of {[c.value for c in SoundClass]})"
                ) from None
            events.append(
                LabeledEvent(
                    patient_id=patient_id,
                    start_s=float(start_s),
                    end_s=float(end_s),
                    label=cls,
                )
            )
    return events


def write_label_csv(
    path: str | Path,
    events: Iterable[LabeledEvent],
    comments: Sequence[str] = (),
) -> None:
    """Write events as a label CSV, with optional leading '#' comment lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for comment in comments:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(LABEL_CSV_HEADER)
        for ev in events:
            writer.writerow([ev.patient_id, repr(ev.start_s), repr(ev.end_s), ev.label.value])


def write_wav(path: str | Path, rec: Recording) -> None:
    """Write a recording as 16-bit PCM WAV at 16 kHz.

    Scaling matches the reader (divide by 2^15), so a write/read round trip
    is transparent up to half a quantization step.
    """
    pcm = np.clip(np.round(rec.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, rec.sample_rate_hz, pcm)
