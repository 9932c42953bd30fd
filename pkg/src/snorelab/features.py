"""The fixed 50-dimensional acoustic feature vector over 10 s windows.

Canonical index map (stable; serialized with every feature artifact):

    0      energy (mean squared amplitude)
    1      energy entropy over 10 equal sub-blocks (natural log)
    2      zero-crossing rate
    3-5    formant frequencies F1-F3 in Hz (0 when absent)
    6-18   MFCC c1..c13
    19-31  delta-MFCC c1..c13
    32-43  chroma, pitch classes C..B
    44     spectral entropy, normalized to [0, 1]
    45     spectral flux
    46     spectral centroid in Hz
    47     spectral roll-off in Hz
    48     fundamental frequency in Hz (0 when unvoiced)
    49     strongest-harmonic frequency in Hz (0 when unvoiced)

Short-time quantities are computed on a 25 ms / 10 ms sub-frame grid and
averaged to window level. MFCCs and LPC formants use Hann-windowed sub-frames
with a 512-point FFT; chroma and the spectral-shape features use raw
(unwindowed) sub-frames at the native 400-point resolution, which keeps a
pure tone confined to a single bin instead of smearing it across pitch
classes. Pitch uses a normalized cross-correlation whose second leg may
extend past the sub-frame into the surrounding window, so low fundamentals
down to 40 Hz are measured with full overlap.

F0, harmonic frequency, and formants are averaged over the sub-frames where
they were actually detected (all-zero when never detected); every other
quantity is a plain mean over all sub-frames.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.fft import dct
from scipy.signal import get_window

from .audio_io import WINDOW_SAMPLES, AnalysisWindow, SoundClass
from .errors import InsufficientDataError, ValidationError

N_FEATURES = 50

_PITCH_CLASSES = ("c", "c_sharp", "d", "d_sharp", "e", "f",
                  "f_sharp", "g", "g_sharp", "a", "a_sharp", "b")

FEATURE_NAMES: tuple[str, ...] = (
    ("energy", "energy_entropy", "zcr", "formant_f1", "formant_f2", "formant_f3")
    + tuple(f"mfcc_c{i}" for i in range(1, 14))
    + tuple(f"delta_mfcc_c{i}" for i in range(1, 14))
    + tuple(f"chroma_{p}" for p in _PITCH_CLASSES)
    + ("spectral_entropy", "spectral_flux", "spectral_centroid", "spectral_rolloff",
       "f0", "harmonic_freq")
)
assert len(FEATURE_NAMES) == N_FEATURES

FEATURE_CSV_METADATA = ["patient_id", "window_index", "label"]

# a pitch candidate must reach this fraction of the global correlation peak;
# the smallest such lag wins, which suppresses octave-down errors
_PEAK_CANDIDATE_RATIO = 0.85


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate_hz: int = 16_000
    subframe_len: int = 400  # 25 ms
    subframe_hop: int = 160  # 10 ms
    fft_size: int = 512  # MFCC / LPC spectrum
    n_mels: int = 26
    mel_fmin_hz: float = 0.0
    mel_fmax_hz: float = 8000.0
    n_mfcc: int = 13
    delta_halfwidth: int = 2
    n_energy_blocks: int = 10
    chroma_fmin_hz: float = 32.7
    rolloff_fraction: float = 0.85
    f0_min_hz: float = 40.0
    f0_max_hz: float = 500.0
    voicing_threshold: float = 0.3
    n_harmonics: int = 8
    lpc_order: int = 12
    formant_max_bandwidth_hz: float = 400.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.subframe_hop <= 0 or self.subframe_len <= 0:
            raise ValidationError("sub-frame length and hop must be positive")
        if self.fft_size < self.subframe_len:
            raise ValidationError("fft_size must cover a full sub-frame")
        if not 0 < self.rolloff_fraction <= 1:
            raise ValidationError("rolloff_fraction must be in (0, 1]")
        if self.f0_min_hz <= 0 or self.f0_max_hz <= self.f0_min_hz:
            raise ValidationError("need 0 < f0_min_hz < f0_max_hz")
        if self.sample_rate_hz / self.f0_min_hz > WINDOW_SAMPLES:
            raise ValidationError("f0_min_hz period exceeds the analysis window")


def config_digest(config: FeatureConfig) -> str:
    doc = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class FeatureVector:
    """The 50 features of one analysis window, in canonical order."""

    patient_id: str
    window_index: int
    label: SoundClass | None
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != (N_FEATURES,):
            raise ValidationError(f"feature vector must have exactly {N_FEATURES} entries")
        if not np.all(np.isfinite(values)):
            raise ValidationError("feature vector contains non-finite values")


@dataclass(frozen=True)
class SubframeGrid:
    """Sub-frames of one analysis window plus their source context.

    ``frames`` are Hann-windowed (consumed by MFCC and LPC); ``raw_frames``
    are the same slices unwindowed (chroma, spectral shape, harmonics);
    ``source``/``offsets`` let the pitch tracker correlate past frame ends.
    """

    frame_len: int
    hop: int
    frames: np.ndarray  # (n_frames, frame_len), windowed
    raw_frames: np.ndarray  # (n_frames, frame_len)
    offsets: np.ndarray  # (n_frames,) start sample of each frame
    source: np.ndarray  # full window samples
    sample_rate_hz: int = 16_000

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def subframe_count(n_samples: int, config: FeatureConfig = FeatureConfig()) -> int:
    return (n_samples - config.subframe_len) // config.subframe_hop + 1


def build_subframe_grid(win: AnalysisWindow, config: FeatureConfig = FeatureConfig()) -> SubframeGrid:
    x = win.samples
    n_frames = subframe_count(x.size, config)
    offsets = np.arange(n_frames) * config.subframe_hop
    raw = np.lib.stride_tricks.sliding_window_view(x, config.subframe_len)[
        :: config.subframe_hop
    ][:n_frames].copy()
    window = get_window("hann", config.subframe_len, fftbins=True)
    return SubframeGrid(
        frame_len=config.subframe_len,
        hop=config.subframe_hop,
        frames=raw * window,
        raw_frames=raw,
        offsets=offsets,
        source=x,
        sample_rate_hz=config.sample_rate_hz,
    )


# ---------------------------------------------------------------------------
# time-domain features
# ---------------------------------------------------------------------------

def time_features(win: AnalysisWindow, n_blocks: int = 10) -> tuple[float, float, float]:
    """(energy, energy entropy, zero-crossing rate) of the whole window."""
    x = win.samples
    energy = float(np.mean(x * x))
    block_energy = np.array([float(np.sum(b * b)) for b in np.array_split(x, n_blocks)])
    total = block_energy.sum()
    if total > 0:
        p = block_energy / total
        entropy = float(-np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)))
    else:
        entropy = 0.0
    zcr = float(np.count_nonzero(x[:-1] * x[1:] < 0)) / (x.size - 1)
    return energy, entropy, zcr


# ---------------------------------------------------------------------------
# MFCC
# ---------------------------------------------------------------------------

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Triangular mel filters, each normalized to unit weight sum.

    The normalization makes a flat power spectrum produce identical energies
    in every band, so cepstra of spectrally flat inputs vanish exactly.
    """
    freqs = np.fft.rfftfreq(config.fft_size, 1.0 / config.sample_rate_hz)
    edges = _mel_to_hz(
        np.linspace(
            _hz_to_mel(config.mel_fmin_hz), _hz_to_mel(config.mel_fmax_hz), config.n_mels + 2
        )
    )
    bank = np.zeros((config.n_mels, freqs.size))
    for j in range(config.n_mels):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        weights = np.clip(np.minimum(rising, falling), 0.0, None)
        total = weights.sum()
        if total > 0:
            bank[j] = weights / total
    return bank


def mfcc(grid: SubframeGrid | np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """MFCC c1..c13 per sub-frame (c0 dropped).

    Accepts a grid (its windowed frames are used) or a matrix of frames that
    are taken as already windowed.
    """
    frames = grid.frames if isinstance(grid, SubframeGrid) else np.asarray(grid, dtype=np.float64)
    power = np.abs(np.fft.rfft(frames, config.fft_size, axis=1)) ** 2
    mel_energy = power @ mel_filterbank(config).T
    log_energy = np.log(np.maximum(mel_energy, config.log_floor))
    coeffs = dct(log_energy, type=2, norm="ortho", axis=1)
    return coeffs[:, 1 : config.n_mfcc + 1]


def delta_mfcc(coeffs: np.ndarray, halfwidth: int = 2) -> np.ndarray:
    """Regression delta of per-frame coefficients, boundary frames replicated."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    n = coeffs.shape[0]
    if n < 2 * halfwidth + 1:
        raise InsufficientDataError(
            f"delta regression needs at least {2 * halfwidth + 1} frames, got {n}"
        )
    padded = np.pad(coeffs, ((halfwidth, halfwidth), (0, 0)), mode="edge")
    out = np.zeros_like(coeffs)
    for k in range(1, halfwidth + 1):
        out += k * (padded[halfwidth + k : halfwidth + k + n] - padded[halfwidth - k : halfwidth - k + n])
    return out / (2.0 * sum(k * k for k in range(1, halfwidth + 1)))


# ---------------------------------------------------------------------------
# chroma and spectral shape (raw frames, native-length FFT)
# ---------------------------------------------------------------------------

def _raw_frames(grid: SubframeGrid | np.ndarray) -> np.ndarray:
    if isinstance(grid, SubframeGrid):
        return grid.raw_frames
    return np.asarray(grid, dtype=np.float64)


def chroma(grid: SubframeGrid | np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """12 pitch-class power shares (C..B) per sub-frame; all-zero for silence."""
    raw = _raw_frames(grid)
    power = np.abs(np.fft.rfft(raw, axis=1)) ** 2
    freqs = np.fft.rfftfreq(raw.shape[1], 1.0 / config.sample_rate_hz)
    mask = freqs >= config.chroma_fmin_hz
    classes = (np.round(12.0 * np.log2(freqs[mask] / 440.0)).astype(int) + 69) % 12
    indicator = np.zeros((classes.size, 12))
    indicator[np.arange(classes.size), classes] = 1.0
    out = power[:, mask] @ indicator
    total = out.sum(axis=1, keepdims=True)
    return np.divide(out, total, out=np.zeros_like(out), where=total > 0)


def spectral_shape(
    grid: SubframeGrid | np.ndarray, config: FeatureConfig = FeatureConfig()
) -> np.ndarray:
    """(entropy, flux, centroid, roll-off) per sub-frame.

    Entropy is the Shannon entropy of the normalized power spectrum divided
    by log(#bins); flux is the L2 distance between successive unit-normalized
    magnitude spectra (first frame 0); roll-off is the lowest frequency below
    which ``rolloff_fraction`` of the power lies. Silent frames yield zeros.
    """
    raw = _raw_frames(grid)
    mag = np.abs(np.fft.rfft(raw, axis=1))
    power = mag**2
    freqs = np.fft.rfftfreq(raw.shape[1], 1.0 / config.sample_rate_hz)
    n_frames, n_bins = power.shape
    total = power.sum(axis=1)
    nz = total > 0

    p = np.divide(power, total[:, None], out=np.zeros_like(power), where=nz[:, None])
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    entropy = -plogp.sum(axis=1) / np.log(n_bins)

    norms = np.linalg.norm(mag, axis=1)
    unit = np.divide(mag, norms[:, None], out=np.zeros_like(mag), where=norms[:, None] > 0)
    flux = np.zeros(n_frames)
    if n_frames > 1:
        flux[1:] = np.linalg.norm(np.diff(unit, axis=0), axis=1)

    centroid = np.divide(power @ freqs, total, out=np.zeros(n_frames), where=nz)

    cumulative = np.cumsum(power, axis=1)
    reached = cumulative >= (config.rolloff_fraction * total)[:, None]
    rolloff = np.where(nz, freqs[np.argmax(reached, axis=1)], 0.0)

    return np.column_stack([entropy, flux, centroid, rolloff])


# ---------------------------------------------------------------------------
# pitch, harmonics, formants
# ---------------------------------------------------------------------------

_diagnostics = {"levinson_failures": 0}


def get_diagnostics() -> dict:
    return dict(_diagnostics)


def reset_diagnostics() -> None:
    _diagnostics["levinson_failures"] = 0


def _nccf(grid: SubframeGrid, lag_lo: int, lag_hi: int) -> np.ndarray:
    """Normalized cross-correlation r[frame, lag] for lags lag_lo..lag_hi.

    Both legs span a full frame length; the delayed leg reads past the frame
    into the window (zero-padded at the very end), so the estimate does not
    degrade at long lags.
    """
    frame_len = grid.frame_len
    x = np.concatenate([grid.source, np.zeros(frame_len + lag_hi)])
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    offsets = grid.offsets

    e0 = csum[offsets + frame_len] - csum[offsets]
    lags = np.arange(lag_lo, lag_hi + 1)
    starts = offsets[:, None] + lags[None, :]
    e_lag = csum[starts + frame_len] - csum[starts]

    nfft = 1 << int(np.ceil(np.log2(frame_len + lag_hi + 1)))
    seg_a = np.lib.stride_tricks.sliding_window_view(x, frame_len)[offsets]
    seg_b = np.lib.stride_tricks.sliding_window_view(x, frame_len + lag_hi)[offsets]
    spectrum = np.conj(np.fft.rfft(seg_a, nfft)) * np.fft.rfft(seg_b, nfft)
    corr = np.fft.irfft(spectrum, nfft)[:, lag_lo : lag_hi + 1]

    denom = np.sqrt(e0[:, None] * e_lag)
    r = np.divide(corr, denom, out=np.zeros_like(corr), where=denom > 0)
    return np.clip(r, -1.0, 1.0)


def _track_f0(grid: SubframeGrid, config: FeatureConfig) -> np.ndarray:
    """Per-frame F0 in Hz, 0 for unvoiced frames."""
    fs = config.sample_rate_hz
    lag_lo = max(2, int(np.floor(fs / config.f0_max_hz)))
    lag_hi = int(np.ceil(fs / config.f0_min_hz))
    r = _nccf(grid, lag_lo - 1, lag_hi + 1)  # one guard lag on each side
    search = r[:, 1:-1]  # columns for lags lag_lo..lag_hi
    n_frames, n_lags = search.shape

    peak = search.max(axis=1)
    voiced = peak >= config.voicing_threshold

    local_max = (search >= r[:, :-2]) & (search >= r[:, 2:])
    candidates = local_max & (search >= _PEAK_CANDIDATE_RATIO * peak[:, None])
    has_candidate = candidates.any(axis=1)
    first_candidate = candidates.argmax(axis=1)
    best = np.where(has_candidate, first_candidate, search.argmax(axis=1))

    # parabolic refinement around the chosen integer lag
    rows = np.arange(n_frames)
    y0 = r[rows, best]  # lag best - 1 (guard column offset)
    y1 = r[rows, best + 1]
    y2 = r[rows, best + 2]
    denom = y0 - 2.0 * y1 + y2
    delta = np.where(np.abs(denom) > 1e-12, 0.5 * (y0 - y2) / np.where(denom != 0, denom, 1.0), 0.0)
    delta = np.clip(delta, -0.5, 0.5)

    f0 = fs / (best + lag_lo + delta)
    f0 = np.clip(f0, config.f0_min_hz, config.f0_max_hz)
    return np.where(voiced, f0, 0.0)


def _harmonic_frequency(raw_power: np.ndarray, bin_hz: float, f0: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Frequency of the strongest spectral peak among harmonics 2..n of F0."""
    n_frames, n_bins = raw_power.shape
    rows = np.arange(n_frames)
    voiced = f0 > 0
    best_mag = np.full(n_frames, -1.0)
    best_bin = np.zeros(n_frames, dtype=int)
    nyquist = bin_hz * (n_bins - 1)
    for k in range(2, config.n_harmonics + 1):
        target = k * f0
        valid = voiced & (target <= nyquist)
        center = np.clip(np.round(np.divide(target, bin_hz)).astype(int), 0, n_bins - 1)
        for off in (-1, 0, 1):  # +-1 bin tolerance
            bins = np.clip(center + off, 0, n_bins - 1)
            mag = raw_power[rows, bins]
            better = valid & (mag > best_mag)
            best_mag[better] = mag[better]
            best_bin[better] = bins[better]
    return np.where(voiced & (best_mag >= 0), best_bin * bin_hz, 0.0)


def _levinson_batch(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Levinson-Durbin over a batch of autocorrelation rows.

    Returns (a, ok); rows where the prediction error stops being positive are
    flagged not-ok (non-positive-definite input).
    """
    n_frames, n = r.shape
    order = n - 1
    a = np.zeros((n_frames, order + 1))
    a[:, 0] = 1.0
    e = r[:, 0].copy()
    ok = e > 0
    for i in range(1, order + 1):
        if i == 1:
            acc = r[:, 1].copy()
        else:
            acc = r[:, i] + np.einsum("fj,fj->f", a[:, 1:i], r[:, i - 1 : 0 : -1])
        k = np.where(ok, -acc / np.where(ok, e, 1.0), 0.0)
        if i > 1:
            previous = a[:, 1:i].copy()
            a[:, 1:i] += k[:, None] * previous[:, ::-1]
        a[:, i] = k
        e = e * (1.0 - k * k)
        ok &= e > 0
    return a, ok


def _lpc_formants(grid: SubframeGrid, config: FeatureConfig) -> tuple[np.ndarray, int]:
    """First three formants per frame via LPC root finding; failures yield 0."""
    fs = config.sample_rate_hz
    order = config.lpc_order
    power = np.abs(np.fft.rfft(grid.frames, config.fft_size, axis=1)) ** 2
    # fft_size >= 2*frame_len - 1 is not required: the frame is zero-padded,
    # so circular wrap only touches lags beyond frame_len which are zero
    autocorr = np.fft.irfft(power, config.fft_size)[:, : order + 1]
    a, ok = _levinson_batch(autocorr)

    formants = np.zeros((grid.n_frames, 3))
    n_ok = int(ok.sum())
    if n_ok:
        coeffs = a[ok]
        companion = np.zeros((n_ok, order, order))
        companion[:, 0, :] = -coeffs[:, 1:]
        idx = np.arange(order - 1)
        companion[:, idx + 1, idx] = 1.0
        roots = np.linalg.eigvals(companion)
        with np.errstate(divide="ignore", invalid="ignore"):
            freq = np.angle(roots) * fs / (2.0 * np.pi)
            bandwidth = -fs / np.pi * np.log(np.abs(roots))
        keep = (
            (roots.imag > 1e-8)
            & (bandwidth > 0)
            & (bandwidth < config.formant_max_bandwidth_hz)
            & (freq > 50.0)
            & (freq < fs / 2.0 - 50.0)
        )
        freq = np.where(keep, freq, np.inf)
        freq.sort(axis=1)
        found = freq[:, :3]
        found[~np.isfinite(found)] = 0.0
        formants[ok] = found
    return formants, int((~ok).sum())


def pitch_and_formants(
    grid: SubframeGrid, config: FeatureConfig = FeatureConfig()
) -> np.ndarray:
    """Per-frame (f0, harmonic_freq, f1, f2, f3); zeros where undetected."""
    f0 = _track_f0(grid, config)
    raw_power = np.abs(np.fft.rfft(grid.raw_frames, axis=1)) ** 2
    bin_hz = config.sample_rate_hz / grid.frame_len
    harmonic = _harmonic_frequency(raw_power, bin_hz, f0, config)
    formants, failures = _lpc_formants(grid, config)
    if failures:
        _diagnostics["levinson_failures"] += failures
    return np.column_stack([f0, harmonic, formants])


# ---------------------------------------------------------------------------
# window-level extraction
# ---------------------------------------------------------------------------

def extract_frame_features(
    win: AnalysisWindow, config: FeatureConfig = FeatureConfig()
) -> dict[str, np.ndarray]:
    """All per-sub-frame intermediates for one window."""
    if not np.all(np.isfinite(win.samples)):
        raise ValidationError("window contains non-finite samples")
    grid = build_subframe_grid(win, config)
    coeffs = mfcc(grid, config)
    return {
        "mfcc": coeffs,
        "delta_mfcc": delta_mfcc(coeffs, config.delta_halfwidth),
        "chroma": chroma(grid, config),
        "spectral_shape": spectral_shape(grid, config),
        "pitch_formants": pitch_and_formants(grid, config),
    }


def _detected_mean(values: np.ndarray) -> float:
    detected = values > 0
    return float(values[detected].mean()) if detected.any() else 0.0


def aggregate_frame_features(
    frames: dict[str, np.ndarray], time_feats: tuple[float, float, float]
) -> np.ndarray:
    """Window-level 50-vector from per-frame intermediates."""
    pf = frames["pitch_formants"]
    vec = np.empty(N_FEATURES)
    vec[0:3] = time_feats
    vec[3] = _detected_mean(pf[:, 2])
    vec[4] = _detected_mean(pf[:, 3])
    vec[5] = _detected_mean(pf[:, 4])
    vec[6:19] = frames["mfcc"].mean(axis=0)
    vec[19:32] = frames["delta_mfcc"].mean(axis=0)
    vec[32:44] = frames["chroma"].mean(axis=0)
    vec[44:48] = frames["spectral_shape"].mean(axis=0)
    vec[48] = _detected_mean(pf[:, 0])
    vec[49] = _detected_mean(pf[:, 1])
    return vec


def extract_features(
    win: AnalysisWindow, config: FeatureConfig = FeatureConfig()
) -> FeatureVector:
    """The full 50-dimensional feature vector for a 10 s window."""
    frames = extract_frame_features(win, config)
    values = aggregate_frame_features(frames, time_features(win, config.n_energy_blocks))
    return FeatureVector(
        patient_id=win.patient_id,
        window_index=win.index,
        label=win.label,
        values=values,
    )


# ---------------------------------------------------------------------------
# feature CSV + sidecar
# ---------------------------------------------------------------------------

def feature_csv_header() -> list[str]:
    return FEATURE_CSV_METADATA + [f"f{i}" for i in range(N_FEATURES)]


def write_features_csv(
    path: str | Path,
    vectors: Iterable[FeatureVector],
    config: FeatureConfig = FeatureConfig(),
    sidecar_path: str | Path | None = None,
) -> None:
    """Write feature rows plus a JSON sidecar with the config and index map."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(feature_csv_header())
        for vec in vectors:
            label = vec.label.value if vec.label is not None else ""
            writer.writerow(
                [vec.patient_id, vec.window_index, label] + [repr(float(v)) for v in vec.values]
            )
    sidecar = Path(sidecar_path) if sidecar_path is not None else path.with_suffix(".json")
    doc = {
        "feature_config": asdict(config),
        "config_digest": config_digest(config),
        "feature_names": list(FEATURE_NAMES),
    }
    sidecar.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_features_csv(path: str | Path) -> list[FeatureVector]:
    vectors = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        header = next(rows, None)
        if header is None or header != feature_csv_header():
            raise ValidationError(f"{path} does not carry the canonical feature header")
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(FEATURE_CSV_METADATA) + N_FEATURES:
                raise ValidationError(f"{path}:{lineno}: wrong column count")
            label = SoundClass(row[2]) if row[2] else None
            vectors.append(
                FeatureVector(
                    patient_id=row[0],
                    window_index=int(row[1]),
                    label=label,
                    values=np.array([float(v) for v in row[3:]]),
                )
            )
    return vectors


def read_feature_sidecar(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
