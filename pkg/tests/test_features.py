import numpy as np
import pytest
from scipy.signal import lfilter, sawtooth

from snorelab.audio_io import WINDOW_SAMPLES, SoundClass
from snorelab.errors import InsufficientDataError, ValidationError
from snorelab.features import (
    FEATURE_NAMES,
    N_FEATURES,
    FeatureConfig,
    FeatureVector,
    build_subframe_grid,
    chroma,
    config_digest,
    delta_mfcc,
    extract_features,
    extract_frame_features,
    get_diagnostics,
    mfcc,
    pitch_and_formants,
    read_features_csv,
    reset_diagnostics,
    spectral_shape,
    subframe_count,
    time_features,
    write_features_csv,
)

from conftest import FS, make_window, sine_window
from oracles import reference_chroma_frame, reference_delta, reference_mfcc

CONFIG = FeatureConfig()


# ---------------------------------------------------------------------------
# vector contract
# ---------------------------------------------------------------------------

def test_index_map_is_stable():
    assert len(FEATURE_NAMES) == N_FEATURES == 50
    assert FEATURE_NAMES[0] == "energy"
    assert FEATURE_NAMES[3] == "formant_f1"
    assert FEATURE_NAMES[6] == "mfcc_c1"
    assert FEATURE_NAMES[18] == "mfcc_c13"
    assert FEATURE_NAMES[19] == "delta_mfcc_c1"
    assert FEATURE_NAMES[32] == "chroma_c"
    assert FEATURE_NAMES[41] == "chroma_a"
    assert FEATURE_NAMES[44] == "spectral_entropy"
    assert FEATURE_NAMES[48] == "f0"
    assert FEATURE_NAMES[49] == "harmonic_freq"


def test_vector_always_length_50(rng):
    fv = extract_features(make_window(rng.uniform(-0.5, 0.5, WINDOW_SAMPLES)))
    assert fv.values.shape == (50,)
    assert np.all(np.isfinite(fv.values))


def test_non_finite_window_rejected():
    samples = np.zeros(WINDOW_SAMPLES)
    samples[5] = np.nan
    win = make_window(np.nan_to_num(samples))
    object.__setattr__(win, "samples", samples)  # bypass the constructor guard
    with pytest.raises(ValidationError):
        extract_features(win)


def test_subframe_grid_geometry():
    assert subframe_count(WINDOW_SAMPLES) == 998
    grid = build_subframe_grid(sine_window(100.0))
    assert grid.frames.shape == (998, 400)
    assert grid.raw_frames.shape == (998, 400)
    assert grid.offsets[-1] + 400 <= WINDOW_SAMPLES


# ---------------------------------------------------------------------------
# time features
# ---------------------------------------------------------------------------

def test_constant_signal_energy_and_zcr():
    energy, _, zcr = time_features(make_window(np.full(WINDOW_SAMPLES, 0.5)))
    assert energy == pytest.approx(0.25)
    assert zcr == 0.0


def test_alternating_signal_zcr_is_one():
    samples = np.tile([1.0, -1.0], WINDOW_SAMPLES // 2)
    _, _, zcr = time_features(make_window(samples))
    assert zcr == 1.0


def test_energy_entropy_extremes(rng):
    concentrated = np.zeros(WINDOW_SAMPLES)
    block = WINDOW_SAMPLES // 10
    concentrated[3 * block : 4 * block] = rng.uniform(0.2, 0.8, block)
    _, entropy, _ = time_features(make_window(concentrated))
    assert entropy == pytest.approx(0.0, abs=1e-12)

    _, entropy, _ = time_features(make_window(np.full(WINDOW_SAMPLES, 0.5)))
    assert entropy == pytest.approx(np.log(10.0), abs=1e-12)


def test_unit_sine_energy_is_half():
    fv = extract_features(sine_window(440.0))
    assert fv.values[0] == pytest.approx(0.5, abs=1e-3)


# ---------------------------------------------------------------------------
# MFCC
# ---------------------------------------------------------------------------

def test_impulse_frame_mfcc_vanishes():
    """Flat power spectrum -> equal (unit-sum) mel energies -> c1..c13 ~ 0."""
    frame = np.zeros(400)
    frame[200] = 1.0
    coeffs = mfcc(frame[None, :], CONFIG)
    assert np.abs(coeffs).max() < 1e-6


def test_silence_mfcc_is_zero():
    # all mel energies at the log floor; the DCT leaves ~1e-15 float residue
    coeffs = mfcc(np.zeros((4, 400)), CONFIG)
    assert np.abs(coeffs).max() < 1e-12


def test_sine_subframe_matches_reference_oracle():
    grid = build_subframe_grid(sine_window(1000.0), CONFIG)
    got = mfcc(grid, CONFIG)[40]
    want = reference_mfcc(grid.frames[40])[0]
    assert np.abs(got - want).max() < 1e-6


def test_random_window_mfcc_matches_reference_oracle(rng):
    grid = build_subframe_grid(make_window(rng.uniform(-1, 1, WINDOW_SAMPLES)), CONFIG)
    got = mfcc(grid, CONFIG)
    want = reference_mfcc(grid.frames)
    assert np.abs(got - want).max() < 1e-6


# ---------------------------------------------------------------------------
# delta-MFCC
# ---------------------------------------------------------------------------

def test_delta_of_constant_is_zero():
    assert np.abs(delta_mfcc(np.ones((20, 13)))).max() == 0.0


def test_delta_of_linear_ramp_is_one_inside():
    ramp = np.arange(30, dtype=float)[:, None] * np.ones((1, 13))
    deltas = delta_mfcc(ramp)
    np.testing.assert_allclose(deltas[2:-2], 1.0)


def test_delta_matches_brute_force(rng):
    coeffs = rng.standard_normal((50, 13))
    np.testing.assert_allclose(delta_mfcc(coeffs), reference_delta(coeffs), atol=1e-12)


def test_delta_needs_five_frames():
    with pytest.raises(InsufficientDataError):
        delta_mfcc(np.ones((4, 13)))


# ---------------------------------------------------------------------------
# chroma
# ---------------------------------------------------------------------------

def test_chroma_440_concentrates_on_a():
    grid = build_subframe_grid(sine_window(440.0), CONFIG)
    shares = chroma(grid, CONFIG)
    assert shares[0].argmax() == 9  # A
    assert shares[:, 9].min() >= 0.9
    # bin-mapping oracle agreement on one frame
    want = reference_chroma_frame(grid.raw_frames[17])
    np.testing.assert_allclose(shares[17], want, atol=1e-9)


def test_chroma_octave_equivalence():
    grid = build_subframe_grid(sine_window(880.0), CONFIG)
    shares = chroma(grid, CONFIG)
    assert shares[0].argmax() == 9  # still A


def test_chroma_of_silence_is_zero():
    shares = chroma(np.zeros((3, 400)), CONFIG)
    assert np.abs(shares).max() == 0.0


# ---------------------------------------------------------------------------
# spectral shape
# ---------------------------------------------------------------------------

def test_single_bin_spectrum_shape():
    """1 kHz sine sits in exactly one native-resolution bin."""
    grid = build_subframe_grid(sine_window(1000.0), CONFIG)
    shape = spectral_shape(grid, CONFIG)
    entropy, flux, centroid, rolloff = shape[10]
    assert entropy == pytest.approx(0.0, abs=1e-12)
    assert centroid == pytest.approx(1000.0, abs=1e-6)
    assert rolloff == pytest.approx(1000.0)
    assert flux == pytest.approx(0.0, abs=1e-9)  # identical consecutive frames


def test_flat_spectrum_entropy_is_one():
    frame = np.zeros(400)
    frame[0] = 1.0  # impulse: |DFT| is exactly flat
    shape = spectral_shape(frame[None, :], CONFIG)
    assert shape[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_identical_frames_have_zero_flux(rng):
    frame = rng.uniform(-1, 1, 400)
    shape = spectral_shape(np.vstack([frame, frame]), CONFIG)
    assert shape[1, 1] == 0.0


def test_rolloff_of_white_noise_below_nyquist(rng):
    shape = spectral_shape(rng.standard_normal((8, 400)), CONFIG)
    assert np.all(shape[:, 3] <= 8000.0)
    assert np.all(shape[:, 3] >= 4000.0)  # flat-ish spectrum: 85% point sits high


# ---------------------------------------------------------------------------
# pitch, harmonics, formants
# ---------------------------------------------------------------------------

def test_sine_window_f0():
    fv = extract_features(sine_window(440.0))
    assert abs(fv.values[48] - 440.0) <= 2.0
    assert fv.values[32 + 9] == max(fv.values[32:44])  # chroma argmax A


def test_sawtooth_train_f0():
    t = np.arange(WINDOW_SAMPLES) / FS
    win = make_window(0.5 * sawtooth(2 * np.pi * 120.0 * t))
    fv = extract_features(win)
    assert abs(fv.values[48] - 120.0) <= 3.0


def test_white_noise_is_unvoiced():
    voiced = total = 0
    for seed in range(3):
        rng = np.random.default_rng(seed)
        grid = build_subframe_grid(make_window(np.clip(0.3 * rng.standard_normal(WINDOW_SAMPLES), -1, 1)))
        f0 = pitch_and_formants(grid, CONFIG)[:, 0]
        voiced += int(np.count_nonzero(f0 > 0))
        total += f0.size
    assert voiced / total <= 0.05


def test_harmonic_frequency_of_harmonic_train():
    """Strongest harmonic of a 100 Hz train with a boosted 3rd harmonic."""
    t = np.arange(WINDOW_SAMPLES) / FS
    x = 0.2 * np.sin(2 * np.pi * 100 * t) + 0.5 * np.sin(2 * np.pi * 300 * t)
    fv = extract_features(make_window(x))
    assert abs(fv.values[48] - 100.0) <= 3.0
    assert abs(fv.values[49] - 300.0) <= 40.0  # within one native bin


def test_formant_recovery_from_synthetic_vowel():
    """Two resonators at 700/1200 Hz recovered within +-75 Hz."""

    def resonator(freq, bw):
        r = np.exp(-np.pi * bw / FS)
        return [1.0], [1.0, -2.0 * r * np.cos(2 * np.pi * freq / FS), r * r]

    x = np.zeros(WINDOW_SAMPLES)
    x[:: FS // 100] = 1.0  # 100 Hz pulse train
    for freq, bw in [(700.0, 90.0), (1200.0, 110.0)]:
        b, a = resonator(freq, bw)
        x = lfilter(b, a, x)
    x = 0.6 * x / np.abs(x).max()
    fv = extract_features(make_window(x))
    assert abs(fv.values[3] - 700.0) <= 75.0
    assert abs(fv.values[4] - 1200.0) <= 75.0


def test_zero_window_features():
    fv = extract_features(make_window(np.zeros(WINDOW_SAMPLES)))
    assert fv.values[0] == 0.0  # energy
    assert fv.values[2] == 0.0  # zcr
    assert np.abs(fv.values[32:44]).max() == 0.0  # chroma
    assert fv.values[48] == 0.0  # f0
    assert fv.values[49] == 0.0  # harmonic
    assert np.abs(fv.values[3:6]).max() == 0.0  # formants
    assert np.all(np.isfinite(fv.values))


def test_levinson_failure_counts_diagnostics():
    reset_diagnostics()
    grid = build_subframe_grid(make_window(np.zeros(WINDOW_SAMPLES)))
    pitch_and_formants(grid, CONFIG)
    assert get_diagnostics()["levinson_failures"] == grid.n_frames
    reset_diagnostics()


# ---------------------------------------------------------------------------
# amplitude-scaling covariance
# ---------------------------------------------------------------------------

_SCALE_INVARIANT = [2] + list(range(32, 44)) + [44, 46, 47, 48, 3, 4, 5]


def _vowel_plus_tone_window():
    t = np.arange(WINDOW_SAMPLES) / FS
    x = np.zeros(WINDOW_SAMPLES)
    x[:: FS // 110] = 1.0
    for freq, bw in [(650.0, 100.0), (1400.0, 120.0)]:
        r = np.exp(-np.pi * bw / FS)
        x = lfilter([1.0], [1.0, -2 * r * np.cos(2 * np.pi * freq / FS), r * r], x)
    x = 0.4 * x / np.abs(x).max() + 0.05 * np.sin(2 * np.pi * 1000 * t)
    return make_window(x)


def test_power_of_two_scaling_is_exact(rng):
    win = make_window(rng.uniform(-0.25, 0.25, WINDOW_SAMPLES))
    base = extract_features(win).values
    for g in (0.5, 2.0):
        scaled = extract_features(make_window(g * win.samples)).values
        assert scaled[0] == pytest.approx(g * g * base[0], rel=1e-12)
        np.testing.assert_array_equal(scaled[_SCALE_INVARIANT], base[_SCALE_INVARIANT])


def test_general_scaling_covariance():
    win = _vowel_plus_tone_window()
    base = extract_features(win).values
    for g in (0.7, 1.9):
        scaled = extract_features(make_window(np.clip(g * win.samples, -1, 1))).values
        assert scaled[0] == pytest.approx(g * g * base[0], rel=1e-9)
        np.testing.assert_allclose(
            scaled[_SCALE_INVARIANT], base[_SCALE_INVARIANT], atol=1e-9
        )


# ---------------------------------------------------------------------------
# aggregation consistency
# ---------------------------------------------------------------------------

def test_window_values_are_means_of_frame_intermediates(rng):
    win = make_window(rng.uniform(-0.5, 0.5, WINDOW_SAMPLES))
    fv = extract_features(win)
    frames = extract_frame_features(win)

    np.testing.assert_array_equal(fv.values[6:19], frames["mfcc"].mean(axis=0))
    np.testing.assert_array_equal(fv.values[19:32], frames["delta_mfcc"].mean(axis=0))
    np.testing.assert_array_equal(fv.values[32:44], frames["chroma"].mean(axis=0))
    np.testing.assert_array_equal(fv.values[44:48], frames["spectral_shape"].mean(axis=0))

    pf = frames["pitch_formants"]
    for out_index, col in [(48, 0), (49, 1), (3, 2), (4, 3), (5, 4)]:
        detected = pf[:, col] > 0
        want = pf[detected, col].mean() if detected.any() else 0.0
        assert fv.values[out_index] == want


# ---------------------------------------------------------------------------
# CSV + sidecar
# ---------------------------------------------------------------------------

def test_feature_csv_round_trip_and_determinism(tmp_path, rng):
    vectors = [
        FeatureVector("p00", 0, SoundClass.OSA_SNORE, rng.standard_normal(50)),
        FeatureVector("p00", 1, None, rng.standard_normal(50)),
        FeatureVector("p01", 0, SoundClass.OTHER, rng.standard_normal(50)),
    ]
    path = tmp_path / "features.csv"
    write_features_csv(path, vectors, CONFIG)
    back = read_features_csv(path)
    assert [v.patient_id for v in back] == ["p00", "p00", "p01"]
    assert back[1].label is None
    for a, b in zip(vectors, back):
        np.testing.assert_array_equal(a.values, b.values)

    first = path.read_bytes()
    write_features_csv(path, vectors, CONFIG)
    assert path.read_bytes() == first

    sidecar = (tmp_path / "features.json").read_text(encoding="utf-8")
    assert config_digest(CONFIG) in sidecar
    assert "harmonic_freq" in sidecar


def test_feature_csv_header_contract(tmp_path):
    write_features_csv(tmp_path / "f.csv", [], CONFIG)
    header = (tmp_path / "f.csv").read_text(encoding="utf-8").splitlines()[0]
    columns = header.split(",")
    assert len(columns) == 53
    assert columns[:3] == ["patient_id", "window_index", "label"]
    assert columns[3] == "f0" and columns[-1] == "f49"
