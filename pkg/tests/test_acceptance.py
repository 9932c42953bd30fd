"""Acceptance suite: every criterion prints one PASS line when it holds.

Run with ``pytest tests/test_acceptance.py -v -s``. The end-to-end corpus
(10 patients, 30 windows per class per patient) is built once per session
and shared across criteria.
"""

import time

import numpy as np
import pytest

from snorelab import classifier
from snorelab.audio_io import Recording, SoundClass, window_recording
from snorelab.denoise import DenoiseConfig, estimate_noise, snr_db, spectral_subtract
from snorelab.errors import LeakageError
from snorelab.evaluation import (
    ExperimentKind,
    ExperimentSpec,
    SelectionMode,
    inner_feature_selection,
    outer_loop,
)
from snorelab.features import (
    FeatureConfig,
    build_subframe_grid,
    extract_features,
    mfcc,
    spectral_shape,
    time_features,
    write_features_csv,
)
from snorelab.synth import SynthSpec, generate_corpus, write_corpus

from conftest import FS, make_feature_corpus, make_window, sine_window
from oracles import gaussian_bayes_predict, reference_mfcc
from test_evaluation import _planted_table

CORPUS_SEED = 2025
EVAL_SEED = 11
WINDOW_SAMPLES = FS * 10


@pytest.fixture(scope="module")
def corpus_vectors():
    recordings, labels = generate_corpus(SynthSpec(seed=CORPUS_SEED))
    vectors = []
    for rec in recordings:
        events = [e for e in labels if e.patient_id == rec.patient_id]
        vectors.extend(extract_features(w) for w in window_recording(rec, events))
    return vectors


@pytest.fixture(scope="module")
def reports(corpus_vectors):
    out = {}
    for kind in ExperimentKind:
        out[kind] = outer_loop(corpus_vectors, ExperimentSpec(kind=kind, seed=EVAL_SEED))
    return out


# ---------------------------------------------------------------------------
# 1. feature-oracle equivalence
# ---------------------------------------------------------------------------

def test_criterion_1_mfcc_matches_brute_force_oracle():
    start = time.time()
    config = FeatureConfig()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng([97, seed])
        win = make_window(rng.uniform(-1.0, 1.0, WINDOW_SAMPLES))
        grid = build_subframe_grid(win, config)
        got = mfcc(grid, config)
        want = reference_mfcc(grid.frames)
        worst = max(worst, float(np.abs(got - want).max()))
        worst = max(worst, float(np.abs(got.mean(0) - want.mean(0)).max()))
    elapsed = time.time() - start
    assert worst < 1e-6
    assert elapsed < 60.0
    print(f"\nACCEPTANCE 1 PASS: mfcc oracle, 100 windows, max dev {worst:.2e}, {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 2. analytic feature checks
# ---------------------------------------------------------------------------

def test_criterion_2_trivial_examples():
    start = time.time()
    config = FeatureConfig()

    zero = extract_features(make_window(np.zeros(WINDOW_SAMPLES)))
    assert zero.values[0] == 0.0 and zero.values[2] == 0.0
    assert np.abs(zero.values[32:44]).max() == 0.0 and zero.values[48] == 0.0

    _, _, zcr = time_features(make_window(np.tile([1.0, -1.0], WINDOW_SAMPLES // 2)))
    assert zcr == 1.0

    impulse = np.zeros(400)
    impulse[200] = 1.0
    assert np.abs(mfcc(impulse[None, :], config)).max() < 1e-6

    shape = spectral_shape(build_subframe_grid(sine_window(1000.0), config), config)
    assert shape[5, 0] == pytest.approx(0.0, abs=1e-12)  # entropy of one bin
    assert shape[5, 2] == pytest.approx(1000.0, abs=1e-6)  # centroid
    assert shape[5, 3] == pytest.approx(1000.0)  # roll-off

    concentrated = np.zeros(WINDOW_SAMPLES)
    concentrated[: WINDOW_SAMPLES // 10] = 0.5
    assert time_features(make_window(concentrated))[1] == pytest.approx(0.0, abs=1e-12)
    uniform = np.full(WINDOW_SAMPLES, 0.5)
    assert time_features(make_window(uniform))[1] == pytest.approx(np.log(10), abs=1e-12)

    elapsed = time.time() - start
    assert elapsed < 10.0
    print(f"\nACCEPTANCE 2 PASS: analytic feature checks, {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 3. LDA correctness
# ---------------------------------------------------------------------------

def test_criterion_3_lda_against_density_oracle():
    rng = np.random.default_rng(331)
    for n_classes in (2, 3):
        X, y = [], []
        for c in range(n_classes):
            mean = np.zeros(8)
            mean[c] = 2.5 * c
            X.append(mean + rng.standard_normal((150, 8)))
            y += [f"c{c}"] * 150
        X, y = np.vstack(X), np.asarray(y, dtype=object)
        model = classifier.fit(X, y)
        probes = rng.standard_normal((1000, 8)) * 3.0
        got, _ = classifier.predict_batch(model, probes)
        want = gaussian_bayes_predict(
            probes, model.classes, model.means, model.pooled_covariance, model.priors
        )
        assert np.array_equal(got, want)  # 100% agreement

    # analytic 1-D boundary
    X1 = np.array([[-1.0], [1.0], [1.0], [3.0], [0.0], [2.0]])
    y1 = np.asarray(["a", "a", "b", "b", "a", "b"], dtype=object)
    model = classifier.fit(X1, y1)
    sigma2 = float(model.pooled_covariance[0, 0])
    mu_a, mu_b = model.means[:, 0]
    x_star = (mu_a + mu_b) / 2 + sigma2 * np.log(model.priors[0] / model.priors[1]) / (mu_b - mu_a)
    _, posterior = classifier.predict(model, np.array([x_star]))
    assert posterior["a"] == pytest.approx(0.5, abs=1e-9)

    # affine invariance over 20 random invertible maps
    X, y = [], []
    for c in range(3):
        mean = np.zeros(6)
        mean[c] = 3.0 * c
        X.append(mean + rng.standard_normal((120, 6)))
        y += [f"c{c}"] * 120
    X, y = np.vstack(X), np.asarray(y, dtype=object)
    probes = rng.standard_normal((300, 6)) * 2.0
    base, _ = classifier.predict_batch(classifier.fit(X, y), probes)
    for _ in range(20):
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        A = q @ np.diag(rng.uniform(0.5, 2.0, 6)) @ q.T
        pred, _ = classifier.predict_batch(classifier.fit(X @ A.T, y), probes @ A.T)
        assert np.array_equal(pred, base)

    print("\nACCEPTANCE 3 PASS: LDA vs density oracle, analytic boundary, 20 affine maps")


# ---------------------------------------------------------------------------
# 4. no-leakage property
# ---------------------------------------------------------------------------

def test_criterion_4_no_leakage(monkeypatch):
    clean_runs = 0
    for seed in range(50):
        vectors = make_feature_corpus(
            n_patients=int(np.random.default_rng(seed).integers(4, 8)),
            windows_per_class=4,
            separation=1.0,
            seed=seed,
        )
        spec = ExperimentSpec(
            kind=ExperimentKind.DIRECT_3CLASS,
            selection=SelectionMode.ALL_FEATURES,
            seed=seed,
        )
        outer_loop(vectors, spec)  # the window-ID check runs on every fold
        clean_runs += 1
    assert clean_runs == 50

    import snorelab.evaluation as ev

    original = ev._split_fold

    def leaky(table, test_patient):
        train_idx, test_idx = original(table, test_patient)
        return np.concatenate([train_idx, test_idx[:1]]), test_idx

    monkeypatch.setattr(ev, "_split_fold", leaky)
    detected = 0
    for seed in range(50):
        vectors = make_feature_corpus(n_patients=4, windows_per_class=3, seed=seed)
        spec = ExperimentSpec(
            kind=ExperimentKind.DIRECT_3CLASS,
            selection=SelectionMode.ALL_FEATURES,
            seed=seed,
        )
        with pytest.raises(LeakageError):
            outer_loop(vectors, spec)
        detected += 1
    assert detected == 50
    print("\nACCEPTANCE 4 PASS: 50 clean runs, injected leak detected 50/50")


# ---------------------------------------------------------------------------
# 5. end-to-end synthetic reproduction
# ---------------------------------------------------------------------------

def test_criterion_5_experiment_ordering(reports):
    s = reports[ExperimentKind.SNORE_VS_OTHER].metrics["accuracy"].value
    q = reports[ExperimentKind.OSA_VS_SIMPLE].metrics["accuracy"].value
    d3 = reports[ExperimentKind.DIRECT_3CLASS].metrics["accuracy"].value
    assert s >= 0.90, f"snore-vs-other accuracy {s:.3f} < 0.90"
    assert q >= 0.80, f"osa-vs-simple accuracy {q:.3f} < 0.80"
    assert d3 >= 0.75, f"direct 3-class accuracy {d3:.3f} < 0.75"
    assert d3 <= s and d3 <= q, f"ordering violated: d3={d3:.3f}, s={s:.3f}, q={q:.3f}"
    print(
        f"\nACCEPTANCE 5 PASS: snore-vs-other {s:.3f} >= 0.90, "
        f"osa-vs-simple {q:.3f} >= 0.80, direct-3class {d3:.3f} >= 0.75, "
        f"3-class <= both two-step accuracies"
    )


# ---------------------------------------------------------------------------
# 6. feature-selection sanity
# ---------------------------------------------------------------------------

def test_criterion_6_forward_selection(reports):
    hits = 0
    for seed in range(20):
        table = _planted_table(np.random.default_rng([5, seed]), planted=31, shift=2.5)
        spec = ExperimentSpec(kind=ExperimentKind.SNORE_VS_OTHER, seed=seed)
        selected = inner_feature_selection(table, spec, np.random.default_rng(seed))
        if selected and selected[0] == 31:
            hits += 1
    assert hits >= 19  # >= 95% of 20 runs

    sizes = [r.mean_selected_features for r in reports.values()]
    assert all(size < 25.0 for size in sizes)  # under 50% of the 50 features
    print(
        f"\nACCEPTANCE 6 PASS: planted feature first in {hits}/20 runs, "
        f"mean selected sizes {[round(s, 1) for s in sizes]} all < 25"
    )


# ---------------------------------------------------------------------------
# 7. denoising
# ---------------------------------------------------------------------------

def test_criterion_7_denoise_gain():
    rng = np.random.default_rng(4242)
    t = np.arange(WINDOW_SAMPLES) / FS
    gains = []
    for seed in range(3):
        local = np.random.default_rng([7, seed])
        gate = (t % 2.0) < 1.0
        clean = 0.3 * np.sin(2 * np.pi * 1000 * t) * gate
        sigma = float(np.sqrt(np.mean(clean**2)))
        noisy = Recording("x", np.clip(clean + sigma * local.standard_normal(t.size), -1, 1))
        out = spectral_subtract(noisy, estimate_noise(noisy))
        gains.append(snr_db(clean, out.samples) - snr_db(clean, noisy.samples))
        assert np.sum(out.samples**2) <= np.sum(noisy.samples**2)
    assert min(gains) >= 5.0
    # energy never increases, also on plain noise at assorted settings
    for alpha in (0.5, 2.0, 4.0):
        rec = Recording("x", np.clip(0.2 * rng.standard_normal(FS * 2), -1, 1))
        config = DenoiseConfig(alpha=alpha)
        out = spectral_subtract(rec, estimate_noise(rec, config), config)
        assert np.sum(out.samples**2) <= np.sum(rec.samples**2)
    print(f"\nACCEPTANCE 7 PASS: SNR gains {[round(g, 1) for g in gains]} dB (>= 5), "
          f"energy never increased")


# ---------------------------------------------------------------------------
# 8. determinism
# ---------------------------------------------------------------------------

def test_criterion_8_byte_determinism(tmp_path):
    spec = SynthSpec(n_patients=3, windows_per_class_per_patient=2, seed=99)
    dir_a = write_corpus(spec, tmp_path / "a")
    dir_b = write_corpus(spec, tmp_path / "b")
    for name in ("p00.wav", "p01.wav", "p02.wav", "labels.csv", "manifest.json"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()

    recordings, labels = generate_corpus(spec)
    vectors = []
    for rec in recordings:
        events = [e for e in labels if e.patient_id == rec.patient_id]
        vectors.extend(extract_features(w) for w in window_recording(rec, events))
    write_features_csv(tmp_path / "f1.csv", vectors)
    write_features_csv(tmp_path / "f2.csv", vectors)
    assert (tmp_path / "f1.csv").read_bytes() == (tmp_path / "f2.csv").read_bytes()

    espec = ExperimentSpec(kind=ExperimentKind.DIRECT_3CLASS, seed=5, ci_resamples=200)
    assert outer_loop(vectors, espec).to_json() == outer_loop(vectors, espec).to_json()

    rec = recordings[0]
    profile = estimate_noise(rec)
    a = spectral_subtract(rec, profile)
    b = spectral_subtract(rec, profile)
    assert np.array_equal(a.samples, b.samples)
    print("\nACCEPTANCE 8 PASS: synth WAVs, feature CSVs, reports, and denoise "
          "outputs byte-identical across reruns")
