"""Command-line front end: synth, denoise, extract, evaluate, classify.

Every command is deterministic given its flags and seed, writes data to files
only, and embeds a digest of the active configuration in its output artifacts
(JSON sidecars or leading ``#`` comment lines). Logs go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import audio_io, classifier, denoise, evaluation, features, synth
from .errors import SnorelabError, ValidationError

logger = logging.getLogger("snorelab")

_EXPERIMENT_FLAGS = {
    "snore-vs-other": evaluation.ExperimentKind.SNORE_VS_OTHER,
    "osa-vs-simple": evaluation.ExperimentKind.OSA_VS_SIMPLE,
    "direct-3class": evaluation.ExperimentKind.DIRECT_3CLASS,
}

_SELECTION_FLAGS = {
    "all": evaluation.SelectionMode.ALL_FEATURES,
    "forward": evaluation.SelectionMode.FORWARD_SELECTION,
}


def _digest(obj) -> str:
    doc = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def _config_section(path: str | None, section: str) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return doc.get(section, {})


def _build(cls, file_overrides: dict, flag_overrides: dict):
    """Dataclass from defaults <- config file <- explicit flags."""
    known = {f.name for f in fields(cls)}
    merged = {}
    for source, values in (("config file", file_overrides), ("flag", flag_overrides)):
        for key, value in values.items():
            if key not in known:
                raise ValidationError(f"unknown {cls.__name__} field {key!r} in {source}")
            if value is not None:
                merged[key] = tuple(value) if isinstance(value, list) else value
    return cls(**merged)


def _require_file(path: str | Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_denoise(args) -> int:
    in_path = _require_file(args.input)
    flag_overrides = {
        "fft_size": args.fft_size,
        "hop": args.hop,
        "alpha": args.alpha,
        "floor_beta": args.floor_beta,
        "noise_fraction": args.noise_fraction,
    }
    config = _build(denoise.DenoiseConfig, _config_section(args.config, "denoise"), flag_overrides)
    rec = audio_io.load_recording(in_path, patient_id=in_path.stem)
    profile = denoise.estimate_noise(rec, config)
    cleaned = denoise.spectral_subtract(rec, profile, config)
    audio_io.write_wav(args.output, cleaned)
    sidecar = {
        "command": "denoise",
        "denoise_config": asdict(config),
        "config_digest": _digest(asdict(config)),
        "input": str(in_path),
    }
    if args.reference:
        ref = audio_io.load_recording(_require_file(args.reference), patient_id="reference")
        if ref.samples.size != rec.samples.size:
            raise ValidationError("reference length does not match the input")
        pre = denoise.snr_db(ref.samples, rec.samples)
        post = denoise.snr_db(ref.samples, cleaned.samples)
        sidecar["pre_snr_db"] = pre
        sidecar["post_snr_db"] = post
        print(f"pre_snr_db={pre:.2f} post_snr_db={post:.2f} gain_db={post - pre:.2f}")
    Path(str(args.output) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return 0


def _extract_one(wav_path: Path, events, config) -> list[features.FeatureVector]:
    rec = audio_io.load_recording(wav_path, patient_id=wav_path.stem)
    windows = audio_io.window_recording(rec, events)
    return [features.extract_features(w, config) for w in windows]


def cmd_extract(args) -> int:
    audio_dir = Path(args.audio_dir)
    if not audio_dir.is_dir():
        raise FileNotFoundError(f"no such directory: {audio_dir}")
    labels = audio_io.read_label_csv(_require_file(args.labels))
    config = _build(features.FeatureConfig, _config_section(args.config, "features"), {})

    wav_paths = sorted(audio_dir.glob("*.wav"))
    if not wav_paths:
        raise ValidationError(f"{audio_dir} holds no .wav files")
    known = {p.stem for p in wav_paths}
    label_patients = {ev.patient_id for ev in labels}
    orphans = sorted(label_patients - known)
    if orphans:
        raise ValidationError(
            f"labels reference patients without recordings: {', '.join(orphans)}"
        )

    by_patient = {pid: [ev for ev in labels if ev.patient_id == pid] for pid in known}
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        batches = list(
            pool.map(lambda p: _extract_one(p, by_patient[p.stem], config), wav_paths)
        )
    vectors = [vec for batch in batches for vec in batch]
    vectors.sort(key=lambda v: (v.patient_id, v.window_index))
    features.write_features_csv(args.out, vectors, config)
    logger.info("wrote %d feature rows to %s", len(vectors), args.out)
    return 0


def cmd_evaluate(args) -> int:
    vectors = features.read_features_csv(_require_file(args.features))
    sidecar_path = Path(args.features).with_suffix(".json")
    digest = ""
    if sidecar_path.exists():
        digest = features.read_feature_sidecar(sidecar_path).get("config_digest", "")
    spec = evaluation.ExperimentSpec(
        kind=_EXPERIMENT_FLAGS[args.experiment],
        selection=_SELECTION_FLAGS[args.selection],
        seed=args.seed,
        ci_resamples=args.resamples,
    )
    report = evaluation.outer_loop(vectors, spec, feature_config_digest=digest)
    evaluation.write_report_json(report, args.out_json)
    evaluation.write_summary_csv(report, args.out_csv)
    acc = report.metrics["accuracy"]
    print(
        f"experiment={args.experiment} selection={args.selection} "
        f"accuracy={acc.value:.3f} ci=({acc.ci_low:.3f}, {acc.ci_high:.3f}) "
        f"folds={len(report.folds)} windows={report.n_windows}"
    )
    return 0


def cmd_classify(args) -> int:
    model = classifier.load_model_file(_require_file(args.model))
    config = _build(features.FeatureConfig, _config_section(args.config, "features"), {})
    digest = features.config_digest(config)
    if model.feature_config_digest and model.feature_config_digest != digest:
        raise ValidationError(
            "model was trained under a different feature configuration "
            f"(model digest {model.feature_config_digest[:12]}..., "
            f"current {digest[:12]}...)"
        )
    wav_path = _require_file(args.audio)
    patient_id = args.patient_id or wav_path.stem
    rec = audio_io.load_recording(wav_path, patient_id=patient_id)
    windows = audio_io.window_recording(rec, labels=None)
    if not windows:
        raise ValidationError("recording is shorter than one 10 s window")
    X = np.stack([features.extract_features(w, config).values for w in windows])
    predicted, _ = classifier.predict_batch(model, X)

    # merge consecutive same-label windows into maximal events
    events: list[tuple[float, float, str]] = []
    for w, label in zip(windows, predicted):
        if events and events[-1][2] == label and events[-1][1] == w.start_s:
            events[-1] = (events[-1][0], w.end_s, label)
        else:
            events.append((w.start_s, w.end_s, str(label)))

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_digest={digest}\n")
        writer = csv.writer(fh)
        writer.writerow(audio_io.LABEL_CSV_HEADER)
        for start, end, label in events:
            writer.writerow([patient_id, repr(start), repr(end), label])
    logger.info("wrote %d events to %s", len(events), args.out)
    return 0


def cmd_synth(args) -> int:
    flag_overrides = {
        "n_patients": args.patients,
        "windows_per_class_per_patient": args.windows_per_class,
        "seed": args.seed,
        "snr_db": args.snr_db,
        "tonal_other_fraction": args.tonal_other_fraction,
    }
    spec = _build(synth.SynthSpec, _config_section(args.config, "synth"), flag_overrides)
    out_dir = synth.write_corpus(spec, args.out_dir)
    logger.info("wrote corpus for %d patients to %s", spec.n_patients, out_dir)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snorelab",
        description="Snore classification pipeline over nocturnal audio recordings.",
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--threads", type=int, default=1, help="worker cap for batch stages")
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="spectral subtraction over one WAV file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--fft-size", type=int, dest="fft_size")
    p.add_argument("--hop", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--floor-beta", type=float, dest="floor_beta")
    p.add_argument("--noise-fraction", type=float, dest="noise_fraction")
    p.add_argument("--reference", help="clean WAV; prints pre/post SNR when given")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("extract", help="windows + 50-feature vectors for a labelled corpus")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="nested leave-one-patient-out cross-validation")
    p.add_argument("--features", required=True)
    p.add_argument("--experiment", choices=sorted(_EXPERIMENT_FLAGS), required=True)
    p.add_argument("--selection", choices=sorted(_SELECTION_FLAGS), default="forward")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resamples", type=int, default=1000, help="bootstrap resamples for CIs")
    p.add_argument("--out-json", default="report.json")
    p.add_argument("--out-csv", default="summary.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="apply a saved model to an unlabelled recording")
    p.add_argument("--model", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patient-id", dest="patient_id")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("synth", help="generate a synthetic labelled corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--patients", type=int)
    p.add_argument("--windows-per-class", type=int, dest="windows_per_class")
    p.add_argument("--seed", type=int)
    p.add_argument("--snr-db", type=float, dest="snr_db")
    p.add_argument("--tonal-other-fraction", type=float, dest="tonal_other_fraction")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SnorelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
