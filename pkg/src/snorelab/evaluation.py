"""Nested leave-one-patient-out cross-validation with forward feature selection.

The outer loop holds out one patient per fold for the performance estimate.
Inside each fold the remaining patients are split into up to 10 patient-
grouped folds, over which sequential forward selection adds the feature with
the best mean inner accuracy until the improvement drops below an absolute
tolerance. The fold model is then refit on all training patients with the
fold's features and scored on the held-out patient. A programmatic window-ID
intersection check runs on every fold; any overlap aborts the run.

Three experiment kinds are supported: snore vs other (both snore classes
merged), OSA snore vs simple snore (per-patient balanced, uniform priors),
and the direct 3-class problem.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import classifier
from .audio_io import SoundClass
from .classifier import LdaConfig
from .errors import (
    DegenerateDataError,
    LeakageError,
    UnderpopulatedClassError,
    ValidationError,
)
from .features import N_FEATURES, FeatureVector

logger = logging.getLogger(__name__)

_BALANCE_STREAM = 0x5EED_BA1A  # keeps balancing draws apart from fold draws


class ExperimentKind(str, Enum):
    SNORE_VS_OTHER = "snore_vs_other"
    OSA_VS_SIMPLE = "osa_vs_simple"
    DIRECT_3CLASS = "direct_3class"


class SelectionMode(str, Enum):
    ALL_FEATURES = "all"
    FORWARD_SELECTION = "forward"


_CLASS_MAPS: dict[ExperimentKind, dict[SoundClass, str | None]] = {
    ExperimentKind.SNORE_VS_OTHER: {
        SoundClass.OSA_SNORE: "snore",
        SoundClass.SIMPLE_SNORE: "snore",
        SoundClass.OTHER: "other",
    },
    ExperimentKind.OSA_VS_SIMPLE: {
        SoundClass.OSA_SNORE: "osa_snore",
        SoundClass.SIMPLE_SNORE: "simple_snore",
        SoundClass.OTHER: None,  # dropped
    },
    ExperimentKind.DIRECT_3CLASS: {
        SoundClass.OSA_SNORE: "osa_snore",
        SoundClass.SIMPLE_SNORE: "simple_snore",
        SoundClass.OTHER: "other",
    },
}

_POSITIVE_CLASS: dict[ExperimentKind, str | None] = {
    ExperimentKind.SNORE_VS_OTHER: "snore",
    ExperimentKind.OSA_VS_SIMPLE: "osa_snore",
    ExperimentKind.DIRECT_3CLASS: None,
}


def mapped_classes(kind: ExperimentKind) -> list[str]:
    return sorted({v for v in _CLASS_MAPS[kind].values() if v is not None})


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    selection: SelectionMode = SelectionMode.FORWARD_SELECTION
    seed: int = 0
    n_inner_folds: int = 10
    selection_tolerance: float = 0.001
    ci_resamples: int = 1000
    ci_level: float = 0.95

    @property
    def balanced(self) -> bool:
        """Per-patient balancing applies to the OSA-vs-simple experiment only."""
        return self.kind is ExperimentKind.OSA_VS_SIMPLE

    @property
    def uniform_priors(self) -> bool:
        return self.kind is ExperimentKind.OSA_VS_SIMPLE

    @property
    def lda_config(self) -> LdaConfig:
        return LdaConfig(uniform_priors=self.uniform_priors)


@dataclass
class FeatureTable:
    """Flat feature rows with patient/window provenance."""

    patient_ids: np.ndarray  # (N,) object
    window_indices: np.ndarray  # (N,) int
    X: np.ndarray  # (N, n_features)
    y: np.ndarray  # (N,) object, mapped class names

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, idx: np.ndarray) -> "FeatureTable":
        return FeatureTable(
            patient_ids=self.patient_ids[idx],
            window_indices=self.window_indices[idx],
            X=self.X[idx],
            y=self.y[idx],
        )

    def window_ids(self, idx: np.ndarray | None = None) -> set[tuple[str, int]]:
        if idx is None:
            idx = np.arange(len(self))
        return {
            (str(p), int(w))
            for p, w in zip(self.patient_ids[idx], self.window_indices[idx])
        }

    def patients(self) -> list[str]:
        return sorted({str(p) for p in self.patient_ids})


def build_table(vectors: Sequence[FeatureVector], kind: ExperimentKind) -> FeatureTable:
    """Map ground-truth labels onto the experiment's classes, dropping rows
    the experiment excludes."""
    mapping = _CLASS_MAPS[kind]
    rows, labels, pids, widx = [], [], [], []
    for vec in vectors:
        if vec.label is None:
            raise ValidationError(
                f"window {vec.patient_id}:{vec.window_index} is unlabelled; "
                "evaluation needs ground truth"
            )
        mapped = mapping[vec.label]
        if mapped is None:
            continue
        rows.append(vec.values)
        labels.append(mapped)
        pids.append(vec.patient_id)
        widx.append(vec.window_index)
    if not rows:
        raise ValidationError("no windows left after class mapping")
    return FeatureTable(
        patient_ids=np.asarray(pids, dtype=object),
        window_indices=np.asarray(widx, dtype=np.int64),
        X=np.stack(rows),
        y=np.asarray(labels, dtype=object),
    )


def _patient_stream(pid: str) -> int:
    return int.from_bytes(hashlib.sha256(pid.encode("utf-8")).digest()[:8], "big")


def balance_per_patient(table: FeatureTable, seed: int) -> FeatureTable:
    """Randomly undersample each patient's majority class to the minority count.

    Draws are seeded per patient, without replacement, so the retained window
    set is identical across runs with the same seed.
    """
    keep: list[np.ndarray] = []
    for pid in table.patients():
        patient_rows = np.flatnonzero(table.patient_ids == pid)
        classes = sorted({str(c) for c in table.y[patient_rows]})
        per_class = [patient_rows[table.y[patient_rows] == cls] for cls in classes]
        minority = min(len(rows) for rows in per_class)
        rng = np.random.default_rng([seed, _BALANCE_STREAM, _patient_stream(pid)])
        for rows in per_class:
            if len(rows) > minority:
                rows = np.sort(rng.choice(rows, size=minority, replace=False))
            keep.append(rows)
    idx = np.sort(np.concatenate(keep)) if keep else np.array([], dtype=int)
    return table.subset(idx)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _ratio(num: float, den: float) -> float | None:
    return float(num) / float(den) if den > 0 else None


def compute_metrics(
    confusion: np.ndarray,
    classes: Sequence[str],
    positive_class: str | None = None,
) -> dict[str, float | None]:
    """Metric set from a confusion matrix (rows = truth, columns = predicted).

    Binary matrices yield accuracy/sensitivity/specificity/PPV/NPV for the
    positive class (default: the second class). Larger matrices yield overall
    accuracy plus one-vs-rest sensitivity and PPV per class. Zero denominators
    produce None, never NaN.
    """
    confusion = np.asarray(confusion)
    if confusion.size == 0:
        raise ValidationError("confusion matrix is empty")
    k = len(classes)
    if confusion.shape != (k, k):
        raise ValidationError(f"confusion matrix must be {k}x{k} for {k} classes")
    if np.any(confusion < 0) or not np.issubdtype(confusion.dtype, np.integer):
        raise ValidationError("confusion matrix must hold non-negative integers")

    total = int(confusion.sum())
    accuracy = _ratio(np.trace(confusion), total)
    if k == 2:
        positive = positive_class if positive_class is not None else classes[1]
        if positive not in classes:
            raise ValidationError(f"positive class {positive!r} not among {list(classes)}")
        p = list(classes).index(positive)
        tp = int(confusion[p, p])
        fn = int(confusion[p].sum()) - tp
        fp = int(confusion[:, p].sum()) - tp
        tn = total - tp - fn - fp
        return {
            "accuracy": accuracy,
            "sensitivity": _ratio(tp, tp + fn),
            "specificity": _ratio(tn, tn + fp),
            "ppv": _ratio(tp, tp + fp),
            "npv": _ratio(tn, tn + fn),
        }
    out: dict[str, float | None] = {"accuracy": accuracy}
    for ci, cls in enumerate(classes):
        tp = int(confusion[ci, ci])
        out[f"sensitivity:{cls}"] = _ratio(tp, int(confusion[ci].sum()))
        out[f"ppv:{cls}"] = _ratio(tp, int(confusion[:, ci].sum()))
    return out


def confidence_interval(
    samples: Sequence[float],
    level: float = 0.95,
    resamples: int = 1000,
    seed=0,
) -> tuple[float | None, float | None]:
    """Percentile bootstrap of the mean over patient-level metric samples."""
    samples = np.asarray(list(samples), dtype=np.float64)
    if samples.size < 3:
        return None, None
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, samples.size, size=(resamples, samples.size))
    means = samples[draws].mean(axis=1)
    lo_q = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [lo_q, 100.0 - lo_q])
    return float(lo), float(hi)


def _confusion(y_true: np.ndarray, y_pred: np.ndarray, classes: Sequence[str]) -> np.ndarray:
    index = {cls: i for i, cls in enumerate(classes)}
    out = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        out[index[str(t)], index[str(p)]] += 1
    return out


# ---------------------------------------------------------------------------
# inner loop: grouped forward selection
# ---------------------------------------------------------------------------

def inner_feature_selection(
    table: FeatureTable,
    spec: ExperimentSpec,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Sequential forward selection over patient-grouped inner folds.

    Patients are shuffled (seeded) and dealt round-robin into up to
    ``n_inner_folds`` groups. Each step adds the feature with the highest mean
    held-out-group accuracy; selection stops when the best improvement falls
    below ``selection_tolerance`` or all features are in. Inner fits that fail
    (underpopulated class, degenerate data) count as zero accuracy.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    patients = table.patients()
    n_folds = min(spec.n_inner_folds, len(patients))
    if n_folds < 2:
        raise ValidationError("inner selection needs at least 2 training patients")
    shuffled = [patients[i] for i in rng.permutation(len(patients))]
    fold_of = {pid: i % n_folds for i, pid in enumerate(shuffled)}
    fold_index = np.asarray([fold_of[str(p)] for p in table.patient_ids])

    folds = []
    for f in range(n_folds):
        val_idx = np.flatnonzero(fold_index == f)
        train_idx = np.flatnonzero(fold_index != f)
        if table.window_ids(train_idx) & table.window_ids(val_idx):
            raise LeakageError("inner folds share windows")
        folds.append((table.subset(train_idx), table.subset(val_idx)))

    lda_config = spec.lda_config
    n_features = table.X.shape[1]
    selected: list[int] = []
    remaining = list(range(n_features))
    best_score = 0.0
    while remaining:
        step_best_feature = None
        step_best_score = -1.0
        for cand in remaining:
            trial = selected + [cand]
            accs = []
            for train, val in folds:
                try:
                    model = classifier.fit(train.X, train.y, trial, lda_config)
                    pred, _ = classifier.predict_batch(model, val.X)
                    accs.append(float(np.mean(pred == val.y)))
                except (UnderpopulatedClassError, DegenerateDataError):
                    accs.append(0.0)
            score = float(np.mean(accs))
            if score > step_best_score:
                step_best_score = score
                step_best_feature = cand
        if step_best_score - best_score < spec.selection_tolerance:
            break
        selected.append(step_best_feature)
        remaining.remove(step_best_feature)
        best_score = step_best_score
    return selected


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldResult:
    test_patient: str
    selected_features: list[int]
    confusion: np.ndarray
    n_test: int


@dataclass(frozen=True)
class MetricReport:
    value: float | None
    ci_low: float | None
    ci_high: float | None
    n_fold_samples: int


@dataclass(frozen=True)
class CvReport:
    kind: ExperimentKind
    selection: SelectionMode
    seed: int
    ci_resamples: int
    classes: list[str]
    positive_class: str | None
    skipped_patients: list[str]
    folds: list[FoldResult]
    pooled_confusion: np.ndarray
    metrics: dict[str, MetricReport]
    feature_tally: list[int]
    n_windows: int
    feature_config_digest: str = ""

    @property
    def mean_selected_features(self) -> float:
        return float(np.mean([len(f.selected_features) for f in self.folds]))

    def to_json(self) -> str:
        doc = {
            "experiment": {
                "kind": self.kind.value,
                "selection": self.selection.value,
                "seed": self.seed,
                "ci_resamples": self.ci_resamples,
                "balanced": self.kind is ExperimentKind.OSA_VS_SIMPLE,
                "uniform_priors": self.kind is ExperimentKind.OSA_VS_SIMPLE,
            },
            "classes": self.classes,
            "positive_class": self.positive_class,
            "skipped_patients": self.skipped_patients,
            "folds": [
                {
                    "test_patient": f.test_patient,
                    "selected_features": list(f.selected_features),
                    "confusion": f.confusion.tolist(),
                    "n_test": f.n_test,
                }
                for f in self.folds
            ],
            "pooled_confusion": self.pooled_confusion.tolist(),
            "metrics": {
                name: {
                    "value": m.value,
                    "ci_low": m.ci_low,
                    "ci_high": m.ci_high,
                    "n_fold_samples": m.n_fold_samples,
                }
                for name, m in self.metrics.items()
            },
            "feature_tally": list(self.feature_tally),
            "mean_selected_features": self.mean_selected_features,
            "n_windows": self.n_windows,
            "feature_config_digest": self.feature_config_digest,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _split_fold(table: FeatureTable, test_patient: str) -> tuple[np.ndarray, np.ndarray]:
    test_idx = np.flatnonzero(table.patient_ids == test_patient)
    train_idx = np.flatnonzero(table.patient_ids != test_patient)
    return train_idx, test_idx


def _assert_no_leakage(table: FeatureTable, train_idx: np.ndarray, test_idx: np.ndarray) -> None:
    overlap = table.window_ids(train_idx) & table.window_ids(test_idx)
    if overlap:
        sample = sorted(overlap)[:5]
        raise LeakageError(
            f"{len(overlap)} held-out window(s) leaked into training, e.g. {sample}"
        )


def outer_loop(
    data: Sequence[FeatureVector] | FeatureTable,
    spec: ExperimentSpec,
    feature_config_digest: str = "",
) -> CvReport:
    """Leave-one-patient-out evaluation of one experiment."""
    if isinstance(data, FeatureTable):
        table = data
    else:
        table = build_table(data, spec.kind)
    classes = mapped_classes(spec.kind)

    skipped: list[str] = []
    if spec.balanced:
        for pid in table.patients():
            rows = np.flatnonzero(table.patient_ids == pid)
            present = {str(c) for c in table.y[rows]}
            if present != set(classes):
                skipped.append(pid)
                logger.warning(
                    "skipping patient %s: missing class(es) %s for %s",
                    pid, sorted(set(classes) - present), spec.kind.value,
                )
        if skipped:
            keep = np.flatnonzero(~np.isin(table.patient_ids, skipped))
            table = table.subset(keep)
        table = balance_per_patient(table, spec.seed)

    patients = table.patients()
    if len(patients) < 3:
        raise ValidationError(
            f"leave-one-patient-out needs at least 3 patients, got {len(patients)}"
        )

    folds: list[FoldResult] = []
    tally = np.zeros(N_FEATURES, dtype=np.int64)
    for fold_index, pid in enumerate(patients):
        train_idx, test_idx = _split_fold(table, pid)
        _assert_no_leakage(table, train_idx, test_idx)
        train = table.subset(train_idx)
        if spec.selection is SelectionMode.FORWARD_SELECTION:
            fold_rng = np.random.default_rng([spec.seed, fold_index])
            selected = inner_feature_selection(train, spec, fold_rng)
            if not selected:  # degenerate: fall back to all features
                selected = list(range(table.X.shape[1]))
        else:
            selected = list(range(table.X.shape[1]))
        model = classifier.fit(train.X, train.y, selected, spec.lda_config)
        pred, _ = classifier.predict_batch(model, table.X[test_idx])
        confusion = _confusion(table.y[test_idx], pred, classes)
        folds.append(
            FoldResult(
                test_patient=pid,
                selected_features=list(selected),
                confusion=confusion,
                n_test=int(test_idx.size),
            )
        )
        tally[np.asarray(selected, dtype=int)] += 1

    pooled = np.sum([f.confusion for f in folds], axis=0)
    positive = _POSITIVE_CLASS[spec.kind]
    pooled_metrics = compute_metrics(pooled, classes, positive)

    metrics: dict[str, MetricReport] = {}
    for mi, name in enumerate(sorted(pooled_metrics)):
        point = pooled_metrics[name]
        fold_values = [
            compute_metrics(f.confusion, classes, positive)[name] for f in folds
        ]
        samples = [v for v in fold_values if v is not None]
        lo, hi = confidence_interval(
            samples,
            level=spec.ci_level,
            resamples=spec.ci_resamples,
            seed=[spec.seed, 1000 + mi],
        )
        if point is not None and lo is not None:
            # the report's point estimate is pooled over windows while the
            # bootstrap works on per-patient samples; keep the point inside
            lo, hi = min(lo, point), max(hi, point)
        metrics[name] = MetricReport(
            value=point, ci_low=lo, ci_high=hi, n_fold_samples=len(samples)
        )

    return CvReport(
        kind=spec.kind,
        selection=spec.selection,
        seed=spec.seed,
        ci_resamples=spec.ci_resamples,
        classes=classes,
        positive_class=positive,
        skipped_patients=skipped,
        folds=folds,
        pooled_confusion=pooled,
        metrics=metrics,
        feature_tally=tally.tolist(),
        n_windows=int(pooled.sum()),
        feature_config_digest=feature_config_digest,
    )


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_report_json(report: CvReport, path: str | Path) -> None:
    Path(path).write_text(report.to_json(), encoding="utf-8")


_SUMMARY_ORDER = ["accuracy", "sensitivity", "specificity", "ppv", "npv"]


def write_summary_csv(report: CvReport, path: str | Path) -> None:
    """One row per statistic, mirroring the cross-validation result tables."""
    def fmt(v):
        return "" if v is None else repr(v)

    rows = []
    for name in sorted(report.metrics):
        base, _, cls = name.partition(":")
        if not cls and base != "accuracy" and report.positive_class:
            cls = report.positive_class
        rows.append((base, cls, report.metrics[name]))
    rows.sort(key=lambda r: (_SUMMARY_ORDER.index(r[0]) if r[0] in _SUMMARY_ORDER else 99, r[1]))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# experiment={report.kind.value} selection={report.selection.value} "
                 f"seed={report.seed}\n")
        if report.feature_config_digest:
            fh.write(f"# config_digest={report.feature_config_digest}\n")
        writer = csv.writer(fh)
        writer.writerow(["statistic", "class", "value", "ci_low", "ci_high"])
        for base, cls, metric in rows:
            writer.writerow([base, cls, fmt(metric.value), fmt(metric.ci_low), fmt(metric.ci_high)])
