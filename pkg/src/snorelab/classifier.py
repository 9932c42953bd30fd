"""Gaussian shared-covariance linear discriminant analysis.

Classes are modelled as Gaussians with per-class means and one pooled,
diagonally-loaded covariance. The discriminant for class k is

    d_k(x) = x' S^-1 m_k - 0.5 m_k' S^-1 m_k + log p_k

and posteriors are the softmax of the discriminants. Ties break toward the
first class in the model's class order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DegenerateDataError,
    ModelFormatError,
    UnderpopulatedClassError,
    ValidationError,
)
from .features import FeatureVector

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LdaConfig:
    uniform_priors: bool = False
    ridge_eps: float = 1e-6  # starting diagonal loading, raised x10 until PD
    ridge_max: float = 1e-2


@dataclass
class LdaModel:
    classes: list[str]
    means: np.ndarray  # (n_classes, n_selected)
    pooled_covariance: np.ndarray  # (n_selected, n_selected), positive definite
    priors: np.ndarray  # (n_classes,)
    selected_features: list[int]
    feature_config_digest: str = ""
    _cho: tuple = field(default=None, repr=False, compare=False)

    def validate(self) -> None:
        k, d = self.means.shape
        if len(self.classes) != k or len(self.classes) < 2:
            raise ValidationError("model needs one mean row per class and >= 2 classes")
        if self.pooled_covariance.shape != (d, d):
            raise ValidationError("covariance shape does not match the means")
        if len(self.selected_features) != d:
            raise ValidationError("selected_features length does not match dimensionality")
        if abs(float(self.priors.sum()) - 1.0) > 1e-12:
            raise ValidationError("priors must sum to 1 within 1e-12")
        if np.abs(self.pooled_covariance - self.pooled_covariance.T).max() > 1e-10:
            raise ValidationError("covariance must be symmetric within 1e-10")
        try:
            cho_factor(self.pooled_covariance, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("covariance is not positive definite") from exc

    def _solver(self):
        if self._cho is None:
            self._cho = cho_factor(self.pooled_covariance, lower=True)
        return self._cho


def _as_matrix(features) -> tuple[np.ndarray, np.ndarray]:
    """Accept (X, y) building blocks from arrays or FeatureVector sequences."""
    if len(features) and isinstance(features[0], FeatureVector):
        X = np.stack([f.values for f in features])
        labels = []
        for f in features:
            if f.label is None:
                raise ValidationError("cannot fit on unlabelled feature vectors")
            labels.append(f.label.value)
        return X, np.asarray(labels, dtype=object)
    raise ValidationError("expected a sequence of FeatureVector")


def fit_vectors(
    vectors: Sequence[FeatureVector],
    selected: Sequence[int] | None = None,
    config: LdaConfig = LdaConfig(),
    feature_config_digest: str = "",
) -> LdaModel:
    """Fit from labelled FeatureVectors (thin wrapper over :func:`fit`)."""
    X, y = _as_matrix(list(vectors))
    return fit(X, y, selected=selected, config=config, feature_config_digest=feature_config_digest)


def fit(
    X: np.ndarray,
    y: Sequence[str],
    selected: Sequence[int] | None = None,
    config: LdaConfig = LdaConfig(),
    feature_config_digest: str = "",
) -> LdaModel:
    """Fit the shared-covariance Gaussian model on the selected feature columns.

    The pooled covariance is the within-class scatter over N - K, loaded with
    eps * mean(diag) * I starting at eps = 1e-6 and escalating tenfold until a
    Cholesky factorization succeeds (DegenerateDataError past 1e-2). For data
    whose scatter has a zero diagonal the loading falls back to an absolute
    eps * I so all-constant features still fit.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError("X must be (n_samples, n_features) aligned with y")
    if not np.all(np.isfinite(X)):
        raise ValidationError("training features must be finite")

    if selected is None:
        selected = list(range(X.shape[1]))
    selected = [int(i) for i in selected]
    if len(set(selected)) != len(selected):
        raise ValidationError("selected feature indices must be unique")
    Xs = X[:, selected]

    classes = sorted(str(c) for c in np.unique(y))
    if len(classes) < 2:
        raise UnderpopulatedClassError("need at least 2 classes to fit")

    n, d = Xs.shape
    k = len(classes)
    means = np.zeros((k, d))
    counts = np.zeros(k)
    scatter = np.zeros((d, d))
    for ci, cls in enumerate(classes):
        rows = Xs[y == cls]
        if rows.shape[0] < 2:
            raise UnderpopulatedClassError(
                f"class {cls!r} has {rows.shape[0]} sample(s); need at least 2"
            )
        counts[ci] = rows.shape[0]
        means[ci] = rows.mean(axis=0)
        centered = rows - means[ci]
        scatter += centered.T @ centered

    pooled = scatter / (n - k)
    pooled = (pooled + pooled.T) / 2.0

    mean_diag = float(np.mean(np.diag(pooled)))
    scale = mean_diag if mean_diag > 0 else 1.0
    eps = config.ridge_eps
    while True:
        loaded = pooled + eps * scale * np.eye(d)
        try:
            cho_factor(loaded, lower=True)
            break
        except np.linalg.LinAlgError:
            eps *= 10.0
            if eps > config.ridge_max:
                raise DegenerateDataError(
                    f"covariance not positive definite even at ridge {config.ridge_max}"
                ) from None

    if config.uniform_priors:
        priors = np.full(k, 1.0 / k)
    else:
        priors = counts / counts.sum()
    priors = priors / priors.sum()

    model = LdaModel(
        classes=classes,
        means=means,
        pooled_covariance=loaded,
        priors=priors,
        selected_features=selected,
        feature_config_digest=feature_config_digest,
    )
    model.validate()
    return model


def _discriminants(model: LdaModel, Xs: np.ndarray) -> np.ndarray:
    solver = model._solver()
    w = cho_solve(solver, model.means.T)  # (d, k) columns S^-1 m_k
    quad = 0.5 * np.einsum("kd,dk->k", model.means, w)
    return Xs @ w - quad[None, :] + np.log(model.priors)[None, :]


def predict_batch(model: LdaModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predicted class names and posterior matrix for many feature rows.

    Rows may carry the full canonical feature vector; the model slices out its
    own selected columns.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if not np.all(np.isfinite(X)):
        raise ValidationError("features must be finite")
    Xs = X[:, model.selected_features]
    scores = _discriminants(model, Xs)
    shifted = scores - scores.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    posteriors = expd / expd.sum(axis=1, keepdims=True)
    winners = np.argmax(scores, axis=1)  # first maximum wins ties
    labels = np.asarray(model.classes, dtype=object)[winners]
    return labels, posteriors


def predict(model: LdaModel, x: np.ndarray | FeatureVector) -> tuple[str, dict[str, float]]:
    """Predicted class and per-class posterior for one feature vector."""
    values = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    labels, posteriors = predict_batch(model, values[None, :])
    return str(labels[0]), {c: float(p) for c, p in zip(model.classes, posteriors[0])}


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(model: LdaModel) -> bytes:
    """Canonical JSON encoding; floats keep full round-trip precision."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "classes": model.classes,
        "selected_features": model.selected_features,
        "means": model.means.tolist(),
        "covariance": model.pooled_covariance.tolist(),
        "priors": model.priors.tolist(),
        "feature_config_digest": model.feature_config_digest,
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def load_model(data: bytes | str) -> LdaModel:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise ModelFormatError(
            f"unsupported model schema {doc.get('schema_version')!r}; "
            f"expected {SCHEMA_VERSION}"
        )
    try:
        model = LdaModel(
            classes=[str(c) for c in doc["classes"]],
            means=np.asarray(doc["means"], dtype=np.float64),
            pooled_covariance=np.asarray(doc["covariance"], dtype=np.float64),
            priors=np.asarray(doc["priors"], dtype=np.float64),
            selected_features=[int(i) for i in doc["selected_features"]],
            feature_config_digest=str(doc.get("feature_config_digest", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"model document is malformed: {exc}") from exc
    try:
        model.validate()
    except ValidationError as exc:
        raise ModelFormatError(f"model document violates invariants: {exc}") from exc
    return model


def save_model_file(model: LdaModel, path: str | Path) -> None:
    Path(path).write_bytes(save_model(model))


def load_model_file(path: str | Path) -> LdaModel:
    return load_model(Path(path).read_bytes())
