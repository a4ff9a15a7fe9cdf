"""Win-probability models over game-state features, with evaluation,
calibration diagnostics, time-sliced performance, and feature importance.

Three model kinds share one predict/evaluate surface:

* ``map_average``: each map's historical CT win rate (the benchmark).
* ``logistic``: full-batch gradient descent on standardized features with
  the map expanded one-hot. The one-hot columns double as per-map
  intercepts, so the model carries no separate bias term.
* ``gbt``: the in-house histogram gradient-boosted trees, with the map as
  a native categorical feature.

Train/test discipline: split by match date, never by random row, so
adjacent states of one round never straddle the split.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .errors import ModelFormatError, SchemaMismatchError
from .features import FeatureMatrix, FeatureSchema, MAP_FEATURE, vectorize
from .gbt import GbtConfig, GbtModel, fit_gbt

MODEL_MAGIC = b"WPMD"
MODEL_VERSION = 1

MODEL_KINDS = ("map_average", "logistic", "gbt")


@dataclass
class MapAverageParams:
    rates: dict[str, float]
    global_rate: float


@dataclass
class LogisticParams:
    columns: tuple[str, ...]
    weights: np.ndarray
    loss_curve: list[float] = field(default_factory=list)


@dataclass
class WinProbModel:
    kind: str
    schema: FeatureSchema
    params: object
    metadata: dict = field(default_factory=dict)

    def raw_coefficients(self) -> dict[str, float]:
        """Logistic coefficients mapped back to original feature units.

        Numeric coefficients are de-standardized; each map's one-hot
        weight absorbs the constant shift and acts as that map's
        intercept.
        """
        if self.kind != "logistic":
            raise ValueError("raw coefficients exist only for logistic models")
        params: LogisticParams = self.params
        out: dict[str, float] = {}
        shift = 0.0
        k = len(self.schema.map_vocab)
        for name, w in zip(params.columns[k:], params.weights[k:]):
            st = self.schema.stats[name]
            if st.scaled:
                out[name] = float(w / st.std)
                shift += w * st.mean / st.std
            else:
                out[name] = float(w)
        for name, w in zip(params.columns[:k], params.weights[:k]):
            out[name] = float(w - shift)
        return out


@dataclass(frozen=True)
class EvalReport:
    log_loss: float
    brier_score: float
    auc: float
    n_rows: int
    clamp: float = metrics.CLAMP

    def as_dict(self) -> dict:
        return {
            "log_loss": self.log_loss,
            "brier_score": self.brier_score,
            "auc": self.auc,
            "n_rows": self.n_rows,
            "clamp": self.clamp,
        }


@dataclass(frozen=True)
class TimeBinReport:
    bin_index: int
    start_seconds: float
    end_seconds: float
    n_rows: int
    log_loss: float
    brier_score: float
    auc: Optional[float]
    accuracy: float

    def as_dict(self) -> dict:
        return {
            "bin_index": self.bin_index,
            "start_seconds": self.start_seconds,
            "end_seconds": self.end_seconds,
            "n_rows": self.n_rows,
            "log_loss": self.log_loss,
            "brier_score": self.brier_score,
            "auc": self.auc,
            "accuracy": self.accuracy,
        }


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _require_labels(matrix: FeatureMatrix) -> np.ndarray:
    if matrix.n_rows == 0:
        raise ValueError("cannot train on an empty matrix")
    if matrix.y is None:
        raise ValueError("matrix carries no outcome labels")
    return matrix.y.astype(np.float64)


def train_baseline(matrix: FeatureMatrix, *, split_description: str = ""
                   ) -> WinProbModel:
    """Per-map mean CT win rate; unseen maps fall back to the global mean."""
    y = _require_labels(matrix)
    codes = matrix.column(MAP_FEATURE).astype(np.int64)
    global_rate = float(y.mean())
    rates = {}
    for code, name in enumerate(matrix.schema.map_vocab):
        sel = codes == code
        rates[name] = float(y[sel].mean()) if sel.any() else global_rate
    params = MapAverageParams(rates=rates, global_rate=global_rate)
    meta = {"train_rows": matrix.n_rows, "split": split_description}
    return WinProbModel(kind="map_average", schema=matrix.schema,
                        params=params, metadata=meta)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss_grad(w: np.ndarray, x: np.ndarray, y: np.ndarray
                       ) -> tuple[float, np.ndarray]:
    """Mean log loss and its analytic gradient for a linear score x @ w.

    Uses the numerically stable softplus form without probability
    clamping, so the gradient is exact everywhere (finite-difference
    checks rely on this).
    """
    z = x @ w
    margins = np.where(y >= 0.5, -z, z)
    loss = float(np.mean(np.logaddexp(0.0, margins)))
    grad = x.T @ (_sigmoid(z) - y) / len(y)
    return loss, grad


def _design_matrix(matrix: FeatureMatrix, schema: FeatureSchema
                   ) -> tuple[np.ndarray, tuple[str, ...]]:
    """One-hot map columns followed by numerics standardized with the
    given schema's statistics (not the matrix's own)."""
    n = matrix.n_rows
    k = len(schema.map_vocab)
    codes = matrix.x[:, schema.column_index(MAP_FEATURE)].astype(np.int64)
    onehot = np.zeros((n, k), dtype=np.float64)
    seen = codes >= 0
    onehot[np.flatnonzero(seen), codes[seen]] = 1.0

    numeric_names = schema.numeric_names
    cols = np.empty((n, len(numeric_names)), dtype=np.float64)
    for j, name in enumerate(numeric_names):
        col = matrix.x[:, schema.column_index(name)]
        st = schema.stats[name]
        cols[:, j] = (col - st.mean) / st.std if st.scaled else col
    x = np.hstack([onehot, cols])
    names = tuple(f"map={m}" for m in schema.map_vocab) + numeric_names
    return x, names


def train_logistic(matrix: FeatureMatrix, epochs: int = 500,
                   learning_rate: float = 0.1, seed: int = 0, *,
                   split_description: str = "") -> WinProbModel:
    """Full-batch gradient descent on the log loss.

    With the default constant step on standardized features the training
    loss is non-increasing; the recorded loss curve lets callers verify.
    """
    y = _require_labels(matrix)
    if y.min() == y.max():
        raise ValueError("degenerate labels: only one class present")
    if epochs < 1:
        raise ValueError("epochs must be positive")

    x, columns = _design_matrix(matrix, matrix.schema)
    w = np.zeros(x.shape[1], dtype=np.float64)
    curve = []
    for epoch in range(epochs):
        loss, grad = logistic_loss_grad(w, x, y)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"non-finite training loss at epoch {epoch}; "
                f"weight norm {np.linalg.norm(w):.3e}, step {learning_rate}")
        curve.append(loss)
        w -= learning_rate * grad
    curve.append(logistic_loss_grad(w, x, y)[0])

    params = LogisticParams(columns=columns, weights=w, loss_curve=curve)
    meta = {
        "train_rows": matrix.n_rows,
        "epochs": epochs,
        "learning_rate": learning_rate,
        "seed": seed,
        "split": split_description,
    }
    return WinProbModel(kind="logistic", schema=matrix.schema,
                        params=params, metadata=meta)


def train_gbt(matrix: FeatureMatrix, config: GbtConfig = GbtConfig(), *,
              split_description: str = "") -> WinProbModel:
    """Boosted trees on the log-loss objective with histogram splits."""
    y = _require_labels(matrix)
    if y.min() == y.max():
        raise ValueError("degenerate labels: only one class present")
    is_cat = [name == MAP_FEATURE for name in matrix.schema.names]
    gbt = fit_gbt(matrix.x, y, is_cat, config)
    meta = {
        "train_rows": matrix.n_rows,
        "seed": config.seed,
        "hyperparameters": config.to_dict(),
        "split": split_description,
    }
    return WinProbModel(kind="gbt", schema=matrix.schema, params=gbt, metadata=meta)


# ---------------------------------------------------------------------------
# Prediction and evaluation
# ---------------------------------------------------------------------------


def _check_schema(model: WinProbModel, matrix: FeatureMatrix) -> None:
    ms, xs = model.schema, matrix.schema
    if ms.names != xs.names:
        raise SchemaMismatchError(
            f"model features {list(ms.names)} != matrix features {list(xs.names)}")
    if ms.map_vocab != xs.map_vocab:
        raise SchemaMismatchError("map vocabulary differs between model and matrix")
    if ms.has_distances and ms.unreachable_sentinel != xs.unreachable_sentinel:
        raise SchemaMismatchError("unreachable-distance sentinel differs")


def predict(model: WinProbModel, matrix: FeatureMatrix) -> np.ndarray:
    """Win probabilities, clamped to [1e-6, 1 - 1e-6], one per row."""
    _check_schema(model, matrix)
    if model.kind == "map_average":
        params: MapAverageParams = model.params
        codes = matrix.column(MAP_FEATURE).astype(np.int64)
        table = np.array([params.rates[m] for m in model.schema.map_vocab]
                         + [params.global_rate], dtype=np.float64)
        codes = np.where(codes < 0, len(model.schema.map_vocab), codes)
        p = table[codes]
    elif model.kind == "logistic":
        x, _ = _design_matrix(matrix, model.schema)
        p = _sigmoid(x @ model.params.weights)
    elif model.kind == "gbt":
        gbt: GbtModel = model.params
        p = gbt.predict_proba(matrix.x)
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    return metrics.clamp_probs(p)


def predict_states(model: WinProbModel, states) -> np.ndarray:
    """Vectorize states under the model's own schema, then predict."""
    return predict(model, vectorize(states, model.schema))


def evaluate(model: WinProbModel, matrix: FeatureMatrix) -> EvalReport:
    y = _require_labels(matrix)
    p = predict(model, matrix)
    return EvalReport(
        log_loss=metrics.log_loss(y, p),
        brier_score=metrics.brier_score(y, p),
        auc=metrics.auc(y, p),
        n_rows=matrix.n_rows,
    )


def calibration_curve(model: WinProbModel, matrix: FeatureMatrix,
                      n_bins: int = 100) -> list[metrics.CalibrationBin]:
    """Reliability table: equal-width bins of predictions vs observed rates."""
    y = _require_labels(matrix)
    p = predict(model, matrix)
    return metrics.calibration_table(y, p, n_bins)


def evaluate_by_time(model: WinProbModel, matrix: FeatureMatrix,
                     bin_seconds: float) -> list[TimeBinReport]:
    """Per-elapsed-time-bin metrics; empty bins are omitted.

    Accuracy thresholds predictions at 0.5. AUC is None for bins whose
    labels are single-class.
    """
    if matrix.meta is None:
        raise ValueError("matrix has no row metadata with elapsed seconds")
    if bin_seconds <= 0:
        raise ValueError("bin_seconds must be positive")
    y = _require_labels(matrix)
    p = predict(model, matrix)
    bins = (matrix.meta.seconds / bin_seconds).astype(np.int64)
    out = []
    for b in np.unique(bins):
        sel = bins == b
        yb, pb = y[sel], p[sel]
        try:
            auc_b: Optional[float] = metrics.auc(yb, pb)
        except ValueError:
            auc_b = None
        out.append(TimeBinReport(
            bin_index=int(b),
            start_seconds=float(b * bin_seconds),
            end_seconds=float((b + 1) * bin_seconds),
            n_rows=int(sel.sum()),
            log_loss=metrics.log_loss(yb, pb),
            brier_score=metrics.brier_score(yb, pb),
            auc=auc_b,
            accuracy=metrics.accuracy(yb, pb),
        ))
    return out


def feature_importance(model: WinProbModel) -> dict[str, float]:
    """Per-feature total split gain, normalized to sum to 100.

    The categorical map feature is one schema column, so it reports as a
    single aggregate entry.
    """
    if model.kind != "gbt":
        raise ValueError("feature importance is defined for gbt models only")
    gbt: GbtModel = model.params
    gains = gbt.total_gain
    total = float(gains.sum())
    names = model.schema.names
    if total <= 0.0:
        return {name: 0.0 for name in names}
    return {name: float(100.0 * g / total) for name, g in zip(names, gains)}


def split_by_date(matches: Sequence, cutoff_date: str):
    """Date-based train/test split: train strictly before the cutoff."""
    train = [m for m in matches if m.date < cutoff_date]
    test = [m for m in matches if m.date >= cutoff_date]
    return train, test


# ---------------------------------------------------------------------------
# Model container I/O
# ---------------------------------------------------------------------------


def _params_to_dict(model: WinProbModel) -> dict:
    if model.kind == "map_average":
        p: MapAverageParams = model.params
        return {"rates": p.rates, "global_rate": p.global_rate}
    if model.kind == "logistic":
        lp: LogisticParams = model.params
        return {"columns": list(lp.columns), "weights": lp.weights.tolist(),
                "loss_curve": lp.loss_curve}
    if model.kind == "gbt":
        return model.params.to_dict()
    raise ValueError(f"unknown model kind {model.kind!r}")


def _params_from_dict(kind: str, doc: dict):
    if kind == "map_average":
        return MapAverageParams(rates=dict(doc["rates"]),
                                global_rate=float(doc["global_rate"]))
    if kind == "logistic":
        return LogisticParams(columns=tuple(doc["columns"]),
                              weights=np.asarray(doc["weights"], dtype=np.float64),
                              loss_curve=list(doc["loss_curve"]))
    if kind == "gbt":
        return GbtModel.from_dict(doc)
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(model: WinProbModel, path) -> None:
    if model.kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model.kind!r}")
    payload = json.dumps({
        "kind": model.kind,
        "schema": model.schema.to_dict(),
        "params": _params_to_dict(model),
        "metadata": model.metadata,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<H", MODEL_VERSION))
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_model(path) -> WinProbModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10 or blob[:4] != MODEL_MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version = struct.unpack_from("<H", blob, 4)[0]
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    length = struct.unpack_from("<I", blob, 6)[0]
    body_end = 10 + length
    if len(blob) < body_end + 4:
        raise ModelFormatError("truncated model file")
    payload = blob[10:body_end]
    stored_crc = struct.unpack_from("<I", blob, body_end)[0]
    if zlib.crc32(payload) != stored_crc:
        raise ModelFormatError("checksum mismatch; model file is corrupt")
    doc = json.loads(payload.decode("utf-8"))
    return WinProbModel(
        kind=doc["kind"],
        schema=FeatureSchema.from_dict(doc["schema"]),
        params=_params_from_dict(doc["kind"], doc["params"]),
        metadata=doc.get("metadata", {}),
    )
