"""Histogram-based gradient boosted trees on the logistic log-loss objective.

Depth-limited regression trees are fit to first/second-order gradients of
the log loss; split candidates come from per-feature histograms (quantile
bins for numeric features, native category bins for categorical ones).
Split selection is a deterministic reduction with fixed tie-breaking:
lowest feature index first, then lowest threshold, so results do not
depend on evaluation order. Categorical splits sort categories by their
gradient/hessian ratio and scan prefix subsets, which is optimal for
second-order boosting with a single output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LAMBDA_REG = 1.0  # L2 regularization on leaf weights
MIN_GAIN = 1e-12


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 100
    max_depth: int = 8
    min_child_weight: float = 1.0
    learning_rate: float = 0.1
    n_histogram_bins: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        if not 1 <= self.max_depth <= 16:
            raise ValueError("max_depth must be in 1..16")
        if self.min_child_weight <= 0:
            raise ValueError("min_child_weight must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 2 <= self.n_histogram_bins <= 512:
            raise ValueError("n_histogram_bins must be in 2..512")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_child_weight": self.min_child_weight,
            "learning_rate": self.learning_rate,
            "n_histogram_bins": self.n_histogram_bins,
            "seed": self.seed,
        }


@dataclass
class Binner:
    """Maps raw feature columns to small integer bin codes.

    Numeric features use quantile-derived edges (value goes left when its
    bin code <= the split bin). Categorical features use their category
    code directly; codes outside the training vocabulary map to a
    reserved overflow bin that never joins a left subset.
    """

    edges: list[Optional[np.ndarray]]  # None for categorical features
    n_bins: np.ndarray                 # bins per feature
    is_categorical: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, is_categorical: Sequence[bool], n_bins: int) -> "Binner":
        n_features = x.shape[1]
        edges: list[Optional[np.ndarray]] = []
        bins = np.zeros(n_features, dtype=np.int64)
        cat = np.asarray(is_categorical, dtype=bool)
        for j in range(n_features):
            col = x[:, j]
            if cat[j]:
                edges.append(None)
                bins[j] = int(col.max()) + 2 if len(col) else 1  # +1 overflow bin
                continue
            uniq = np.unique(col)
            if len(uniq) <= 1:
                edges.append(np.empty(0, dtype=np.float64))
                bins[j] = 1
                continue
            if len(uniq) <= n_bins:
                cut = (uniq[1:] + uniq[:-1]) / 2.0
            else:
                qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
                cut = np.unique(np.quantile(col, qs))
            edges.append(cut)
            bins[j] = len(cut) + 1
        return cls(edges=edges, n_bins=bins, is_categorical=cat)

    def transform(self, x: np.ndarray) -> np.ndarray:
        n, f = x.shape
        codes = np.empty((n, f), dtype=np.int32)
        for j in range(f):
            col = x[:, j]
            if self.is_categorical[j]:
                c = col.astype(np.int64)
                overflow = self.n_bins[j] - 1
                c = np.where((c < 0) | (c >= overflow), overflow, c)
                codes[:, j] = c
            elif len(self.edges[j]) == 0:
                codes[:, j] = 0
            else:
                codes[:, j] = np.searchsorted(self.edges[j], col, side="left")
        return codes

    def to_dict(self) -> dict:
        return {
            "edges": [None if e is None else e.tolist() for e in self.edges],
            "n_bins": self.n_bins.tolist(),
            "is_categorical": self.is_categorical.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Binner":
        return cls(
            edges=[None if e is None else np.asarray(e, dtype=np.float64)
                   for e in doc["edges"]],
            n_bins=np.asarray(doc["n_bins"], dtype=np.int64),
            is_categorical=np.asarray(doc["is_categorical"], dtype=bool),
        )


@dataclass
class Tree:
    """Array-of-nodes tree over binned features.

    For numeric splits a row goes left when its bin code <= threshold_bin.
    For categorical splits it goes left when its category code is in the
    node's left set; unseen categories go right.
    """

    feature: np.ndarray        # int32, -1 at leaves
    threshold_bin: np.ndarray  # int32, numeric splits only
    cat_left: list[Optional[np.ndarray]]  # sorted category codes going left
    left: np.ndarray           # int32 child indices, -1 at leaves
    right: np.ndarray
    value: np.ndarray          # float64 leaf values (already rate-scaled)

    def predict_codes(self, codes: np.ndarray, is_categorical: np.ndarray) -> np.ndarray:
        n = codes.shape[0]
        node = np.zeros(n, dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            idx = np.flatnonzero(active)
            nf = feat[idx]
            nn = node[idx]
            vals = codes[idx, nf]
            go_left = np.zeros(len(idx), dtype=bool)
            numeric = ~is_categorical[nf]
            go_left[numeric] = vals[numeric] <= self.threshold_bin[nn[numeric]]
            cat_idx = np.flatnonzero(~numeric)
            if len(cat_idx):
                cat_nodes = nn[cat_idx]
                for nd in np.unique(cat_nodes):
                    members = self.cat_left[nd]
                    sel = cat_idx[cat_nodes == nd]
                    if members is not None:
                        go_left[sel] = np.isin(vals[sel], members)
            node[idx] = np.where(go_left, self.left[nn], self.right[nn])
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold_bin": self.threshold_bin.tolist(),
            "cat_left": [None if c is None else c.tolist() for c in self.cat_left],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int32),
            threshold_bin=np.asarray(doc["threshold_bin"], dtype=np.int32),
            cat_left=[None if c is None else np.asarray(c, dtype=np.int64)
                      for c in doc["cat_left"]],
            left=np.asarray(doc["left"], dtype=np.int32),
            right=np.asarray(doc["right"], dtype=np.int32),
            value=np.asarray(doc["value"], dtype=np.float64),
        )


@dataclass
class GbtModel:
    config: GbtConfig
    binner: Binner
    base_score: float          # log-odds prior
    trees: list[Tree] = field(default_factory=list)
    total_gain: Optional[np.ndarray] = None  # per-feature split gain
    train_loss_curve: Optional[list[float]] = None

    def raw_scores(self, x: np.ndarray) -> np.ndarray:
        codes = self.binner.transform(x)
        scores = np.full(x.shape[0], self.base_score, dtype=np.float64)
        cat = self.binner.is_categorical
        for tree in self.trees:
            scores += tree.predict_codes(codes, cat)
        return scores

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.raw_scores(x))

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "binner": self.binner.to_dict(),
            "base_score": self.base_score,
            "trees": [t.to_dict() for t in self.trees],
            "total_gain": None if self.total_gain is None else self.total_gain.tolist(),
            "train_loss_curve": self.train_loss_curve,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbtModel":
        return cls(
            config=GbtConfig(**doc["config"]),
            binner=Binner.from_dict(doc["binner"]),
            base_score=float(doc["base_score"]),
            trees=[Tree.from_dict(t) for t in doc["trees"]],
            total_gain=None if doc["total_gain"] is None
            else np.asarray(doc["total_gain"], dtype=np.float64),
            train_loss_curve=doc.get("train_loss_curve"),
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _TreeBuilder:
    """Grows one tree depth-first with histogram split finding.

    The sibling histogram is obtained by subtracting the smaller child's
    histogram from the parent's, halving histogram work per level.
    """

    def __init__(self, codes: np.ndarray, offsets: np.ndarray, total_bins: int,
                 per_feature_bins: np.ndarray, is_categorical: np.ndarray,
                 grad: np.ndarray, hess: np.ndarray, config: GbtConfig,
                 gain_accumulator: np.ndarray):
        self.codes = codes              # (n, f) int32, already offset per feature
        self.offsets = offsets
        self.total_bins = total_bins
        self.bins = per_feature_bins
        self.is_cat = is_categorical
        self.grad = grad
        self.hess = hess
        self.cfg = config
        self.gain_acc = gain_accumulator
        self.n_features = codes.shape[1]

        self.feature: list[int] = []
        self.threshold: list[int] = []
        self.cat_left: list[Optional[np.ndarray]] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.leaf_rows: list[tuple[int, np.ndarray]] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(-1)
        self.cat_left.append(None)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _histogram(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat = self.codes[rows].ravel()
        hg = np.bincount(flat, weights=np.repeat(self.grad[rows], self.n_features),
                         minlength=self.total_bins)
        hh = np.bincount(flat, weights=np.repeat(self.hess[rows], self.n_features),
                         minlength=self.total_bins)
        return hg, hh

    def build(self, rows: np.ndarray) -> int:
        hg, hh = self._histogram(rows)
        return self._grow(rows, hg, hh, depth=0)

    def _grow(self, rows: np.ndarray, hg: np.ndarray, hh: np.ndarray, depth: int) -> int:
        node = self._new_node()
        g_sum = float(self.grad[rows].sum())
        h_sum = float(self.hess[rows].sum())

        split = None
        if depth < self.cfg.max_depth and len(rows) >= 2:
            split = self._best_split(hg, hh, g_sum, h_sum)

        if split is None:
            self.value[node] = -self.cfg.learning_rate * g_sum / (h_sum + LAMBDA_REG)
            self.leaf_rows.append((node, rows))
            return node

        feat, thr_bin, left_cats, gain = split
        col = self.codes[rows, feat] - self.offsets[feat]
        if left_cats is None:
            mask = col <= thr_bin
        else:
            mask = np.isin(col, left_cats, assume_unique=False)
        rows_l = rows[mask]
        rows_r = rows[~mask]
        if len(rows_l) == 0 or len(rows_r) == 0:
            self.value[node] = -self.cfg.learning_rate * g_sum / (h_sum + LAMBDA_REG)
            self.leaf_rows.append((node, rows))
            return node

        self.gain_acc[feat] += gain
        self.feature[node] = feat
        if left_cats is None:
            self.threshold[node] = thr_bin
        else:
            self.cat_left[node] = left_cats

        # Histogram subtraction: compute the smaller child, derive the other.
        if len(rows_l) <= len(rows_r):
            hg_l, hh_l = self._histogram(rows_l)
            hg_r, hh_r = hg - hg_l, hh - hh_l
        else:
            hg_r, hh_r = self._histogram(rows_r)
            hg_l, hh_l = hg - hg_r, hh - hh_r

        self.left[node] = self._grow(rows_l, hg_l, hh_l, depth + 1)
        self.right[node] = self._grow(rows_r, hg_r, hh_r, depth + 1)
        return node

    def _best_split(self, hg: np.ndarray, hh: np.ndarray, g_sum: float, h_sum: float):
        best = None  # (gain, feature, threshold_bin, left_cats)
        parent = g_sum * g_sum / (h_sum + LAMBDA_REG)
        mcw = self.cfg.min_child_weight
        for j in range(self.n_features):
            lo = self.offsets[j]
            nb = self.bins[j]
            if nb < 2:
                continue
            g = hg[lo:lo + nb]
            h = hh[lo:lo + nb]
            if self.is_cat[j]:
                cand = self._best_categorical(g, h, g_sum, h_sum, parent, mcw)
            else:
                cand = self._best_numeric(g, h, g_sum, h_sum, parent, mcw)
            if cand is None:
                continue
            gain, thr_bin, left_cats = cand
            # Strict comparison keeps the lowest feature index on ties.
            if best is None or gain > best[0] + MIN_GAIN:
                best = (gain, j, thr_bin, left_cats)
        if best is None or best[0] <= MIN_GAIN:
            return None
        gain, j, thr_bin, left_cats = best
        return j, thr_bin, left_cats, gain

    @staticmethod
    def _best_numeric(g, h, g_sum, h_sum, parent, mcw):
        gl = np.cumsum(g)[:-1]
        hl = np.cumsum(h)[:-1]
        gr = g_sum - gl
        hr = h_sum - hl
        valid = (hl >= mcw) & (hr >= mcw)
        if not valid.any():
            return None
        gain = gl * gl / (hl + LAMBDA_REG) + gr * gr / (hr + LAMBDA_REG) - parent
        gain[~valid] = -np.inf
        k = int(np.argmax(gain))  # argmax returns the first (lowest) bin on ties
        if not np.isfinite(gain[k]):
            return None
        return float(gain[k]), k, None

    @staticmethod
    def _best_categorical(g, h, g_sum, h_sum, parent, mcw):
        present = np.flatnonzero(h > 0)
        if len(present) < 2:
            return None
        ratio = g[present] / (h[present] + LAMBDA_REG)
        order = np.lexsort((present, ratio))  # deterministic: ratio, then code
        cats = present[order]
        gl = np.cumsum(g[cats])[:-1]
        hl = np.cumsum(h[cats])[:-1]
        gr = g_sum - gl
        hr = h_sum - hl
        valid = (hl >= mcw) & (hr >= mcw)
        if not valid.any():
            return None
        gain = gl * gl / (hl + LAMBDA_REG) + gr * gr / (hr + LAMBDA_REG) - parent
        gain[~valid] = -np.inf
        k = int(np.argmax(gain))
        if not np.isfinite(gain[k]):
            return None
        left_cats = np.sort(cats[:k + 1]).astype(np.int64)
        return float(gain[k]), -1, left_cats

    def finish(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold_bin=np.asarray(self.threshold, dtype=np.int32),
            cat_left=self.cat_left,
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )


def fit_gbt(x: np.ndarray, y: np.ndarray, is_categorical: Sequence[bool],
            config: GbtConfig) -> GbtModel:
    """Fit the boosted ensemble. Deterministic for fixed inputs and config."""
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty matrix")
    y = np.asarray(y, dtype=np.float64)
    if y.min() == y.max():
        raise ValueError("degenerate labels: only one class present")

    binner = Binner.fit(x, is_categorical, config.n_histogram_bins)
    codes = binner.transform(x)
    offsets = np.concatenate(([0], np.cumsum(binner.n_bins)[:-1])).astype(np.int32)
    total_bins = int(binner.n_bins.sum())
    codes_off = codes + offsets[np.newaxis, :]

    p_bar = float(y.mean())
    base = float(np.log(p_bar / (1.0 - p_bar)))
    scores = np.full(n, base, dtype=np.float64)
    gain_acc = np.zeros(x.shape[1], dtype=np.float64)
    all_rows = np.arange(n, dtype=np.int64)

    trees: list[Tree] = []
    loss_curve: list[float] = []
    for _ in range(config.n_trees):
        p = _sigmoid(scores)
        grad = p - y
        hess = p * (1.0 - p)
        builder = _TreeBuilder(codes_off, offsets, total_bins, binner.n_bins,
                               binner.is_categorical, grad, hess, config, gain_acc)
        builder.build(all_rows)
        tree = builder.finish()
        trees.append(tree)
        for node, rows in builder.leaf_rows:
            scores[rows] += tree.value[node]
        clamped = np.clip(_sigmoid(scores), 1e-12, 1 - 1e-12)
        loss_curve.append(float(-np.mean(y * np.log(clamped)
                                         + (1 - y) * np.log1p(-clamped))))

    return GbtModel(config=config, binner=binner, base_score=base, trees=trees,
                    total_gain=gain_acc, train_loss_curve=loss_curve)
