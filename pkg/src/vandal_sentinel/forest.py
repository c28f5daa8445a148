"""Random forest classifier built from scratch on CART trees.

Bootstrap-resampled trees, weighted Gini splits over a per-node random
feature subset, midpoint thresholds, leaf vote fractions. The tree builder
and predictor are numba kernels driven by a self-contained xorshift64*
generator, so training is bit-deterministic for a given (data, params, seed)
triple on any machine. Rows are canonically sorted before training, which
makes the result independent of input row order as well.

Models serialize to canonical JSON (sorted keys, repr floats), so identical
training runs produce identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .errors import EmptyInput, SchemaMismatch, SingleClass
from .features import FEATURE_NAMES, SCHEMA_VERSION
from .metrics import pr_auc

MODEL_FORMAT = "vs-model-1"

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return (z ^ (z >> 31)) & 0xFFFFFFFFFFFFFFFF


def tree_seed_state(seed: int, tree_index: int) -> int:
    """Initial xorshift64* state for one tree; never zero."""
    state = _splitmix64(_splitmix64(seed & 0xFFFFFFFFFFFFFFFF) ^ (tree_index + 1))
    return state or 0x9E3779B97F4A7C15


@njit(cache=True, inline="always")
def _xorshift_next(state):
    s = state[0]
    s ^= s >> np.uint64(12)
    s ^= (s << np.uint64(25)) & _MASK
    s ^= s >> np.uint64(27)
    state[0] = s
    return (s * np.uint64(2685821657736338717)) & _MASK


@njit(cache=True, inline="always")
def _rand_below(state, n):
    return np.int64(_xorshift_next(state) % np.uint64(n))


@njit(cache=True)
def _build_tree(
    X,
    y,
    w,
    seed_state,
    max_depth,
    min_leaf,
    mtry,
    feature,
    threshold,
    left,
    right,
    leaf_t,
    leaf_f,
):
    """Grow one CART tree on a bootstrap resample of (X, y, w).

    Flat-array tree encoding: feature[i] >= 0 marks an internal node whose
    children are left[i]/right[i]; feature[i] == -1 marks a leaf holding the
    class-weight totals. Returns the node count.
    """
    n = X.shape[0]
    n_features = X.shape[1]
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed_state

    idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        idx[i] = _rand_below(state, n)

    perm = np.arange(n_features)
    vals = np.empty(n, dtype=np.float64)
    tmp_left = np.empty(n, dtype=np.int64)
    tmp_right = np.empty(n, dtype=np.int64)

    cap = feature.shape[0]
    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    node_count = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        m = end - start

        wt_t = 0.0
        wt_f = 0.0
        for i in range(start, end):
            k = idx[i]
            if y[k] == 1:
                wt_t += w[k]
            else:
                wt_f += w[k]
        wt = wt_t + wt_f

        make_leaf = False
        if m < 2 * min_leaf or wt_t == 0.0 or wt_f == 0.0:
            make_leaf = True
        if max_depth >= 0 and depth >= max_depth:
            make_leaf = True

        best_feat = -1
        best_thr = 0.0
        if not make_leaf:
            parent_cost = wt - (wt_t * wt_t + wt_f * wt_f) / wt
            best_cost = parent_cost - 1e-12
            for t in range(mtry):
                swap_at = t + _rand_below(state, n_features - t)
                pj = perm[t]
                perm[t] = perm[swap_at]
                perm[swap_at] = pj
                j = perm[t]
                for i in range(m):
                    vals[i] = X[idx[start + i], j]
                order = np.argsort(vals[:m])
                wl_t = 0.0
                wl_f = 0.0
                for i in range(m - 1):
                    k = idx[start + order[i]]
                    if y[k] == 1:
                        wl_t += w[k]
                    else:
                        wl_f += w[k]
                    a = vals[order[i]]
                    b = vals[order[i + 1]]
                    if a < b:
                        nl = i + 1
                        nr = m - nl
                        if nl >= min_leaf and nr >= min_leaf:
                            wl = wl_t + wl_f
                            wr_t = wt_t - wl_t
                            wr_f = wt_f - wl_f
                            wr = wr_t + wr_f
                            cost = (wl - (wl_t * wl_t + wl_f * wl_f) / wl) + (
                                wr - (wr_t * wr_t + wr_f * wr_f) / wr
                            )
                            if cost < best_cost:
                                best_cost = cost
                                best_feat = j
                                thr = a + (b - a) / 2.0
                                if not thr < b:
                                    thr = a
                                best_thr = thr

        if best_feat < 0:
            feature[node] = -1
            threshold[node] = 0.0
            left[node] = -1
            right[node] = -1
            leaf_t[node] = wt_t
            leaf_f[node] = wt_f
            continue

        p = 0
        q = 0
        for i in range(start, end):
            k = idx[i]
            if X[k, best_feat] <= best_thr:
                tmp_left[p] = k
                p += 1
            else:
                tmp_right[q] = k
                q += 1
        for i in range(p):
            idx[start + i] = tmp_left[i]
        for i in range(q):
            idx[start + p + i] = tmp_right[i]

        left_id = node_count
        right_id = node_count + 1
        node_count += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = left_id
        right[node] = right_id
        leaf_t[node] = 0.0
        leaf_f[node] = 0.0

        stack_node[top] = right_id
        stack_start[top] = start + p
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = left_id
        stack_start[top] = start
        stack_end[top] = start + p
        stack_depth[top] = depth + 1
        top += 1

    return node_count


@njit(cache=True)
def _predict_forest(X, feat, thr, left, right, leaf_t, leaf_f, offsets, out):
    n_trees = offsets.shape[0] - 1
    for r in range(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = base
            while feat[node] >= 0:
                if X[r, feat[node]] <= thr[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            acc += leaf_t[node] / (leaf_t[node] + leaf_f[node])
        out[r] = acc / n_trees


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 80
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    features_per_split: str = "sqrt"  # sqrt | log2 | all
    class_weight: str = "balanced"  # balanced | none
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.features_per_split not in ("sqrt", "log2", "all"):
            raise ValueError(f"bad features_per_split {self.features_per_split!r}")
        if self.class_weight not in ("balanced", "none"):
            raise ValueError(f"bad class_weight {self.class_weight!r}")

    def mtry(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if self.features_per_split == "log2":
            return max(1, int(math.log2(n_features)))
        return n_features

    def to_json_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
            "class_weight": self.class_weight,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ForestParams":
        return cls(**data)


@dataclass(frozen=True)
class Tree:
    feature: tuple
    threshold: tuple
    left: tuple
    right: tuple
    leaf_true: tuple
    leaf_false: tuple

    def __len__(self) -> int:
        return len(self.feature)


@dataclass
class TrainedModel:
    params: ForestParams
    feature_schema_version: str
    group_spec: str
    feature_indices: tuple
    trees: list
    training_summary: dict
    format_version: str = MODEL_FORMAT
    _runtime: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_indices)

    def select(self, X_full: np.ndarray) -> np.ndarray:
        """Slice a full 53-column matrix down to this model's features."""
        if X_full.ndim == 1:
            X_full = X_full.reshape(1, -1)
        if X_full.shape[1] != len(FEATURE_NAMES):
            raise SchemaMismatch(
                f"expected {len(FEATURE_NAMES)} columns, got {X_full.shape[1]}"
            )
        return np.ascontiguousarray(X_full[:, list(self.feature_indices)], dtype=np.float64)

    def runtime(self) -> tuple:
        if self._runtime is None:
            offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
            for i, tree in enumerate(self.trees):
                offsets[i + 1] = offsets[i] + len(tree)
            total = int(offsets[-1])
            feat = np.empty(total, dtype=np.int64)
            thr = np.empty(total, dtype=np.float64)
            left = np.empty(total, dtype=np.int64)
            right = np.empty(total, dtype=np.int64)
            leaf_t = np.empty(total, dtype=np.float64)
            leaf_f = np.empty(total, dtype=np.float64)
            for i, tree in enumerate(self.trees):
                sl = slice(int(offsets[i]), int(offsets[i + 1]))
                feat[sl] = tree.feature
                thr[sl] = tree.threshold
                left[sl] = tree.left
                right[sl] = tree.right
                leaf_t[sl] = tree.leaf_true
                leaf_f[sl] = tree.leaf_false
            object.__setattr__(self, "_runtime", (feat, thr, left, right, leaf_t, leaf_f, offsets))
        return self._runtime

    def to_json_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "feature_schema_version": self.feature_schema_version,
            "group_spec": self.group_spec,
            "feature_indices": list(self.feature_indices),
            "params": self.params.to_json_dict(),
            "training_summary": self.training_summary,
            "trees": [
                {
                    "feature": list(t.feature),
                    "threshold": list(t.threshold),
                    "left": list(t.left),
                    "right": list(t.right),
                    "leaf_true": list(t.leaf_true),
                    "leaf_false": list(t.leaf_false),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainedModel":
        if data.get("format_version") != MODEL_FORMAT:
            raise SchemaMismatch(
                f"model format {data.get('format_version')!r}, expected {MODEL_FORMAT!r}"
            )
        trees = [
            Tree(
                feature=tuple(int(v) for v in t["feature"]),
                threshold=tuple(float(v) for v in t["threshold"]),
                left=tuple(int(v) for v in t["left"]),
                right=tuple(int(v) for v in t["right"]),
                leaf_true=tuple(float(v) for v in t["leaf_true"]),
                leaf_false=tuple(float(v) for v in t["leaf_false"]),
            )
            for t in data["trees"]
        ]
        n_features = len(data["feature_indices"])
        for tree in trees:
            for f in tree.feature:
                if f >= n_features:
                    raise SchemaMismatch(f"tree references feature {f} outside schema")
        return cls(
            params=ForestParams.from_json_dict(data["params"]),
            feature_schema_version=data["feature_schema_version"],
            group_spec=data["group_spec"],
            feature_indices=tuple(int(v) for v in data["feature_indices"]),
            trees=trees,
            training_summary=data["training_summary"],
        )

    def save(self, path) -> None:
        Path(path).write_text(serialize_model(self), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def serialize_model(model: TrainedModel) -> str:
    return json.dumps(model.to_json_dict(), sort_keys=True, separators=(",", ":"))


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = [y.astype(np.float64)]
    for j in range(X.shape[1] - 1, -1, -1):
        keys.append(X[:, j])
    # lexsort's last key is primary, so column 0 dominates, labels break ties
    return np.lexsort(tuple(keys))


def train(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    group_spec: str = "all",
    feature_indices: Optional[Sequence[int]] = None,
) -> TrainedModel:
    """Fit a forest. X is the already-sliced matrix for the chosen groups;
    feature_indices maps its columns back to the full schema for bookkeeping."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y).astype(np.int8).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X {X.shape} does not line up with y {y.shape}")
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("no training rows")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == n:
        raise SingleClass("training data holds a single class")
    if feature_indices is None:
        feature_indices = tuple(range(X.shape[1]))
    feature_indices = tuple(int(i) for i in feature_indices)
    if len(feature_indices) != X.shape[1]:
        raise SchemaMismatch(
            f"{X.shape[1]} matrix columns but {len(feature_indices)} feature indices"
        )

    order = _canonical_order(X, y)
    X = np.ascontiguousarray(X[order])
    y = np.ascontiguousarray(y[order])

    if params.class_weight == "balanced":
        w_pos = n / (2.0 * n_pos)
        w_neg = n / (2.0 * (n - n_pos))
    else:
        w_pos = w_neg = 1.0
    w = np.where(y == 1, w_pos, w_neg).astype(np.float64)

    mtry = params.mtry(X.shape[1])
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    cap = 2 * n + 2
    feat_buf = np.empty(cap, dtype=np.int64)
    thr_buf = np.empty(cap, dtype=np.float64)
    left_buf = np.empty(cap, dtype=np.int64)
    right_buf = np.empty(cap, dtype=np.int64)
    lt_buf = np.empty(cap, dtype=np.float64)
    lf_buf = np.empty(cap, dtype=np.float64)

    trees = []
    for t in range(params.n_trees):
        state = tree_seed_state(params.seed, t)
        count = _build_tree(
            X,
            y,
            w,
            np.uint64(state),
            max_depth,
            params.min_samples_leaf,
            mtry,
            feat_buf,
            thr_buf,
            left_buf,
            right_buf,
            lt_buf,
            lf_buf,
        )
        trees.append(
            Tree(
                feature=tuple(int(v) for v in feat_buf[:count]),
                threshold=tuple(float(v) for v in thr_buf[:count]),
                left=tuple(int(v) for v in left_buf[:count]),
                right=tuple(int(v) for v in right_buf[:count]),
                leaf_true=tuple(float(v) for v in lt_buf[:count]),
                leaf_false=tuple(float(v) for v in lf_buf[:count]),
            )
        )

    summary = {
        "n": n,
        "n_positive": n_pos,
        "prevalence": n_pos / n,
        "groups": group_spec,
    }
    return TrainedModel(
        params=params,
        feature_schema_version=SCHEMA_VERSION,
        group_spec=group_spec,
        feature_indices=feature_indices,
        trees=trees,
        training_summary=summary,
    )


def predict_proba(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Probability of the true (vandalism) class, one value per row.

    X must already be sliced to the model's feature set (model.select does
    this from full-width vectors).
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise SchemaMismatch(
            f"model expects {model.n_features} features, got {X.shape[1]}"
        )
    feat, thr, left, right, leaf_t, leaf_f, offsets = model.runtime()
    out = np.empty(X.shape[0], dtype=np.float64)
    _predict_forest(np.ascontiguousarray(X), feat, thr, left, right, leaf_t, leaf_f, offsets, out)
    return out


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

def stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Per-row fold ids, classes distributed evenly, deterministic per seed."""
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.shape[0], dtype=np.int64)
    for cls in (0, 1):
        rows = np.flatnonzero(y == cls)
        rows = rows[rng.permutation(rows.shape[0])]
        for i, row in enumerate(rows):
            fold_of[row] = i % folds
    return fold_of


def grid_search(
    X: np.ndarray,
    y: np.ndarray,
    grid: Sequence[ForestParams],
    folds: int = 5,
    seed: int = 0,
) -> tuple[ForestParams, list[dict]]:
    """Stratified k-fold CV over the grid, objective PR-AUC, argmax mean.

    Ties break toward fewer trees, then shallower depth, then grid order.
    Single-class folds are skipped and recorded.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if not grid:
        raise ValueError("empty parameter grid")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int8).ravel()

    fold_of = stratified_folds(y, folds, seed)
    report: list[dict] = []
    means: list[tuple] = []
    for cell_index, params in enumerate(grid):
        scores = []
        for f in range(folds):
            train_rows = fold_of != f
            val_rows = ~train_rows
            row = {"params": params.to_json_dict(), "fold": f}
            y_train, y_val = y[train_rows], y[val_rows]
            if len(set(y_train.tolist())) < 2 or len(set(y_val.tolist())) < 2:
                row["skipped"] = "single-class fold"
                report.append(row)
                continue
            model = train(X[train_rows], y_train, params)
            probs = predict_proba(model, X[val_rows])
            score = pr_auc(list(zip(probs.tolist(), (y_val == 1).tolist())))
            row["pr_auc"] = score
            report.append(row)
            scores.append(score)
        mean_score = sum(scores) / len(scores) if scores else float("-inf")
        depth_rank = params.max_depth if params.max_depth is not None else float("inf")
        means.append((-mean_score, params.n_trees, depth_rank, cell_index))
    means.sort()
    best = grid[means[0][3]]
    return best, report
