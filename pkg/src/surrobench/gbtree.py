"""Regression trees, squared-error gradient boosting and bagged forests.

One histogram-based engine grows all trees.  Boosting fits each round's tree
to the residuals y - F(x) with unit per-sample hessian, so a leaf's value is
the soft-thresholded residual sum sign(G) * max(|G| - alpha, 0) / (H + lambda)
and the split gain is the corresponding score difference.  Growth is
depth-wise (FIFO over open nodes) and bounded by both ``max_depth`` and
``max_leaves``, which covers the depth-bounded and leaf-bounded booster
profiles with a single implementation.  Candidate thresholds come from
quantile binning computed once per fit; when a feature has at most
``max_bin`` distinct values the thresholds are exactly the midpoints between
consecutive distinct values, which makes the split finder match an
exhaustive split-gain search.

A bagged forest reuses the same engine with unregularized mean leaves,
per-split feature subsampling and averaged tree outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


class GBTreeError(ValueError):
    pass


class EmptyData(GBTreeError):
    pass


class NonFiniteInput(GBTreeError):
    pass


class LayoutMismatch(GBTreeError):
    pass


@dataclass(frozen=True)
class BoostParams:
    """Boosting hyperparameters; defaults follow the tuned leaf-bounded profile."""

    n_rounds: int = 2000
    learning_rate: float = 0.0218
    max_depth: int = 18
    max_leaves: int = 40
    max_bin: int = 336
    feature_fraction: float = 0.1532
    min_child_weight: float = 0.5822
    lambda_l1: float = 0.0115
    lambda_l2: float = 134.5075
    early_stopping_rounds: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.learning_rate <= 1.0):
            raise GBTreeError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_depth < 1:
            raise GBTreeError(f"max_depth must be >= 1, got {self.max_depth}")
        if not (0.0 < self.feature_fraction <= 1.0):
            raise GBTreeError(
                f"feature_fraction must be in (0, 1], got {self.feature_fraction}"
            )
        if self.max_leaves < 2:
            raise GBTreeError(f"max_leaves must be >= 2, got {self.max_leaves}")
        if self.max_bin < 2:
            raise GBTreeError(f"max_bin must be >= 2, got {self.max_bin}")


def lgb_profile(**overrides) -> BoostParams:
    """Leaf-bounded booster defaults (the best-performing tuned profile)."""
    return replace(BoostParams(), **overrides)


def xgb_profile(**overrides) -> BoostParams:
    """Depth-bounded booster defaults.

    Per-level column sampling is collapsed into the per-tree fraction.
    """
    base = BoostParams(
        learning_rate=0.00824,
        max_depth=13,
        max_leaves=2**13,
        max_bin=256,
        feature_fraction=0.2545,
        min_child_weight=39.0,
        lambda_l1=0.2417,
        lambda_l2=31.3933,
    )
    return replace(base, **overrides)


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 116
    max_features: float = 0.1706
    min_samples_split: int = 2
    min_samples_leaf: int = 2
    bootstrap: bool = False
    max_depth: int | None = None
    seed: int = 0


@dataclass(frozen=True)
class TreeNode:
    """Nested tree view: a split (feature_index, threshold, children) or a leaf."""

    feature: int
    threshold: float
    left: "TreeNode | None"
    right: "TreeNode | None"
    value: float

    @classmethod
    def make_leaf(cls, value: float) -> "TreeNode":
        return cls(-1, 0.0, None, None, float(value))

    @classmethod
    def make_split(
        cls, feature: int, threshold: float, left: "TreeNode", right: "TreeNode"
    ) -> "TreeNode":
        return cls(int(feature), float(threshold), left, right, 0.0)

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


class Tree:
    """Flat array representation of one regression tree (root at index 0).

    Rows with ``feature`` >= 0 are splits (x[feature] <= threshold goes left);
    rows with ``feature`` == -1 are leaves carrying ``value``.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @classmethod
    def from_node(cls, root: TreeNode) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def emit(node: TreeNode) -> int:
            idx = len(feature)
            feature.append(node.feature)
            threshold.append(node.threshold)
            left.append(-1)
            right.append(-1)
            value.append(node.value)
            if not node.is_leaf:
                left[idx] = emit(node.left)
                right[idx] = emit(node.right)
            return idx

        emit(root)
        return cls(feature, threshold, left, right, value)

    def to_node(self, idx: int = 0) -> TreeNode:
        if self.feature[idx] < 0:
            return TreeNode.make_leaf(float(self.value[idx]))
        return TreeNode.make_split(
            int(self.feature[idx]),
            float(self.threshold[idx]),
            self.to_node(int(self.left[idx])),
            self.to_node(int(self.right[idx])),
        )

    def to_obj(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Tree":
        return cls(obj["feature"], obj["threshold"], obj["left"], obj["right"], obj["value"])


class TreeEnsemble:
    """Additive tree model: prediction = base_score + shrinkage * sum of trees.

    Boosted models use shrinkage = learning rate; bagged forests use
    base_score 0 and shrinkage 1 / n_trees, which reduces averaging to the
    same formula.  Instances are immutable and safe to query concurrently.
    """

    def __init__(
        self,
        base_score: float,
        trees: Sequence[Tree],
        shrinkage: float,
        n_features: int,
        feature_layout_version: str = "",
    ):
        self.base_score = float(base_score)
        self.trees = tuple(trees)
        self.shrinkage = float(shrinkage)
        self.n_features = int(n_features)
        self.feature_layout_version = feature_layout_version
        self.train_curve: np.ndarray | None = None
        self.val_curve: np.ndarray | None = None
        self.best_round: int | None = None
        self._stacked: tuple | None = None

    def _stack(self) -> tuple:
        if self._stacked is None:
            if not self.trees:
                self._stacked = ()
            else:
                sizes = [t.n_nodes for t in self.trees]
                offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.int32)
                feature = np.concatenate([t.feature for t in self.trees])
                threshold = np.concatenate([t.threshold for t in self.trees])
                left = np.concatenate(
                    [t.left + off for t, off in zip(self.trees, offsets)]
                ).astype(np.int32)
                right = np.concatenate(
                    [t.right + off for t, off in zip(self.trees, offsets)]
                ).astype(np.int32)
                value = np.concatenate([t.value for t in self.trees])
                self._stacked = (feature, threshold, left, right, value, offsets)
        return self._stacked

    def predict(self, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Deterministic predictions for a feature matrix of matching width."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise LayoutMismatch(
                f"model expects {self.n_features} features, got {X.shape[1]}"
            )
        n = X.shape[0]
        out = np.full(n, self.base_score, dtype=np.float64)
        if not self.trees:
            return out
        feature, threshold, left, right, value, roots = self._stack()
        for lo in range(0, n, chunk):
            Xc = X[lo : lo + chunk]
            m = Xc.shape[0]
            node = np.broadcast_to(roots, (m, roots.size)).copy()
            rows = np.arange(m)[:, None]
            while True:
                f = feature[node]
                split = f >= 0
                if not split.any():
                    break
                xv = Xc[rows, np.where(split, f, 0)]
                go_left = xv <= threshold[node]
                nxt = np.where(go_left, left[node], right[node])
                node = np.where(split, nxt, node)
            out[lo : lo + m] += self.shrinkage * value[node].sum(axis=1)
        return out

    def to_obj(self) -> dict:
        return {
            "base_score": self.base_score,
            "shrinkage": self.shrinkage,
            "n_features": self.n_features,
            "feature_layout_version": self.feature_layout_version,
            "trees": [t.to_obj() for t in self.trees],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "TreeEnsemble":
        return cls(
            base_score=obj["base_score"],
            trees=[Tree.from_obj(t) for t in obj["trees"]],
            shrinkage=obj["shrinkage"],
            n_features=obj["n_features"],
            feature_layout_version=obj.get("feature_layout_version", ""),
        )


# --- fitting ------------------------------------------------------------------


def _check_matrix(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise GBTreeError(f"X must be 2-d, got shape {X.shape}")
    if X.shape[0] != y.size:
        raise GBTreeError(f"X has {X.shape[0]} rows but y has {y.size}")
    if X.shape[0] < 2:
        raise EmptyData("need at least 2 training rows")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise NonFiniteInput("X and y must be finite")
    return X, y


class _Binned:
    """Per-feature candidate thresholds and the binned training matrix."""

    def __init__(self, X: np.ndarray, max_bin: int):
        n, d = X.shape
        self.thresholds: list[np.ndarray] = []
        self.bins = np.empty((n, d), dtype=np.int32)
        for j in range(d):
            col = X[:, j]
            uniq = np.unique(col)
            if uniq.size <= 1:
                thr = np.empty(0, dtype=np.float64)
            elif uniq.size <= max_bin:
                thr = (uniq[:-1] + uniq[1:]) / 2.0
            else:
                qs = np.quantile(col, np.linspace(0.0, 1.0, max_bin + 1)[1:-1])
                thr = np.unique(qs)
            self.thresholds.append(thr)
            self.bins[:, j] = np.searchsorted(thr, col, side="left")
        self.n_bins = np.array([t.size + 1 for t in self.thresholds], dtype=np.int64)


def _soft(g: np.ndarray | float, alpha: float):
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


def _score(g, h, alpha: float, lam: float):
    return _soft(g, alpha) ** 2 / (h + lam)


def _best_split(
    binned: _Binned,
    rows: np.ndarray,
    grad: np.ndarray,
    feats: np.ndarray,
    alpha: float,
    lam: float,
    min_child_weight: float,
    min_samples_leaf: int,
) -> tuple[int, float, int] | None:
    """Best (feature, threshold, split_bin) by soft-thresholded gain.

    Gains are evaluated for every candidate boundary of every feature at
    once (positions ordered feature-ascending, threshold-ascending) and the
    first maximizer wins, so ties resolve to the lowest (feature, threshold).
    """
    g_tot = float(grad[rows].sum())
    h_tot = float(rows.size)
    parent = float(_score(g_tot, h_tot, alpha, lam))

    n_bins = binned.n_bins[feats]
    offsets = np.concatenate(([0], np.cumsum(n_bins)[:-1]))
    total = int(n_bins.sum())
    sub = binned.bins[np.ix_(rows, feats)]
    flat = (sub + offsets[None, :]).ravel()
    hist_g = np.bincount(flat, weights=np.repeat(grad[rows], feats.size), minlength=total)
    hist_h = np.bincount(flat, minlength=total)

    # cumulative-within-segment left sums at every position
    cg = np.cumsum(hist_g)
    ch = np.cumsum(hist_h)
    base_g = np.where(offsets > 0, cg[offsets - 1], 0.0)
    base_h = np.where(offsets > 0, ch[offsets - 1], 0.0)
    left_g = cg - np.repeat(base_g, n_bins)
    left_h = ch - np.repeat(base_h, n_bins)

    # the last bin of each segment is not a boundary
    boundary = np.ones(total, dtype=bool)
    boundary[offsets + n_bins - 1] = False
    right_h = h_tot - left_h
    min_h = max(min_child_weight, float(min_samples_leaf))
    ok = boundary & (left_h >= min_h) & (right_h >= min_h)
    if not ok.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = np.where(
            ok,
            _score(left_g, left_h, alpha, lam)
            + _score(g_tot - left_g, right_h, alpha, lam)
            - parent,
            -np.inf,
        )
    pos = int(np.argmax(gains))
    if gains[pos] <= 0.0:
        return None
    fi = int(np.searchsorted(offsets, pos, side="right")) - 1
    b = pos - int(offsets[fi])
    f = int(feats[fi])
    return f, float(binned.thresholds[f][b]), b


def _grow_tree(
    binned: _Binned,
    rows: np.ndarray,
    grad: np.ndarray,
    *,
    alpha: float,
    lam: float,
    max_depth: int,
    max_leaves: int,
    min_child_weight: float,
    min_samples_split: int,
    min_samples_leaf: int,
    feats: np.ndarray | None,
    per_split_k: int | None,
    rng: np.random.Generator,
    train_delta: np.ndarray,
) -> Tree:
    """Grow one tree depth-wise (FIFO) and write its leaf values for the
    training rows into ``train_delta``."""
    d = binned.bins.shape[1]
    feature = [np.int32(-1)]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]
    queue: list[tuple[int, np.ndarray, int]] = [(0, rows, 0)]
    n_leaves = 1

    def finalize(idx: int, node_rows: np.ndarray) -> None:
        g = float(grad[node_rows].sum())
        h = float(node_rows.size)
        v = float(_soft(g, alpha) / (h + lam))
        value[idx] = v
        train_delta[node_rows] += v

    while queue:
        idx, node_rows, depth_ = queue.pop(0)
        can_split = (
            depth_ < max_depth
            and n_leaves < max_leaves
            and node_rows.size >= max(2, min_samples_split)
        )
        split = None
        if can_split:
            node_feats = feats
            if per_split_k is not None:
                node_feats = np.sort(rng.choice(d, size=per_split_k, replace=False))
            split = _best_split(
                binned,
                node_rows,
                grad,
                node_feats,
                alpha,
                lam,
                min_child_weight,
                min_samples_leaf,
            )
        if split is None:
            finalize(idx, node_rows)
            continue
        f, thr, split_bin = split
        mask = binned.bins[node_rows, f] <= split_bin
        left_rows, right_rows = node_rows[mask], node_rows[~mask]
        feature[idx] = np.int32(f)
        threshold[idx] = thr
        li, ri = len(feature), len(feature) + 1
        left[idx], right[idx] = li, ri
        for _ in range(2):
            feature.append(np.int32(-1))
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
        n_leaves += 1
        queue.append((li, left_rows, depth_ + 1))
        queue.append((ri, right_rows, depth_ + 1))
    return Tree(feature, threshold, left, right, value)


def fit_boosted(
    X,
    y,
    X_val=None,
    y_val=None,
    params: BoostParams = BoostParams(),
    feature_layout_version: str = "",
) -> TreeEnsemble:
    """Squared-error gradient boosting with optional early stopping.

    When a validation set is given, training stops once the validation loss
    has not improved for ``early_stopping_rounds`` rounds and the returned
    ensemble is the prefix up to the best round (possibly no trees at all).
    """
    X, y = _check_matrix(X, y)
    use_val = X_val is not None
    if use_val:
        X_val = np.asarray(X_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.float64).ravel()
        if not np.isfinite(X_val).all() or not np.isfinite(y_val).all():
            raise NonFiniteInput("validation data must be finite")
        if X_val.shape[1] != X.shape[1]:
            raise LayoutMismatch("validation feature width differs from training")

    n, d = X.shape
    rng = np.random.default_rng(params.seed)
    binned = _Binned(X, params.max_bin)
    base = float(y.mean())
    pred = np.full(n, base)
    eta = params.learning_rate
    k_feats = max(1, round(params.feature_fraction * d))

    trees: list[Tree] = []
    train_curve: list[float] = []
    val_curve: list[float] = []
    if use_val:
        val_pred = np.full(y_val.size, base)
        best_loss = float(np.mean((y_val - val_pred) ** 2))
        val_curve.append(best_loss)
    best_round = 0

    all_rows = np.arange(n, dtype=np.int64)
    for t in range(params.n_rounds):
        grad = y - pred
        feats = np.sort(rng.choice(d, size=k_feats, replace=False))
        delta = np.zeros(n)
        tree = _grow_tree(
            binned,
            all_rows,
            grad,
            alpha=params.lambda_l1,
            lam=params.lambda_l2,
            max_depth=params.max_depth,
            max_leaves=params.max_leaves,
            min_child_weight=params.min_child_weight,
            min_samples_split=2,
            min_samples_leaf=1,
            feats=feats,
            per_split_k=None,
            rng=rng,
            train_delta=delta,
        )
        trees.append(tree)
        pred += eta * delta
        train_curve.append(float(np.mean((y - pred) ** 2)))
        if use_val:
            single = TreeEnsemble(0.0, [tree], 1.0, d)
            val_pred = val_pred + eta * single.predict(X_val)
            loss = float(np.mean((y_val - val_pred) ** 2))
            val_curve.append(loss)
            if loss < best_loss:
                best_loss = loss
                best_round = t + 1
            elif (t + 1) - best_round >= params.early_stopping_rounds:
                break
    if use_val:
        trees = trees[:best_round]
    ens = TreeEnsemble(base, trees, eta, d, feature_layout_version)
    ens.train_curve = np.array(train_curve)
    ens.val_curve = np.array(val_curve) if use_val else None
    ens.best_round = best_round if use_val else len(trees)
    return ens


def fit_forest(
    X,
    y,
    params: ForestParams = ForestParams(),
    feature_layout_version: str = "",
) -> TreeEnsemble:
    """Bagged variance-reduction trees averaged into one ensemble."""
    X, y = _check_matrix(X, y)
    n, d = X.shape
    rng = np.random.default_rng(params.seed)
    binned = _Binned(X, max_bin=max(2, n))
    k = max(1, round(params.max_features * d))
    max_depth = params.max_depth if params.max_depth is not None else n
    trees = []
    for _ in range(params.n_estimators):
        if params.bootstrap:
            rows = np.sort(rng.integers(0, n, size=n)).astype(np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        delta = np.zeros(n)
        trees.append(
            _grow_tree(
                binned,
                rows,
                y,
                alpha=0.0,
                lam=0.0,
                max_depth=max_depth,
                max_leaves=2 * n,
                min_child_weight=0.0,
                min_samples_split=params.min_samples_split,
                min_samples_leaf=params.min_samples_leaf,
                feats=None,
                per_split_k=k,
                rng=rng,
                train_delta=delta,
            )
        )
    return TreeEnsemble(0.0, trees, 1.0 / params.n_estimators, d, feature_layout_version)
