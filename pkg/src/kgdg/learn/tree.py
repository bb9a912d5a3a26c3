"""Decision trees used by the boosting and forest learners.

Split search is an exact scan over sorted unique feature values. Ties
break to the lowest feature index, then the lowest threshold, so a fit
is a pure function of (data, config, rng draws).
"""

from __future__ import annotations

from typing import Any

import numpy as np

from ..core import GRADE_COUNT

GAIN_EPS = 1e-12


def _scan_regression_splits(
    x_col: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    l2: float,
    min_leaf: int,
) -> tuple[float, float] | None:
    """Best (gain, threshold) for one feature, or None if unsplittable."""
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    gs = np.cumsum(g[order])
    hs = np.cumsum(h[order])
    n = xs.size
    # candidate cut after position i requires a value change at i -> i+1
    cuts = np.nonzero(xs[:-1] != xs[1:])[0]
    if cuts.size == 0:
        return None
    left_n = cuts + 1
    keep = (left_n >= min_leaf) & (n - left_n >= min_leaf)
    cuts = cuts[keep]
    if cuts.size == 0:
        return None
    g_total, h_total = gs[-1], hs[-1]
    gl, hl = gs[cuts], hs[cuts]
    gr, hr = g_total - gl, h_total - hl
    gains = 0.5 * (
        gl**2 / (hl + l2) + gr**2 / (hr + l2) - g_total**2 / (h_total + l2)
    )
    best = int(np.argmax(gains))  # first max -> lowest threshold
    return float(gains[best]), float((xs[cuts[best]] + xs[cuts[best] + 1]) / 2.0)


def _leaf_value(g: np.ndarray, h: np.ndarray, l2: float) -> float:
    denom = float(h.sum()) + l2
    if denom <= 0:
        return 0.0
    return float(-g.sum() / denom)


def fit_regression_tree(
    x: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    max_depth: int,
    min_leaf: int,
    l2: float,
) -> dict[str, Any]:
    """Second-order (Newton) regression tree on gradient/hessian targets."""

    def build(idx: np.ndarray, depth: int) -> dict[str, Any]:
        gi, hi = g[idx], h[idx]
        if depth == 0 or idx.size < 2 * min_leaf:
            return {"value": _leaf_value(gi, hi, l2)}
        best_gain = GAIN_EPS
        best: tuple[int, float] | None = None
        for j in range(x.shape[1]):
            found = _scan_regression_splits(x[idx, j], gi, hi, l2, min_leaf)
            if found is not None and found[0] > best_gain:
                best_gain = found[0]
                best = (j, found[1])
        if best is None:
            return {"value": _leaf_value(gi, hi, l2)}
        j, thr = best
        mask = x[idx, j] < thr
        return {
            "feature": j,
            "threshold": thr,
            "left": build(idx[mask], depth - 1),
            "right": build(idx[~mask], depth - 1),
        }

    return build(np.arange(x.shape[0]), max_depth)


def predict_tree(node: dict[str, Any], x: np.ndarray) -> np.ndarray:
    """Vectorized tree evaluation; returns leaf values (or distributions)."""
    leaf = node.get("value")
    if leaf is not None:
        leaf_arr = np.asarray(leaf, dtype=np.float64)
        if leaf_arr.ndim == 0:
            return np.full(x.shape[0], float(leaf_arr))
        return np.tile(leaf_arr, (x.shape[0], 1))
    out: np.ndarray | None = None
    mask = x[:, node["feature"]] < node["threshold"]
    for child, child_mask in ((node["left"], mask), (node["right"], ~mask)):
        vals = predict_tree(child, x[child_mask])
        if out is None:
            out = np.zeros((x.shape[0],) + vals.shape[1:], dtype=np.float64)
        out[child_mask] = vals
    assert out is not None
    return out


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p**2).sum())


def fit_classification_tree(
    x: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int,
    min_leaf: int,
    max_features: int,
) -> dict[str, Any]:
    """Gini CART tree sampling ``max_features`` candidate features per node.

    Leaves hold grade-frequency distributions.
    """
    n_features = x.shape[1]
    onehot = np.zeros((y.size, GRADE_COUNT), dtype=np.float64)
    onehot[np.arange(y.size), y] = 1.0

    def leaf(idx: np.ndarray) -> dict[str, Any]:
        counts = onehot[idx].sum(axis=0)
        return {"value": (counts / counts.sum()).tolist()}

    def build(idx: np.ndarray, depth: int) -> dict[str, Any]:
        if depth == 0 or idx.size < 2 * min_leaf or np.unique(y[idx]).size == 1:
            return leaf(idx)
        candidates = np.sort(rng.choice(n_features, size=min(max_features, n_features), replace=False))
        parent_counts = onehot[idx].sum(axis=0)
        parent_imp = _gini(parent_counts)
        best_gain = GAIN_EPS
        best: tuple[int, float] | None = None
        for j in candidates:
            col = x[idx, j]
            order = np.argsort(col, kind="stable")
            xs = col[order]
            cum = np.cumsum(onehot[idx][order], axis=0)
            cuts = np.nonzero(xs[:-1] != xs[1:])[0]
            if cuts.size == 0:
                continue
            left_n = cuts + 1
            keep = (left_n >= min_leaf) & (idx.size - left_n >= min_leaf)
            cuts = cuts[keep]
            for c in cuts:
                left_counts = cum[c]
                right_counts = parent_counts - left_counts
                nl = left_counts.sum()
                nr = right_counts.sum()
                gain = parent_imp - (nl * _gini(left_counts) + nr * _gini(right_counts)) / idx.size
                if gain > best_gain:
                    best_gain = gain
                    best = (int(j), float((xs[c] + xs[c + 1]) / 2.0))
        if best is None:
            return leaf(idx)
        j, thr = best
        mask = x[idx, j] < thr
        return {
            "feature": j,
            "threshold": thr,
            "left": build(idx[mask], depth - 1),
            "right": build(idx[~mask], depth - 1),
        }

    return build(np.arange(x.shape[0]), max_depth)
