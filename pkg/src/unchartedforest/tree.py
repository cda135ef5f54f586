"""Single unsupervised tree grown by exhaustive spread-reduction splits.

Candidate boundaries for a node are the midpoints between consecutive
distinct sorted values of each candidate variable; the boundary with the
highest fractional spread reduction wins.  Rows with values at or below
the threshold go left.  All node statistics are computed from the sorted
values, so a grown tree depends on the value multisets only, never on row
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

SPREAD_METRICS = ("variance", "mad", "ad")
GAIN_MODES = ("sum", "weighted", "literal")


def spread(values, metric: str = "variance") -> float:
    """Population spread of a 1-D sample.

    ``variance`` divides by n, ``mad`` is the median absolute deviation
    from the median, ``ad`` the mean absolute deviation from the mean.
    A singleton has spread 0 under every metric.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("spread of an empty sample is undefined")
    if metric == "variance":
        return float(np.var(x))
    if metric == "ad":
        return float(np.mean(np.abs(x - np.mean(x))))
    if metric == "mad":
        return float(np.median(np.abs(x - np.median(x))))
    raise ValueError(f"unknown spread metric {metric!r}")


def _gain_value(s_left: float, s_right: float, n_left: int, n_right: int,
                s_parent: float, mode: str) -> float:
    if mode == "sum":
        return 1.0 - (s_left + s_right) / s_parent
    if mode == "weighted":
        n = n_left + n_right
        return 1.0 - (n_left * s_left + n_right * s_right) / (n * s_parent)
    if mode == "literal":
        return 1.0 - (s_left - s_right) / s_parent
    raise ValueError(f"unknown gain mode {mode!r}")


def gain(parent, left, right, metric: str = "variance", mode: str = "sum") -> float:
    """Fractional spread reduction achieved by a two-way partition of ``parent``."""
    p = np.asarray(parent, dtype=np.float64).ravel()
    lo = np.asarray(left, dtype=np.float64).ravel()
    hi = np.asarray(right, dtype=np.float64).ravel()
    if lo.size == 0 or hi.size == 0 or lo.size + hi.size != p.size:
        raise ValueError("left and right must partition parent into nonempty halves")
    s_parent = spread(p, metric)
    if s_parent <= 0.0:
        raise ValueError("parent spread is zero; gain is undefined")
    return _gain_value(spread(lo, metric), spread(hi, metric), lo.size, hi.size,
                       s_parent, mode)


@dataclass(frozen=True)
class GrowthConfig:
    """Stopping rules and split scoring for tree growth."""

    max_depth: int
    min_node_size: int = 5
    metric: str = "variance"
    gain_mode: str = "sum"

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_node_size < 2:
            raise ValueError("min_node_size must be >= 2")
        if self.metric not in SPREAD_METRICS:
            raise ValueError(f"metric must be one of {SPREAD_METRICS}")
        if self.gain_mode not in GAIN_MODES:
            raise ValueError(f"gain_mode must be one of {GAIN_MODES}")


@dataclass(frozen=True)
class SplitCandidate:
    var_index: int
    threshold: float
    gain: float


@dataclass
class Leaf:
    member_rows: np.ndarray


@dataclass
class Branch:
    var_index: int
    threshold: float
    depth: int
    left: "Node"
    right: "Node"


Node = Union[Branch, Leaf]


class UnchartedTree:
    """A grown tree whose leaves partition the rows passed at growth."""

    __slots__ = ("root",)

    def __init__(self, root: Node):
        self.root = root

    def leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                yield node
            else:
                stack.extend((node.right, node.left))

    def branches(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Branch):
                yield node
                stack.extend((node.right, node.left))

    @property
    def n_leaves(self) -> int:
        return sum(1 for _ in self.leaves())

    def leaf_assignments(self, n: int) -> np.ndarray:
        """Leaf index per row in [0, n); raises if leaves do not partition it."""
        out = np.full(n, -1, dtype=np.intp)
        for j, leaf in enumerate(self.leaves()):
            rows = leaf.member_rows
            if rows.size == 0:
                raise ValueError("empty leaf")
            if rows.min() < 0 or rows.max() >= n:
                raise ValueError("leaf members fall outside the expected row range")
            if (out[rows] != -1).any():
                raise ValueError("leaves overlap; tree does not partition its rows")
            out[rows] = j
        if (out == -1).any():
            raise ValueError("leaves do not cover every row")
        return out


def _midpoint(lo: float, hi: float) -> float:
    thr = 0.5 * (lo + hi)
    # adjacent floats can round the midpoint up to hi, which would empty
    # the right child; fall back to the left value in that case
    if not thr < hi:
        thr = lo
    return float(thr)


def _best_split_variance(S: np.ndarray, cand: np.ndarray, mode: str):
    m = S.shape[0]
    mean = S.sum(axis=0) / m
    Y = S - mean
    C1 = np.cumsum(Y, axis=0)
    C2 = np.cumsum(Y * Y, axis=0)
    t1 = C1[-1]
    t2 = C2[-1]
    s_parent = np.maximum(t2 / m - (t1 / m) ** 2, 0.0)
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    n_right = m - n_left
    c1 = C1[:-1]
    c2 = C2[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        v_left = np.maximum(c2 / n_left - (c1 / n_left) ** 2, 0.0)
        v_right = np.maximum((t2 - c2) / n_right - ((t1 - c1) / n_right) ** 2, 0.0)
        if mode == "sum":
            g = 1.0 - (v_left + v_right) / s_parent
        elif mode == "weighted":
            g = 1.0 - (n_left * v_left + n_right * v_right) / (m * s_parent)
        else:
            g = 1.0 - (v_left - v_right) / s_parent
    ok = (S[1:] != S[:-1]) & (s_parent > 0.0)
    g = np.where(ok, g, -np.inf)
    # var-major flattening: ties resolve to the first candidate variable,
    # then to the smallest threshold
    flat = np.ascontiguousarray(g.T).ravel()
    top = float(flat.max())
    if top == -np.inf:
        return None
    # prefix-sum gains carry rounding noise that can flip exact ties, so
    # the near-optimal band is re-scored with the direct formula before
    # the tie-break applies; the band is far wider than the noise
    best = None
    cols = {}
    for idx in np.flatnonzero(flat >= top - 1e-9):
        ci, bi = divmod(int(idx), m - 1)
        if ci not in cols:
            col = np.ascontiguousarray(S[:, ci])
            cols[ci] = (col, spread(col, "variance"))
        col, sp = cols[ci]
        if sp <= 0.0:
            continue
        g_exact = _gain_value(spread(col[: bi + 1], "variance"),
                              spread(col[bi + 1:], "variance"),
                              bi + 1, m - bi - 1, sp, mode)
        if best is None or g_exact > best[0]:
            best = (g_exact, ci, bi)
    if best is None:
        return None
    g_best, ci, bi = best
    thr = _midpoint(float(S[bi, ci]), float(S[bi + 1, ci]))
    return SplitCandidate(int(cand[ci]), thr, g_best)


def _best_split_generic(S: np.ndarray, cand: np.ndarray, config: GrowthConfig):
    m = S.shape[0]
    best = None
    for ci in range(S.shape[1]):
        col = np.ascontiguousarray(S[:, ci])
        s_parent = spread(col, config.metric)
        if s_parent <= 0.0:
            continue
        for bi in range(m - 1):
            if col[bi] == col[bi + 1]:
                continue
            g = _gain_value(
                spread(col[: bi + 1], config.metric),
                spread(col[bi + 1:], config.metric),
                bi + 1, m - bi - 1, s_parent, config.gain_mode,
            )
            if best is None or g > best.gain:
                best = SplitCandidate(int(cand[ci]), _midpoint(float(col[bi]), float(col[bi + 1])), g)
    return best


def best_split(X, rows, candidate_vars, config: GrowthConfig):
    """Highest-gain (variable, threshold) over the node, or None.

    Ties break to the earliest candidate variable, then to the smallest
    threshold.  Variables whose values have zero spread in the node are
    skipped; None means no candidate variable offers a valid boundary.
    """
    X = np.asarray(X, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.intp)
    cand = np.asarray(candidate_vars, dtype=np.intp)
    if rows.size == 0:
        raise ValueError("best_split over zero rows")
    if cand.size == 0:
        raise ValueError("candidate_vars must not be empty")
    if rows.size < 2:
        return None
    S = np.sort(X[np.ix_(rows, cand)], axis=0)
    if config.metric == "variance":
        return _best_split_variance(S, cand, config.gain_mode)
    return _best_split_generic(S, cand, config)


def grow_tree(X, rows, candidate_vars, config: GrowthConfig) -> UnchartedTree:
    """Recursively split until depth, node-size or no-valid-split stops growth."""
    X = np.asarray(X, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        raise ValueError("cannot grow a tree over zero rows")
    cand = np.asarray(candidate_vars, dtype=np.intp)
    if cand.size == 0:
        raise ValueError("candidate_vars must not be empty")

    def build(node_rows: np.ndarray, depth: int) -> Node:
        if depth >= config.max_depth or node_rows.size < config.min_node_size:
            return Leaf(node_rows)
        found = best_split(X, node_rows, cand, config)
        if found is None:
            return Leaf(node_rows)
        go_left = X[node_rows, found.var_index] <= found.threshold
        return Branch(found.var_index, found.threshold, depth,
                      build(node_rows[go_left], depth + 1),
                      build(node_rows[~go_left], depth + 1))

    return UnchartedTree(build(rows, 0))
