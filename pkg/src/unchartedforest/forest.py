"""Tree ensembles, co-occurrence tallies, and the affinity matrix.

Every tree is grown over all rows; randomness enters only through the
per-tree draw of candidate variables.  Each tree's random stream is
spawned from (random_state, tree index), so results never depend on
growth order or thread count.  A tree is a pure function of its ordered
variable subset, so duplicate draws are grown once and shared; tallies
weight each grown tree by its multiplicity, which keeps every output
bit-identical to growing the duplicates naively.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .tree import GrowthConfig, grow_tree
from .validation import check_affinity, check_matrix, check_positive_int


def default_vars_per_tree(n_vars: int) -> int:
    return max(1, int(round(math.sqrt(n_vars))))


def resolve_n_jobs(n_jobs=None) -> int:
    """Worker count: explicit argument, else UF_THREADS, else cpu count."""
    if n_jobs is not None:
        check_positive_int(n_jobs, "n_jobs")
        return n_jobs
    env = os.environ.get("UF_THREADS")
    if env is not None and env.strip():
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"UF_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"UF_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def _unique_by_identity(trees):
    """(tree, multiplicity) pairs, one per distinct grown object."""
    groups = {}
    for tree in trees:
        key = id(tree)
        if key in groups:
            groups[key][1] += 1
        else:
            groups[key] = [tree, 1]
    return [(t, m) for t, m in groups.values()]


def build_affinity(trees, n: int) -> np.ndarray:
    """Normalized, ramped co-occurrence matrix over ``n`` samples.

    The integer tally counts, per pair, trees where the two samples share
    a leaf minus trees where they do not; dividing by the tree count (the
    pre-normalization diagonal) and clamping negatives to zero yields a
    symmetric matrix with unit diagonal and entries in [0, 1].
    """
    n_trees = len(trees)
    if n_trees == 0:
        raise ValueError("build_affinity needs at least one tree")
    check_positive_int(n, "n")
    co = np.zeros((n, n), dtype=np.int64)
    for tree, mult in _unique_by_identity(trees):
        tree.leaf_assignments(n)  # rejects trees grown over a different row set
        for leaf in tree.leaves():
            rows = leaf.member_rows
            co[np.ix_(rows, rows)] += mult
    tally = 2 * co - n_trees
    P = np.maximum(tally, 0).astype(np.float64) / n_trees
    check_affinity(P)
    return P


@dataclass(frozen=True)
class ThresholdUsage:
    threshold: float
    count: int
    ever_at_root: bool


@dataclass(frozen=True)
class VariableUsage:
    var_index: int
    usage_count: int
    usage_fraction: float
    thresholds: tuple


@dataclass(frozen=True)
class SplitUsage:
    """Decision-boundary statistics aggregated over an ensemble."""

    variables: tuple
    n_splits: int

    def fraction_of(self, var_index: int) -> float:
        for v in self.variables:
            if v.var_index == var_index:
                return v.usage_fraction
        return 0.0


def split_usage_from_trees(trees, n_vars: int) -> SplitUsage:
    """Tally every branch decision; empty ensemble of leaves gives no entries."""
    check_positive_int(n_vars, "n_vars")
    tally = {}
    total = 0
    for tree, mult in _unique_by_identity(trees):
        for br in tree.branches():
            if not 0 <= br.var_index < n_vars:
                raise ValueError(f"branch variable {br.var_index} outside [0, {n_vars})")
            per_var = tally.setdefault(br.var_index, {})
            rec = per_var.setdefault(br.threshold, [0, False])
            rec[0] += mult
            if br.depth == 0:
                rec[1] = True
            total += mult
    variables = []
    for var_index in sorted(tally):
        per_var = tally[var_index]
        count = sum(rec[0] for rec in per_var.values())
        thresholds = tuple(
            ThresholdUsage(thr, per_var[thr][0], per_var[thr][1])
            for thr in sorted(per_var)
        )
        variables.append(VariableUsage(var_index, count, count / total, thresholds))
    return SplitUsage(tuple(variables), total)


class UnchartedForest(BaseEstimator):
    """Unsupervised tree ensemble yielding a pairwise affinity matrix.

    Parameters
    ----------
    n_trees : number of trees (every tree sees all rows).
    max_depth : growth depth limit; 0 grows single-leaf trees.
    min_node_size : nodes smaller than this are never split.
    metric : "variance", "mad" or "ad".
    gain_mode : "sum", "weighted" or "literal".
    vars_per_tree : candidate variables drawn per tree; None means
        round(sqrt(n_vars)), floored at 1.
    random_state : master seed for the per-tree variable draws.
    n_jobs : worker threads; None defers to UF_THREADS, then cpu count.

    Attributes set by fit: ``trees_``, ``subsets_``, ``affinity_``,
    ``split_usage_``, ``n_samples_``, ``n_features_in_``, ``vars_per_tree_``.
    """

    def __init__(self, n_trees=100, max_depth=4, min_node_size=5,
                 metric="variance", gain_mode="sum", vars_per_tree=None,
                 random_state=0, n_jobs=None):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_node_size = min_node_size
        self.metric = metric
        self.gain_mode = gain_mode
        self.vars_per_tree = vars_per_tree
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        n, d = X.shape
        check_positive_int(self.n_trees, "n_trees")
        check_positive_int(self.random_state, "random_state", minimum=0)
        config = GrowthConfig(self.max_depth, self.min_node_size,
                              self.metric, self.gain_mode)
        if self.vars_per_tree is None:
            vpt = default_vars_per_tree(d)
        else:
            check_positive_int(self.vars_per_tree, "vars_per_tree")
            vpt = self.vars_per_tree
        if vpt > d:
            raise ValueError(f"vars_per_tree={vpt} exceeds the {d} available variables")

        subsets = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(
                np.random.SeedSequence(self.random_state, spawn_key=(t,)))
            subsets.append(tuple(int(v) for v in rng.choice(d, size=vpt, replace=False)))

        keys = list(dict.fromkeys(subsets))
        rows = np.arange(n, dtype=np.intp)

        def grow(subset):
            return grow_tree(X, rows, np.asarray(subset, dtype=np.intp), config)

        workers = min(resolve_n_jobs(self.n_jobs), len(keys))
        if workers <= 1:
            grown = {s: grow(s) for s in keys}
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                grown = dict(zip(keys, pool.map(grow, keys)))

        self.trees_ = [grown[s] for s in subsets]
        self.subsets_ = tuple(subsets)
        self.affinity_ = build_affinity(self.trees_, n)
        self.split_usage_ = split_usage_from_trees(self.trees_, d)
        self.n_samples_ = n
        self.n_features_in_ = d
        self.vars_per_tree_ = vpt
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).affinity_


def affinity_ids_path(path) -> Path:
    path = Path(path)
    return path.parent / (path.stem + ".ids.txt")


def save_affinity_csv(P, sample_ids, path) -> Path:
    """Matrix as headerless CSV at 17 significant digits, ids in a sidecar."""
    P = check_matrix(P, "P")
    n = P.shape[0]
    if P.shape[1] != n:
        raise ValueError("affinity matrix must be square")
    if len(sample_ids) != n:
        raise ValueError("sample_ids length must match the matrix")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in P:
            writer.writerow([f"{v:.17g}" for v in row])
    sidecar = affinity_ids_path(path)
    sidecar.write_text("".join(f"{sid}\n" for sid in sample_ids))
    return sidecar


def load_affinity_csv(path):
    """(matrix, ids-or-None); the sidecar is optional on the way back in."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise ValueError(f"{path}: non-numeric cell on line {lineno}") from None
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    matrix = np.asarray(rows, dtype=np.float64)
    sidecar = affinity_ids_path(path)
    ids = None
    if sidecar.exists():
        ids = [line for line in sidecar.read_text().splitlines()]
        if len(ids) != matrix.shape[0]:
            raise ValueError(f"{sidecar}: id count does not match the matrix")
    return matrix, ids
