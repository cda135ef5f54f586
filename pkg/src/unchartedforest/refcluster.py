"""Reference clustering, correlation, and projection utilities.

These are the yardsticks the ensemble analysis is compared against:
Lloyd's k-means and Ward's agglomerative clustering, the within/between
variance decomposition, Pearson correlation with tanh-transform
confidence intervals, PCA scores, nearest-neighbor labeling, and the
sweep harness that runs both clusterers over a range of k with
replicated forest assessments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import ndtri
from sklearn.base import clone

from .dataio import ClassBlocks
from .forest import UnchartedForest
from .metrics import tiq, tsaq
from .validation import check_matrix, check_positive_int


@dataclass(frozen=True)
class Clustering:
    assignments: np.ndarray
    k: int
    within_var: float
    between_var: float
    wcss_history: tuple = ()


def cluster_variances(X, assignments):
    """(within, between) variance, both normalized by the total sample count.

    Their sum equals the total variance (trace of the scatter matrix over n),
    which the test suite uses as a self-check.
    """
    X = check_matrix(X, "X")
    n = X.shape[0]
    a = np.asarray(assignments)
    if a.shape != (n,):
        raise ValueError("assignments must give one cluster index per row")
    a = a.astype(np.intp)
    if a.min() < 0:
        raise ValueError("cluster indices must be nonnegative")
    k = int(a.max()) + 1
    counts = np.bincount(a, minlength=k)
    if (counts == 0).any():
        raise ValueError("every cluster index in [0, k) must be nonempty")
    mu = X.mean(axis=0)
    within = 0.0
    between = 0.0
    for c in range(k):
        Xc = X[a == c]
        muc = Xc.mean(axis=0)
        within += float(((Xc - muc) ** 2).sum())
        between += float(counts[c]) * float(((muc - mu) ** 2).sum())
    return within / n, between / n


def kmeans(X, k: int, seed, max_iter: int = 300) -> Clustering:
    """Lloyd iterations from k distinct data points.

    An iteration assigns every row to its nearest centroid, then repairs
    any empty cluster by promoting the row farthest from its centroid
    (among rows whose cluster keeps at least one member).  Convergence is
    declared when the post-repair assignment repeats.
    """
    X = check_matrix(X, "X")
    n = X.shape[0]
    check_positive_int(k, "k")
    if k > n:
        raise ValueError(f"k={k} exceeds {n} samples")
    check_positive_int(max_iter, "max_iter")
    rng = np.random.default_rng(int(seed))
    centroids = X[rng.choice(n, size=k, replace=False)].copy()
    assign = None
    history = []
    for _ in range(max_iter):
        d = cdist(X, centroids, "sqeuclidean")
        new_assign = np.argmin(d, axis=1)
        dmin = d[np.arange(n), new_assign]
        sizes = np.bincount(new_assign, minlength=k)
        for c in range(k):
            if sizes[c] == 0:
                movable = np.flatnonzero(sizes[new_assign] > 1)
                if movable.size == 0:
                    raise ValueError("cannot repair an empty cluster; "
                                     "k exceeds the number of distinct rows")
                p = int(movable[np.argmax(dmin[movable])])
                sizes[new_assign[p]] -= 1
                new_assign[p] = c
                sizes[c] = 1
                centroids[c] = X[p]
                dmin[p] = 0.0
        history.append(float(dmin.sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            centroids[c] = X[assign == c].mean(axis=0)
    within, between = cluster_variances(X, assign)
    return Clustering(assign, k, within, between, tuple(history))


def ward_cluster(X, k: int) -> Clustering:
    """Agglomerate singletons by minimum increase in within-cluster SS.

    Merge costs start at half the squared distances and are maintained
    with the Lance-Williams recurrence; ties go to the lowest pair index
    in row-major order.  Output clusters are labeled by smallest member.
    """
    X = check_matrix(X, "X")
    n = X.shape[0]
    check_positive_int(k, "k")
    if k > n:
        raise ValueError(f"k={k} exceeds {n} samples")
    D = cdist(X, X, "sqeuclidean") * 0.5
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    members = [[i] for i in range(n)]
    alive = np.ones(n, dtype=bool)
    for _ in range(n - k):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        ni, nj = size[i], size[j]
        others = alive.copy()
        others[i] = others[j] = False
        nl = size[others]
        d_new = ((ni + nl) * D[i, others] + (nj + nl) * D[j, others]
                 - nl * D[i, j]) / (ni + nj + nl)
        D[i, others] = d_new
        D[others, i] = d_new
        D[j, :] = np.inf
        D[:, j] = np.inf
        size[i] += size[j]
        members[i].extend(members[j])
        alive[j] = False
    groups = sorted((members[i] for i in np.flatnonzero(alive)), key=min)
    assignments = np.empty(n, dtype=np.intp)
    for label, group in enumerate(groups):
        assignments[np.asarray(group, dtype=np.intp)] = label
    within, between = cluster_variances(X, assignments)
    return Clustering(assignments, k, within, between, ())


def pearson_r(x, y) -> float:
    """Product-moment correlation, clipped into [-1, 1]."""
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError("series lengths differ")
    if a.size < 3:
        raise ValueError("need at least 3 pairs")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("series must be finite")
    # identical values must be caught structurally: their rounded mean can
    # sit an ulp off, leaving a spurious nonzero spread
    if (a == a[0]).all() or (b == b[0]).all():
        raise ValueError("correlation is undefined for a constant series")
    ac = a - a.mean()
    bc = b - b.mean()
    sa = float(np.sqrt((ac * ac).sum()))
    sb = float(np.sqrt((bc * bc).sum()))
    if sa == 0.0 or sb == 0.0:
        raise ValueError("correlation is undefined for a constant series")
    r = float((ac * bc).sum() / (sa * sb))
    return min(1.0, max(-1.0, r))


def fisher_ci(r: float, n: int, confidence: float = 0.99):
    """Confidence interval for a correlation via the atanh transform.

    z = atanh(r) is treated as normal with standard error 1/sqrt(n-3);
    the interval endpoints are mapped back through tanh.
    """
    if not -1.0 < r < 1.0:
        raise ValueError("|r| must be strictly less than 1")
    check_positive_int(n, "n", minimum=4)
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    z = math.atanh(r)
    half = float(ndtri(0.5 + confidence / 2.0)) / math.sqrt(n - 3)
    return math.tanh(z - half), math.tanh(z + half)


def pca_scores(X, n_components: int):
    """(scores, explained variances) from the covariance eigendecomposition.

    Eigenvalues come back in nonincreasing order, clipped at zero; each
    component's largest-magnitude loading is made positive so the sign is
    reproducible.
    """
    X = check_matrix(X, "X")
    n, d = X.shape
    check_positive_int(n_components, "n_components")
    if n_components > min(n, d):
        raise ValueError(f"n_components={n_components} exceeds min(n, d)={min(n, d)}")
    Y = X - X.mean(axis=0)
    cov = (Y.T @ Y) / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")[:n_components]
    evals = np.clip(evals[order], 0.0, None)
    V = evecs[:, order].copy()
    for c in range(V.shape[1]):
        lead = int(np.argmax(np.abs(V[:, c])))
        if V[lead, c] < 0:
            V[:, c] = -V[:, c]
    return Y @ V, evals


def nn1_classify(train_values, train_labels, test_values):
    """(labels, tie flags): each test row takes its nearest trainer's label.

    Exact distance ties resolve to the lowest training index and are
    flagged rather than hidden.
    """
    R = check_matrix(train_values, "train_values")
    T = check_matrix(test_values, "test_values")
    if R.shape[1] != T.shape[1]:
        raise ValueError("train and test variable counts differ")
    labels = [str(lab) for lab in train_labels]
    if len(labels) != R.shape[0]:
        raise ValueError("one label per training row required")
    d = cdist(T, R, "sqeuclidean")
    out = []
    ties = []
    for r in range(T.shape[0]):
        best = int(np.argmin(d[r]))
        out.append(labels[best])
        ties.append(bool((d[r] == d[r, best]).sum() > 1))
    return out, ties


@dataclass(frozen=True)
class SweepRecord:
    method: str
    k: int
    replicate: int
    tiq: float
    tsaq: float
    within_var: float
    between_var: float


SWEEP_METHODS = ("kmeans", "ward")


def blocks_from_assignments(assignments):
    """Stable row order grouping equal clusters, plus the matching blocks."""
    a = np.asarray(assignments)
    order = np.argsort(a, kind="stable")
    blocks = ClassBlocks.from_labels([str(int(c)) for c in a[order]])
    return order, blocks


def _corr_entry(a, b, confidence: float):
    n = len(a)
    try:
        r = pearson_r(a, b)
    except ValueError as exc:
        return {"r": None, "ci": None, "n": n, "degenerate": True, "note": str(exc)}
    entry = {"r": r, "ci": None, "n": n, "degenerate": False}
    if abs(r) < 1.0 and n >= 4:
        lo, hi = fisher_ci(r, n, confidence)
        entry["ci"] = [lo, hi]
    return entry


def summarize_sweep(records, confidence: float = 0.99) -> dict:
    """Per-method correlations between ensemble quotients and cluster variances."""
    summary = {"confidence": confidence}
    for method in SWEEP_METHODS:
        sub = [rec for rec in records if rec.method == method]
        if not sub:
            continue
        summary[method] = {
            "tsaq_within": _corr_entry([rec.tsaq for rec in sub],
                                       [rec.within_var for rec in sub], confidence),
            "tiq_between": _corr_entry([rec.tiq for rec in sub],
                                       [rec.between_var for rec in sub], confidence),
        }
    return summary


def sweep_compare(X, k_values, replicates: int, forest=None, seed=0):
    """Cluster, reorder, and assess with a fresh forest per (method, k, replicate).

    Each cell draws its own (clusterer seed, forest seed) pair from the
    master seed, so the sweep is reproducible and schedule-independent.
    Ward's clustering is deterministic and computed once per k; its
    replicates differ only in the forest assessment.
    """
    X = check_matrix(X, "X")
    n = X.shape[0]
    check_positive_int(replicates, "replicates")
    check_positive_int(seed, "seed", minimum=0)
    ks = [check_positive_int(k, "k", minimum=2) for k in k_values]
    if not ks:
        raise ValueError("k_values must not be empty")
    for k in ks:
        if k > n:
            raise ValueError(f"k={k} exceeds {n} samples")
    if forest is None:
        forest = UnchartedForest(n_trees=200, max_depth=5)
    ward_cache = {k: ward_cluster(X, k) for k in ks}
    records = []
    for mi, method in enumerate(SWEEP_METHODS):
        for k in ks:
            for rep in range(replicates):
                ss = np.random.SeedSequence(seed, spawn_key=(mi, k, rep))
                kseed, fseed = (int(v) for v in ss.generate_state(2, np.uint64))
                if method == "kmeans":
                    clustering = kmeans(X, k, kseed)
                else:
                    clustering = ward_cache[k]
                order, blocks = blocks_from_assignments(clustering.assignments)
                est = clone(forest).set_params(random_state=fseed)
                P = est.fit(X[order]).affinity_
                records.append(SweepRecord(method, k, rep,
                                           tiq(P, blocks), tsaq(P, blocks),
                                           clustering.within_var,
                                           clustering.between_var))
    return records, summarize_sweep(records)
