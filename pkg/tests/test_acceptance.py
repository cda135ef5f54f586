"""Acceptance suite: one test per shipped guarantee.

Each test is deliberately self-contained: fixtures are generated from
frozen seeds spelled out in the helpers, and oracle arithmetic is
restated here rather than imported from the library under test.
"""

import json
import math
import statistics
import time

import numpy as np
import pytest

from unchartedforest import cli
from unchartedforest.dataio import ClassBlocks, bundled_iris_path, load_csv, order_by_label
from unchartedforest.forest import UnchartedForest
from unchartedforest.metrics import block_iq, flag_outliers, iq_matrix, row_iq_values, tiq, tsaq
from unchartedforest.refcluster import cluster_variances, fisher_ci, kmeans
from unchartedforest.tree import GrowthConfig, best_split


def iris_blocks():
    data = load_csv(bundled_iris_path(), label_column="species")
    return order_by_label(data)


def blobs90_csv(path):
    """Fixed 3-blob benchmark: 90 rows, 6 vars, generator seed 7."""
    rng = np.random.default_rng(7)
    centers = [np.zeros(6),
               np.array([6.0, 0, 0, 0, 0, 0]),
               np.array([0, 6.0, 0, 0, 0, 0])]
    X = np.vstack([rng.normal(c, 1.0, size=(30, 6)) for c in centers])
    header = ",".join(f"v{i}" for i in range(6))
    lines = [header] + [",".join(f"{v:.17g}" for v in row) for row in X]
    path.write_text("\n".join(lines) + "\n")
    return path


def provenance_csv(path):
    """Fixed provenance fixture: 4 source blobs, 12 unknowns from 3 of them.

    Generator seed 42; sources alder/birch/cedar/dogwood at separated
    centers, then 12 unknown rows cycling alder, birch, cedar.
    """
    rng = np.random.default_rng(42)
    centers = {
        "alder": np.zeros(5),
        "birch": np.array([8.0, 0, 0, 0, 0]),
        "cedar": np.array([0, 8.0, 0, 0, 0]),
        "dogwood": np.array([0, 0, 8.0, 0, 0]),
    }
    lines = [",".join(f"v{i}" for i in range(5)) + ",source"]
    for label, center in centers.items():
        for _ in range(15):
            row = rng.normal(center, 0.7)
            lines.append(",".join(f"{v:.17g}" for v in row) + f",{label}")
    truth = {}
    for i in range(12):
        label = ["alder", "birch", "cedar"][i % 3]
        row = rng.normal(centers[label], 0.7)
        lines.append(",".join(f"{v:.17g}" for v in row) + ",?")
        truth[str(60 + i)] = label
    path.write_text("\n".join(lines) + "\n")
    return path, truth


def scan_best_split(X, rows, cand, config):
    """Exhaustive (variable, midpoint) scan restated from first principles."""
    def spread_of(v):
        if config.metric == "variance":
            return float(np.var(v))
        if config.metric == "ad":
            return float(np.mean(np.abs(v - np.mean(v))))
        return float(np.median(np.abs(v - np.median(v))))

    best = None
    for order, var in enumerate(cand):
        v = np.sort(X[rows, var])
        s_parent = spread_of(v)
        if s_parent <= 0.0:
            continue
        for i in range(v.size - 1):
            if v[i] == v[i + 1]:
                continue
            thr = 0.5 * (v[i] + v[i + 1])
            if not thr < v[i + 1]:
                thr = float(v[i])
            s_left = spread_of(v[: i + 1])
            s_right = spread_of(v[i + 1:])
            n_left, n_right = i + 1, v.size - i - 1
            if config.gain_mode == "sum":
                g = 1.0 - (s_left + s_right) / s_parent
            elif config.gain_mode == "weighted":
                g = 1.0 - (n_left * s_left + n_right * s_right) / (v.size * s_parent)
            else:
                g = 1.0 - (s_left - s_right) / s_parent
            key = (-g, order, thr)
            if best is None or key < best[0]:
                best = (key, int(var), float(thr), g)
    if best is None:
        return None
    return best[1], best[2], best[3]


def test_01_setosa_rows_separate_below_5_percent():
    ordered, blocks = iris_blocks()
    start, end = blocks.range_of(blocks.index_of("setosa"))
    for seed in (0, 7):
        t0 = time.perf_counter()
        forest = UnchartedForest(n_trees=100, max_depth=4, metric="variance",
                                 gain_mode="sum", random_state=seed,
                                 n_jobs=1).fit(ordered.values)
        values = row_iq_values(forest.affinity_, blocks)
        elapsed = time.perf_counter() - t0
        assert values[start:end].max() < 0.05
        assert elapsed < 5.0


def test_02_overlap_flags_confined_to_versicolor_virginica():
    ordered, blocks = iris_blocks()
    overlap = {"versicolor", "virginica"}
    for seed in range(20):
        forest = UnchartedForest(n_trees=100, max_depth=4,
                                 random_state=seed).fit(ordered.values)
        scan = flag_outliers(row_iq_values(forest.affinity_, blocks))
        assert not scan.degenerate
        assert 2 <= len(scan.flags) <= 8, f"seed {seed}: {len(scan.flags)} flags"
        labels = {blocks.blocks[blocks.block_of(f.index)][0] for f in scan.flags}
        assert labels <= overlap, f"seed {seed} flagged {labels}"


def test_03_affinity_matrix_invariants_hold():
    rng = np.random.default_rng(101)
    for trial in range(200):
        heavy = trial % 5 == 4  # every fifth dataset uses a slower metric
        metric = ("mad", "ad")[trial % 2] if heavy else "variance"
        n = int(rng.integers(5, 31 if heavy else 61))
        d = int(rng.integers(1, 9))
        X = rng.normal(size=(n, d)) * rng.uniform(0.5, 20)
        if trial % 3 == 0:
            X = np.round(X)  # duplicated values exercise the tie paths
        forest = UnchartedForest(
            n_trees=int(rng.integers(5, 11 if heavy else 26)),
            max_depth=int(rng.integers(0, 5)),
            min_node_size=int(rng.integers(2, 9)),
            metric=metric,
            gain_mode=("sum", "weighted", "literal")[trial % 3],
            random_state=int(rng.integers(0, 1000)),
        )
        P = forest.fit(X).affinity_
        assert np.abs(P - P.T).max() <= 1e-12
        assert np.array_equal(np.diag(P), np.ones(n))
        assert P.min() >= 0.0 and P.max() <= 1.0
        perm = rng.permutation(n)
        P2 = forest.fit(X[perm]).affinity_
        assert np.array_equal(P2, P[np.ix_(perm, perm)])


def test_04_best_split_matches_brute_force_scan():
    rng = np.random.default_rng(202)
    combos = [("variance", "sum"), ("variance", "weighted"),
              ("variance", "literal"), ("mad", "sum"), ("ad", "sum"),
              ("mad", "weighted"), ("ad", "literal")]
    for trial in range(500):
        metric, mode = combos[trial % len(combos)] if trial % 3 else ("variance",
                                                                      "sum")
        config = GrowthConfig(max_depth=1, min_node_size=2,
                              metric=metric, gain_mode=mode)
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 5))
        if trial % 2:
            X = rng.normal(size=(n, d))
        else:
            X = rng.integers(0, 5, size=(n, d)).astype(np.float64)
        rows = np.arange(n)
        cand = rng.permutation(d)[: int(rng.integers(1, d + 1))]
        found = best_split(X, rows, cand, config)
        expect = scan_best_split(X, rows, cand, config)
        if expect is None:
            assert found is None
            continue
        assert found is not None
        assert found.var_index == expect[0]
        assert found.threshold == expect[1]
        assert abs(found.gain - expect[2]) <= 1e-12


def test_05_block_quotients_match_elementwise_oracle():
    rng = np.random.default_rng(303)
    for _ in range(100):
        n = int(rng.integers(4, 21))
        P = rng.random((n, n))
        k = int(rng.integers(2, min(5, n) + 1))
        cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
        bounds = np.concatenate([[0], cuts, [n]])
        labels = []
        for b in range(k):
            labels += [chr(ord("a") + b)] * int(bounds[b + 1] - bounds[b])
        blocks = ClassBlocks.from_labels(labels)
        m = iq_matrix(P, blocks)
        for i in range(k):
            for j in range(k):
                total = 0.0
                for r in range(int(bounds[i]), int(bounds[i + 1])):
                    for c in range(int(bounds[j]), int(bounds[j + 1])):
                        total += P[r, c]
                size = (bounds[i + 1] - bounds[i]) * (bounds[j + 1] - bounds[j])
                assert abs(m[i, j] - total / size) <= 1e-12
        off = [m[i, j] for i in range(k) for j in range(k) if i != j]
        assert abs(tiq(P, blocks) - sum(off) / len(off)) <= 1e-12
        assert abs(tsaq(P, blocks) - sum(m[i, i] for i in range(k)) / k) <= 1e-12

    ones = np.ones((6, 6))
    eye = np.eye(6)
    blocks = ClassBlocks.from_labels(["a"] * 2 + ["b"] * 4)
    assert tiq(ones, blocks) == 1.0
    assert tsaq(ones, blocks) == 1.0
    assert block_iq(ones, blocks, 0, 1) == 1.0
    assert tiq(eye, blocks) == 0.0
    assert block_iq(eye, blocks, 0, 0) == 1.0 / 2
    assert block_iq(eye, blocks, 1, 1) == 1.0 / 4


def test_06_variance_decomposition_and_wcss_monotonicity():
    rng = np.random.default_rng(404)
    for trial in range(100):
        n = int(rng.integers(6, 60))
        d = int(rng.integers(1, 7))
        X = rng.normal(size=(n, d)) * rng.uniform(0.1, 50)
        a = rng.integers(0, int(rng.integers(1, 8)), size=n)
        a = np.unique(a, return_inverse=True)[1]
        within, between = cluster_variances(X, a)
        Y = X - X.mean(axis=0)
        total = float((Y * Y).sum()) / n
        assert abs(within + between - total) <= 1e-9 * max(1.0, total)

        k = int(rng.integers(2, 7))
        if k <= n:
            history = np.asarray(kmeans(X, k, seed=trial).wcss_history)
            assert (np.diff(history) <= 0).all()


def test_07_correlation_signs_on_synthetic_blobs(tmp_path):
    data = blobs90_csv(tmp_path / "blobs90.csv")
    out = tmp_path / "out"
    t0 = time.perf_counter()
    code = cli.run(["compare", "--input", str(data), "--out-dir", str(out)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    assert elapsed < 60.0
    doc = json.loads((out / "correlations.json").read_text())
    for method in ("kmeans", "ward"):
        ts_within = doc[method]["tsaq_within"]
        ti_between = doc[method]["tiq_between"]
        assert not ts_within["degenerate"]
        assert not ti_between["degenerate"]
        assert ts_within["r"] >= 0.7, (
            f"{method}: corr(tsaq, within_var) = {ts_within['r']:+.4f}")
        assert ti_between["r"] <= -0.3, (
            f"{method}: corr(tiq, between_var) = {ti_between['r']:+.4f}")


def test_08_fisher_interval_matches_independent_derivation():
    lo, hi = fisher_ci(0.5, 50, 0.99)
    assert abs(lo - 0.172) <= 0.002
    assert abs(hi - 0.729) <= 0.002
    z_crit = statistics.NormalDist().inv_cdf(0.995)
    half = z_crit / math.sqrt(47)
    assert abs(lo - math.tanh(math.atanh(0.5) - half)) <= 1e-12
    assert abs(hi - math.tanh(math.atanh(0.5) + half)) <= 1e-12
    lo0, hi0 = fisher_ci(0.0, 30, 0.99)
    assert abs(lo0 + hi0) <= 1e-12


def test_09_thread_count_never_changes_bytes(tmp_path, monkeypatch):
    compare = ["affinity.csv", "report.json", "affinity.pgm",
               "affinity_blocks.pgm"]
    outputs = {}
    for threads in ("1", "8"):
        out = tmp_path / f"threads{threads}"
        monkeypatch.setenv("UF_THREADS", threads)
        code = cli.run(["analyze", "--input", str(bundled_iris_path()),
                        "--labels", "species", "--trees", "100",
                        "--depth", "4", "--seed", "0", "--out-dir", str(out)])
        assert code == 0
        outputs[threads] = {name: (out / name).read_bytes() for name in compare}
    for name in compare:
        assert outputs["1"][name] == outputs["8"][name], name


def test_10_provenance_votes_recover_sources(tmp_path):
    data, truth = provenance_csv(tmp_path / "provenance.csv")
    out = tmp_path / "out"
    code = cli.run(["assign", "--input", str(data), "--labels", "source",
                    "--seed", "0", "--out-dir", str(out)])
    assert code == 0
    lines = (out / "votes.csv").read_text().splitlines()
    assigned = {}
    for line in lines[1:]:
        cells = line.split(",")
        assigned[cells[0]] = cells[1]
    assert len(assigned) == 12
    assert "dogwood" not in assigned.values()
    correct = sum(1 for sid, label in truth.items() if assigned[sid] == label)
    assert correct >= 11, f"only {correct}/12 unknowns recovered"
