import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unchartedforest import (
    MISSING,
    ClassBlocks,
    Dataset,
    bundled_iris_path,
    load_blocks_csv,
    load_csv,
    order_by_label,
    parse_preprocess_step,
    preprocess,
    save_blocks_csv,
    save_csv,
    subset,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_plain_matrix(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n3,4\n5,6\n")
        data = load_csv(path)
        assert data.n_samples == 3
        assert data.n_vars == 2
        assert data.labels is None
        assert data.var_names == ["a", "b"]
        assert data.sample_ids == ["0", "1", "2"]
        assert np.array_equal(data.values, [[1, 2], [3, 4], [5, 6]])

    def test_iris_with_labels(self):
        data = load_csv(bundled_iris_path(), label_column="species")
        assert data.n_samples == 150
        assert data.n_vars == 4
        assert len(data.distinct_labels()) == 3
        assert all(len([l for l in data.labels if l == lab]) == 50
                   for lab in data.distinct_labels())

    def test_missing_sentinel_passthrough(self, tmp_path):
        path = write(tmp_path, "a,b\n1,<LOD>\n2,3\n")
        data = load_csv(path, missing_sentinel="<LOD>")
        assert data.values[0, 1] == MISSING
        assert data.values[1, 1] == 3

    def test_file_not_found(self, tmp_path):
        with pytest.raises(OSError):
            load_csv(tmp_path / "nope.csv")

    def test_ragged_rows(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n3\n")
        with pytest.raises(ValueError, match=":3: expected 2 cells"):
            load_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = write(tmp_path, "a,b\n1,x\n")
        with pytest.raises(ValueError):
            load_csv(path)

    def test_duplicate_columns(self, tmp_path):
        path = write(tmp_path, "a,a\n1,2\n")
        with pytest.raises(ValueError, match="duplicate"):
            load_csv(path)

    def test_missing_label_column(self, tmp_path):
        path = write(tmp_path, "a,b\n1,2\n")
        with pytest.raises(ValueError):
            load_csv(path, label_column="species")

    def test_round_trip_is_value_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        data = Dataset(rng.normal(size=(7, 3)), [str(i) for i in range(7)],
                       ["x", "y", "z"], labels=list("AAABBBC"))
        out = tmp_path / "out.csv"
        save_csv(data, out)
        back = load_csv(out, label_column="label")
        assert np.array_equal(back.values, data.values)
        assert back.labels == data.labels
        assert back.var_names == data.var_names

    def test_round_trip_survives_rewrite(self, tmp_path):
        path = write(tmp_path, "a,b\n0.1,2.5000000000000001\n-3,4e-12\n")
        first = load_csv(path)
        out = tmp_path / "again.csv"
        save_csv(first, out)
        second = load_csv(out)
        assert np.array_equal(first.values, second.values)


class TestPreprocess:
    def test_log10_exact_powers(self, tmp_path):
        data = Dataset(np.array([[100.0, 1000.0]]), ["0"], ["a", "b"])
        out = preprocess(data, ["log10"])
        assert np.array_equal(out.values, [[2.0, 3.0]])

    def test_log10_rejects_nonpositive(self):
        data = Dataset(np.array([[1.0, 0.0]]), ["0"], ["a", "b"])
        with pytest.raises(ValueError, match="positive"):
            preprocess(data, ["log10"])

    def test_snv_hand_example(self):
        data = Dataset(np.array([[1.0, 2.0, 3.0]]), ["0"], ["a", "b", "c"])
        out = preprocess(data, ["snv"])
        expect = 1.224744871391589
        assert out.values[0, 0] == pytest.approx(-expect, abs=1e-15)
        assert out.values[0, 1] == 0.0
        assert out.values[0, 2] == pytest.approx(expect, abs=1e-15)

    @given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=6),
                    min_size=1, max_size=5).filter(
        lambda rows: len({len(r) for r in rows}) == 1
        and all(max(r) - min(r) > 1e-6 for r in rows)))
    @settings(max_examples=50, deadline=None)
    def test_snv_rows_are_standardized(self, rows):
        values = np.array(rows, dtype=np.float64)
        data = Dataset(values, [str(i) for i in range(values.shape[0])],
                       [f"v{j}" for j in range(values.shape[1])])
        out = preprocess(data, ["snv"])
        assert np.all(np.abs(out.values.mean(axis=1)) < 1e-12)
        assert np.all(np.abs(out.values.std(axis=1) - 1) < 1e-12)

    def test_snv_constant_row_rejected(self):
        data = Dataset(np.array([[2.0, 2.0, 2.0]]), ["0"], ["a", "b", "c"])
        with pytest.raises(ValueError, match="constant row"):
            preprocess(data, ["snv"])

    def test_standardize_columns(self):
        rng = np.random.default_rng(5)
        data = Dataset(rng.normal(3, 4, size=(20, 3)), [str(i) for i in range(20)],
                       ["a", "b", "c"])
        out = preprocess(data, ["standardize"])
        assert np.all(np.abs(out.values.mean(axis=0)) < 1e-12)
        assert np.all(np.abs(out.values.std(axis=0) - 1) < 1e-12)

    def test_standardize_constant_column_rejected(self):
        data = Dataset(np.array([[1.0, 5.0], [2.0, 5.0]]), ["0", "1"], ["a", "b"])
        with pytest.raises(ValueError, match="'b'"):
            preprocess(data, ["standardize"])

    def test_impute_replaces_sentinel_cells(self, tmp_path):
        path = write(tmp_path, "a,b\n1,<LOD>\n2,3\n")
        data = load_csv(path, missing_sentinel="<LOD>")
        out = preprocess(data, ["impute:0"])
        assert out.values[0, 1] == 0.0
        assert out.values[1, 1] == 3.0

    def test_impute_with_explicit_sentinel(self):
        data = Dataset(np.array([[1.0, -999.0]]), ["0"], ["a", "b"])
        out = preprocess(data, ["impute:-999:0.5"])
        assert out.values[0, 1] == 0.5

    def test_numeric_step_refuses_unresolved_missing(self, tmp_path):
        path = write(tmp_path, "a,b\n1,<LOD>\n", name="m.csv")
        data = load_csv(path, missing_sentinel="<LOD>")
        with pytest.raises(ValueError, match="impute"):
            preprocess(data, ["snv"])

    def test_steps_apply_in_order(self):
        data = Dataset(np.array([[10.0, 1000.0], [100.0, 10.0]]),
                       ["0", "1"], ["a", "b"])
        # log10 then snv differs from snv alone; spot-check the composition
        out = preprocess(data, ["log10", "snv"])
        logged = np.log10(data.values)
        mean = logged.mean(axis=1, keepdims=True)
        std = logged.std(axis=1, keepdims=True)
        assert np.allclose(out.values, (logged - mean) / std, atol=1e-15)

    def test_parse_rejects_unknown_and_malformed(self):
        with pytest.raises(ValueError):
            parse_preprocess_step("boxcox")
        with pytest.raises(ValueError):
            parse_preprocess_step("snv:2")
        with pytest.raises(ValueError):
            parse_preprocess_step("impute")
        with pytest.raises(ValueError):
            parse_preprocess_step("impute:a:b")
        assert parse_preprocess_step("impute:0") == ("impute", MISSING, 0.0)
        assert parse_preprocess_step("impute:-1:2") == ("impute", -1.0, 2.0)


class TestOrderByLabel:
    def test_stable_reorder(self):
        data = Dataset(np.arange(8, dtype=float).reshape(4, 2),
                       ["r0", "r1", "r2", "r3"], ["a", "b"],
                       labels=["B", "A", "B", "A"])
        ordered, blocks = order_by_label(data, ["A", "B"])
        assert ordered.labels == ["A", "A", "B", "B"]
        assert ordered.sample_ids == ["r1", "r3", "r0", "r2"]
        assert blocks.blocks == (("A", 0, 2), ("B", 2, 4))

    def test_permutation_preserves_rows(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=(10, 3))
        labels = list("ABCABCABCA")
        data = Dataset(values, [str(i) for i in range(10)], list("xyz"),
                       labels=labels)
        ordered, _ = order_by_label(data)
        orig = {tuple(row) for row in values}
        assert {tuple(row) for row in ordered.values} == orig
        back = {sid: tuple(row) for sid, row in zip(ordered.sample_ids, ordered.values)}
        for sid, row in zip(data.sample_ids, values):
            assert back[sid] == tuple(row)

    def test_iris_blocks_of_fifty(self):
        data = load_csv(bundled_iris_path(), label_column="species")
        _, blocks = order_by_label(data)
        assert blocks.sizes() == [50, 50, 50]

    def test_single_label_single_block(self):
        data = Dataset(np.ones((3, 1)), ["0", "1", "2"], ["a"],
                       labels=["x", "x", "x"])
        _, blocks = order_by_label(data)
        assert blocks.blocks == (("x", 0, 3),)

    def test_unknown_block_goes_last(self):
        data = Dataset(np.zeros((4, 1)), list("0123"), ["a"],
                       labels=["?", "B", "A", "?"])
        _, blocks = order_by_label(data)
        assert blocks.labels() == ["B", "A", "?"]

    def test_requires_labels(self):
        data = Dataset(np.zeros((2, 1)), ["0", "1"], ["a"])
        with pytest.raises(ValueError, match="labels"):
            order_by_label(data)

    def test_label_order_must_cover(self):
        data = Dataset(np.zeros((2, 1)), ["0", "1"], ["a"], labels=["A", "B"])
        with pytest.raises(ValueError, match="missing"):
            order_by_label(data, ["A"])
        with pytest.raises(ValueError, match="absent"):
            order_by_label(data, ["A", "B", "C"])
        with pytest.raises(ValueError, match="duplicates"):
            order_by_label(data, ["A", "B", "A"])


class TestSubset:
    def make(self):
        return Dataset(np.arange(12, dtype=float).reshape(4, 3),
                       list("0123"), ["x", "y", "z"],
                       labels=["A", "B", "A", "C"])

    def test_identity(self):
        data = self.make()
        out = subset(data, ["A", "B", "C"])
        assert np.array_equal(out.values, data.values)

    def test_drop_vars(self):
        out = subset(self.make(), ["A", "B", "C"], drop_vars=["y"])
        assert out.var_names == ["x", "z"]
        assert out.n_vars == 2

    def test_keep_one_label(self):
        out = subset(self.make(), ["A"])
        assert out.labels == ["A", "A"]
        assert out.sample_ids == ["0", "2"]

    def test_unknown_names_rejected(self):
        with pytest.raises(ValueError):
            subset(self.make(), ["D"])
        with pytest.raises(ValueError):
            subset(self.make(), ["A"], drop_vars=["w"])
        with pytest.raises(ValueError):
            subset(self.make(), [])


class TestClassBlocks:
    def test_contiguity_enforced(self):
        with pytest.raises(ValueError):
            ClassBlocks((("A", 0, 2), ("B", 3, 4)))
        with pytest.raises(ValueError):
            ClassBlocks((("A", 0, 0),))

    def test_from_labels_rejects_non_contiguous(self):
        with pytest.raises(ValueError, match="contiguous"):
            ClassBlocks.from_labels(["A", "B", "A"])

    def test_lookup_helpers(self):
        blocks = ClassBlocks.from_labels(["A", "A", "B", "C", "C", "C"])
        assert blocks.n == 6
        assert blocks.n_blocks == 3
        assert blocks.range_of(1) == (2, 3)
        assert blocks.block_of(4) == 2
        assert blocks.index_of("B") == 1
        with pytest.raises(ValueError):
            blocks.index_of("D")

    def test_csv_round_trip(self, tmp_path):
        blocks = ClassBlocks.from_labels(["A", "A", "B"])
        path = tmp_path / "blocks.csv"
        save_blocks_csv(blocks, path)
        assert load_blocks_csv(path) == blocks


def test_iris_values_have_four_numeric_columns():
    data = load_csv(bundled_iris_path(), label_column="species")
    assert data.var_names == ["sepal_length", "sepal_width",
                              "petal_length", "petal_width"]
    assert np.isfinite(data.values).all()
    assert math.isclose(float(data.values[:, 0].mean()), 5.8433, abs_tol=1e-3)
