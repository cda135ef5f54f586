"""Tabular data loading, preprocessing and label-ordered views.

CSV convention: comma delimited, UTF-8, one header row, ``.`` decimal
point.  Every non-label cell must parse as a finite real number unless it
matches the missing-value sentinel given at load time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .validation import check_matrix

# Reserved in-matrix stand-in for cells that matched the missing-value
# sentinel at load time.  Finite, so a loaded Dataset never carries NaN or
# Inf; an explicit impute step must clear it before any numeric transform.
MISSING = float(np.finfo(np.float64).min)

PREPROCESS_STEPS = ("log10", "snv", "standardize", "impute")


@dataclass
class Dataset:
    """A numeric sample matrix plus row ids, column names and optional labels."""

    values: np.ndarray
    sample_ids: list[str]
    var_names: list[str]
    labels: list[str] | None = None
    unknown_label: str = "?"

    def __post_init__(self):
        self.values = check_matrix(self.values, "values")
        n, d = self.values.shape
        if len(self.sample_ids) != n:
            raise ValueError("sample_ids length does not match the row count")
        if len(self.var_names) != d:
            raise ValueError("var_names length does not match the column count")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("labels length does not match the row count")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def distinct_labels(self) -> list[str]:
        """Distinct labels in first-appearance order."""
        if self.labels is None:
            return []
        return list(dict.fromkeys(self.labels))

    def known_labels(self) -> list[str]:
        return [lab for lab in self.distinct_labels() if lab != self.unknown_label]

    def has_unknown(self) -> bool:
        return self.labels is not None and self.unknown_label in self.labels


@dataclass(frozen=True)
class ClassBlocks:
    """Contiguous, non-overlapping row blocks covering [0, n), one per label."""

    blocks: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("at least one block is required")
        expect = 0
        for label, start, end in self.blocks:
            if start != expect or end <= start:
                raise ValueError(f"block {label!r} [{start}, {end}) breaks contiguity")
            expect = end

    @classmethod
    def from_labels(cls, ordered_labels) -> "ClassBlocks":
        """Build blocks from a label sequence that is already contiguous."""
        labels = list(ordered_labels)
        if not labels:
            raise ValueError("cannot build blocks from an empty label sequence")
        blocks: list[tuple[str, int, int]] = []
        start = 0
        for i in range(1, len(labels) + 1):
            if i == len(labels) or labels[i] != labels[start]:
                blocks.append((str(labels[start]), start, i))
                start = i
        seen = [b[0] for b in blocks]
        if len(set(seen)) != len(seen):
            raise ValueError("labels are not contiguous; reorder rows by label first")
        return cls(tuple(blocks))

    @property
    def n(self) -> int:
        return self.blocks[-1][2]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def labels(self) -> list[str]:
        return [b[0] for b in self.blocks]

    def sizes(self) -> list[int]:
        return [end - start for _, start, end in self.blocks]

    def range_of(self, i: int) -> tuple[int, int]:
        _, start, end = self.blocks[i]
        return start, end

    def block_of(self, row: int) -> int:
        for i, (_, start, end) in enumerate(self.blocks):
            if start <= row < end:
                return i
        raise ValueError(f"row {row} is outside [0, {self.n})")

    def index_of(self, label: str) -> int:
        for i, (lab, _, _) in enumerate(self.blocks):
            if lab == label:
                return i
        raise ValueError(f"no block labeled {label!r}")


def load_csv(path, label_column: str | None = None, missing_sentinel: str | None = None,
             unknown_label: str = "?") -> Dataset:
    """Load a numeric CSV with a header row.

    Parameters
    ----------
    path : str or Path
        CSV file to read.
    label_column : str, optional
        Name of the column holding class labels; removed from the matrix.
    missing_sentinel : str, optional
        Cell text marking a missing value.  Matching cells are stored as a
        reserved real value and must be cleared by an ``impute`` step before
        any numeric preprocessing.
    unknown_label : str
        Label string marking samples of unknown class (default ``"?"``).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ValueError(f"{path}: duplicate column names in header")
    label_idx = None
    if label_column is not None:
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
    var_names = [h for i, h in enumerate(header) if i != label_idx]
    if not var_names:
        raise ValueError(f"{path}: no numeric columns besides the label column")

    values: list[list[float]] = []
    labels: list[str] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        parsed: list[float] = []
        for i, cell in enumerate(row):
            cell = cell.strip()
            if i == label_idx:
                labels.append(cell)
                continue
            if missing_sentinel is not None and cell == missing_sentinel:
                parsed.append(MISSING)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: non-numeric cell {cell!r} in column "
                    f"{header[i]!r} with no matching sentinel"
                ) from None
            if not math.isfinite(v):
                raise ValueError(f"{path}:{lineno}: non-finite value {cell!r} in column {header[i]!r}")
            parsed.append(v)
        values.append(parsed)
    if not values:
        raise ValueError(f"{path}: no data rows")
    return Dataset(
        values=np.array(values, dtype=np.float64),
        sample_ids=[str(i) for i in range(len(values))],
        var_names=var_names,
        labels=labels if label_idx is not None else None,
        unknown_label=unknown_label,
    )


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def save_csv(data: Dataset, path, label_column: str = "label") -> None:
    """Write a Dataset back to CSV with full 17-significant-digit values."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(data.var_names)
        if data.labels is not None:
            header.append(label_column)
        writer.writerow(header)
        for i in range(data.n_samples):
            row = [_fmt(v) for v in data.values[i]]
            if data.labels is not None:
                row.append(data.labels[i])
            writer.writerow(row)


def parse_preprocess_step(step: str) -> tuple:
    """Parse a preprocessing step string into a (name, *params) tuple.

    Grammar: ``log10``, ``snv``, ``standardize``, ``impute:REPL`` or
    ``impute:SENTINEL:REPL`` where SENTINEL and REPL are real numbers.
    A one-argument impute targets the reserved missing-value stand-in.
    """
    name, *args = step.split(":")
    if name not in PREPROCESS_STEPS:
        raise ValueError(f"unknown preprocessing step {step!r}")
    if name != "impute":
        if args:
            raise ValueError(f"step {name!r} takes no arguments")
        return (name,)
    if len(args) not in (1, 2):
        raise ValueError("impute takes impute:REPLACEMENT or impute:SENTINEL:REPLACEMENT")
    try:
        nums = [float(a) for a in args]
    except ValueError:
        raise ValueError(f"non-numeric impute argument in {step!r}") from None
    if len(nums) == 1:
        return ("impute", MISSING, nums[0])
    return ("impute", nums[0], nums[1])


def preprocess(data: Dataset, steps) -> Dataset:
    """Apply preprocessing steps strictly in the order given.

    Steps are strings parsed by :func:`parse_preprocess_step`.  Numeric
    transforms refuse to run while reserved missing-value cells remain.
    """
    vals = data.values.copy()
    for raw in steps:
        name, *params = parse_preprocess_step(raw)
        if name in ("log10", "snv", "standardize") and (vals == MISSING).any():
            raise ValueError(
                f"step {name!r} reached with unresolved missing-value cells; "
                "add an impute step first"
            )
        if name == "log10":
            if (vals <= 0).any():
                raise ValueError("log10 requires strictly positive values")
            vals = np.log10(vals)
        elif name == "snv":
            mean = vals.mean(axis=1, keepdims=True)
            std = vals.std(axis=1, keepdims=True)
            if (std == 0).any():
                bad = int(np.nonzero(std.ravel() == 0)[0][0])
                raise ValueError(f"snv undefined for constant row {bad}")
            vals = (vals - mean) / std
        elif name == "standardize":
            mean = vals.mean(axis=0, keepdims=True)
            std = vals.std(axis=0, keepdims=True)
            if (std == 0).any():
                bad = data.var_names[int(np.nonzero(std.ravel() == 0)[0][0])]
                raise ValueError(f"standardize undefined for constant column {bad!r}")
            vals = (vals - mean) / std
        else:
            sentinel, replacement = params
            vals = np.where(vals == sentinel, replacement, vals)
    return replace(data, values=vals)


def order_by_label(data: Dataset, label_order=None) -> tuple[Dataset, ClassBlocks]:
    """Stable-reorder rows into contiguous label blocks.

    Without an explicit ``label_order`` the blocks follow first appearance,
    except that unknown-labeled samples form the final block.
    """
    if data.labels is None:
        raise ValueError("order_by_label requires labels")
    distinct = data.distinct_labels()
    if label_order is None:
        order = [lab for lab in distinct if lab != data.unknown_label]
        if data.unknown_label in distinct:
            order.append(data.unknown_label)
    else:
        order = list(label_order)
        if len(set(order)) != len(order):
            raise ValueError("label_order contains duplicates")
        missing = [lab for lab in distinct if lab not in order]
        if missing:
            raise ValueError(f"label_order is missing labels {missing}")
        extra = [lab for lab in order if lab not in distinct]
        if extra:
            raise ValueError(f"label_order names absent labels {extra}")
    pos = {lab: i for i, lab in enumerate(order)}
    keys = np.array([pos[lab] for lab in data.labels], dtype=np.intp)
    perm = np.argsort(keys, kind="stable")
    ordered = replace(
        data,
        values=data.values[perm],
        sample_ids=[data.sample_ids[i] for i in perm],
        labels=[data.labels[i] for i in perm],
    )
    blocks = ClassBlocks.from_labels(ordered.labels)
    return ordered, blocks


def subset(data: Dataset, keep_labels, drop_vars=None) -> Dataset:
    """Restrict to the given labels and drop the named variables."""
    if data.labels is None:
        raise ValueError("subset by label requires labels")
    keep = list(keep_labels)
    if not keep:
        raise ValueError("keep_labels must not be empty")
    present = set(data.labels)
    unknown = [lab for lab in keep if lab not in present]
    if unknown:
        raise ValueError(f"keep_labels names absent labels {unknown}")
    drop = list(drop_vars) if drop_vars else []
    bad = [v for v in drop if v not in data.var_names]
    if bad:
        raise ValueError(f"drop_vars names absent variables {bad}")
    row_mask = np.array([lab in keep for lab in data.labels])
    col_keep = [i for i, v in enumerate(data.var_names) if v not in drop]
    if not col_keep:
        raise ValueError("dropping every variable leaves an empty matrix")
    idx = np.nonzero(row_mask)[0]
    return replace(
        data,
        values=data.values[np.ix_(idx, col_keep)],
        sample_ids=[data.sample_ids[i] for i in idx],
        var_names=[data.var_names[i] for i in col_keep],
        labels=[data.labels[i] for i in idx],
    )


def save_blocks_csv(blocks: ClassBlocks, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "start", "end"])
        for label, start, end in blocks.blocks:
            writer.writerow([label, start, end])


def load_blocks_csv(path) -> ClassBlocks:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or [c.strip() for c in rows[0]] != ["label", "start", "end"]:
        raise ValueError(f"{path}: expected a header 'label,start,end'")
    blocks = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 cells")
        try:
            blocks.append((row[0], int(row[1]), int(row[2])))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-integer block bounds") from None
    return ClassBlocks(tuple(blocks))


def bundled_iris_path() -> Path:
    """Path of the iris measurements CSV shipped with the package."""
    return Path(__file__).parent / "data" / "iris.csv"
