"""Block quotients over an affinity matrix laid out against class blocks.

A block quotient is the mean affinity between two blocks: the sum of the
matrix entries over block i's rows and block j's columns divided by the
product of the block sizes.  The diagonal case (i = j, diagonal entries
included) measures within-block homogeneity; its block average and the
off-diagonal block average condense the whole matrix to two numbers.
Row-level quotients, sigma-rule flags, and maximum-vote label assignment
build on the same slices.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataio import ClassBlocks
from .validation import check_matrix, check_square


def _check_blocks(P: np.ndarray, blocks: ClassBlocks):
    if blocks.n != P.shape[0]:
        raise ValueError(f"blocks cover {blocks.n} rows but the matrix has {P.shape[0]}")


def _label_of(blocks: ClassBlocks, row: int) -> str:
    return blocks.blocks[blocks.block_of(row)][0]


def block_iq(P, blocks: ClassBlocks, i: int, j: int) -> float:
    """Mean affinity between block i's rows and block j's columns."""
    P = check_square(check_matrix(P, "P"))
    _check_blocks(P, blocks)
    i_start, i_end = blocks.range_of(i)
    j_start, j_end = blocks.range_of(j)
    size = (i_end - i_start) * (j_end - j_start)
    return float(P[i_start:i_end, j_start:j_end].sum() / size)


def iq_matrix(P, blocks: ClassBlocks) -> np.ndarray:
    """k x k matrix of block quotients; the diagonal holds the self quotients."""
    P = check_square(check_matrix(P, "P"))
    _check_blocks(P, blocks)
    k = blocks.n_blocks
    out = np.empty((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            out[i, j] = block_iq(P, blocks, i, j)
    return out


def tiq(P, blocks: ClassBlocks) -> float:
    """Mean block quotient over ordered pairs of distinct blocks."""
    if blocks.n_blocks < 2:
        raise ValueError("tiq needs at least 2 blocks")
    m = iq_matrix(P, blocks)
    k = m.shape[0]
    off = m.sum() - np.trace(m)
    return float(off / (k * k - k))


def tsaq(P, blocks: ClassBlocks) -> float:
    """Mean self quotient over all blocks."""
    m = iq_matrix(P, blocks)
    return float(np.trace(m) / m.shape[0])


def row_iq(P, blocks: ClassBlocks, r: int) -> float:
    """Mean affinity of row r with every column outside its own block."""
    values = row_iq_values(P, blocks)
    if not 0 <= r < values.size:
        raise ValueError(f"row {r} out of range")
    return float(values[r])


def row_iq_values(P, blocks: ClassBlocks) -> np.ndarray:
    """Outside-block mean affinity for every row at once."""
    P = check_square(check_matrix(P, "P"))
    _check_blocks(P, blocks)
    n = P.shape[0]
    if blocks.n_blocks < 2:
        raise ValueError("row quotients are undefined with a single block")
    out = np.empty(n, dtype=np.float64)
    for i in range(blocks.n_blocks):
        start, end = blocks.range_of(i)
        outside = n - (end - start)
        rows = P[start:end]
        out[start:end] = (rows.sum(axis=1) - rows[:, start:end].sum(axis=1)) / outside
    return out


@dataclass(frozen=True)
class OutlierFlag:
    index: int
    value: float
    z: float


@dataclass(frozen=True)
class OutlierScan:
    mean: float
    std: float
    threshold_sigma: float
    degenerate: bool
    flags: tuple


def flag_outliers(row_iqs, threshold_sigma: float = 3.0) -> OutlierScan:
    """Flag rows whose quotient exceeds mean + sigma * population std.

    A zero-spread vector flags nothing and the scan is marked degenerate.
    """
    values = np.asarray(row_iqs, dtype=np.float64).ravel()
    if values.size < 2:
        raise ValueError("flag_outliers needs at least 2 samples")
    if not np.isfinite(values).all():
        raise ValueError("row quotients must be finite")
    mean = float(np.mean(values))
    std = float(np.std(values))
    if std == 0.0:
        return OutlierScan(mean, std, float(threshold_sigma), True, ())
    cutoff = mean + threshold_sigma * std
    flags = tuple(
        OutlierFlag(int(i), float(values[i]), float((values[i] - mean) / std))
        for i in np.flatnonzero(values > cutoff)
    )
    return OutlierScan(mean, std, float(threshold_sigma), False, flags)


@dataclass(frozen=True)
class Vote:
    """Outcome of the maximum-vote assignment for one unknown row."""

    row: int
    means: tuple  # (label, mean affinity) per candidate block, block order
    assigned: Optional[str]
    tied: tuple
    unassignable: bool


def vote_assign(P, blocks: ClassBlocks, unknown_block: int):
    """Assign each row of the unknown block to its highest-mean candidate block.

    Exact ties leave ``assigned`` unset and list the tied labels; a row
    with zero affinity to every candidate is marked unassignable.
    """
    P = check_square(check_matrix(P, "P"))
    _check_blocks(P, blocks)
    if not 0 <= unknown_block < blocks.n_blocks:
        raise ValueError(f"unknown_block {unknown_block} out of range")
    if blocks.n_blocks < 2:
        raise ValueError("vote assignment needs at least one candidate block")
    candidates = [i for i in range(blocks.n_blocks) if i != unknown_block]
    u_start, u_end = blocks.range_of(unknown_block)
    votes = []
    for r in range(u_start, u_end):
        means = []
        for i in candidates:
            start, end = blocks.range_of(i)
            means.append((blocks.blocks[i][0], float(P[r, start:end].mean())))
        top = max(m for _, m in means)
        if top <= 0.0:
            votes.append(Vote(r, tuple(means), None, (), True))
            continue
        leaders = tuple(label for label, m in means if m == top)
        if len(leaders) == 1:
            votes.append(Vote(r, tuple(means), leaders[0], (), False))
        else:
            votes.append(Vote(r, tuple(means), None, leaders, False))
    return votes


@dataclass(frozen=True)
class MetricsReport:
    """Everything the block analysis produces for one affinity matrix."""

    blocks: ClassBlocks
    sample_ids: tuple
    iq: np.ndarray
    tiq: float
    tsaq: float
    row_iq: np.ndarray
    outliers: OutlierScan
    votes: Optional[list] = None


def build_report(P, blocks: ClassBlocks, sample_ids, threshold_sigma: float = 3.0,
                 unknown_block: Optional[int] = None) -> MetricsReport:
    P = check_square(check_matrix(P, "P"))
    _check_blocks(P, blocks)
    if len(sample_ids) != P.shape[0]:
        raise ValueError("sample_ids length must match the matrix")
    if blocks.n_blocks < 2:
        raise ValueError("block metrics need at least 2 blocks")
    values = row_iq_values(P, blocks)
    votes = None
    if unknown_block is not None:
        votes = vote_assign(P, blocks, unknown_block)
    return MetricsReport(
        blocks=blocks,
        sample_ids=tuple(str(s) for s in sample_ids),
        iq=iq_matrix(P, blocks),
        tiq=tiq(P, blocks),
        tsaq=tsaq(P, blocks),
        row_iq=values,
        outliers=flag_outliers(values, threshold_sigma),
        votes=votes,
    )


def _vote_text(vote: Vote) -> str:
    if vote.unassignable:
        return "unassignable"
    if vote.assigned is not None:
        return vote.assigned
    return "tie:" + "|".join(vote.tied)


def report_to_dict(report: MetricsReport) -> dict:
    """JSON-ready view of the report; key order is fixed for reproducibility."""
    scan = report.outliers
    doc = {
        "n_samples": report.blocks.n,
        "blocks": [
            {"label": label, "start": start, "end": end}
            for label, start, end in report.blocks.blocks
        ],
        "tiq": report.tiq,
        "tsaq": report.tsaq,
        "block_iq": [[float(v) for v in row] for row in report.iq],
        "row_iq": [float(v) for v in report.row_iq],
        "outliers": {
            "mean": scan.mean,
            "std": scan.std,
            "threshold_sigma": scan.threshold_sigma,
            "degenerate": scan.degenerate,
            "flags": [
                {
                    "index": f.index,
                    "id": report.sample_ids[f.index],
                    "label": _label_of(report.blocks, f.index),
                    "row_iq": f.value,
                    "z": f.z,
                }
                for f in scan.flags
            ],
        },
        "votes": None,
    }
    if report.votes is not None:
        doc["votes"] = [
            {
                "index": v.row,
                "id": report.sample_ids[v.row],
                "assigned": v.assigned,
                "tied": list(v.tied),
                "unassignable": v.unassignable,
                "means": {label: m for label, m in v.means},
            }
            for v in report.votes
        ]
    return doc


def write_report_json(report: MetricsReport, path):
    with open(path, "w", newline="") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")


def write_report_csv(report: MetricsReport, path):
    """One row per sample: id, label, row quotient, z, flag bit, vote."""
    scan = report.outliers
    flagged = {f.index for f in scan.flags}
    vote_by_row = {}
    if report.votes is not None:
        vote_by_row = {v.row: _vote_text(v) for v in report.votes}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label", "row_iq", "z", "flagged", "vote"])
        for r in range(report.blocks.n):
            value = float(report.row_iq[r])
            z = "" if scan.degenerate else f"{(value - scan.mean) / scan.std:.17g}"
            writer.writerow([
                report.sample_ids[r],
                _label_of(report.blocks, r),
                f"{value:.17g}",
                z,
                int(r in flagged),
                vote_by_row.get(r, ""),
            ])


def write_votes_csv(report: MetricsReport, path):
    """Per-unknown assignment table with every candidate mean spelled out."""
    if report.votes is None:
        raise ValueError("report carries no votes")
    labels = [label for label, _ in report.votes[0].means] if report.votes else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "assigned", "tie", "unassignable"]
                        + [f"mean_{label}" for label in labels])
        for v in report.votes:
            writer.writerow([
                report.sample_ids[v.row],
                v.assigned if v.assigned is not None else "",
                "|".join(v.tied),
                int(v.unassignable),
            ] + [f"{m:.17g}" for _, m in v.means])
