"""Unsupervised spread-partitioning tree ensembles over numeric tables.

The pipeline: load a CSV, order rows into contiguous label blocks, grow
an ensemble of unsupervised trees, tally terminal-node co-occurrence
into an affinity matrix, and quantify the block structure with quotient
metrics, outlier flags, and vote assignment.  Reference clustering and
correlation machinery support validation sweeps, and a CLI drives the
whole thing.
"""

__version__ = "0.1.0"

from .dataio import (
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
from .tree import (
    GAIN_MODES,
    SPREAD_METRICS,
    Branch,
    GrowthConfig,
    Leaf,
    SplitCandidate,
    UnchartedTree,
    best_split,
    gain,
    grow_tree,
    spread,
)
from .forest import (
    SplitUsage,
    ThresholdUsage,
    UnchartedForest,
    VariableUsage,
    build_affinity,
    default_vars_per_tree,
    load_affinity_csv,
    resolve_n_jobs,
    save_affinity_csv,
    split_usage_from_trees,
)
from .metrics import (
    MetricsReport,
    OutlierFlag,
    OutlierScan,
    Vote,
    block_iq,
    build_report,
    flag_outliers,
    iq_matrix,
    row_iq,
    row_iq_values,
    tiq,
    tsaq,
    vote_assign,
    write_report_csv,
    write_report_json,
    write_votes_csv,
)
from .refcluster import (
    Clustering,
    SweepRecord,
    blocks_from_assignments,
    cluster_variances,
    fisher_ci,
    kmeans,
    nn1_classify,
    pca_scores,
    pearson_r,
    summarize_sweep,
    sweep_compare,
    ward_cluster,
)
from .pgm import block_overlay_pgm, read_pgm, write_pgm

__all__ = [
    "__version__",
    "MISSING",
    "ClassBlocks",
    "Dataset",
    "bundled_iris_path",
    "load_blocks_csv",
    "load_csv",
    "order_by_label",
    "parse_preprocess_step",
    "preprocess",
    "save_blocks_csv",
    "save_csv",
    "subset",
    "GAIN_MODES",
    "SPREAD_METRICS",
    "Branch",
    "GrowthConfig",
    "Leaf",
    "SplitCandidate",
    "UnchartedTree",
    "best_split",
    "gain",
    "grow_tree",
    "spread",
    "SplitUsage",
    "ThresholdUsage",
    "UnchartedForest",
    "VariableUsage",
    "build_affinity",
    "default_vars_per_tree",
    "load_affinity_csv",
    "resolve_n_jobs",
    "save_affinity_csv",
    "split_usage_from_trees",
    "MetricsReport",
    "OutlierFlag",
    "OutlierScan",
    "Vote",
    "block_iq",
    "build_report",
    "flag_outliers",
    "iq_matrix",
    "row_iq",
    "row_iq_values",
    "tiq",
    "tsaq",
    "vote_assign",
    "write_report_csv",
    "write_report_json",
    "write_votes_csv",
    "Clustering",
    "SweepRecord",
    "blocks_from_assignments",
    "cluster_variances",
    "fisher_ci",
    "kmeans",
    "nn1_classify",
    "pca_scores",
    "pearson_r",
    "summarize_sweep",
    "sweep_compare",
    "ward_cluster",
    "block_overlay_pgm",
    "read_pgm",
    "write_pgm",
]
