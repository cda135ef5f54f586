"""Command-line front end.

Subcommands: analyze (full block analysis of a labeled CSV), heatmap
(render an affinity CSV to PGM), assign (maximum-vote labeling of
unknown rows), compare (clusterer sweep with correlation summary), and
rerun (replay a manifest and reproduce its outputs byte for byte).

Exit codes: 0 success, 1 usage errors, 2 data errors, 3 degenerate
analyses.  Every command validates and computes before it writes, so a
nonzero exit never leaves partial artifacts behind.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .dataio import (
    Dataset,
    load_blocks_csv,
    load_csv,
    order_by_label,
    preprocess,
    save_blocks_csv,
)
from .forest import UnchartedForest, load_affinity_csv, save_affinity_csv
from .metrics import build_report, write_report_csv, write_report_json, write_votes_csv
from .pgm import block_overlay_pgm, write_pgm
from .refcluster import sweep_compare
from .validation import check_square


class UsageError(Exception):
    """Bad flag combinations detected after argparse."""


class DegenerateAnalysisError(Exception):
    """Structurally valid input on which the requested analysis is undefined."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this tool reserves 2 for data
    # errors, so usage problems are remapped to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _node_size(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"must be >= 2, got {value}")
    return value


def _add_data_flags(sub, labels_required=False):
    sub.add_argument("--input", required=True, help="input CSV with a header row")
    sub.add_argument("--labels", required=labels_required, default=None,
                     help="name of the label column")
    sub.add_argument("--unknown-label", default="?",
                     help="label marking rows of unknown class (default '?')")
    sub.add_argument("--missing-sentinel", default=None,
                     help="cell text to treat as a missing value")
    sub.add_argument("--preprocess", action="append", default=None,
                     metavar="STEP",
                     help="preprocessing step, in order; repeatable "
                          "(log10 | snv | standardize | impute:REPL | impute:SENT:REPL)")


def _add_forest_flags(sub, trees_default, depth_default):
    sub.add_argument("--trees", type=_positive_int, default=trees_default,
                     help=f"number of trees (default {trees_default})")
    if depth_default is None:
        sub.add_argument("--depth", type=_nonneg_int, default=None,
                         help="tree depth limit (default: rounded log2 of the "
                              "number of known classes, at least 1)")
    else:
        sub.add_argument("--depth", type=_nonneg_int, default=depth_default,
                         help=f"tree depth limit (default {depth_default})")
    sub.add_argument("--min-node-size", type=_node_size, default=5,
                     help="nodes smaller than this are never split (default 5)")
    sub.add_argument("--metric", choices=["variance", "mad", "ad"],
                     default="variance", help="spread measure (default variance)")
    sub.add_argument("--gain", choices=["sum", "weighted", "literal"],
                     default="sum", help="gain formula (default sum)")
    sub.add_argument("--vars-per-tree", type=_positive_int, default=None,
                     help="variables drawn per tree (default round(sqrt(n_vars)))")
    sub.add_argument("--seed", type=_nonneg_int, default=0,
                     help="master random seed (default 0)")
    sub.add_argument("--jobs", type=_positive_int, default=None,
                     help="worker threads (default: UF_THREADS, else cpu count)")


def build_parser() -> _Parser:
    parser = _Parser(prog="uncharted",
                     description="Unsupervised tree-ensemble analysis of numeric CSVs.")
    parser.add_argument("--version", action="version", version=f"uncharted {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    analyze = commands.add_parser(
        "analyze", help="grow a forest and report block metrics")
    _add_data_flags(analyze)
    _add_forest_flags(analyze, trees_default=100, depth_default=None)
    analyze.add_argument("--out-dir", default=".", help="output directory (default .)")
    analyze.set_defaults(func=cmd_analyze)

    heatmap = commands.add_parser(
        "heatmap", help="render an affinity CSV as a grayscale PGM")
    heatmap.add_argument("--matrix", required=True, help="affinity CSV to render")
    heatmap.add_argument("--blocks", default=None,
                         help="blocks CSV; adds a boundary-overlay image")
    heatmap.add_argument("--out", required=True, help="output PGM path")
    heatmap.set_defaults(func=cmd_heatmap)

    assign = commands.add_parser(
        "assign", help="vote unknown-labeled rows into the labeled classes")
    _add_data_flags(assign, labels_required=True)
    _add_forest_flags(assign, trees_default=100, depth_default=None)
    assign.add_argument("--out-dir", default=".", help="output directory (default .)")
    assign.set_defaults(func=cmd_assign)

    compare = commands.add_parser(
        "compare", help="sweep k-means and Ward clusterings against forest metrics")
    _add_data_flags(compare)
    _add_forest_flags(compare, trees_default=200, depth_default=5)
    compare.add_argument("--kmin", type=_positive_int, default=2,
                         help="smallest cluster count (default 2)")
    compare.add_argument("--kmax", type=_positive_int, default=7,
                         help="largest cluster count (default 7)")
    compare.add_argument("--replicates", type=_positive_int, default=15,
                         help="replicates per (method, k) cell (default 15)")
    compare.add_argument("--out-dir", default=".", help="output directory (default .)")
    compare.set_defaults(func=cmd_compare)

    rerun = commands.add_parser(
        "rerun", help="replay a manifest and reproduce its outputs")
    rerun.add_argument("--manifest", required=True, help="manifest.json to replay")
    rerun.set_defaults(func=cmd_rerun)

    return parser


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_dataset(args) -> Dataset:
    data = load_csv(args.input, label_column=args.labels,
                    missing_sentinel=args.missing_sentinel,
                    unknown_label=args.unknown_label)
    if args.preprocess:
        data = preprocess(data, args.preprocess)
    return data


def _default_depth(data: Dataset) -> int:
    k = len(data.known_labels())
    if k < 1:
        return 1
    return max(1, int(round(math.log2(k))))


def _resolve_depth(args, data: Dataset) -> int:
    depth = args.depth if args.depth is not None else _default_depth(data)
    if depth == 0:
        print("warning: depth 0 grows single-leaf trees; "
              "the affinity matrix will be all ones", file=sys.stderr)
    return depth


def _make_forest(args, depth: int) -> UnchartedForest:
    return UnchartedForest(
        n_trees=args.trees,
        max_depth=depth,
        min_node_size=args.min_node_size,
        metric=args.metric,
        gain_mode=args.gain,
        vars_per_tree=args.vars_per_tree,
        random_state=args.seed,
        n_jobs=args.jobs,
    )


def _data_argv(args, input_abs: str) -> list:
    argv = ["--input", input_abs]
    if args.labels is not None:
        argv += ["--labels", args.labels]
    argv += ["--unknown-label", args.unknown_label]
    if args.missing_sentinel is not None:
        argv += ["--missing-sentinel", args.missing_sentinel]
    for step in args.preprocess or []:
        argv += ["--preprocess", step]
    return argv


def _forest_argv(args, depth: int, vars_per_tree: int) -> list:
    return ["--trees", str(args.trees), "--depth", str(depth),
            "--min-node-size", str(args.min_node_size),
            "--metric", args.metric, "--gain", args.gain,
            "--vars-per-tree", str(vars_per_tree), "--seed", str(args.seed)]


def _common_flags(args, depth: int, vars_per_tree: int, input_abs: str,
                  out_abs: str) -> dict:
    return {
        "input": input_abs,
        "labels": args.labels,
        "unknown_label": args.unknown_label,
        "missing_sentinel": args.missing_sentinel,
        "preprocess": list(args.preprocess or []),
        "trees": args.trees,
        "depth": depth,
        "min_node_size": args.min_node_size,
        "metric": args.metric,
        "gain": args.gain,
        "vars_per_tree": vars_per_tree,
        "seed": args.seed,
        "out_dir": out_abs,
    }


def _write_manifest(path, command: str, argv: list, flags: dict, seed,
                    input_path, outputs: list) -> None:
    doc = {
        "version": __version__,
        "command": command,
        "flags": flags,
        "seed": seed,
        "input_sha256": _sha256(input_path),
        "input_path": str(Path(input_path).resolve()),
        "outputs": outputs,
        "argv": argv,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", newline="") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_splits_json(usage, var_names, path) -> None:
    doc = {
        "n_splits": usage.n_splits,
        "variables": [
            {
                "var_index": v.var_index,
                "var_name": var_names[v.var_index],
                "usage_count": v.usage_count,
                "usage_fraction": v.usage_fraction,
                "thresholds": [
                    {"threshold": t.threshold, "count": t.count,
                     "ever_at_root": t.ever_at_root}
                    for t in v.thresholds
                ],
            }
            for v in usage.variables
        ],
    }
    with open(path, "w", newline="") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_analyze(args) -> int:
    data = _load_dataset(args)
    if data.labels is None:
        raise DegenerateAnalysisError("block metrics need a label column; pass --labels")
    ordered, blocks = order_by_label(data)
    if blocks.n_blocks < 2:
        raise DegenerateAnalysisError("block metrics need at least 2 label blocks")
    depth = _resolve_depth(args, data)
    forest = _make_forest(args, depth).fit(ordered.values)
    P = forest.affinity_
    report = build_report(P, blocks, ordered.sample_ids)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_affinity_csv(P, ordered.sample_ids, out / "affinity.csv")
    save_blocks_csv(blocks, out / "blocks.csv")
    write_report_json(report, out / "report.json")
    write_report_csv(report, out / "report.csv")
    write_pgm(P, out / "affinity.pgm")
    block_overlay_pgm(P, blocks, out / "affinity_blocks.pgm")
    _write_splits_json(forest.split_usage_, ordered.var_names, out / "splits.json")
    outputs = ["affinity.csv", "affinity.ids.txt", "blocks.csv", "report.json",
               "report.csv", "affinity.pgm", "affinity_blocks.pgm", "splits.json"]
    input_abs = str(Path(args.input).resolve())
    argv = (["analyze"] + _data_argv(args, input_abs)
            + _forest_argv(args, depth, forest.vars_per_tree_)
            + ["--out-dir", str(out.resolve())])
    flags = _common_flags(args, depth, forest.vars_per_tree_, input_abs,
                          str(out.resolve()))
    _write_manifest(out / "manifest.json", "analyze", argv, flags, args.seed,
                    args.input, outputs)

    print(f"analyzed {blocks.n} samples in {blocks.n_blocks} blocks: "
          f"tsaq {report.tsaq:.6g}, tiq {report.tiq:.6g}, "
          f"{len(report.outliers.flags)} flagged")
    print(f"wrote {len(outputs) + 1} files to {out}")
    return 0


def cmd_heatmap(args) -> int:
    matrix, _ = load_affinity_csv(args.matrix)
    check_square(matrix, "matrix")
    blocks = None
    if args.blocks is not None:
        blocks = load_blocks_csv(args.blocks)
        if blocks.n != matrix.shape[0]:
            raise ValueError(f"blocks cover {blocks.n} rows but the matrix "
                             f"has {matrix.shape[0]}")
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(matrix, out)
    outputs = [out.name]
    if blocks is not None:
        overlay = out.parent / (out.stem + "_blocks.pgm")
        block_overlay_pgm(matrix, blocks, overlay)
        outputs.append(overlay.name)

    matrix_abs = str(Path(args.matrix).resolve())
    argv = ["heatmap", "--matrix", matrix_abs, "--out", str(out.resolve())]
    flags = {"matrix": matrix_abs, "blocks": None, "out": str(out.resolve())}
    if args.blocks is not None:
        argv += ["--blocks", str(Path(args.blocks).resolve())]
        flags["blocks"] = str(Path(args.blocks).resolve())
    manifest = out.parent / (out.stem + ".manifest.json")
    _write_manifest(manifest, "heatmap", argv, flags, None, args.matrix, outputs)
    print(f"wrote {', '.join(outputs)} to {out.parent or Path('.')}")
    return 0


def cmd_assign(args) -> int:
    data = _load_dataset(args)
    if not data.has_unknown():
        raise DegenerateAnalysisError(
            f"no rows labeled {data.unknown_label!r}; nothing to assign")
    if not data.known_labels():
        raise DegenerateAnalysisError("no labeled source rows to vote against")
    ordered, blocks = order_by_label(data)
    unknown_block = blocks.index_of(args.unknown_label)
    depth = _resolve_depth(args, data)
    forest = _make_forest(args, depth).fit(ordered.values)
    P = forest.affinity_
    report = build_report(P, blocks, ordered.sample_ids, unknown_block=unknown_block)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_votes_csv(report, out / "votes.csv")
    save_affinity_csv(P, ordered.sample_ids, out / "affinity.csv")
    save_blocks_csv(blocks, out / "blocks.csv")
    outputs = ["votes.csv", "affinity.csv", "affinity.ids.txt", "blocks.csv"]
    input_abs = str(Path(args.input).resolve())
    argv = (["assign"] + _data_argv(args, input_abs)
            + _forest_argv(args, depth, forest.vars_per_tree_)
            + ["--out-dir", str(out.resolve())])
    flags = _common_flags(args, depth, forest.vars_per_tree_, input_abs,
                          str(out.resolve()))
    _write_manifest(out / "manifest.json", "assign", argv, flags, args.seed,
                    args.input, outputs)

    votes = report.votes
    ties = sum(1 for v in votes if v.tied)
    lost = sum(1 for v in votes if v.unassignable)
    print(f"assigned {len(votes)} unknown samples "
          f"({ties} tied, {lost} unassignable)")
    print(f"wrote {len(outputs) + 1} files to {out}")
    return 0


def cmd_compare(args) -> int:
    if args.kmin < 2:
        raise UsageError("--kmin must be >= 2")
    if args.kmax < args.kmin:
        raise UsageError("--kmax must be >= --kmin")
    data = _load_dataset(args)
    if args.kmax > data.n_samples:
        raise ValueError(f"--kmax {args.kmax} exceeds {data.n_samples} samples")
    forest = _make_forest(args, args.depth)
    records, summary = sweep_compare(data.values, range(args.kmin, args.kmax + 1),
                                     args.replicates, forest, seed=args.seed)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "k", "replicate", "tiq", "tsaq",
                         "within_var", "between_var"])
        for rec in records:
            writer.writerow([rec.method, rec.k, rec.replicate,
                             f"{rec.tiq:.17g}", f"{rec.tsaq:.17g}",
                             f"{rec.within_var:.17g}", f"{rec.between_var:.17g}"])
    with open(out / "correlations.json", "w", newline="") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    outputs = ["sweep.csv", "correlations.json"]
    vars_per_tree = forest.vars_per_tree if forest.vars_per_tree is not None \
        else max(1, int(round(math.sqrt(data.n_vars))))
    input_abs = str(Path(args.input).resolve())
    argv = (["compare"] + _data_argv(args, input_abs)
            + _forest_argv(args, args.depth, vars_per_tree)
            + ["--kmin", str(args.kmin), "--kmax", str(args.kmax),
               "--replicates", str(args.replicates),
               "--out-dir", str(out.resolve())])
    flags = _common_flags(args, args.depth, vars_per_tree, input_abs,
                          str(out.resolve()))
    flags.update({"kmin": args.kmin, "kmax": args.kmax,
                  "replicates": args.replicates})
    _write_manifest(out / "manifest.json", "compare", argv, flags, args.seed,
                    args.input, outputs)

    for method in ("kmeans", "ward"):
        entry = summary.get(method)
        if entry is None:
            continue
        a = entry["tsaq_within"]
        b = entry["tiq_between"]
        fmt = lambda e: "degenerate" if e["degenerate"] else f"{e['r']:+.4f}"
        print(f"{method}: corr(tsaq, within_var) {fmt(a)}, "
              f"corr(tiq, between_var) {fmt(b)}")
    print(f"wrote {len(outputs) + 1} files to {out}")
    return 0


def cmd_rerun(args) -> int:
    path = Path(args.manifest)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    for key in ("argv", "input_path", "input_sha256"):
        if key not in doc:
            raise ValueError(f"{path}: manifest lacks the {key!r} field")
    actual = _sha256(doc["input_path"])
    if actual != doc["input_sha256"]:
        raise ValueError(
            f"input {doc['input_path']} no longer matches the manifest hash; "
            "refusing to rerun against changed data")
    print(f"rerunning: uncharted {' '.join(doc['argv'])}")
    return run(doc["argv"])


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        return 0 if exc.code is None else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"uncharted: error: {exc}", file=sys.stderr)
        return 1
    except DegenerateAnalysisError as exc:
        print(f"uncharted: degenerate analysis: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"uncharted: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
