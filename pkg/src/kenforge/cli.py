"""``kenforge`` command line.

Subcommands print JSON results on stdout and log to stderr. Exit codes:
0 success, 2 input/validation error, 3 evaluator failure, 4 I/O failure.
"""

import argparse
import json
import logging
import os
import re
import sys

from . import __version__
from .analysis import difference_masks, in_breadth, pairwise_overlap
from .checkpoint import diff_checkpoints, read_checkpoint, write_checkpoint
from .distill import DEFAULT_COLUMNS, distill, ingest_csv, write_datasets
from .exceptions import ContainerError, EvaluatorError, KenforgeError
from .kde import KdeConfig
from .pruning import (CommandEvaluator, QuadraticEvaluator, apply_masks, build_masks, k_sweep,
                      read_masks, reset_percentage, write_masks)
from .utils import select_names
from .viz import emit_overlap_table, emit_tri_panel

logger = logging.getLogger("kenforge")

EXIT_OK, EXIT_INPUT, EXIT_EVAL, EXIT_IO = 0, 2, 3, 4


class InputError(KenforgeError):
    pass


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _need(path):
    if not os.path.isfile(path):
        raise InputError(f"input file not found: {path}")
    return path


def _int_list(text):
    try:
        values = [int(v) for v in re.split(r"[,\s]+", text.strip()) if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _column_map(text):
    mapping = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep or key.strip() not in DEFAULT_COLUMNS:
            raise argparse.ArgumentTypeError(
                f"expected FIELD=HEADER pairs with FIELD in {sorted(DEFAULT_COLUMNS)}, got {item!r}")
        mapping[key.strip()] = value.strip()
    return mapping


def _add_tensor_filter(p, required=False):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--tensors", nargs="+", metavar="NAME", help="explicit tensor names")
    g.add_argument("--tensor-regex", metavar="REGEX", help="select tensors whose name matches")


def _tensor_filter(args):
    if args.tensors:
        return args.tensors
    if args.tensor_regex:
        try:
            return re.compile(args.tensor_regex)
        except re.error as exc:
            raise InputError(f"invalid --tensor-regex: {exc}") from None
    return None


def _add_kde(p):
    g = p.add_argument_group("density estimation")
    g.add_argument("--bandwidth", choices=["scott", "silverman", "fixed"], default="scott")
    g.add_argument("--h", type=float, help="bandwidth for --bandwidth fixed")
    g.add_argument("--degenerate-bandwidth", type=float, default=1e-9)


def _kde_config(args):
    if args.h is not None and args.bandwidth != "fixed":
        raise InputError("--h is only valid with --bandwidth fixed")
    return KdeConfig(bandwidth_rule=args.bandwidth, h=args.h,
                     degenerate_bandwidth=args.degenerate_bandwidth)


def _load_pair(args):
    pre = read_checkpoint(_need(args.pre))
    fine = read_checkpoint(_need(args.fine))
    filt = _tensor_filter(args)
    prunable = diff_checkpoints(pre, fine) if filt is None else select_names(fine.names, filt)
    if not prunable:
        logger.warning("no prunable tensors selected")
    return pre, fine, prunable


# -- subcommands -------------------------------------------------------------

def cmd_distill(args):
    records = ingest_csv(_need(args.input), columns=args.columns)
    datasets = distill(records)
    paths = write_datasets(datasets, args.out_dir)
    logger.info("wrote %d file(s) to %s", len(paths), args.out_dir)
    _emit([ds.stats() for ds in datasets.values()])


def cmd_diff(args):
    _emit(diff_checkpoints(read_checkpoint(_need(args.pre)), read_checkpoint(_need(args.fine))))


def cmd_prune(args):
    pre, fine, prunable = _load_pair(args)
    masks = build_masks(fine, prunable, args.k, _kde_config(args))
    if args.out_masks:
        write_masks(masks, args.out_masks)
    if args.out_pruned:
        write_checkpoint(apply_masks(pre, fine, masks), args.out_pruned)
    scope = "masked_only" if args.scope == "masked" else fine.names
    report = reset_percentage(masks, fine, scope)
    _emit({"k": args.k, "tensors": prunable, **report.to_dict()})


def cmd_sweep(args):
    pre, fine, prunable = _load_pair(args)
    if args.eval_cmd:
        evaluator = CommandEvaluator(args.eval_cmd, timeout=args.eval_timeout)
    else:
        evaluator = QuadraticEvaluator(fine)
    result = k_sweep(pre, fine, prunable, _kde_config(args), evaluator, args.schedule,
                     baseline=args.baseline)
    if args.out_masks:
        write_masks(result.masks, args.out_masks)
    if args.out_pruned:
        write_checkpoint(apply_masks(pre, fine, result.masks), args.out_pruned)
    _emit({"tensors": prunable, **result.to_dict(),
           **reset_percentage(result.masks, fine).to_dict()})


def cmd_compare(args):
    a, b = read_masks(_need(args.a)), read_masks(_need(args.b))
    report = pairwise_overlap(a, b, _tensor_filter(args),
                              labels=tuple(args.labels) if args.labels else None, model=args.model)
    if args.out_json:
        with open(args.out_json, "w") as fh:
            fh.write(report.to_json() + "\n")
    if args.out_csv:
        emit_overlap_table([report], args.out_csv)
    _emit(report.to_dict())


def cmd_inbreadth(args):
    masksets = [read_masks(_need(p)) for p in args.masks]
    report = in_breadth(masksets, _tensor_filter(args), labels=args.labels)
    _emit(report.to_dict())


def cmd_viz(args):
    a, b = read_masks(_need(args.a)), read_masks(_need(args.b))
    panels = difference_masks(a, b, args.tensor)
    paths = emit_tri_panel(*panels, args.out_prefix, format=args.format, stride=args.stride)
    _emit({"tensor": args.tensor, "files": paths,
           "counts": {k: int(m.sum()) for k, m in zip(("common", "a_only", "b_only"), panels)}})


def build_parser():
    parser = argparse.ArgumentParser(prog="kenforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distill", help="majority-vote an annotation CSV into per-variant datasets")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--columns", type=_column_map,
                   help="remap headers, e.g. sentence_id=id_original,annotator_id=user")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("diff", help="list tensors that differ between two checkpoints")
    p.add_argument("pre")
    p.add_argument("fine")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("prune", help="build masks for one k and write the pruned checkpoint")
    p.add_argument("pre")
    p.add_argument("fine")
    p.add_argument("--k", type=int, required=True)
    _add_tensor_filter(p)
    _add_kde(p)
    p.add_argument("--out-masks", metavar="PATH")
    p.add_argument("--out-pruned", metavar="PATH")
    p.add_argument("--scope", choices=["masked", "all"], default="masked",
                   help="tensors counted in the reset percentage")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("sweep", help="grow k until the pruned model reaches the baseline")
    p.add_argument("pre")
    p.add_argument("fine")
    p.add_argument("--schedule", type=_int_list, required=True, help="ascending k values, e.g. 8,16,32")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--eval-cmd", help="command scoring a checkpoint path appended as last argument")
    g.add_argument("--eval-synthetic", action="store_true",
                   help="score -||pruned - fine||^2 (testing)")
    p.add_argument("--eval-timeout", type=float)
    p.add_argument("--baseline", type=float, help="defaults to the score of the fine-tuned model")
    _add_tensor_filter(p)
    _add_kde(p)
    p.add_argument("--out-masks", metavar="PATH")
    p.add_argument("--out-pruned", metavar="PATH")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="pairwise overlap of two mask files")
    p.add_argument("a")
    p.add_argument("b")
    _add_tensor_filter(p)
    p.add_argument("--labels", nargs=2, metavar=("A", "B"))
    p.add_argument("--model", help="column name in the CSV table")
    p.add_argument("--out-json", metavar="PATH")
    p.add_argument("--out-csv", metavar="PATH")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inbreadth", help="parameters retained by every mask file")
    p.add_argument("masks", nargs="+")
    _add_tensor_filter(p)
    p.add_argument("--labels", nargs="+")
    p.set_defaults(func=cmd_inbreadth)

    p = sub.add_parser("viz", help="tri-panel grids (common / a-only / b-only) for one tensor")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--tensor", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--format", choices=["pgm", "csv"], default="pgm")
    p.add_argument("--stride", type=int, default=1, help="OR-reduce blocks of this size (lossy)")
    p.set_defaults(func=cmd_viz)
    return parser


def _setup_logging(level):
    root = logging.getLogger("kenforge")
    for h in [h for h in root.handlers if getattr(h, "_kenforge_cli", False)]:
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler._kenforge_cli = True
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging(args.log_level)
    try:
        args.func(args)
    except EvaluatorError as exc:
        logger.error("%s", exc)
        return EXIT_EVAL
    except (InputError, ContainerError, ValueError, KeyError) as exc:
        logger.error("%s", exc.args[0] if isinstance(exc, KeyError) and exc.args else exc)
        return EXIT_INPUT
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
