"""KEN-style subnetwork extraction and comparison.

Row-wise kernel density estimation picks the most representative
fine-tuned parameters of each weight matrix; everything else is reset to
its pre-trained value. The package also compares the resulting subnetworks
and distills multi-annotator corpora into per-variant datasets.
"""

__version__ = "0.1.0"

from .analysis import InBreadthReport, OverlapReport, difference_masks, in_breadth, pairwise_overlap
from .checkpoint import Checkpoint, diff_checkpoints, read_checkpoint, write_checkpoint
from .distill import AnnotationRecord, Label, VariantDataset, distill, ingest_csv, majority_vote
from .estimators import KENPruner, KSweepSearch, RowDensitySelector
from .exceptions import AnnotationError, ContainerError, EvaluatorError, KenforgeError
from .kde import KdeConfig, RowDensity, bandwidth, kde_density, row_densities, select_top_k
from .pruning import (CommandEvaluator, MaskSet, PruneReport, QuadraticEvaluator, SweepResult,
                      apply_masks, build_masks, k_sweep, read_masks, reset_percentage, write_masks)
from .viz import emit_overlap_table, emit_tri_panel

__all__ = [
    "AnnotationError", "AnnotationRecord", "Checkpoint", "CommandEvaluator", "ContainerError",
    "EvaluatorError", "InBreadthReport", "KENPruner", "KSweepSearch", "KdeConfig", "KenforgeError",
    "Label", "MaskSet", "OverlapReport", "PruneReport", "QuadraticEvaluator", "RowDensity",
    "RowDensitySelector", "SweepResult", "VariantDataset", "apply_masks", "bandwidth",
    "build_masks", "diff_checkpoints", "difference_masks", "distill", "emit_overlap_table",
    "emit_tri_panel", "in_breadth", "ingest_csv", "k_sweep", "kde_density", "majority_vote",
    "pairwise_overlap", "read_checkpoint", "read_masks", "reset_percentage", "row_densities",
    "select_top_k", "write_checkpoint", "write_masks",
]
