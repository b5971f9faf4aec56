"""Set algebra over retention masks: pairwise overlap and in-breadth intersection."""

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .pruning import MaskSet
from .utils import TensorFilter, select_names

__all__ = [
    "OverlapReport",
    "InBreadthReport",
    "TensorOverlap",
    "pairwise_overlap",
    "in_breadth",
    "difference_masks",
]


@dataclass(frozen=True)
class TensorOverlap:
    common: int
    only_a: int
    only_b: int
    k_total: int

    @property
    def union(self):
        return self.common + self.only_a + self.only_b


@dataclass(frozen=True)
class OverlapReport:
    """Similarity of two equal-k subnetworks over a set of tensors.

    ``overlap_pct`` is the shared share of retained parameters,
    ``100 * sum(common) / sum(popcount(a))``; with equal k both masks retain
    the same count so the value is symmetric. ``model`` names the
    architecture column the report belongs to in an overlap table.
    """

    pair: Tuple[str, str]
    per_tensor: Mapping[str, TensorOverlap]
    overlap_pct: float
    model: str = "model"

    @property
    def common(self):
        return sum(t.common for t in self.per_tensor.values())

    @property
    def retained(self):
        return sum(t.k_total for t in self.per_tensor.values())

    @property
    def jaccard_pct(self):
        union = sum(t.union for t in self.per_tensor.values())
        return 100.0 * self.common / union if union else 100.0

    def to_dict(self):
        return {
            "jaccard_pct": self.jaccard_pct,
            "label_a": self.pair[0],
            "label_b": self.pair[1],
            "model": self.model,
            "overlap_pct": self.overlap_pct,
            "per_tensor": {
                name: {"common": t.common, "k_total": t.k_total, "only_a": t.only_a, "only_b": t.only_b}
                for name, t in self.per_tensor.items()
            },
            "total_common": self.common,
            "total_retained": self.retained,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self):
        """Per-tensor breakdown as CSV text (LF line endings)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tensor", "common", "only_a", "only_b", "k_total"])
        for name, t in self.per_tensor.items():
            w.writerow([name, t.common, t.only_a, t.only_b, t.k_total])
        return buf.getvalue()


@dataclass(frozen=True)
class InBreadthReport:
    labels: List[str]
    intersection: Dict[str, np.ndarray] = field(repr=False)
    per_tensor_common: Dict[str, int] = field(default_factory=dict)

    @property
    def total_common(self):
        return sum(self.per_tensor_common.values())

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "per_tensor_common": dict(self.per_tensor_common),
            "total_common": self.total_common,
        }


def _shared_names(masksets: Sequence[MaskSet], tensor_filter):
    first = masksets[0]
    names = select_names(first.names, tensor_filter)
    for other in masksets[1:]:
        other_names = select_names(other.names, tensor_filter)
        if other_names != names:
            raise ValueError(f"mask sets disagree on tensor names: {names} vs {other_names}")
        for n in names:
            if other[n].shape != first[n].shape:
                raise ValueError(f"shape mismatch for {n!r}: {first[n].shape} vs {other[n].shape}")
    return names


def pairwise_overlap(a: MaskSet, b: MaskSet, tensor_filter: TensorFilter = None,
                     labels: Tuple[str, str] = None, model: str = None) -> OverlapReport:
    """Share of retained parameters common to ``a`` and ``b``.

    Labels default to each mask set's ``variant`` metadata and ``model`` to
    the ``model`` metadata of ``a``.
    """
    if a.k_per_row != b.k_per_row:
        raise ValueError(f"unequal k: {a.k_per_row} vs {b.k_per_row}")
    names = _shared_names([a, b], tensor_filter)
    per_tensor = {}
    for n in names:
        ma, mb = a[n], b[n]
        common = int(np.count_nonzero(ma & mb))
        pa = int(np.count_nonzero(ma))
        pb = int(np.count_nonzero(mb))
        per_tensor[n] = TensorOverlap(common, pa - common, pb - common, pa)
    retained = sum(t.k_total for t in per_tensor.values())
    common = sum(t.common for t in per_tensor.values())
    # two empty subnetworks are identical
    pct = 100.0 * common / retained if retained else 100.0
    if labels is None:
        labels = (a.label or "A", b.label or "B")
    if model is None:
        model = a.source_meta.get("model", "model")
    return OverlapReport(tuple(labels), per_tensor, pct, model)


def in_breadth(masksets: Sequence[MaskSet], tensor_filter: TensorFilter = None,
               labels: Sequence[str] = None) -> InBreadthReport:
    """Parameters retained by every mask set (elementwise AND)."""
    masksets = list(masksets)
    if len(masksets) < 2:
        raise ValueError("in-breadth analysis needs at least two mask sets")
    names = _shared_names(masksets, tensor_filter)
    intersection = {}
    for n in names:
        acc = masksets[0][n].copy()
        for other in masksets[1:]:
            acc &= other[n]
        intersection[n] = acc
    if labels is None:
        labels = [m.label or f"m{i}" for i, m in enumerate(masksets)]
    counts = {n: int(np.count_nonzero(m)) for n, m in intersection.items()}
    return InBreadthReport(list(labels), intersection, counts)


def difference_masks(a: MaskSet, b: MaskSet, tensor: str):
    """Split the union of two masks of one tensor into (common, a_only, b_only)."""
    for side, ms in (("a", a), ("b", b)):
        if tensor not in ms:
            raise KeyError(f"tensor {tensor!r} missing from mask set {side}")
    ma, mb = a[tensor], b[tensor]
    if ma.shape != mb.shape:
        raise ValueError(f"shape mismatch for {tensor!r}: {ma.shape} vs {mb.shape}")
    return ma & mb, ma & ~mb, mb & ~ma
