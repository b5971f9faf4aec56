"""Retention masks, pruned-checkpoint synthesis and the incremental k sweep.

A mask bit of 1 keeps the fine-tuned value of a parameter, 0 resets it to
the pre-trained value. Every row of every masked tensor retains the same
number ``min(k, cols)`` of parameters.
"""

import logging
import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ._container import check_entries, layout, read_container, write_container
from .checkpoint import Checkpoint, write_checkpoint
from .exceptions import ContainerError, EvaluatorError
from .kde import KdeConfig, density_order, row_densities
from .utils import check_mask

logger = logging.getLogger(__name__)

MASK_MAGIC = b"KENM"

__all__ = [
    "MaskSet",
    "PruneReport",
    "SweepResult",
    "TracePoint",
    "QuadraticEvaluator",
    "CommandEvaluator",
    "build_masks",
    "apply_masks",
    "reset_percentage",
    "k_sweep",
    "read_masks",
    "write_masks",
]


@dataclass(frozen=True, eq=False)
class MaskSet:
    """Per-tensor boolean retention masks sharing one ``k_per_row``."""

    masks: Mapping[str, np.ndarray]
    k_per_row: int
    source_meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.k_per_row < 0:
            raise ValueError(f"k_per_row must be non-negative, got {self.k_per_row}")
        masks = {}
        for name in sorted(self.masks):
            m = check_mask(self.masks[name], name)
            expected = min(self.k_per_row, m.shape[1])
            counts = m.sum(axis=1)
            if np.any(counts != expected):
                row = int(np.flatnonzero(counts != expected)[0])
                raise ValueError(
                    f"mask {name!r} row {row} retains {int(counts[row])} parameters, "
                    f"expected {expected}")
            m = m.copy()
            m.setflags(write=False)
            masks[name] = m
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "k_per_row", int(self.k_per_row))
        object.__setattr__(self, "source_meta", dict(sorted(self.source_meta.items())))

    @property
    def names(self) -> List[str]:
        return list(self.masks)

    def __getitem__(self, name):
        return self.masks[name]

    def __contains__(self, name):
        return name in self.masks

    def popcount(self, name=None) -> int:
        if name is not None:
            return int(self.masks[name].sum())
        return sum(int(m.sum()) for m in self.masks.values())

    @property
    def label(self) -> str:
        return self.source_meta.get("variant", "")

    def equals(self, other: "MaskSet") -> bool:
        return (
            self.k_per_row == other.k_per_row
            and self.source_meta == other.source_meta
            and self.names == other.names
            and all(np.array_equal(self[n], other[n]) and self[n].shape == other[n].shape
                    for n in self.names)
        )


class PruneReport(NamedTuple):
    per_tensor: Dict[str, Tuple[int, int]]
    model_reset_pct: float

    def to_dict(self):
        return {
            "model_reset_pct": self.model_reset_pct,
            "per_tensor": {n: {"retained": r, "total": t} for n, (r, t) in self.per_tensor.items()},
        }


class TracePoint(NamedTuple):
    k: int
    score: float
    meets_baseline: bool


@dataclass(frozen=True, eq=False)
class SweepResult:
    k: int
    masks: MaskSet
    trace: List[TracePoint]
    baseline: float
    reached_baseline: bool

    @property
    def status(self):
        return "ok" if self.reached_baseline else "no k reached baseline"

    def to_dict(self):
        return {
            "k_star": self.k,
            "baseline": self.baseline,
            "reached_baseline": self.reached_baseline,
            "status": self.status,
            "trace": [{"k": p.k, "score": p.score, "meets_baseline": p.meets_baseline}
                      for p in self.trace],
        }


# -- mask construction -------------------------------------------------------

def _check_prunable(fine, prunable):
    missing = [n for n in prunable if n not in fine]
    if missing:
        raise KeyError(f"unknown tensor name(s): {missing}")
    if len(set(prunable)) != len(prunable):
        raise ValueError("prunable tensor names must be unique")


def density_orders(fine: Checkpoint, prunable: Sequence[str], config: KdeConfig = KdeConfig(),
                   n_jobs=None) -> Dict[str, np.ndarray]:
    """Per-tensor column ranking of every row (density desc, index asc)."""
    _check_prunable(fine, prunable)
    orders = {}
    for name in sorted(prunable):
        try:
            dens, _ = row_densities(fine[name], config, n_jobs=n_jobs)
        except ValueError as exc:
            raise ValueError(f"tensor {name!r}: {exc}") from None
        orders[name] = density_order(dens)
    return orders


def masks_from_orders(orders: Mapping[str, np.ndarray], k: int, source_meta=None) -> MaskSet:
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    masks = {}
    for name, order in orders.items():
        m = np.zeros(order.shape, dtype=bool)
        np.put_along_axis(m, order[:, : min(k, order.shape[1])], True, axis=1)
        masks[name] = m
    return MaskSet(masks, k, source_meta or {})


def build_masks(fine: Checkpoint, prunable: Sequence[str], k: int,
                config: KdeConfig = KdeConfig(), n_jobs=None) -> MaskSet:
    """Keep, in each row of each prunable tensor, the ``k`` highest-density values."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    orders = density_orders(fine, list(prunable), config, n_jobs=n_jobs)
    return masks_from_orders(orders, k, fine.meta)


def apply_masks(pre: Checkpoint, fine: Checkpoint, masks: MaskSet) -> Checkpoint:
    """Fine-tuned values where the mask is set, pre-trained values elsewhere.

    Unmasked tensors are copied from ``fine``; the result has
    ``meta["state"] == "pruned"``.
    """
    tensors = dict(fine.tensors)
    for name, m in masks.masks.items():
        if name not in fine or name not in pre:
            raise KeyError(f"mask references missing tensor {name!r}")
        f, p = fine[name], pre[name]
        if not (f.shape == p.shape == m.shape):
            raise ValueError(f"shape mismatch for {name!r}: pre {p.shape}, fine {f.shape}, mask {m.shape}")
        tensors[name] = np.where(m, f, p)
    return Checkpoint(tensors, {**fine.meta, "state": "pruned"})


def reset_percentage(masks: MaskSet, fine: Checkpoint,
                     scope: Union[str, Sequence[str]] = "masked_only") -> PruneReport:
    """Share of parameters reset to pre-trained values.

    ``scope="masked_only"`` counts masked tensors only. A list of names counts
    exactly those tensors; listed tensors without a mask pass through
    unchanged and so count as fully retained.
    """
    for name, m in masks.masks.items():
        if name not in fine or fine.shape(name) != m.shape:
            raise ValueError(f"mask {name!r} is inconsistent with the fine-tuned checkpoint")
    if isinstance(scope, str):
        if scope != "masked_only":
            raise ValueError(f"unknown scope {scope!r}")
        names = masks.names
    else:
        names = sorted(set(scope))
        missing = [n for n in names if n not in fine]
        if missing:
            raise KeyError(f"scope names missing tensor(s): {missing}")
    per_tensor = {}
    for name in names:
        total = int(np.prod(fine.shape(name)))
        retained = masks.popcount(name) if name in masks else total
        per_tensor[name] = (retained, total)
    kept = sum(r for r, _ in per_tensor.values())
    total = sum(t for _, t in per_tensor.values())
    pct = 100.0 * (1.0 - kept / total) if total else 0.0
    return PruneReport(per_tensor, pct)


# -- evaluators --------------------------------------------------------------

class QuadraticEvaluator:
    """Score ``-||pruned - reference||^2`` summed over all shared tensors."""

    def __init__(self, reference: Checkpoint):
        self.reference = reference

    def __call__(self, pruned: Checkpoint) -> float:
        total = 0.0
        for name, ref in self.reference.tensors.items():
            d = pruned[name].astype(np.float64) - ref.astype(np.float64)
            total += float(np.dot(d.ravel(), d.ravel()))
        return -total if total else 0.0


class CommandEvaluator:
    """Score a checkpoint with an external command.

    The pruned checkpoint is written to a temporary KENC file whose path is
    appended to ``command``. The command must exit 0 and print a decimal
    number as the last whitespace-delimited token of its stdout.
    """

    def __init__(self, command: Union[str, Sequence[str]], timeout: Optional[float] = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("evaluator command is empty")
        self.timeout = timeout

    def __call__(self, pruned: Checkpoint) -> float:
        fd, path = tempfile.mkstemp(suffix=".kenc", prefix="kenforge-eval-")
        os.close(fd)
        try:
            write_checkpoint(pruned, path)
            try:
                proc = subprocess.run(self.command + [path], capture_output=True, text=True,
                                      timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise EvaluatorError(str(exc)) from exc
        finally:
            os.unlink(path)
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1:] or [""]
            raise EvaluatorError(f"command exited with status {proc.returncode} {tail[0]}".rstrip())
        tokens = proc.stdout.split()
        try:
            score = float(tokens[-1])
        except (IndexError, ValueError):
            raise EvaluatorError(f"no decimal score at end of stdout: {proc.stdout[-80:]!r}") from None
        if math.isnan(score):
            raise EvaluatorError("evaluator returned NaN")
        return score


# -- sweep -------------------------------------------------------------------

def k_sweep(pre: Checkpoint, fine: Checkpoint, prunable: Sequence[str], config: KdeConfig,
            evaluator: Callable[[Checkpoint], float], schedule: Sequence[int],
            baseline: Optional[float] = None, n_jobs=None) -> SweepResult:
    """Smallest scheduled k whose pruned model scores at least ``baseline``.

    Schedule points are evaluated in ascending order and the sweep stops at
    the first success. ``baseline`` defaults to ``evaluator(fine)``. When no
    point qualifies the last k is returned with ``reached_baseline=False``.
    """
    schedule = [int(k) for k in schedule]
    if not schedule:
        raise ValueError("schedule must be non-empty")
    if schedule[0] < 0 or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"schedule must be strictly ascending non-negative integers: {schedule}")

    def score(ckpt, k):
        try:
            return float(evaluator(ckpt))
        except EvaluatorError as exc:
            if exc.k is None:
                raise EvaluatorError(str(exc), k=k) from exc
            raise
        except Exception as exc:
            raise EvaluatorError(f"{type(exc).__name__}: {exc}", k=k) from exc

    if baseline is None:
        baseline = score(fine, None)
    orders = density_orders(fine, list(prunable), config, n_jobs=n_jobs)
    trace = []
    masks = None
    for k in schedule:
        masks = masks_from_orders(orders, k, fine.meta)
        s = score(apply_masks(pre, fine, masks), k)
        ok = s >= baseline
        trace.append(TracePoint(k, s, ok))
        logger.info("k=%d score=%.6g baseline=%.6g%s", k, s, baseline, " (reached)" if ok else "")
        if ok:
            return SweepResult(k, masks, trace, float(baseline), True)
    logger.warning("no k in schedule reached the baseline %.6g", baseline)
    return SweepResult(schedule[-1], masks, trace, float(baseline), False)


# -- KENM container ----------------------------------------------------------

def write_masks(masks: MaskSet, path) -> None:
    """Write a KENM file: one MSB-first bitmap per tensor, rows byte-padded."""
    blocks = [np.packbits(m, axis=1).tobytes() for m in masks.masks.values()]
    offsets = layout(len(b) for b in blocks)
    entries = [
        {"name": name, "shape": list(m.shape), "offset": off, "nbytes": len(b)}
        for (name, m), off, b in zip(masks.masks.items(), offsets, blocks)
    ]
    header = {"k": masks.k_per_row, "meta": dict(masks.source_meta), "masks": entries}
    write_container(path, MASK_MAGIC, header, blocks)


def read_masks(path) -> MaskSet:
    header, payload, start = read_container(path, MASK_MAGIC)
    raw = header.get("masks")
    k = header.get("k")
    meta = header.get("meta", {})
    if not isinstance(raw, list) or not isinstance(k, int) or k < 0 or not isinstance(meta, dict):
        raise ContainerError("header/offset inconsistency: need 'k', 'meta' and 'masks'")
    checked = []
    for entry in raw:
        name = entry.get("name") if isinstance(entry, dict) else None
        if not isinstance(name, str) or not name:
            raise ContainerError("header/offset inconsistency: mask entry without a name")
        shape = entry.get("shape")
        if (not isinstance(shape, list) or len(shape) != 2
                or not all(isinstance(s, int) and s >= 1 for s in shape)):
            raise ContainerError(f"shape {shape!r} is not a 2-D shape with positive extents",
                                 tensor=name)
        checked.append((name, entry.get("offset"), entry.get("nbytes"),
                        shape[0] * ((shape[1] + 7) // 8)))
    check_entries(checked, payload, start)
    masks = {}
    for entry, (name, offset, nbytes, _) in zip(raw, checked):
        rows, cols = entry["shape"]
        packed = np.frombuffer(payload, dtype=np.uint8, count=nbytes, offset=offset)
        masks[name] = np.unpackbits(packed.reshape(rows, -1), axis=1, count=cols).astype(bool)
    try:
        return MaskSet(masks, k, meta)
    except ValueError as exc:
        raise ContainerError(str(exc)) from None
