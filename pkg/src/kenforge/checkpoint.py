"""Weight checkpoints and the KENC v1 binary container.

A checkpoint is a name-sorted mapping of 2-D float32 matrices plus a small
string-to-string metadata dict. Values are stored little-endian and round
trip bit-exactly, NaN payloads and signed zeros included.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping

import numpy as np

from ._container import check_entries, layout, read_container, write_container
from .exceptions import ContainerError

MAGIC = b"KENC"
DTYPE = np.dtype("<f4")

__all__ = ["Checkpoint", "read_checkpoint", "write_checkpoint", "diff_checkpoints"]


def _as_matrix(name, values):
    if not isinstance(name, str) or not name:
        raise ValueError("tensor names must be non-empty strings")
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"tensor {name!r} has {arr.ndim} dimension(s); only 2-D matrices are supported")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"tensor {name!r} has empty shape {arr.shape}")
    if arr.dtype != DTYPE:
        if arr.dtype.kind != "f":
            raise ValueError(f"tensor {name!r} has dtype {arr.dtype}; expected float32")
        arr = arr.astype(DTYPE)
    arr = np.ascontiguousarray(arr)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Named 2-D float32 tensors at one training state.

    ``tensors`` is re-ordered lexicographically and every array is frozen
    (read-only) on construction. ``meta`` commonly carries ``model``,
    ``variant`` and ``state`` (pretrained / finetuned / pruned).
    """

    tensors: Mapping[str, np.ndarray] = field(default_factory=dict)
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        tensors = {name: _as_matrix(name, self.tensors[name]) for name in sorted(self.tensors)}
        for key, value in self.meta.items():
            if not isinstance(key, str) or not isinstance(value, str):
                raise ValueError("checkpoint meta must map strings to strings")
        object.__setattr__(self, "tensors", tensors)
        object.__setattr__(self, "meta", dict(sorted(self.meta.items())))

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def __len__(self):
        return len(self.tensors)

    @property
    def names(self) -> List[str]:
        return list(self.tensors)

    def shape(self, name):
        return self.tensors[name].shape

    def with_meta(self, **updates) -> "Checkpoint":
        return Checkpoint(self.tensors, {**self.meta, **updates})

    def equals(self, other: "Checkpoint") -> bool:
        """Field-for-field equality, comparing float payloads by bit pattern."""
        if self.meta != other.meta or self.names != other.names:
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors.values(), other.tensors.values())
        )


def write_checkpoint(ckpt: Checkpoint, path) -> None:
    blocks = [t.astype(DTYPE, copy=False).tobytes() for t in ckpt.tensors.values()]
    offsets = layout(len(b) for b in blocks)
    entries = [
        {"name": name, "dtype": "f32", "shape": list(t.shape), "offset": off, "nbytes": len(b)}
        for (name, t), off, b in zip(ckpt.tensors.items(), offsets, blocks)
    ]
    write_container(path, MAGIC, {"meta": dict(ckpt.meta), "tensors": entries}, blocks)


def read_checkpoint(path) -> Checkpoint:
    """Load a KENC file.

    Raises
    ------
    ContainerError
        On bad magic, unsupported version, truncated data, inconsistent
        offsets, non-f32 dtypes or non-2-D shapes.
    """
    header, payload, start = read_container(path, MAGIC)
    meta = header.get("meta", {})
    raw = header.get("tensors")
    if not isinstance(raw, list) or not isinstance(meta, dict):
        raise ContainerError("header/offset inconsistency: missing 'tensors' list or 'meta' object")

    checked = []
    for entry in raw:
        name = entry.get("name") if isinstance(entry, dict) else None
        if not isinstance(name, str) or not name:
            raise ContainerError("header/offset inconsistency: tensor entry without a name")
        if entry.get("dtype") != "f32":
            raise ContainerError(f"unsupported dtype {entry.get('dtype')!r}; only f32 is allowed",
                                 tensor=name, offset=start + int(entry.get("offset", 0) or 0))
        shape = entry.get("shape")
        if (not isinstance(shape, list) or len(shape) != 2
                or not all(isinstance(s, int) and s >= 1 for s in shape)):
            raise ContainerError(f"shape {shape!r} is not a 2-D shape with positive extents",
                                 tensor=name)
        checked.append((name, entry.get("offset"), entry.get("nbytes"), shape[0] * shape[1] * 4))
    check_entries(checked, payload, start)

    tensors: Dict[str, np.ndarray] = {}
    for entry, (name, offset, nbytes, _) in zip(raw, checked):
        arr = np.frombuffer(payload, dtype=DTYPE, count=nbytes // 4, offset=offset)
        tensors[name] = arr.reshape(entry["shape"])
    try:
        return Checkpoint(tensors, meta)
    except ValueError as exc:
        raise ContainerError(str(exc)) from None


def diff_checkpoints(pre: Checkpoint, fine: Checkpoint) -> List[str]:
    """Names of tensors whose bit patterns differ between two checkpoints.

    Both checkpoints must hold the same names with matching shapes. Because
    the comparison is on raw bits, NaN never equals a number and ``-0.0``
    differs from ``+0.0``.
    """
    if set(pre.names) != set(fine.names):
        missing = sorted(set(pre.names) ^ set(fine.names))
        raise ValueError(f"checkpoints hold different tensor names: {missing}")
    changed = []
    for name in pre.names:
        a, b = pre[name], fine[name]
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch for {name!r}: {a.shape} vs {b.shape}")
        if np.any(a.view(np.uint32) != b.view(np.uint32)):
            changed.append(name)
    return changed
