"""Shared framing for the KENC and KENM binary containers.

Both formats share one layout::

    magic (4 bytes) | version u32 LE | header_len u64 LE | JSON header | payload

Entry offsets are relative to the start of the payload region, contiguous
and 8-byte aligned with zero padding in between.
"""

import json
import struct

from .exceptions import ContainerError

VERSION = 1
ALIGN = 8
_PREFIX = struct.Struct("<4sIQ")


def aligned(n):
    return -(-n // ALIGN) * ALIGN


def layout(sizes):
    """Return payload offsets for blocks of the given byte sizes."""
    offsets = []
    cursor = 0
    for size in sizes:
        offsets.append(cursor)
        cursor = aligned(cursor + size)
    return offsets


def write_container(path, magic, header, blocks):
    """Write ``header`` (a JSON-able dict) and raw ``blocks`` to ``path``.

    The header must already carry offsets produced by :func:`layout` for the
    same blocks. The JSON text is space-padded so the payload also starts on
    an 8-byte boundary of the file.
    """
    text = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    text += b" " * (aligned(_PREFIX.size + len(text)) - _PREFIX.size - len(text))
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(magic, VERSION, len(text)))
        fh.write(text)
        cursor = 0
        last = len(blocks) - 1
        for i, block in enumerate(blocks):
            fh.write(block)
            cursor += len(block)
            pad = aligned(cursor) - cursor
            if pad and i != last:
                fh.write(b"\x00" * pad)
                cursor += pad


def read_container(path, magic):
    """Read a container, returning ``(header, payload, payload_start)``.

    ``payload`` is a bytes object holding everything after the header and
    ``payload_start`` its absolute position in the file.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != magic:
        raise ContainerError(f"bad magic: expected {magic!r}, got {data[:4]!r}", offset=0)
    if len(data) < _PREFIX.size:
        raise ContainerError("truncated data: incomplete file prefix", offset=len(data))
    _, version, header_len = _PREFIX.unpack_from(data)
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}", offset=4)
    start = _PREFIX.size + header_len
    if start > len(data):
        raise ContainerError(
            f"truncated data: header_len {header_len} exceeds file size {len(data)}", offset=8
        )
    try:
        header = json.loads(data[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"header is not valid UTF-8 JSON: {exc}", offset=_PREFIX.size) from None
    if not isinstance(header, dict):
        raise ContainerError("header is not a JSON object", offset=_PREFIX.size)
    return header, data[start:], start


def check_entries(entries, payload, payload_start):
    """Validate ``(name, offset, nbytes, expected_nbytes)`` tuples against the payload.

    Entries must be name-sorted, contiguous, aligned and fully present.
    """
    cursor = 0
    previous = None
    for name, offset, nbytes, expected in entries:
        if previous is not None and name <= previous:
            raise ContainerError("header/offset inconsistency: entries not sorted by unique name",
                                 tensor=name, offset=payload_start + offset)
        previous = name
        if not isinstance(offset, int) or not isinstance(nbytes, int) or offset < 0 or nbytes < 0:
            raise ContainerError("header/offset inconsistency: offset and nbytes must be "
                                 "non-negative integers", tensor=name)
        if nbytes != expected:
            raise ContainerError(
                f"header/offset inconsistency: nbytes {nbytes} does not match shape ({expected})",
                tensor=name, offset=payload_start + offset)
        if offset != cursor:
            raise ContainerError(
                f"header/offset inconsistency: offset {offset}, expected {cursor}",
                tensor=name, offset=payload_start + offset)
        if offset + nbytes > len(payload):
            raise ContainerError(
                f"truncated data: need {nbytes} bytes, {max(len(payload) - offset, 0)} available",
                tensor=name, offset=payload_start + offset)
        cursor = aligned(offset + nbytes)
    end = entries[-1][1] + entries[-1][2] if entries else 0
    tail = payload[end:]
    if len(tail) >= ALIGN or tail.strip(b"\x00"):
        raise ContainerError("header/offset inconsistency: unexpected trailing bytes",
                             offset=payload_start + end)
