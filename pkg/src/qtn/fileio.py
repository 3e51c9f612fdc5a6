"""Binary tensor files.

A record is one JSON header line followed by ``count`` complex elements stored
as little-endian float64 ``(re, im)`` pairs in row-major global order::

    {"format": "qtn-tensor", "version": 1, "variant": "dense", "dims": [2, 3],
     "split": 1, "stretch": 1, "cycles": 1, "offset": 0, "count": 6, "meta": {}}

Diagonal tensors store only their diagonal; special tensors store nothing and
carry ``kind`` and ``pairs`` in the header.
"""

from __future__ import annotations

import json
import math
from typing import BinaryIO

import numpy as np

from .errors import InvalidArgument
from .runtime import RankContext
from .tensor import CDTYPE, DiagonalTensor, DistParams, IndexTuple, SpecialTensor, Tensor

__all__ = ["write_record", "read_record", "write_tensor", "read_tensor"]

_WIRE = np.dtype("<c16")


def write_record(fh: BinaryIO, array: np.ndarray | None, split: int = 0, dist: DistParams | None = None,
                 variant: str = "dense", dims=None, meta: dict | None = None, extra: dict | None = None) -> None:
    dist = dist or DistParams()
    data = np.zeros(0, CDTYPE) if array is None else np.asarray(array, CDTYPE).reshape(-1)
    header = {
        "format": "qtn-tensor",
        "version": 1,
        "variant": variant,
        "dims": list(dims if dims is not None else np.shape(array)),
        "split": split,
        "stretch": dist.stretch,
        "cycles": dist.cycles,
        "offset": dist.offset,
        "count": int(data.size),
        "meta": meta or {},
    }
    header.update(extra or {})
    fh.write((json.dumps(header) + "\n").encode())
    fh.write(data.astype(_WIRE).tobytes())


def read_record(fh: BinaryIO) -> tuple[np.ndarray, dict]:
    """Next record as ``(array, header)``; dense records are reshaped to their dims."""
    line = fh.readline()
    if not line:
        raise InvalidArgument("unexpected end of tensor file")
    header = json.loads(line)
    if header.get("format") != "qtn-tensor":
        raise InvalidArgument("not a tensor record")
    count = int(header["count"])
    raw = fh.read(count * _WIRE.itemsize)
    if len(raw) != count * _WIRE.itemsize:
        raise InvalidArgument("truncated tensor record")
    data = np.frombuffer(raw, dtype=_WIRE).astype(CDTYPE)
    if header["variant"] in ("dense", "symmetric"):
        data = data.reshape(header["dims"])
    return data, header


def write_tensor(path, t: Tensor, meta: dict | None = None) -> None:
    """Save ``t``; collective over its span, the first span rank writes."""
    dist = t.dist
    if isinstance(t, SpecialTensor):
        payload, variant, extra = None, "special", {"kind": t.kind, "pairs": [list(p) for p in t.pairs]}
    elif isinstance(t, DiagonalTensor):
        full = t.to_global()
        payload, variant, extra = None, "diagonal", {}
        if full is not None:
            ins, outs = t.in_out_positions()
            moved = np.transpose(full, ins + outs)
            m = math.prod(t.dims[i] for i in ins)
            payload = np.diagonal(moved.reshape(m, m)).copy()
            extra = {"n_dist_in": t.split // 2}
    else:
        payload, variant, extra = t.to_global(), t.variant, {}
        if payload is None:
            return
    if t.ctx.rank != t.dist.offset:
        return
    with open(path, "wb") as fh:
        write_record(fh, payload, t.split, dist, variant, t.dims, meta, extra)


def read_tensor(ctx: RankContext, path, dist: DistParams | None = None) -> Tensor:
    """Load a tensor; every calling rank reads the file and keeps its own block."""
    with open(path, "rb") as fh:
        data, header = read_record(fh)
    dist = dist or DistParams(header["stretch"], header["cycles"], header["offset"])
    dims, split = tuple(header["dims"]), int(header["split"])
    variant = header["variant"]
    if variant == "special":
        return SpecialTensor(ctx, header["kind"], IndexTuple(dims, split), [tuple(p) for p in header["pairs"]], dist)
    if variant == "diagonal":
        n_in = header.get("n_dist_in", split // 2)
        in_dims = dims[:n_in] + dims[split: split + (len(dims) - split) // 2]
        return DiagonalTensor.from_diagonal(ctx, data, in_dims, n_in, dist)
    return Tensor.from_global(ctx, data, split, dist)
