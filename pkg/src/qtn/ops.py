"""Structural tensor operations: permutation, re-broadcast and index type changes.

Every function here is collective over the union of the input and output
spans.  Ranks outside that union may call as well; they return a tensor that
carries only metadata.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import InvalidArgument
from .layout import TensorLayout, permutation_maps, redistribute
from .tensor import DistParams, IndexTuple, Tensor, check_fits, to_dense

__all__ = ["permute", "rebcast", "scatter_index", "gather_index", "reshape"]


def _validate_perm(perm: Sequence[int], rank: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(rank)):
        raise InvalidArgument(f"{perm} is not a permutation of {rank} indices")
    return perm


def permute(t: Tensor, perm: Sequence[int], new_split: int | None = None,
            dist: DistParams | None = None) -> Tensor:
    """Reorder indices so that ``result.dims[k] == t.dims[perm[k]]``.

    ``new_split`` sets how many leading indices of the result are distributed
    (default: unchanged).  Broadcast parameters are kept unless ``dist`` is
    given.  When the new distributed size is larger than the old one the
    result spans more ranks (asymmetric permutation).
    """
    perm = _validate_perm(perm, t.ndim)
    split = t.split if new_split is None else int(new_split)
    shape = IndexTuple(tuple(t.dims[p] for p in perm), split)
    dist = dist or t.dist
    check_fits(t.ctx, shape, dist)
    src = to_dense(t)

    if split == t.split and dist == t.dist and perm[:split] == tuple(range(split)):
        # only local indices move: every rank transposes its own block
        if not src.hosted:
            return Tensor(t.ctx, shape, dist, None)
        s = t.split
        local_perm = [p - s for p in perm[s:]]
        local = src.local_array().transpose(local_perm).reshape(-1)
        return Tensor(t.ctx, shape, dist, local)

    src_layout = TensorLayout(src.shape, src.dist)
    dst_layout = TensorLayout(shape, dist)
    if t.ctx.rank not in set(src_layout.members) | set(dst_layout.members):
        return Tensor(t.ctx, shape, dist, None)
    fwd, inv = permutation_maps(t.dims, perm)
    identity = perm == tuple(range(t.ndim))
    local = redistribute(t.ctx, src_layout, src.local, dst_layout,
                         None if identity else fwd, None if identity else inv)
    return Tensor(t.ctx, shape, dist, local)


def rebcast(t: Tensor, new_dist: DistParams) -> Tensor:
    """Same values, new broadcast pattern ``new_dist``."""
    if new_dist == t.dist:
        return to_dense(t)
    return permute(t, range(t.ndim), t.split, new_dist)


def scatter_index(t: Tensor, local_pos: int) -> Tensor:
    """Turn the ``local_pos``-th local index into the last distributed index."""
    s = t.split
    if not 0 <= local_pos < t.ndim - s:
        raise InvalidArgument(f"local index {local_pos} out of range for {t.shape}")
    pos = s + local_pos
    order = list(range(s)) + [pos] + [i for i in range(s, t.ndim) if i != pos]
    return permute(t, order, s + 1)


def gather_index(t: Tensor, dist_pos: int) -> Tensor:
    """Turn the ``dist_pos``-th distributed index into the first local index."""
    s = t.split
    if not 0 <= dist_pos < s:
        raise InvalidArgument(f"distributed index {dist_pos} out of range for {t.shape}")
    order = [i for i in range(s) if i != dist_pos] + [dist_pos] + list(range(s, t.ndim))
    return permute(t, order, s - 1)


def reshape(t: Tensor, dims: Sequence[int], split: int) -> Tensor:
    """Regroup indices without moving data.

    Allowed whenever the distributed and the local sizes are both preserved,
    e.g. merging two adjacent local indices into one.
    """
    shape = IndexTuple(tuple(dims), split)
    if shape.n_dist != t.shape.n_dist or shape.n_local != t.shape.n_local:
        raise InvalidArgument(f"reshape {t.shape} -> {shape} changes the distributed or local size")
    dense = to_dense(t)
    return Tensor(t.ctx, shape, t.dist, dense.local)


def assemble_local(t: Tensor) -> np.ndarray:
    """Whole tensor from a single-rank tensor's buffer (no communication)."""
    return to_dense(t).local.reshape(t.dims)
