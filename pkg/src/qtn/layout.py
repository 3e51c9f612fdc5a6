"""Element placement maps and the all-to-all redistribution engine.

A *layout* answers two questions about a distributed object with a logical
row-major global index ``g``:

* ``local_slots(rank)`` -> ``(copy, g_array)``: the global index of every slot
  in the rank's flat buffer, in storage order (or ``None``).
* ``locate(g_array, copy)`` -> ``(ranks, offsets)``: where copy ``copy`` keeps
  those elements.

:func:`redistribute` moves data from one layout to another through a single
variable all-to-all, optionally re-indexing through ``fwd`` (source global ->
destination global) and ``inv`` (its inverse).  Unmapped indices are ``-1``:
dropped on the sending side, zero-filled on the receiving side.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np

from .runtime import RankContext
from .tensor import CDTYPE, DistParams, IndexTuple

IndexMap = Callable[[np.ndarray], np.ndarray]


class TensorLayout:
    def __init__(self, shape: IndexTuple, dist: DistParams):
        self.shape = shape
        self.dist = dist
        self.n_dist = shape.n_dist
        self.n_local = shape.n_local
        self.size = shape.size
        self.n_copies = dist.n_copies
        self.members = tuple(dist.ranks(self.n_dist))

    def local_slots(self, rank: int):
        where = self.dist.locate(rank, self.n_dist)
        if where is None:
            return None
        copy, block = where
        return copy, block * self.n_local + np.arange(self.n_local, dtype=np.int64)

    def locate(self, g: np.ndarray, copy: int):
        block, off = np.divmod(g, self.n_local)
        cycle, t = divmod(copy, self.dist.stretch)
        ranks = self.dist.offset + cycle * self.dist.stretch * self.n_dist + block * self.dist.stretch + t
        return ranks, off


def numroc(n: int, nb: int, iproc: int, nprocs: int) -> int:
    """Number of rows/cols of a block-cyclic dimension stored on process ``iproc``."""
    nblocks = n // nb
    count = (nblocks // nprocs) * nb
    extra = nblocks % nprocs
    if iproc < extra:
        count += nb
    elif iproc == extra:
        count += n % nb
    return count


class BlockCyclicLayout:
    """2-D block-cyclic matrix layout; local tiles stored column-major.

    Global element ``(r, c)`` has logical index ``r * N + c``; grid process
    ``(pr, pc)`` is member ``pr * P_c + pc`` of ``members``.
    """

    def __init__(self, rows: int, cols: int, grid: tuple[int, int], blocks: tuple[int, int],
                 members: Sequence[int]):
        self.rows, self.cols = int(rows), int(cols)
        self.grid = (int(grid[0]), int(grid[1]))
        self.blocks = (max(1, int(blocks[0])), max(1, int(blocks[1])))
        self.members = tuple(int(m) for m in members)
        if len(self.members) != self.grid[0] * self.grid[1]:
            raise ValueError(f"grid {self.grid} does not match {len(self.members)} members")
        self.size = self.rows * self.cols
        self.n_copies = 1
        self._member_arr = np.asarray(self.members, dtype=np.int64)

    def coords(self, rank: int) -> tuple[int, int] | None:
        if rank not in self.members:
            return None
        return divmod(self.members.index(rank), self.grid[1])

    def local_shape(self, rank: int) -> tuple[int, int]:
        pr, pc = self.coords(rank)
        return (numroc(self.rows, self.blocks[0], pr, self.grid[0]),
                numroc(self.cols, self.blocks[1], pc, self.grid[1]))

    def local_rows(self, rank: int) -> np.ndarray:
        pr, _ = self.coords(rank)
        return _owned(self.rows, self.blocks[0], pr, self.grid[0])

    def local_cols(self, rank: int) -> np.ndarray:
        _, pc = self.coords(rank)
        return _owned(self.cols, self.blocks[1], pc, self.grid[1])

    def local_slots(self, rank: int):
        if rank not in self.members:
            return None
        rows = self.local_rows(rank)
        cols = self.local_cols(rank)
        return 0, np.add.outer(cols, rows * self.cols).reshape(-1)

    def locate(self, g: np.ndarray, copy: int = 0):
        r, c = np.divmod(g, self.cols)
        mb, nb = self.blocks
        prow, pcol = self.grid
        pr = (r // mb) % prow
        pc = (c // nb) % pcol
        lr = (r // (mb * prow)) * mb + r % mb
        lc = (c // (nb * pcol)) * nb + c % nb
        # local leading dimension differs per process row
        lld = np.array([numroc(self.rows, mb, p, prow) for p in range(prow)], dtype=np.int64)
        ranks = self._member_arr[pr * pcol + pc]
        return ranks, lc * lld[pr] + lr


def _owned(n: int, nb: int, iproc: int, nprocs: int) -> np.ndarray:
    idx = np.arange(n, dtype=np.int64)
    return idx[(idx // nb) % nprocs == iproc]


def redistribute(ctx: RankContext, src, src_local: np.ndarray | None, dst,
                 fwd: IndexMap | None = None, inv: IndexMap | None = None) -> np.ndarray | None:
    """Move elements from layout ``src`` to layout ``dst``; collective over the union of members.

    Returns this rank's destination buffer, or ``None`` when it holds no
    destination slot.  Ranks outside both layouts must not call.
    """
    members = tuple(sorted(set(src.members) | set(dst.members)))
    me = ctx.rank
    n_src = src.n_copies

    # receiving plan
    dst_slots = dst.local_slots(me)
    recv_plan = None
    if dst_slots is not None:
        q, gd = dst_slots
        gs = gd if inv is None else inv(gd)
        valid = np.flatnonzero(gs >= 0) if inv is not None else np.arange(gd.size)
        gs = gs[valid]
        s = q % n_src
        ranks, offs = src.locate(gs, s)
        order = np.lexsort((offs, ranks))
        recv_plan = (gd.size, valid[order], ranks[order])

    if len(members) == 1:
        if recv_plan is None:
            return None
        size, slots, _ = recv_plan
        out = np.zeros(size, CDTYPE)
        _, gd = dst_slots
        gs = gd if inv is None else inv(gd)
        _, offs = src.locate(gs[slots], dst_slots[0] % n_src)
        out[slots] = src_local[offs]
        return out

    index = {r: i for i, r in enumerate(members)}
    send: list = [np.zeros(0, CDTYPE)] * len(members)
    src_slots = src.local_slots(me)
    if src_slots is not None and src_local is not None:
        s, g = src_slots
        gd = g if fwd is None else fwd(g)
        keep = np.flatnonzero(gd >= 0) if fwd is not None else np.arange(g.size)
        gd = gd[keep]
        values = src_local[keep]
        for q in range(s, dst.n_copies, n_src):
            ranks, _ = dst.locate(gd, q)
            order = np.argsort(ranks, kind="stable")
            uniq, starts, counts = np.unique(ranks[order], return_index=True, return_counts=True)
            sorted_vals = values[order]
            for r, st, ct in zip(uniq, starts, counts):
                send[index[int(r)]] = sorted_vals[st : st + ct]

    expected = [0] * len(members)
    if recv_plan is not None:
        uniq, counts = np.unique(recv_plan[2], return_counts=True)
        for r, ct in zip(uniq, counts):
            expected[index[int(r)]] = int(ct)

    recv = ctx.group(members).alltoallv(send, expected)
    if recv_plan is None:
        return None
    size, slots, _ = recv_plan
    out = np.zeros(size, CDTYPE)
    if slots.size:
        out[slots] = np.concatenate([np.asarray(x, dtype=CDTYPE) for x in recv])
    return out


def ravel(coords: Sequence[np.ndarray], dims: Sequence[int]) -> np.ndarray:
    """Row-major flattening of coordinate arrays (empty ``dims`` gives zeros)."""
    if not dims:
        return np.zeros_like(coords[0]) if coords else np.zeros(1, np.int64)
    return np.ravel_multi_index(tuple(coords), tuple(dims))


def unravel(g: np.ndarray, dims: Sequence[int]) -> tuple[np.ndarray, ...]:
    if not dims:
        return ()
    return np.unravel_index(g, tuple(dims))


def permutation_maps(dims: Sequence[int], perm: Sequence[int]) -> tuple[IndexMap, IndexMap]:
    """Global index maps for ``result = source.transpose(perm)``."""
    dims = tuple(dims)
    perm = tuple(perm)
    new_dims = tuple(dims[p] for p in perm)
    inv_perm = tuple(np.argsort(perm))

    def fwd(g: np.ndarray) -> np.ndarray:
        c = unravel(g, dims)
        return ravel([c[p] for p in perm], new_dims) if dims else g

    def inv(g: np.ndarray) -> np.ndarray:
        c = unravel(g, new_dims)
        return ravel([c[p] for p in inv_perm], dims) if dims else g

    return fwd, inv


def prod(xs) -> int:
    return math.prod(xs)
