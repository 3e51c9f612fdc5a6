"""Distributed tensor values.

A tensor is described by an :class:`IndexTuple` (dimensions plus the number of
leading *distributed* indices) and a :class:`DistParams` broadcast pattern.
Elements live in a flat row-major buffer; the distributed coordinates select
which rank holds a block, the local coordinates select the offset inside the
block.  The rank-to-block map is::

    rank = offset + cycle * stretch * N_d + block * stretch + t

with ``cycle`` in ``range(cycles)`` and ``t`` in ``range(stretch)``, so every
block is repeated on ``stretch`` consecutive ranks and the whole pattern is
repeated ``cycles`` times.

Each rank owns its own :class:`Tensor` object; ranks outside the span hold the
same metadata with ``local = None``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ResourceError
from .runtime import RankContext, RankGroup

__all__ = [
    "IndexTuple",
    "DistParams",
    "Tensor",
    "SymmetricTensor",
    "DiagonalTensor",
    "SpecialTensor",
    "flat_offset",
    "home_ranks",
    "element",
    "to_dense",
]

CDTYPE = np.complex128


@dataclass(frozen=True)
class IndexTuple:
    """Index dimensions with the first ``split`` of them distributed."""

    dims: tuple[int, ...]
    split: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if any(d < 1 for d in dims):
            raise InvalidArgument(f"index dimensions must be positive, got {dims}")
        if not 0 <= self.split <= len(dims):
            raise InvalidArgument(f"split {self.split} outside 0..{len(dims)}")

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def dist_dims(self) -> tuple[int, ...]:
        return self.dims[: self.split]

    @property
    def local_dims(self) -> tuple[int, ...]:
        return self.dims[self.split :]

    @property
    def n_dist(self) -> int:
        return math.prod(self.dist_dims)

    @property
    def n_local(self) -> int:
        return math.prod(self.local_dims)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def is_distributed(self, pos: int) -> bool:
        return pos < self.split

    def __str__(self) -> str:
        d = ", ".join(map(str, self.dist_dims))
        loc = ", ".join(map(str, self.local_dims))
        return f"({d}; {loc})" if self.split else f"({loc})"


@dataclass(frozen=True)
class DistParams:
    """Broadcast pattern: ``stretch`` copies per block, ``cycles`` copies of the whole, first rank ``offset``."""

    stretch: int = 1
    cycles: int = 1
    offset: int = 0

    def __post_init__(self):
        if self.stretch < 1 or self.cycles < 1 or self.offset < 0:
            raise InvalidArgument(f"invalid distribution parameters {self}")

    @property
    def n_copies(self) -> int:
        return self.stretch * self.cycles

    def span(self, n_dist: int) -> int:
        return self.stretch * self.cycles * n_dist

    def ranks(self, n_dist: int) -> range:
        return range(self.offset, self.offset + self.span(n_dist))

    def locate(self, rank: int, n_dist: int) -> tuple[int, int] | None:
        """``(copy, block)`` held by ``rank``, or ``None`` outside the span."""
        rel = rank - self.offset
        if not 0 <= rel < self.span(n_dist):
            return None
        per_cycle = self.stretch * n_dist
        cycle, rem = divmod(rel, per_cycle)
        block, t = divmod(rem, self.stretch)
        return cycle * self.stretch + t, block


def flat_offset(coords: Sequence[int], dims: Sequence[int] | IndexTuple) -> int:
    """Row-major offset of ``coords`` within ``dims`` (rightmost index fastest)."""
    if isinstance(dims, IndexTuple):
        dims = dims.local_dims
    if len(coords) != len(dims):
        raise InvalidArgument(f"expected {len(dims)} coordinates, got {len(coords)}")
    off = 0
    for c, d in zip(coords, dims):
        if not 0 <= c < d:
            raise InvalidArgument(f"coordinate {tuple(coords)} out of bounds for {tuple(dims)}")
        off = off * d + int(c)
    return off


def home_ranks(dcoords: Sequence[int], shape: IndexTuple, dist: DistParams) -> list[int]:
    """All ranks holding the block with distributed coordinates ``dcoords``."""
    block = flat_offset(dcoords, shape.dist_dims)
    n_d = shape.n_dist
    return [
        dist.offset + c * dist.stretch * n_d + block * dist.stretch + t
        for c in range(dist.cycles)
        for t in range(dist.stretch)
    ]


def check_fits(ctx: RankContext, shape: IndexTuple, dist: DistParams) -> None:
    need = dist.offset + dist.span(shape.n_dist)
    if need > ctx.world.size:
        raise ResourceError(
            f"tensor {shape} with {dist} needs {need} ranks, world has {ctx.world.size}", required=need
        )


class Tensor:
    """Dense distributed tensor; base class of the other variants."""

    variant = "dense"

    def __init__(self, ctx: RankContext, shape: IndexTuple, dist: DistParams | None = None,
                 local: np.ndarray | None = None):
        self.ctx = ctx
        self.shape = shape
        self.dist = dist or DistParams()
        check_fits(ctx, shape, self.dist)
        self._where = self.dist.locate(ctx.rank, shape.n_dist)
        if self._where is None:
            self.local = None
        else:
            if local is None:
                raise InvalidArgument(f"rank {ctx.rank} hosts a block but no local data was given")
            local = np.ascontiguousarray(local, dtype=CDTYPE).reshape(-1)
            if local.size != self._local_length():
                raise InvalidArgument(
                    f"local buffer has {local.size} elements, expected {self._local_length()} for {shape}"
                )
            self.local = local

    def _local_length(self) -> int:
        return self.shape.n_local

    # -- metadata ---------------------------------------------------------------------

    @property
    def dims(self) -> tuple[int, ...]:
        return self.shape.dims

    @property
    def split(self) -> int:
        return self.shape.split

    @property
    def ndim(self) -> int:
        return self.shape.rank

    @property
    def hosted(self) -> bool:
        return self._where is not None

    @property
    def copy_index(self) -> int | None:
        return None if self._where is None else self._where[0]

    @property
    def block(self) -> int | None:
        return None if self._where is None else self._where[1]

    @property
    def span_ranks(self) -> range:
        return self.dist.ranks(self.shape.n_dist)

    def span_group(self) -> RankGroup:
        return self.ctx.group(self.span_ranks)

    def __repr__(self) -> str:
        return f"{type(self).__name__}{self.shape} str={self.dist.stretch} cyc={self.dist.cycles} off={self.dist.offset}"

    def with_local(self, local: np.ndarray | None) -> Tensor:
        """Same metadata and variant class (dense semantics), new local buffer."""
        return Tensor(self.ctx, self.shape, self.dist, local)

    def local_array(self) -> np.ndarray:
        """Local block reshaped to the local dimensions."""
        if self.local is None:
            raise InvalidArgument(f"rank {self.ctx.rank} does not host {self!r}")
        return self.local.reshape(self.shape.local_dims)

    # -- construction ----------------------------------------------------------------

    @classmethod
    def from_global(cls, ctx: RankContext, array: np.ndarray, split: int = 0,
                    dist: DistParams | None = None) -> Tensor:
        """Build from a full array known to every calling rank (each keeps its block)."""
        array = np.asarray(array, dtype=CDTYPE)
        shape = IndexTuple(array.shape, split)
        dist = dist or DistParams()
        where = dist.locate(ctx.rank, shape.n_dist)
        local = None
        if where is not None:
            local = array.reshape(shape.n_dist, shape.n_local)[where[1]]
        return Tensor(ctx, shape, dist, local)

    @classmethod
    def zeros(cls, ctx: RankContext, dims: Sequence[int], split: int = 0, dist: DistParams | None = None) -> Tensor:
        shape = IndexTuple(tuple(dims), split)
        dist = dist or DistParams()
        hosted = dist.locate(ctx.rank, shape.n_dist) is not None
        return Tensor(ctx, shape, dist, np.zeros(shape.n_local, CDTYPE) if hosted else None)

    # -- elementwise helpers (no communication) --------------------------------------

    def conj(self) -> Tensor:
        dense = to_dense(self)
        return dense.with_local(None if dense.local is None else dense.local.conj())

    def scale(self, factor: complex) -> Tensor:
        dense = to_dense(self)
        return dense.with_local(None if dense.local is None else dense.local * factor)

    # -- collective views ------------------------------------------------------------

    def to_global(self) -> np.ndarray | None:
        """Full array on every span rank (``None`` elsewhere). Collective over the span."""
        if not self.hosted:
            return None
        dense = to_dense(self)
        group = self.span_group()
        mine = (dense.block, dense.local) if dense.copy_index == 0 else None
        parts = group.allgather(mine)
        out = np.empty((self.shape.n_dist, self.shape.n_local), CDTYPE)
        for part in parts:
            if part is not None:
                out[part[0]] = part[1]
        return out.reshape(self.shape.dims)


class SymmetricTensor(Tensor):
    """Dense storage whose input and output index groups mirror each other.

    Tuple order is ``(in_d..., out_d...; in_l..., out_l...)``: both the
    distributed and the local dimensions are split in half, inputs first.
    """

    variant = "symmetric"

    def __init__(self, ctx: RankContext, shape: IndexTuple, dist: DistParams | None = None,
                 local: np.ndarray | None = None):
        _check_symmetric(shape)
        super().__init__(ctx, shape, dist, local)

    def in_out_positions(self) -> tuple[list[int], list[int]]:
        return _symmetric_positions(self.shape)

    def with_local(self, local):
        return Tensor(self.ctx, self.shape, self.dist, local)


def _check_symmetric(shape: IndexTuple) -> None:
    s, r = shape.split, shape.rank
    if s % 2 or (r - s) % 2:
        raise InvalidArgument(f"symmetric tensors need even distributed and local index counts, got {shape}")
    hd, hl = s // 2, (r - s) // 2
    d, loc = shape.dist_dims, shape.local_dims
    if d[:hd] != d[hd:] or loc[:hl] != loc[hl:]:
        raise InvalidArgument(f"input and output dimensions differ in {shape}")


def _symmetric_positions(shape: IndexTuple) -> tuple[list[int], list[int]]:
    s, r = shape.split, shape.rank
    hd, hl = s // 2, (r - s) // 2
    ins = list(range(hd)) + list(range(s, s + hl))
    outs = list(range(hd, s)) + list(range(s + hl, r))
    return ins, outs


class DiagonalTensor(SymmetricTensor):
    """Symmetric tensor storing only elements whose input and output coordinates agree.

    Ranks whose distributed input and output coordinates differ hold an empty
    buffer; the others hold the ``prod(in_local)`` diagonal entries.
    """

    variant = "diagonal"

    def _on_diagonal_block(self) -> bool:
        if self._where is None:
            return False
        hd = self.shape.split // 2
        dcoords = np.unravel_index(self._where[1], self.shape.dist_dims) if self.shape.split else ()
        return tuple(dcoords[:hd]) == tuple(dcoords[hd:])

    def _local_length(self) -> int:
        if not self._on_diagonal_block():
            return 0
        hl = (self.shape.rank - self.shape.split) // 2
        return math.prod(self.shape.local_dims[:hl])

    @classmethod
    def from_diagonal(cls, ctx: RankContext, diag: np.ndarray, in_dims: Sequence[int], n_dist_in: int = 0,
                      dist: DistParams | None = None) -> DiagonalTensor:
        """Diagonal operator on ``in_dims`` whose first ``n_dist_in`` indices are distributed."""
        in_dims = tuple(in_dims)
        diag = np.asarray(diag, dtype=CDTYPE).reshape(in_dims)
        in_d, in_l = in_dims[:n_dist_in], in_dims[n_dist_in:]
        shape = IndexTuple(in_d + in_d + in_l + in_l, 2 * n_dist_in)
        dist = dist or DistParams()
        obj = cls.__new__(cls)
        obj.ctx, obj.shape, obj.dist = ctx, shape, dist
        check_fits(ctx, shape, dist)
        obj._where = dist.locate(ctx.rank, shape.n_dist)
        if obj._where is None:
            obj.local = None
        elif obj._on_diagonal_block():
            dc = np.unravel_index(obj._where[1], shape.dist_dims) if n_dist_in else ()
            sub = diag[tuple(dc[:n_dist_in])] if n_dist_in else diag
            obj.local = np.ascontiguousarray(sub, dtype=CDTYPE).reshape(-1)
        else:
            obj.local = np.zeros(0, CDTYPE)
        return obj


class SpecialTensor(Tensor):
    """Structured tensor with no stored elements.

    ``pairs`` lists ``(in_pos, out_pos)`` index positions; an element is 1 when
    every paired coordinate agrees and 0 otherwise.  ``identity`` pairs the
    i-th input with the i-th output, ``swap`` exchanges two indices.
    """

    variant = "special"

    def __init__(self, ctx: RankContext, kind: str, shape: IndexTuple, pairs: Sequence[tuple[int, int]],
                 dist: DistParams | None = None):
        if kind not in ("identity", "swap"):
            raise InvalidArgument(f"unknown special tensor kind {kind!r}")
        pairs = tuple((int(i), int(o)) for i, o in pairs)
        used = [p for pair in pairs for p in pair]
        if sorted(used) != list(range(shape.rank)):
            raise InvalidArgument(f"pairs {pairs} must cover each of the {shape.rank} indices exactly once")
        for i, o in pairs:
            if shape.dims[i] != shape.dims[o]:
                raise InvalidArgument(f"paired indices {i},{o} have different dimensions")
        self.ctx, self.shape, self.dist = ctx, shape, dist or DistParams()
        check_fits(ctx, shape, self.dist)
        self.kind = kind
        self.pairs = pairs
        self._where = self.dist.locate(ctx.rank, shape.n_dist)
        self.local = None

    @property
    def hosted(self) -> bool:
        return self._where is not None

    def with_local(self, local):
        return Tensor(self.ctx, self.shape, self.dist, local)

    @classmethod
    def identity(cls, ctx: RankContext, dims: Sequence[int], in_distributed: Sequence[bool] | None = None,
                 out_distributed: Sequence[bool] | None = None, dist: DistParams | None = None) -> SpecialTensor:
        """Identity mapping inputs ``dims`` to outputs ``dims``; index types chosen per side."""
        k = len(dims)
        in_distributed = list(in_distributed or [False] * k)
        out_distributed = list(out_distributed or [False] * k)
        natural = [(d, flag) for d, flag in zip(dims, in_distributed)] + [
            (d, flag) for d, flag in zip(dims, out_distributed)
        ]
        order = [i for i, (_, flag) in enumerate(natural) if flag] + [i for i, (_, flag) in enumerate(natural) if not flag]
        pos = {nat: new for new, nat in enumerate(order)}
        shape = IndexTuple(tuple(natural[i][0] for i in order), sum(1 for _, f in natural if f))
        pairs = [(pos[i], pos[k + i]) for i in range(k)]
        return cls(ctx, "identity", shape, pairs, dist)

    @classmethod
    def swap(cls, ctx: RankContext, d1: int, d2: int, distributed: bool = False,
             dist: DistParams | None = None) -> SpecialTensor:
        """Tensor with inputs ``(d1, d2)`` and outputs ``(d2, d1)`` exchanging the two indices."""
        shape = IndexTuple((d1, d2, d2, d1), 4 if distributed else 0)
        return cls(ctx, "swap", shape, [(0, 3), (1, 2)], dist)

    def element_at(self, coords: Sequence[int]) -> complex:
        return 1.0 + 0j if all(coords[i] == coords[o] for i, o in self.pairs) else 0j

    def to_global(self) -> np.ndarray | None:
        if not self.hosted:
            return None
        grids = np.indices(self.shape.dims, sparse=True)
        mask = np.ones(self.shape.dims, dtype=bool)
        for i, o in self.pairs:
            mask = mask & (grids[i] == grids[o])
        return mask.astype(CDTYPE)


def _local_coords(t: Tensor) -> tuple[tuple[int, ...], tuple[np.ndarray, ...]]:
    """Distributed coordinates of this rank's block and sparse local coordinate grids."""
    dcoords = tuple(int(c) for c in np.unravel_index(t.block, t.shape.dist_dims)) if t.shape.split else ()
    grids = tuple(np.indices(t.shape.local_dims, sparse=True)) if t.shape.local_dims else ()
    return dcoords, grids


def to_dense(t: Tensor) -> Tensor:
    """Dense copy with identical shape and distribution (no communication)."""
    if type(t) is Tensor:
        return t
    if not t.hosted:
        return Tensor(t.ctx, t.shape, t.dist, None)
    if isinstance(t, SpecialTensor):
        dcoords, grids = _local_coords(t)
        s = t.shape.split
        coord = lambda p: dcoords[p] if p < s else grids[p - s]  # noqa: E731
        mask = np.ones(t.shape.local_dims, dtype=bool)
        for i, o in t.pairs:
            mask = mask & (coord(i) == coord(o))
        return Tensor(t.ctx, t.shape, t.dist, mask.astype(CDTYPE).reshape(-1))
    if isinstance(t, DiagonalTensor):
        local = np.zeros(t.shape.n_local, CDTYPE)
        if t.local.size:
            m = t.local.size
            idx = np.arange(m)
            local[idx * m + idx] = t.local
        return Tensor(t.ctx, t.shape, t.dist, local)
    return Tensor(t.ctx, t.shape, t.dist, t.local)


def element(t: Tensor, coords: Sequence[int], collective: bool = True) -> complex:
    """Value at full coordinates ``coords`` (tuple order).

    With ``collective=True`` every span rank must call; the first home rank
    broadcasts the value.  With ``collective=False`` the caller must host it.
    """
    coords = tuple(int(c) for c in coords)
    if len(coords) != t.ndim:
        raise InvalidArgument(f"expected {t.ndim} coordinates, got {len(coords)}")
    for c, d in zip(coords, t.dims):
        if not 0 <= c < d:
            raise InvalidArgument(f"coordinate {coords} out of bounds for {t.dims}")
    if isinstance(t, SpecialTensor):
        return t.element_at(coords)
    s = t.shape.split
    if isinstance(t, DiagonalTensor):
        ins, outs = t.in_out_positions()
        if any(coords[i] != coords[o] for i, o in zip(ins, outs)):
            return 0j
    block = flat_offset(coords[:s], t.shape.dist_dims)
    value = None
    if t.hosted and t.block == block:
        value = complex(to_dense(t).local[flat_offset(coords[s:], t.shape.local_dims)])
    if not collective:
        if value is None:
            raise InvalidArgument(f"rank {t.ctx.rank} does not host coordinates {coords}")
        return value
    if not t.hosted:
        raise InvalidArgument(f"rank {t.ctx.rank} is outside the span of {t!r}")
    group = t.span_group()
    root = group.index_of(home_ranks(coords[:s], t.shape, t.dist)[0])
    return group.bcast(value, root=root)
