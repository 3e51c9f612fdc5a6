"""Block-cyclic matrices, distributed GEMM and SVD.

Tensors are mapped to matrices by choosing row and column index groups.  With
a ``P_r x P_c`` process grid and ``MB x NB`` blocks, global row ``r`` lives on
process row ``(r // MB) % P_r``; split into index groups this is the familiar
``row = (i_c * P_r + i_d) * MB + i_b`` decomposition into cycle, distributed
and block indices, and local tiles are kept column-major.

``pgemm`` broadcasts panels along grid rows and columns (SUMMA).  ``psvd``
gathers the matrix onto the first grid process, factorises it with LAPACK and
scatters the factors back to block-cyclic form.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidArgument, NumericalError
from .layout import BlockCyclicLayout, TensorLayout, ravel, redistribute, unravel
from .runtime import RankContext
from .tensor import CDTYPE, DistParams, IndexTuple, Tensor, check_fits, to_dense

__all__ = [
    "BlockCyclicMatrix",
    "grid_shape",
    "tensor_to_matrix",
    "matrix_to_tensor",
    "pgemm",
    "psvd",
    "truncate_svd",
    "svd_local",
]


def grid_shape(p: int) -> tuple[int, int]:
    """Most-square factorisation ``P_r * P_c == p`` with ``P_r <= P_c``."""
    pr = int(math.isqrt(p))
    while p % pr:
        pr -= 1
    return pr, p // pr


class BlockCyclicMatrix:
    """One rank's view of a block-cyclic matrix (``local`` is ``None`` off-grid)."""

    def __init__(self, ctx: RankContext, layout: BlockCyclicLayout, local: np.ndarray | None):
        self.ctx = ctx
        self.layout = layout
        if ctx.rank in layout.members:
            lr, lc = layout.local_shape(ctx.rank)
            local = np.zeros(lr * lc, CDTYPE) if local is None else np.asarray(local, CDTYPE).reshape(-1)
            if local.size != lr * lc:
                raise InvalidArgument(f"local tile buffer has {local.size} elements, expected {lr * lc}")
            self.local = local
        else:
            self.local = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.layout.rows, self.layout.cols

    @property
    def grid(self) -> tuple[int, int]:
        return self.layout.grid

    @property
    def blocks(self) -> tuple[int, int]:
        return self.layout.blocks

    def local_matrix(self) -> np.ndarray:
        """Local tiles as a 2-D column-major array."""
        return self.local.reshape(self.layout.local_shape(self.ctx.rank), order="F")

    def group(self):
        return self.ctx.group(self.layout.members)

    @classmethod
    def from_global(cls, ctx: RankContext, a: np.ndarray, members: Sequence[int],
                    grid: tuple[int, int] | None = None, blocks: tuple[int, int] | None = None):
        a = np.asarray(a, dtype=CDTYPE)
        if a.ndim != 2:
            raise InvalidArgument("expected a 2-D array")
        members = tuple(members)
        grid = grid or grid_shape(len(members))
        blocks = blocks or default_blocks(a.shape[0], a.shape[1], grid)
        layout = BlockCyclicLayout(a.shape[0], a.shape[1], grid, blocks, members)
        local = None
        if ctx.rank in members:
            rows, cols = layout.local_rows(ctx.rank), layout.local_cols(ctx.rank)
            local = a[np.ix_(rows, cols)].reshape(-1, order="F")
        return cls(ctx, layout, local)

    def to_global(self) -> np.ndarray | None:
        """Full matrix on every grid member. Collective over the grid."""
        if self.local is None:
            return None
        parts = self.group().allgather(self.local)
        out = np.zeros(self.shape, CDTYPE)
        for rank, part in zip(self.layout.members, parts):
            rows, cols = self.layout.local_rows(rank), self.layout.local_cols(rank)
            out[np.ix_(rows, cols)] = part.reshape(rows.size, cols.size, order="F")
        return out

    def reblock(self, blocks: tuple[int, int]) -> BlockCyclicMatrix:
        if tuple(blocks) == self.blocks:
            return self
        layout = BlockCyclicLayout(self.layout.rows, self.layout.cols, self.grid, blocks, self.layout.members)
        if self.local is None:
            return BlockCyclicMatrix(self.ctx, layout, None)
        return BlockCyclicMatrix(self.ctx, layout, redistribute(self.ctx, self.layout, self.local, layout))

    def scale_columns(self, s: np.ndarray) -> BlockCyclicMatrix:
        if self.local is None:
            return self
        cols = self.layout.local_cols(self.ctx.rank)
        return BlockCyclicMatrix(self.ctx, self.layout, (self.local_matrix() * s[cols]).reshape(-1, order="F"))

    def scale_rows(self, s: np.ndarray) -> BlockCyclicMatrix:
        if self.local is None:
            return self
        rows = self.layout.local_rows(self.ctx.rank)
        return BlockCyclicMatrix(self.ctx, self.layout, (self.local_matrix() * s[rows, None]).reshape(-1, order="F"))


def default_blocks(rows: int, cols: int, grid: tuple[int, int]) -> tuple[int, int]:
    return max(1, -(-rows // grid[0])), max(1, -(-cols // grid[1]))


def _check_partition(ndim: int, row_idxs: Sequence[int], col_idxs: Sequence[int]) -> None:
    both = list(row_idxs) + list(col_idxs)
    if sorted(both) != list(range(ndim)):
        raise InvalidArgument(
            f"row indices {list(row_idxs)} and column indices {list(col_idxs)} must partition {ndim} indices"
        )


def tensor_to_matrix(t: Tensor, row_idxs: Sequence[int], col_idxs: Sequence[int],
                     members: Sequence[int] | None = None, grid: tuple[int, int] | None = None,
                     blocks: tuple[int, int] | None = None) -> BlockCyclicMatrix:
    """Matrix with rows flattened (row-major) over ``row_idxs`` and columns over ``col_idxs``.

    Collective over the tensor span plus ``members`` (the grid, default the span).
    """
    row_idxs, col_idxs = list(row_idxs), list(col_idxs)
    _check_partition(t.ndim, row_idxs, col_idxs)
    dims = t.dims
    rdims = [dims[i] for i in row_idxs]
    cdims = [dims[i] for i in col_idxs]
    m, n = math.prod(rdims), math.prod(cdims)
    members = tuple(members) if members is not None else tuple(t.span_ranks)
    grid = grid or grid_shape(len(members))
    blocks = blocks or default_blocks(m, n, grid)
    layout = BlockCyclicLayout(m, n, grid, blocks, members)
    src = to_dense(t)
    if len(members) == 1 and tuple(t.span_ranks) == members and t.dist.n_copies == 1:
        if src.local is None:
            return BlockCyclicMatrix(t.ctx, layout, None)
        mat = src.local.reshape(dims).transpose(row_idxs + col_idxs).reshape(m, n)
        return BlockCyclicMatrix(t.ctx, layout, mat.reshape(-1, order="F"))

    src_layout = TensorLayout(t.shape, t.dist)
    if t.ctx.rank not in set(src_layout.members) | set(members):
        return BlockCyclicMatrix(t.ctx, layout, None)

    def fwd(g):
        c = unravel(g, dims)
        return ravel([c[i] for i in row_idxs], rdims) * n + ravel([c[i] for i in col_idxs], cdims)

    def inv(g):
        r, cc = np.divmod(g, n)
        rc, ccs = unravel(r, rdims), unravel(cc, cdims)
        coords = [None] * len(dims)
        for k, i in enumerate(row_idxs):
            coords[i] = rc[k]
        for k, i in enumerate(col_idxs):
            coords[i] = ccs[k]
        return ravel(coords, dims) if dims else g

    local = redistribute(t.ctx, src_layout, src.local, layout, fwd, inv)
    return BlockCyclicMatrix(t.ctx, layout, local)


def matrix_to_tensor(mat: BlockCyclicMatrix, row_dims: Sequence[int], col_dims: Sequence[int],
                     order: Sequence[int] | None = None, split: int = 0,
                     dist: DistParams | None = None) -> Tensor:
    """Inverse of :func:`tensor_to_matrix`.

    The *natural* tensor has dimensions ``row_dims + col_dims``; the result is
    that tensor permuted by ``order`` (``result.dims[k] == natural[order[k]]``)
    with the first ``split`` indices distributed.
    """
    natural = tuple(row_dims) + tuple(col_dims)
    nr = len(row_dims)
    order = list(range(len(natural))) if order is None else list(order)
    shape = IndexTuple(tuple(natural[i] for i in order), split)
    dist = dist or DistParams()
    ctx = mat.ctx
    check_fits(ctx, shape, dist)
    layout = TensorLayout(shape, dist)
    m, n = mat.shape
    if math.prod(row_dims) != m or math.prod(col_dims) != n:
        raise InvalidArgument(f"dimensions {natural} do not match a {m}x{n} matrix")
    if len(mat.layout.members) == 1 and layout.members == mat.layout.members:
        if mat.local is None:
            return Tensor(ctx, shape, dist, None)
        arr = mat.local_matrix().reshape(natural).transpose(order)
        return Tensor(ctx, shape, dist, arr.reshape(-1))
    if ctx.rank not in set(layout.members) | set(mat.layout.members):
        return Tensor(ctx, shape, dist, None)
    inv_order = list(np.argsort(order))
    rdims, cdims = list(row_dims), list(col_dims)
    tdims = shape.dims

    def fwd(g):  # matrix -> tensor
        r, c = np.divmod(g, n)
        nat = list(unravel(r, rdims)) + list(unravel(c, cdims))
        return ravel([nat[i] for i in order], tdims) if tdims else g

    def inv(g):  # tensor -> matrix
        tc = unravel(g, tdims)
        nat = [tc[inv_order[i]] for i in range(len(natural))]
        return ravel(nat[:nr], rdims) * n + ravel(nat[nr:], cdims) if tdims else g

    local = redistribute(ctx, mat.layout, mat.local, layout, fwd, inv)
    return Tensor(ctx, shape, dist, local)


def pgemm(a: BlockCyclicMatrix, b: BlockCyclicMatrix) -> BlockCyclicMatrix:
    """Distributed complex matrix product ``a @ b`` (collective over the grid)."""
    if a.shape[1] != b.shape[0]:
        raise InvalidArgument(f"cannot multiply {a.shape} by {b.shape}")
    if a.layout.members != b.layout.members or a.grid != b.grid:
        raise InvalidArgument("pgemm operands must share a process grid")
    if a.blocks[1] != b.blocks[0]:
        b = b.reblock((a.blocks[1], b.blocks[1]))
    ctx = a.ctx
    layout = BlockCyclicLayout(a.shape[0], b.shape[1], a.grid, (a.blocks[0], b.blocks[1]), a.layout.members)
    if ctx.rank not in layout.members:
        return BlockCyclicMatrix(ctx, layout, None)
    if len(layout.members) == 1:
        c = a.local_matrix() @ b.local_matrix()
        return BlockCyclicMatrix(ctx, layout, c.reshape(-1, order="F"))

    prow, pcol = a.grid
    pr, pc = a.layout.coords(ctx.rank)
    members = a.layout.members
    row_group = ctx.group([members[pr * pcol + j] for j in range(pcol)])
    col_group = ctx.group([members[i * pcol + pc] for i in range(prow)])
    a_loc, b_loc = a.local_matrix(), b.local_matrix()
    c_loc = np.zeros(layout.local_shape(ctx.rank), CDTYPE, order="F")
    k_total, kb = a.shape[1], a.blocks[1]
    for blk in range(-(-k_total // kb)):
        width = min(kb, k_total - blk * kb)
        owner_c, owner_r = blk % pcol, blk % prow
        a_panel = None
        if pc == owner_c:
            start = (blk // pcol) * kb
            a_panel = a_loc[:, start : start + width]
        a_panel = row_group.bcast(a_panel, root=owner_c)
        b_panel = None
        if pr == owner_r:
            start = (blk // prow) * kb
            b_panel = b_loc[start : start + width, :]
        b_panel = col_group.bcast(b_panel, root=owner_r)
        c_loc += a_panel @ b_panel
    return BlockCyclicMatrix(ctx, layout, c_loc.reshape(-1, order="F"))


def svd_local(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with a fallback driver; raises :class:`NumericalError` on failure."""
    if not np.all(np.isfinite(a)):
        raise NumericalError("SVD input contains non-finite values", {"shape": a.shape})
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as first:
        try:
            return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as second:
            raise NumericalError(
                "SVD did not converge",
                {"shape": a.shape, "fro_norm": float(np.linalg.norm(a)), "gesdd": str(first), "gesvd": str(second)},
            ) from second


def psvd(a: BlockCyclicMatrix) -> tuple[BlockCyclicMatrix, np.ndarray, BlockCyclicMatrix]:
    """``a = U diag(S) Vh`` with ``S`` descending; collective over the grid.

    ``S`` is returned on every grid member (``None`` elsewhere).
    """
    ctx = a.ctx
    m, n = a.shape
    k = min(m, n)
    members = a.layout.members
    if k < 1:
        raise InvalidArgument("psvd needs a non-empty matrix")
    grid = a.grid
    u_layout = BlockCyclicLayout(m, k, grid, (a.blocks[0], max(1, -(-k // grid[1]))), members)
    v_layout = BlockCyclicLayout(k, n, grid, (max(1, -(-k // grid[0])), a.blocks[1]), members)
    if ctx.rank not in members:
        return BlockCyclicMatrix(ctx, u_layout, None), None, BlockCyclicMatrix(ctx, v_layout, None)
    if len(members) == 1:
        u, s, vh = svd_local(a.local_matrix())
        return (BlockCyclicMatrix(ctx, u_layout, u.reshape(-1, order="F")), s,
                BlockCyclicMatrix(ctx, v_layout, vh.reshape(-1, order="F")))

    root = members[0]
    root_layout = BlockCyclicLayout(m, n, (1, 1), (m, n), (root,))
    full = redistribute(ctx, a.layout, a.local, root_layout)
    u_root = v_root = s = None
    error = None
    if ctx.rank == root:
        try:
            u, s, vh = svd_local(full.reshape(m, n, order="F"))
            u_root, v_root = u.reshape(-1, order="F"), vh.reshape(-1, order="F")
        except NumericalError as exc:
            error = exc
    group = a.group()
    s, error = group.bcast((s, error), root=0)
    if error is not None:
        raise error
    u_src = BlockCyclicLayout(m, k, (1, 1), (m, k), (root,))
    v_src = BlockCyclicLayout(k, n, (1, 1), (k, n), (root,))
    u_loc = redistribute(ctx, u_src, u_root, u_layout)
    v_loc = redistribute(ctx, v_src, v_root, v_layout)
    return BlockCyclicMatrix(ctx, u_layout, u_loc), s, BlockCyclicMatrix(ctx, v_layout, v_loc)


def truncate_svd(u, s: np.ndarray, vh, chi: int):
    """Keep the ``chi`` largest singular triplets; zero-pad when fewer exist.

    Works on numpy factors or on :class:`BlockCyclicMatrix` factors.
    """
    if chi < 1:
        raise InvalidArgument(f"chi must be >= 1, got {chi}")
    k = len(s)
    s_new = np.zeros(chi, dtype=float)
    s_new[: min(k, chi)] = s[: min(k, chi)]
    if isinstance(u, np.ndarray):
        if chi == k:
            return u, np.asarray(s, float), vh
        u_new = np.zeros((u.shape[0], chi), dtype=u.dtype)
        v_new = np.zeros((chi, vh.shape[1]), dtype=vh.dtype)
        keep = min(k, chi)
        u_new[:, :keep] = u[:, :keep]
        v_new[:keep] = vh[:keep]
        return u_new, s_new, v_new
    if chi == k:
        return u, np.asarray(s, float), vh
    ctx = u.ctx
    m, n = u.shape[0], vh.shape[1]
    grid, members = u.grid, u.layout.members
    u_layout = BlockCyclicLayout(m, chi, grid, (u.blocks[0], max(1, -(-chi // grid[1]))), members)
    v_layout = BlockCyclicLayout(chi, n, grid, (max(1, -(-chi // grid[0])), vh.blocks[1]), members)

    def u_fwd(g):
        r, c = np.divmod(g, k)
        return np.where(c < chi, r * chi + c, -1)

    def u_inv(g):
        r, c = np.divmod(g, chi)
        return np.where(c < k, r * k + c, -1)

    def v_fwd(g):
        r, c = np.divmod(g, n)
        return np.where(r < chi, g, -1)

    def v_inv(g):
        r, c = np.divmod(g, n)
        return np.where(r < k, g, -1)

    if ctx.rank not in members:
        return BlockCyclicMatrix(ctx, u_layout, None), s_new, BlockCyclicMatrix(ctx, v_layout, None)
    u_loc = redistribute(ctx, u.layout, u.local, u_layout, u_fwd, u_inv)
    v_loc = redistribute(ctx, vh.layout, vh.local, v_layout, v_fwd, v_inv)
    return BlockCyclicMatrix(ctx, u_layout, u_loc), s_new, BlockCyclicMatrix(ctx, v_layout, v_loc)
