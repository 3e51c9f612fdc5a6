"""Tensor networks: bonds, pairwise contraction, decomposition and truncation.

The free functions :func:`contract_tensors` and :func:`decompose_tensor` work
on bare tensors and are what the MPS layer uses.  :class:`TensorNetwork` keeps
tensors and bonds in id-keyed tables and rewires bonds after each operation.

Index order conventions (fixed so results are deterministic):

* contraction result: distributed open indices of the first operand, then of
  the second, then local open indices of the first, then of the second;
* decomposition: ``L = (left_d..., bond_d; left_l..., bond_l)`` and
  ``R = (bond_d, right_d...; bond_l, right_l...)``.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Hashable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ResourceError
from .linalg import grid_shape, matrix_to_tensor, pgemm, psvd, svd_local, tensor_to_matrix, truncate_svd
from .ops import permute, rebcast
from .runtime import RankContext
from .tensor import CDTYPE, DistParams, IndexTuple, SpecialTensor, Tensor, to_dense

__all__ = [
    "Bond",
    "TensorNetwork",
    "contract_tensors",
    "decompose_tensor",
    "result_dist",
]

# singular values below this fraction of the largest are treated as exact zeros
DEFAULT_CUTOFF = 1e-13


def result_dist(ctx: RankContext, shape: IndexTuple, preferred: DistParams) -> DistParams:
    """``preferred`` if the result fits the world, else the first fallback that does."""
    for dist in (preferred, DistParams(1, 1, preferred.offset), DistParams()):
        if dist.offset + dist.span(shape.n_dist) <= ctx.world.size:
            return dist
    need = DistParams().span(shape.n_dist)
    raise ResourceError(f"no layout for result {shape}: needs {need} ranks, world has {ctx.world.size}",
                        required=need)


def _single_rank(*tensors: Tensor, dist: DistParams, shape: IndexTuple) -> bool:
    spans = {tuple(t.span_ranks) for t in tensors}
    spans.add(tuple(dist.ranks(shape.n_dist)))
    return len(spans) == 1 and len(next(iter(spans))) == 1


def contract_tensors(a: Tensor, b: Tensor, pairs: Sequence[tuple[int, int]],
                     dist: DistParams | None = None) -> Tensor:
    """Sum over the index pairs ``(index of a, index of b)``.

    Both indices of a pair must have the same dimension and the same type.
    Collective over the union of the operand and result spans.
    """
    pairs = [(int(i), int(j)) for i, j in pairs]
    ca, cb = [i for i, _ in pairs], [j for _, j in pairs]
    if len(set(ca)) != len(ca) or len(set(cb)) != len(cb):
        raise InvalidArgument(f"repeated index in contraction pairs {pairs}")
    for i, j in pairs:
        if not (0 <= i < a.ndim and 0 <= j < b.ndim):
            raise InvalidArgument(f"contraction pair {(i, j)} out of range for ranks {a.ndim}, {b.ndim}")
        if a.dims[i] != b.dims[j]:
            raise InvalidArgument(f"bond {(i, j)} joins dimensions {a.dims[i]} and {b.dims[j]}")
        if a.shape.is_distributed(i) != b.shape.is_distributed(j):
            raise InvalidArgument(f"bond {(i, j)} joins a distributed and a local index")
    a_open = [i for i in range(a.ndim) if i not in ca]
    b_open = [j for j in range(b.ndim) if j not in cb]
    a_od = [i for i in a_open if a.shape.is_distributed(i)]
    a_ol = [i for i in a_open if not a.shape.is_distributed(i)]
    b_od = [j for j in b_open if b.shape.is_distributed(j)]
    b_ol = [j for j in b_open if not b.shape.is_distributed(j)]
    # natural result order is a_open + b_open; `order` picks the typed order from it
    na = len(a_open)
    order = ([a_open.index(i) for i in a_od] + [na + b_open.index(j) for j in b_od]
             + [a_open.index(i) for i in a_ol] + [na + b_open.index(j) for j in b_ol])
    rdims = [a.dims[i] for i in a_open]
    cdims = [b.dims[j] for j in b_open]
    natural = rdims + cdims
    shape = IndexTuple(tuple(natural[k] for k in order), len(a_od) + len(b_od))
    dist = dist or result_dist(a.ctx, shape, a.dist)
    ctx = a.ctx

    if _single_rank(a, b, dist=dist, shape=shape):
        if ctx.rank not in a.span_ranks:
            return Tensor(ctx, shape, dist, None)
        arr = np.tensordot(to_dense(a).local.reshape(a.dims), to_dense(b).local.reshape(b.dims), axes=(ca, cb))
        return Tensor(ctx, shape, dist, np.transpose(arr, order).reshape(-1))

    members = tuple(sorted(set(a.span_ranks) | set(b.span_ranks)))
    everyone = set(members) | set(dist.ranks(shape.n_dist))
    if ctx.rank not in everyone:
        return Tensor(ctx, shape, dist, None)
    grid = grid_shape(len(members))
    m, k, n = math.prod(rdims), math.prod(a.dims[i] for i in ca), math.prod(cdims)
    kb = max(1, -(-k // grid[1]))
    ma = tensor_to_matrix(a, a_open, ca, members, grid, (max(1, -(-m // grid[0])), kb))
    mb = tensor_to_matrix(b, cb, b_open, members, grid, (kb, max(1, -(-n // grid[1]))))
    mc = pgemm(ma, mb)
    return matrix_to_tensor(mc, rdims, cdims, order, shape.split, dist)


def _split_bond(bond, chi: int) -> tuple[int, int, bool, bool]:
    """``(chi_d, chi_l, has_d, has_l)`` for a ``bond`` argument."""
    if bond == "local":
        return 1, chi, False, True
    if bond == "distributed":
        return chi, 1, True, False
    chi_d, chi_l = (int(x) for x in bond)
    return chi_d, chi_l, True, True


def decompose_tensor(t: Tensor, left: Sequence[int], right: Sequence[int], chi: int,
                     absorb: str = "left", bond="local", pad: bool = False,
                     cutoff: float = DEFAULT_CUTOFF, dist: DistParams | None = None):
    """Split ``t`` by SVD into ``L`` (``left`` indices) and ``R`` (``right`` indices).

    Args:
        chi: bond dimension cap.  Without ``pad`` the new bond has dimension
            ``min(chi, rank bound)``; with ``pad`` it has exactly ``chi`` and
            missing singular values are zero.
        absorb: where the singular values go: ``"left"``, ``"right"`` or
            ``"split"`` (square roots on both sides).
        bond: ``"local"``, ``"distributed"`` or a ``(chi_d, chi_l)`` pair, in
            which case the bond becomes one distributed and one local index
            and ``chi`` must equal ``chi_d * chi_l``.
        cutoff: singular values at or below ``cutoff * max(S)`` are set to zero
            together with their singular vectors.

    Returns:
        ``(L, R, S)`` where ``S`` holds all singular values before truncation.
    """
    left, right = [int(i) for i in left], [int(i) for i in right]
    if sorted(left + right) != list(range(t.ndim)):
        raise InvalidArgument(f"left {left} and right {right} must partition {t.ndim} indices")
    if chi < 1:
        raise InvalidArgument(f"chi must be >= 1, got {chi}")
    if absorb not in ("left", "right", "split"):
        raise InvalidArgument(f"unknown absorb mode {absorb!r}")
    if bond not in ("local", "distributed"):
        if int(bond[0]) * int(bond[1]) != chi:
            raise InvalidArgument(f"bond split {tuple(bond)} does not multiply to chi={chi}")
        pad = True
    ctx = t.ctx
    m = math.prod(t.dims[i] for i in left)
    n = math.prod(t.dims[i] for i in right)
    k = chi if pad else min(chi, m, n)
    chi_d, chi_l, has_d, has_l = _split_bond(bond, k)

    ld = [i for i in left if t.shape.is_distributed(i)]
    ll = [i for i in left if not t.shape.is_distributed(i)]
    rd = [i for i in right if t.shape.is_distributed(i)]
    rl = [i for i in right if not t.shape.is_distributed(i)]
    bond_dims = ([chi_d] if has_d else []) + ([chi_l] if has_l else [])
    # natural L is (left..., bond...) and natural R is (bond..., right...)
    nl = len(left)
    l_order = [left.index(i) for i in ld] + ([nl] if has_d else []) + [left.index(i) for i in ll] + (
        [nl + int(has_d)] if has_l else [])
    nb = len(bond_dims)
    r_order = ([0] if has_d else []) + [nb + right.index(i) for i in rd] + (
        [int(has_d)] if has_l else []) + [nb + right.index(i) for i in rl]
    l_nat = [t.dims[i] for i in left] + bond_dims
    r_nat = bond_dims + [t.dims[i] for i in right]
    l_shape = IndexTuple(tuple(l_nat[i] for i in l_order), len(ld) + int(has_d))
    r_shape = IndexTuple(tuple(r_nat[i] for i in r_order), len(rd) + int(has_d))
    l_dist = dist or result_dist(ctx, l_shape, t.dist)
    r_dist = dist or result_dist(ctx, r_shape, t.dist)

    single = _single_rank(t, dist=l_dist, shape=l_shape) and tuple(r_dist.ranks(r_shape.n_dist)) == tuple(
        t.span_ranks)
    if single:
        if not t.hosted:
            return Tensor(ctx, l_shape, l_dist, None), Tensor(ctx, r_shape, r_dist, None), None
        mat = to_dense(t).local.reshape(t.dims).transpose(left + right).reshape(m, n)
        u, s, vh = svd_local(mat)
        s_full = s.copy()
        u, s, vh = _cut(u, s, vh, cutoff)
        u, s, vh = truncate_svd(u, s, vh, k)
        u, vh = _absorb(u, s, vh, absorb)
        larr = u.reshape(l_nat).transpose(l_order)
        rarr = vh.reshape(r_nat).transpose(r_order)
        return (Tensor(ctx, l_shape, l_dist, larr.reshape(-1)), Tensor(ctx, r_shape, r_dist, rarr.reshape(-1)),
                s_full)

    members = tuple(t.span_ranks)
    everyone = set(members) | set(l_dist.ranks(l_shape.n_dist)) | set(r_dist.ranks(r_shape.n_dist))
    if ctx.rank not in everyone:
        return Tensor(ctx, l_shape, l_dist, None), Tensor(ctx, r_shape, r_dist, None), None
    mat = tensor_to_matrix(t, left, right, members)
    u, s, vh = psvd(mat)
    s_full = None if s is None else s.copy()
    if ctx.rank in members:
        keep = _cut_mask(s, cutoff)
        s = np.where(keep, s, 0.0)
        u = u.scale_columns(keep.astype(float))
        vh = vh.scale_rows(keep.astype(float))
    u, s_k, vh = truncate_svd(u, s if s is not None else np.zeros(min(m, n)), vh, k)
    if ctx.rank in members:
        if absorb == "left":
            u = u.scale_columns(s_k)
        elif absorb == "right":
            vh = vh.scale_rows(s_k)
        else:
            r = np.sqrt(s_k)
            u, vh = u.scale_columns(r), vh.scale_rows(r)
    l_tensor = matrix_to_tensor(u, [t.dims[i] for i in left], bond_dims, l_order, l_shape.split, l_dist)
    r_tensor = matrix_to_tensor(vh, bond_dims, [t.dims[i] for i in right], r_order, r_shape.split, r_dist)
    return l_tensor, r_tensor, s_full


def _cut_mask(s: np.ndarray, cutoff: float) -> np.ndarray:
    if s.size == 0 or s[0] == 0:
        return np.zeros(s.shape, bool)
    return s > cutoff * s[0]


def _cut(u, s, vh, cutoff):
    keep = _cut_mask(s, cutoff)
    return u * keep, np.where(keep, s, 0.0), vh * keep[:, None]


def _absorb(u: np.ndarray, s: np.ndarray, vh: np.ndarray, absorb: str):
    if absorb == "left":
        return u * s, vh
    if absorb == "right":
        return u, s[:, None] * vh
    r = np.sqrt(s)
    return u * r, r[:, None] * vh


# -- networks ------------------------------------------------------------------------


@dataclass(frozen=True)
class Bond:
    """A pairing of index ``a[1]`` of tensor ``a[0]`` with index ``b[1]`` of tensor ``b[0]``."""

    a: tuple[Hashable, int]
    b: tuple[Hashable, int]
    dim: int

    def other(self, tid: Hashable) -> tuple[Hashable, int]:
        return self.b if self.a[0] == tid else self.a

    def end(self, tid: Hashable) -> int:
        return self.a[1] if self.a[0] == tid else self.b[1]


class TensorNetwork:
    """Tensors and bonds keyed by id; every rank keeps an identical copy.

    Open indices can carry labels (any hashable) so that the final tensor can
    be read back in a chosen index order with :meth:`result`.
    """

    def __init__(self, ctx: RankContext):
        self.ctx = ctx
        self.tensors: dict[Hashable, Tensor] = {}
        self.labels: dict[Hashable, list] = {}
        self.bonds: dict[int, Bond] = {}
        self._bond_ids = itertools.count()
        self._tensor_ids = itertools.count()

    # -- construction --------------------------------------------------------------

    def add_tensor(self, t: Tensor, tid: Hashable | None = None, labels: Sequence | None = None) -> Hashable:
        if tid is None:
            tid = next(self._tensor_ids)
            while tid in self.tensors:
                tid = next(self._tensor_ids)
        elif tid in self.tensors:
            raise InvalidArgument(f"tensor id {tid!r} already in use")
        labels = list(labels) if labels is not None else [(tid, i) for i in range(t.ndim)]
        if len(labels) != t.ndim:
            raise InvalidArgument(f"{len(labels)} labels for a rank-{t.ndim} tensor")
        self.tensors[tid] = t
        self.labels[tid] = labels
        return tid

    def add_bond(self, a: Hashable, ia: int, b: Hashable, ib: int) -> int:
        ta, tb = self._get(a), self._get(b)
        if a == b:
            raise InvalidArgument("a bond must join two different tensors")
        if not (0 <= ia < ta.ndim and 0 <= ib < tb.ndim):
            raise InvalidArgument(f"bond endpoint out of range: {a}:{ia}, {b}:{ib}")
        if ta.dims[ia] != tb.dims[ib]:
            raise InvalidArgument(f"bond joins dimensions {ta.dims[ia]} and {tb.dims[ib]}")
        if ta.shape.is_distributed(ia) != tb.shape.is_distributed(ib):
            raise InvalidArgument(f"bond {a}:{ia} - {b}:{ib} joins a distributed and a local index")
        for tid, idx in ((a, ia), (b, ib)):
            if self.bond_at(tid, idx) is not None:
                raise InvalidArgument(f"index {idx} of tensor {tid!r} already carries a bond")
        bid = next(self._bond_ids)
        self.bonds[bid] = Bond((a, ia), (b, ib), ta.dims[ia])
        return bid

    def _get(self, tid: Hashable) -> Tensor:
        if tid not in self.tensors:
            raise InvalidArgument(f"unknown or consumed tensor id {tid!r}")
        return self.tensors[tid]

    def bond_at(self, tid: Hashable, idx: int) -> int | None:
        for bid, bd in self.bonds.items():
            if bd.a == (tid, idx) or bd.b == (tid, idx):
                return bid
        return None

    def bonds_of(self, tid: Hashable) -> list[int]:
        return [bid for bid, bd in self.bonds.items() if tid in (bd.a[0], bd.b[0])]

    def bonds_between(self, a: Hashable, b: Hashable) -> list[int]:
        return [bid for bid, bd in self.bonds.items() if {bd.a[0], bd.b[0]} == {a, b}]

    def open_indices(self, tid: Hashable) -> list[int]:
        t = self._get(tid)
        return [i for i in range(t.ndim) if self.bond_at(tid, i) is None]

    # -- operations ----------------------------------------------------------------

    def contract(self, a: Hashable, b: Hashable, out: Hashable | None = None) -> Hashable:
        """Replace ``a`` and ``b`` by their contraction over all shared bonds."""
        if a == b:
            raise InvalidArgument("cannot contract a tensor with itself")
        ta, tb = self._get(a), self._get(b)
        shared = self.bonds_between(a, b)
        pairs = [(self.bonds[bid].end(a), self.bonds[bid].end(b)) for bid in shared]
        result = contract_tensors(ta, tb, pairs)
        ca, cb = {i for i, _ in pairs}, {j for _, j in pairs}
        a_open = [i for i in range(ta.ndim) if i not in ca]
        b_open = [j for j in range(tb.ndim) if j not in cb]
        typed = ([("a", i) for i in a_open if ta.shape.is_distributed(i)]
                 + [("b", j) for j in b_open if tb.shape.is_distributed(j)]
                 + [("a", i) for i in a_open if not ta.shape.is_distributed(i)]
                 + [("b", j) for j in b_open if not tb.shape.is_distributed(j)])
        new_pos = {(a if side == "a" else b, idx): pos for pos, (side, idx) in enumerate(typed)}
        labels = [self.labels[a if side == "a" else b][idx] for side, idx in typed]
        for bid in shared:
            del self.bonds[bid]
        out = a if out is None else out
        self._replace([a, b], {out: (result, labels)}, new_pos)
        return out

    def _replace(self, old: Sequence[Hashable], new: dict, remap: dict) -> None:
        """Swap tensors ``old`` for ``new`` and rewire bonds; ``remap`` maps (old id, idx) -> (new id, idx)."""
        for tid in old:
            del self.tensors[tid]
            del self.labels[tid]
        for tid in new:
            if tid in self.tensors:
                raise InvalidArgument(f"tensor id {tid!r} already in use")
        for tid, (t, labels) in new.items():
            self.tensors[tid] = t
            self.labels[tid] = labels
        (only,) = new if len(new) == 1 else (None,)
        for bid, bd in list(self.bonds.items()):
            ends = []
            for end in (bd.a, bd.b):
                if end[0] in old:
                    target = remap[end]
                    ends.append(target if isinstance(target, tuple) else (only, target))
                else:
                    ends.append(end)
            self.bonds[bid] = Bond(ends[0], ends[1], bd.dim)

    def decompose(self, tid: Hashable, left: Sequence[int], right: Sequence[int], chi: int,
                  absorb: str = "left", bond: str = "local", ids: tuple | None = None) -> tuple:
        """Split ``tid`` into two tensors joined by a new bond; returns their ids."""
        t = self._get(tid)
        left, right = list(left), list(right)
        l_t, r_t, _ = decompose_tensor(t, left, right, chi, absorb=absorb, bond=bond)
        lid, rid = ids or (tid, next(self._tensor_ids))
        while ids is None and rid in self.tensors:
            rid = next(self._tensor_ids)
        bond_label = ("bond", lid, rid)
        ld = [i for i in left if t.shape.is_distributed(i)]
        ll = [i for i in left if not t.shape.is_distributed(i)]
        rd = [i for i in right if t.shape.is_distributed(i)]
        rl = [i for i in right if not t.shape.is_distributed(i)]
        dist_bond = bond == "distributed"
        l_idx = ld + (["bond"] if dist_bond else []) + ll + ([] if dist_bond else ["bond"])
        r_idx = (["bond"] if dist_bond else []) + rd + ([] if dist_bond else ["bond"]) + rl
        remap = {}
        for pos, i in enumerate(l_idx):
            if i != "bond":
                remap[(tid, i)] = (lid, pos)
        for pos, i in enumerate(r_idx):
            if i != "bond":
                remap[(tid, i)] = (rid, pos)
        labs = self.labels[tid]
        l_labels = [bond_label if i == "bond" else labs[i] for i in l_idx]
        r_labels = [bond_label if i == "bond" else labs[i] for i in r_idx]
        self._replace([tid], {lid: (l_t, l_labels), rid: (r_t, r_labels)}, remap)
        self.add_bond(lid, l_idx.index("bond"), rid, r_idx.index("bond"))
        return lid, rid

    def truncate(self, bond_id: int, chi: int) -> None:
        """Resize a bond to ``chi`` by re-decomposing across it (zero padding if ``chi`` is larger)."""
        if bond_id not in self.bonds:
            raise InvalidArgument(f"unknown bond {bond_id}")
        if chi < 1:
            raise InvalidArgument(f"chi must be >= 1, got {chi}")
        bd = self.bonds[bond_id]
        if chi == bd.dim:
            return
        (a, ia), (b, ib) = bd.a, bd.b
        if len(self.bonds_between(a, b)) != 1:
            raise InvalidArgument(f"tensors {a!r} and {b!r} share more than one bond")
        ta, tb = self.tensors[a], self.tensors[b]
        distributed = ta.shape.is_distributed(ia)
        theta = contract_tensors(ta, tb, [(ia, ib)])
        a_open = [i for i in range(ta.ndim) if i != ia]
        b_open = [j for j in range(tb.ndim) if j != ib]
        typed = ([("a", i) for i in a_open if ta.shape.is_distributed(i)]
                 + [("b", j) for j in b_open if tb.shape.is_distributed(j)]
                 + [("a", i) for i in a_open if not ta.shape.is_distributed(i)]
                 + [("b", j) for j in b_open if not tb.shape.is_distributed(j)])
        left = [p for p, (side, _) in enumerate(typed) if side == "a"]
        right = [p for p, (side, _) in enumerate(typed) if side == "b"]
        l_t, r_t, _ = decompose_tensor(theta, left, right, chi, bond="distributed" if distributed else "local",
                                       pad=True)
        # restore the original index positions of both endpoints
        l_t = permute(l_t, _restore_order(ta, ia, distributed), ta.split, ta.dist)
        r_t = permute(r_t, _restore_order(tb, ib, distributed, bond_first=True), tb.split, tb.dist)
        self.tensors[a], self.tensors[b] = l_t, r_t
        self.bonds[bond_id] = Bond((a, ia), (b, ib), chi)

    def rebcast(self, tid: Hashable, dist: DistParams) -> None:
        self.tensors[tid] = rebcast(self._get(tid), dist)

    def insert_identity(self, tid: Hashable, idx: int, distributed: bool | None = None,
                        new_id: Hashable | None = None) -> Hashable:
        """Attach an identity tensor to open index ``idx``; its free index may change type."""
        t = self._get(tid)
        if self.bond_at(tid, idx) is not None:
            raise InvalidArgument(f"index {idx} of {tid!r} is not open")
        src_dist = t.shape.is_distributed(idx)
        out_dist = src_dist if distributed is None else bool(distributed)
        n_d = t.dims[idx] ** (int(src_dist) + int(out_dist))
        ident_dist = result_dist(self.ctx, IndexTuple((n_d,), 1), t.dist)
        ident = SpecialTensor.identity(self.ctx, [t.dims[idx]], [src_dist], [out_dist], ident_dist)
        in_pos, out_pos = ident.pairs[0]
        labels = [None, None]
        labels[out_pos] = self.labels[tid][idx]
        labels[in_pos] = ("identity-in", tid, idx)
        self.labels[tid][idx] = ("identity-in", tid, idx)
        nid = self.add_tensor(ident, new_id, labels)
        self.add_bond(tid, idx, nid, in_pos)
        return nid

    def contract_order(self, order: Sequence[tuple]) -> Hashable:
        """Apply a sequence of ``(a, b)`` or ``(a, b, out)`` contractions; returns the last result id."""
        last = None
        for step in order:
            if len(step) not in (2, 3):
                raise InvalidArgument(f"contraction step {step!r} must be (a, b) or (a, b, out)")
            for tid in step[:2]:
                if tid not in self.tensors:
                    raise InvalidArgument(f"contraction step {step!r} references consumed or unknown id {tid!r}")
            last = self.contract(*step)
        return last

    def result(self, tid: Hashable, labels: Sequence | None = None) -> np.ndarray | None:
        """Global array of ``tid`` with indices ordered by ``labels`` (collective over its span)."""
        t = self._get(tid)
        arr = t.to_global()
        if arr is None or labels is None:
            return arr
        own = self.labels[tid]
        try:
            perm = [own.index(lab) for lab in labels]
        except ValueError as exc:
            raise InvalidArgument(f"labels {list(labels)} do not match {own}") from exc
        return np.transpose(arr, perm)


def _restore_order(t: Tensor, idx: int, distributed: bool, bond_first: bool = False) -> list[int]:
    """Permutation taking a decomposition factor back to the index order of ``t``.

    The factor holds ``t``'s other indices in typed order with the bond index
    appended to (L) or prepended to (R) its type group.
    """
    others_d = [i for i in range(t.ndim) if i != idx and t.shape.is_distributed(i)]
    others_l = [i for i in range(t.ndim) if i != idx and not t.shape.is_distributed(i)]
    if bond_first:
        factor = ([idx] + others_d + others_l) if distributed else (others_d + [idx] + others_l)
    else:
        factor = (others_d + [idx] + others_l) if distributed else (others_d + others_l + [idx])
    return [factor.index(i) for i in range(t.ndim)]


def zeros_like(t: Tensor) -> Tensor:
    return Tensor(t.ctx, t.shape, t.dist, None if not t.hosted else np.zeros(t.shape.n_local, CDTYPE))
