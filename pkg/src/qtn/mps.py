"""Fixed-bond-dimension matrix product states with distributed virtual bonds.

Every site is stored as a tensor of shape ``(chi_d, chi_d; d, chi_l, chi_l)``
(indices ``a_d, b_d; p, a_l, b_l``): the virtual bond ``a`` of dimension
``chi = chi_d * chi_l`` is split as ``a = a_d * chi_l + a_l`` into a
distributed and a local part.  Bonds whose Schmidt rank is below ``chi`` are
zero padded; the two boundary bonds have effective dimension one.

Two execution kernels share one interface:

* ``chi_d == 1``: the whole chain lives on one rank and the numpy kernel keeps
  trimmed cores ``(D_left, d, D_right)`` with ``D <= chi``.  Padded site tensors
  are produced on demand by :meth:`Mps.site_tensor`.
* ``chi_d > 1``: sites are distributed :class:`~qtn.tensor.Tensor` objects
  over ``chi_d**2`` ranks and every step goes through
  :func:`~qtn.network.contract_tensors` and
  :func:`~qtn.network.decompose_tensor`.

Operations mutate the state in place and return it, so calls can be chained.
All of them are collective: every rank of the world calls them with the same
arguments.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStateError, InvalidArgument, PreconditionError, ResourceError
from .fileio import read_record, write_record
from .linalg import svd_local
from .network import DEFAULT_CUTOFF, contract_tensors, decompose_tensor
from .ops import permute, reshape
from .runtime import RankContext
from .tensor import CDTYPE, DistParams, Tensor, element

__all__ = [
    "Mps",
    "Mpo",
    "mps_bitstring",
    "mps_random",
    "mps_from_statevector",
    "canonicalize",
    "apply_raw_gate",
    "apply_mpo",
    "apply_circuit",
    "overlap",
    "norm2",
    "renormalise",
    "sample",
    "mps_to_statevector",
    "effective_bond_dims",
    "save_mps",
    "load_mps",
]

STATEVECTOR_LIMIT = 26
NORMALISED_TOL = 1e-8


@dataclass
class Mpo:
    """Operator on sites ``start .. start + len(tensors) - 1``.

    Each tensor has shape ``(w_left, out, in, w_right)``; the outer bonds have
    dimension one.
    """

    start: int
    tensors: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.tensors = [np.asarray(w, dtype=CDTYPE) for w in self.tensors]
        if not self.tensors:
            raise InvalidArgument("an MPO needs at least one site")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[3] != 1:
            raise InvalidArgument("MPO boundary bonds must have dimension 1")
        for w, nxt in zip(self.tensors, self.tensors[1:]):
            if w.shape[3] != nxt.shape[0]:
                raise InvalidArgument(f"MPO bond mismatch {w.shape} -> {nxt.shape}")

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def sites(self) -> range:
        return range(self.start, self.start + self.n_sites)

    @property
    def phys_dim(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        return [w.shape[3] for w in self.tensors[:-1]]

    def to_matrix(self) -> np.ndarray:
        """Dense operator on the MPO's support (first site most significant)."""
        acc = self.tensors[0][0]  # (out, in, w)
        d = self.phys_dim
        for w in self.tensors[1:]:
            acc = np.einsum("oiw,wpqv->opiqv", acc, w)
            o, p, i, q, v = acc.shape
            acc = acc.reshape(o * p, i * q, v)
        return acc[:, :, 0].reshape(d ** self.n_sites, d ** self.n_sites)

    @classmethod
    def identity(cls, start: int, n_sites: int, d: int = 2) -> Mpo:
        eye = np.eye(d, dtype=CDTYPE).reshape(1, d, d, 1)
        return cls(start, [eye] * n_sites)


class Mps:
    """Matrix product state of ``n_sites`` sites with maximum bond ``chi_d * chi_l``."""

    def __init__(self, ctx: RankContext, n_sites: int, d: int, chi_d: int, chi_l: int,
                 cores: list[np.ndarray] | None = None, sites: list[Tensor] | None = None,
                 centre: int | None = None):
        if n_sites < 1 or d < 1 or chi_d < 1 or chi_l < 1:
            raise InvalidArgument("n_sites, d, chi_d and chi_l must be positive")
        self.ctx = ctx
        self.n_sites, self.d = int(n_sites), int(d)
        self.chi_d, self.chi_l = int(chi_d), int(chi_l)
        self.centre = centre
        if self.chi_d * self.chi_d > ctx.world.size:
            raise ResourceError(f"chi_d={chi_d} needs {chi_d * chi_d} ranks, world has {ctx.world.size}",
                                required=chi_d * chi_d)
        self.cores = cores
        self.sites = sites
        if self.is_local and cores is None:
            raise InvalidArgument("local-kernel MPS needs cores")
        if not self.is_local and sites is None:
            raise InvalidArgument("distributed MPS needs site tensors")

    @property
    def chi(self) -> int:
        return self.chi_d * self.chi_l

    @property
    def is_local(self) -> bool:
        return self.chi_d == 1

    @property
    def dist(self) -> DistParams:
        return DistParams()

    @property
    def span(self) -> range:
        return range(self.chi_d * self.chi_d)

    def copy(self) -> Mps:
        return Mps(self.ctx, self.n_sites, self.d, self.chi_d, self.chi_l,
                   None if self.cores is None else list(self.cores),
                   None if self.sites is None else list(self.sites), self.centre)

    def site_tensor(self, i: int) -> Tensor:
        """Site ``i`` as a padded ``(chi_d, chi_d; d, chi_l, chi_l)`` tensor."""
        if not self.is_local:
            return self.sites[i]
        return Tensor.from_global(self.ctx, _pad_site(self.cores[i], self.chi_d, self.chi_l), 2, self.dist)

    def _cores_view(self) -> list[np.ndarray] | None:
        """Trimmed numpy cores on span ranks (gathered for the distributed kernel)."""
        if self.is_local:
            return self.cores
        arrays = [s.to_global() for s in self.sites]
        if arrays[0] is None:
            return None
        return _trim_chain([_unpad_site(a) for a in arrays])

    def __repr__(self) -> str:
        kernel = "local" if self.is_local else "distributed"
        return (f"Mps(n={self.n_sites}, d={self.d}, chi_d={self.chi_d}, chi_l={self.chi_l}, "
                f"centre={self.centre}, kernel={kernel})")


# -- padding helpers ------------------------------------------------------------------


def _pad_site(core: np.ndarray, chi_d: int, chi_l: int) -> np.ndarray:
    chi = chi_d * chi_l
    dl, d, dr = core.shape
    full = np.zeros((chi, d, chi), CDTYPE)
    full[:dl, :, :dr] = core
    return full.reshape(chi_d, chi_l, d, chi_d, chi_l).transpose(0, 3, 2, 1, 4)


def _unpad_site(site: np.ndarray) -> np.ndarray:
    chi_d, _, d, chi_l, _ = site.shape
    chi = chi_d * chi_l
    return site.transpose(0, 3, 2, 1, 4).reshape(chi, d, chi)


def _extent(mask: np.ndarray) -> int:
    nz = np.flatnonzero(mask)
    return int(nz[-1]) + 1 if nz.size else 1


def _trim_chain(cores: list[np.ndarray]) -> list[np.ndarray]:
    """Drop trailing all-zero bond slices (padding) consistently on both sides of each bond."""
    dims = [1]
    for left, right in zip(cores, cores[1:]):
        dims.append(max(_extent(np.any(left != 0, axis=(0, 1))), _extent(np.any(right != 0, axis=(1, 2)))))
    dims.append(1)
    return [c[: dims[i], :, : dims[i + 1]] for i, c in enumerate(cores)]


def _from_cores(ctx: RankContext, cores: list[np.ndarray], d: int, chi_d: int, chi_l: int,
                centre: int | None) -> Mps:
    for c in cores:
        if c.shape[0] > chi_d * chi_l or c.shape[2] > chi_d * chi_l:
            raise InvalidArgument(f"core {c.shape} exceeds chi={chi_d * chi_l}")
    if chi_d == 1:
        return Mps(ctx, len(cores), d, 1, chi_l, cores=[np.asarray(c, CDTYPE) for c in cores], centre=centre)
    sites = [Tensor.from_global(ctx, _pad_site(c, chi_d, chi_l), 2, DistParams()) for c in cores]
    return Mps(ctx, len(cores), d, chi_d, chi_l, sites=sites, centre=centre)


# -- construction ---------------------------------------------------------------------


def mps_bitstring(ctx: RankContext, bits: Sequence[int], chi_d: int = 1, chi_l: int = 1, d: int = 2) -> Mps:
    """Product state with amplitude one on ``bits``."""
    bits = [int(b) for b in bits]
    if not bits:
        raise InvalidArgument("bitstring must be non-empty")
    if any(not 0 <= b < d for b in bits):
        raise InvalidArgument(f"bit values must lie in 0..{d - 1}")
    cores = []
    for b in bits:
        c = np.zeros((1, d, 1), CDTYPE)
        c[0, b, 0] = 1.0
        cores.append(c)
    return _from_cores(ctx, cores, d, chi_d, chi_l, centre=0)


def random_bond_dims(n_sites: int, chi_eff: int, d: int = 2) -> list[int]:
    """Bond dimensions ``min(chi_eff, d**i, d**(n-i))`` for bonds ``0..n``."""
    return [min(chi_eff, d ** min(i, n_sites - i)) for i in range(n_sites + 1)]


def mps_random(ctx: RankContext, n_sites: int, chi_eff: int, chi_d: int = 1, chi_l: int = 1,
               seed: int = 0, d: int = 2) -> Mps:
    """Random normalised MPS with effective bond dimension ``chi_eff`` (zero padded to chi).

    The cores depend only on ``(n_sites, chi_eff, seed, d)``, not on how chi
    is split, so the same seed gives the same state for every layout.
    """
    if chi_eff < 1 or chi_eff > chi_d * chi_l:
        raise InvalidArgument(f"chi_eff={chi_eff} must lie in 1..{chi_d * chi_l}")
    rng = np.random.default_rng(seed)
    dims = random_bond_dims(n_sites, chi_eff, d)
    cores = []
    for i in range(n_sites):
        shape = (dims[i], d, dims[i + 1])
        cores.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    m = _from_cores(ctx, cores, d, chi_d, chi_l, centre=None)
    canonicalize(m, 0)
    return renormalise(m, mode="centre")


def mps_from_statevector(ctx: RankContext, psi: np.ndarray, chi_d: int = 1, chi_l: int = 1, d: int = 2,
                         n_sites: int | None = None) -> Mps:
    """Exact (up to chi) MPS of a dense state vector by successive SVDs."""
    psi = np.asarray(psi, dtype=CDTYPE).reshape(-1)
    n = n_sites or int(round(math.log(psi.size, d)))
    if d ** n != psi.size:
        raise InvalidArgument(f"state of length {psi.size} is not {d}**n")
    chi = chi_d * chi_l
    cores = []
    rest = psi.reshape(1, -1)
    for _ in range(n - 1):
        dl = rest.shape[0]
        u, s, vh = svd_local(rest.reshape(dl * d, -1))
        k = max(1, min(chi, int(np.count_nonzero(s > DEFAULT_CUTOFF * max(s[0], 1e-300)))))
        cores.append(u[:, :k].reshape(dl, d, k))
        rest = s[:k, None] * vh[:k]
    cores.append(rest.reshape(rest.shape[0], d, 1))
    return _from_cores(ctx, cores, d, chi_d, chi_l, centre=n - 1)


# -- numpy kernel ---------------------------------------------------------------------


def _svd_trunc(mat: np.ndarray, chi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u, s, vh = svd_local(mat)
    nz = int(np.count_nonzero(s > DEFAULT_CUTOFF * s[0])) if s.size and s[0] > 0 else 0
    k = max(1, min(chi, nz))
    u, s, vh = u[:, :k], s[:k].copy(), vh[:k]
    if nz == 0:
        s[:] = 0.0
    return u, s, vh


def _l_left_orth(cores: list[np.ndarray], i: int) -> None:
    a = cores[i]
    dl, d, dr = a.shape
    q, r = np.linalg.qr(a.reshape(dl * d, dr))
    cores[i] = q.reshape(dl, d, q.shape[1])
    cores[i + 1] = np.tensordot(r, cores[i + 1], axes=(1, 0))


def _l_right_orth(cores: list[np.ndarray], i: int) -> None:
    a = cores[i]
    dl, d, dr = a.shape
    q, r = np.linalg.qr(a.reshape(dl, d * dr).T)
    cores[i] = q.T.reshape(q.shape[1], d, dr)
    cores[i - 1] = np.tensordot(cores[i - 1], r.T, axes=(2, 0))


def _l_svd_right(cores: list[np.ndarray], i: int, chi: int) -> None:
    """Truncating right-orthonormalisation of site ``i``; weights move to ``i - 1``."""
    a = cores[i]
    dl, d, dr = a.shape
    u, s, vh = _svd_trunc(a.reshape(dl, d * dr), chi)
    cores[i] = vh.reshape(vh.shape[0], d, dr)
    cores[i - 1] = np.tensordot(cores[i - 1], u * s, axes=(2, 0))


# -- distributed kernel ---------------------------------------------------------------

# site index positions: (a_d, b_d; p, a_l, b_l)
_SWAP_P_AND_BOND = (0, 1, 3, 2, 4)


def _d_left_orth(m: Mps, i: int, chi_l: int | None = None) -> None:
    site = m.sites[i]
    bl = chi_l or site.dims[4]
    left, right, _ = decompose_tensor(site, [0, 2, 3], [1, 4], m.chi_d * bl, absorb="right",
                                      bond=(m.chi_d, bl))
    m.sites[i] = left
    nxt = contract_tensors(right, m.sites[i + 1], [(1, 0), (3, 3)])
    m.sites[i + 1] = permute(nxt, _SWAP_P_AND_BOND)


def _d_right_orth(m: Mps, i: int, chi_l: int | None = None) -> None:
    site = m.sites[i]
    bl = chi_l or site.dims[3]
    left, right, _ = decompose_tensor(site, [0, 3], [1, 2, 4], m.chi_d * bl, absorb="left",
                                      bond=(m.chi_d, bl))
    m.sites[i] = permute(right, _SWAP_P_AND_BOND)
    m.sites[i - 1] = contract_tensors(m.sites[i - 1], left, [(1, 0), (4, 2)])


def _broadcast_operator(m: Mps, arr: np.ndarray) -> Tensor:
    """A small local operator replicated on every rank of the MPS span."""
    return Tensor.from_global(m.ctx, arr, 0, DistParams(stretch=len(m.span)))


# -- canonical form -------------------------------------------------------------------


def canonicalize(m: Mps, centre: int) -> Mps:
    """Mixed canonical form with orthogonality centre ``centre``."""
    if not 0 <= centre < m.n_sites:
        raise InvalidArgument(f"centre {centre} outside 0..{m.n_sites - 1}")
    if m.centre is None:
        lo, hi = 0, m.n_sites - 1
    else:
        lo = hi = m.centre
    left_step = _l_left_orth if m.is_local else (lambda mm, i: _d_left_orth(mm, i, m.chi_l))
    right_step = _l_right_orth if m.is_local else (lambda mm, i: _d_right_orth(mm, i, m.chi_l))
    target = m.cores if m.is_local else m
    for i in range(lo, centre):
        left_step(target, i)
    for i in range(hi, centre, -1):
        right_step(target, i)
    m.centre = centre
    return m


# -- gates and MPOs -------------------------------------------------------------------


def _check_gate(m: Mps, sites: Sequence[int], gate: np.ndarray) -> tuple[list[int], np.ndarray]:
    sites = [int(s) for s in sites]
    if not sites or sites != sorted(set(sites)):
        raise InvalidArgument(f"target sites {sites} must be sorted and distinct")
    if sites[0] < 0 or sites[-1] >= m.n_sites:
        raise InvalidArgument(f"target sites {sites} outside 0..{m.n_sites - 1}")
    gate = np.asarray(gate, dtype=CDTYPE)
    dim = m.d ** len(sites)
    if gate.shape != (dim, dim):
        raise InvalidArgument(f"gate of shape {gate.shape} does not act on {len(sites)} sites of dimension {m.d}")
    return sites, gate


def _is_unitary(g: np.ndarray) -> bool:
    return np.allclose(g.conj().T @ g, np.eye(g.shape[0]), atol=1e-12)


def expand_gate(gate: np.ndarray, targets: Sequence[int], span: Sequence[int], d: int = 2) -> np.ndarray:
    """``gate`` on ``targets`` embedded in the identity on the sites ``span`` (first most significant)."""
    span = list(span)
    k, n = len(targets), len(span)
    g = np.asarray(gate, CDTYPE).reshape((d,) * (2 * k))
    full = np.eye(d ** n, dtype=CDTYPE).reshape((d,) * (2 * n))
    pos = [span.index(t) for t in targets]
    # apply gate to the output legs of the identity
    res = np.tensordot(g, full, axes=(list(range(k, 2 * k)), pos))
    res = np.moveaxis(res, list(range(k)), pos)
    return res.reshape(d ** n, d ** n)


def apply_raw_gate(m: Mps, sites: Sequence[int], gate: np.ndarray) -> Mps:
    """Apply a dense gate to ``sites`` by contracting their range and splitting it again.

    Single-site unitaries are applied in place without moving the centre.
    Otherwise the centre ends at ``sites[0]`` and each split keeps at most chi
    singular values.
    """
    sites, gate = _check_gate(m, sites, gate)
    if len(sites) == 1 and _is_unitary(gate):
        i = sites[0]
        if m.is_local:
            m.cores[i] = np.einsum("qp,apb->aqb", gate, m.cores[i])
        else:
            g = _broadcast_operator(m, gate)
            res = contract_tensors(m.sites[i], g, [(2, 1)])  # (a_d, b_d; a_l, b_l, out)
            m.sites[i] = permute(res, (0, 1, 4, 2, 3))
        return m
    first, last = sites[0], sites[-1]
    canonicalize(m, first)
    if m.is_local:
        _l_apply_range(m, sites, gate)
    else:
        _d_apply_range(m, sites, gate)
    m.centre = first
    return m


def _l_apply_range(m: Mps, sites: list[int], gate: np.ndarray) -> None:
    first, last = sites[0], sites[-1]
    d, k = m.d, len(sites)
    theta = m.cores[first]
    for j in range(first + 1, last + 1):
        theta = np.tensordot(theta, m.cores[j], axes=(theta.ndim - 1, 0))
    pos = [s - first + 1 for s in sites]
    g = gate.reshape((d,) * (2 * k))
    theta = np.tensordot(g, theta, axes=(list(range(k, 2 * k)), pos))
    theta = np.moveaxis(theta, list(range(k)), pos)
    dl = theta.shape[0]
    for j in range(last, first, -1):
        dr = theta.shape[-1]
        n_left = j - first
        mat = theta.reshape(-1, d * dr)
        u, s, vh = _svd_trunc(mat, m.chi)
        m.cores[j] = vh.reshape(vh.shape[0], d, dr)
        theta = (u * s).reshape((dl,) + (d,) * n_left + (vh.shape[0],))
    m.cores[first] = theta


def _d_apply_range(m: Mps, sites: list[int], gate: np.ndarray) -> None:
    first, last = sites[0], sites[-1]
    span = list(range(first, last + 1))
    n_range = len(span)
    theta = m.sites[first]
    names = ["a_d", "b_d", ("p", first), "a_l", "b_l"]
    for j in span[1:]:
        theta = contract_tensors(theta, m.sites[j], [(1, 0), (theta.ndim - 1, 3)])
        names = ["a_d", "b_d"] + names[2:-1] + [("p", j), "b_l"]
    full = expand_gate(gate, sites, span, m.d).reshape((m.d,) * (2 * n_range))
    g = _broadcast_operator(m, full)
    pairs = [(names.index(("p", j)), n_range + idx) for idx, j in enumerate(span)]
    theta = contract_tensors(theta, g, pairs)
    names = ["a_d", "b_d", "a_l", "b_l"] + [("p", j) for j in span]
    for j in reversed(span[1:]):
        right = [names.index("b_d"), names.index(("p", j)), names.index("b_l")]
        left = [i for i in range(len(names)) if i not in right]
        l_t, r_t, _ = decompose_tensor(theta, left, right, m.chi, absorb="left", bond=(m.chi_d, m.chi_l))
        m.sites[j] = permute(r_t, _SWAP_P_AND_BOND)
        left_names = [names[i] for i in left]
        ld = [x for x in left_names if x == "a_d"]
        ll = [x for x in left_names if x != "a_d"]
        names = ld + ["b_d"] + ll + ["b_l"]
        theta = l_t
    # theta is (a_d, b_d; a_l, p_first, b_l)
    m.sites[first] = permute(theta, _SWAP_P_AND_BOND)


def apply_mpo(m: Mps, o: Mpo) -> Mps:
    """Apply an MPO and compress back to chi.

    The centre is moved to the MPO's first site, the MPO is contracted site by
    site, a QR sweep left-orthonormalises the enlarged range and a truncating
    SVD sweep from the right brings every bond back to at most chi.  The
    centre ends at the first MPO site.
    """
    if o.phys_dim != m.d:
        raise InvalidArgument(f"MPO physical dimension {o.phys_dim} does not match {m.d}")
    if o.start < 0 or o.start + o.n_sites > m.n_sites:
        raise InvalidArgument(f"MPO sites {list(o.sites)} outside 0..{m.n_sites - 1}")
    s, last = o.start, o.start + o.n_sites - 1
    canonicalize(m, s)
    if m.is_local:
        cores = m.cores
        for j, w in zip(o.sites, o.tensors):
            b = np.einsum("apb,wqpv->awqbv", cores[j], w)
            a, wl, q, bb, wr = b.shape
            cores[j] = b.reshape(a * wl, q, bb * wr)
        for j in range(s, last):
            _l_left_orth(cores, j)
        for j in range(last, s, -1):
            _l_svd_right(cores, j, m.chi)
    else:
        for j, w in zip(o.sites, o.tensors):
            res = contract_tensors(m.sites[j], _broadcast_operator(m, w), [(2, 2)])
            # (a_d, b_d; a_l, b_l, wl, out, wr) -> (a_d, b_d; out, a_l, wl, b_l, wr)
            res = permute(res, (0, 1, 5, 2, 4, 3, 6))
            cd, _, q, al, wl, bl, wr = res.dims
            m.sites[j] = reshape(res, (cd, cd, q, al * wl, bl * wr), 2)
        for j in range(s, last):
            _d_left_orth(m, j)
        for j in range(last, s, -1):
            _d_right_orth(m, j, m.chi_l)
    m.centre = s
    return m


def apply_circuit(m: Mps, ops: Sequence) -> Mps:
    """Run a sequence of circuit operations (objects with ``kind`` ``"gate"`` or ``"mpo"``)."""
    for op in ops:
        if op.kind == "gate":
            apply_raw_gate(m, op.sites, op.matrix)
        elif op.kind == "mpo":
            apply_mpo(m, op.mpo)
        else:
            raise InvalidArgument(f"unknown operation kind {op.kind!r}")
    return m


# -- scalars --------------------------------------------------------------------------


def overlap(a: Mps, b: Mps) -> complex:
    """``<b|a>`` by left-to-right transfer matrices (``b`` is conjugated)."""
    if a.n_sites != b.n_sites or a.d != b.d:
        raise InvalidArgument("overlap needs states with equal site count and physical dimension")
    if a.is_local and b.is_local:
        env = np.ones((1, 1), CDTYPE)
        for ka, kb in zip(a.cores, b.cores):
            tmp = np.tensordot(env, ka, axes=(1, 0))  # (bra, p, ket')
            env = np.tensordot(kb.conj(), tmp, axes=([0, 1], [0, 1]))
        return complex(env[0, 0])
    if (a.chi_d, a.chi_l) != (b.chi_d, b.chi_l):
        raise InvalidArgument("distributed overlap needs equal (chi_d, chi_l)")
    env0 = np.zeros((a.chi_d, a.chi_d, a.chi_l, a.chi_l), CDTYPE)
    env0[0, 0, 0, 0] = 1.0
    env = Tensor.from_global(a.ctx, env0, 2, DistParams())
    for i in range(a.n_sites):
        bra = b.site_tensor(i).conj()
        tmp = contract_tensors(env, bra, [(0, 0), (2, 3)])  # (y_d, bb_d; y_l, p, bb_l)
        env = contract_tensors(tmp, a.site_tensor(i), [(0, 0), (2, 3), (3, 2)])
    if a.ctx.rank not in env.span_ranks:
        return None
    return element(env, (0, 0, 0, 0))


def norm2(m: Mps) -> float:
    """Squared norm ``<m|m>``."""
    if m.is_local and m.centre is not None:
        return float(np.vdot(m.cores[m.centre], m.cores[m.centre]).real)
    value = overlap(m, m)
    return None if value is None else float(value.real)


def renormalise(m: Mps, mode: str = "uniform") -> Mps:
    """Scale the state to unit norm.

    ``"uniform"`` divides every site by the same factor ``norm**(1/n)``, which
    leaves the state unnormalised-canonical, so the centre is forgotten.
    ``"centre"`` divides only the canonical centre and keeps the gauge.
    """
    if mode not in ("uniform", "centre"):
        raise InvalidArgument(f"unknown renormalisation mode {mode!r}")
    if mode == "centre" and m.centre is None:
        canonicalize(m, 0)
    n2 = norm2(m)
    if n2 is not None and n2 <= 1e-300:
        raise DegenerateStateError("cannot renormalise a state with zero norm")
    if not m.is_local:
        n2 = m.ctx.world_group.bcast(n2, root=0)
    if mode == "uniform":
        f = math.sqrt(n2) ** (1.0 / m.n_sites)
        targets = range(m.n_sites)
        m.centre = None
    else:
        f = math.sqrt(n2)
        targets = [m.centre]
    for i in targets:
        if m.is_local:
            m.cores[i] = m.cores[i] / f
        else:
            m.sites[i] = m.sites[i].scale(1.0 / f)
    return m


def sample(m: Mps, sites: Sequence[int], rng: np.random.Generator) -> list[int] | None:
    """Draw one outcome for ``sites`` from the Born distribution.

    Sites are measured left to right from site 0 up to ``max(sites)`` by
    conditional sampling; the requested subset is read off that draw.  Every
    rank must pass an identically seeded generator.  Ranks outside the MPS
    span return ``None`` in the distributed kernel.
    """
    sites = [int(s) for s in sites]
    if not sites or min(sites) < 0 or max(sites) >= m.n_sites:
        raise InvalidArgument(f"sample sites {sites} outside 0..{m.n_sites - 1}")
    canonicalize(m, 0)
    n2 = norm2(m)
    if not m.is_local:
        n2 = m.ctx.world_group.bcast(n2, root=0)
    if abs(n2 - 1.0) > NORMALISED_TOL:
        raise PreconditionError(f"sampling needs a normalised state, norm2={n2:.6g}")
    drawn = []
    if m.is_local:
        v = np.ones(1, CDTYPE)
        for j in range(max(sites) + 1):
            t = np.tensordot(v, m.cores[j], axes=(0, 0))  # (p, b)
            x, v = _draw(t, rng)
            drawn.append(x)
    else:
        if m.ctx.rank not in m.span:
            for _ in range(max(sites) + 1):
                rng.random()
            return None
        v0 = np.zeros((m.chi_d, m.chi_l), CDTYPE)
        v0[0, 0] = 1.0
        span_group = m.ctx.group(list(m.span))
        v = Tensor.from_global(m.ctx, v0, 1, DistParams())
        for j in range(max(sites) + 1):
            t = contract_tensors(v, m.sites[j], [(0, 0), (1, 3)])  # (b_d; p, b_l)
            g = span_group.bcast(t.to_global(), root=0)
            x, _ = _draw(np.moveaxis(g, 1, 0).reshape(m.d, -1), rng)
            drawn.append(x)
            p = np.vdot(g[:, x, :], g[:, x, :]).real
            v = Tensor.from_global(m.ctx, g[:, x, :] / math.sqrt(p), 1, DistParams())
    return [drawn[s] for s in sites]


def _draw(t: np.ndarray, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Pick a row of ``t`` with probability proportional to its squared norm."""
    probs = np.einsum("pb,pb->p", t.conj(), t).real
    total = probs.sum()
    u = rng.random() * total
    x = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    x = min(x, len(probs) - 1)
    while probs[x] <= 0 and x > 0:
        x -= 1
    return x, t[x] / math.sqrt(probs[x])


def mps_to_statevector(m: Mps) -> np.ndarray | None:
    """Full amplitude vector (first site most significant); ``None`` off the span."""
    if m.n_sites > STATEVECTOR_LIMIT:
        raise ResourceError(f"statevector of {m.n_sites} sites exceeds the {STATEVECTOR_LIMIT}-site limit")
    cores = m._cores_view()
    if cores is None:
        return None
    psi = cores[0][0]  # (p, b)
    for c in cores[1:]:
        psi = np.tensordot(psi, c, axes=(psi.ndim - 1, 0))
        psi = psi.reshape(-1, c.shape[2])
    return np.ascontiguousarray(psi[:, 0])


def effective_bond_dims(m: Mps, tol: float = 1e-12) -> list[int] | None:
    """Number of singular values above ``tol * norm`` on each of the ``n - 1`` inner bonds."""
    work = m.copy()
    canonicalize(work, 0)
    counts = []
    if work.is_local:
        cores = work.cores
        scale = math.sqrt(max(norm2(work), 0.0))
        for i in range(work.n_sites - 1):
            dl, d, dr = cores[i].shape
            u, s, vh = svd_local(cores[i].reshape(dl * d, dr))
            counts.append(int(np.count_nonzero(s > tol * scale)))
            cores[i] = u.reshape(dl, d, -1)
            cores[i + 1] = np.tensordot(s[:, None] * vh, cores[i + 1], axes=(1, 0))
        return counts
    scale = None
    for i in range(work.n_sites - 1):
        left, right, s = decompose_tensor(work.sites[i], [0, 2, 3], [1, 4], work.chi, absorb="right",
                                          bond=(work.chi_d, work.chi_l))
        if s is not None:
            if scale is None:
                scale = math.sqrt(float(np.sum(s**2)))
            counts.append(int(np.count_nonzero(s > tol * scale)))
        work.sites[i] = left
        nxt = contract_tensors(right, work.sites[i + 1], [(1, 0), (3, 3)])
        work.sites[i + 1] = permute(nxt, _SWAP_P_AND_BOND)
    return counts if m.ctx.rank in m.span else None


# -- checkpoints ----------------------------------------------------------------------


def save_mps(m: Mps, path) -> None:
    """Write a checkpoint: a JSON header line followed by one tensor record per site."""
    arrays = [np.asarray(_pad_site(c, m.chi_d, m.chi_l)) for c in m.cores] if m.is_local else [
        s.to_global() for s in m.sites]
    if m.ctx.rank != 0:
        return
    header = {"format": "qtn-mps", "version": 1, "n_sites": m.n_sites, "d": m.d, "chi_d": m.chi_d,
              "chi_l": m.chi_l, "centre": m.centre}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        for i, arr in enumerate(arrays):
            write_record(fh, arr, split=2, meta={"site": i})


def load_mps(ctx: RankContext, path) -> Mps:
    """Read a checkpoint written by :func:`save_mps`."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "qtn-mps":
            raise InvalidArgument(f"{path} is not an MPS checkpoint")
        arrays = [read_record(fh)[0] for _ in range(header["n_sites"])]
    cores = _trim_chain([_unpad_site(a) for a in arrays])
    return _from_cores(ctx, cores, header["d"], header["chi_d"], header["chi_l"], header["centre"])
