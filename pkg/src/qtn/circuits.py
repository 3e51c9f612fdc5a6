"""Gates, MPO builders and the QFT / random-circuit programs.

Qubit 0 is the most significant bit of a state index and sites are numbered
like qubits.  On a ``rows x cols`` grid, qubit ``(r, c)`` is site
``r * cols + c``.

Builders here are pure: they return gate lists, :class:`~qtn.mps.Mpo`
objects or :class:`CircuitOp` sequences.  Only :func:`build_qft_statevector`
and :func:`build_qft_variant` touch a rank context, because they create
network tensors.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ResourceError
from .mps import Mpo
from .network import TensorNetwork
from .runtime import RankContext
from .tensor import CDTYPE, DistParams, Tensor

__all__ = [
    "Gate",
    "CircuitOp",
    "CircuitPlan",
    "gate_matrix",
    "build_qft_mpo_layer",
    "build_fsim_mpo",
    "build_swap_mpo",
    "entangling_pairs",
    "layer_patterns",
    "rcs_single_qubit_choices",
    "qft_gate_list",
    "rcs_gate_list",
    "qft_mps_ops",
    "build_rcs",
    "build_qft_statevector",
    "build_qft_mpo_grouped",
    "build_qft_variant",
    "parse_plan",
]

SQ2 = 1.0 / math.sqrt(2.0)
PATTERN_SEQUENCE = "ABCDCDAB"
RCS_GATES = ("X12", "Y12", "W12")


@dataclass(frozen=True)
class Gate:
    name: str
    matrix: np.ndarray

    @property
    def arity(self) -> int:
        return int(round(math.log2(self.matrix.shape[0])))


def _phase_k(k: int) -> np.ndarray:
    return np.diag([1.0, np.exp(2j * np.pi / 2**k)]).astype(CDTYPE)


def gate_matrix(name: str, *params) -> Gate:
    """Matrix of a named gate.

    Names: ``H``, ``I``, ``CZ`` (angle), ``X12``, ``Y12``, ``W12`` (square
    roots of X, Y and W = (X + Y)/sqrt(2)), ``FSIM``, ``SWAP``, ``PI0``,
    ``PI1``, ``P`` (integer k, phase ``2 pi / 2**k``), ``S-`` (``|0><1|``)
    and ``S+`` (``|1><0|``).
    """
    key = name.upper()
    if key == "H":
        m = SQ2 * np.array([[1, 1], [1, -1]])
    elif key == "I":
        m = np.eye(2)
    elif key == "CZ":
        if len(params) != 1:
            raise InvalidArgument("CZ needs one angle")
        m = np.diag([1, 1, 1, np.exp(1j * float(params[0]))])
    elif key == "X12":
        m = SQ2 * np.array([[1, -1j], [-1j, 1]])
    elif key == "Y12":
        m = SQ2 * np.array([[1, -1], [1, 1]])
    elif key == "W12":
        w = np.exp(1j * np.pi / 4)
        m = SQ2 * np.array([[1, -w], [np.conj(w), 1]])
    elif key == "FSIM":
        m = np.zeros((4, 4), complex)
        m[0, 0] = 1
        m[1, 2] = m[2, 1] = -1j
        m[3, 3] = np.exp(-1j * np.pi / 6)
    elif key == "SWAP":
        m = np.eye(4)[[0, 2, 1, 3]]
    elif key == "PI0":
        m = np.diag([1, 0])
    elif key == "PI1":
        m = np.diag([0, 1])
    elif key == "P":
        if len(params) != 1:
            raise InvalidArgument("P needs an integer k")
        m = _phase_k(int(params[0]))
    elif key == "S-":
        m = np.array([[0, 1], [0, 0]])
    elif key == "S+":
        m = np.array([[0, 0], [1, 0]])
    else:
        raise InvalidArgument(f"unknown gate {name!r}")
    return Gate(key, np.asarray(m, dtype=CDTYPE))


def _g(name: str, *params) -> np.ndarray:
    return gate_matrix(name, *params).matrix


# -- MPOs -----------------------------------------------------------------------------


def _chain(start: int, first: list[np.ndarray], middles: list[list[list[np.ndarray | None]]],
           last: list[np.ndarray]) -> Mpo:
    """MPO from a boundary row, operator-valued middle matrices and a boundary column."""
    d = first[0].shape[0]
    tensors = [np.stack(first, axis=-1)[None]]  # (1, out, in, w)
    for block in middles:
        wl, wr = len(block), len(block[0])
        w = np.zeros((wl, d, d, wr), CDTYPE)
        for a in range(wl):
            for b in range(wr):
                if block[a][b] is not None:
                    w[a, :, :, b] = block[a][b]
        tensors.append(w)
    tensors.append(np.stack(last, axis=0)[..., None])  # (w, out, in, 1)
    return Mpo(start, tensors)


def build_fsim_mpo(k: int = 0, start: int = 0) -> Mpo:
    """fSim between sites ``start`` and ``start + k + 1`` with identities in between (bond 4)."""
    if k < 0:
        raise InvalidArgument("interaction length k must be non-negative")
    p0, p1, sm, sp = _g("PI0"), _g("PI1"), _g("S-"), _g("S+")
    eye = np.eye(2, dtype=CDTYPE)
    first = [p0, -1j * sm, -1j * sp, np.exp(-1j * np.pi / 6) * p1]
    last = [p0, sp, sm, p1]
    middle = [[eye if a == b else None for b in range(4)] for a in range(4)]
    return _chain(start, first, [middle] * k, last)


def build_swap_mpo(k: int = 0, start: int = 0) -> Mpo:
    """SWAP between sites ``start`` and ``start + k + 1`` (bond 4)."""
    e = [[np.outer(np.eye(2)[a], np.eye(2)[b]).astype(CDTYPE) for b in range(2)] for a in range(2)]
    first = [e[0][0], e[0][1], e[1][0], e[1][1]]
    last = [e[0][0], e[1][0], e[0][1], e[1][1]]
    eye = np.eye(2, dtype=CDTYPE)
    middle = [[eye if a == b else None for b in range(4)] for a in range(4)]
    return _chain(start, first, [middle] * k, last)


def build_qft_mpo_layer(control: int, n: int, absorb_hadamard: bool = True) -> Mpo:
    """Controlled phases from ``control`` to every later qubit as one bond-2 MPO.

    Site ``control + m`` carries ``P_{m+1}`` under the control's ``|1>``
    projector.  With ``absorb_hadamard`` the control's Hadamard is folded into
    the first site, so the MPO alone performs the whole QFT step for that
    qubit.
    """
    if not 0 <= control < n - 1:
        raise InvalidArgument(f"control must lie in 0..{n - 2}, got {control}")
    p0, p1 = _g("PI0"), _g("PI1")
    if absorb_hadamard:
        h = _g("H")
        p0, p1 = p0 @ h, p1 @ h
    eye = np.eye(2, dtype=CDTYPE)
    length = n - control
    middles = [[[eye, None], [None, _phase_k(m + 1)]] for m in range(1, length - 1)]
    last = [eye, _phase_k(length)]
    return _chain(control, [p0, p1], middles, last)


def _batch(mpos: Sequence[Mpo], n_sites: int) -> Mpo:
    """Disjoint MPOs merged into one MPO over ``min(start)..max(end)`` (identity elsewhere)."""
    mpos = sorted(mpos, key=lambda o: o.start)
    for a, b in zip(mpos, mpos[1:]):
        if a.start + a.n_sites > b.start:
            raise InvalidArgument("batched MPOs must not overlap")
    start, end = mpos[0].start, mpos[-1].start + mpos[-1].n_sites
    by_site = {}
    for o in mpos:
        for j, w in zip(o.sites, o.tensors):
            by_site[j] = w
    eye = np.eye(2, dtype=CDTYPE).reshape(1, 2, 2, 1)
    return Mpo(start, [by_site.get(j, eye) for j in range(start, end)])


# -- layouts and random choices ------------------------------------------------------


def entangling_pairs(pattern: str, rows: int, cols: int) -> list[tuple[int, int]]:
    """Qubit pairs of an entangling pattern on a row-major ``rows x cols`` grid.

    A/B couple horizontal neighbours ``(r, c)-(r, c+1)`` with ``c + r`` even /
    odd; C/D couple vertical neighbours ``(r, c)-(r+1, c)`` with ``r + c``
    even / odd.
    """
    if rows < 1 or cols < 1:
        raise InvalidArgument("grid dimensions must be positive")
    pattern = pattern.upper()
    if pattern not in "ABCD" or len(pattern) != 1:
        raise InvalidArgument(f"unknown pattern {pattern!r}")
    parity = 0 if pattern in "AC" else 1
    pairs = []
    if pattern in "AB":
        for r in range(rows):
            for c in range(cols - 1):
                if (c + r) % 2 == parity:
                    pairs.append((r * cols + c, r * cols + c + 1))
    else:
        for r in range(rows - 1):
            for c in range(cols):
                if (r + c) % 2 == parity:
                    pairs.append((r * cols + c, (r + 1) * cols + c))
    return pairs


def layer_patterns(depth: int) -> list[str]:
    return [PATTERN_SEQUENCE[layer % len(PATTERN_SEQUENCE)] for layer in range(depth)]


def rcs_single_qubit_choices(n_qubits: int, depth: int, seed: int, no_repeat: bool = True) -> list[list[str]]:
    """Gate names per layer and qubit, drawn from a generator keyed by ``(seed, layer, qubit)``."""
    choices: list[list[str]] = []
    for layer in range(depth):
        row = []
        for q in range(n_qubits):
            rng = np.random.default_rng([seed, layer, q])
            options = list(RCS_GATES)
            if no_repeat and layer > 0:
                options.remove(choices[-1][q])
            row.append(options[int(rng.integers(len(options)))])
        choices.append(row)
    return choices


# -- programs -------------------------------------------------------------------------


@dataclass
class CircuitOp:
    """One step of an MPS program: a dense gate on ``sites`` or an MPO."""

    kind: str
    sites: tuple[int, ...] = ()
    matrix: np.ndarray | None = None
    mpo: Mpo | None = None
    name: str = ""


def qft_gate_list(n: int, swaps: bool = False) -> list[tuple[str, tuple[int, ...], np.ndarray]]:
    """Gate-by-gate QFT: H on each qubit then controlled phases ``2 pi / 2**k`` to later qubits."""
    gates = []
    for c in range(n):
        gates.append(("H", (c,), _g("H")))
        for j in range(c + 1, n):
            k = j - c + 1
            gates.append((f"CZ(2pi/2^{k})", (c, j), _g("CZ", 2 * np.pi / 2**k)))
    if swaps:
        for i in range(n // 2):
            gates.append(("SWAP", (i, n - 1 - i), _g("SWAP")))
    return gates


def qft_mps_ops(n: int, swaps: bool = False) -> list[CircuitOp]:
    """QFT as MPS operations: per control qubit a Hadamard then one phase MPO."""
    ops = []
    for c in range(n):
        ops.append(CircuitOp("gate", (c,), _g("H"), name="H"))
        if c < n - 1:
            ops.append(CircuitOp("mpo", tuple(range(c, n)), mpo=build_qft_mpo_layer(c, n, False),
                                 name=f"phases[{c}]"))
    if swaps:
        for i in range(n // 2):
            j = n - 1 - i
            ops.append(CircuitOp("mpo", (i, j), mpo=build_swap_mpo(j - i - 1, i), name="SWAP"))
    return ops


def rcs_gate_list(rows: int, cols: int, depth: int, seed: int, no_repeat: bool = True):
    """Gate-by-gate random circuit (for the dense oracle)."""
    n = rows * cols
    choices = rcs_single_qubit_choices(n, depth, seed, no_repeat)
    gates = []
    for layer, pattern in enumerate(layer_patterns(depth)):
        for q in range(n):
            gates.append((choices[layer][q], (q,), _g(choices[layer][q])))
        for a, b in entangling_pairs(pattern, rows, cols):
            gates.append(("FSIM", (a, b), _g("FSIM")))
    return gates


def build_rcs(rows: int, cols: int, depth: int, seed: int, no_repeat: bool = True) -> list[CircuitOp]:
    """Random circuit as MPS operations.

    Single-qubit gates are applied directly.  Horizontal (A/B) pairs are
    neighbouring sites and are batched into one MPO per layer; vertical
    (C/D) pairs are ``cols`` sites apart and each becomes its own fSim MPO.
    """
    if depth < 1:
        raise InvalidArgument("depth must be >= 1")
    n = rows * cols
    choices = rcs_single_qubit_choices(n, depth, seed, no_repeat)
    ops = []
    for layer, pattern in enumerate(layer_patterns(depth)):
        for q in range(n):
            ops.append(CircuitOp("gate", (q,), _g(choices[layer][q]), name=choices[layer][q]))
        pairs = entangling_pairs(pattern, rows, cols)
        if not pairs:
            continue
        if pattern in "AB":
            mpo = _batch([build_fsim_mpo(0, a) for a, _ in pairs], n)
            ops.append(CircuitOp("mpo", tuple(mpo.sites), mpo=mpo, name=f"fsim-{pattern}"))
        else:
            for a, b in pairs:
                ops.append(CircuitOp("mpo", (a, b), mpo=build_fsim_mpo(b - a - 1, a), name=f"fsim-{pattern}"))
    return ops


# -- network builders -----------------------------------------------------------------


def _wire_tensor(ctx: RankContext, arr: np.ndarray, legs: list, n_dist: int, dist: DistParams):
    """Tensor whose legs are ``(kind, wire)`` tuples; legs on wires ``< n_dist`` become distributed.

    Bond legs (``kind`` "wl"/"wr") are always local.  Returns the tensor and
    its leg names in tuple order.
    """
    is_d = [leg[0] in ("out", "in") and leg[1] < n_dist for leg in legs]
    order = [i for i, f in enumerate(is_d) if f] + [i for i, f in enumerate(is_d) if not f]
    t = Tensor.from_global(ctx, np.transpose(arr, order), sum(is_d), dist)
    return t, [legs[i] for i in order]


class _Builder:
    """Tracks, for every wire, which network index currently carries it."""

    def __init__(self, ctx: RankContext, n: int, n_dist: int, state: np.ndarray | None):
        self.ctx, self.n, self.n_dist = ctx, n, n_dist
        self.net = TensorNetwork(ctx)
        self.order: list[tuple] = []
        psi = np.zeros(2**n, CDTYPE) if state is None else np.asarray(state, CDTYPE).reshape(-1)
        if state is None:
            psi[0] = 1.0
        if psi.size != 2**n:
            raise InvalidArgument(f"input state has {psi.size} amplitudes, expected {2**n}")
        self.state = self.net.add_tensor(Tensor.from_global(ctx, psi.reshape((2,) * n), n_dist), "state",
                                         labels=[("q", w) for w in range(n)])
        self.front = {w: ("state", w) for w in range(n)}
        self.count = 0

    def add(self, arr: np.ndarray, legs: list) -> tuple[str, list]:
        t, names = _wire_tensor(self.ctx, arr, legs, self.n_dist, DistParams())
        tid = f"g{self.count}"
        self.count += 1
        labels = [("q", leg[1]) if leg[0] == "out" else (tid, leg) for leg in names]
        self.net.add_tensor(t, tid, labels)
        for pos, leg in enumerate(names):
            if leg[0] == "in":
                src = self.front[leg[1]]
                self.net.add_bond(src[0], src[1], tid, pos)
        for pos, leg in enumerate(names):
            if leg[0] == "out":
                self.front[leg[1]] = (tid, pos)
        return tid, names

    def gate(self, matrix: np.ndarray, wires: Sequence[int]) -> str:
        k = len(wires)
        arr = np.asarray(matrix, CDTYPE).reshape((2,) * (2 * k))
        legs = [("out", w) for w in wires] + [("in", w) for w in wires]
        return self.add(arr, legs)[0]


def qft_required_world(kind: str, n_dist: int, group_size: int = 1) -> int:
    """Ranks needed by a network QFT variant with ``n_dist`` distributed qubits.

    The state spans ``2**n_dist`` ranks; a gate or operator group touching
    ``j`` distributed wires has ``2 j`` distributed indices and spans
    ``4**j`` ranks.
    """
    if n_dist == 0:
        return 1
    touched = 2 if kind == "qft_statevector" else group_size
    return max(2**n_dist, 4 ** min(n_dist, touched))


def _check_world(ctx: RankContext, need: int) -> None:
    if need > ctx.world.size:
        raise ResourceError(f"this network needs {need} ranks, world has {ctx.world.size}", required=need)


def build_qft_statevector(ctx: RankContext, n: int, n_dist: int = 0, state: np.ndarray | None = None,
                          swaps: bool = False):
    """QFT network with one tensor per gate, contracted in gate order.

    Returns ``(network, order, labels)``: after ``network.contract_order(order)``
    the state tensor's amplitudes in qubit order are
    ``network.result("state", labels)``.
    """
    if not 0 <= n_dist <= n:
        raise InvalidArgument(f"n_dist must lie in 0..{n}")
    _check_world(ctx, qft_required_world("qft_statevector", n_dist))
    b = _Builder(ctx, n, n_dist, state)
    for _, wires, matrix in qft_gate_list(n, swaps):
        b.gate(matrix, wires)
    order = [("state", f"g{i}") for i in range(b.count)]
    return b.net, order, [("q", w) for w in range(n)]


def _mpo_site_arrays(mpo: Mpo) -> list[tuple[np.ndarray, list]]:
    """MPO tensors with boundary bonds dropped, as ``(array, legs)`` (legs name the wire)."""
    out = []
    last = mpo.n_sites - 1
    for j, (site, w) in enumerate(zip(mpo.sites, mpo.tensors)):
        arr = w
        legs = [("wl", site), ("out", site), ("in", site), ("wr", site)]
        if j == last:
            arr, legs = arr[..., 0], legs[:3]
        if j == 0:
            arr, legs = arr[0], legs[1:]
        out.append((arr, legs))
    return out


def build_qft_mpo_grouped(ctx: RankContext, n: int, n_dist: int = 0, group_size: int = 1,
                          state: np.ndarray | None = None):
    """QFT network where each control's phases form one MPO split into site tensors.

    The site tensors of every layer are pre-contracted in consecutive groups
    of ``group_size`` before each group is applied to the state.  A group may
    span at most ``max(1, n_dist // 2)`` qubits when any qubit is distributed,
    so that a group never needs more ranks than the state.
    """
    if group_size < 1:
        raise InvalidArgument("group_size must be >= 1")
    if not 0 <= n_dist <= n:
        raise InvalidArgument(f"n_dist must lie in 0..{n}")
    if n_dist > 0 and group_size > max(1, n_dist // 2):
        raise InvalidArgument(f"group_size {group_size} exceeds half the {n_dist} distributed qubits")
    _check_world(ctx, qft_required_world("qft_mpo_grouped", n_dist, group_size))
    b = _Builder(ctx, n, n_dist, state)
    order: list[tuple] = []
    for c in range(n - 1):
        ids = []
        prev = None
        for arr, legs in _mpo_site_arrays(build_qft_mpo_layer(c, n, absorb_hadamard=True)):
            tid, names = b.add(arr, legs)
            kinds = [leg[0] for leg in names]
            if prev is not None:
                b.net.add_bond(prev[0], prev[1], tid, kinds.index("wl"))
            prev = (tid, kinds.index("wr")) if "wr" in kinds else None
            ids.append(tid)
        for g in range(0, len(ids), group_size):
            chunk = ids[g : g + group_size]
            for other in chunk[1:]:
                order.append((chunk[0], other))
            order.append(("state", chunk[0]))
    order.append(("state", b.gate(_g("H"), [n - 1])))
    return b.net, order, [("q", w) for w in range(n)]


# -- plans ----------------------------------------------------------------------------

PLAN_KINDS = ("qft_statevector", "qft_mpo_grouped", "qft_mps", "rcs_mps")


@dataclass
class CircuitPlan:
    kind: str
    n: int = 0
    rows: int = 0
    cols: int = 0
    depth: int = 1
    group_size: int = 1
    n_distributed: int = 0
    seed: int = 0
    swaps: bool = False
    no_repeat: bool = True
    chi_sweep: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise InvalidArgument(f"unknown plan kind {self.kind!r}; expected one of {PLAN_KINDS}")
        if self.kind == "rcs_mps":
            if self.rows < 1 or self.cols < 1:
                raise InvalidArgument("rcs plans need rows and cols")
            self.n = self.rows * self.cols
        if self.n < 1:
            raise InvalidArgument("plan needs a positive qubit count")

    @property
    def n_qubits(self) -> int:
        return self.n

    def gate_list(self):
        if self.kind == "rcs_mps":
            return rcs_gate_list(self.rows, self.cols, self.depth, self.seed, self.no_repeat)
        return qft_gate_list(self.n, self.swaps)


def parse_plan(text: str) -> CircuitPlan:
    """Plan from ``key = value`` lines; ``#`` starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    known = {f for f in CircuitPlan.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise InvalidArgument(f"unknown plan keys {sorted(unknown)}")
    kwargs: dict = {}
    for key, value in values.items():
        if key == "kind":
            kwargs[key] = value
        elif key in ("swaps", "no_repeat"):
            kwargs[key] = value.lower() in ("1", "true", "yes", "on")
        elif key == "chi_sweep":
            kwargs[key] = [int(x) for x in value.replace(",", " ").split()]
        else:
            try:
                kwargs[key] = int(value)
            except ValueError as exc:
                raise InvalidArgument(f"plan key {key!r} needs an integer, got {value!r}") from exc
    if "kind" not in kwargs:
        raise InvalidArgument("plan has no 'kind'")
    return CircuitPlan(**kwargs)


def build_qft_variant(plan: CircuitPlan, ctx: RankContext | None = None, state: np.ndarray | None = None):
    """Executable form of a QFT plan.

    ``qft_statevector`` and ``qft_mpo_grouped`` return ``(network, order,
    labels)``; ``qft_mps`` returns a list of :class:`CircuitOp`.
    """
    if plan.kind == "qft_mps":
        return qft_mps_ops(plan.n, plan.swaps)
    if ctx is None:
        raise InvalidArgument("network QFT variants need a rank context")
    if plan.kind == "qft_statevector":
        return build_qft_statevector(ctx, plan.n, plan.n_distributed, state, plan.swaps)
    if plan.kind == "qft_mpo_grouped":
        if plan.swaps:
            raise InvalidArgument("the grouped MPO variant does not emit SWAPs")
        return build_qft_mpo_grouped(ctx, plan.n, plan.n_distributed, plan.group_size, state)
    raise InvalidArgument(f"{plan.kind!r} is not a QFT plan")
