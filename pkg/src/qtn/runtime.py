"""SPMD execution context: worlds of ranks, member-only groups and collectives.

The simulated backend runs one thread per rank inside the current process.
Collectives are rendezvous points: every member deposits its contribution,
the last one to arrive computes all outputs from the contributions (ordered
by member index, never by arrival order), and every member picks up its own
output. Results therefore do not depend on thread scheduling.

Programs are written SPMD style::

    world = create_world(4)

    def program(ctx):
        group = ctx.group([0, 1, 2, 3])
        return group.allreduce_sum(1.0)

    assert world.run(program) == [4.0] * 4

An adapter over ``mpi4py`` is available with ``backend="mpi"``; it exposes the
same interface and maps group creation onto ``MPI_Comm_create_group``.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InvalidArgument, ProtocolError, WorldAborted

__all__ = [
    "RankWorld",
    "RankContext",
    "RankGroup",
    "create_world",
    "create_group",
    "collective",
    "current_context",
    "local_context",
]

BACKENDS = ("simulated", "mpi")
COLLECTIVE_KINDS = ("broadcast", "gather", "scatter", "all_reduce_sum", "barrier", "allgather")

_current = threading.local()


def current_context() -> RankContext:
    """Context of the rank executing on this thread (inside ``RankWorld.run``)."""
    ctx = getattr(_current, "ctx", None)
    if ctx is None:
        raise InvalidArgument("no rank context is active on this thread")
    return ctx


@dataclass
class _Slot:
    size: int
    kinds: list = field(default_factory=list)
    payloads: list = field(default_factory=list)
    arrived: int = 0
    waiting: int = 0
    outputs: list | None = None
    error: Exception | None = None
    picked: int = 0


class _Exchange:
    """Rendezvous table shared by all rank threads of one simulated world."""

    def __init__(self, n_threads: int):
        self.cv = threading.Condition()
        self.slots: dict[tuple, _Slot] = {}
        self.active = n_threads
        self.blocked = 0
        self.aborted: Exception | None = None

    def _check_deadlock(self) -> None:
        if self.active == 0 and self.blocked > 0 and self.aborted is None:
            pending = [
                f"{key[0]!r} seq={key[1]} ({slot.arrived}/{slot.size} arrived, kinds={sorted(set(map(str, slot.kinds)))})"
                for key, slot in self.slots.items()
                if slot.outputs is None and slot.error is None
            ]
            self.aborted = ProtocolError("collective deadlock; pending: " + "; ".join(pending))
            self.cv.notify_all()

    def rendezvous(self, key: tuple, size: int, index: int, kind: Any, payload: Any,
                   combine: Callable[[list, list], list]) -> Any:
        with self.cv:
            if self.aborted is not None:
                raise WorldAborted(str(self.aborted))
            slot = self.slots.get(key)
            if slot is None:
                slot = self.slots[key] = _Slot(size, [None] * size, [None] * size)
            slot.kinds[index] = kind
            slot.payloads[index] = payload
            slot.arrived += 1
            if slot.arrived == slot.size:
                try:
                    slot.outputs = combine(slot.kinds, slot.payloads)
                except Exception as exc:  # delivered to every member
                    slot.error = exc
                # waiters become runnable now; count them before they wake up
                self.active += slot.waiting
                self.blocked -= slot.waiting
                slot.waiting = 0
                self.cv.notify_all()
            else:
                slot.waiting += 1
                self.blocked += 1
                self.active -= 1
                self._check_deadlock()
                while slot.outputs is None and slot.error is None and self.aborted is None:
                    self.cv.wait()
                if slot.outputs is None and slot.error is None:
                    raise WorldAborted(str(self.aborted))
            slot.picked += 1
            if slot.picked == slot.size:
                del self.slots[key]
            if slot.error is not None:
                raise slot.error
            return slot.outputs[index]

    def finish(self) -> None:
        with self.cv:
            self.active -= 1
            self._check_deadlock()

    def abort(self, exc: Exception) -> None:
        with self.cv:
            if self.aborted is None:
                self.aborted = exc
            self.cv.notify_all()


class RankWorld:
    """A fixed set of ranks ``0..size-1`` able to run SPMD programs."""

    def __init__(self, size: int, backend: str = "simulated"):
        if not isinstance(size, (int, np.integer)) or isinstance(size, bool) or size < 1:
            raise InvalidArgument(f"world size must be a positive integer, got {size!r}")
        if backend not in BACKENDS:
            raise InvalidArgument(f"unknown backend {backend!r}; expected one of {BACKENDS}")
        self.size = int(size)
        self.backend = backend
        self._exchange: _Exchange | None = None
        if backend == "mpi":
            from mpi4py import MPI

            if MPI.COMM_WORLD.Get_size() != self.size:
                raise InvalidArgument(
                    f"mpi backend needs exactly {self.size} processes, launched with {MPI.COMM_WORLD.Get_size()}"
                )

    def __repr__(self) -> str:
        return f"RankWorld(size={self.size}, backend={self.backend!r})"

    def context(self, rank: int = 0) -> RankContext:
        """Context usable outside ``run``; only meaningful for single-rank worlds."""
        if self.size != 1 and self.backend == "simulated":
            raise InvalidArgument("standalone contexts are only available for size-1 simulated worlds")
        return RankContext(self, rank)

    def run(self, program: Callable[..., Any], *args: Any, **kwargs: Any) -> list:
        """Execute ``program(ctx, *args, **kwargs)`` on every rank; return per-rank results."""
        if self.backend == "mpi":
            return _run_mpi(self, program, args, kwargs)
        if self.size == 1:
            ctx = RankContext(self, 0)
            previous = getattr(_current, "ctx", None)
            _current.ctx = ctx
            try:
                return [program(ctx, *args, **kwargs)]
            finally:
                _current.ctx = previous

        exchange = self._exchange = _Exchange(self.size)
        results: list[Any] = [None] * self.size
        errors: list[Exception | None] = [None] * self.size

        def body(rank: int) -> None:
            ctx = RankContext(self, rank)
            _current.ctx = ctx
            try:
                results[rank] = program(ctx, *args, **kwargs)
            except Exception as exc:
                errors[rank] = exc
                exchange.abort(exc)
            finally:
                exchange.finish()

        threads = [threading.Thread(target=body, args=(r,), name=f"rank-{r}", daemon=True) for r in range(self.size)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        self._exchange = None
        primary = [e for e in errors if e is not None and not isinstance(e, WorldAborted)]
        if primary:
            raise primary[0]
        if any(e is not None for e in errors):
            raise next(e for e in errors if e is not None)
        if exchange.aborted is not None:
            raise exchange.aborted
        return results


class RankContext:
    """Per-rank handle passed to SPMD programs."""

    def __init__(self, world: RankWorld, rank: int):
        if not 0 <= rank < world.size:
            raise InvalidArgument(f"rank {rank} outside world of size {world.size}")
        self.world = world
        self.rank = rank
        self._creations: dict[tuple[int, ...], int] = {}
        self._groups: dict[tuple[int, ...], RankGroup] = {}
        self._mpi_comm = None

    def __repr__(self) -> str:
        return f"RankContext(rank={self.rank}, world_size={self.world.size})"

    def create_group(self, members: Sequence[int]) -> RankGroup:
        """Create a new group; must be called by exactly the member ranks.

        Only the members synchronise; ranks outside ``members`` never block.
        """
        members = _validate_members(self.world, members)
        if self.rank not in members:
            raise InvalidArgument(f"rank {self.rank} is not a member of group {list(members)}")
        seq = self._creations.get(members, 0)
        self._creations[members] = seq + 1
        channel = (members, seq)
        if self.world.backend == "mpi":
            return _mpi_group(self, members, channel)
        if len(members) > 1:
            _exchange_of(self.world).rendezvous(
                ("create", channel), len(members), members.index(self.rank), "create", None,
                lambda kinds, payloads: [None] * len(payloads),
            )
        return RankGroup(self, members, channel)

    def group(self, members: Sequence[int]) -> RankGroup:
        """Cached group over ``members`` (created on first use)."""
        key = tuple(int(m) for m in members)
        grp = self._groups.get(key)
        if grp is None:
            grp = self._groups[key] = self.create_group(key)
        return grp

    @property
    def world_group(self) -> RankGroup:
        return self.group(range(self.world.size))


def _validate_members(world: RankWorld, members: Sequence[int]) -> tuple[int, ...]:
    members = tuple(int(m) for m in members)
    if not members:
        raise InvalidArgument("group members must be non-empty")
    if len(set(members)) != len(members):
        raise InvalidArgument(f"duplicate group member in {list(members)}")
    bad = [m for m in members if not 0 <= m < world.size]
    if bad:
        raise InvalidArgument(f"group members {bad} outside world of size {world.size}")
    return members


def _exchange_of(world: RankWorld) -> _Exchange:
    if world._exchange is None:
        raise InvalidArgument("multi-rank collectives require RankWorld.run")
    return world._exchange


def _copy(item: Any) -> Any:
    if isinstance(item, np.ndarray):
        return item.copy()
    if isinstance(item, list):
        return list(item)
    return item


def _combine(kinds: list, payloads: list) -> list:
    n = len(payloads)
    kind0 = kinds[0]
    if any(k != kind0 for k in kinds):
        raise ProtocolError(f"mismatched collective calls across members: {kinds}")
    name, root = kind0
    if name == "alltoallv":
        outputs = []
        for j in range(n):
            expected = payloads[j][1]
            recv = []
            for i in range(n):
                item = payloads[i][0][j]
                if expected is not None and len(item) != expected[i]:
                    raise ProtocolError(
                        f"all_to_all_variable size mismatch on pair ({i},{j}): "
                        f"member {i} sent {len(item)} elements, member {j} expected {expected[i]}"
                    )
                recv.append(_copy(item))
            outputs.append(recv)
        return outputs
    if name == "broadcast":
        return [_copy(payloads[root]) for _ in range(n)]
    if name == "gather":
        return [[_copy(p) for p in payloads] if j == root else None for j in range(n)]
    if name == "allgather":
        return [[_copy(p) for p in payloads] for _ in range(n)]
    if name == "scatter":
        items = payloads[root]
        if items is None or len(items) != n:
            raise ProtocolError(f"scatter root must supply exactly {n} items")
        return [_copy(items[j]) for j in range(n)]
    if name == "all_reduce_sum":
        total = payloads[0]
        total = np.array(total, copy=True) if isinstance(total, np.ndarray) else total
        for p in payloads[1:]:
            total = total + p
        return [_copy(total) for _ in range(n)]
    if name == "barrier":
        return [None] * n
    raise ProtocolError(f"unknown collective {name!r}")


class RankGroup:
    """Ordered subset of world ranks; members are re-indexed ``0..size-1``."""

    def __init__(self, ctx: RankContext, members: tuple[int, ...], channel: tuple):
        self.ctx = ctx
        self.world = ctx.world
        self.members = members
        self.rank = members.index(ctx.rank)
        self.size = len(members)
        self._channel = channel
        self._seq = 0
        self._comm = None  # mpi communicator when backend == "mpi"

    def __repr__(self) -> str:
        return f"RankGroup(members={list(self.members)}, rank={self.rank})"

    def index_of(self, world_rank: int) -> int:
        return self.members.index(world_rank)

    def _call(self, name: str, root: int, payload: Any) -> Any:
        if not 0 <= root < self.size:
            raise InvalidArgument(f"root {root} outside group of size {self.size}")
        if self._comm is not None:
            return _mpi_call(self, name, root, payload)
        if self.size == 1:
            return _combine([(name, root)], [payload])[0]
        key = (self._channel, self._seq)
        self._seq += 1
        return _exchange_of(self.world).rendezvous(key, self.size, self.rank, (name, root), payload, _combine)

    def alltoallv(self, send: Sequence[Any], expected: Sequence[int] | None = None) -> list:
        """Irregular all-to-all: ``send[j]`` goes to member ``j``; returns ``recv[i]`` from member ``i``.

        ``expected[i]``, when given, is the element count this member expects from
        member ``i``; any mismatch raises ``ProtocolError`` naming the pair.
        """
        if len(send) != self.size:
            raise InvalidArgument(f"send plan must have {self.size} entries, got {len(send)}")
        if expected is not None and len(expected) != self.size:
            raise InvalidArgument(f"expected counts must have {self.size} entries")
        return self._call("alltoallv", 0, (list(send), None if expected is None else list(expected)))

    def bcast(self, obj: Any = None, root: int = 0) -> Any:
        return self._call("broadcast", root, obj if self.rank == root else None)

    def gather(self, obj: Any, root: int = 0) -> list | None:
        return self._call("gather", root, obj)

    def allgather(self, obj: Any) -> list:
        return self._call("allgather", 0, obj)

    def scatter(self, objs: Sequence[Any] | None = None, root: int = 0) -> Any:
        return self._call("scatter", root, list(objs) if self.rank == root and objs is not None else None)

    def allreduce_sum(self, value: Any) -> Any:
        return self._call("all_reduce_sum", 0, value)

    def barrier(self) -> None:
        self._call("barrier", 0, None)


def create_world(n_ranks: int, backend: str = "simulated") -> RankWorld:
    return RankWorld(n_ranks, backend)


def create_group(world: RankWorld | RankContext, members: Sequence[int]) -> RankGroup:
    """Functional form of ``RankContext.create_group`` for the calling rank."""
    ctx = world if isinstance(world, RankContext) else current_context()
    if isinstance(world, RankWorld) and ctx.world is not world:
        raise InvalidArgument("the active rank context belongs to a different world")
    return ctx.create_group(members)


def collective(group: RankGroup, kind: str, *args: Any, **kwargs: Any) -> Any:
    """Dispatch a collective by name (see ``COLLECTIVE_KINDS``)."""
    methods = {
        "broadcast": group.bcast,
        "gather": group.gather,
        "scatter": group.scatter,
        "all_reduce_sum": group.allreduce_sum,
        "barrier": group.barrier,
        "allgather": group.allgather,
    }
    if kind not in methods:
        raise InvalidArgument(f"unknown collective kind {kind!r}; expected one of {COLLECTIVE_KINDS}")
    return methods[kind](*args, **kwargs)


def local_context() -> RankContext:
    """A fresh single-rank context for code that runs outside any world."""
    return RankWorld(1).context(0)


# -- mpi4py adapter -----------------------------------------------------------


def _run_mpi(world: RankWorld, program: Callable, args: tuple, kwargs: dict) -> list:
    from mpi4py import MPI

    ctx = RankContext(world, MPI.COMM_WORLD.Get_rank())
    previous = getattr(_current, "ctx", None)
    _current.ctx = ctx
    try:
        result = program(ctx, *args, **kwargs)
    finally:
        _current.ctx = previous
    return MPI.COMM_WORLD.allgather(result)


def _mpi_group(ctx: RankContext, members: tuple[int, ...], channel: tuple) -> RankGroup:
    from mpi4py import MPI

    world_comm = MPI.COMM_WORLD
    sub = world_comm.Get_group().Incl(list(members))
    # tag derived from the channel keeps concurrent creations apart
    tag = hash(channel) & 0x7FFF
    comm = world_comm.Create_group(sub, tag)
    grp = RankGroup(ctx, members, channel)
    grp._comm = comm
    return grp


def _mpi_call(group: RankGroup, name: str, root: int, payload: Any) -> Any:
    comm = group._comm
    if name == "alltoallv":
        send, expected = payload
        recv = comm.alltoall([_copy(s) for s in send])
        if expected is not None:
            for i, item in enumerate(recv):
                if len(item) != expected[i]:
                    raise ProtocolError(
                        f"all_to_all_variable size mismatch on pair ({i},{group.rank}): "
                        f"received {len(item)}, expected {expected[i]}"
                    )
        return recv
    if name == "broadcast":
        return comm.bcast(payload, root=root)
    if name == "gather":
        return comm.gather(payload, root=root)
    if name == "allgather":
        return comm.allgather(payload)
    if name == "scatter":
        return comm.scatter(payload, root=root)
    if name == "all_reduce_sum":
        parts = comm.allgather(payload)
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total
    if name == "barrier":
        comm.Barrier()
        return None
    raise ProtocolError(f"unknown collective {name!r}")
