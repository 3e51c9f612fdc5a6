"""Text description of a tensor network and the operations to run on it.

One statement per line, ``#`` starts a comment::

    tensor A dims=2,3 split=1 data=random:7
    tensor B dims=3,2 data=values:1,0,0,1j,1,1
    tensor I dims=2,2 data=identity
    tensor C dims=2,2 dist=1,1,0 data=file:c.qtn
    bond A:1 B:0
    contract A B -> AB
    decompose AB left=0 right=1 chi=2 absorb=right bond=local -> L R
    truncate L R chi=1
    rebcast L dist=2,1,0
    identity L:0 distributed=true -> J
    output L

Data sources: ``zeros``, ``ones``, ``random:<seed>`` (complex normal),
``values:<v,...>`` (row-major, Python complex literals), ``file:<path>`` (a
tensor file, relative to the description) and ``identity`` (inputs first,
outputs second; ``split`` marks the leading distributed indices).
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .fileio import read_tensor
from .network import TensorNetwork
from .runtime import RankContext
from .tensor import CDTYPE, DistParams, SpecialTensor, Tensor

__all__ = ["Statement", "NetworkDescription", "parse_network", "run_network"]


@dataclass
class Statement:
    verb: str
    args: list[str]
    options: dict[str, str]
    targets: list[str]
    lineno: int

    def option(self, key: str, default: str | None = None) -> str:
        if key in self.options:
            return self.options[key]
        if default is None:
            raise InvalidArgument(f"line {self.lineno}: {self.verb} needs {key}=...")
        return default


@dataclass
class NetworkDescription:
    statements: list[Statement] = field(default_factory=list)
    base_dir: Path = Path(".")


_VERBS = {"tensor", "bond", "contract", "decompose", "truncate", "rebcast", "identity", "output"}


def parse_network(text: str, base_dir: str | Path = ".") -> NetworkDescription:
    """Tokenise a description; semantic checks happen when it is run."""
    desc = NetworkDescription(base_dir=Path(base_dir))
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = shlex.split(line)
        verb, rest = tokens[0], tokens[1:]
        if verb not in _VERBS:
            raise InvalidArgument(f"line {lineno}: unknown statement {verb!r}")
        targets: list[str] = []
        if "->" in rest:
            cut = rest.index("->")
            rest, targets = rest[:cut], rest[cut + 1:]
        args = [tok for tok in rest if "=" not in tok]
        options = dict(tok.split("=", 1) for tok in rest if "=" in tok)
        desc.statements.append(Statement(verb, args, options, targets, lineno))
    return desc


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _dist(text: str | None) -> DistParams | None:
    if text is None:
        return None
    vals = _ints(text)
    if len(vals) != 3:
        raise InvalidArgument(f"dist must be stretch,cycles,offset; got {text!r}")
    return DistParams(*vals)


def _endpoint(text: str, lineno: int) -> tuple[str, int]:
    name, sep, idx = text.rpartition(":")
    if not sep:
        raise InvalidArgument(f"line {lineno}: endpoint {text!r} must be <tensor>:<index>")
    return name, int(idx)


def _bool(text: str) -> bool:
    return text.lower() in ("1", "true", "yes", "on")


def _make_tensor(ctx: RankContext, st: Statement, base_dir: Path) -> Tensor:
    dims = _ints(st.option("dims"))
    split = int(st.option("split", "0"))
    dist = _dist(st.options.get("dist"))
    source = st.option("data", "zeros")
    if source == "identity":
        if len(dims) % 2 or dims[: len(dims) // 2] != dims[len(dims) // 2:]:
            raise InvalidArgument(f"line {st.lineno}: identity needs matching input and output dims")
        k = len(dims) // 2
        return SpecialTensor.identity(ctx, dims[:k], [i < split for i in range(k)],
                                      [k + i < split for i in range(k)], dist)
    if source.startswith("file:"):
        return read_tensor(ctx, base_dir / source[5:], dist)
    if source == "zeros":
        arr = np.zeros(dims, CDTYPE)
    elif source == "ones":
        arr = np.ones(dims, CDTYPE)
    elif source.startswith("random:"):
        rng = np.random.default_rng(int(source[7:]))
        arr = rng.standard_normal(dims) + 1j * rng.standard_normal(dims)
    elif source.startswith("values:"):
        vals = [complex(v) for v in source[7:].split(",")]
        if len(vals) != int(np.prod(dims)):
            raise InvalidArgument(f"line {st.lineno}: {len(vals)} values for dims {dims}")
        arr = np.array(vals, CDTYPE).reshape(dims)
    else:
        raise InvalidArgument(f"line {st.lineno}: unknown data source {source!r}")
    return Tensor.from_global(ctx, arr, split, dist)


def run_network(ctx: RankContext, desc: NetworkDescription) -> tuple[TensorNetwork, str | None]:
    """Build and execute a description on this rank; returns the network and the output id."""
    net = TensorNetwork(ctx)
    output = None
    for st in desc.statements:
        if st.verb == "tensor":
            if len(st.args) != 1:
                raise InvalidArgument(f"line {st.lineno}: tensor needs exactly one name")
            output = net.add_tensor(_make_tensor(ctx, st, desc.base_dir), st.args[0])
        elif st.verb == "bond":
            if len(st.args) != 2:
                raise InvalidArgument(f"line {st.lineno}: bond needs two endpoints")
            (a, ia), (b, ib) = (_endpoint(x, st.lineno) for x in st.args)
            net.add_bond(a, ia, b, ib)
        elif st.verb == "contract":
            if len(st.args) != 2:
                raise InvalidArgument(f"line {st.lineno}: contract needs two tensors")
            output = net.contract(*st.args, st.targets[0] if st.targets else None)
        elif st.verb == "decompose":
            bond = st.option("bond", "local")
            ids = tuple(st.targets) if st.targets else None
            if ids is not None and len(ids) != 2:
                raise InvalidArgument(f"line {st.lineno}: decompose produces two tensors")
            output = net.decompose(st.args[0], _ints(st.option("left")), _ints(st.option("right")),
                                   int(st.option("chi")), absorb=st.option("absorb", "left"), bond=bond, ids=ids)[0]
        elif st.verb == "truncate":
            bonds = net.bonds_between(*st.args) if len(st.args) == 2 else []
            if len(bonds) != 1:
                raise InvalidArgument(f"line {st.lineno}: truncate needs two tensors sharing exactly one bond")
            net.truncate(bonds[0], int(st.option("chi")))
        elif st.verb == "rebcast":
            net.rebcast(st.args[0], _dist(st.option("dist")))
        elif st.verb == "identity":
            tid, idx = _endpoint(st.args[0], st.lineno)
            flag = st.options.get("distributed")
            output = net.insert_identity(tid, idx, None if flag is None else _bool(flag),
                                         st.targets[0] if st.targets else None)
        elif st.verb == "output":
            if st.args[0] not in net.tensors:
                raise InvalidArgument(f"line {st.lineno}: unknown tensor {st.args[0]!r}")
            output = st.args[0]
    return net, output
