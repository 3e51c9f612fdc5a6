"""Distributed dense tensor networks, MPS circuit emulation and benchmarks."""

from .errors import (
    DegenerateStateError,
    InvalidArgument,
    NumericalError,
    PreconditionError,
    ProtocolError,
    QtnError,
    ResourceError,
    WorldAborted,
)
from .runtime import RankContext, RankGroup, RankWorld, collective, create_group, create_world, local_context
from .tensor import (
    DiagonalTensor,
    DistParams,
    IndexTuple,
    SpecialTensor,
    SymmetricTensor,
    Tensor,
    element,
    flat_offset,
    home_ranks,
    to_dense,
)
from .ops import gather_index, permute, rebcast, reshape, scatter_index

__version__ = "0.1.0"
from .linalg import BlockCyclicMatrix, pgemm, psvd, truncate_svd
from .network import TensorNetwork, contract_tensors, decompose_tensor
from .mps import (
    Mpo,
    Mps,
    apply_circuit,
    apply_mpo,
    apply_raw_gate,
    canonicalize,
    effective_bond_dims,
    load_mps,
    mps_bitstring,
    mps_from_statevector,
    mps_random,
    mps_to_statevector,
    norm2,
    overlap,
    renormalise,
    sample,
    save_mps,
)
from .circuits import (
    CircuitPlan,
    build_fsim_mpo,
    build_qft_mpo_grouped,
    build_qft_mpo_layer,
    build_qft_statevector,
    build_rcs,
    gate_matrix,
    parse_plan,
    qft_mps_ops,
)
from .bench import ExperimentConfig, dense_oracle, run_experiment
