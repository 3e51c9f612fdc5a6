"""Experiment harness: dense statevector oracle, accuracy metrics and CSV reports."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .circuits import CircuitPlan, build_qft_variant, build_rcs, qft_required_world
from .errors import InvalidArgument, PreconditionError, ResourceError
from .mps import (
    Mps,
    apply_circuit,
    effective_bond_dims,
    mps_bitstring,
    mps_random,
    mps_to_statevector,
    norm2,
    overlap,
)
from .runtime import RankContext, create_world
from .tensor import CDTYPE

__all__ = [
    "ORACLE_LIMIT",
    "ExperimentConfig",
    "AccuracyReport",
    "dense_oracle",
    "apply_dense_gate",
    "overlap_metric",
    "norm_metric",
    "run_experiment",
    "CSV_COLUMNS",
]

ORACLE_LIMIT = 26
CSV_COLUMNS = ("chi", "overlap", "norm", "abs_diff", "rel_diff", "max_eff_bond", "wall_ms")
METRICS = ("overlap", "norm", "bonds", "timings")


def apply_dense_gate(psi: np.ndarray, n: int, sites: Sequence[int], gate: np.ndarray) -> np.ndarray:
    """One Schrödinger step: update all ``2**n`` amplitudes for ``gate`` on ``sites``."""
    k = len(sites)
    view = psi.reshape((2,) * n)
    g = np.asarray(gate, CDTYPE).reshape((2,) * (2 * k))
    out = np.tensordot(g, view, axes=(list(range(k, 2 * k)), list(sites)))
    return np.moveaxis(out, list(range(k)), list(sites)).reshape(-1)


def dense_oracle(plan: CircuitPlan, state: np.ndarray | None = None) -> np.ndarray:
    """Statevector after applying the plan's gates one by one to ``state`` (default ``|0...0>``)."""
    n = plan.n_qubits
    if n > ORACLE_LIMIT:
        raise ResourceError(f"dense oracle limited to {ORACLE_LIMIT} qubits, plan has {n}")
    if state is None:
        psi = np.zeros(2**n, CDTYPE)
        psi[0] = 1.0
    else:
        psi = np.array(state, dtype=CDTYPE).reshape(-1)
        if psi.size != 2**n:
            raise InvalidArgument(f"input state has {psi.size} amplitudes, expected {2**n}")
    for _, sites, gate in plan.gate_list():
        psi = apply_dense_gate(psi, n, sites, gate)
    return psi


def overlap_metric(approx: Mps | np.ndarray, ideal: Mps | np.ndarray) -> float:
    """Fidelity ``|<ideal|approx>|**2 / <approx|approx>`` against a normalised ideal.

    Dividing by the approximate norm makes the metric a pure direction check:
    a single projective truncation with kept weight ``w`` scores ``w``, the
    same as :func:`norm_metric`, rather than ``w**2``.
    """
    if isinstance(ideal, Mps):
        n_ideal = norm2(ideal)
    else:
        ideal = np.asarray(ideal, CDTYPE).reshape(-1)
        n_ideal = float(np.vdot(ideal, ideal).real)
    if n_ideal is not None and abs(n_ideal - 1.0) > 1e-8:
        raise PreconditionError(f"ideal state must be normalised, norm2={n_ideal:.6g}")
    if isinstance(approx, Mps) and isinstance(ideal, Mps):
        if approx.n_sites != ideal.n_sites:
            raise InvalidArgument(f"states of {approx.n_sites} and {ideal.n_sites} sites cannot be compared")
        amp, n_approx = overlap(approx, ideal), norm2(approx)
        if amp is None:
            return None
    else:
        vec = mps_to_statevector(approx) if isinstance(approx, Mps) else np.asarray(approx, CDTYPE).reshape(-1)
        if vec is None:
            return None
        if isinstance(ideal, Mps):
            ideal = mps_to_statevector(ideal)
        if vec.size != ideal.size:
            raise InvalidArgument(f"states of sizes {vec.size} and {ideal.size} cannot be compared")
        amp, n_approx = np.vdot(ideal, vec), float(np.vdot(vec, vec).real)
    if n_approx <= 0.0:
        return 0.0
    return min(1.0, abs(amp) ** 2 / n_approx)


def norm_metric(approx: Mps | np.ndarray) -> float:
    """Squared norm of the final, un-renormalised state."""
    if isinstance(approx, Mps):
        return norm2(approx)
    vec = np.asarray(approx, CDTYPE).reshape(-1)
    return float(np.vdot(vec, vec).real)


@dataclass
class ExperimentConfig:
    plan: CircuitPlan
    world_size: int | None = None
    chi_d: int = 1
    chi_l: int = 16
    input: str = "zero"
    metrics: tuple[str, ...] = ("overlap", "norm", "bonds", "timings")
    out: str | None = None
    seed: int = 0
    chi_values: list[int] = field(default_factory=list)

    def __post_init__(self):
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise InvalidArgument(f"unknown metrics {sorted(bad)}; choose from {METRICS}")
        _parse_input(self.input)
        if self.chi_d < 1 or self.chi_l < 1:
            raise InvalidArgument("chi_d and chi_l must be positive")
        for chi in self.chi_values:
            if chi % self.chi_d:
                raise InvalidArgument(f"chi={chi} is not a multiple of chi_d={self.chi_d}")

    def sweep(self) -> list[int]:
        return list(self.chi_values or self.plan.chi_sweep or [self.chi_d * self.chi_l])

    def required_world(self) -> int:
        if self.plan.kind in ("qft_statevector", "qft_mpo_grouped"):
            return qft_required_world(self.plan.kind, self.plan.n_distributed, self.plan.group_size)
        return self.chi_d * self.chi_d


@dataclass
class AccuracyReport:
    rows: list[dict]
    effective_bond_dims: dict[int, list[int]]
    wall_ms: float
    oracle: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row.get(col)) for col in CSV_COLUMNS])
        return buf.getvalue()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.15g}"
    return str(value)


def _parse_input(spec: str) -> tuple[str, object]:
    if spec == "zero":
        return "zero", None
    if spec.startswith("bits:"):
        bits = spec[5:]
        if not bits or set(bits) - {"0", "1"}:
            raise InvalidArgument(f"bad bitstring input {spec!r}")
        return "bits", [int(b) for b in bits]
    if spec.startswith("random:"):
        try:
            chi = int(spec[7:])
        except ValueError as exc:
            raise InvalidArgument(f"bad random input {spec!r}") from exc
        if chi < 1:
            raise InvalidArgument("random input bond dimension must be positive")
        return "random", chi
    raise InvalidArgument(f"input must be zero, bits:<s> or random:<chi>, got {spec!r}")


def _input_mps(ctx: RankContext, cfg: ExperimentConfig, chi_d: int, chi_l: int) -> Mps:
    kind, arg = _parse_input(cfg.input)
    n = cfg.plan.n_qubits
    if kind == "zero":
        return mps_bitstring(ctx, [0] * n, chi_d, chi_l)
    if kind == "bits":
        if len(arg) != n:
            raise InvalidArgument(f"bitstring has {len(arg)} bits, plan has {n} qubits")
        return mps_bitstring(ctx, arg, chi_d, chi_l)
    if arg > chi_d * chi_l:
        raise InvalidArgument(f"input bond dimension {arg} exceeds chi={chi_d * chi_l}")
    return mps_random(ctx, n, arg, chi_d, chi_l, seed=cfg.seed)


def _ideal(ctx: RankContext, cfg: ExperimentConfig) -> tuple[object, str]:
    """Reference output: a dense vector, a product MPS, or ``None`` with the reason."""
    n = cfg.plan.n_qubits
    kind, _ = _parse_input(cfg.input)
    if cfg.plan.kind.startswith("qft") and kind == "zero" and n > ORACLE_LIMIT:
        # QFT of |0...0> is the uniform superposition, a product state
        plus = mps_bitstring(ctx, [0] * n, 1, 1)
        plus.cores = [np.full((1, 2, 1), 1 / math.sqrt(2), CDTYPE) for _ in range(n)]
        return plus, "analytic uniform state"
    if n > ORACLE_LIMIT:
        return None, f"skipped: {n} qubits exceed the {ORACLE_LIMIT}-qubit oracle limit"
    return dense_oracle(cfg.plan, _dense_input(ctx, cfg)), "dense statevector"


def _dense_input(ctx: RankContext, cfg: ExperimentConfig) -> np.ndarray | None:
    kind, arg = _parse_input(cfg.input)
    n = cfg.plan.n_qubits
    if kind == "random":
        # same cores for every chi split, so a chi_d = 1 copy gives the exact input
        return mps_to_statevector(mps_random(ctx, n, arg, 1, arg, seed=cfg.seed))
    if kind == "bits":
        if len(arg) != n:
            raise InvalidArgument(f"bitstring has {len(arg)} bits, plan has {n} qubits")
        state = np.zeros(2**n, CDTYPE)
        state[int("".join(map(str, arg)), 2)] = 1.0
        return state
    return None


def _mps_program(ctx: RankContext, cfg: ExperimentConfig):
    ideal, oracle = _ideal(ctx, cfg) if "overlap" in cfg.metrics else (None, "not requested")
    ops = build_rcs(cfg.plan.rows, cfg.plan.cols, cfg.plan.depth, cfg.plan.seed, cfg.plan.no_repeat) \
        if cfg.plan.kind == "rcs_mps" else build_qft_variant(cfg.plan)
    rows, bonds = [], {}
    for chi in cfg.sweep():
        chi_d = cfg.chi_d
        chi_l = chi // chi_d
        t0 = time.perf_counter()
        m = _input_mps(ctx, cfg, chi_d, chi_l)
        apply_circuit(m, ops)
        wall = (time.perf_counter() - t0) * 1e3
        row = {"chi": chi}
        if "overlap" in cfg.metrics and ideal is not None:
            row["overlap"] = overlap_metric(m, ideal)
        if "norm" in cfg.metrics:
            row["norm"] = norm_metric(m)
        if "bonds" in cfg.metrics:
            dims = effective_bond_dims(m)
            bonds[chi] = dims
            row["max_eff_bond"] = None if dims is None else max(dims, default=1)
        if "timings" in cfg.metrics:
            row["wall_ms"] = round(wall, 3)
        _fill_diffs(row)
        rows.append(row)
    return rows, bonds, oracle


def _network_program(ctx: RankContext, cfg: ExperimentConfig):
    n = cfg.plan.n_qubits
    if n > ORACLE_LIMIT:
        raise ResourceError(f"network QFT variants hold a full statevector; {n} qubits exceed {ORACLE_LIMIT}")
    state = _dense_input(ctx, cfg)
    t0 = time.perf_counter()
    net, order, labels = build_qft_variant(cfg.plan, ctx, state)
    net.contract_order(order)
    out = net.result("state", labels)
    wall = (time.perf_counter() - t0) * 1e3
    rows = []
    if out is not None:
        vec = out.reshape(-1)
        row = {"chi": None}
        if "overlap" in cfg.metrics:
            row["overlap"] = overlap_metric(vec, dense_oracle(cfg.plan, state))
        if "norm" in cfg.metrics:
            row["norm"] = norm_metric(vec)
        if "timings" in cfg.metrics:
            row["wall_ms"] = round(wall, 3)
        _fill_diffs(row)
        rows.append(row)
    return rows, {}, "dense statevector"


def _fill_diffs(row: dict) -> None:
    ov, nm = row.get("overlap"), row.get("norm")
    if ov is None or nm is None:
        return
    row["abs_diff"] = abs(ov - nm)
    low = min(ov, nm)
    row["rel_diff"] = row["abs_diff"] / low if low > 0 else float("inf")


def _program(ctx: RankContext, cfg: ExperimentConfig):
    if cfg.plan.kind in ("qft_mps", "rcs_mps"):
        return _mps_program(ctx, cfg)
    return _network_program(ctx, cfg)


def run_experiment(cfg: ExperimentConfig) -> AccuracyReport:
    """Run the configured plan on a simulated world and write the CSV and manifest if ``out`` is set."""
    need = cfg.required_world()
    world_size = cfg.world_size or need
    if world_size < need:
        raise ResourceError(f"experiment needs {need} ranks, world has {world_size}", required=need)
    t0 = time.perf_counter()
    results = create_world(world_size).run(_program, cfg)
    rows, bonds, oracle = results[0]
    report = AccuracyReport(rows, bonds, (time.perf_counter() - t0) * 1e3, oracle)
    if cfg.out:
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_csv())
        manifest = {
            "seed": cfg.seed,
            "world_size": world_size,
            "config": {**asdict(cfg), "plan": asdict(cfg.plan), "metrics": list(cfg.metrics)},
            "oracle": oracle,
            "effective_bond_dims": {str(k): v for k, v in bonds.items()},
            "wall_ms": report.wall_ms,
            "versions": {
                "qtn": _version(),
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }
        Path(f"{out}.manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return report


def _version() -> str:
    from . import __version__

    return __version__
