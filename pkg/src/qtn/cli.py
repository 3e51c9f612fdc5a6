"""Command line entry point: ``qtn run`` for circuit experiments, ``qtn contract`` for network files."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import ExperimentConfig, run_experiment
from .circuits import parse_plan
from .errors import InvalidArgument, NumericalError, PreconditionError, QtnError, ResourceError
from .fileio import write_tensor
from .netfile import parse_network, run_network
from .runtime import create_world

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RESOURCE = 2
EXIT_NUMERICAL = 3

_METRIC_ALIASES = {"bond_dims": "bonds", "timing": "timings"}


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def _metrics(text: str) -> tuple[str, ...]:
    return tuple(_METRIC_ALIASES.get(m, m) for m in text.replace(" ", "").split(",") if m)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtn", description="Distributed tensor network circuit emulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a circuit plan and report accuracy metrics")
    run.add_argument("--plan", required=True, type=Path, help="circuit plan file (key = value lines)")
    run.add_argument("--chi-d", type=int, default=1, help="distributed bond factor")
    run.add_argument("--chi-l", type=int, default=16, help="local bond factor")
    run.add_argument("--chi-sweep", type=_int_list, default=None,
                     help="comma separated total chi values; overrides the plan's sweep")
    run.add_argument("--input", default="zero", help="zero, bits:<s> or random:<chi>")
    run.add_argument("--seed", type=int, default=0, help="seed for random inputs")
    run.add_argument("--world", type=int, default=None, help="simulated ranks (default: minimum required)")
    run.add_argument("--metrics", type=_metrics, default=("overlap", "norm", "bonds", "timings"),
                     help="comma separated subset of overlap,norm,bonds,timings")
    run.add_argument("--out", type=Path, default=None, help="CSV report path (manifest written alongside)")

    con = sub.add_parser("contract", help="execute a network description file")
    con.add_argument("--network", required=True, type=Path, help="network description file")
    con.add_argument("--world", type=int, default=1, help="simulated ranks")
    con.add_argument("--out", type=Path, required=True, help="tensor file for the output tensor")
    return parser


def _cmd_run(args) -> int:
    plan = parse_plan(args.plan.read_text())
    cfg = ExperimentConfig(
        plan=plan,
        world_size=args.world,
        chi_d=args.chi_d,
        chi_l=args.chi_l,
        input=args.input,
        metrics=args.metrics,
        out=str(args.out) if args.out else None,
        seed=args.seed,
        chi_values=args.chi_sweep or [],
    )
    report = run_experiment(cfg)
    if args.out is None:
        sys.stdout.write(report.to_csv())
    else:
        print(f"wrote {args.out} ({len(report.rows)} rows, oracle: {report.oracle})")
    return EXIT_OK


def _contract_program(ctx, desc, out: Path):
    net, output = run_network(ctx, desc)
    if output is None:
        raise InvalidArgument("network description produced no tensors")
    write_tensor(out, net.tensors[output], meta={"id": str(output)})
    return output


def _cmd_contract(args) -> int:
    desc = parse_network(args.network.read_text(), args.network.parent)
    output = create_world(args.world).run(_contract_program, desc, args.out)[0]
    print(f"wrote {args.out} (tensor {output})")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_contract(args)
    except ResourceError as exc:
        print(f"qtn: resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericalError as exc:
        print(f"qtn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidArgument, PreconditionError, QtnError, OSError) as exc:
        print(f"qtn: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
