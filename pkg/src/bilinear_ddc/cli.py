"""Batch command line: experiments, designs, sweeps and verification.

Exit codes: 0 ok, 1 usage or I/O error, 2 infeasible, 3 verification
failure, 4 numerical trouble.  Every command writes a ``*.manifest.json``
next to its main output.  Relative output paths are resolved against
``$BILINEAR_DDC_OUTDIR`` when it is set.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io
from .data import DataRecord, diagnose, load, run_experiment, save
from .design import (
    DesignConfig,
    DesignResult,
    best_design,
    design_data_based,
    design_model_based,
    parse_grid,
    sweep_eps1,
)
from .errors import BilinearDDCError, NotFound, PreconditionError
from .lmi import DesignIneqInputs, build_data_lmi, build_model_lmi
from .maxdet import SolverOptions, Status
from .system import EXAMPLE_DELTA, BilinearSystem, example_system
from .verify import verify_design

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_VERIFY, EXIT_NUMERICAL = 0, 1, 2, 3, 4
OUTDIR_ENV = "BILINEAR_DDC_OUTDIR"
MANIFEST_FORMAT = "bilinear-ddc/manifest/1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _grid(text):
    try:
        return parse_grid(text)
    except BilinearDDCError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _out_path(p) -> Path:
    p = Path(p)
    if not p.is_absolute() and os.environ.get(OUTDIR_ENV):
        p = Path(os.environ[OUTDIR_ENV]) / p
    return p


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_system(args) -> BilinearSystem:
    if args.paper_example:
        return example_system()
    if not args.system:
        raise UsageError("give --system FILE or --paper-example")
    return BilinearSystem.from_dict(io.read_json(args.system))


def _options(args) -> SolverOptions:
    return SolverOptions()


def _write_manifest(args, main_out: Path, outputs, inputs, config, started):
    manifest = {
        "format": MANIFEST_FORMAT,
        "command": args.command,
        "argv": sys.argv[1:],
        "tool_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": getattr(args, "seed", None),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    io.write_json(_sidecar(main_out, ".manifest.json"), manifest)


def _now():
    return datetime.now(timezone.utc).isoformat()


def _write_trace(path: Path, result: DesignResult):
    rows = [[h.phase, h.outer, h.t, h.objective, h.worst_margin, h.newton_steps]
            for h in (result.solution.history if result.solution else [])]
    io.write_rows_csv(path, ["phase", "outer", "t", "objective", "worst_margin", "newton_steps"], rows)


def _status_exit(status: Status) -> int:
    if status is Status.OPTIMAL:
        return EXIT_OK
    if status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


# ---------------------------------------------------------------------------


def cmd_experiment(args) -> int:
    started = _now()
    sys_ = _load_system(args)
    x0 = None
    if args.x0 is not None:
        x0 = [float(v) for v in args.x0.split(",")]
        if len(x0) != sys_.n:
            raise UsageError(f"--x0 needs {sys_.n} comma-separated values")
    rec = run_experiment(sys_, x0=x0, T=args.T, seed=args.seed)
    diag = diagnose(rec)
    out = _out_path(args.out)
    save(rec, out)
    diag_path = _sidecar(out, ".diagnostics.json")
    io.write_json(diag_path, diag.to_dict())
    print(f"wrote {out} (T={rec.T}, n={rec.n}, rank X0={diag.rank_X0}, cond={diag.cond_X0:.3g})")
    for w in diag.warnings:
        print(f"warning: {w}", file=sys.stderr)
    inputs = [args.system] if args.system and not args.paper_example else []
    _write_manifest(args, out, [out, diag_path], inputs,
                    {"T": args.T, "x0": x0, "paper_example": args.paper_example,
                     "input": "iid uniform[-1,1]"}, started)
    return EXIT_OK


def _single_design(args, out: Path, make, dump_problem, config, inputs, started) -> int:
    result = make()
    csv_path = out.with_suffix(".csv")
    result.save(out, csv_path)
    outputs = [out, csv_path]
    if args.trace:
        trace = _sidecar(out, ".trace.csv")
        _write_trace(trace, result)
        outputs.append(trace)
    if args.dump_problem:
        dump = _out_path(args.dump_problem)
        io.write_json(dump, dump_problem().to_dict())
        outputs.append(dump)
    _write_manifest(args, out, outputs, inputs, config, started)
    if result.ok:
        print(f"{result.provenance} design at eps1={result.eps1:g}: K={np.round(result.K, 6).tolist()}, "
              f"log det P={result.logdetP:.6g}")
    elif result.status is Status.INFEASIBLE:
        print(f"infeasible at eps1={result.eps1:g}: {result.message}; try a line search with --sweep",
              file=sys.stderr)
    else:
        print(f"{result.status.value} at eps1={result.eps1:g}: {result.message}", file=sys.stderr)
    return _status_exit(result.status)


def _sweep_outputs(args, out: Path, table, provenance, config, inputs, started) -> int:
    csv_path = out.with_suffix(".csv")
    table.save(out, csv_path)
    outputs = [out, csv_path]
    code = EXIT_OK
    try:
        best = best_design(table, provenance)
        best_path = _sidecar(out, ".best.json")
        best.save(best_path)
        outputs.append(best_path)
        print(f"{len(table.feasible(provenance))}/{len(table.rows)} grid points feasible; "
              f"best eps1={best.eps1:g}, det P={best.detP:.6g}, K={np.round(best.K, 6).tolist()}")
    except NotFound:
        print("no feasible grid point", file=sys.stderr)
        code = EXIT_INFEASIBLE
    _write_manifest(args, out, outputs, inputs, config, started)
    return code


def cmd_design(args) -> int:
    started = _now()
    data = load(args.data)
    out = _out_path(args.out)
    config = {"delta": args.delta, "mu": args.mu, "eps1": args.eps1,
              "sweep": None if args.sweep is None else args.sweep.tolist()}
    if args.sweep is not None:
        cfg = DesignConfig(args.delta, args.sweep, args.mu, _options(args))
        sys_ = _load_system(args) if (args.system or args.paper_example) else None
        table = sweep_eps1(cfg, data=data, sys=sys_, workers=args.workers)
        return _sweep_outputs(args, out, table, "data-based", config, [args.data], started)
    cfg = DesignConfig(args.delta, args.eps1, args.mu, _options(args))
    return _single_design(
        args, out,
        lambda: design_data_based(data, cfg),
        lambda: build_data_lmi(data, DesignIneqInputs(args.delta, args.eps1, args.mu)),
        config, [args.data], started,
    )


def cmd_design_mb(args) -> int:
    started = _now()
    sys_ = _load_system(args)
    out = _out_path(args.out)
    inputs = [args.system] if args.system and not args.paper_example else []
    config = {"mu": args.mu, "eps1": args.eps1, "paper_example": args.paper_example,
              "sweep": None if args.sweep is None else args.sweep.tolist()}
    if args.sweep is not None:
        cfg = DesignConfig(EXAMPLE_DELTA, args.sweep, args.mu, _options(args))
        table = sweep_eps1(cfg, sys=sys_, workers=args.workers)
        return _sweep_outputs(args, out, table, "model-based", config, inputs, started)
    return _single_design(
        args, out,
        lambda: design_model_based(sys_, args.eps1, args.mu, _options(args)),
        lambda: build_model_lmi(sys_, args.eps1, args.mu),
        config, inputs, started,
    )


def cmd_verify(args) -> int:
    started = _now()
    design = DesignResult.from_dict(io.read_json(args.design))
    sys_ = _load_system(args)
    if not design.ok:
        print(f"design status is {design.status.value}; nothing to verify", file=sys.stderr)
        return EXIT_VERIFY
    delta = args.delta if args.delta is not None else design.delta
    report = verify_design(design, sys_, delta, args.samples, args.num_d, args.starts, args.horizon, args.seed)
    out = _out_path(args.out)
    io.write_json(out, report.to_dict())
    print(report.summary())
    inputs = [args.design] + ([args.system] if args.system and not args.paper_example else [])
    _write_manifest(args, out, [out], inputs,
                    {"delta": delta, "samples": args.samples, "num_D": args.num_d,
                     "starts": args.starts, "horizon": args.horizon}, started)
    return EXIT_OK if report.passed else EXIT_VERIFY


def _add_system_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--system", help="JSON file with A, B, D")
    g.add_argument("--paper-example", action="store_true",
                   help="use the built-in two-state example system")


def _add_eps_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--eps1", type=_positive_float, help="fixed multiplier eps1 > 0")
    g.add_argument("--sweep", type=_grid, metavar="LO:HI:POINTS",
                   help="log-spaced line search over eps1, e.g. 1e-3:1e2:50")
    p.add_argument("--mu", type=float, default=1.0, help="contraction factor in (0, 1] (default 1)")
    p.add_argument("--workers", type=_positive_int, default=None, help="threads for sweeps")
    p.add_argument("--trace", action="store_true", help="write the solver iteration trace as CSV")
    p.add_argument("--dump-problem", metavar="FILE", help="write the maxdet problem as JSON (single eps1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bilinear-ddc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("experiment", help="run the open-loop experiment and write the data record")
    _add_system_args(p)
    p.add_argument("--T", type=_positive_int, default=10, help="experiment length (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", help="initial state, comma separated (default: uniform in [-0.5, 0.5]^n)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("design", help="data-based design from a data record")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=_positive_float, required=True, help="bound on ||D||")
    _add_eps_args(p)
    _add_system_args(p, required=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("design-mb", help="model-based baseline design")
    _add_system_args(p)
    _add_eps_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design_mb)

    p = sub.add_parser("verify", help="sampling checks of a design against the true system")
    p.add_argument("--design", required=True)
    _add_system_args(p)
    p.add_argument("--delta", type=_positive_float, default=None)
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--num-d", type=_positive_int, default=50)
    p.add_argument("--starts", type=_positive_int, default=100)
    p.add_argument("--horizon", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "mu", 1.0) is not None and not 0 < getattr(args, "mu", 1.0) <= 1:
        parser.error("--mu must lie in (0, 1]")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, BilinearDDCError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
