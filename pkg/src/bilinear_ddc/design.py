"""Data-based and model-based controller design and the ``eps1`` line search."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import io
from .data import DataRecord, diagnose
from .errors import InvalidArgument, NotFound, PreconditionError
from .lmi import (
    DesignIneqInputs,
    build_data_lmi,
    build_model_lmi,
    read_matrix,
    read_symmetric,
)
from .maxdet import Solution, SolverOptions, Status, solve
from .system import BilinearSystem, ClosedLoopData, consistency_tolerance, symmetric_inverse

DATA_BASED = "data-based"
MODEL_BASED = "model-based"


def default_grid() -> np.ndarray:
    return np.logspace(-3, 2, 50)


def parse_grid(spec: str) -> np.ndarray:
    """``"lo:hi:points"`` -> log-spaced grid, e.g. ``"1e-3:1e2:50"``."""
    try:
        lo, hi, pts = spec.split(":")
        lo, hi, pts = float(lo), float(hi), int(pts)
    except ValueError as exc:
        raise InvalidArgument(f"grid must look like lo:hi:points, got {spec!r}") from exc
    if not (0 < lo <= hi) or pts < 1:
        raise InvalidArgument("grid needs 0 < lo <= hi and points >= 1")
    return np.logspace(np.log10(lo), np.log10(hi), pts)


def delta_from_system(sys: BilinearSystem, overapprox: float = 0.2) -> float:
    """Norm bound ``(1 + overapprox) * ||D||_2`` for tests with a known plant."""
    return (1.0 + overapprox) * float(np.linalg.norm(sys.D, 2))


@dataclass(frozen=True)
class DesignConfig:
    delta: float
    eps1: float | Sequence[float] = 0.8
    mu: float = 1.0
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidArgument("delta must be > 0")
        if not 0 < self.mu <= 1:
            raise InvalidArgument("mu must lie in (0, 1]")
        grid = np.atleast_1d(np.asarray(self.eps1, dtype=float))
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise InvalidArgument("eps1 must be positive (a grid must be strictly increasing)")

    @property
    def grid(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.eps1, dtype=float))

    def at(self, eps1: float) -> "DesignConfig":
        return DesignConfig(self.delta, float(eps1), self.mu, self.options)


@dataclass
class DesignResult:
    status: Status
    provenance: str
    eps1: float
    mu: float = 1.0
    delta: float | None = None
    K: np.ndarray | None = None
    P: np.ndarray | None = None
    Q: np.ndarray | None = None
    G_K: np.ndarray | None = None
    eps2: float | None = None
    logdetP: float | None = None
    closed_loop: ClosedLoopData | None = None
    message: str = ""
    solution: Solution | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def detP(self) -> float | None:
        return None if self.logdetP is None else float(np.exp(self.logdetP))

    def to_dict(self) -> dict:
        def mat(M):
            return None if M is None else np.asarray(M).tolist()

        return {
            "format": "bilinear-ddc/design/1",
            "provenance": self.provenance,
            "status": self.status.value,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "mu": self.mu,
            "delta": self.delta,
            "logdetP": self.logdetP,
            "detP": self.detP,
            "K": mat(self.K),
            "P": mat(self.P),
            "Q": mat(self.Q),
            "G_K": mat(self.G_K),
            "closed_loop": None if self.closed_loop is None else self.closed_loop.to_dict(),
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignResult":
        def mat(key):
            return None if d.get(key) is None else io.as_matrix_field(d[key], key)

        cl = d.get("closed_loop")
        return cls(
            status=Status(d["status"]),
            provenance=d["provenance"],
            eps1=float(d["eps1"]),
            mu=float(d.get("mu", 1.0)),
            delta=d.get("delta"),
            K=mat("K"),
            P=mat("P"),
            Q=mat("Q"),
            G_K=mat("G_K"),
            eps2=d.get("eps2"),
            logdetP=d.get("logdetP"),
            closed_loop=None if cl is None else ClosedLoopData.from_dict(cl),
            message=d.get("message", ""),
        )

    def csv_row(self) -> tuple[list[str], list]:
        header = ["provenance", "status", "eps1", "eps2", "mu", "delta", "detP", "logdetP"]
        row = [self.provenance, self.status.value, self.eps1, self.eps2, self.mu, self.delta, self.detP, self.logdetP]
        if self.K is not None:
            header += [f"K_{j}" for j in range(self.K.size)]
            row += [float(v) for v in self.K.ravel()]
        if self.P is not None:
            n = self.P.shape[0]
            header += [f"P_{i}{j}" for i in range(n) for j in range(n)]
            row += [float(v) for v in self.P.ravel()]
        return header, row

    def save(self, path, csv_path=None):
        io.write_json(path, self.to_dict())
        if csv_path is not None:
            header, row = self.csv_row()
            io.write_rows_csv(csv_path, header, [row])


def _logdet(P) -> float:
    sign, val = np.linalg.slogdet(P)
    return float(val) if sign > 0 else float("nan")


def design_data_based(data: DataRecord, cfg: DesignConfig) -> DesignResult:
    """Solve the data-based maxdet problem at one ``eps1`` and extract the design.

    On success ``G_K = Y' P^-1``, ``K = U0 G_K`` and ``Q = P^-1``.
    """
    if cfg.grid.size != 1:
        raise InvalidArgument("design_data_based needs a single eps1; use sweep_eps1 for grids")
    eps1 = float(cfg.grid[0])
    diag = diagnose(data)
    if not diag.full_rank(data.n):
        raise PreconditionError("; ".join(diag.warnings) or "X0 is not full row rank")
    problem = build_data_lmi(data, DesignIneqInputs(cfg.delta, eps1, cfg.mu))
    sol = solve(problem, cfg.options)
    res = DesignResult(sol.status, DATA_BASED, eps1, cfg.mu, cfg.delta, message=sol.message, solution=sol)
    if not sol.ok:
        return res
    n, T = data.n, data.T
    P = read_symmetric(sol.assignment, "P", n)
    Y = read_matrix(sol.assignment, "Y", (n, T))
    Q = symmetric_inverse(P)
    G_K = Y.T @ Q
    res.P, res.Q, res.G_K = P, Q, G_K
    res.K = data.U0 @ G_K
    res.eps2 = sol.assignment["eps2"]
    res.logdetP = _logdet(P)
    res.closed_loop = ClosedLoopData.from_data(data, G_K)
    gk_res = np.linalg.norm(data.X0 @ G_K - np.eye(n))
    if gk_res > consistency_tolerance(T):
        res.status = Status.NUMERICAL_TROUBLE
        res.message = f"||X0 G_K - I||_F = {gk_res:.3e} exceeds tolerance"
    return res


def design_model_based(sys: BilinearSystem, eps1: float, mu: float = 1.0, options: SolverOptions | None = None) -> DesignResult:
    """Model-based baseline using the true ``(A, B, D)``; ``K = y' P^-1``."""
    if not eps1 > 0:
        raise InvalidArgument("eps1 must be > 0")
    sol = solve(build_model_lmi(sys, eps1, mu), options or SolverOptions())
    res = DesignResult(sol.status, MODEL_BASED, float(eps1), mu, message=sol.message, solution=sol)
    if not sol.ok:
        return res
    P = read_symmetric(sol.assignment, "P", sys.n)
    y = read_matrix(sol.assignment, "y", (sys.n, 1))
    Q = symmetric_inverse(P)
    res.P, res.Q = P, Q
    res.K = y.T @ Q
    res.logdetP = _logdet(P)
    res.closed_loop = ClosedLoopData.from_model(sys, res.K)
    return res


@dataclass
class SweepRow:
    eps1: float
    data_based: DesignResult | None = None
    model_based: DesignResult | None = None

    @property
    def rel_gain_diff(self) -> float | None:
        """``||K_DB - K_MB|| / ||K_MB||`` when both designs succeeded."""
        db, mb = self.data_based, self.model_based
        if db is None or mb is None or not (db.ok and mb.ok):
            return None
        return float(np.linalg.norm(db.K - mb.K) / np.linalg.norm(mb.K))


@dataclass
class SweepTable:
    rows: list[SweepRow]

    @property
    def pipelines(self) -> list[str]:
        out = []
        if any(r.data_based is not None for r in self.rows):
            out.append(DATA_BASED)
        if any(r.model_based is not None for r in self.rows):
            out.append(MODEL_BASED)
        return out

    def results(self, provenance: str) -> list[DesignResult]:
        attr = "data_based" if provenance == DATA_BASED else "model_based"
        return [getattr(r, attr) for r in self.rows if getattr(r, attr) is not None]

    def feasible(self, provenance: str = DATA_BASED) -> list[DesignResult]:
        return [r for r in self.results(provenance) if r.ok]

    def argmax_row(self, provenance: str = DATA_BASED) -> int | None:
        results = self.results(provenance)
        best = None
        for k, res in enumerate(results):
            if res.ok and (best is None or res.logdetP > results[best].logdetP):
                best = k
        return best

    def csv(self) -> tuple[list[str], list[list]]:
        both = len(self.pipelines) == 2
        n = None
        for res in (*self.results(DATA_BASED), *self.results(MODEL_BASED)):
            if res.K is not None:
                n = res.K.size
                break
        n = n or 0
        header = ["eps1"]
        tags = [(DATA_BASED, "db"), (MODEL_BASED, "mb")] if both else [(p, None) for p in self.pipelines]
        for _, tag in tags:
            suffix = f"_{tag}" if tag else ""
            header += [f"status{suffix}", f"detP{suffix}", f"logdetP{suffix}"]
            header += [f"K{suffix}_{j}" for j in range(n)]
        header.append("rel_gain_diff")
        rows = []
        for r in self.rows:
            row = [r.eps1]
            for prov, _ in tags:
                res = r.data_based if prov == DATA_BASED else r.model_based
                row += [res.status.value, res.detP if res.ok else None, res.logdetP if res.ok else None]
                row += [float(v) for v in res.K.ravel()] if res.ok else [None] * n
            row.append(r.rel_gain_diff)
            rows.append(row)
        return header, rows

    def to_dict(self) -> dict:
        return {
            "format": "bilinear-ddc/sweep/1",
            "rows": [
                {
                    "eps1": r.eps1,
                    "data_based": None if r.data_based is None else r.data_based.to_dict(),
                    "model_based": None if r.model_based is None else r.model_based.to_dict(),
                    "rel_gain_diff": r.rel_gain_diff,
                }
                for r in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepTable":
        rows = []
        for r in d["rows"]:
            db = None if r.get("data_based") is None else DesignResult.from_dict(r["data_based"])
            mb = None if r.get("model_based") is None else DesignResult.from_dict(r["model_based"])
            rows.append(SweepRow(float(r["eps1"]), db, mb))
        return cls(rows)

    def save(self, path, csv_path=None):
        io.write_json(path, self.to_dict())
        if csv_path is not None:
            header, rows = self.csv()
            io.write_rows_csv(csv_path, header, rows)


def sweep_eps1(
    cfg: DesignConfig,
    data: DataRecord | None = None,
    sys: BilinearSystem | None = None,
    workers: int | None = None,
) -> SweepTable:
    """One design per grid point of ``cfg.eps1`` for each supplied pipeline.

    ``data`` enables the data-based design, ``sys`` the model-based one.
    Failures are recorded as rows, never raised (except a rank-deficient
    record, which fails every row identically and is raised once).
    Rows come back in grid order whatever the completion order.
    """
    if data is None and sys is None:
        raise InvalidArgument("sweep needs a data record, a system, or both")
    grid = sorted(float(e) for e in cfg.grid)
    if data is not None:
        diag = diagnose(data)
        if not diag.full_rank(data.n):
            raise PreconditionError("; ".join(diag.warnings))

    def one(eps1):
        db = design_data_based(data, cfg.at(eps1)) if data is not None else None
        mb = design_model_based(sys, eps1, cfg.mu, cfg.options) if sys is not None else None
        return SweepRow(eps1, db, mb)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, grid))
    else:
        rows = [one(e) for e in grid]
    return SweepTable(rows)


def best_design(table: SweepTable, provenance: str = DATA_BASED) -> DesignResult:
    """Feasible design with the largest ``det P``; ties go to the smaller ``eps1``."""
    best = None
    for res in sorted(table.results(provenance), key=lambda r: r.eps1):
        if res.ok and (best is None or res.logdetP > best.logdetP):
            best = res
    if best is None:
        raise NotFound(f"no feasible {provenance} design in the sweep")
    return best
