"""Offline open-loop experiment and the data matrices ``U0, X0, X1, V0``."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import io
from .errors import ExperimentDiverged, InvalidArgument, SimulationOverflow, ValidationError
from .system import BilinearSystem, simulate

DEFAULT_T = 10
COND_WARN = 1e8


def assemble_v0(U0, X0) -> np.ndarray:
    """Column ``k`` is ``X0[:, k] * U0[k]``."""
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    X0 = np.asarray(X0, dtype=float)
    if U0.shape[0] != 1 or U0.shape[1] != X0.shape[1]:
        raise InvalidArgument(f"U0 {U0.shape} and X0 {X0.shape} have mismatched widths")
    return X0 * U0


@dataclass(frozen=True)
class DataRecord:
    U0: np.ndarray
    X0: np.ndarray
    X1: np.ndarray
    V0: np.ndarray

    def __post_init__(self):
        mats = {}
        for name in ("U0", "X0", "X1", "V0"):
            M = np.atleast_2d(np.array(getattr(self, name), dtype=float))
            if M.ndim != 2:
                raise ValidationError(f"{name} must be a matrix", name)
            if not np.all(np.isfinite(M)):
                raise ValidationError(f"{name} has non-finite entries", name)
            M.setflags(write=False)
            mats[name] = M
        n, T = mats["X0"].shape
        if mats["U0"].shape != (1, T):
            raise ValidationError(f"U0 must be 1x{T}, got {mats['U0'].shape}", "U0")
        for name in ("X1", "V0"):
            if mats[name].shape != (n, T):
                raise ValidationError(f"{name} must be {n}x{T}, got {mats[name].shape}", name)
        expected = mats["X0"] * mats["U0"]
        tol = 1e-12 * (1.0 + np.abs(expected).max(initial=0.0))
        if np.abs(mats["V0"] - expected).max(initial=0.0) > tol:
            raise ValidationError("V0 columns are not X0 columns scaled by U0", "V0")
        for name, M in mats.items():
            object.__setattr__(self, name, M)

    @property
    def T(self) -> int:
        return self.X0.shape[1]

    @property
    def n(self) -> int:
        return self.X0.shape[0]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "n": self.n,
            "U0": self.U0.tolist(),
            "X0": self.X0.tolist(),
            "X1": self.X1.tolist(),
            "V0": self.V0.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DataRecord":
        if not isinstance(d, dict):
            raise ValidationError("data record must be a JSON object")
        for key in ("T", "n", "U0", "X0", "X1", "V0"):
            if key not in d:
                raise ValidationError(f"missing field {key!r}", key)
        mats = {k: io.as_matrix_field(d[k], k) for k in ("U0", "X0", "X1", "V0")}
        rec = cls(**mats)
        if rec.T != d["T"]:
            raise ValidationError(f"T={d['T']} does not match matrix width {rec.T}", "T")
        if rec.n != d["n"]:
            raise ValidationError(f"n={d['n']} does not match matrix height {rec.n}", "n")
        return rec

    @classmethod
    def from_trajectory(cls, states, inputs) -> "DataRecord":
        """Build the record from ``x(0..T)`` (rows) and ``u(0..T-1)``."""
        states = np.asarray(states, dtype=float)
        U0 = np.asarray(inputs, dtype=float).reshape(1, -1)
        X0 = states[:-1].T
        return cls(U0=U0, X0=X0, X1=states[1:].T, V0=assemble_v0(U0, X0))


@dataclass
class DataDiagnostics:
    rank_X0: int
    sigma_min: float
    cond_X0: float
    max_state_norm: float
    warnings: list[str] = field(default_factory=list)

    @property
    def ill_conditioned(self) -> bool:
        return self.cond_X0 > COND_WARN

    def full_rank(self, n: int) -> bool:
        return self.rank_X0 == n

    def to_dict(self) -> dict:
        return {
            "rank_X0": self.rank_X0,
            "sigma_min": self.sigma_min,
            "cond_X0": self.cond_X0 if np.isfinite(self.cond_X0) else None,
            "max_state_norm": self.max_state_norm,
            "ill_conditioned": self.ill_conditioned,
            "warnings": list(self.warnings),
        }


def uniform_inputs(seed=0, low=-1.0, high=1.0) -> Callable[[int], float]:
    """I.i.d. uniform input source; call with the step index."""
    rng = np.random.default_rng(seed)
    return lambda k: float(rng.uniform(low, high))


def run_experiment(sys: BilinearSystem, x0=None, input_source=None, T: int = DEFAULT_T, seed=0) -> DataRecord:
    """Simulate ``T`` open-loop steps and collect the data matrices.

    ``input_source`` may be a callable of the step index, an iterable of
    scalars, or ``None`` for i.i.d. uniform inputs on ``[-1, 1]``.  A missing
    ``x0`` is drawn uniformly from ``[-0.5, 0.5]^n``.  Both defaults draw from
    one PCG64 stream seeded with ``seed`` (state first, then inputs).
    """
    if int(T) < 1:
        raise InvalidArgument("T must be >= 1")
    T = int(T)
    rng = np.random.default_rng(seed)
    if x0 is None:
        x0 = rng.uniform(-0.5, 0.5, sys.n)
    if input_source is None:
        inputs = rng.uniform(-1.0, 1.0, T)
    elif callable(input_source):
        inputs = np.array([float(input_source(k)) for k in range(T)])
    else:
        inputs = np.fromiter((float(u) for u in input_source), dtype=float, count=T)
    try:
        states = simulate(sys, x0, inputs)
    except SimulationOverflow as exc:
        raise ExperimentDiverged(f"experiment diverged at step {exc.step}", step=exc.step) from exc
    return DataRecord.from_trajectory(states, inputs)


def diagnose(data: DataRecord) -> DataDiagnostics:
    n, T = data.n, data.T
    sv = np.linalg.svd(data.X0, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    thresh = max(n, T) * smax * 1e-12
    rank = int(np.sum(sv > thresh)) if smax > 0 else 0
    sigma_min = float(sv[n - 1]) if T >= n else 0.0
    cond = smax / sigma_min if sigma_min > 0 else np.inf
    norms = np.linalg.norm(np.hstack([data.X0, data.X1]), axis=0)
    diag = DataDiagnostics(rank, sigma_min, float(cond), float(norms.max(initial=0.0)))
    if rank < n:
        diag.warnings.append(f"X0 has rank {rank} < n = {n}: no G_K with X0 G_K = I exists")
    if cond > COND_WARN:
        diag.warnings.append(f"X0 is ill-conditioned (cond = {cond:.3g})")
    return diag


def consistency_residual(data: DataRecord, sys: BilinearSystem) -> float:
    """``||X1 - A X0 - B U0 - D V0||_F``; needs the true system."""
    if sys.n != data.n:
        raise InvalidArgument("system and record dimensions differ")
    R = data.X1 - sys.A @ data.X0 - sys.B @ data.U0 - sys.D @ data.V0
    return float(np.linalg.norm(R))


def save(data: DataRecord, path):
    return io.write_json(path, data.to_dict())


def load(path) -> DataRecord:
    rec = DataRecord.from_dict(io.read_json(path))
    diag = diagnose(rec)
    if not diag.full_rank(rec.n):
        warnings.warn(f"{path}: " + "; ".join(diag.warnings), RuntimeWarning, stacklevel=2)
    return rec
