"""Sampling oracles for a finished design.

None of these checks is a proof; the LMI certificate is.  They exist to catch
assembly and extraction bugs by evaluating the claims on concrete points:
Lyapunov decrease on the ellipsoid (through the increment matrix and through
a direct closed-loop step), robustness over sampled ``||D|| <= delta``, and
convergence of simulated trajectories started inside the ellipsoid.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .design import DesignResult
from .errors import InternalConsistencyError, InvalidArgument, PreconditionError
from .system import (
    BilinearSystem,
    ClosedLoopData,
    Ellipsoid,
    data_step_batch,
    nd_matrix_batch,
    sample_ellipsoid,
)

BOUNDARY_SHARE = 0.7
EPS_CONV = 1e-8
DEFAULT_HORIZON = 200


@dataclass
class VerificationReport:
    seed: int = 0
    mu: float = 1.0
    samples: int = 0
    worst_nd_eig: float | None = None
    worst_decrease: float | None = None
    gain_consistent: bool | None = None
    num_D: int = 0
    robust_worst_nd_eig: float | None = None
    robust_worst_decrease: float | None = None
    basin_starts: int = 0
    horizon: int = 0
    basin_converged_fraction: float | None = None
    basin_exits: int = 0
    basin_monotone_violations: int = 0

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        out = VerificationReport(**asdict(self))
        blank = VerificationReport()
        for f in fields(self):
            if f.name in ("seed", "mu"):
                continue
            val = getattr(other, f.name)
            if val is not None and val != getattr(blank, f.name):
                setattr(out, f.name, val)
        return out

    def checks(self) -> dict[str, bool]:
        out = {}
        if self.worst_nd_eig is not None:
            out["increment matrix negative on E_Q"] = self.worst_nd_eig < 0
            out["Lyapunov decrease on E_Q"] = self.worst_decrease < 0
        if self.gain_consistent is not None:
            out["gain matches closed-loop data"] = self.gain_consistent
        if self.robust_worst_nd_eig is not None:
            out["robust over sampled ||D|| <= delta"] = (
                self.robust_worst_nd_eig < 0 and self.robust_worst_decrease < 0
            )
        if self.basin_converged_fraction is not None:
            out["simulated starts converge"] = self.basin_converged_fraction == 1.0
            out["trajectories stay in E_Q"] = self.basin_exits == 0
            out["V strictly decreasing along trajectories"] = self.basin_monotone_violations == 0
        return out

    @property
    def passed(self) -> bool:
        checks = self.checks()
        return bool(checks) and all(checks.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = self.checks()
        d["passed"] = self.passed
        return d

    def summary(self) -> str:
        lines = [f"{'PASS' if ok else 'FAIL'}  {name}" for name, ok in self.checks().items()]
        for key in ("worst_nd_eig", "worst_decrease", "robust_worst_nd_eig", "robust_worst_decrease",
                    "basin_converged_fraction"):
            val = getattr(self, key)
            if val is not None:
                lines.append(f"      {key} = {val:.6g}")
        return "\n".join(lines)


def _require(result: DesignResult, closed_loop: ClosedLoopData | None):
    if not result.ok:
        raise PreconditionError(f"design status is {result.status.value}, not optimal")
    cl = closed_loop if closed_loop is not None else result.closed_loop
    if cl is None:
        raise PreconditionError("design carries no closed-loop data; pass closed_loop")
    return Ellipsoid(result.Q), cl


def _ellipsoid_points(E: Ellipsoid, samples: int, rng) -> np.ndarray:
    nb = int(round(BOUNDARY_SHARE * samples))
    parts = []
    if nb:
        parts.append(sample_ellipsoid(E, nb, "boundary", rng))
    if samples - nb:
        parts.append(sample_ellipsoid(E, samples - nb, "interior", rng))
    return np.vstack(parts)


def _decrease_on_points(cl, E, D, xs, mu):
    """(max lambda_max(N), max normalized increment) over the rows of ``xs``."""
    Q = E.Q
    N = nd_matrix_batch(cl, Q, D, xs, mu)
    lam = np.linalg.eigvalsh(N)[:, -1]
    quad = np.einsum("ki,kij,kj->k", xs, N, xs)
    xp = data_step_batch(cl, D, xs)
    v = np.einsum("ki,ij,kj->k", xs, Q, xs)
    vp = np.einsum("ki,ij,kj->k", xp, Q, xp)
    inc = vp - mu * v
    scale = vp + v
    disagree = np.abs(quad - inc) > 1e-9 * scale
    signs = (np.sign(quad) != np.sign(inc)) & (np.abs(inc) > 1e-12 * scale)
    if np.any(disagree | signs):
        k = int(np.argmax(disagree | signs))
        raise InternalConsistencyError(
            f"increment matrix gives {quad[k]:.6e} but a direct step gives {inc[k]:.6e} at x={xs[k]}"
        )
    return float(lam.max()), float(np.max(inc / v))


def verify_decrease(result: DesignResult, D, samples: int = 1000, seed=0,
                    closed_loop: ClosedLoopData | None = None) -> VerificationReport:
    """Check ``V(x+) - mu V(x) < 0`` on ``samples`` points of ``E_Q`` for one ``D``.

    70% of the points lie on the boundary, the rest inside; the origin is
    never drawn.  ``worst_decrease`` is normalized by ``V(x)``.
    """
    if samples < 1:
        raise InvalidArgument("samples must be >= 1")
    E, cl = _require(result, closed_loop)
    D = np.asarray(D, dtype=float).reshape(cl.n, cl.n)
    if result.delta is not None and np.linalg.norm(D, 2) > result.delta * (1 + 1e-12):
        raise InvalidArgument(f"||D|| = {np.linalg.norm(D, 2):.4g} exceeds delta = {result.delta:.4g}")
    rng = np.random.default_rng(seed)
    xs = _ellipsoid_points(E, samples, rng)
    worst_eig, worst_dec = _decrease_on_points(cl, E, D, xs, result.mu)
    K = np.asarray(result.K).reshape(1, -1)
    consistent = bool(np.linalg.norm(cl.Kc - K) <= 1e-9 * (1.0 + np.linalg.norm(K)))
    return VerificationReport(seed=int(seed) if np.isscalar(seed) else 0, mu=result.mu, samples=samples,
                              worst_nd_eig=worst_eig, worst_decrease=worst_dec, gain_consistent=consistent)


def sample_norm_ball(n: int, delta: float, count: int, rng) -> np.ndarray:
    """``count`` matrices with ``||D||_2 <= delta``; every fifth one sits on the sphere."""
    out = np.zeros((count, n, n))
    if delta == 0:
        return out
    for i in range(count):
        G = rng.standard_normal((n, n))
        G /= np.linalg.norm(G, 2)
        radius = delta if i % 5 == 0 else delta * rng.random()
        out[i] = radius * G
    return out


def verify_robust(result: DesignResult, delta: float | None = None, num_D: int = 50, samples: int = 1000,
                  seed=0, D_samples=None, closed_loop: ClosedLoopData | None = None) -> VerificationReport:
    """Worst decrease over ``num_D`` sampled ``D`` (or the explicit ``D_samples``)."""
    E, cl = _require(result, closed_loop)
    delta = result.delta if delta is None else delta
    if delta is None or delta < 0:
        raise InvalidArgument("a norm bound delta >= 0 is required")
    rng = np.random.default_rng(seed)
    Ds = (np.asarray(D_samples, dtype=float).reshape(-1, cl.n, cl.n) if D_samples is not None
          else sample_norm_ball(cl.n, delta, num_D, rng))
    xs = _ellipsoid_points(E, samples, rng)
    worst_eig, worst_dec = -np.inf, -np.inf
    for D in Ds:
        e, d = _decrease_on_points(cl, E, D, xs, result.mu)
        worst_eig, worst_dec = max(worst_eig, e), max(worst_dec, d)
    return VerificationReport(seed=int(seed) if np.isscalar(seed) else 0, mu=result.mu, num_D=len(Ds),
                              robust_worst_nd_eig=worst_eig, robust_worst_decrease=worst_dec)


def verify_basin(sys: BilinearSystem, result: DesignResult, starts: int = 100, horizon: int = DEFAULT_HORIZON,
                 seed=0, eps_conv: float = EPS_CONV, x0s=None) -> VerificationReport:
    """Simulate the true plant under ``u = K x`` from starts inside ``E_Q``.

    A start converges when ``||x(horizon)|| <= eps_conv * max(1, ||x(0)||)``.
    Exits from ``E_Q`` and non-decreasing steps of ``V`` are counted, not raised.
    """
    if not result.ok:
        raise PreconditionError(f"design status is {result.status.value}, not optimal")
    if starts < 1 or horizon < 1:
        raise InvalidArgument("starts and horizon must be >= 1")
    E = Ellipsoid(result.Q)
    Q, mu = E.Q, result.mu
    K = np.asarray(result.K, dtype=float).reshape(-1)
    if x0s is None:
        xs = sample_ellipsoid(E, starts, "interior", np.random.default_rng(seed))
    else:
        xs = np.atleast_2d(np.asarray(x0s, dtype=float))
    x_start = xs.copy()
    v = np.einsum("ki,ij,kj->k", xs, Q, xs)
    exited = np.zeros(len(xs), dtype=bool)
    nonmono = np.zeros(len(xs), dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(horizon):
            u = xs @ K
            xs = xs @ sys.A.T + np.outer(u, sys.B[:, 0]) + (xs @ sys.D.T) * u[:, None]
            vn = np.einsum("ki,ij,kj->k", xs, Q, xs)
            exited |= ~(vn <= 1.0 + 1e-12)
            nonmono |= ~(vn < mu * v + 1e-12) & (v > 0)
            v = vn
    final = np.linalg.norm(xs, axis=1)
    limit = eps_conv * np.maximum(1.0, np.linalg.norm(x_start, axis=1))
    converged = np.isfinite(final) & (final <= limit)
    return VerificationReport(
        seed=int(seed) if np.isscalar(seed) else 0,
        mu=mu,
        basin_starts=len(xs),
        horizon=horizon,
        basin_converged_fraction=float(converged.mean()),
        basin_exits=int(exited.sum()),
        basin_monotone_violations=int(nonmono.sum()),
    )


def verify_design(result: DesignResult, sys: BilinearSystem | None = None, delta: float | None = None,
                  samples: int = 1000, num_D: int = 50, starts: int = 100, horizon: int = DEFAULT_HORIZON,
                  seed=0) -> VerificationReport:
    """All applicable checks; the true-``D`` and basin checks need ``sys``."""
    report = VerificationReport(seed=seed, mu=result.mu)
    if sys is not None:
        report = report.merge(verify_decrease(result, sys.D, samples, seed))
    delta = result.delta if delta is None else delta
    if delta is not None and result.provenance == "data-based":
        report = report.merge(verify_robust(result, delta, num_D, samples, seed + 1))
    if sys is not None:
        report = report.merge(verify_basin(sys, result, starts, horizon, seed + 2))
    return report
