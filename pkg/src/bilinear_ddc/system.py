"""Bilinear dynamics, quadratic Lyapunov quantities and closed-loop representations.

The plant is ``x+ = A x + B u + D x u`` with scalar input ``u``.  Under a
linear feedback ``u = K x`` the closed loop can be written either from the
model, ``(A + B K + D x K) x``, or, when ``K = U0 G_K`` and ``X0 G_K = I``,
purely from recorded data up to the unknown ``D``::

    x+ = (X1 - D V0 + D x U0) G_K x = (Ac + F D H + D x Kc) x

with ``Ac = X1 G_K``, ``F = I``, ``H = -V0 G_K`` and ``Kc = U0 G_K``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import CertificateViolation, InvalidArgument, SimulationOverflow

if TYPE_CHECKING:
    from .data import DataRecord

# Numerical example matrices (Bitsoris & Athanasopoulos test system).
EXAMPLE_A = np.array([[0.8, 0.5], [0.4, 1.2]])
EXAMPLE_B = np.array([[1.0], [2.0]])
EXAMPLE_D = np.array([[0.45, 0.45], [0.3, -0.3]])
# 1.2 * ||EXAMPLE_D||_2, i.e. a 20% over-approximation of the true norm.
EXAMPLE_DELTA = 0.7637


def _as_matrix(value, name, shape=None):
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise InvalidArgument(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise InvalidArgument(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _as_vector(value, n, name="x"):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise InvalidArgument(f"{name} must have length {n}, got {arr.size}")
    return arr


def consistency_tolerance(T: int) -> float:
    """Tolerance on ``||X0 G_K - I||_F`` before a reparametrization is accepted."""
    return 1e-8 * np.sqrt(T)


@dataclass(frozen=True)
class BilinearSystem:
    """Ground-truth matrices ``(A, B, D)`` of a single-input bilinear plant."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise InvalidArgument(f"A must be square, got {A.shape}")
        B = np.array(self.B, dtype=float).reshape(n, 1) if np.size(self.B) == n else None
        if B is None:
            raise InvalidArgument(f"B must have {n} entries, got shape {np.shape(self.B)}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", _as_matrix(B, "B", (n, 1)))
        object.__setattr__(self, "D", _as_matrix(self.D, "D", (n, n)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def to_dict(self) -> dict:
        return {"n": self.n, "A": self.A.tolist(), "B": self.B.tolist(), "D": self.D.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BilinearSystem":
        return cls(d["A"], d["B"], d["D"])


def example_system() -> BilinearSystem:
    """The two-state open-loop unstable example used throughout the tests."""
    return BilinearSystem(EXAMPLE_A, EXAMPLE_B, EXAMPLE_D)


def _symmetric_pd(Q, name="Q"):
    Q = np.array(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise InvalidArgument(f"{name} must be square, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise InvalidArgument(f"{name} has non-finite entries")
    scale = max(1.0, np.abs(Q).max())
    if np.abs(Q - Q.T).max() > 1e-10 * scale:
        raise InvalidArgument(f"{name} is not symmetric")
    Q = 0.5 * (Q + Q.T)
    if np.linalg.eigvalsh(Q)[0] <= 0.0:
        raise InvalidArgument(f"{name} is not positive definite")
    return Q


@dataclass(frozen=True)
class Ellipsoid:
    """The sublevel set ``{x : x' Q x <= 1}`` of ``V(x) = x' Q x``."""

    Q: np.ndarray

    def __post_init__(self):
        Q = _symmetric_pd(self.Q)
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)

    @classmethod
    def from_P(cls, P) -> "Ellipsoid":
        return cls(symmetric_inverse(_symmetric_pd(P, "P")))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def sqrt(self) -> np.ndarray:
        """Unique symmetric positive definite square root of ``Q``."""
        w, U = np.linalg.eigh(self.Q)
        return (U * np.sqrt(w)) @ U.T

    def inv_sqrt(self) -> np.ndarray:
        w, U = np.linalg.eigh(self.Q)
        return (U / np.sqrt(w)) @ U.T


def symmetric_inverse(P) -> np.ndarray:
    """Inverse of a symmetric matrix, re-projected onto the symmetric matrices."""
    Q = np.linalg.inv(P)
    return 0.5 * (Q + Q.T)


@dataclass(frozen=True)
class ClosedLoopData:
    """Closed-loop quantities ``(Ac, F, H, Kc)`` built from data and ``G_K``.

    ``G_K`` is ``None`` when the object was built from a known model, in which
    case ``Ac = A + B K`` and ``H = 0``.
    """

    Ac: np.ndarray
    F: np.ndarray
    H: np.ndarray
    Kc: np.ndarray
    G_K: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.Ac.shape[0]

    @classmethod
    def from_data(cls, data: "DataRecord", G_K) -> "ClosedLoopData":
        G_K = np.asarray(G_K, dtype=float)
        if G_K.shape != (data.T, data.n):
            raise InvalidArgument(f"G_K must have shape {(data.T, data.n)}, got {G_K.shape}")
        return cls(
            Ac=data.X1 @ G_K,
            F=np.eye(data.n),
            H=-data.V0 @ G_K,
            Kc=data.U0 @ G_K,
            G_K=G_K,
        )

    @classmethod
    def from_model(cls, sys: BilinearSystem, K) -> "ClosedLoopData":
        K = np.asarray(K, dtype=float).reshape(1, sys.n)
        return cls(Ac=sys.A + sys.B @ K, F=np.eye(sys.n), H=np.zeros((sys.n, sys.n)), Kc=K)

    def to_dict(self) -> dict:
        d = {"Ac": self.Ac.tolist(), "H": self.H.tolist(), "Kc": self.Kc.tolist()}
        if self.G_K is not None:
            d["G_K"] = self.G_K.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClosedLoopData":
        Ac = np.array(d["Ac"], dtype=float)
        G_K = np.array(d["G_K"], dtype=float) if d.get("G_K") is not None else None
        return cls(
            Ac=Ac,
            F=np.eye(Ac.shape[0]),
            H=np.array(d["H"], dtype=float),
            Kc=np.array(d["Kc"], dtype=float).reshape(1, -1),
            G_K=G_K,
        )


def step(sys: BilinearSystem, x, u: float) -> np.ndarray:
    x = _as_vector(x, sys.n)
    u = float(u)
    return sys.A @ x + sys.B[:, 0] * u + (sys.D @ x) * u


def simulate(sys: BilinearSystem, x0, inputs: Iterable[float]) -> np.ndarray:
    """Iterate the dynamics; row ``k`` of the result is ``x(k)``.

    Raises :class:`SimulationOverflow` carrying the index of the first step
    whose successor state is not finite.
    """
    x = _as_vector(x0, sys.n, "x0")
    traj = [x]
    with np.errstate(over="ignore", invalid="ignore"):
        for k, u in enumerate(inputs):
            if not np.isfinite(u):
                raise InvalidArgument(f"input {k} is not finite")
            x = step(sys, x, u)
            if not np.all(np.isfinite(x)):
                raise SimulationOverflow(f"state became non-finite at step {k}", step=k)
            traj.append(x)
    return np.array(traj)


def closed_loop_matrix_model(sys: BilinearSystem, K, x) -> np.ndarray:
    K = np.asarray(K, dtype=float).reshape(1, sys.n)
    x = _as_vector(x, sys.n)
    return sys.A + sys.B @ K + np.outer(sys.D @ x, K[0])


def closed_loop_matrix_data(data: "DataRecord", G_K, D, x) -> np.ndarray:
    """``g_D(x) = (X1 - D V0 + D x U0) G_K``; requires ``X0 G_K = I``."""
    G_K = np.asarray(G_K, dtype=float)
    D = np.asarray(D, dtype=float)
    x = _as_vector(x, data.n)
    if G_K.shape != (data.T, data.n) or D.shape != (data.n, data.n):
        raise InvalidArgument("dimension mismatch between data, G_K and D")
    residual = np.linalg.norm(data.X0 @ G_K - np.eye(data.n))
    if residual > consistency_tolerance(data.T):
        raise CertificateViolation(f"||X0 G_K - I||_F = {residual:.3e} exceeds tolerance", residual)
    return (data.X1 - D @ data.V0 + np.outer(D @ x, data.U0[0])) @ G_K


def lyapunov_value(E: Ellipsoid, x) -> float:
    x = _as_vector(x, E.n)
    return float(x @ E.Q @ x)


def nd_matrix(cl: ClosedLoopData, E: Ellipsoid, D, x, mu: float = 1.0) -> np.ndarray:
    """Matrix whose quadratic form in ``x`` is ``V(g_D(x) x) - mu V(x)``.

    With ``mu = 1`` this is the Lyapunov increment matrix ``N_D(x)``.
    """
    D = np.asarray(D, dtype=float)
    x = _as_vector(x, cl.n)
    Q = E.Q
    M = cl.Ac + cl.F @ D @ cl.H
    W = np.outer(D @ x, cl.Kc[0])
    N = M.T @ Q @ M - mu * Q + M.T @ Q @ W + W.T @ Q @ M + W.T @ Q @ W
    return 0.5 * (N + N.T)


def nd_matrix_batch(cl: ClosedLoopData, Q, D, xs, mu: float = 1.0) -> np.ndarray:
    """Vectorized :func:`nd_matrix` over the rows of ``xs`` (shape ``(k, n)``)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    M = cl.Ac + cl.F @ D @ cl.H
    # W(x) = (D x) Kc is rank one, so every W term is an outer product with Kc
    k = cl.Kc[0]
    w = xs @ D.T
    QM = Q @ M
    cross = (w @ QM)[:, :, None] * k[None, None, :]
    N = (M.T @ QM - mu * Q)[None] + cross + cross.transpose(0, 2, 1)
    N += np.sum((w @ Q) * w, axis=1)[:, None, None] * np.outer(k, k)[None]
    return 0.5 * (N + N.transpose(0, 2, 1))


def data_step_batch(cl: ClosedLoopData, D, xs) -> np.ndarray:
    """One step ``x+ = (Ac + F D H + D x Kc) x`` for every row of ``xs``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    M = cl.Ac + cl.F @ D @ cl.H
    u = xs @ cl.Kc[0]
    return xs @ M.T + (xs @ D.T) * u[:, None]


def ellipsoid_contains(E: Ellipsoid, x) -> bool:
    return lyapunov_value(E, x) <= 1.0


def sample_ellipsoid(E: Ellipsoid, count: int, mode: str = "boundary", seed=0) -> np.ndarray:
    """Draw ``count`` points of ``E`` as rows of an array.

    Boundary points are ``Q^{-1/2} s`` with ``s`` uniform on the unit sphere;
    interior points are additionally scaled by ``r^{1/n}``, ``r`` uniform in
    ``(0, 1]``, which makes them uniform in volume and never the origin.
    ``seed`` is an integer (PCG64 stream) or a ``numpy.random.Generator``.
    """
    if count < 1:
        raise InvalidArgument("count must be >= 1")
    if mode not in ("boundary", "interior"):
        raise InvalidArgument(f"unknown sampling mode {mode!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = E.n
    s = rng.standard_normal((count, n))
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    if mode == "interior":
        r = 1.0 - rng.random(count)
        s *= r[:, None] ** (1.0 / n)
    pts = s @ E.inv_sqrt()
    if mode == "boundary":
        # Land a few ulps inside so membership holds under any evaluation order.
        pts /= np.sqrt(np.einsum("ki,ij,kj->k", pts, E.Q, pts))[:, None]
        pts *= 1.0 - 8 * n * np.finfo(float).eps
    else:
        v = np.einsum("ki,ij,kj->k", pts, E.Q, pts)
        edge = v > 1.0 - 8 * n * np.finfo(float).eps
        pts[edge] *= (1.0 - 8 * n * np.finfo(float).eps) / np.sqrt(v[edge])[:, None]
    return pts
