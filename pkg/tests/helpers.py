"""Small hand-built maxdet instances shared by the solver tests."""
import numpy as np

from bilinear_ddc.data import DataRecord
from bilinear_ddc.lmi import AffineSymmetricForm, MaxDetProblem
from bilinear_ddc.maxdet import SolverOptions, _center, barrier_function, phase1
from bilinear_ddc.system import BilinearSystem


def sym_basis(n):
    names, mats = [], []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            names.append(f"P[{i},{j}]")
            mats.append(E)
    return names, mats


def bound_problem(bound):
    """max log det P  s.t.  P - bound < 0, P symmetric."""
    bound = np.asarray(bound, dtype=float)
    names, mats = sym_basis(bound.shape[0])
    coeffs = dict(zip(names, mats))
    cons = AffineSymmetricForm(-bound, coeffs, label="P - bound")
    obj = AffineSymmetricForm(np.zeros_like(bound), coeffs, label="P")
    return MaxDetProblem(tuple(names), (cons,), obj, np.zeros((0, len(names))), np.zeros(0))


def diag_instance(rng):
    """Two scalar variables: max log(d1 d2) s.t. d1 A1 + d2 A2 - S < 0.

    ``S`` is rescaled so every feasible ``d_i`` stays below 2.
    """
    def pd():
        R = rng.uniform(-1, 1, (2, 2))
        return R @ R.T + 0.2 * np.eye(2)

    A1, A2, S = pd(), pd(), pd()
    bound = max(np.linalg.eigvalsh(S)[-1] / np.linalg.eigvalsh(A)[0] for A in (A1, A2))
    S = S * (2.0 / bound)
    cons = AffineSymmetricForm(-S, {"d1": A1, "d2": A2}, label="coupling")
    obj = AffineSymmetricForm(np.zeros((2, 2)), {"d1": np.diag([1.0, 0.0]), "d2": np.diag([0.0, 1.0])})
    problem = MaxDetProblem(("d1", "d2"), (cons,), obj, np.zeros((0, 2)), np.zeros(0))
    return problem, (A1, A2, S)


def diag_grid_oracle(A1, A2, S, margin, step=1e-3, top=2.0):
    """Best -log(d1 d2) over a grid of feasible points (closed-form 2x2 eigenvalues)."""
    g = np.arange(step, top + step / 2, step)
    d1, d2 = np.meshgrid(g, g, indexing="ij")
    a = d1 * A1[0, 0] + d2 * A2[0, 0] - S[0, 0] + margin
    b = d1 * A1[0, 1] + d2 * A2[0, 1] - S[0, 1]
    c = d1 * A1[1, 1] + d2 * A2[1, 1] - S[1, 1] + margin
    lam_max = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    ok = lam_max <= 0
    obj = np.where(ok, -np.log(d1 * d2), np.inf)
    return float(obj.min())


E_GRID = np.logspace(-4, 4, 25)


def find_petersen_e(G, M, N):
    """First ``e`` on the log grid making the certificate negative definite, else None."""
    from bilinear_ddc.lmi import is_negative_definite, petersen_certificate_matrix

    for e in E_GRID:
        if is_negative_definite(petersen_certificate_matrix(G, M, N, e)):
            return e
    return None


def sample_contractions(rng, p, q, count, radius=1.0):
    """``count`` matrices with spectral norm <= radius; a fifth of them exactly on the sphere.

    Built as ``U diag(s) V'`` from random orthogonal factors, so boundary
    cases with several unit singular values are covered too.
    """
    out = np.empty((count, p, q))
    k = min(p, q)
    for i in range(count):
        U, _ = np.linalg.qr(rng.normal(size=(p, p)))
        V, _ = np.linalg.qr(rng.normal(size=(q, q)))
        s = rng.uniform(0, 1, k)
        if i % 5 == 0:
            s[:] = 1.0
        elif i % 5 == 1:
            s[0] = 1.0
        S = np.zeros((p, q))
        S[:k, :k] = np.diag(s)
        out[i] = radius * (U @ S @ V.T)
    return out


def random_petersen_instance(rng):
    nh, p, q = (int(v) for v in rng.integers(1, 5, 3))
    R = rng.normal(size=(nh, nh))
    G = -(R @ R.T + rng.uniform(0.1, 1.0) * np.eye(nh))
    scale = rng.uniform(0.1, 1.0)
    M = scale * rng.normal(size=(nh, p))
    N = scale * rng.normal(size=(nh, q))
    return G, M, N


def random_instance(rng, n, T=None):
    T = T or n + 3
    A, B, D = rng.uniform(-1, 1, (n, n)), rng.uniform(-1, 1, (n, 1)), rng.uniform(-1, 1, (n, n))
    sys = BilinearSystem(A, B, D)
    X0 = rng.uniform(-1, 1, (n, T))
    U0 = rng.uniform(-1, 1, (1, T))
    V0 = X0 * U0
    data = DataRecord(U0, X0, A @ X0 + B @ U0 + D @ V0, V0)
    # any right inverse of X0: pseudo-inverse plus a null-space component
    null = np.linalg.svd(X0)[2][n:].T
    G = np.linalg.pinv(X0) + null @ rng.uniform(-1, 1, (T - n, n))
    return sys, data, G


def interior_point(problem, rng):
    """A point off the t = 1 barrier centre (nonzero gradient) but well inside the domain."""
    fn = barrier_function(problem)
    x0 = fn.basis.T @ (phase1(problem).point - fn.z0)
    x, _ = _center(fn, x0, 1.0, SolverOptions())
    d = rng.normal(size=x.size)
    return fn, x + 0.5 * min(fn.max_step(x, d), fn.max_step(x, -d)) * d
