"""Matrix inequalities: numeric certificates and affine forms for the solver.

Numeric builders (``build_mi_with_D``, ``build_mi_without_D``, the Petersen
pair) evaluate the certificate matrices at a given point and are used for
post-solve audits.  ``build_data_lmi`` and ``build_model_lmi`` produce
:class:`MaxDetProblem` instances whose constraints are affine in named scalar
decision variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import DataRecord, diagnose
from .errors import InvalidArgument
from .system import BilinearSystem, ClosedLoopData, Ellipsoid, symmetric_inverse

MARGIN_SCALE = 1e-7


# ---------------------------------------------------------------------------
# affine forms and problems


@dataclass(frozen=True)
class Block:
    name: str
    start: int
    size: int
    tag: str = ""

    @property
    def slice(self) -> slice:
        return slice(self.start, self.start + self.size)


@dataclass(frozen=True)
class AffineSymmetricForm:
    """``constant + sum_v value[v] * coefficients[v]``, all symmetric."""

    constant: np.ndarray
    coefficients: Mapping[str, np.ndarray]
    blocks: tuple[Block, ...] = ()
    label: str = ""

    def __post_init__(self):
        C = np.asarray(self.constant, dtype=float)
        m = C.shape[0]
        if C.shape != (m, m) or not np.array_equal(C, C.T):
            raise InvalidArgument(f"{self.label}: constant term must be square symmetric")
        coeffs = {}
        for name, A in self.coefficients.items():
            A = np.asarray(A, dtype=float)
            if A.shape != (m, m) or not np.array_equal(A, A.T):
                raise InvalidArgument(f"{self.label}: coefficient of {name} must be {m}x{m} symmetric")
            coeffs[name] = A
        object.__setattr__(self, "constant", C)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def dim(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, assignment: Mapping[str, float]) -> np.ndarray:
        M = self.constant.copy()
        for name, A in self.coefficients.items():
            M += float(assignment[name]) * A
        return M

    def tensor(self, variables: Sequence[str]) -> np.ndarray:
        """Coefficients stacked in the order of ``variables`` (zeros if absent)."""
        out = np.zeros((len(variables), self.dim, self.dim))
        for k, name in enumerate(variables):
            if name in self.coefficients:
                out[k] = self.coefficients[name]
        return out

    def block_of(self, M, name: str, other: str | None = None) -> np.ndarray:
        """Sub-block ``(name, other)`` of a matrix laid out like this form."""
        byname = {b.name: b for b in self.blocks}
        return np.asarray(M)[byname[name].slice, byname[other or name].slice]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "dim": self.dim,
            "blocks": [{"name": b.name, "start": b.start, "size": b.size, "tag": b.tag} for b in self.blocks],
            "constant": self.constant.tolist(),
            "coefficients": {k: v.tolist() for k, v in self.coefficients.items()},
        }


def strict_margin(form: AffineSymmetricForm, scale: float = MARGIN_SCALE) -> float:
    """Shift turning ``F < 0`` into ``F <= -margin I``; relative to the constant term."""
    return scale * (1.0 + float(np.abs(form.constant).max(initial=0.0)))


@dataclass(frozen=True)
class MaxDetProblem:
    """Minimize ``-log det(objective)`` s.t. every constraint form is ``< 0``
    and ``eq_matrix @ z = eq_rhs``."""

    variables: tuple[str, ...]
    constraints: tuple[AffineSymmetricForm, ...]
    objective: AffineSymmetricForm
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    margins: tuple[float, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        N = len(self.variables)
        if len(set(self.variables)) != N:
            raise InvalidArgument("duplicate variable names")
        E = np.asarray(self.eq_matrix, dtype=float).reshape(-1, N)
        f = np.asarray(self.eq_rhs, dtype=float).reshape(-1)
        if E.shape[0] != f.shape[0]:
            raise InvalidArgument("equality matrix and right-hand side disagree")
        known = set(self.variables)
        for form in (*self.constraints, self.objective):
            extra = set(form.coefficients) - known
            if extra:
                raise InvalidArgument(f"{form.label}: undeclared variables {sorted(extra)}")
        object.__setattr__(self, "eq_matrix", E)
        object.__setattr__(self, "eq_rhs", f)
        if not self.margins:
            object.__setattr__(self, "margins", tuple(strict_margin(c) for c in self.constraints))
        elif len(self.margins) != len(self.constraints):
            raise InvalidArgument("one margin per constraint is required")

    @property
    def num_rows(self) -> int:
        return sum(c.dim for c in self.constraints)

    def assignment(self, z) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.variables, z)}

    def vector(self, assignment: Mapping[str, float]) -> np.ndarray:
        return np.array([float(assignment[name]) for name in self.variables])

    def to_dict(self) -> dict:
        """Debug dump for cross-checking against an external SDP solver."""
        return {
            "format": "bilinear-ddc/maxdet-problem/1",
            "sense": "minimize -log det(objective) s.t. constraint_i(z) <= -margin_i I, eq_matrix z = eq_rhs",
            "variables": list(self.variables),
            "constraints": [c.to_dict() for c in self.constraints],
            "margins": list(self.margins),
            "objective": self.objective.to_dict(),
            "eq_matrix": self.eq_matrix.tolist(),
            "eq_rhs": self.eq_rhs.tolist(),
            "meta": self.meta,
        }


class _Lin:
    """Affine matrix expression in named scalar variables (assembly helper)."""

    __array_ufunc__ = None

    def __init__(self, const, terms=None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = dict(terms or {})

    @property
    def shape(self):
        return self.const.shape

    @property
    def T(self):
        return _Lin(self.const.T, {k: v.T for k, v in self.terms.items()})

    def __add__(self, other):
        if not isinstance(other, _Lin):
            other = _Lin(np.broadcast_to(other, self.shape))
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return _Lin(self.const + other.const, terms)

    __radd__ = __add__

    def __neg__(self):
        return -1.0 * self

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        s = float(s)
        return _Lin(s * self.const, {k: s * v for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, M):
        M = np.atleast_2d(M)
        return _Lin(self.const @ M, {k: v @ M for k, v in self.terms.items()})

    def __rmatmul__(self, M):
        M = np.atleast_2d(M)
        return _Lin(M @ self.const, {k: M @ v for k, v in self.terms.items()})


def _const(M) -> _Lin:
    return _Lin(M)


def _matrix_variable(name: str, shape, symmetric=False):
    """Returns (variable names, expression) for a matrix of scalar unknowns."""
    rows, cols = shape
    names, terms = [], {}
    for i in range(rows):
        for j in range(i if symmetric else 0, cols):
            v = f"{name}[{i},{j}]"
            E = np.zeros(shape)
            E[i, j] = 1.0
            if symmetric:
                E[j, i] = 1.0
            names.append(v)
            terms[v] = E
    return names, _Lin(np.zeros(shape), terms)


def _scalar_variable(name: str, size: int):
    """Returns ([name], name * I_size)."""
    return [name], _Lin(np.zeros((size, size)), {name: np.eye(size)})


def _assemble(layout, upper: dict, label: str) -> AffineSymmetricForm:
    """Assemble a symmetric block form from its upper-triangular blocks.

    ``layout`` is a list of (name, size, tag); ``upper`` maps (i, j), i <= j,
    to a :class:`_Lin` or constant array.
    """
    sizes = [s for _, s, _ in layout]
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    m = int(starts[-1])
    const = np.zeros((m, m))
    coeffs: dict[str, np.ndarray] = {}
    for (i, j), expr in upper.items():
        if i > j:
            raise ValueError("only upper-triangular blocks are given")
        if not isinstance(expr, _Lin):
            expr = _const(expr)
        if expr.shape != (sizes[i], sizes[j]):
            raise ValueError(f"block ({i},{j}) has shape {expr.shape}, expected {(sizes[i], sizes[j])}")
        ri, rj = slice(starts[i], starts[i + 1]), slice(starts[j], starts[j + 1])
        pieces = [(None, expr.const)] + list(expr.terms.items())
        for name, val in pieces:
            target = const if name is None else coeffs.setdefault(name, np.zeros((m, m)))
            target[ri, rj] += val
            if i != j:
                target[rj, ri] += val.T
    const = 0.5 * (const + const.T)
    coeffs = {k: 0.5 * (v + v.T) for k, v in coeffs.items()}
    blocks = tuple(Block(name, int(starts[k]), size, tag) for k, (name, size, tag) in enumerate(layout))
    return AffineSymmetricForm(const, coeffs, blocks, label)


# ---------------------------------------------------------------------------
# design inequalities


@dataclass(frozen=True)
class DesignIneqInputs:
    delta: float
    eps1: float
    mu: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidArgument("delta must be > 0")
        if not self.eps1 > 0:
            raise InvalidArgument("eps1 must be > 0")
        if not 0 < self.mu <= 1:
            raise InvalidArgument("mu must lie in (0, 1]")


def build_data_lmi(data: DataRecord, cfg: DesignIneqInputs) -> MaxDetProblem:
    """Data-based maxdet problem in ``(P, Y, eps2)`` for fixed ``eps1``.

    Constraint (block order x, tau, u, next, unc)::

        [ -mu P     0        Y U0'    Y X1'       -delta Y V0' ]
        [   .    -eps1 P      0        0       delta eps1 P   ]
        [   .       .      -eps1       0            0         ]  < 0
        [   .       .        .    -P + eps2 I       0         ]
        [   .       .        .         .        -eps2 I       ]

    together with ``P = X0 Y'`` entrywise.
    """
    n, T = data.n, data.T
    diag = diagnose(data)
    p_names, P = _matrix_variable("P", (n, n), symmetric=True)
    y_names, Y = _matrix_variable("Y", (n, T))
    e_names, E2 = _scalar_variable("eps2", n)
    d, e1, mu = cfg.delta, cfg.eps1, cfg.mu
    layout = [
        ("x", n, "Lyapunov block (-mu P)"),
        ("tau", n, "S-procedure multiplier block (-eps1 P)"),
        ("u", 1, "feedback block (-eps1)"),
        ("next", n, "successor block (-P + eps2 I)"),
        ("unc", n, "norm-bound block (-eps2 I)"),
    ]
    upper = {
        (0, 0): -mu * P,
        (0, 2): Y @ data.U0.T,
        (0, 3): Y @ data.X1.T,
        (0, 4): -d * (Y @ data.V0.T),
        (1, 1): -e1 * P,
        (1, 4): (d * e1) * P,
        (2, 2): -e1 * np.eye(1),
        (3, 3): E2 - P,
        (4, 4): -E2,
    }
    lmi = _assemble(layout, upper, "data-based robust decrease LMI")
    # P = X0 Y' as n*n scalar equations.
    eq_expr = P - data.X0 @ Y.T
    variables = tuple(p_names + y_names + e_names)
    rows, rhs = [], []
    for i in range(n):
        for j in range(n):
            rows.append([eq_expr.terms[v][i, j] if v in eq_expr.terms else 0.0 for v in variables])
            rhs.append(-eq_expr.const[i, j])
    objective = _assemble([("P", n, "ellipsoid shape matrix")], {(0, 0): P}, "P")
    return MaxDetProblem(
        variables=variables,
        constraints=(lmi,),
        objective=objective,
        eq_matrix=np.array(rows),
        eq_rhs=np.array(rhs),
        meta={
            "kind": "data-based",
            "n": n,
            "T": T,
            "delta": d,
            "eps1": e1,
            "mu": mu,
            "rank_X0": diag.rank_X0,
            "data_warnings": diag.warnings,
        },
    )


def build_model_lmi(sys: BilinearSystem, eps1: float, mu: float = 1.0) -> MaxDetProblem:
    """Model-based maxdet problem in ``(P, y)`` for fixed ``eps1``::

        [ -mu P     0       y       P A' + y B' ]
        [   .    -eps1 P    0         P D'      ]  < 0,     -P < 0
        [   .       .   -1/eps1       0         ]
        [   .       .       .         -P        ]

    This is the congruence ``diag(P, P, 1, I)`` of the known-``D`` certificate
    with multiplier ``tau = eps1``; the gain is ``K = y' P^-1``.
    """
    if not eps1 > 0:
        raise InvalidArgument("eps1 must be > 0")
    if not 0 < mu <= 1:
        raise InvalidArgument("mu must lie in (0, 1]")
    n = sys.n
    p_names, P = _matrix_variable("P", (n, n), symmetric=True)
    y_names, y = _matrix_variable("y", (n, 1))
    layout = [
        ("x", n, "Lyapunov block (-mu P)"),
        ("tau", n, "S-procedure multiplier block (-eps1 P)"),
        ("u", 1, "feedback block (-1/eps1)"),
        ("next", n, "successor block (-P)"),
    ]
    upper = {
        (0, 0): -mu * P,
        (0, 2): y,
        (0, 3): P @ sys.A.T + y @ sys.B.T,
        (1, 1): -eps1 * P,
        (1, 3): P @ sys.D.T,
        (2, 2): -(1.0 / eps1) * np.eye(1),
        (3, 3): -P,
    }
    lmi = _assemble(layout, upper, "model-based decrease LMI")
    pos = _assemble([("P", n, "P > 0")], {(0, 0): -P}, "P positive definite")
    objective = _assemble([("P", n, "ellipsoid shape matrix")], {(0, 0): P}, "P")
    variables = tuple(p_names + y_names)
    return MaxDetProblem(
        variables=variables,
        constraints=(lmi, pos),
        objective=objective,
        eq_matrix=np.zeros((0, len(variables))),
        eq_rhs=np.zeros(0),
        meta={"kind": "model-based", "n": n, "eps1": eps1, "mu": mu},
    )


def symmetric_entries(name: str, S) -> dict[str, float]:
    """Assignment entries for a symmetric matrix variable (upper triangle)."""
    S = np.asarray(S, dtype=float)
    return {f"{name}[{i},{j}]": S[i, j] for i in range(S.shape[0]) for j in range(i, S.shape[1])}


def matrix_entries(name: str, M) -> dict[str, float]:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return {f"{name}[{i},{j}]": M[i, j] for i in range(M.shape[0]) for j in range(M.shape[1])}


def read_symmetric(assignment: Mapping[str, float], name: str, n: int) -> np.ndarray:
    S = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            S[i, j] = S[j, i] = assignment[f"{name}[{i},{j}]"]
    return S


def read_matrix(assignment: Mapping[str, float], name: str, shape) -> np.ndarray:
    M = np.empty(shape)
    for i in range(shape[0]):
        for j in range(shape[1]):
            M[i, j] = assignment[f"{name}[{i},{j}]"]
    return M


# ---------------------------------------------------------------------------
# numeric certificates


def _check_spd(Q):
    return Ellipsoid(Q).Q


def build_mi_with_D(cl: ClosedLoopData, Q, tau: float, D, mu: float = 1.0) -> np.ndarray:
    """Known-``D`` certificate (size ``3n+1``) whose negativity gives ``N_D(x) < 0`` on ``E_Q``::

        [ -mu Q     0      Kc'    (Ac + F D H)' ]
        [   .    -tau Q     0          D'       ]
        [   .       .    -1/tau        0        ]
        [   .       .       .        -Q^-1      ]
    """
    Q = _check_spd(Q)
    if not tau > 0:
        raise InvalidArgument("tau must be > 0")
    n = cl.n
    D = np.asarray(D, dtype=float).reshape(n, n)
    M = cl.Ac + cl.F @ D @ cl.H
    Z = np.zeros((n, n))
    z = np.zeros((n, 1))
    out = np.block([
        [-mu * Q, Z, cl.Kc.T, M.T],
        [Z, -tau * Q, z, D.T],
        [cl.Kc, z.T, -np.eye(1) / tau, z.T],
        [M, D, z, -symmetric_inverse(Q)],
    ])
    return 0.5 * (out + out.T)


def _petersen_factors(cl: ClosedLoopData, delta: float):
    """``(M, N)`` with ``mi_with_D(D) = G + M (D/delta) N' + N (D/delta)' M'``."""
    n = cl.n
    z = np.zeros((1, n))
    M = np.vstack([np.zeros((2 * n, n)), z, cl.F])
    N = np.vstack([delta * cl.H.T, delta * np.eye(n), z, np.zeros((n, n))])
    return M, N


def build_mi_without_D(cl: ClosedLoopData, Q, tau: float, eps2: float, delta: float, mu: float = 1.0) -> np.ndarray:
    """Norm-bound certificate (size ``4n+1``) valid for every ``||D|| <= delta``::

        [ -mu Q     0      Kc'      Ac'         delta H' ]
        [   .    -tau Q     0        0          delta I  ]
        [   .       .    -1/tau      0            0      ]
        [   .       .       .   -Q^-1 + eps2 I    0      ]
        [   .       .       .        .         -eps2 I   ]

    Assembled as the Petersen certificate of the known-``D`` matrix at ``D = 0``.
    """
    if not delta >= 0:
        raise InvalidArgument("delta must be >= 0")
    G = build_mi_with_D(cl, Q, tau, np.zeros((cl.n, cl.n)), mu)
    M, N = _petersen_factors(cl, delta)
    return petersen_certificate_matrix(G, M, N, eps2)


def petersen_certificate_matrix(G, M, N, e: float) -> np.ndarray:
    """``[[G + e M M', N], [N', -e I]]``."""
    G, M, N = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (G, M, N))
    k = G.shape[0]
    if G.shape != (k, k) or M.shape[0] != k or N.shape[0] != k:
        raise InvalidArgument("G, M, N must share their row dimension")
    q = N.shape[1]
    out = np.block([[G + e * M @ M.T, N], [N.T, -e * np.eye(q)]])
    return 0.5 * (out + out.T)


def petersen_lhs(G, M, N, Dhat) -> np.ndarray:
    """``G + M Dhat N' + N Dhat' M'`` for an uncertainty ``||Dhat||_2 <= 1``."""
    G, M, N, Dhat = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (G, M, N, Dhat))
    if Dhat.shape != (M.shape[1], N.shape[1]):
        raise InvalidArgument(f"Dhat must have shape {(M.shape[1], N.shape[1])}")
    if np.linalg.norm(Dhat, 2) > 1.0 + 1e-12:
        raise InvalidArgument("||Dhat||_2 must be <= 1")
    X = M @ Dhat @ N.T
    out = G + X + X.T
    return 0.5 * (out + out.T)


def max_eig(S) -> float:
    return float(np.linalg.eigvalsh(S)[-1])


def is_negative_definite(S) -> bool:
    return max_eig(S) < 0.0
