"""Small dense determinant-maximization solver.

Solves::

    minimize    -log det P(z)
    subject to  F_i(z) <= -margin_i I      (affine symmetric forms)
                E z = f

with a barrier path-following method.  Equalities are eliminated by a
null-space parametrization ``z = z0 + B v``; directions of ``v`` that touch
no constraint and not the objective are projected out so that the barrier
Hessian is positive definite.  A phase-I problem ``min s`` s.t.
``F_i(z) + margin_i I <= s I`` and ``P(z) >= -s I`` supplies the strictly
feasible start.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import solve_triangular

from .lmi import MaxDetProblem, strict_margin

log = logging.getLogger(__name__)


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_TROUBLE = "numerical_trouble"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class SolverOptions:
    margin_scale: float | None = None  # None: use the margins stored in the problem
    t0: float = 1.0
    phase1_t0: float = 100.0  # phase I only needs s < 0, so weight s heavily from the start
    growth: float = 10.0
    newton_tol: float = 1e-10
    gap_tol: float = 1e-7
    max_outer: int = 60
    max_newton: int = 100
    ls_alpha: float = 0.25
    ls_beta: float = 0.5
    reg: float = 1e-12
    reg_tries: int = 3
    divergence_bound: float = 1e10  # any variable beyond this means the objective is unbounded

    def __post_init__(self):
        for name in ("t0", "phase1_t0", "divergence_bound", "newton_tol", "gap_tol", "reg", "ls_alpha", "ls_beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.growth > 1:
            raise ValueError("growth must be > 1")
        if self.max_outer < 1 or self.max_newton < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class ConstraintMargin:
    label: str
    min_eig: float
    max_eig: float
    margin: float

    @property
    def satisfied(self) -> bool:
        return self.max_eig <= -0.5 * self.margin


@dataclass
class SolutionCheck:
    margins: list[ConstraintMargin]
    equality_residual: float
    equality_tolerance: float
    objective_min_eig: float

    @property
    def feasible(self) -> bool:
        return (
            all(m.max_eig < 0 for m in self.margins)
            and self.equality_residual <= self.equality_tolerance
            and self.objective_min_eig > 0
        )

    @property
    def certified(self) -> bool:
        return all(m.satisfied for m in self.margins) and self.feasible


@dataclass
class IterationRecord:
    phase: int
    outer: int
    t: float
    objective: float
    worst_margin: float
    newton_steps: int


@dataclass
class Solution:
    status: Status
    assignment: dict[str, float] = field(default_factory=dict)
    objective: float | None = None
    check: SolutionCheck | None = None
    history: list[IterationRecord] = field(default_factory=list)
    phase1_value: float | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def margins(self) -> list[ConstraintMargin]:
        return self.check.margins if self.check else []

    @property
    def equality_residual(self) -> float | None:
        return self.check.equality_residual if self.check else None


class NumericalTrouble(Exception):
    pass


class _IterationLimit(Exception):
    pass


def _problem_margins(problem: MaxDetProblem, options: SolverOptions):
    if options.margin_scale is None:
        return np.array(problem.margins, dtype=float)
    return np.array([strict_margin(c, options.margin_scale) for c in problem.constraints])


def check_solution(problem: MaxDetProblem, assignment: Mapping[str, float], margins=None) -> SolutionCheck:
    """Evaluate every constraint at ``assignment`` with a symmetric eigensolver."""
    z = problem.vector(assignment)
    margins = problem.margins if margins is None else margins
    out = []
    for form, sigma in zip(problem.constraints, margins):
        w = np.linalg.eigvalsh(form.evaluate(assignment))
        out.append(ConstraintMargin(form.label, float(w[0]), float(w[-1]), float(sigma)))
    if problem.eq_matrix.shape[0]:
        res = float(np.linalg.norm(problem.eq_matrix @ z - problem.eq_rhs))
    else:
        res = 0.0
    tol = 1e-9 * (1.0 + float(np.linalg.norm(problem.eq_rhs)))
    pmin = float(np.linalg.eigvalsh(problem.objective.evaluate(assignment))[0])
    return SolutionCheck(out, res, tol, pmin)


# ---------------------------------------------------------------------------
# barrier machinery


def _combine(x, Sk):
    """``sum_k x_k Sk[k]``."""
    return (x @ Sk.reshape(Sk.shape[0], Sk.shape[1] * Sk.shape[2])).reshape(Sk.shape[1:])


def logdet_barrier(S0, Sk, x, hessian=True):
    """Value, gradient and Hessian of ``-log det(S0 + sum_k x_k Sk[k])``.

    Returns ``None`` outside the positive definite cone.
    """
    S = S0 + _combine(x, Sk)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(L)
    if not np.all(d > 0) or not np.all(np.isfinite(d)):
        return None
    val = -2.0 * np.sum(np.log(d))
    if not hessian:
        return val, None, None
    Li = solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
    W = Li @ Sk @ Li.T
    g = -np.trace(W, axis1=1, axis2=2)
    Wf = W.reshape(W.shape[0], -1)
    return val, g, Wf @ Wf.T


@dataclass
class BarrierFunction:
    """``t * (c'x - sum log det O_j(x)) - sum log det S_i(x)`` in reduced coordinates."""

    forms: list  # (S0, Sk), weight 1
    obj_forms: list  # (S0, Sk), weight t
    c: np.ndarray
    z0: np.ndarray
    basis: np.ndarray  # maps reduced x (without any phase-I slack) to z

    def evaluate(self, x, t, hessian=True):
        val = t * float(self.c @ x)
        g = t * self.c.copy()
        H = np.zeros((x.size, x.size))
        for weight, group in ((t, self.obj_forms), (1.0, self.forms)):
            for S0, Sk in group:
                r = logdet_barrier(S0, Sk, x, hessian)
                if r is None:
                    return None
                val += weight * r[0]
                if hessian:
                    g += weight * r[1]
                    H += weight * r[2]
        return val, g, H

    def value(self, x, t):
        r = self.evaluate(x, t, hessian=False)
        return None if r is None else r[0]

    def max_step(self, x, dx) -> float:
        """Largest ``s`` keeping every barrier block positive definite along ``x + s dx``."""
        smax = np.inf
        for S0, Sk in (*self.forms, *self.obj_forms):
            L = np.linalg.cholesky(S0 + _combine(x, Sk))
            Li = solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
            lam = float(np.linalg.eigvalsh(Li @ _combine(dx, Sk) @ Li.T)[0])
            if lam < 0:
                smax = min(smax, -1.0 / lam)
        return smax

    def to_full(self, x):
        return self.z0 + self.basis @ x[: self.basis.shape[1]]


@dataclass
class _Reduction:
    z0: np.ndarray
    basis: np.ndarray
    cons: list  # (C(z0), A(basis)) per constraint
    obj: tuple  # (P(z0), P-coeffs(basis))
    eq_ok: bool
    eq_residual: float


def _reduce(problem: MaxDetProblem) -> _Reduction:
    N = len(problem.variables)
    E, f = problem.eq_matrix, problem.eq_rhs
    if E.shape[0]:
        U, s, Vt = np.linalg.svd(E)
        tol = max(E.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        r = int(np.sum(s > tol))
        z0 = Vt[:r].T @ ((U[:, :r].T @ f) / s[:r])
        null = Vt[r:].T
        res = float(np.linalg.norm(E @ z0 - f))
        eq_ok = res <= 1e-9 * (1.0 + float(np.linalg.norm(f)))
    else:
        z0, null, res, eq_ok = np.zeros(N), np.eye(N), 0.0, True
    tensors = [form.tensor(problem.variables) for form in (*problem.constraints, problem.objective)]
    if null.shape[1]:
        effect = np.vstack([T.reshape(N, -1).T for T in tensors]) @ null
        _, s2, Vt2 = np.linalg.svd(effect, full_matrices=False)
        keep = s2 > max(effect.shape) * np.finfo(float).eps * (s2[0] if s2.size else 0.0) * 10
        basis = null @ Vt2[keep].T
    else:
        basis = np.zeros((N, 0))
    reduced = []
    for form, T in zip((*problem.constraints, problem.objective), tensors):
        C0 = form.constant + np.tensordot(z0, T, axes=1)
        A = np.tensordot(basis.T, T, axes=1)
        reduced.append((C0, A))
    return _Reduction(z0, basis, reduced[:-1], reduced[-1], eq_ok, res)


def _newton_direction(g, H, options: SolverOptions):
    reg = options.reg * max(1.0, float(np.max(np.abs(np.diag(H)), initial=0.0)))
    for attempt in range(options.reg_tries + 1):
        Hr = H if attempt == 0 else H + reg * 10.0 ** (attempt - 1) * np.eye(H.shape[0])
        try:
            L = np.linalg.cholesky(Hr)
        except np.linalg.LinAlgError:
            continue
        y = solve_triangular(L, -g, lower=True, check_finite=False)
        dx = solve_triangular(L.T, y, lower=False, check_finite=False)
        if np.all(np.isfinite(dx)):
            return dx, float(y @ y)
    raise NumericalTrouble("barrier Hessian is not positive definite after regularization")


def _center(fn: BarrierFunction, x, t, options: SolverOptions, stop: Callable | None = None):
    """Damped Newton minimization of ``fn(., t)`` from a strictly feasible ``x``."""
    for it in range(options.max_newton):
        ev = fn.evaluate(x, t)
        if ev is None:
            raise NumericalTrouble("iterate left the barrier domain")
        val, g, H = ev
        if not np.isfinite(val):
            raise NumericalTrouble("non-finite barrier value")
        dx, lam2 = _newton_direction(g, H, options)
        # Below this floor the decrement is round-off in g amplified by an
        # ill-conditioned H; the centring error it allows is ~1e-12 |objective|.
        floor = 1e-12 * (1.0 + abs(val))
        if lam2 / 2.0 <= max(options.newton_tol, floor):
            return x, it
        slope = float(g @ dx)
        # Never step past the cone boundary: far outside, a Cholesky test can
        # pass by round-off on badly scaled points.
        s = min(1.0, 0.99 * fn.max_step(x, dx))
        while True:
            xn = x + s * dx
            vn = fn.value(xn, t)
            if vn is not None and vn <= val + options.ls_alpha * s * slope:
                break
            s *= options.ls_beta
            if s < 1e-14:
                vn = None
                break
        if vn is None or vn >= val:
            # No representable decrease left: centered to working precision.
            if lam2 < 1e-6 * max(1.0, abs(val)):
                return x, it
            raise NumericalTrouble(f"line search stalled (decrement {lam2:.3e})")
        x = xn
        if stop is not None and stop(x):
            return x, it + 1
    raise _IterationLimit(f"centering did not converge in {options.max_newton} Newton steps")


def _worst_margin(red: _Reduction, margins, v) -> float:
    """``max_i lambda_max(F_i + margin_i I)``; negative means strictly feasible."""
    worst = -np.inf
    for (C0, A), sigma in zip(red.cons, margins):
        F = C0 + _combine(v, A)
        worst = max(worst, float(np.linalg.eigvalsh(F)[-1]) + sigma)
    return worst


def _phase1_function(red: _Reduction, margins) -> BarrierFunction:
    r = red.basis.shape[1]
    forms = []
    for (C0, A), sigma in zip(red.cons, margins):
        m = C0.shape[0]
        forms.append((-C0 - sigma * np.eye(m), np.concatenate([-A, np.eye(m)[None]], axis=0)))
    P0, PA = red.obj
    m = P0.shape[0]
    forms.append((P0, np.concatenate([PA, np.eye(m)[None]], axis=0)))
    c = np.zeros(r + 1)
    c[-1] = 1.0
    return BarrierFunction(forms, [], c, red.z0, red.basis)


def _phase2_function(red: _Reduction, margins) -> BarrierFunction:
    forms = []
    for (C0, A), sigma in zip(red.cons, margins):
        forms.append((-C0 - sigma * np.eye(C0.shape[0]), -A))
    r = red.basis.shape[1]
    return BarrierFunction(forms, [red.obj], np.zeros(r), red.z0, red.basis)


def barrier_function(problem: MaxDetProblem, options: SolverOptions | None = None) -> BarrierFunction:
    """Phase-II barrier of ``problem`` in its reduced coordinates."""
    options = options or SolverOptions()
    return _phase2_function(_reduce(problem), _problem_margins(problem, options))


@dataclass
class Phase1Result:
    status: Status
    point: np.ndarray | None  # full variable vector
    value: float  # best s found (upper bound on the phase-I optimum)
    lower_bound: float
    history: list[IterationRecord]
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.point is not None


def _phase1(problem, red: _Reduction, margins, options: SolverOptions) -> tuple[Phase1Result, np.ndarray | None]:
    r = red.basis.shape[1]
    v = np.zeros(r)
    worst = _worst_margin(red, margins, v)
    pmin = float(np.linalg.eigvalsh(red.obj[0])[0])
    s_now = max(worst, -pmin)
    history: list[IterationRecord] = []
    if not red.eq_ok:
        return Phase1Result(Status.INFEASIBLE, None, np.inf, np.inf, history,
                            f"inconsistent equality constraints (residual {red.eq_residual:.3e})"), None
    if s_now < 0:
        return Phase1Result(Status.OPTIMAL, red.z0.copy(), s_now, -np.inf, history), v
    fn = _phase1_function(red, margins)
    rows = sum(C0.shape[0] for C0, _ in red.cons) + red.obj[0].shape[0]
    x = np.concatenate([v, [1.0 + s_now]])
    t = options.phase1_t0
    lower = -np.inf
    for outer in range(options.max_outer):
        x, steps = _center(fn, x, t, options, stop=lambda y: y[-1] < 0)
        history.append(IterationRecord(1, outer, t, float(x[-1]), float(x[-1]), steps))
        if x[-1] < 0:
            v = x[:-1]
            return Phase1Result(Status.OPTIMAL, fn.to_full(v), float(x[-1]), lower, history), v
        lower = float(x[-1]) - rows / t
        if lower > 0 or rows / t < options.gap_tol:
            return Phase1Result(Status.INFEASIBLE, None, float(x[-1]), lower, history,
                                f"phase-I optimum {x[-1]:.3e} is not below zero"), None
        t *= options.growth
    return Phase1Result(Status.ITERATION_LIMIT, None, float(x[-1]), lower, history,
                        "phase I hit the outer iteration limit"), None


def phase1(problem: MaxDetProblem, options: SolverOptions | None = None) -> Phase1Result:
    """Find a point with every constraint strictly below ``-margin_i``.

    Infeasibility is certified by the barrier lower bound on the phase-I
    optimum becoming positive, or by the optimum staying non-negative once the
    barrier gap is below ``gap_tol``.
    """
    options = options or SolverOptions()
    red = _reduce(problem)
    try:
        return _phase1(problem, red, _problem_margins(problem, options), options)[0]
    except NumericalTrouble as exc:
        return Phase1Result(Status.NUMERICAL_TROUBLE, None, np.nan, np.nan, [], str(exc))
    except _IterationLimit as exc:
        return Phase1Result(Status.ITERATION_LIMIT, None, np.nan, np.nan, [], str(exc))


def solve(problem: MaxDetProblem, options: SolverOptions | None = None) -> Solution:
    options = options or SolverOptions()
    margins = _problem_margins(problem, options)
    red = _reduce(problem)
    try:
        p1, v = _phase1(problem, red, margins, options)
    except NumericalTrouble as exc:
        return Solution(Status.NUMERICAL_TROUBLE, message=f"phase I: {exc}")
    except _IterationLimit as exc:
        return Solution(Status.ITERATION_LIMIT, message=f"phase I: {exc}")
    if not p1.feasible:
        return Solution(p1.status, history=p1.history, phase1_value=p1.value, message=p1.message)

    fn = _phase2_function(red, margins)
    history = list(p1.history)
    rows = problem.num_rows
    t = options.t0
    x = v
    status, message = Status.ITERATION_LIMIT, "outer iteration limit reached"
    try:
        for outer in range(options.max_outer):
            x, steps = _center(fn, x, t, options)
            obj = logdet_barrier(*red.obj, x, hessian=False)[0]
            history.append(IterationRecord(2, outer, t, obj, _worst_margin(red, margins, x), steps))
            if np.abs(fn.to_full(x)).max() > options.divergence_bound:
                status = Status.NUMERICAL_TROUBLE
                message = f"objective appears unbounded: variables exceed {options.divergence_bound:g}"
                break
            if rows / t < options.gap_tol:
                status, message = Status.OPTIMAL, ""
                break
            t *= options.growth
    except NumericalTrouble as exc:
        status, message = Status.NUMERICAL_TROUBLE, str(exc)
    except _IterationLimit as exc:
        status, message = Status.ITERATION_LIMIT, str(exc)

    assignment = problem.assignment(fn.to_full(x))
    check = check_solution(problem, assignment, margins)
    objective = -float(np.linalg.slogdet(problem.objective.evaluate(assignment))[1])
    if status is Status.OPTIMAL and not check.certified:
        status = Status.NUMERICAL_TROUBLE
        message = "final point violates the margin or equality tolerance"
    log.debug("maxdet %s: objective %.6g after %d outer iterations", status.value, objective, len(history))
    return Solution(status, assignment, objective, check, history, p1.value, message)
