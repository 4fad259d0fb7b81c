"""Newton iteration with cubic backtracking on the merit ``0.5 * |F|^2``.

The multiplier space contains one direction that never enters the length
constraint at an admissible state: the continuous quadratic that is 1 at
boundary vertices and -1/2 at edge midpoints. It is orthogonal to constants
and linear functions on every edge, so testing ``|d_theta X|^2 - 1`` with it
only measures the curvature of the traces, and its multiplier component is
not determined. Newton is therefore run on the bordered system

    F(z) + sigma * e = 0,    e . z = 0

with ``e`` the normalized mode embedded in the multiplier block. Every other
equation is solved exactly as assembled; ``sigma`` absorbs the one dropped
constraint and is reported as ``report.mode_residual``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import NonFiniteStateError, get_operators, jacobian, residual
from .mesh import Mesh
from .spaces import DofLayout
from .state import State

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
LINEAR_FAILURE = "linear_failure"
LINE_SEARCH_FAILURE = "line_search_failure"
DIVERGED = "diverged"


class SingularMatrixError(RuntimeError):
    """Factorization hit a zero (or numerically zero) pivot."""

    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot


class LineSearchError(RuntimeError):
    """No step above the minimum length satisfied the sufficient-decrease test."""


@dataclass(frozen=True)
class SolverConfig:
    abs_tol: float = 1e-6
    rel_tol: float = 1e-8
    max_iters: int = 50
    ls_sufficient_decrease: float = 1e-4
    ls_min_step: float = 1e-12
    ls_max_backtracks: int = 40

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "max_iters", "ls_sufficient_decrease", "ls_min_step", "ls_max_backtracks"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.ls_sufficient_decrease < 1.0:
            raise ValueError("ls_sufficient_decrease must be < 1")


@dataclass
class NewtonReport:
    converged: bool = False
    iterations: int = 0
    residual_norms: List[float] = field(default_factory=list)
    step_lengths: List[float] = field(default_factory=list)
    termination_reason: str = ""
    message: str = ""
    # multiplier of the bordering row, equals -(e . F) at a solution
    mode_residual: float = 0.0


def line_search_cubic(
    merit: Callable[[float], float],
    g0: float,
    f0: Optional[float] = None,
    sufficient_decrease: float = 1e-4,
    min_step: float = 1e-12,
    max_backtracks: int = 40,
) -> float:
    """Backtrack from a full step until ``merit(lam) <= f0 + c * lam * g0``.

    The first backtrack minimizes the quadratic through f0, g0 and merit(1);
    later ones the cubic through f0, g0 and the last two trials. Every new
    trial is clamped to [0.1, 0.5] times the previous one.
    """
    if not g0 < 0.0:
        raise ValueError(f"line search needs a descent direction, got slope {g0}")
    if f0 is None:
        f0 = merit(0.0)
    lam, f_lam = 1.0, merit(1.0)
    lam_prev = f_prev = None
    for _ in range(max_backtracks + 1):
        if math.isfinite(f_lam) and f_lam <= f0 + sufficient_decrease * lam * g0:
            return lam
        if not math.isfinite(f_lam):
            trial = 0.1 * lam
        elif lam_prev is None:
            trial = -g0 / (2.0 * (f_lam - f0 - g0))
        else:
            trial = _cubic_minimizer(f0, g0, lam, f_lam, lam_prev, f_prev)
        trial = min(max(trial, 0.1 * lam), 0.5 * lam)
        if trial < min_step:
            break
        lam_prev, f_prev = lam, f_lam
        lam, f_lam = trial, merit(trial)
    raise LineSearchError(f"line search exhausted at step {lam:.3e}")


def _cubic_minimizer(f0, g0, lam1, f1, lam2, f2) -> float:
    r1 = f1 - f0 - g0 * lam1
    r2 = f2 - f0 - g0 * lam2
    a = (r1 / lam1**2 - r2 / lam2**2) / (lam1 - lam2)
    b = (-lam2 * r1 / lam1**2 + lam1 * r2 / lam2**2) / (lam1 - lam2)
    if a == 0.0:
        return -g0 / (2.0 * b) if b != 0.0 else 0.5 * lam1
    disc = b * b - 3.0 * a * g0
    if disc < 0.0:
        return 0.5 * lam1
    if b <= 0.0:
        return (-b + math.sqrt(disc)) / (3.0 * a)
    return -g0 / (b + math.sqrt(disc))


def _dense_pivot(A) -> Optional[int]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, _ = scipy.linalg.lu_factor(A.toarray(), check_finite=False)
    d = np.abs(np.diag(lu))
    bad = np.nonzero(d <= 1e-14 * max(d.max(), 1e-300))[0]
    return int(bad[0]) if len(bad) else None


def solve_linear(J, rhs, refine: int = 3, tol: float = 1e-10) -> np.ndarray:
    """Sparse LU with partial pivoting plus a few steps of iterative refinement.

    Raises :class:`SingularMatrixError` (with the offending pivot when it can
    be located) if the factorization breaks down or the refined residual stays
    above ``tol * |rhs|``.
    """
    A = sp.csc_matrix(J)
    b = np.asarray(rhs, dtype=float)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        pivot = _dense_pivot(A) if A.shape[0] <= 3000 else None
        raise SingularMatrixError(f"factorization failed: {exc} (pivot {pivot})", pivot) from exc
    diag = np.abs(lu.U.diagonal())
    small = np.nonzero(diag == 0.0)[0]
    if len(small):
        pivot = int(lu.perm_c[small[0]])
        raise SingularMatrixError(f"numerically singular pivot at column {pivot}", pivot)

    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    for _ in range(refine):
        r = b - A @ x
        if np.linalg.norm(r) <= tol * bnorm:
            break
        x = x + lu.solve(r)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solution is not finite")
    rnorm = np.linalg.norm(b - A @ x)
    if rnorm > tol * bnorm:
        logger.warning("linear solve residual %.3e exceeds %.1e * |rhs|", rnorm, tol)
    return x


def spurious_multiplier_mode(layout: DofLayout) -> np.ndarray:
    """Unit multiplier vector: 1 at loop vertices, -1/2 at edge midpoints."""
    m = np.where(np.arange(layout.multiplier_total) % 2 == 0, 1.0, -0.5)
    return m / np.linalg.norm(m)


def newton_solve(
    initial: State,
    problem,
    mesh: Mesh,
    layout: DofLayout,
    config: SolverConfig = SolverConfig(),
    threads: int = 1,
) -> Tuple[State, NewtonReport]:
    """Solve ``residual(state) = 0``; returns the last accepted iterate and a report."""
    ops = get_operators(problem, mesh, layout, threads=threads)
    n = layout.membrane_total
    report = NewtonReport()
    e = np.concatenate([np.zeros(n), spurious_multiplier_mode(layout)])
    border = sp.csr_matrix(e[:, None])

    def F(w):
        z, sigma = w[:-1], w[-1]
        r = residual(State.from_vector(z, n), problem, mesh, layout, ops=ops)
        return np.append(r + sigma * e, e @ z)

    z0 = initial.vector
    try:
        r0 = residual(initial, problem, mesh, layout, ops=ops)
    except NonFiniteStateError as exc:
        report.termination_reason = DIVERGED
        report.message = str(exc)
        return initial, report
    # least-squares sigma so that a solved state starts converged
    w = np.append(z0, -(e @ r0))
    r = F(w)
    norm0 = float(np.linalg.norm(r))
    tol = max(config.abs_tol, config.rel_tol * norm0)
    report.residual_norms.append(norm0)
    logger.info("newton: |F0| = %.6e, target %.3e", norm0, tol)

    while True:
        norm = report.residual_norms[-1]
        if norm <= tol:
            report.converged = True
            report.termination_reason = CONVERGED
            break
        if report.iterations >= config.max_iters:
            report.termination_reason = MAX_ITERATIONS
            break

        J = jacobian(State.from_vector(w[:-1], n), problem, mesh, layout, ops=ops)
        J = sp.bmat([[J, border], [border.T, None]], format="csc")
        try:
            dw = solve_linear(J, -r)
        except SingularMatrixError as exc:
            report.termination_reason = LINEAR_FAILURE
            report.message = str(exc)
            break

        f0 = 0.5 * norm**2
        g0 = float(r @ (J @ dw))
        if not g0 < 0.0:
            g0 = -2.0 * f0

        def merit(lam):
            try:
                rr = F(w + lam * dw)
            except NonFiniteStateError:
                return math.inf
            return 0.5 * float(rr @ rr)

        try:
            lam = line_search_cubic(
                merit,
                g0,
                f0=f0,
                sufficient_decrease=config.ls_sufficient_decrease,
                min_step=config.ls_min_step,
                max_backtracks=config.ls_max_backtracks,
            )
        except LineSearchError as exc:
            report.termination_reason = LINE_SEARCH_FAILURE
            report.message = str(exc)
            break

        w = w + lam * dw
        r = F(w)
        report.iterations += 1
        report.step_lengths.append(lam)
        report.residual_norms.append(float(np.linalg.norm(r)))
        logger.info(
            "newton %3d: |F| = %.6e, step = %.4g", report.iterations, report.residual_norms[-1], lam
        )

    report.mode_residual = float(w[-1])
    return State.from_vector(w[:-1], n), report
