"""Primal-dual interior-point solver for smooth nonlinear programs.

Handles problems of the form::

    min  f(x)
    s.t. g(x)  = 0
         h(x) <= 0
         l <= x <= u

Bounds may be infinite on either side; a pair with ``l == u`` pins the
variable and is treated internally as an equality row. General inequalities
get slacks ``z > 0`` with duals ``mu > 0``; finite bounds act as direct
log-barriers with duals ``alpha`` (lower) and ``beta`` (upper). Each Newton
step solves the reduced symmetric system in ``(dx, dlam)`` after eliminating
``(dz, dmu, dalpha, dbeta)``, applies a fraction-to-boundary line cap
separately to the primal and dual updates, and shrinks the barrier parameter
toward zero with the current complementarity gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]
Constraint = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
Hessian = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
NUMERICAL_FAILURE = "numerical_failure"

_REG_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0)


@dataclass(frozen=True)
class NlpProblem:
    """Callbacks and bounds describing one nonlinear program.

    ``objective(x)`` returns ``(value, gradient)``. ``equalities`` and
    ``inequalities`` each return ``(values, jacobian)`` and may be ``None``
    when absent. ``hessian(x, lam, mu)`` returns the Hessian of
    ``f + lam @ g + mu @ h`` (bounds contribute nothing).
    """

    objective: Objective
    lower: np.ndarray
    upper: np.ndarray
    equalities: Constraint | None = None
    inequalities: Constraint | None = None
    hessian: Hessian | None = None

    @property
    def n(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class NlpResult:
    x: np.ndarray
    f: float
    lam: np.ndarray          # duals of the caller's equality rows
    mu: np.ndarray           # duals of the general inequalities
    status: str              # optimal | max_iter | numerical_failure
    iterations: int
    kkt: dict = field(default_factory=dict)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == OPTIMAL


def _empty_constraint(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros(0), np.zeros((0, n))


def _evaluate(fun: Constraint | None, x: np.ndarray, n: int):
    if fun is None:
        return _empty_constraint(n)
    vals, jac = fun(x)
    return np.atleast_1d(np.asarray(vals, dtype=float)), np.atleast_2d(np.asarray(jac, dtype=float))


def _interior_start(x0, lower, upper, fixed, margin=1e-2):
    """Clip the start strictly inside the finite bounds; pinned entries exact."""
    x = np.asarray(x0, dtype=float).copy()
    both = np.isfinite(lower) & np.isfinite(upper) & ~fixed
    gap = np.where(both, upper - lower, np.inf)
    pad = np.minimum(margin, 0.25 * gap)
    lo_pad = np.where(np.isfinite(lower) & ~fixed, lower + pad, -np.inf)
    hi_pad = np.where(np.isfinite(upper) & ~fixed, upper - pad, np.inf)
    x = np.minimum(np.maximum(x, lo_pad), hi_pad)
    x[fixed] = lower[fixed]
    return x


def solve_nlp(
    problem: NlpProblem,
    x0: np.ndarray,
    *,
    tol: float = 1e-6,
    max_iter: int = 100,
    sigma: float = 0.1,
    ftb: float = 0.9995,
    gamma0: float = 1.0,
) -> NlpResult:
    """Solve ``problem`` starting near ``x0``.

    Convergence requires the normalized feasibility, dual-gradient, and
    complementarity residuals to all fall below ``tol``. On iteration
    exhaustion or an unrecoverable linear-algebra failure the best iterate
    seen so far is returned with the corresponding status.
    """
    lower = np.asarray(problem.lower, dtype=float)
    upper = np.asarray(problem.upper, dtype=float)
    n = problem.n
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")

    fixed = np.flatnonzero(lower == upper)
    fixed_mask = np.zeros(n, dtype=bool)
    fixed_mask[fixed] = True
    low_idx = np.flatnonzero(np.isfinite(lower) & ~fixed_mask)
    upp_idx = np.flatnonzero(np.isfinite(upper) & ~fixed_mask)

    x = _interior_start(x0, lower, upper, fixed_mask)

    h, jh = _evaluate(problem.inequalities, x, n)
    n_ineq = len(h)
    gamma = gamma0
    z = np.maximum(-h, 1e-2)
    mu = gamma / z if n_ineq else np.zeros(0)
    alpha = gamma / (x[low_idx] - lower[low_idx])
    beta = gamma / (upper[upp_idx] - x[upp_idx])

    g_user, _ = _evaluate(problem.equalities, x, n)
    n_eq_user = len(g_user)
    lam = np.zeros(n_eq_user + len(fixed))

    n_comp = n_ineq + len(low_idx) + len(upp_idx)
    best = None
    status, message = MAX_ITER, "iteration limit reached"
    iterations = 0

    for iterations in range(max_iter + 1):
        f, grad = problem.objective(x)
        g_user, jg_user = _evaluate(problem.equalities, x, n)
        h, jh = _evaluate(problem.inequalities, x, n)

        # Pinned variables become unit equality rows appended after the
        # caller's equalities.
        g = np.concatenate([g_user, x[fixed] - lower[fixed]])
        jg = np.zeros((len(g), n))
        if n_eq_user:
            jg[:n_eq_user] = jg_user
        jg[n_eq_user + np.arange(len(fixed)), fixed] = 1.0

        # Clipped warm starts or rounding can land an iterate exactly on a
        # bound; floor the barrier distances so the diagonal stays finite.
        sl = np.maximum(x[low_idx] - lower[low_idx], 1e-14)
        su = np.maximum(upper[upp_idx] - x[upp_idx], 1e-14)

        r_dual = grad + jg.T @ lam + (jh.T @ mu if n_ineq else 0.0)
        r_dual[low_idx] -= alpha
        r_dual[upp_idx] += beta

        comp = 0.0
        if n_ineq:
            comp += float(z @ mu)
        comp += float(sl @ alpha) + float(su @ beta)

        viol = 0.0
        if n_ineq:
            viol = max(viol, float(np.max(h)))
        if len(low_idx):
            viol = max(viol, float(np.max(lower[low_idx] - x[low_idx])))
        if len(upp_idx):
            viol = max(viol, float(np.max(x[upp_idx] - upper[upp_idx])))

        x_norm = float(np.max(np.abs(x))) if n else 0.0
        z_norm = float(np.max(np.abs(z))) if n_ineq else 0.0
        dual_norm = max(
            (float(np.max(np.abs(v))) for v in (lam, mu, alpha, beta) if len(v)),
            default=0.0,
        )
        feascond = max(
            float(np.max(np.abs(g))) if len(g) else 0.0, viol
        ) / (1.0 + max(x_norm, z_norm))
        gradcond = (float(np.max(np.abs(r_dual))) if n else 0.0) / (1.0 + dual_norm)
        compcond = comp / (1.0 + x_norm)

        kkt = {
            "feasibility": feascond,
            "gradient": gradcond,
            "complementarity": compcond,
        }
        score = max(feascond, gradcond, compcond)
        if best is None or score < best[0]:
            best = (score, x.copy(), float(f), lam.copy(), mu.copy(), iterations, dict(kkt))

        if feascond <= tol and gradcond <= tol and compcond <= tol:
            return NlpResult(
                x=x, f=float(f), lam=lam[:n_eq_user], mu=mu,
                status=OPTIMAL, iterations=iterations, kkt=kkt,
                message="converged",
            )
        if iterations == max_iter:
            break

        gamma = sigma * comp / n_comp if n_comp else 0.0

        lam_user = lam[:n_eq_user]
        if problem.hessian is not None:
            hess = np.asarray(problem.hessian(x, lam_user, mu), dtype=float)
        else:
            hess = np.zeros((n, n))

        w = hess.copy()
        if n_ineq:
            w += jh.T @ (jh * (mu / z)[:, None])
        diag = np.zeros(n)
        diag[low_idx] += alpha / sl
        diag[upp_idx] += beta / su
        w[np.arange(n), np.arange(n)] += diag

        rhs_x = -(grad + jg.T @ lam)
        if n_ineq:
            rhs_x -= jh.T @ ((gamma + mu * (h + z)) / z)
        rhs_x[low_idx] += gamma / sl
        rhs_x[upp_idx] -= gamma / su

        n_eq = len(g)
        rhs = np.concatenate([rhs_x, -g])
        step = None
        for delta in _REG_LADDER:
            kkt_mat = np.zeros((n + n_eq, n + n_eq))
            kkt_mat[:n, :n] = w
            if delta:
                kkt_mat[np.arange(n), np.arange(n)] += delta
                kkt_mat[n + np.arange(n_eq), n + np.arange(n_eq)] -= delta
            kkt_mat[:n, n:] = jg.T
            kkt_mat[n:, :n] = jg
            try:
                cand = np.linalg.solve(kkt_mat, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(cand)):
                step = cand
                break
        if step is None:
            status, message = NUMERICAL_FAILURE, "singular KKT system"
            break

        dx = step[:n]
        dlam = step[n:]
        if n_ineq:
            dz = -(h + z) - jh @ dx
            dmu = gamma / z - mu - (mu / z) * dz
        else:
            dz = np.zeros(0)
            dmu = np.zeros(0)
        dalpha = gamma / sl - alpha - (alpha / sl) * dx[low_idx]
        dbeta = gamma / su - beta + (beta / su) * dx[upp_idx]

        # Fraction-to-boundary caps, primal and dual separately.
        a_primal = 1.0
        if n_ineq and np.any(dz < 0):
            a_primal = min(a_primal, ftb * float(np.min(-z[dz < 0] / dz[dz < 0])))
        neg = dx[low_idx] < 0
        if np.any(neg):
            a_primal = min(a_primal, ftb * float(np.min(-sl[neg] / dx[low_idx][neg])))
        pos = dx[upp_idx] > 0
        if np.any(pos):
            a_primal = min(a_primal, ftb * float(np.min(su[pos] / dx[upp_idx][pos])))

        a_dual = 1.0
        for vec, dvec in ((mu, dmu), (alpha, dalpha), (beta, dbeta)):
            if len(vec) and np.any(dvec < 0):
                mask = dvec < 0
                a_dual = min(a_dual, ftb * float(np.min(-vec[mask] / dvec[mask])))

        x = x + a_primal * dx
        z = z + a_primal * dz
        lam = lam + a_dual * dlam
        mu = mu + a_dual * dmu
        alpha = alpha + a_dual * dalpha
        beta = beta + a_dual * dbeta
        x[fixed] = lower[fixed]

        if not np.all(np.isfinite(x)):
            status, message = NUMERICAL_FAILURE, "iterate diverged"
            break

    _, bx, bf, blam, bmu, bit, bkkt = best
    return NlpResult(
        x=bx, f=bf, lam=blam[:n_eq_user], mu=bmu,
        status=status, iterations=iterations, kkt=bkkt, message=message,
    )
