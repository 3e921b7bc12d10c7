"""Preconditioned conjugate gradients with residual tracking and
condition-number estimates from the underlying Lanczos process.

The CG coefficients (alpha_j, beta_j) determine the Lanczos tridiagonal of
the preconditioned operator BA:

    T[0,0] = 1/alpha_0,
    T[j,j] = 1/alpha_j + beta_{j-1}/alpha_{j-1},
    T[j-1,j] = sqrt(beta_{j-1}) / alpha_{j-1},

whose extreme eigenvalues estimate lambda_min/lambda_max of BA.  The same
recurrence, run on a random right-hand side with optional full
B-reorthogonalization of the residuals, serves as a standalone eigenvalue
probe (lanczos_condition).
"""

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

__all__ = ["SolveReport", "pcg", "condition_estimate", "lanczos_condition"]


def _as_apply(op):
    if op is None:
        return lambda v: v.copy()
    if callable(op) and not hasattr(op, "shape"):
        return op
    return lambda v, _op=op: _op @ v


def _tridiag_extremes(alphas, betas):
    m = len(alphas)
    diag = np.empty(m)
    diag[0] = 1.0 / alphas[0]
    if m > 1:
        a = np.asarray(alphas)
        b = np.asarray(betas[:m - 1])
        diag[1:] = 1.0 / a[1:] + b / a[:-1]
        off = np.sqrt(b) / a[:-1]
        ev = eigvalsh_tridiagonal(diag, off)
    else:
        ev = diag
    return float(ev[0]), float(ev[-1])


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)  # relative, per iteration
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    kappa_estimate: Optional[float] = None
    kappa_confident: bool = False
    true_relative_residual: float = 0.0
    orthogonality_warning: bool = False
    wall_time_seconds: float = 0.0


def pcg(apply_A, apply_B=None, b=None, tol=1e-8, maxit=1000,
        project=None, callback=None):
    """Conjugate gradients from a zero initial guess.

    apply_A / apply_B are callables or matrices; apply_B defaults to the
    identity.  Convergence is declared when the recursive residual drops
    below tol relative to ||b||; the true residual b - Ax is recomputed at
    exit and the report carries an orthogonality warning if it misses the
    tolerance by more than a factor of 2.  project, if given, is applied
    to residuals and preconditioned residuals (used to pin the constant
    null space of pure-Neumann problems).
    """
    A = _as_apply(apply_A)
    B = _as_apply(apply_B)
    b = np.asarray(b, dtype=float)
    t0 = time.perf_counter()
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    rep = SolveReport(converged=True, iterations=0)
    if bnorm == 0.0:
        rep.wall_time_seconds = time.perf_counter() - t0
        return x, rep
    r = b.copy()
    if project is not None:
        r = project(r)
    z = B(r)
    if project is not None:
        z = project(z)
    rz = float(r @ z)
    if rz <= 0.0:
        raise RuntimeError("pcg breakdown: preconditioner is not positive "
                           f"definite (<r, Br> = {rz:g})")
    p = z.copy()
    converged = False
    for _ in range(maxit):
        Ap = A(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise RuntimeError("pcg breakdown: operator is not positive "
                               f"definite on a search direction (<p, Ap> = {pAp:g})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            r = project(r)
        rep.alphas.append(alpha)
        rel = np.linalg.norm(r) / bnorm
        rep.residuals.append(rel)
        rep.iterations += 1
        if callback is not None:
            callback(rep.iterations, x, rel)
        if rel < tol:
            converged = True
            break
        z = B(r)
        if project is not None:
            z = project(z)
        rz_new = float(r @ z)
        if rz_new <= 0.0:
            raise RuntimeError("pcg breakdown: preconditioner is not positive "
                               f"definite (<r, Br> = {rz_new:g})")
        beta = rz_new / rz
        rep.betas.append(beta)
        p = z + beta * p
        rz = rz_new
    rep.converged = converged
    if rep.alphas:
        lmin, lmax = _tridiag_extremes(rep.alphas, rep.betas)
        if lmin > 0:
            rep.kappa_estimate = lmax / lmin
            rep.kappa_confident = len(rep.alphas) >= 5
    r_true = b - A(x)
    if project is not None:
        r_true = project(r_true)
    rep.true_relative_residual = float(np.linalg.norm(r_true) / bnorm)
    if converged and rep.true_relative_residual > 2.0 * tol:
        rep.orthogonality_warning = True
    rep.wall_time_seconds = time.perf_counter() - t0
    return x, rep


def condition_estimate(report_or_ops, n=None, steps=None, seed=0):
    """(lambda_min, lambda_max, kappa) of a preconditioned operator.

    Pass a SolveReport to reuse the coefficients of a finished solve, or an
    (apply_A, apply_B) pair plus the dimension n to run a fresh Lanczos
    probe.  Estimates from fewer than 5 steps are flagged unreliable by
    condition_estimate(report).kappa_confident upstream; here they raise.
    """
    if isinstance(report_or_ops, SolveReport):
        rep = report_or_ops
        if len(rep.alphas) < 2:
            raise ValueError("too few iterations for a spectral estimate")
        lmin, lmax = _tridiag_extremes(rep.alphas, rep.betas)
        return lmin, lmax, lmax / lmin
    apply_A, apply_B = report_or_ops
    if n is None:
        raise ValueError("dimension n is required for an operator probe")
    return lanczos_condition(apply_A, apply_B, n, steps=steps, seed=seed)


def lanczos_condition(apply_A, apply_B=None, n=None, steps=None, seed=0,
                      reorthogonalize=None):
    """Extreme-eigenvalue probe of BA via the PCG-Lanczos recurrence.

    Runs the CG recurrence on a random right-hand side, collecting the
    tridiagonal; for n <= 2000 (default) the residual sequence is fully
    B-reorthogonalized so the estimate stays faithful for many steps.
    Returns (lambda_min, lambda_max, kappa).
    """
    if n is None:
        raise ValueError("dimension n is required")
    A = _as_apply(apply_A)
    B = _as_apply(apply_B)
    if steps is None:
        steps = min(n, 300)
    if reorthogonalize is None:
        reorthogonalize = n <= 2000
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(n)
    z = B(r)
    rz = float(r @ z)
    if rz <= 0:
        raise RuntimeError("preconditioner is not positive definite")
    rz0 = rz
    p = z.copy()
    alphas, betas = [], []
    basis = []  # (r_i, z_i) scaled by 1/sqrt(rho_i), for reorthogonalization
    if reorthogonalize:
        s = 1.0 / np.sqrt(rz)
        basis.append((r * s, z * s))
    for _ in range(min(steps, n)):
        Ap = A(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise RuntimeError("operator is not positive definite")
        alpha = rz / pAp
        alphas.append(alpha)
        r = r - alpha * Ap
        if reorthogonalize:
            for rb, zb in basis:
                r -= (zb @ r) * rb
        z = B(r)
        rz_new = float(r @ z)
        if rz_new <= rz0 * 1e-28 or rz_new <= 0.0:
            break
        betas.append(rz_new / rz)
        if reorthogonalize:
            s = 1.0 / np.sqrt(rz_new)
            basis.append((r * s, z * s))
        p = z + (rz_new / rz) * p
        rz = rz_new
    if len(alphas) < 2:
        raise RuntimeError("Lanczos probe terminated after one step")
    m = len(betas) + 1
    lmin, lmax = _tridiag_extremes(alphas[:m], betas)
    return lmin, lmax, lmax / lmin
