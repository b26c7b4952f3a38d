"""Accelerated projected-gradient descent over the density-matrix set.

Shared by maximum-likelihood estimation and the boundary-point search.
The feasible set {rho : rho = rho^dag, rho >= 0, tr(rho) = 1} is handled by
an eigenvalue projection onto the probability simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto {w >= 0, sum w = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    cond = u - css / idx > 0
    k = idx[cond][-1]
    theta = css[k - 1] / k
    return np.maximum(v - theta, 0.0)


def project_density(hermitian: np.ndarray) -> np.ndarray:
    """Nearest density matrix in Frobenius norm (eigenvalue simplex projection)."""
    h = 0.5 * (hermitian + hermitian.conj().T)
    vals, vecs = np.linalg.eigh(h)
    w = simplex_project(vals)
    return (vecs * w) @ vecs.conj().T


@dataclass
class ApgResult:
    x: np.ndarray
    value: float
    converged: bool
    n_iter: int


def apg_minimize(
    value_fn,
    grad_fn,
    start: np.ndarray,
    *,
    max_iters: int = 5000,
    pg_tol: float = 1e-8,
    value_tol: float | None = None,
    step: float = 1.0,
    min_step: float = 1e-18,
) -> ApgResult:
    """FISTA-style minimization with restart-on-increase and step backtracking.

    Stops when the projected-gradient norm (unit probe step on the current
    step size scale) drops below pg_tol, or when value_fn falls below
    value_tol if one is given. The objective is non-increasing across
    accepted iterates.
    """
    x = project_density(start)
    fx = value_fn(x)
    y = x
    t = 1.0
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        z = project_density(y - step * grad_fn(y))
        fz = value_fn(z)
        if not np.isfinite(fz) or fz > fx:
            # momentum overshoot: restart from the last accepted iterate
            y = x
            t = 1.0
            z = project_density(y - step * grad_fn(y))
            fz = value_fn(z)
            while (not np.isfinite(fz) or fz > fx) and step > min_step:
                step *= 0.5
                z = project_density(y - step * grad_fn(y))
                fz = value_fn(z)
            if not np.isfinite(fz) or fz > fx:
                break  # no descent direction left at the smallest step
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z + ((t - 1.0) / t_next) * (z - x)
        x, fx, t = z, fz, t_next
        if value_tol is not None and fx < value_tol:
            converged = True
            break
        pg = x - project_density(x - grad_fn(x))
        if np.linalg.norm(pg) < pg_tol:
            converged = True
            break
    return ApgResult(x=x, value=fx, converged=converged, n_iter=n_iter)
