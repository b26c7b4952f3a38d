"""Measurement modeling, data simulation, likelihood, ML estimation and region geometry.

The measurement is a probability-operator measurement (POM): M positive
operators summing to the identity. Counts are multinomial. Probabilities
are affine in the coordinate vector r, so the log-likelihood Hessian is
exact and the large-data geometry (Case A: full-rank estimator, interior
hyperellipsoid; Case B: rank-deficient estimator, boundary-truncated
hyperellipsoid) follows from the quadratic expansion around the maximum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from ._apg import apg_minimize, project_density
from .states import OperatorBasis, build_basis, rho_to_r

NEG_INF = float("-inf")
RANK_TOL_FACTOR = 1e-6  # eigenvalues above this fraction of the largest count toward the rank
SCORE_TOL_FACTOR = 1e-6  # Case-A score consistency scale


class NotInformationallyComplete(ValueError):
    """POM jacobian does not span the traceless operator space."""


@dataclass(frozen=True)
class Pom:
    """POM outcomes with the precomputed affine probability map p = offsets + jacobian @ r."""

    outcomes: np.ndarray = field(repr=False)  # (M, D, D) complex
    jacobian: np.ndarray = field(repr=False)  # (M, d) real, rows tr(Pi_j Omega_k)
    offsets: np.ndarray = field(repr=False)  # (M,) real, tr(Pi_j)/D

    @property
    def n_outcomes(self) -> int:
        return self.outcomes.shape[0]

    @property
    def dimension(self) -> int:
        return self.outcomes.shape[1]

    def is_informationally_complete(self) -> bool:
        return np.linalg.matrix_rank(self.jacobian, tol=1e-10) == self.jacobian.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Measured counts; float counts are allowed for synthetic noiseless data."""

    counts: np.ndarray  # (M,)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if counts.sum() < 1:
            raise ValueError("total number of copies must be >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())


def pom_from_outcomes(outcomes: np.ndarray, basis: OperatorBasis | None = None) -> Pom:
    """Build a Pom from explicit outcome matrices, validating POM structure."""
    outcomes = np.asarray(outcomes, dtype=complex)
    m, dim, dim2 = outcomes.shape
    if dim != dim2:
        raise ValueError("outcomes must be square matrices")
    if basis is None:
        basis = build_basis(dim)
    identity_defect = np.max(np.abs(outcomes.sum(axis=0) - np.eye(dim)))
    if identity_defect > 1e-10:
        raise ValueError(f"outcomes do not sum to the identity (defect {identity_defect:.2e})")
    for k in range(m):
        if np.min(np.linalg.eigvalsh(0.5 * (outcomes[k] + outcomes[k].conj().T))) < -1e-10:
            raise ValueError(f"outcome {k} is not positive semidefinite")
    flat = outcomes.reshape(m, -1)
    jac = flat @ basis.flat.conj().T  # tr(Pi_j Omega_k), real for Hermitian pairs
    if np.max(np.abs(jac.imag)) > 1e-10:
        raise ValueError("jacobian entries have non-negligible imaginary parts")
    offsets = np.einsum("mii->m", outcomes).real / dim
    return Pom(outcomes=outcomes, jacobian=jac.real.copy(), offsets=offsets)


def random_srm_pom(
    dimension: int,
    n_outcomes: int,
    rng: np.random.Generator,
    basis: OperatorBasis | None = None,
    max_attempts: int = 100,
) -> Pom:
    """Random square-root measurement from Haar-random pure states.

    Draws M normalized complex-Gaussian vectors |psi_j>, forms the frame
    operator G = sum |psi_j><psi_j| and returns Pi_j = G^-1/2 |psi_j><psi_j| G^-1/2.
    Redraws until the POM is informationally complete.
    """
    if n_outcomes < dimension**2:
        raise NotInformationallyComplete(
            f"need at least D^2 = {dimension**2} outcomes for informational completeness, "
            f"got {n_outcomes}"
        )
    if basis is None:
        basis = build_basis(dimension)
    for _ in range(max_attempts):
        kets = rng.standard_normal((n_outcomes, dimension)) + 1j * rng.standard_normal(
            (n_outcomes, dimension)
        )
        kets /= np.linalg.norm(kets, axis=1, keepdims=True)
        frame = kets.conj().T @ kets  # sum_j |psi_j><psi_j|, as D x D
        vals, vecs = np.linalg.eigh(frame)
        if vals[0] < 1e-12:
            continue  # singular frame; redraw
        inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.conj().T
        rotated = kets @ inv_sqrt.T  # G^-1/2 |psi_j>
        outcomes = rotated[:, :, None] * rotated.conj()[:, None, :]
        pom = pom_from_outcomes(outcomes, basis)
        if pom.is_informationally_complete():
            return pom
    raise NotInformationallyComplete(
        f"no informationally complete draw in {max_attempts} attempts"
    )


def born_probabilities(rho: np.ndarray, pom: Pom) -> np.ndarray:
    """Outcome probabilities p_j = tr(rho Pi_j), clamped at 0 against roundoff."""
    rho = np.asarray(rho)
    if rho.shape != (pom.dimension, pom.dimension):
        raise ValueError("state dimension does not match the POM")
    p = np.einsum("mij,ji->m", pom.outcomes, rho)
    if np.max(np.abs(p.imag)) > 1e-10:
        raise ValueError("probabilities have non-negligible imaginary parts")
    p = p.real
    if np.min(p) < -1e-12:
        raise ValueError(f"negative probability {np.min(p):.2e}; state not PSD?")
    p = np.maximum(p, 0.0)
    total = p.sum()
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"probabilities sum to {total}, not 1")
    return p


def simulate_counts(p: np.ndarray, n_copies: int, rng: np.random.Generator) -> Dataset:
    """One multinomial draw of n_copies measurements."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("probabilities must be nonnegative")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, not 1")
    if n_copies < 1:
        raise ValueError("need at least one copy")
    return Dataset(counts=rng.multinomial(n_copies, p / total))


def log_likelihood(dataset: Dataset, r: np.ndarray, pom: Pom) -> float:
    """log L = sum_j n_j ln p_j(r) in nats, skipping zero-count outcomes.

    Returns -inf (sentinel, not an exception) when some observed outcome
    has nonpositive probability at r.
    """
    p = pom.offsets + pom.jacobian @ np.asarray(r, dtype=float)
    mask = dataset.counts > 0
    pm = p[mask]
    if np.any(pm <= 0):
        return NEG_INF
    return float(dataset.counts[mask] @ np.log(pm))


@dataclass
class MlEstimate:
    rho: np.ndarray
    log_likelihood: float
    converged: bool
    n_iter: int


def ml_estimate(
    dataset: Dataset,
    pom: Pom,
    basis: OperatorBasis | None = None,
    *,
    max_iters: int = 5000,
    grad_tol: float = 1e-8,
    start: np.ndarray | None = None,
) -> MlEstimate:
    """Maximum-likelihood state via accelerated projected gradient ascent.

    Ascends sum_j (n_j/p_j) Pi_j - N 1 (normalized by N) with momentum and
    restart-on-decrease; iterates are projected onto density matrices by
    eigenvalue simplex projection. The log-likelihood is non-decreasing
    across accepted iterates.
    """
    if not pom.is_informationally_complete():
        raise NotInformationallyComplete("ml_estimate requires an informationally complete POM")
    if basis is None:
        basis = build_basis(pom.dimension)
    counts = dataset.counts
    total = dataset.total
    mask = counts > 0
    nz_counts = counts[mask]
    nz_outcomes = pom.outcomes[mask]
    nz_flat = nz_outcomes.reshape(len(nz_counts), -1)
    dim = pom.dimension
    eye = np.eye(dim)

    def probs(rho):
        return np.einsum("mij,ji->m", nz_outcomes, rho).real

    def neg_loglike(rho):
        p = probs(rho)
        if np.any(p <= 0):
            return np.inf
        return -float(nz_counts @ np.log(p))

    def neg_grad(rho):
        p = np.maximum(probs(rho), 1e-300)
        raised = ((nz_counts / p) @ nz_flat).reshape(dim, dim)
        return -(0.5 * (raised + raised.conj().T) - total * eye) / total

    x0 = eye / dim if start is None else project_density(np.asarray(start, dtype=complex))
    result = apg_minimize(
        neg_loglike, neg_grad, x0, max_iters=max_iters, pg_tol=grad_tol, step=1.0
    )
    if not result.converged:
        warnings.warn(
            f"ml_estimate hit the iteration cap ({max_iters}); returning the best iterate",
            RuntimeWarning,
        )
    return MlEstimate(
        rho=result.x,
        log_likelihood=-result.value,
        converged=result.converged,
        n_iter=result.n_iter,
    )


@dataclass
class MlSummary:
    """Everything downstream modules need about one maximum-likelihood fit."""

    r_ml: np.ndarray
    log_l_max: float
    fisher: np.ndarray  # (d, d) observed information at the maximum
    score: np.ndarray  # (d,) gradient of log L at the maximum
    rank: int
    case_label: Literal["A", "B"]
    r_c: np.ndarray  # center of the boundary-expanded Gaussian
    log_l_max_eff: float  # height of that Gaussian, >= log_l_max
    support_projector: np.ndarray  # (D, D)
    eigenvalues: np.ndarray  # (D,) ascending
    eigenvectors: np.ndarray  # (D, D) columns
    basis: OperatorBasis
    loglike: Callable[[np.ndarray], np.ndarray]  # vectorized over (K, d) points
    fisher_regularized: bool = False
    rank_tol: float = 0.0

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    @property
    def n_parameters(self) -> int:
        return self.basis.n_operators


def likelihood_summary(
    dataset: Dataset,
    pom: Pom,
    basis: OperatorBasis,
    rho_ml: np.ndarray | MlEstimate,
) -> MlSummary:
    """Fisher information, score, rank classification and Gaussian geometry at the maximum."""
    if isinstance(rho_ml, MlEstimate):
        rho_ml = rho_ml.rho
    counts = dataset.counts
    # the traceless basis makes the probability gradients sum to zero, so the
    # score needs no constraint correction; assert rather than assume
    row_sum = np.max(np.abs(pom.jacobian.sum(axis=0)))
    if row_sum > 1e-8:
        raise ValueError(f"POM jacobian rows do not sum to zero ({row_sum:.2e})")
    p_hat = born_probabilities(rho_ml, pom)
    mask = counts > 0
    if np.any(p_hat[mask] < 1e-14):
        warnings.warn("observed outcome with near-zero fitted probability", RuntimeWarning)
    pm = np.maximum(p_hat[mask], 1e-300)
    jm = pom.jacobian[mask]
    nm = counts[mask]
    fisher = (jm * (nm / pm**2)[:, None]).T @ jm
    fisher = 0.5 * (fisher + fisher.T)
    score = jm.T @ (nm / pm)
    r_ml = rho_to_r(rho_ml, basis)
    log_l_max = float(nm @ np.log(pm))

    vals, vecs = np.linalg.eigh(rho_ml)
    rank_tol = RANK_TOL_FACTOR * vals[-1]
    kept = vals > rank_tol
    rank = int(kept.sum())
    case_label = "A" if rank == pom.dimension else "B"
    support = (vecs[:, kept]) @ vecs[:, kept].conj().T

    regularized = False
    d = basis.n_operators
    try:
        finv_g = np.linalg.solve(fisher, score)
    except np.linalg.LinAlgError:
        finv_g = None
    if finv_g is None or not np.all(np.isfinite(finv_g)):
        regularized = True
        ridge = 1e-10 * np.trace(fisher) / d
        fisher = fisher + ridge * np.eye(d)
        finv_g = np.linalg.solve(fisher, score)
    r_c = r_ml + finv_g
    log_l_max_eff = log_l_max + 0.5 * float(score @ finv_g)

    nz_counts = nm.copy()
    nz_jac = jm.copy()
    nz_off = pom.offsets[mask].copy()

    def loglike(points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        p = nz_off + np.atleast_2d(pts) @ nz_jac.T
        bad = np.any(p <= 0, axis=1)
        out = np.log(np.maximum(p, 1e-300)) @ nz_counts
        out[bad] = NEG_INF
        return float(out[0]) if single else out

    return MlSummary(
        r_ml=r_ml,
        log_l_max=log_l_max,
        fisher=fisher,
        score=score,
        rank=rank,
        case_label=case_label,
        r_c=r_c,
        log_l_max_eff=log_l_max_eff,
        support_projector=support,
        eigenvalues=vals,
        eigenvectors=vecs,
        basis=basis,
        loglike=loglike,
        fisher_regularized=regularized,
        rank_tol=rank_tol,
    )


@dataclass(frozen=True)
class RegionSpec:
    """Bounding geometry of the credible region at one likelihood threshold.

    The bounding ellipsoid is {r : (r - center) . shape_matrix . (r - center) <= 1}
    with shape_matrix = F / (-2 ln lambda'). In Case B the region is that
    ellipsoid truncated by the state-space boundary, modeled as the
    hyperplane through r_ml with normal along the score; cap_l is the
    offset of that plane from the ellipsoid center in ellipsoid units.
    """

    lam: float
    lam_prime: float
    shape_matrix: np.ndarray | None
    center: np.ndarray
    cap_l: float
    normal: np.ndarray | None
    case_label: Literal["A", "B"]
    degenerate: bool = False

    @property
    def is_point(self) -> bool:
        return self.degenerate or self.cap_l >= 1.0 - 1e-12

    def ellipsoid_value(self, points: np.ndarray) -> np.ndarray:
        delta = np.atleast_2d(points) - self.center
        vals = np.einsum("ki,ij,kj->k", delta, self.shape_matrix, delta)
        return vals if np.asarray(points).ndim > 1 else vals[0]


def region_spec(summary: MlSummary, lam: float) -> RegionSpec:
    """Per-lambda bounding ellipsoid, effective threshold and cap parameter."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must be in (0, 1], got {lam}")
    if summary.case_label == "A":
        if lam == 1.0:
            return RegionSpec(
                lam=1.0, lam_prime=1.0, shape_matrix=None, center=summary.r_ml,
                cap_l=0.0, normal=None, case_label="A", degenerate=True,
            )
        shape = summary.fisher / (-2.0 * np.log(lam))
        return RegionSpec(
            lam=lam, lam_prime=lam, shape_matrix=shape, center=summary.r_ml,
            cap_l=0.0, normal=None, case_label="A",
        )
    quad = float(summary.score @ np.linalg.solve(summary.fisher, summary.score))
    lam_prime = min(lam * np.exp(-0.5 * quad), 1.0)
    minus_two_log = -2.0 * np.log(lam_prime)
    if minus_two_log <= 0.0:
        return RegionSpec(
            lam=lam, lam_prime=lam_prime, shape_matrix=None, center=summary.r_ml,
            cap_l=0.0, normal=None, case_label="B", degenerate=True,
        )
    shape = summary.fisher / minus_two_log
    cap_l = float(np.sqrt(min(max(quad / minus_two_log, 0.0), 1.0)))
    normal = summary.score / np.linalg.norm(summary.score)
    return RegionSpec(
        lam=lam, lam_prime=lam_prime, shape_matrix=shape, center=summary.r_c,
        cap_l=cap_l, normal=normal, case_label="B",
    )
