"""Accelerated hit-and-run Markov chain over a credible region.

Each step draws an isotropic random chord through the current point, with
endpoints on the bounding ellipsoid, then picks points along the chord from
the prior's line marginal until one corresponds to a positive state. On a
rejection the chord interval is shrunk toward the current point, so no
sample is ever wasted on re-scanning the rejected side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from ._apg import apg_minimize
from .states import _cholesky_psd, is_positive_state, r_to_rho, random_density, rho_to_r
from .tomography import MlSummary, RegionSpec

MEMBERSHIP_SLACK = 1e-9


class ChordStuckError(RuntimeError):
    """Too many consecutive shrink-redraw failures on hit-and-run chords."""


class NoBoundaryPoints(RuntimeError):
    """Every boundary-point minimization failed to reach the region surface."""


@dataclass(frozen=True)
class Prior:
    """Sampling prior: the uniform primitive prior in r, or a Gaussian.

    The Gaussian is parametrized by its precision matrix; the conjugate
    choice for a fit with N copies is precision = fisher / N centered at
    the ML estimator.
    """

    kind: str
    center: np.ndarray | None = None
    precision: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.center is None or self.precision is None:
                raise ValueError("gaussian prior needs a center and a precision matrix")
            p = np.asarray(self.precision)
            if np.max(np.abs(p - p.T)) > 1e-10 or np.min(np.linalg.eigvalsh(p)) < -1e-10:
                raise ValueError("gaussian precision must be symmetric PSD")

    @classmethod
    def uniform(cls) -> "Prior":
        return cls(kind="uniform")

    @classmethod
    def gaussian(cls, center: np.ndarray, precision: np.ndarray) -> "Prior":
        return cls(kind="gaussian", center=np.asarray(center, float),
                   precision=np.asarray(precision, float))


@dataclass
class ChainState:
    current: np.ndarray
    steps_taken: int
    rejections: int


@dataclass
class SampleBatch:
    points: np.ndarray  # (K, d)
    log_likelihoods: np.ndarray  # (K,)
    start_point: np.ndarray
    burn_in: int
    thin: int
    n_redraws: int
    n_chord_restarts: int
    final_state: ChainState = field(repr=False, default=None)


def line_gaussian_marginal(prior: Prior, ref: np.ndarray, direction: np.ndarray):
    """Mean and variance of the Gaussian prior restricted to ref + beta * direction."""
    if prior.kind != "gaussian":
        raise ValueError("line marginal is defined for the gaussian prior only")
    pe = prior.precision @ direction
    epe = float(direction @ pe)
    if epe <= 0.0:
        raise ValueError("degenerate direction: zero precision along the line")
    mean = float(pe @ (prior.center - ref)) / epe
    return mean, 1.0 / epe


def _truncated_normal(mean, sd, lo, hi, u):
    """Inverse-CDF draw from N(mean, sd^2) truncated to [lo, hi]; u ~ U(0,1)."""
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    if a + b <= 0.0:  # better conditioned in CDF space
        pa = ndtr(a)
        pb = ndtr(b)
        if pb - pa > 5e-324:
            x = ndtri(pa + u * (pb - pa))
        else:
            x = b  # interval deep in the left tail: take the endpoint nearest the mean
    else:  # right tail: survival space
        qa = ndtr(-a)
        qb = ndtr(-b)
        if qa - qb > 5e-324:
            x = -ndtri(qb + u * (qa - qb))
        else:
            x = a
    return float(np.clip(mean + sd * x, lo, hi))


def hit_and_run_sample(
    region: RegionSpec,
    prior: Prior,
    start: np.ndarray,
    k_smp: int,
    rng: np.random.Generator,
    *,
    summary: MlSummary | None = None,
    loglike=None,
    burn_in: int = 0,
    thin: int = 1,
    inflation: float = 1.0,
    max_chord_failures: int = 10_000,
    max_chord_restarts: int = 100,
) -> SampleBatch:
    """Collect k_smp in-region points (after burn_in, keeping every thin-th step).

    Chord endpoints mu+- = [-b +- sqrt(b^2 - a(c-1))]/a come from the
    bounding-ellipsoid quadratic along the random unit direction; beta is
    drawn from the prior's line marginal truncated to the current interval,
    and positivity is checked by Cholesky. The interval shrinks toward the
    current point on each rejection. With inflation > 1 the chord lives on
    an enlarged ellipsoid and candidates must additionally pass the base
    ellipsoid inequality.
    """
    if k_smp < 1:
        raise ValueError("k_smp must be >= 1")
    if thin < 1 or burn_in < 0:
        raise ValueError("invalid thin/burn_in")
    if not 1.0 <= inflation <= 2.0:
        raise ValueError("inflation must lie in [1.0, 2.0]")
    if region.is_point or region.shape_matrix is None:
        raise ValueError("cannot run a chain on a degenerate (single-point) region")
    if loglike is None and summary is not None:
        loglike = summary.loglike

    basis = summary.basis if summary is not None else None
    if basis is None:
        from .states import build_basis  # deferred: only when no summary is supplied

        dim = int(round(np.sqrt(len(region.center) + 1)))
        basis = build_basis(dim)
    omegas_flat = basis.flat
    dim = basis.dimension

    shape = region.shape_matrix
    center = region.center
    d = len(center)
    start = np.asarray(start, dtype=float)
    rho_start = r_to_rho(start, basis)
    if not is_positive_state(rho_start):
        raise ValueError("start point is not a positive state")
    if region.ellipsoid_value(start) > 1.0 + MEMBERSHIP_SLACK:
        raise ValueError("start point lies outside the bounding ellipsoid")

    inflated = inflation > 1.0
    chord_shape = shape / inflation**2 if inflated else shape

    gaussian = prior.kind == "gaussian"

    cur = start.copy()
    rho_cur = rho_start
    delta = cur - center
    w = chord_shape @ delta
    c_val = float(delta @ w)
    if inflated:
        w_base = shape @ delta
        c_base = float(delta @ w_base)

    total_steps = burn_in + k_smp * thin
    points = np.empty((k_smp, d))
    n_collected = 0
    n_redraws = 0
    n_restarts = 0

    for step in range(total_steps):
        accepted = False
        restarts_here = 0
        while not accepted:
            e = rng.standard_normal(d)
            e /= np.linalg.norm(e)
            ae = chord_shape @ e
            a_coef = float(e @ ae)
            b_coef = float(w @ e)
            disc = b_coef * b_coef - a_coef * (c_val - 1.0)
            if disc < 0.0:
                disc = 0.0  # roundoff when the point sits numerically on the boundary
            root = np.sqrt(disc)
            b1 = (-b_coef - root) / a_coef
            b2 = (-b_coef + root) / a_coef
            if gaussian:
                mean, var = line_gaussian_marginal(prior, cur, e)
                sd = np.sqrt(var)
            step_dir = (omegas_flat.T @ e).reshape(dim, dim)
            if inflated:
                ae_base = shape @ e
                a_base = float(e @ ae_base)
                b_base = float(w_base @ e)
            failures = 0
            while True:
                if gaussian:
                    beta = _truncated_normal(mean, sd, b1, b2, rng.random())
                else:
                    beta = b1 + (b2 - b1) * rng.random()
                ok = True
                if inflated:
                    ok = c_base + beta * (2.0 * b_base + beta * a_base) <= 1.0 + MEMBERSHIP_SLACK
                if ok:
                    rho_test = rho_cur + beta * step_dir
                    ok = _cholesky_psd(rho_test)
                if ok:
                    accepted = True
                    break
                n_redraws += 1
                failures += 1
                if failures > max_chord_failures or beta == 0.0:
                    restarts_here += 1
                    n_restarts += 1
                    if restarts_here > max_chord_restarts:
                        raise ChordStuckError(
                            f"chord stuck after {max_chord_restarts} direction restarts"
                        )
                    break  # new direction
                if beta < 0.0:
                    b1 = beta
                else:
                    b2 = beta
        cur = cur + beta * e
        rho_cur = rho_test
        delta = cur - center
        w = chord_shape @ delta
        c_val = float(delta @ w)
        if inflated:
            w_base = shape @ delta
            c_base = float(delta @ w_base)
        k = step - burn_in
        if k >= 0 and (k + 1) % thin == 0:
            points[n_collected] = cur
            n_collected += 1

    lls = loglike(points) if loglike is not None else np.full(k_smp, np.nan)
    return SampleBatch(
        points=points,
        log_likelihoods=np.asarray(lls, dtype=float),
        start_point=start,
        burn_in=burn_in,
        thin=thin,
        n_redraws=n_redraws,
        n_chord_restarts=n_restarts,
        final_state=ChainState(current=cur, steps_taken=total_steps, rejections=n_redraws),
    )


def find_interior_point(
    region: RegionSpec,
    summary: MlSummary,
    rng: np.random.Generator,
    n_boundary: int | None = None,
) -> np.ndarray:
    """A safely interior region point, by averaging states found on the region surface.

    Runs independent projected-gradient minimizations of
    f = [(x - center) . shape . (x - center) - 1]^2 over density matrices
    from random full-rank starts; the minimum of this residual on the
    surface is 0. Averaging the boundary states gives an interior point of
    the convex region.
    """
    if region.case_label == "A":
        return region.center.copy()
    if region.shape_matrix is None:
        return summary.r_ml.copy()
    basis = summary.basis
    dim = basis.dimension
    if n_boundary is None:
        n_boundary = 2 * dim
    shape = region.shape_matrix
    center = region.center
    omegas_flat = basis.flat
    step0 = 1.0 / (8.0 * float(np.linalg.eigvalsh(shape)[-1]))

    def value(rho):
        x = (omegas_flat @ rho.T.reshape(-1)).real
        q = float((x - center) @ shape @ (x - center))
        return (q - 1.0) ** 2

    def grad(rho):
        x = (omegas_flat @ rho.T.reshape(-1)).real
        dvec = shape @ (x - center)
        q = float((x - center) @ dvec)
        g = 4.0 * (q - 1.0) * (omegas_flat.T @ dvec).reshape(dim, dim)
        return g

    boundary = []
    for _ in range(n_boundary):
        start = random_density(dim, dim, rng)
        res = apg_minimize(
            value, grad, start, max_iters=3000, pg_tol=0.0, value_tol=1e-10, step=step0
        )
        if res.value < 1e-10:
            boundary.append(rho_to_r(res.x, basis))
    if not boundary:
        raise NoBoundaryPoints("no boundary-point minimization reached the region surface")
    candidate = np.mean(boundary, axis=0)
    strict = (
        region.ellipsoid_value(candidate) < 1.0 - 1e-6
        and np.linalg.eigvalsh(r_to_rho(candidate, basis))[0] > summary.rank_tol / 10.0
    )
    if not strict:
        candidate = 0.5 * (candidate + summary.r_ml)
    return candidate


def hopping_profile(batch: SampleBatch) -> np.ndarray:
    """Euclidean distances between consecutive accepted points."""
    if batch.points.shape[0] < 2:
        raise ValueError("need at least two points for a hopping profile")
    return np.linalg.norm(np.diff(batch.points, axis=0), axis=1)


def mixing_step_estimate(summary: MlSummary, case_type: str) -> float:
    """Order-of-magnitude hit-and-run step count (constants suppressed).

    Case A and the flat-boundary Case B scale as D^7 cond(F^-1); the
    sharp-corner Case B scales as D^9 independent of F.
    """
    dim = summary.dimension
    if case_type == "B-I":
        return float(dim**9)
    if case_type in ("A", "B-II"):
        cond = float(np.linalg.cond(summary.fisher))
        if not np.isfinite(cond):
            raise ValueError("singular Fisher matrix")
        return float(dim**7) * cond
    raise ValueError(f"unknown case type {case_type!r}")
