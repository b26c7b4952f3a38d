"""Quantum states, the traceless Hermitian operator basis, and positivity tests.

A state of Hilbert-space dimension D is represented either as a D x D
density matrix or as the real coordinate vector r of length d = D**2 - 1
with respect to a trace-orthonormal traceless basis, via
rho = 1/D + sum_j r_j Omega_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-10
PSD_SHIFT = 1e-12  # added to the diagonal before the Cholesky attempt


@dataclass(frozen=True)
class OperatorBasis:
    """Trace-orthonormal traceless Hermitian basis {Omega_j} for dimension D."""

    dimension: int
    omegas: np.ndarray = field(repr=False)  # (d, D, D) complex

    @property
    def n_operators(self) -> int:
        return self.omegas.shape[0]

    @property
    def flat(self) -> np.ndarray:
        """Basis reshaped to (d, D*D) for fast contractions."""
        d = self.omegas.shape[0]
        return self.omegas.reshape(d, -1)


def build_basis(dimension: int) -> OperatorBasis:
    """Generalized Gell-Mann basis scaled to unit Hilbert-Schmidt norm.

    Ordering is fixed for reproducibility: symmetric pairs (j < k,
    lexicographic), then antisymmetric pairs, then diagonal operators.
    For dimension 2 this yields the Pauli matrices divided by sqrt(2).
    """
    if dimension < 2:
        raise ValueError(f"dimension must be >= 2, got {dimension}")
    dim = dimension
    ops = []
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for j in range(dim):
        for k in range(j + 1, dim):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[j, k] = inv_sqrt2
            sym[k, j] = inv_sqrt2
            ops.append(sym)
    for j in range(dim):
        for k in range(j + 1, dim):
            asym = np.zeros((dim, dim), dtype=complex)
            asym[j, k] = -1j * inv_sqrt2
            asym[k, j] = 1j * inv_sqrt2
            ops.append(asym)
    for m in range(1, dim):
        diag = np.zeros(dim)
        diag[:m] = 1.0
        diag[m] = -m
        diag /= np.sqrt(m * (m + 1))
        ops.append(np.diag(diag).astype(complex))
    return OperatorBasis(dimension=dim, omegas=np.stack(ops))


def rho_to_r(rho: np.ndarray, basis: OperatorBasis) -> np.ndarray:
    """Coordinate vector r_j = tr(rho Omega_j).

    The imaginary parts must vanish (Hermitian inputs); they are checked
    against 1e-12 and discarded.
    """
    rho = np.asarray(rho)
    if rho.shape != (basis.dimension, basis.dimension):
        raise ValueError(
            f"state shape {rho.shape} does not match basis dimension {basis.dimension}"
        )
    r = basis.flat @ rho.T.reshape(-1)  # tr(Omega rho) = sum_ij Omega_ij rho_ji
    if np.max(np.abs(r.imag)) > 1e-12:
        raise ValueError("coordinates have non-negligible imaginary parts; input not Hermitian?")
    return r.real.copy()


def r_to_rho(r: np.ndarray, basis: OperatorBasis) -> np.ndarray:
    """Hermitian unit-trace candidate 1/D + sum_j r_j Omega_j (not necessarily PSD)."""
    r = np.asarray(r, dtype=float)
    if r.shape != (basis.n_operators,):
        raise ValueError(f"expected coordinate vector of length {basis.n_operators}, got {r.shape}")
    dim = basis.dimension
    rho = np.tensordot(r, basis.omegas, axes=(0, 0))
    rho[np.diag_indices(dim)] += 1.0 / dim
    return rho


def _cholesky_psd(matrix: np.ndarray, shift: float = PSD_SHIFT) -> bool:
    """Cholesky success test on matrix + shift * identity; assumes Hermitian input."""
    shifted = matrix + shift * np.eye(matrix.shape[0])
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError:
        return False
    return True


def is_positive_state(candidate: np.ndarray, shift: float = PSD_SHIFT) -> bool:
    """True iff the Hermitian unit-trace candidate is PSD (Cholesky test, O(D^3)).

    A small diagonal shift lets exactly singular boundary states pass.
    """
    candidate = np.asarray(candidate)
    if np.max(np.abs(candidate - candidate.conj().T)) > HERMITICITY_TOL:
        raise ValueError("candidate is not Hermitian within 1e-10")
    return _cholesky_psd(candidate, shift)


def random_density(dimension: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Random rank-`rank` density matrix G G^dag / tr(G G^dag), G complex Ginibre."""
    if not 1 <= rank <= dimension:
        raise ValueError(f"rank must be in [1, {dimension}], got {rank}")
    g = rng.standard_normal((dimension, rank)) + 1j * rng.standard_normal((dimension, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
