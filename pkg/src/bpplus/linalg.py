"""Dense complex linear algebra on truncated oscillator Hilbert spaces.

Everything in this package works with plain ``numpy.ndarray`` matrices of
``complex128``. Conventions used throughout:

* quadratures ``q = (a + a^dag)/sqrt(2)``, ``p = (a - a^dag)/(i sqrt(2))``,
  so ``[q, p] = i`` and the vacuum has ``<q^2> = 1/2``;
* displacements ``D(alpha) = exp((alpha a^dag - alpha* a)/sqrt(2))`` shift
  ``q`` by ``Re(alpha)`` and ``p`` by ``Im(alpha)``;
* multi-mode operators are Kronecker products in the order given by the
  accompanying :class:`SpaceSpec`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg


class RankDeficiencyError(ValueError):
    """Raised when a vector family is too close to linear dependence."""

    def __init__(self, rank: int, requested: int, min_eigenvalue: float):
        self.rank = rank
        self.requested = requested
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"vector family has numerical rank {rank} < {requested} "
            f"(smallest Gram eigenvalue {min_eigenvalue:.3e})"
        )


@dataclass(frozen=True)
class SpaceSpec:
    """Ordered tensor factors of a composite Hilbert space.

    ``dims`` lists the dimension of each mode; bosonic modes must have even
    dimension, two-level systems have dimension 2. The ordering is used
    consistently for all tensor products and partial traces.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        if not self.dims:
            raise ValueError("SpaceSpec needs at least one mode")
        for d in self.dims:
            if d < 2:
                raise ValueError(f"mode dimension must be >= 2, got {d}")
            if d > 2 and d % 2 != 0:
                raise ValueError(f"bosonic mode dimension must be even, got {d}")

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))


def annihilation(dim: int) -> np.ndarray:
    """Truncated annihilation operator: a|n> = sqrt(n)|n-1>."""
    _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def number_op(dim: int) -> np.ndarray:
    """Number operator, exactly diagonal with entries 0..dim-1."""
    _check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def position_op(dim: int) -> np.ndarray:
    a = annihilation(dim)
    return (a + a.conj().T) / math.sqrt(2)


def momentum_op(dim: int) -> np.ndarray:
    a = annihilation(dim)
    return (a - a.conj().T) / (1j * math.sqrt(2))


def displacement(alpha: complex, dim: int) -> np.ndarray:
    """D(alpha) = exp((alpha a^dag - alpha* a)/sqrt(2)), exact on the truncation."""
    _check_dim(dim)
    if not np.isfinite(alpha):
        raise ValueError(f"displacement parameter must be finite, got {alpha}")
    a = annihilation(dim)
    gen = (alpha * a.conj().T - np.conj(alpha) * a) / math.sqrt(2)
    return matrix_exp(gen)

def squeeze(z: complex, dim: int) -> np.ndarray:
    """S(z) = exp((z* a^2 - z a^dag^2)/2) on the truncated space."""
    _check_dim(dim)
    if not np.isfinite(z):
        raise ValueError(f"squeeze parameter must be finite, got {z}")
    a = annihilation(dim)
    gen = (np.conj(z) * (a @ a) - z * (a.conj().T @ a.conj().T)) / 2.0
    return matrix_exp(gen)


def envelope(delta: float, dim: int) -> np.ndarray:
    """Finite-energy envelope exp(-delta^2 n), diagonal in the Fock basis."""
    _check_dim(dim)
    if not np.isfinite(delta):
        raise ValueError(f"envelope parameter must be finite, got {delta}")
    return np.diag(np.exp(-(delta**2) * np.arange(dim, dtype=float))).astype(complex)


def tensor(ops: list[np.ndarray]) -> np.ndarray:
    """Kronecker product of a list of operators, first factor leftmost."""
    if not ops:
        raise ValueError("tensor of an empty operator list")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def partial_trace(rho: np.ndarray, spec: SpaceSpec, keep: list[int] | tuple[int, ...]) -> np.ndarray:
    """Trace out all modes of ``spec`` not listed in ``keep``.

    ``keep`` preserves the original relative mode ordering regardless of the
    order it is given in.
    """
    dims = spec.dims
    n = len(dims)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (spec.total_dim, spec.total_dim):
        raise ValueError(f"state shape {rho.shape} incompatible with dims {dims}")
    keep = sorted(set(keep))
    if any(k < 0 or k >= n for k in keep):
        raise ValueError(f"keep indices {keep} out of range for {n} modes")
    traced = [i for i in range(n) if i not in keep]
    tensor_form = rho.reshape(dims + dims)
    for count, mode in enumerate(traced):
        # axes shrink as we trace; already-removed axes shift indices down
        ax1 = mode - sum(1 for t in traced[:count] if t < mode)
        ax2 = ax1 + (n - count)
        tensor_form = np.trace(tensor_form, axis1=ax1, axis2=ax2)
    kept_dim = int(np.prod([dims[k] for k in keep])) if keep else 1
    return tensor_form.reshape(kept_dim, kept_dim)


def matrix_exp(mat: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring Pade via scipy)."""
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"matrix_exp needs a square matrix, got shape {mat.shape}")
    return scipy.linalg.expm(mat)


def dagger(mat: np.ndarray) -> np.ndarray:
    return np.asarray(mat).conj().T


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def gram_inverse_sqrt(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """G^{-1/2} of the Gram matrix of the columns of ``vectors``."""
    gram = vectors.conj().T @ vectors
    evals, evecs = np.linalg.eigh(gram)
    if evals.min() < tol:
        rank = int(np.sum(evals >= tol))
        raise RankDeficiencyError(rank, vectors.shape[1], float(evals.min()))
    return evecs @ np.diag(evals**-0.5) @ evecs.conj().T


def lowdin_orthonormalize(vectors: list[np.ndarray] | np.ndarray, tol: float = 1e-10) -> list[np.ndarray]:
    """Symmetric (Loewdin) orthonormalization V -> V G^{-1/2}.

    Among all orthonormalizations this one minimizes the total change to the
    input vectors. Raises :class:`RankDeficiencyError` if the Gram matrix has
    an eigenvalue below ``tol``.
    """
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        cols = vectors
        as_list = False
    else:
        if len(vectors) == 0:
            return []
        cols = np.column_stack(vectors)
        as_list = True
    out = cols @ gram_inverse_sqrt(cols, tol=tol)
    if as_list:
        return [out[:, i] for i in range(out.shape[1])]
    return out


def project_onto_complement(vectors: np.ndarray, basis: np.ndarray, passes: int = 2) -> np.ndarray:
    """Remove the components of ``vectors`` lying in span(basis columns).

    Uses classical Gram-Schmidt against the (orthonormal) basis with a
    re-orthogonalization pass to suppress float cancellation.
    """
    out = np.array(vectors, dtype=complex, copy=True)
    if basis.size == 0:
        return out
    for _ in range(passes):
        out -= basis @ (basis.conj().T @ out)
    return out


def phase_corrected_average(
    q_pair: tuple[np.ndarray, np.ndarray],
    p_pair: tuple[np.ndarray, np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """Average two construction routes for a basis-vector pair.

    Given route vectors ``(|0>_q, |1>_q)`` and ``(|0>_p, |1>_p)``, find the
    phase ``phi`` making ``sum_mu <mu|_q e^{i phi} |mu>_p`` real and
    non-negative and return ``(|mu>_q + e^{i phi}|mu>_p)/2`` for both mu.

    A route may be identically zero (sector reachable along one axis only),
    in which case the other route passes through with weight 1/2. Both routes
    zero is an error.
    """
    vq0, vq1 = (np.asarray(v, dtype=complex) for v in q_pair)
    vp0, vp1 = (np.asarray(v, dtype=complex) for v in p_pair)
    norm_q = np.linalg.norm(vq0) + np.linalg.norm(vq1)
    norm_p = np.linalg.norm(vp0) + np.linalg.norm(vp1)
    if norm_q == 0 and norm_p == 0:
        raise ValueError("phase_corrected_average: both routes are zero")
    overlap = np.vdot(vq0, vp0) + np.vdot(vq1, vp1)
    if abs(overlap) == 0:
        phase = 1.0 + 0.0j
    else:
        phase = np.conj(overlap) / abs(overlap)
    return (vq0 + phase * vp0) / 2.0, (vq1 + phase * vp1) / 2.0


def _check_dim(dim: int) -> None:
    if not isinstance(dim, (int, np.integer)) or dim < 2:
        raise ValueError(f"operator dimension must be an integer >= 2, got {dim}")
