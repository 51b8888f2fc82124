"""Construction of the sBs basis: error-sector-decomposed bases of the
truncated bosonic space.

The basis is grown rank by rank from a pair of "no-error" states, using the
adjoints of the o=1 sBs Kraus operators as error creation operators. Error
sectors are labelled by ``(e_q, e_p)`` (how many q-type and p-type error
quanta were stacked); ``r = e_q + e_p`` is the rank of a sector. Sectors of
equal rank are ordered by decreasing ``e_q``. Whatever part of the space is
not reached by rank ``R`` is filled with seeded random vectors, grouped into
unlabelled filler sectors.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import dynamics, gkp, linalg

FORMAT_MAGIC = b"BPSB"
FORMAT_VERSION = 1

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": dynamics.SIGMA_X,
    "Y": dynamics.SIGMA_Y,
    "Z": dynamics.SIGMA_Z,
}
PAULI_LABELS = ("I", "X", "Y", "Z")


def sector_labels(rank: int) -> list[tuple[int, int]]:
    """Structured sector labels through ``rank``, rank-major, e_q descending."""
    out = []
    for r in range(rank + 1):
        for e_q in range(r, -1, -1):
            out.append((e_q, r - e_q))
    return out


class DegenerateSpectrumError(RuntimeError):
    """No-error subspace is not separated from the rest of the spectrum."""


@dataclass
class DecomposedBasis:
    """Orthonormal basis {|e, mu>} with per-sector column pairs.

    ``matrix`` holds the basis columns ordered sector-major (two columns per
    sector, mu = 0 then 1). ``sectors`` labels the structured sectors;
    filler sectors follow and carry no label. The construction is fully
    determined by (delta, dim, rank, gauge, seed).
    """

    matrix: np.ndarray
    sectors: list[tuple[int, int]]
    rank: int
    gauge: tuple[int, int]
    seed: int
    delta: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_sectors(self) -> int:
        return self.matrix.shape[1] // 2

    @property
    def n_structured(self) -> int:
        return len(self.sectors)

    @property
    def n_fill_sectors(self) -> int:
        return self.n_sectors - self.n_structured

    def sector_index(self, label: tuple[int, int]) -> int:
        return self.sectors.index(tuple(label))

    def sector_pair(self, sector: int) -> np.ndarray:
        """(d, 2) matrix of the two basis kets of one sector."""
        return self.matrix[:, 2 * sector : 2 * sector + 2]

    def ket(self, sector: int, mu: int) -> np.ndarray:
        return self.matrix[:, 2 * sector + mu]

    def sigma_op(self, sector: int, pauli: str) -> np.ndarray:
        """sigma_{e,l} = |e><e| (x) sigma_l as a dense matrix on the mode."""
        pair = self.sector_pair(sector)
        return pair @ PAULIS[pauli] @ pair.conj().T

    def logical_pauli(self, pauli: str) -> np.ndarray:
        """P_l = I_E (x) sigma_l = sum_e sigma_{e,l} over the full basis."""
        d = self.dim
        block = np.kron(np.eye(self.n_sectors, dtype=complex), PAULIS[pauli])
        return self.matrix @ block @ self.matrix.conj().T

    def to_basis(self, op: np.ndarray) -> np.ndarray:
        """Matrix elements of ``op`` in the basis ordering."""
        return self.matrix.conj().T @ op @ self.matrix

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(serialize_basis(self))

    @classmethod
    def load(cls, path) -> "DecomposedBasis":
        with open(path, "rb") as fh:
            return deserialize_basis(fh.read())


def build_no_error_states(
    k0_q: np.ndarray,
    k0_p: np.ndarray,
    analytic_states: tuple[np.ndarray, np.ndarray],
    gap_tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """States most likely to return trivial sBs outcomes in both quadratures.

    Projects the analytic code states onto the top-2 eigenspace of
    (K0_q^dag K0_q + K0_p^dag K0_p)/2 and Loewdin-orthonormalizes the result.
    Fails if the 2nd and 3rd eigenvalues are degenerate within ``gap_tol``
    (no well-defined two-dimensional no-error sector).
    """
    mean_op = 0.5 * (k0_q.conj().T @ k0_q + k0_p.conj().T @ k0_p)
    evals, evecs = np.linalg.eigh(mean_op)
    gap = evals[-2] - evals[-3]
    if gap < gap_tol:
        raise DegenerateSpectrumError(
            f"no-error eigenspace ill-defined: eigenvalues "
            f"{evals[-3]:.12f}, {evals[-2]:.12f}, {evals[-1]:.12f} (gap {gap:.3e})"
        )
    top = evecs[:, -2:]
    projected = [top @ (top.conj().T @ s) for s in analytic_states]
    v0, v1 = linalg.lowdin_orthonormalize(projected)
    return v0, v1


def build_sbs_basis(
    no_error_states: tuple[np.ndarray, np.ndarray],
    k1_q: np.ndarray,
    k1_p: np.ndarray,
    rank: int,
    seed: int,
    gauge: tuple[int, int] = (0, 0),
    delta: float = 0.0,
    lin_tol: float = 1e-8,
) -> DecomposedBasis:
    """Grow the sector basis rank by rank from the no-error pair.

    Rank-r candidates come from the previous rank through K1_q^dag
    (compensating the deterministic logical Z with a (-1)^mu sign) and
    K1_p^dag (compensating the logical X by swapping mu), averaged with a
    phase correction where both routes exist. Candidates are projected onto
    the complement of the basis so far, individually normalized, and
    Loewdin-orthonormalized within the rank. Random Gaussian vectors
    (seeded) fill the remaining dimensions.
    """
    d = no_error_states[0].shape[0]
    structured = sector_labels(rank)
    if 2 * len(structured) > d:
        raise ValueError(
            f"rank {rank} needs {2 * len(structured)} vectors, exceeding dim {d}"
        )
    k1q_dag = k1_q.conj().T
    k1p_dag = k1_p.conj().T
    cols = [np.asarray(v, dtype=complex) for v in no_error_states]
    index = {(0, 0): 0}
    for r in range(1, rank + 1):
        current = np.column_stack(cols)
        candidates = []
        for e_q in range(r, -1, -1):
            e_p = r - e_q
            zero = np.zeros(d, dtype=complex)
            if e_q > 0:
                src = index[(e_q - 1, e_p)]
                vq = (k1q_dag @ cols[2 * src], -(k1q_dag @ cols[2 * src + 1]))
            else:
                vq = (zero, zero)
            if e_p > 0:
                src = index[(e_q, e_p - 1)]
                vp = (k1p_dag @ cols[2 * src + 1], k1p_dag @ cols[2 * src])
            else:
                vp = (zero, zero)
            v0, v1 = linalg.phase_corrected_average(vq, vp)
            candidates.extend([v0, v1])
        block = np.column_stack(candidates)
        block = linalg.project_onto_complement(block, current)
        norms = np.linalg.norm(block, axis=0)
        if norms.min() < lin_tol:
            bad = int(np.argmin(norms))
            raise linalg.RankDeficiencyError(
                rank=2 * len(index) + bad, requested=2 * len(index) + block.shape[1],
                min_eigenvalue=float(norms.min() ** 2),
            )
        block = block / norms
        block = linalg.lowdin_orthonormalize(block, tol=lin_tol)
        for e_q in range(r, -1, -1):
            index[(e_q, r - e_q)] = len(cols) // 2 + (r - e_q)
        for i in range(block.shape[1]):
            cols.append(block[:, i])
    n_fill = d - len(cols)
    rng = np.random.default_rng(seed)
    if n_fill:
        current = np.column_stack(cols)
        fill = rng.normal(size=(d, n_fill)) + 1j * rng.normal(size=(d, n_fill))
        fill = linalg.project_onto_complement(fill, current)
        norms = np.linalg.norm(fill, axis=0)
        if norms.min() < lin_tol:
            raise linalg.RankDeficiencyError(
                rank=len(cols), requested=d, min_eigenvalue=float(norms.min() ** 2)
            )
        fill = linalg.lowdin_orthonormalize(fill / norms, tol=lin_tol)
        for i in range(n_fill):
            cols.append(fill[:, i])
    return DecomposedBasis(
        matrix=np.column_stack(cols),
        sectors=structured,
        rank=rank,
        gauge=tuple(gauge),
        seed=seed,
        delta=delta,
    )


def build_basis(
    params: gkp.GkpParams, rank: int, seed: int = 0, norm_loss_tol: float = 1e-8
) -> DecomposedBasis:
    """Full chain: analytic states -> ideal Kraus -> no-error pair -> basis."""
    analytic = (
        gkp.analytic_code_state(0, params, norm_loss_tol),
        gkp.analytic_code_state(1, params, norm_loss_tol),
    )
    k0_q, k1_q = dynamics.ideal_sbs_kraus("q", params)
    k0_p, k1_p = dynamics.ideal_sbs_kraus("p", params)
    no_err = build_no_error_states(k0_q, k0_p, analytic)
    return build_sbs_basis(
        no_err, k1_q, k1_p, rank, seed=seed, gauge=params.gauge, delta=params.delta
    )


def sector_population(state: np.ndarray, basis: DecomposedBasis) -> np.ndarray:
    """Population per error sector; accepts a ket or a density matrix."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        if state.shape[0] != basis.dim:
            raise ValueError(f"state dim {state.shape[0]} != basis dim {basis.dim}")
        coeffs = basis.matrix.conj().T @ state
        pops = np.abs(coeffs) ** 2
    elif state.ndim == 2:
        if state.shape != (basis.dim, basis.dim):
            raise ValueError(f"state shape {state.shape} != basis dim {basis.dim}")
        pops = np.real(np.einsum("ie,ij,je->e", basis.matrix.conj(), state, basis.matrix))
    else:
        raise ValueError("state must be a ket or a density matrix")
    return pops.reshape(-1, 2).sum(axis=1)


def serialize_basis(basis: DecomposedBasis) -> bytes:
    """Binary container: magic, version, JSON header, column-major complex128.

    Layout: 4-byte magic ``BPSB``, little-endian u32 version, u32 header
    length, UTF-8 JSON header, then dim*dim little-endian complex128 entries
    in column-major order.
    """
    header = json.dumps(
        {
            "delta": basis.delta,
            "dim": basis.dim,
            "rank": basis.rank,
            "gauge": list(basis.gauge),
            "seed": basis.seed,
            "n_sectors": basis.n_sectors,
            "n_structured": basis.n_structured,
        }
    ).encode()
    buf = io.BytesIO()
    buf.write(FORMAT_MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(header)))
    buf.write(header)
    buf.write(np.asfortranarray(basis.matrix).astype("<c16").tobytes(order="F"))
    return buf.getvalue()


def deserialize_basis(blob: bytes) -> DecomposedBasis:
    if blob[:4] != FORMAT_MAGIC:
        raise ValueError("not a basis container (bad magic)")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported basis format version {version}")
    header = json.loads(blob[12 : 12 + hlen].decode())
    d = header["dim"]
    data = np.frombuffer(blob[12 + hlen :], dtype="<c16", count=d * d)
    matrix = data.reshape((d, d), order="F").copy()
    return DecomposedBasis(
        matrix=matrix,
        sectors=[tuple(s) for s in sector_labels(header["rank"])][: header["n_structured"]],
        rank=header["rank"],
        gauge=tuple(header["gauge"]),
        seed=header["seed"],
        delta=header["delta"],
    )


def basis_hash(basis: DecomposedBasis) -> str:
    import hashlib

    return hashlib.sha256(serialize_basis(basis)).hexdigest()[:16]
