"""PTM+ and BP+ channel models: extraction from physical channels,
ideal-part factoring, process-matrix conversion, and Pauli twirling.

A PTM+ model stores the tensor

    S[o, e, e', l, l'] = 2^{-N} tr( sigma_{e,l}  C_o( sigma_{e',l'} ) )

over the error-diagonal operator basis sigma_{e,l} = |e><e| (x) sigma_l of
a sector-decomposed bosonic mode (optionally joined by a syndrome TLS as a
second logical qubit, which carries no error sectors). A BP+ model is its
Pauli twirl, parameterized by a transition table p(o, e | e') and Pauli
rates p(l | o, e, e').
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import dynamics
from .sbs_basis import PAULI_LABELS, PAULIS, DecomposedBasis

FORMAT_MAGIC_PTM = b"BPPM"
FORMAT_MAGIC_BP = b"BPPB"
FORMAT_VERSION = 1


@lru_cache(maxsize=4)
def pauli_ops(n_logical: int) -> np.ndarray:
    """All 4^n Pauli strings as (4^n, 2^n, 2^n), first factor slowest."""
    ops = [PAULIS[p] for p in PAULI_LABELS]
    out = ops
    for _ in range(n_logical - 1):
        out = [np.kron(a, b) for a in out for b in ops]
    return np.array(out)


def pauli_labels(n_logical: int) -> list[str]:
    labels = list(PAULI_LABELS)
    out = labels
    for _ in range(n_logical - 1):
        out = [a + b for a in out for b in labels]
    return out


@lru_cache(maxsize=4)
def pauli_sign_table(n_logical: int) -> np.ndarray:
    """signs[m, l] = +-1 with sigma_m sigma_l sigma_m = signs[m, l] sigma_l."""
    ops = pauli_ops(n_logical)
    dim = ops.shape[1]
    n = ops.shape[0]
    signs = np.empty((n, n))
    for m in range(n):
        for l in range(n):
            prod = ops[m] @ ops[l] @ ops[m]
            signs[m, l] = np.real(np.trace(prod @ ops[l])) / dim
    return signs


@lru_cache(maxsize=4)
def t_tensor_inverse(n_logical: int) -> np.ndarray:
    """Inverse of T[(l,l'),(m,m')] = tr(sigma_l sigma_m sigma_l' sigma_m')."""
    ops = pauli_ops(n_logical)
    n = ops.shape[0]
    t = np.einsum("lab,mbc,pcd,qda->lpmq", ops, ops, ops, ops).reshape(n * n, n * n)
    return np.linalg.inv(t)


def pauli_ptm(u: np.ndarray, n_logical: int) -> np.ndarray:
    """PTM R[l, l'] = 2^{-N} tr(sigma_l U sigma_l' U^dag) of a unitary."""
    ops = pauli_ops(n_logical)
    dim = ops.shape[1]
    conj = u @ ops @ u.conj().T
    return np.real(np.einsum("lab,mba->lm", ops, conj)) / dim


#: PTMs of the deterministic ideal parts, by label.
def ideal_ptm(label: str) -> np.ndarray:
    if label == "I":
        return np.eye(4)
    if label == "Z":
        return np.diag([1.0, -1.0, -1.0, 1.0])
    if label == "X":
        return np.diag([1.0, 1.0, -1.0, -1.0])
    if label == "II":
        return np.eye(16)
    if label == "CX_sd":
        return pauli_ptm(dynamics.cnot_matrix(control=1), 2)
    if label == "CX_ds":
        return pauli_ptm(dynamics.cnot_matrix(control=0), 2)
    raise ValueError(f"unknown ideal Clifford label {label!r}")


class ModelValidationError(ValueError):
    pass


@dataclass
class PtmPlusModel:
    """S-tensor channel model over error sectors and logical Paulis."""

    s: np.ndarray  # (n_outcomes, n_sec, n_sec, 4^N, 4^N)
    n_logical: int
    gauge_in: tuple[int, int]
    gauge_out: tuple[int, int]
    ideal: str = "I"
    meta: dict = field(default_factory=dict)

    @property
    def n_outcomes(self) -> int:
        return self.s.shape[0]

    @property
    def n_sectors(self) -> int:
        return self.s.shape[1]

    def validate(self, tol: float = 1e-6) -> None:
        if not np.all(np.isfinite(self.s)):
            raise ModelValidationError("non-finite PTM+ entries")
        # trace preservation: summing outputs over (o, e) must return the
        # identity row on the logical-I component and zero elsewhere
        marg = self.s[:, :, :, 0, :].sum(axis=(0, 1))
        target = np.zeros_like(marg)
        target[:, 0] = 1.0
        err = np.abs(marg - target).max()
        if err > tol:
            raise ModelValidationError(f"PTM+ trace preservation violated by {err:.3e}")


@dataclass
class BpPlusModel:
    """Pauli-twirled channel: transitions p(o,e|e') and rates p(l|o,e,e')."""

    trans: np.ndarray  # (n_outcomes, n_sec, n_sec)
    pauli: np.ndarray  # (n_outcomes, n_sec, n_sec, 4^N)
    n_logical: int
    gauge_in: tuple[int, int]
    gauge_out: tuple[int, int]
    ideal: str = "I"
    meta: dict = field(default_factory=dict)
    _cdf_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_outcomes(self) -> int:
        return self.trans.shape[0]

    @property
    def n_sectors(self) -> int:
        return self.trans.shape[1]

    def validate(self, tol_trans: float = 1e-9, tol_pauli: float = 1e-9) -> None:
        if np.any(self.trans < -1e-12) or np.any(self.pauli < -1e-12):
            raise ModelValidationError("negative probabilities in BP+ tables")
        col = self.trans.sum(axis=(0, 1))
        if np.abs(col - 1.0).max() > tol_trans:
            raise ModelValidationError(
                f"transition columns not stochastic: max dev {np.abs(col - 1.0).max():.3e}"
            )
        rates = self.pauli.sum(axis=-1)
        if np.abs(rates - 1.0).max() > tol_pauli:
            raise ModelValidationError(
                f"Pauli rates not normalized: max dev {np.abs(rates - 1.0).max():.3e}"
            )

    def joint_cdf(self) -> np.ndarray:
        """CDF over flattened (o, e) per input sector, shape (n_sec, n_out*n_sec)."""
        if "joint" not in self._cdf_cache:
            flat = self.trans.reshape(-1, self.n_sectors).T
            self._cdf_cache["joint"] = np.cumsum(flat, axis=1)
        return self._cdf_cache["joint"]

    def pauli_cdf(self) -> np.ndarray:
        if "pauli" not in self._cdf_cache:
            self._cdf_cache["pauli"] = np.cumsum(self.pauli, axis=-1)
        return self._cdf_cache["pauli"]


def identity_bp_model(n_sectors: int, n_logical: int = 1, n_outcomes: int = 1) -> BpPlusModel:
    """Identity channel; with two outcomes, outcome 0 fires with certainty."""
    trans = np.zeros((n_outcomes, n_sectors, n_sectors))
    trans[0][np.diag_indices(n_sectors)] = 1.0
    pauli = np.zeros((n_outcomes, n_sectors, n_sectors, 4**n_logical))
    pauli[..., 0] = 1.0
    return BpPlusModel(trans, pauli, n_logical, (0, 0), (0, 0), ideal="I" * n_logical)


# ---------------------------------------------------------------------------
# error-diagonal projector and coefficient representations


def project_error_diagonal(rho: np.ndarray, basis: DecomposedBasis) -> np.ndarray:
    """Zero all coherences between different error sectors of ``basis``."""
    if rho.shape != (basis.dim, basis.dim):
        raise ValueError(f"state shape {rho.shape} != basis dim {basis.dim}")
    in_basis = basis.to_basis(rho)
    ns = basis.n_sectors
    blocks = in_basis.reshape(ns, 2, ns, 2)
    diag = np.einsum("eiej->eij", blocks)
    keep = np.zeros_like(blocks)
    np.einsum("eiej->eij", keep)[...] = diag
    return basis.matrix @ keep.reshape(2 * ns, 2 * ns) @ basis.matrix.conj().T


def rho_to_coeffs(rho: np.ndarray, basis: DecomposedBasis) -> np.ndarray:
    """Coefficients c[e, l] of an error-diagonal single-mode state."""
    in_basis = basis.to_basis(rho)
    ns = basis.n_sectors
    blocks = np.einsum("eiej->eij", in_basis.reshape(ns, 2, ns, 2))
    return 0.5 * np.real(np.einsum("eij,lji->el", blocks, pauli_ops(1)))


def coeffs_to_rho(coeffs: np.ndarray, basis: DecomposedBasis) -> np.ndarray:
    ns = basis.n_sectors
    blocks = np.einsum("el,lij->eij", coeffs.astype(complex), pauli_ops(1))
    full = np.zeros((ns, 2, ns, 2), dtype=complex)
    np.einsum("eiej->eij", full)[...] = blocks
    return basis.matrix @ full.reshape(2 * ns, 2 * ns) @ basis.matrix.conj().T


# ---------------------------------------------------------------------------
# extraction


def sector_pauli_op(basis: DecomposedBasis, sector: int, pauli_flat: int, n_logical: int) -> np.ndarray:
    """sigma_{e, l} for the mode, tensored with a TLS Pauli when N = 2."""
    if n_logical == 1:
        return basis.sigma_op(sector, PAULI_LABELS[pauli_flat])
    mode_part = basis.sigma_op(sector, PAULI_LABELS[pauli_flat // 4])
    return np.kron(mode_part, PAULIS[PAULI_LABELS[pauli_flat % 4]])


def extract_ptm_plus(
    channel,
    basis_in: DecomposedBasis,
    basis_out: DecomposedBasis | None = None,
    n_logical: int = 1,
    ideal: str = "I",
    method: str = "auto",
    tp_tol: float = 1e-4,
    meta: dict | None = None,
) -> PtmPlusModel:
    """Extract the S tensor by propagating all 4^N * |H_E| sector-Pauli operators.

    ``channel`` must expose ``apply_batch`` returning either a plain batch
    (one implicit outcome) or an outcome-indexed stack. For two logical
    qubits the second qubit is a TLS appended after the mode. The result is
    rejected when trace preservation is violated beyond ``tp_tol``.
    """
    basis_out = basis_out or basis_in
    ns = basis_in.n_sectors
    nl = 4**n_logical
    d = basis_in.dim
    sys_dim = d * (2 ** (n_logical - 1))

    inputs = np.empty((ns * nl, sys_dim, sys_dim), dtype=complex)
    for e in range(ns):
        for l in range(nl):
            inputs[e * nl + l] = sector_pauli_op(basis_in, e, l, n_logical)
    outputs = channel.apply_batch(inputs, method=method)
    outputs = np.asarray(outputs)
    if outputs.ndim == 3:
        outputs = outputs[None]
    n_out = outputs.shape[0]

    # move outputs into the (gauge-out) basis and contract with output Paulis
    if n_logical == 1:
        bout = basis_out.matrix
    else:
        bout = np.kron(basis_out.matrix, np.eye(2))
    in_basis = bout.conj().T @ outputs @ bout
    two_n = 2**n_logical
    nso = basis_out.n_sectors
    blocks = in_basis.reshape(n_out, ns * nl, nso, two_n, nso, two_n)
    diag = np.einsum("obeiej->obeij", blocks)
    s = np.einsum("obeij,lji->obel", diag, pauli_ops(n_logical)).real / two_n
    s = s.reshape(n_out, ns, nl, nso, nl).transpose(0, 3, 1, 4, 2)
    model = PtmPlusModel(
        s=np.ascontiguousarray(s),
        n_logical=n_logical,
        gauge_in=basis_in.gauge,
        gauge_out=basis_out.gauge,
        ideal=ideal,
        meta=meta or {},
    )
    model.validate(tol=tp_tol)
    return model


def factor_ideal(model: PtmPlusModel) -> PtmPlusModel:
    """Split off the ideal logical Clifford: returns the error part of
    C = C_error o C_ideal, contracted with the inverse ideal PTM."""
    r = ideal_ptm(model.ideal)
    s_err = np.einsum("oablm,km->oablk", model.s, r)  # R^{-1} = R^T for unitary PTMs
    out = PtmPlusModel(
        s=s_err,
        n_logical=model.n_logical,
        gauge_in=model.gauge_in,
        gauge_out=model.gauge_out,
        ideal="I" * model.n_logical,
        meta={**model.meta, "factored_ideal": model.ideal},
    )
    return out


def compose_ideal(model: PtmPlusModel, ideal: str) -> PtmPlusModel:
    """Inverse of :func:`factor_ideal`: append the ideal part back."""
    r = ideal_ptm(ideal)
    s = np.einsum("oablm,mk->oablk", model.s, r)
    return PtmPlusModel(s, model.n_logical, model.gauge_in, model.gauge_out, ideal, dict(model.meta))


# ---------------------------------------------------------------------------
# process-matrix conversion and twirling


def ptm_to_chi(model: PtmPlusModel) -> np.ndarray:
    """chi[o, e, e', m, m'] with C_o(rho) = sum chi sigma_{ee'm} rho sigma_{ee'm'}^dag."""
    nl = 4**model.n_logical
    t_inv = t_tensor_inverse(model.n_logical)
    s_flat = model.s.reshape(model.n_outcomes, model.n_sectors, model.n_sectors, nl * nl)
    chi_flat = (2**model.n_logical) * np.einsum("pq,oabq->oabp", t_inv, s_flat)
    return chi_flat.reshape(model.s.shape)


def chi_to_ptm(chi: np.ndarray, model: PtmPlusModel) -> PtmPlusModel:
    """Rebuild the S tensor from a process tensor (roundtrip inverse)."""
    n_logical = model.n_logical
    nl = 4**n_logical
    t_inv = t_tensor_inverse(n_logical)
    t = np.linalg.inv(t_inv)
    chi_flat = chi.reshape(chi.shape[0], chi.shape[1], chi.shape[2], nl * nl)
    s_flat = np.einsum("pq,oabq->oabp", t, chi_flat) / (2**n_logical)
    return PtmPlusModel(
        s_flat.reshape(chi.shape).real,
        n_logical,
        model.gauge_in,
        model.gauge_out,
        model.ideal,
        dict(model.meta),
    )


def pauli_twirl_chi(chi: np.ndarray) -> np.ndarray:
    """Zero the off-diagonal logical elements of chi for every transition."""
    out = np.zeros_like(chi)
    nl = chi.shape[-1]
    idx = np.arange(nl)
    out[..., idx, idx] = chi[..., idx, idx]
    return out


def chi_to_bp_plus(
    chi: np.ndarray,
    model: PtmPlusModel,
    neg_tol: float = 1e-6,
) -> BpPlusModel:
    """BP+ parameters from the twirled process tensor.

    Small negative diagonal weights (above ``-neg_tol``) are clamped to zero
    and the transition columns renormalized; anything more negative rejects
    the model as non-CP beyond numerical noise.
    """
    nl = chi.shape[-1]
    diag = np.real(chi[..., np.arange(nl), np.arange(nl)])
    if diag.min() < -neg_tol:
        raise ModelValidationError(
            f"twirled process weights negative beyond tolerance: min {diag.min():.3e}"
        )
    diag = np.clip(diag, 0.0, None)
    trans = diag.sum(axis=-1)
    col = trans.sum(axis=(0, 1))
    if np.abs(col - 1.0).max() > 1e-4:
        raise ModelValidationError(
            f"twirled transitions deviate from stochastic by {np.abs(col - 1.0).max():.3e}"
        )
    trans = trans / col[None, None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        pauli = diag / diag.sum(axis=-1, keepdims=True)
    # unreachable transitions carry no rate information; park them on identity
    dead = ~np.isfinite(pauli).all(axis=-1)
    pauli[dead] = 0.0
    pauli[dead, 0] = 1.0
    bp = BpPlusModel(
        trans=trans,
        pauli=pauli,
        n_logical=model.n_logical,
        gauge_in=model.gauge_in,
        gauge_out=model.gauge_out,
        ideal=model.ideal,
        meta=dict(model.meta),
    )
    bp.validate()
    return bp


def ptm_to_bp_plus(model: PtmPlusModel, neg_tol: float = 1e-6) -> BpPlusModel:
    return chi_to_bp_plus(pauli_twirl_chi(ptm_to_chi(model)), model, neg_tol=neg_tol)


def bp_plus_to_ptm(bp: BpPlusModel) -> PtmPlusModel:
    """PTM+ form of a BP+ model (logically diagonal S tensor)."""
    signs = pauli_sign_table(bp.n_logical)
    weights = np.einsum("oabm,ml->oabl", bp.pauli, signs)
    nl = 4**bp.n_logical
    s = np.zeros((bp.n_outcomes, bp.n_sectors, bp.n_sectors, nl, nl))
    idx = np.arange(nl)
    s[..., idx, idx] = bp.trans[..., None] * weights
    return PtmPlusModel(s, bp.n_logical, bp.gauge_in, bp.gauge_out, bp.ideal, dict(bp.meta))


# ---------------------------------------------------------------------------
# dense channel action on coefficient tensors


def apply_ptm_plus(model: PtmPlusModel, coeffs: np.ndarray) -> np.ndarray:
    """Exact action on error-diagonal coefficients, per outcome.

    ``coeffs`` has shape (n_sectors, 4^N); the result stacks the
    (unnormalized) outcome branches, whose logical-identity components carry
    the outcome probabilities.
    """
    if coeffs.shape != (model.n_sectors, 4**model.n_logical):
        raise ValueError(f"coefficient shape {coeffs.shape} does not match model")
    return np.einsum("oablm,bm->oal", model.s, coeffs)


def apply_bp_plus(model: BpPlusModel, coeffs: np.ndarray) -> np.ndarray:
    signs = pauli_sign_table(model.n_logical)
    weights = np.einsum("oabm,ml->oabl", model.pauli, signs)
    return np.einsum("oab,oabl,bl->oal", model.trans, weights, coeffs)


# ---------------------------------------------------------------------------
# model file IO


def _serialize(magic: bytes, header: dict, arrays: list[np.ndarray]) -> bytes:
    buf = io.BytesIO()
    blob = json.dumps(header).encode()
    buf.write(magic)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
    buf.write(blob)
    for arr in arrays:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def _meta_header(model) -> dict:
    return {
        "n_logical": model.n_logical,
        "gauge_in": list(model.gauge_in),
        "gauge_out": list(model.gauge_out),
        "ideal": model.ideal,
        "meta": model.meta,
    }


def save_ptm_plus(model: PtmPlusModel, path) -> None:
    header = {**_meta_header(model), "shape": list(model.s.shape)}
    with open(path, "wb") as fh:
        fh.write(_serialize(FORMAT_MAGIC_PTM, header, [model.s]))


def save_bp_plus(model: BpPlusModel, path) -> None:
    header = {
        **_meta_header(model),
        "trans_shape": list(model.trans.shape),
        "pauli_shape": list(model.pauli.shape),
    }
    with open(path, "wb") as fh:
        fh.write(_serialize(FORMAT_MAGIC_BP, header, [model.trans, model.pauli]))


def _read_container(blob: bytes, magic: bytes) -> tuple[dict, bytes]:
    if blob[:4] != magic:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    return json.loads(blob[12 : 12 + hlen].decode()), blob[12 + hlen :]


def load_ptm_plus(path) -> PtmPlusModel:
    with open(path, "rb") as fh:
        header, payload = _read_container(fh.read(), FORMAT_MAGIC_PTM)
    shape = tuple(header["shape"])
    s = np.frombuffer(payload, dtype="<f8", count=int(np.prod(shape))).reshape(shape)
    return PtmPlusModel(
        s.copy(), header["n_logical"], tuple(header["gauge_in"]),
        tuple(header["gauge_out"]), header["ideal"], header["meta"],
    )


def load_bp_plus(path) -> BpPlusModel:
    with open(path, "rb") as fh:
        header, payload = _read_container(fh.read(), FORMAT_MAGIC_BP)
    ts = tuple(header["trans_shape"])
    ps = tuple(header["pauli_shape"])
    nt = int(np.prod(ts))
    trans = np.frombuffer(payload, dtype="<f8", count=nt).reshape(ts)
    pauli = np.frombuffer(payload[nt * 8 :], dtype="<f8", count=int(np.prod(ps))).reshape(ps)
    return BpPlusModel(
        trans.copy(), pauli.copy(), header["n_logical"], tuple(header["gauge_in"]),
        tuple(header["gauge_out"]), header["ideal"], header["meta"],
    )
