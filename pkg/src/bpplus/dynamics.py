"""Physical-layer dynamics: Lindblad propagation, noisy conditional
displacements, sBs stabilization circuits, and CX channels.

All two-body operators live on mode (x) TLS with the bosonic mode as the
first tensor factor. The conditional displacement

    CD(beta) = exp((beta a^dag - beta* a)/(2 sqrt(2)) (x) sigma_z)

displaces the mode by +beta/2 when the TLS is in |0> and by -beta/2 when it
is in |1>. Its noisy implementation is the echoed protocol: two Lindblad
half evolutions interleaved with perfect TLS X gates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import linalg
from .gkp import GkpParams, NoiseParams

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PLUS_X = np.array([1, 1], dtype=complex) / math.sqrt(2)

#: dense-Liouvillian cutoff: up to this Hilbert dimension the propagator is
#: formed as one dense matrix exponential (the Liouvillian is dim^2 x dim^2,
#: so this must stay small); larger systems use Krylov exponential action
DENSE_LIMIT = 16


def tls_rotation(pauli: np.ndarray, angle: float) -> np.ndarray:
    """R_P(phi) = exp(-i phi P / 2)."""
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * pauli


def embed_tls(u: np.ndarray, dim: int) -> np.ndarray:
    return np.kron(np.eye(dim, dtype=complex), u)


def cd_unitary(beta: complex, dim: int) -> np.ndarray:
    """Ideal conditional displacement on mode (x) TLS."""
    a = linalg.annihilation(dim)
    gen = (beta * a.conj().T - np.conj(beta) * a) / (2 * math.sqrt(2))
    u_plus = linalg.matrix_exp(gen)
    u_minus = linalg.matrix_exp(-gen)
    out = np.zeros((2 * dim, 2 * dim), dtype=complex)
    out[0::2, 0::2] = u_plus
    out[1::2, 1::2] = u_minus
    return out


def cd_hamiltonian(beta: complex, t_ecd: float, dim: int) -> np.ndarray:
    """Piecewise-constant drive whose half-time evolution is CD(beta)."""
    a = linalg.annihilation(dim)
    gen = (1j * beta * a.conj().T - 1j * np.conj(beta) * a) / (2 * math.sqrt(2))
    return np.kron(gen, SIGMA_Z) / (t_ecd / 2)


def collapse_ops(noise: NoiseParams, dim: int) -> list[np.ndarray]:
    """Decoherence of mode and TLS during a conditional displacement.

    TLS decay, TLS pure dephasing, mode decay, mode pure dephasing; channels
    with infinite lifetime are omitted.
    """
    ops = []
    i_m = np.eye(dim, dtype=complex)
    a = linalg.annihilation(dim)
    if np.isfinite(noise.t1_tls):
        ops.append(np.kron(i_m, SIGMA_MINUS) / math.sqrt(noise.t1_tls))
    if np.isfinite(noise.tphi_tls):
        proj = (np.eye(2) - SIGMA_Z) / 2
        ops.append(math.sqrt(2.0 / noise.tphi_tls) * np.kron(i_m, proj))
    if np.isfinite(noise.t1_mode):
        ops.append(np.kron(a, np.eye(2)) / math.sqrt(noise.t1_mode))
    if np.isfinite(noise.tphi_mode):
        ops.append(math.sqrt(2.0 / noise.tphi_mode) * np.kron(a.conj().T @ a, np.eye(2)))
    return ops


# ---------------------------------------------------------------------------
# Lindblad propagation


def liouvillian(h: np.ndarray, c_ops: list[np.ndarray]) -> scipy.sparse.csr_matrix:
    """Sparse Liouvillian for row-major vectorization vec(rho) = rho.reshape(-1)."""
    dim = h.shape[0]
    eye = scipy.sparse.identity(dim, dtype=complex, format="csr")
    hs = scipy.sparse.csr_matrix(h)
    lio = -1j * (scipy.sparse.kron(hs, eye) - scipy.sparse.kron(eye, hs.T))
    for c in c_ops:
        cs = scipy.sparse.csr_matrix(c)
        cdc = (cs.conj().T @ cs).tocsr()
        lio = lio + scipy.sparse.kron(cs, cs.conj())
        lio = lio - 0.5 * (scipy.sparse.kron(cdc, eye) + scipy.sparse.kron(eye, cdc.T))
    return lio.tocsr()


def lindblad_propagate(
    h: np.ndarray,
    c_ops: list[np.ndarray],
    t: float,
    rho0: np.ndarray,
    method: str = "auto",
) -> np.ndarray:
    """Propagate rho0 for time t under H and the given collapse operators.

    ``method`` is one of ``auto`` (dense Liouvillian exponential when the
    Hilbert space dimension is at most 64, Krylov action otherwise),
    ``expm``, ``krylov``, or ``rk`` (adaptive Runge-Kutta cross-check path).
    """
    out = lindblad_propagate_batch(h, c_ops, t, rho0[None, :, :], method=method)
    return out[0]


def lindblad_propagate_batch(
    h: np.ndarray,
    c_ops: list[np.ndarray],
    t: float,
    rhos: np.ndarray,
    method: str = "auto",
) -> np.ndarray:
    """Propagate a batch of density matrices (or general operators) jointly."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("Hamiltonian must be square")
    if np.abs(h - h.conj().T).max() > 1e-12 * max(1.0, np.abs(h).max()):
        raise ValueError("Hamiltonian must be Hermitian")
    dim = h.shape[0]
    rhos = np.asarray(rhos, dtype=complex)
    if rhos.shape[-2:] != (dim, dim):
        raise ValueError(f"state batch shape {rhos.shape} does not match dim {dim}")
    if method == "auto":
        method = "expm" if dim <= DENSE_LIMIT else "krylov"
    vecs = rhos.reshape(-1, dim * dim).T
    if method == "expm":
        lio = liouvillian(h, c_ops).toarray()
        out = scipy.linalg.expm(lio * t) @ vecs
    elif method == "krylov":
        lio = liouvillian(h, c_ops).tocsc() * t
        out = scipy.sparse.linalg.expm_multiply(lio, np.ascontiguousarray(vecs))
    elif method == "rk":
        out = _propagate_rk(h, c_ops, t, vecs, dim)
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.ascontiguousarray(out.T).reshape(rhos.shape)


def _propagate_rk(h, c_ops, t, vecs, dim):
    from scipy.integrate import solve_ivp

    cdc = [c.conj().T @ c for c in c_ops]

    def rhs(_t, y):
        rho = y.reshape(-1, dim, dim)
        out = -1j * (h @ rho - rho @ h)
        for c, dd in zip(c_ops, cdc):
            out += c @ rho @ c.conj().T - 0.5 * (dd @ rho + rho @ dd)
        return out.reshape(y.shape)

    y0 = np.ascontiguousarray(vecs.T).reshape(-1)
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"Lindblad RK integration failed: {sol.message}")
    return sol.y[:, -1].reshape(-1, dim * dim).T


# ---------------------------------------------------------------------------
# Channel pipelines


@dataclass(frozen=True)
class LindbladStep:
    h: np.ndarray
    c_ops: tuple[np.ndarray, ...]
    t: float


@dataclass(frozen=True)
class UnitaryStep:
    u: np.ndarray


Step = LindbladStep | UnitaryStep


class SuperOpPipeline:
    """Composition of unitary conjugations and Lindblad evolutions.

    Applies steps in list order (first entry acts first). The pipeline is a
    completely positive trace-preserving map by construction.
    """

    def __init__(self, dim: int, steps: list[Step]):
        self.dim = dim
        self.steps = list(steps)

    def apply(self, rho: np.ndarray, method: str = "auto") -> np.ndarray:
        return self.apply_batch(rho[None, :, :], method=method)[0]

    def apply_batch(self, rhos: np.ndarray, method: str = "auto") -> np.ndarray:
        out = np.asarray(rhos, dtype=complex)
        if out.shape[-2:] != (self.dim, self.dim):
            raise ValueError(f"batch shape {out.shape} does not match dim {self.dim}")
        for step in self.steps:
            if isinstance(step, UnitaryStep):
                out = step.u @ out @ step.u.conj().T
            else:
                out = lindblad_propagate_batch(step.h, list(step.c_ops), step.t, out, method=method)
        return out

    def superop_matrix(self, method: str = "auto") -> np.ndarray:
        """Dense superoperator in row-major vectorization (small dims only)."""
        d = self.dim
        basis = np.zeros((d * d, d, d), dtype=complex)
        idx = np.arange(d * d)
        basis[idx, idx // d, idx % d] = 1.0
        cols = self.apply_batch(basis, method=method).reshape(d * d, d * d)
        return cols.T


def noisy_cd(beta: complex, noise: NoiseParams, dim: int) -> SuperOpPipeline:
    """Echoed conditional displacement channel on mode (x) TLS.

    Noiseless limit: exact conjugation by ``cd_unitary(beta, dim)``. With
    finite lifetimes, each half is a Lindblad evolution for t_ecd/2 under the
    conditional-displacement drive with the four collapse operators, and the
    interleaved echo X gates are perfect.
    """
    if not np.isfinite(beta):
        raise ValueError(f"displacement parameter must be finite, got {beta}")
    if noise.is_noiseless:
        return SuperOpPipeline(2 * dim, [UnitaryStep(cd_unitary(beta, dim))])
    c_ops = tuple(collapse_ops(noise, dim))
    echo = UnitaryStep(embed_tls(SIGMA_X, dim))
    half = noise.t_ecd / 2
    return SuperOpPipeline(
        2 * dim,
        [
            LindbladStep(cd_hamiltonian(beta / 2, noise.t_ecd, dim), c_ops, half),
            echo,
            LindbladStep(cd_hamiltonian(-beta / 2, noise.t_ecd, dim), c_ops, half),
            echo,
        ],
    )


# ---------------------------------------------------------------------------
# sBs protocol


def sbs_gate_steps(quadrature: str, params: GkpParams) -> list[tuple[str, object]]:
    """Gate list of one sBs round: ('cd', beta) and ('tls', unitary) entries.

    The small displacements are s = sinh(Delta^2) l / 2 and the big one
    b = cosh(Delta^2) l, directed along the stabilized quadrature. When the
    tracked stabilizer sign of that quadrature is flipped (gauge bit 1), the
    third conditional displacement changes sign and the final TLS rotation
    becomes R_Y(+pi/2) instead of R_Y(-pi/2).
    """
    if quadrature not in ("q", "p"):
        raise ValueError(f"quadrature must be 'q' or 'p', got {quadrature}")
    l = params.lattice
    d2 = params.delta**2
    if quadrature == "q":
        small = 0.5 * math.sinh(d2) * l
        big = -1j * math.cosh(d2) * l
        gauge_bit = params.gauge[0]
    else:
        small = 0.5j * math.sinh(d2) * l
        big = math.cosh(d2) * l
        gauge_bit = params.gauge[1]
    third = -small if gauge_bit else small
    last_angle = math.pi / 2 if gauge_bit else -math.pi / 2
    return [
        ("cd", small),
        ("tls", tls_rotation(SIGMA_X, math.pi / 2)),
        ("cd", big),
        ("tls", tls_rotation(SIGMA_X, -math.pi / 2)),
        ("cd", third),
        ("tls", tls_rotation(SIGMA_Y, last_angle)),
    ]


def ideal_sbs_unitary(quadrature: str, params: GkpParams) -> np.ndarray:
    u = np.eye(2 * params.dim, dtype=complex)
    for kind, arg in sbs_gate_steps(quadrature, params):
        g = cd_unitary(arg, params.dim) if kind == "cd" else embed_tls(arg, params.dim)
        u = g @ u
    return u


def ideal_sbs_kraus(quadrature: str, params: GkpParams) -> tuple[np.ndarray, np.ndarray]:
    """Kraus pair (K_0, K_1) of one noiseless sBs round on the mode.

    K_o = (<o|_TLS (x) I) U (|+x>_TLS (x) I); completeness
    K_0^dag K_0 + K_1^dag K_1 = I holds exactly by unitarity of U.
    """
    d = params.dim
    u = ideal_sbs_unitary(quadrature, params).reshape(d, 2, d, 2)
    k0 = u[:, 0, :, 0] * PLUS_X[0] + u[:, 0, :, 1] * PLUS_X[1]
    k1 = u[:, 1, :, 0] * PLUS_X[0] + u[:, 1, :, 1] * PLUS_X[1]
    return k0, k1


class Instrument:
    """Outcome-indexed pair of linear maps on the bosonic mode.

    Wraps a pipeline on mode (x) TLS together with the TLS preparation in
    |+x> and the final Z measurement of the TLS; ``apply_batch`` returns the
    unnormalized branch outputs for both outcomes (their traces are the
    outcome probabilities, and the sum over outcomes is trace preserving).
    """

    def __init__(self, dim: int, pipeline: SuperOpPipeline):
        self.dim = dim
        self.pipeline = pipeline

    def apply(self, rho: np.ndarray, method: str = "auto") -> np.ndarray:
        return self.apply_batch(rho[None, :, :], method=method)[:, 0]

    def apply_batch(self, rhos: np.ndarray, method: str = "auto") -> np.ndarray:
        """Map a batch (B, d, d) to branch outputs (2, B, d, d)."""
        rhos = np.asarray(rhos, dtype=complex)
        d = self.dim
        tls = np.outer(PLUS_X, PLUS_X.conj())
        joint = np.einsum("bij,kl->bikjl", rhos, tls).reshape(-1, 2 * d, 2 * d)
        out = self.pipeline.apply_batch(joint, method=method).reshape(-1, d, 2, d, 2)
        return np.stack([out[:, :, 0, :, 0], out[:, :, 1, :, 1]])

    def outcome_probs(self, rho: np.ndarray, method: str = "auto") -> np.ndarray:
        branches = self.apply(rho, method=method)
        return np.real(np.trace(branches, axis1=-2, axis2=-1))

    def superop_matrices(self, method: str = "auto") -> list[np.ndarray]:
        d = self.dim
        basis = np.zeros((d * d, d, d), dtype=complex)
        idx = np.arange(d * d)
        basis[idx, idx // d, idx % d] = 1.0
        outs = self.apply_batch(basis, method=method)
        return [outs[o].reshape(d * d, d * d).T for o in (0, 1)]


def noisy_sbs_instrument(quadrature: str, params: GkpParams, noise: NoiseParams) -> Instrument:
    """One noisy sBs round: noisy CDs, perfect TLS rotations, Z measurement."""
    steps: list[Step] = []
    for kind, arg in sbs_gate_steps(quadrature, params):
        if kind == "cd":
            steps.extend(noisy_cd(arg, noise, params.dim).steps)
        else:
            steps.append(UnitaryStep(embed_tls(arg, params.dim)))
    return Instrument(params.dim, SuperOpPipeline(2 * params.dim, steps))


# ---------------------------------------------------------------------------
# CX gates

CX_DIRECTIONS = ("sd", "ds")  # syndrome-control / data-control


@dataclass
class CxChannel:
    """Noisy CX implementation plus its ideal-part metadata.

    ``pipeline`` acts on mode (x) syndrome TLS. ``ideal_logical`` is the
    4x4 unitary of the intended CNOT on (GKP logical, TLS), ``gauge_in`` and
    ``gauge_out`` record the stabilizer-sign bookkeeping: the gate flips g_q
    (direction 'sd') or g_p (direction 'ds').
    """

    direction: str
    pipeline: SuperOpPipeline
    ideal_logical: np.ndarray
    gauge_in: tuple[int, int]
    gauge_out: tuple[int, int]


def cnot_matrix(control: int) -> np.ndarray:
    """CNOT on two qubits (first index = GKP logical, second = TLS)."""
    m = np.zeros((4, 4), dtype=complex)
    for g in (0, 1):
        for t in (0, 1):
            if control == 1:  # TLS controls, GKP target
                m[(g ^ t) * 2 + t, g * 2 + t] = 1.0
            else:  # GKP controls, TLS target
                m[g * 2 + (t ^ g), g * 2 + t] = 1.0
    return m


def cx_channel(direction: str, params: GkpParams, noise: NoiseParams) -> CxChannel:
    """Noisy CNOT between a GKP mode and a TLS via a single (echoed) CD gate.

    Direction 'sd' uses the TLS as control (X parity checks), 'ds' uses the
    GKP qubit as control (Z parity checks). The conditional displacement
    signs and the compensating TLS phase depend on the input gauge, and the
    output gauge has g_q ('sd') or g_p ('ds') flipped.
    """
    if direction not in CX_DIRECTIONS:
        raise ValueError(f"direction must be one of {CX_DIRECTIONS}, got {direction}")
    d = params.dim
    g_q, g_p = params.gauge
    rt_pi = math.sqrt(math.pi)
    steps: list[Step] = []
    if direction == "sd":
        sign = 1 - 2 * g_q
        steps.extend(noisy_cd(sign * rt_pi, noise, d).steps)
        phase = linalg.matrix_exp(-1j * (math.pi / 4) * g_p * sign * SIGMA_Z)
        steps.append(UnitaryStep(embed_tls(phase, d)))
        gauge_out = (1 - g_q, g_p)
        ideal = cnot_matrix(control=1)
    else:
        sign = 1 - 2 * g_p
        steps.append(UnitaryStep(embed_tls(HADAMARD, d)))
        steps.extend(noisy_cd(-1j * sign * rt_pi, noise, d).steps)
        phase = linalg.matrix_exp(1j * (math.pi / 4) * sign * g_q * SIGMA_Z)
        steps.append(UnitaryStep(embed_tls(phase, d)))
        steps.append(UnitaryStep(embed_tls(HADAMARD, d)))
        gauge_out = (g_q, 1 - g_p)
        ideal = cnot_matrix(control=0)
    return CxChannel(
        direction=direction,
        pipeline=SuperOpPipeline(2 * d, steps),
        ideal_logical=ideal,
        gauge_in=(g_q, g_p),
        gauge_out=gauge_out,
    )


# ---------------------------------------------------------------------------
# Quantum trajectories


class TrajectorySegment:
    """No-jump propagator of one piecewise-constant Lindblad segment.

    Precomputes exp(-i H_eff t) for the full segment and for the fine
    substeps used to locate jump times, H_eff = H - (i/2) sum c^dag c.
    """

    def __init__(self, h: np.ndarray, c_ops: list[np.ndarray], t: float, n_sub: int = 64):
        self.c_ops = [np.asarray(c, dtype=complex) for c in c_ops]
        self.t = t
        self.n_sub = n_sub
        h_eff = np.asarray(h, dtype=complex) - 0.5j * sum(
            c.conj().T @ c for c in self.c_ops
        )
        self.u_full = scipy.linalg.expm(-1j * h_eff * t)
        self.u_sub = scipy.linalg.expm(-1j * h_eff * (t / n_sub))

    def evolve(self, psi: np.ndarray, survival: float, threshold: float, rng) -> tuple[np.ndarray, float, float]:
        """Advance one normalized state through the segment with jumps.

        ``survival`` is the accumulated no-jump norm^2 since the last jump
        and ``threshold`` the current uniform random target. Returns the new
        normalized state and updated (survival, threshold).
        """
        candidate = self.u_full @ psi
        n2 = float(np.real(np.vdot(candidate, candidate)))
        if survival * n2 >= threshold:
            return candidate / math.sqrt(n2), survival * n2, threshold
        # at least one jump inside: walk fine substeps
        for _ in range(self.n_sub):
            step = self.u_sub @ psi
            n2 = float(np.real(np.vdot(step, step)))
            if survival * n2 < threshold:
                psi = step / math.sqrt(n2)
                weights = np.array([np.linalg.norm(c @ psi) ** 2 for c in self.c_ops])
                total = weights.sum()
                if total <= 0:
                    raise RuntimeError("jump triggered with vanishing jump rates")
                k = rng.choice(len(self.c_ops), p=weights / total)
                psi = self.c_ops[k] @ psi
                psi = psi / np.linalg.norm(psi)
                survival = 1.0
                threshold = rng.random()
            else:
                psi = step / math.sqrt(n2)
                survival *= n2
        return psi, survival, threshold


def trajectory_run(
    h: np.ndarray,
    c_ops: list[np.ndarray],
    t: float,
    psi0: np.ndarray,
    rng: np.random.Generator,
    n_segments: int = 16,
) -> np.ndarray:
    """Single quantum-trajectory unraveling of a Lindblad evolution.

    Averaging the projectors of many trajectories converges to
    :func:`lindblad_propagate` of the same generator.
    """
    psi = np.asarray(psi0, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    seg = TrajectorySegment(h, c_ops, t / n_segments)
    survival, threshold = 1.0, rng.random()
    for _ in range(n_segments):
        psi, survival, threshold = seg.evolve(psi, survival, threshold, rng)
    return psi
