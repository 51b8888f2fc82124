"""Finite-energy square-lattice GKP code states and stabilizers.

The code states are Gaussian-envelope position combs,

    |mu> ~ exp(-Delta^2 n) sum_k |q = (k + mu/2) l>,    l = 2 sqrt(pi),

built here from Hermite-function expansions of the position eigenkets. A
software gauge ``(g_q, g_p)`` tracks the signs of the two finite-energy
stabilizer eigenvalues: the gauged states satisfy

    S_q |mu; g> = (-1)^{g_q} |mu; g>,   S_p |mu; g> = (-1)^{g_p} |mu; g>

(up to truncation error), realised by shifting the comb by ``g_q l/4`` in
position and by ``-g_p l/4`` in momentum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg

#: Square-code lattice spacing.
LATTICE = 2.0 * math.sqrt(math.pi)

Gauge = tuple[int, int]

ALL_GAUGES: tuple[Gauge, ...] = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class GkpParams:
    """Finite-energy GKP code parameters on a truncated Fock space."""

    delta: float
    dim: int
    gauge: Gauge = (0, 0)

    def __post_init__(self):
        if not (self.delta > 0 and np.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if self.dim < 2 or self.dim % 2 != 0:
            raise ValueError(f"cutoff dimension must be even and >= 2, got {self.dim}")
        if tuple(self.gauge) not in ALL_GAUGES:
            raise ValueError(f"gauge must be a pair of bits, got {self.gauge}")

    @property
    def lattice(self) -> float:
        return LATTICE

    def with_gauge(self, gauge: Gauge) -> "GkpParams":
        return GkpParams(self.delta, self.dim, tuple(gauge))


@dataclass(frozen=True)
class NoiseParams:
    """Lifetimes of the decoherence model, in seconds. ``inf`` disables a channel.

    ``t1_mode``/``tphi_mode`` are decay and pure dephasing of the bosonic
    mode, ``t1_tls``/``tphi_tls`` the same for the auxiliary/syndrome TLS,
    and ``t_ecd`` is the duration of one echoed conditional displacement.
    """

    t1_mode: float = 1e-3
    tphi_mode: float = 100e-3
    t1_tls: float = 100e-6
    tphi_tls: float = 1e-3
    t_ecd: float = 500e-9

    def __post_init__(self):
        for name in ("t1_mode", "tphi_mode", "t1_tls", "tphi_tls"):
            v = getattr(self, name)
            if not (v > 0):
                raise ValueError(f"{name} must be positive (may be inf), got {v}")
        if not (self.t_ecd > 0 and np.isfinite(self.t_ecd)):
            raise ValueError(f"t_ecd must be positive and finite, got {self.t_ecd}")

    @classmethod
    def noiseless(cls, t_ecd: float = 500e-9) -> "NoiseParams":
        inf = float("inf")
        return cls(inf, inf, inf, inf, t_ecd)

    def scaled_rates(self, factor: float) -> "NoiseParams":
        """Multiply all decoherence rates by ``factor`` (lifetimes divided)."""
        return NoiseParams(
            self.t1_mode / factor,
            self.tphi_mode / factor,
            self.t1_tls / factor,
            self.tphi_tls / factor,
            self.t_ecd,
        )

    @property
    def is_noiseless(self) -> bool:
        return all(
            math.isinf(getattr(self, n))
            for n in ("t1_mode", "tphi_mode", "t1_tls", "tphi_tls")
        )


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Normalized Hermite functions psi_n(x) for n = 0..n_max-1, shape (n_max, len(x)).

    psi_n are the Fock wavefunctions in the q = (a + a^dag)/sqrt(2) convention,
    computed with the stable two-term recurrence.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((n_max, x.size))
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x**2)
    if n_max > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_max - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def analytic_code_state(mu: int, params: GkpParams, norm_loss_tol: float = 1e-8) -> np.ndarray:
    """Finite-energy code state |mu_Delta> for the configured gauge.

    The comb of position eigenkets is accumulated peak by peak until adding
    a peak no longer changes the normalized state (relative change < 1e-12),
    and the envelope exp(-Delta^2 n) is applied to the Fock coefficients.
    Raises if the truncated-norm loss at the configured cutoff exceeds
    ``norm_loss_tol``.
    """
    if mu not in (0, 1):
        raise ValueError(f"logical label must be 0 or 1, got {mu}")
    d = params.dim
    g_q, g_p = params.gauge
    l = params.lattice
    # internal cutoff to measure how much weight the truncation discards
    d_int = 2 * d
    env = np.exp(-(params.delta**2) * np.arange(d_int, dtype=float))

    def peak(k: int) -> np.ndarray:
        x = (k + 0.5 * mu + 0.25 * g_q) * l
        coeffs = hermite_functions(d_int, np.array([x]))[:, 0] * env
        # momentum offset for the p-gauge: phase e^{-i (l g_p / 4) x} on |x>
        return coeffs * np.exp(-0.25j * l * g_p * x)

    acc = peak(0)
    prev = acc / np.linalg.norm(acc)
    k = 1
    while True:
        acc = acc + peak(k) + peak(-k)
        cur = acc / np.linalg.norm(acc)
        if np.linalg.norm(cur - prev) < 1e-12 and k >= 2:
            break
        if k > 64:  # combs decay like exp(-x^2 within the cutoff); never reached
            raise RuntimeError("position comb failed to converge")
        prev = cur
        k += 1
    total = np.linalg.norm(acc) ** 2
    lost = float(np.linalg.norm(acc[d:]) ** 2 / total)
    if lost > norm_loss_tol:
        raise ValueError(
            f"cutoff {d} too small for delta={params.delta}: truncated-norm loss {lost:.3e}"
        )
    state = acc[:d]
    return state / np.linalg.norm(state)


def finite_energy_stabilizer(quadrature: str, params: GkpParams) -> np.ndarray:
    """Finite-energy stabilizer S_q = E e^{i l q} E^{-1} or S_p = E e^{-i l p} E^{-1}.

    Computed at internal cutoff 1.5 d to control the amplification by
    E^{-1} = exp(+Delta^2 n) near the truncation edge, then cut back to d.
    Non-unitary by construction.
    """
    if quadrature not in ("q", "p"):
        raise ValueError(f"quadrature must be 'q' or 'p', got {quadrature}")
    d = params.dim
    d_int = int(math.ceil(1.5 * d / 2) * 2)
    l = params.lattice
    # e^{i l q} = D(i l), e^{-i l p} = D(l) in this displacement convention
    disp = linalg.displacement(1j * l if quadrature == "q" else l, d_int)
    n = np.arange(d_int, dtype=float)
    env = np.exp(-(params.delta**2) * n)
    stab = (env[:, None] * disp) * (1.0 / env)[None, :]
    return stab[:d, :d]


def ideal_stabilizer(quadrature: str, dim: int) -> np.ndarray:
    """Infinite-energy stabilizer e^{i l q} or e^{-i l p} on the truncation."""
    if quadrature not in ("q", "p"):
        raise ValueError(f"quadrature must be 'q' or 'p', got {quadrature}")
    return linalg.displacement(1j * LATTICE if quadrature == "q" else LATTICE, dim)
