"""Stabilizer tableau simulator and batched Pauli-frame propagation.

The tableau follows the standard destabilizer/stabilizer layout: rows
0..n-1 are destabilizers, rows n..2n-1 stabilizers, with per-row sign bits.
Supported gates: H, S, X, Y, Z, CNOT, CZ. Measurements are in the Z basis;
basis changes are explicit gates.

The frame simulator propagates per-shot Pauli frames over a noiseless
reference run. At every collapse event (measurement or reset) a fresh
uniformly random Z is multiplied into the frame of the collapsed qubit,
which reproduces intrinsic measurement randomness exactly: the random Z is
invisible to the collapsing measurement but randomizes any later
incompatible-basis measurement, with the correct correlations.
"""

from __future__ import annotations

import numpy as np

GATES_1Q = ("H", "S", "X", "Y", "Z")
GATES_2Q = ("CNOT", "CZ")


class Tableau:
    """Aaronson-Gottesman stabilizer state of ``n`` qubits, initially |0..0>."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"need at least one qubit, got {n}")
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        idx = np.arange(n)
        self.x[idx, idx] = 1
        self.z[n + idx, idx] = 1

    # -- gates ---------------------------------------------------------

    def apply(self, gate: str, *targets: int) -> "Tableau":
        for t in targets:
            if t < 0 or t >= self.n:
                raise IndexError(f"qubit {t} out of range for {self.n} qubits")
        if gate == "H":
            (q,) = targets
            self.r ^= self.x[:, q] & self.z[:, q]
            self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()
        elif gate == "S":
            (q,) = targets
            self.r ^= self.x[:, q] & self.z[:, q]
            self.z[:, q] ^= self.x[:, q]
        elif gate == "X":
            (q,) = targets
            self.r ^= self.z[:, q]
        elif gate == "Z":
            (q,) = targets
            self.r ^= self.x[:, q]
        elif gate == "Y":
            (q,) = targets
            self.r ^= self.x[:, q] ^ self.z[:, q]
        elif gate == "CNOT":
            c, t = targets
            self.r ^= self.x[:, c] & self.z[:, t] & (self.x[:, t] ^ self.z[:, c] ^ 1)
            self.x[:, t] ^= self.x[:, c]
            self.z[:, c] ^= self.z[:, t]
        elif gate == "CZ":
            c, t = targets
            self.apply("H", t)
            self.apply("CNOT", c, t)
            self.apply("H", t)
        else:
            raise ValueError(f"not a Clifford gate label: {gate!r}")
        return self

    def apply_pauli(self, xmask: np.ndarray, zmask: np.ndarray) -> None:
        """Conjugate the state by a Pauli given as X/Z support masks."""
        # P S P = -S exactly when the row anticommutes with P
        anti = (self.x @ zmask + self.z @ xmask) % 2
        self.r ^= anti.astype(np.uint8)

    # -- internal row algebra -------------------------------------------

    @staticmethod
    def _g(x1, z1, x2, z2):
        """Exponent of i produced per qubit when multiplying two Paulis."""
        out = np.zeros(x1.shape, dtype=np.int64)
        # x1 z1 = 01 (Z): x2 (1 - 2 z2) ; 10 (X): z2 (2 x2 - 1) ; 11 (Y): z2 - x2
        case_z = (x1 == 0) & (z1 == 1)
        case_x = (x1 == 1) & (z1 == 0)
        case_y = (x1 == 1) & (z1 == 1)
        out[case_z] = (x2 * (1 - 2 * z2.astype(np.int64)))[case_z]
        out[case_x] = (z2 * (2 * x2.astype(np.int64) - 1))[case_x]
        out[case_y] = (z2.astype(np.int64) - x2)[case_y]
        return out

    def _rowsum_into(self, xh, zh, rh, i):
        """Multiply row arrays (xh, zh, rh) by tableau row i; returns new sign."""
        phase = 2 * rh + 2 * self.r[i] + self._g(self.x[i], self.z[i], xh, zh).sum()
        if phase % 4 not in (0, 2):
            raise AssertionError("tableau phase bookkeeping broke")
        xh ^= self.x[i]
        zh ^= self.z[i]
        return np.uint8((phase % 4) // 2)

    def _rowsum(self, h: int, i: int) -> None:
        self.r[h] = self._rowsum_into(self.x[h], self.z[h], self.r[h], i)

    # -- measurement -----------------------------------------------------

    def measure(self, q: int, rng: np.random.Generator) -> int:
        """Z-basis measurement; deterministic outcomes need no randomness."""
        n = self.n
        stab_rows = np.flatnonzero(self.x[n:, q]) + n
        if stab_rows.size:
            p = int(stab_rows[0])
            for i in np.flatnonzero(self.x[:, q]):
                if int(i) != p:
                    self._rowsum(int(i), p)
            self.x[p - n] = self.x[p]
            self.z[p - n] = self.z[p]
            self.r[p - n] = self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.z[p, q] = 1
            outcome = int(rng.integers(2))
            self.r[p] = outcome
            return outcome
        # deterministic: accumulate stabilizer combination in a scratch row
        xs = np.zeros(n, dtype=np.uint8)
        zs = np.zeros(n, dtype=np.uint8)
        rs = np.uint8(0)
        for i in np.flatnonzero(self.x[:n, q]):
            rs = self._rowsum_into(xs, zs, rs, int(i) + n)
        return int(rs)

    def measure_determined(self, q: int) -> int | None:
        """The forced Z outcome of qubit q, or None when it is random."""
        if np.any(self.x[self.n :, q]):
            return None
        xs = np.zeros(self.n, dtype=np.uint8)
        zs = np.zeros(self.n, dtype=np.uint8)
        rs = np.uint8(0)
        for i in np.flatnonzero(self.x[: self.n, q]):
            rs = self._rowsum_into(xs, zs, rs, int(i) + self.n)
        return int(rs)

    def reset(self, q: int, rng: np.random.Generator) -> None:
        if self.measure(q, rng):
            self.apply("X", q)

    def pauli_expectation(self, xmask: np.ndarray, zmask: np.ndarray) -> int:
        """<P> for a Pauli string given by its X/Z masks: +1, -1, or 0."""
        n = self.n
        anti = (self.x[n:] @ zmask + self.z[n:] @ xmask) % 2
        if np.any(anti):
            return 0
        # P is in the stabilizer group; the destabilizers it anticommutes
        # with index the generating set whose product equals +-P
        sel = (self.x[:n] @ zmask + self.z[:n] @ xmask) % 2
        xs = np.zeros(n, dtype=np.uint8)
        zs = np.zeros(n, dtype=np.uint8)
        rs = np.uint8(0)
        for i in np.flatnonzero(sel):
            rs = self._rowsum_into(xs, zs, rs, int(i) + n)
        if not (np.array_equal(xs, xmask % 2) and np.array_equal(zs, zmask % 2)):
            raise AssertionError("Pauli not reproduced by stabilizer combination")
        return -1 if rs else 1

    def stabilizer_strings(self) -> list[str]:
        out = []
        for i in range(self.n, 2 * self.n):
            chars = []
            for q in range(self.n):
                chars.append("IXZY"[self.x[i, q] + 2 * self.z[i, q]])
            out.append(("-" if self.r[i] else "+") + "".join(chars))
        return out


class PauliFrameBatch:
    """Per-shot Pauli frames propagated through a shared Clifford circuit.

    Frames are (shots, n) X/Z bit planes; phases are irrelevant for outcome
    statistics and are not tracked.
    """

    def __init__(self, n: int, shots: int, rng: np.random.Generator):
        self.n = n
        self.shots = shots
        self.rng = rng
        self.fx = np.zeros((shots, n), dtype=np.uint8)
        self.fz = np.zeros((shots, n), dtype=np.uint8)

    def apply(self, gate: str, *targets: int) -> None:
        if gate == "H":
            (q,) = targets
            self.fx[:, q], self.fz[:, q] = self.fz[:, q].copy(), self.fx[:, q].copy()
        elif gate == "S":
            (q,) = targets
            self.fz[:, q] ^= self.fx[:, q]
        elif gate in ("X", "Y", "Z"):
            pass
        elif gate == "CNOT":
            c, t = targets
            self.fx[:, t] ^= self.fx[:, c]
            self.fz[:, c] ^= self.fz[:, t]
        elif gate == "CZ":
            c, t = targets
            self.fz[:, t] ^= self.fx[:, c]
            self.fz[:, c] ^= self.fx[:, t]
        else:
            raise ValueError(f"not a Clifford gate label: {gate!r}")

    def apply_pauli_masks(self, qubits: tuple[int, ...], xbits: np.ndarray, zbits: np.ndarray) -> None:
        """XOR per-shot Pauli errors into the frame on the given qubits.

        ``xbits``/``zbits`` have shape (shots, len(qubits)).
        """
        for k, q in enumerate(qubits):
            self.fx[:, q] ^= xbits[:, k]
            self.fz[:, q] ^= zbits[:, k]

    def measure_z(self, q: int, reference_bit: int) -> np.ndarray:
        out = self.fx[:, q] ^ np.uint8(reference_bit)
        self.fz[:, q] ^= self.rng.integers(0, 2, size=self.shots, dtype=np.uint8)
        return out

    def reset_z(self, q: int) -> None:
        self.fx[:, q] = 0
        self.fz[:, q] = self.rng.integers(0, 2, size=self.shots, dtype=np.uint8)

    def pauli_expectations(self, xmask: np.ndarray, zmask: np.ndarray, reference: int) -> np.ndarray:
        """Per-shot <P> given the reference-run expectation of the same P."""
        if reference == 0:
            return np.zeros(self.shots, dtype=np.int8)
        anti = ((self.fx @ zmask + self.fz @ xmask) % 2).astype(np.int8)
        return np.int8(reference) * (1 - 2 * anti)
