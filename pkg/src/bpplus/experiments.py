"""Experiment orchestration: model-comparison circuits simulated with three
backends (full time evolution, PTM+, BP+), and the surface-code memory
experiment with its three decoders.

The comparison experiments are described once as an event list; each
backend interprets the same list:

* trajectory: batched Monte-Carlo wavefunction unraveling of the physical
  Lindblad circuits (the same pipelines the models were extracted from),
  with the gauge tracked and the gauged sBs/CX variants applied;
* ptm_plus: per-shot evolution of error-diagonal coefficient tensors under
  the extracted S tensors (error part) composed with the exact ideal
  Clifford PTMs;
* bp_plus: same, with the S tensors replaced by their Pauli twirl.

Logical expectation values I_E (x) sigma are recorded after every
measurement event; for the trajectory backend the logical Paulis of the
currently tracked gauge's basis are used.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import channels, dynamics, stats, store, surface
from .circuits import run_batch, sample_error_paths_batch
from .decoding import REGIMES, DecodingTopology, decode_records
from .gkp import ALL_GAUGES

PAULI_LABELS = ("I", "X", "Y", "Z")
BACKENDS = ("trajectory", "ptm_plus", "bp_plus")


# ---------------------------------------------------------------------------
# event lists


def two_qubit_code_events(repetitions: int) -> list[tuple]:
    """XX/ZZ two-qubit code on one GKP and one ideal TLS data qubit.

    Measurement indices per repetition: 0 the XX check, 1-4 sBs rounds,
    5 the ZZ check, 6-9 sBs rounds.
    """
    ev: list[tuple] = [("prep", "bell")]
    for _ in range(repetitions):
        ev += [
            ("reset_syn",),
            ("h_syn",),
            ("cx", "sd"),
            ("cnot_ts", "syn_ctrl"),
            ("h_syn",),
            ("measure_syn", "outer_xx"),
            ("record",),
        ]
        for quad in ("q", "p", "q", "p"):
            ev += [("sbs", quad), ("record",)]
        ev += [
            ("reset_syn",),
            ("cx", "ds"),
            ("cnot_ts", "d1_ctrl"),
            ("measure_syn", "outer_zz"),
            ("record",),
        ]
        for quad in ("q", "p", "q", "p"):
            ev += [("sbs", quad), ("record",)]
    return ev


def stabilization_events(rounds: int) -> list[tuple]:
    """Repeated sBs stabilization of one mode, alternating quadratures."""
    ev: list[tuple] = [("prep", "plus_x")]
    for k in range(rounds):
        ev += [("sbs", "q" if k % 2 == 0 else "p"), ("record",)]
    return ev


def repeated_measurement_events(rounds: int) -> list[tuple]:
    """Repeated logical X measurement via an ancilla TLS, each followed by
    four sBs rounds."""
    ev: list[tuple] = [("prep", "plus_x")]
    for _ in range(rounds):
        ev += [
            ("reset_syn",),
            ("h_syn",),
            ("cx", "sd"),
            ("h_syn",),
            ("measure_syn", "logical_x"),
            ("record",),
        ]
        for quad in ("q", "p", "q", "p"):
            ev += [("sbs", quad), ("record",)]
    return ev


EXPERIMENT_EVENTS = {
    "two_qubit_code": two_qubit_code_events,
    "stab_only": stabilization_events,
    "repeated_meas": repeated_measurement_events,
}


def _experiment_modes(events: list[tuple]) -> tuple[bool, bool]:
    has_d1 = any(ev[0] == "cnot_ts" for ev in events)
    has_syn = any(ev[0] in ("reset_syn", "measure_syn", "cx", "h_syn") for ev in events)
    return has_d1, has_syn


def _gauge_timeline(events: list[tuple]) -> list[tuple[int, int]]:
    """Gauge of the GKP mode at the start of each event."""
    g = (0, 0)
    out = []
    for ev in events:
        out.append(g)
        if ev[0] == "cx":
            g = (1 - g[0], g[1]) if ev[1] == "sd" else (g[0], 1 - g[1])
    return out


def record_labels(events: list[tuple]) -> list[str]:
    has_d1, _ = _experiment_modes(events)
    if has_d1:
        return [a + b for a in PAULI_LABELS for b in PAULI_LABELS]
    return list(PAULI_LABELS)


def measurement_roles(events: list[tuple]) -> list[str]:
    roles = []
    for ev in events:
        if ev[0] == "measure_syn":
            roles.append(ev[1])
        elif ev[0] == "sbs":
            roles.append(f"sbs_{ev[1]}")
    return roles


# ---------------------------------------------------------------------------
# dense coefficient backends (PTM+ and BP+)


class DenseModelBackend:
    """Per-shot error-diagonal density evolution, vectorized over shots.

    Coefficient layout: (shots, e, gkp[, syn][, d1]), one length-4 Pauli
    axis per logical qubit. ``twirled`` selects the BP+ variant.
    """

    def __init__(self, mset: store.ModelSet, events: list[tuple], twirled: bool):
        self.mset = mset
        self.events = events
        self.twirled = twirled
        self.has_d1, self.has_syn = _experiment_modes(events)
        self.gauges = _gauge_timeline(events)
        self.n_logical = 1 + int(self.has_d1) + int(self.has_syn)
        self.n_sec = mset.n_sectors
        self.norm = 2**self.n_logical
        self._mats: dict[tuple, np.ndarray] = {}

    def _error_model(self, kind: str, gauge) -> channels.PtmPlusModel:
        key = surface.model_key(kind, gauge, self.mset.per_gauge)
        if self.twirled:
            return channels.bp_plus_to_ptm(self.mset.bp[key])
        return self.mset.ptm[key]

    def _site_matrix(self, kind: str, gauge) -> np.ndarray:
        cache_key = (kind, gauge if self.mset.per_gauge else (0, 0))
        if cache_key not in self._mats:
            model = self._error_model(kind, gauge)
            e = model.n_sectors
            nl = 4**model.n_logical
            mats = model.s.transpose(0, 1, 4, 2, 3).reshape(model.n_outcomes, e * nl, e * nl)
            if kind.startswith("sbs"):
                ideal = channels.ideal_ptm("Z" if kind.endswith("q") else "X")
            else:
                ideal = channels.ideal_ptm("CX_sd" if kind.endswith("sd") else "CX_ds")
            ideal_big = np.kron(np.eye(e), ideal)
            self._mats[cache_key] = mats @ ideal_big
        return self._mats[cache_key]

    def initial_state(self, name: str, shots: int) -> np.ndarray:
        shape = [shots, self.n_sec] + [4] * self.n_logical
        c = np.zeros(shape)
        scale = 1.0 / self.norm
        if name == "plus_x":
            syn_vals = (0, 3) if self.has_syn else (None,)
            for a in (0, 1):  # I and X components of |+X><+X|
                for s in syn_vals:
                    idx = (slice(None), 0, a) + (() if s is None else (s,))
                    c[idx] = scale
        elif name == "bell":
            if not (self.has_d1 and self.has_syn):
                raise ValueError("bell preparation needs both TLS modes")
            for (a, b), sign in {(0, 0): 1, (1, 1): 1, (2, 2): -1, (3, 3): 1}.items():
                for s in (0, 3):
                    c[:, 0, a, s, b] = sign * scale
        else:
            raise ValueError(f"unknown preparation {name!r}")
        return c

    def _identity_mass(self, block: np.ndarray) -> np.ndarray:
        """Trace of a coefficient block with axes (shots, e, paulis...)."""
        flat = block.reshape(block.shape[0], block.shape[1], -1)
        return flat[:, :, 0].sum(axis=1) * self.norm

    def run(self, shots: int, rng: np.random.Generator) -> dict:
        events = self.events
        n_records = sum(1 for ev in events if ev[0] == "record")
        n_meas = len(measurement_roles(events))
        labels = record_labels(events)
        c = None
        bits = np.zeros((shots, n_meas), dtype=np.uint8)
        expects = np.zeros((shots, n_records, len(labels)), dtype=np.float64)
        mi = ri = 0
        for ev, gauge in zip(events, self.gauges):
            kind = ev[0]
            if kind == "prep":
                c = self.initial_state(ev[1], shots)
            elif kind == "sbs":
                c, outcome = self._apply_sbs(c, ev[1], gauge, rng)
                bits[:, mi] = outcome
                mi += 1
            elif kind == "cx":
                c = self._apply_cx(c, ev[1], gauge)
            elif kind == "cnot_ts":
                c = self._apply_ideal_cnot(c, ev[1])
            elif kind == "h_syn":
                c = self._apply_h_syn(c)
            elif kind == "reset_syn":
                c = self._reset_syn(c)
            elif kind == "measure_syn":
                c, outcome = self._measure_syn(c, rng)
                bits[:, mi] = outcome
                mi += 1
            elif kind == "record":
                expects[:, ri] = self._expectations(c)
                ri += 1
            else:
                raise ValueError(f"unknown event {ev}")
        return {"bits": bits, "expectations": expects, "labels": labels}

    def _apply_sbs(self, c, quad, gauge, rng):
        shots = c.shape[0]
        mats = self._site_matrix(f"sbs_{quad}", gauge)
        rest = int(np.prod(c.shape[3:], dtype=int))
        flat = c.reshape(shots, self.n_sec * 4, rest)
        branches = np.matmul(mats[:, None], flat[None])
        branches = branches.reshape(2, shots, self.n_sec, 4, rest)
        p = np.stack([self._identity_mass(branches[o].reshape(shots, self.n_sec, -1)) for o in (0, 1)])
        p = np.clip(p, 1e-300, None)
        outcome = (rng.random(shots) < p[1] / p.sum(axis=0)).astype(np.uint8)
        chosen = np.where(outcome[:, None, None, None] == 1, branches[1], branches[0])
        mass = np.where(outcome == 1, p[1], p[0])
        chosen = chosen / mass[:, None, None, None]
        return chosen.reshape(c.shape), outcome

    def _apply_cx(self, c, direction, gauge):
        shots = c.shape[0]
        mat = self._site_matrix(f"cx_{direction}", gauge)[0]
        rest = int(np.prod(c.shape[4:], dtype=int))
        flat = c.reshape(shots, self.n_sec * 16, rest)
        return np.matmul(mat, flat).reshape(c.shape)

    def _apply_ideal_cnot(self, c, which):
        ptm = channels.pauli_ptm(_cnot_unitary(first_is_control=(which == "syn_ctrl")), 2)
        shots = c.shape[0]
        flat = c.reshape(shots, self.n_sec * 4, 16)
        return np.matmul(flat, ptm.T).reshape(c.shape)

    def _apply_h_syn(self, c):
        h_ptm = channels.pauli_ptm(dynamics.HADAMARD, 1)
        return np.einsum("lk,sabk...->sabl...", h_ptm, c)

    def _syn_slice(self, c, pauli: int):
        return (slice(None), slice(None), slice(None), pauli)

    def _reset_syn(self, c):
        out = np.zeros_like(c)
        kept = c[self._syn_slice(c, 0)]
        out[self._syn_slice(c, 0)] = kept
        out[self._syn_slice(c, 3)] = kept
        return out

    def _measure_syn(self, c, rng):
        shots = c.shape[0]
        ci = c[self._syn_slice(c, 0)]
        cz = c[self._syn_slice(c, 3)]
        plus = (ci + cz) / 2.0
        minus = (ci - cz) / 2.0
        p_plus = np.clip(self._identity_mass(plus), 1e-300, None)
        p_minus = np.clip(self._identity_mass(minus), 1e-300, None)
        outcome = (rng.random(shots) < p_minus / (p_plus + p_minus)).astype(np.uint8)
        shape_tail = (None,) * (plus.ndim - 1)
        pick = np.where(outcome[(..., *shape_tail)] == 1, minus, plus)
        sign = np.where(outcome == 1, -1.0, 1.0)[(..., *shape_tail)]
        mass = np.where(outcome == 1, p_minus, p_plus)[(..., *shape_tail)]
        out = np.zeros_like(c)
        out[self._syn_slice(c, 0)] = pick / mass
        out[self._syn_slice(c, 3)] = sign * pick / mass
        return out, outcome

    def _expectations(self, c):
        if self.has_d1:
            vals = c[:, :, :, 0, :].sum(axis=1) * self.norm
            return vals.reshape(c.shape[0], 16)
        if self.has_syn:
            return c[:, :, :, 0].sum(axis=1) * self.norm
        return c.sum(axis=1) * self.norm


def _batch_inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Re <a_s | b_s> over the shot axis."""
    flat_a = a.reshape(a.shape[0], -1)
    flat_b = b.reshape(b.shape[0], -1)
    return np.einsum("si,si->s", flat_a.conj(), flat_b).real


def _cnot_unitary(first_is_control: bool) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    for a in (0, 1):
        for b in (0, 1):
            if first_is_control:
                m[a * 2 + (b ^ a), a * 2 + b] = 1.0
            else:
                m[(a ^ b) * 2 + b, a * 2 + b] = 1.0
    return m


# ---------------------------------------------------------------------------
# trajectory backend


class _BatchSegment:
    """One piecewise-constant Lindblad segment for batched trajectories."""

    def __init__(self, h: np.ndarray, c_ops, t: float, n_sub: int = 64):
        self.c_ops = [np.asarray(c) for c in c_ops]
        h_eff = np.asarray(h, dtype=complex) - 0.5j * sum(
            c.conj().T @ c for c in self.c_ops
        )
        self.u_full = scipy.linalg.expm(-1j * h_eff * t)
        self.u_sub = scipy.linalg.expm(-1j * h_eff * (t / n_sub))
        self.n_sub = n_sub

    def apply(self, states, survival, threshold, rng):
        """states: (S, D, R) normalized per shot; jump bookkeeping updated."""
        cand = self.u_full @ states
        n2 = np.einsum("sdr,sdr->s", cand.conj(), cand).real
        new_surv = survival * n2
        ok = new_surv >= threshold
        states[ok] = cand[ok] / np.sqrt(n2[ok])[:, None, None]
        survival[ok] = new_surv[ok]
        bad = np.flatnonzero(~ok)
        for s in bad:
            psi = states[s]
            surv, thr = survival[s], threshold[s]
            for _ in range(self.n_sub):
                step = self.u_sub @ psi
                m2 = float(np.real(np.vdot(step.ravel(), step.ravel())))
                if surv * m2 < thr:
                    psi = step / np.sqrt(m2)
                    weights = np.array(
                        [np.linalg.norm(c @ psi) ** 2 for c in self.c_ops]
                    )
                    k = rng.choice(len(self.c_ops), p=weights / weights.sum())
                    psi = self.c_ops[k] @ psi
                    psi = psi / np.linalg.norm(psi)
                    surv = 1.0
                    thr = rng.random()
                else:
                    psi = step / np.sqrt(m2)
                    surv *= m2
            states[s] = psi
            survival[s] = surv
            threshold[s] = thr
        return states, survival, threshold


class TrajectoryBackend:
    """Batched quantum-trajectory simulation of the physical circuits.

    Hilbert factors: mode (x) aux TLS [(x) syn TLS] [(x) d1 TLS], kept in
    that axis order. Noisy pipelines act on (mode, aux) for sBs and on
    (mode, syn) for CX gates; all TLS one-qubit gates and the ideal
    TLS-TLS CNOT are instantaneous unitaries.
    """

    def __init__(self, mset: store.ModelSet, events: list[tuple]):
        self.mset = mset
        self.events = events
        self.has_d1, self.has_syn = _experiment_modes(events)
        self.gauges = _gauge_timeline(events)
        self.d = mset.params.dim
        self.axes = ["mode", "aux"] + (["syn"] if self.has_syn else []) + (
            ["d1"] if self.has_d1 else []
        )
        self.dims = [self.d] + [2] * (len(self.axes) - 1)
        self._segments: dict = {}
        self._paulis: dict = {}
        for gauge in ALL_GAUGES:
            if gauge not in mset.bases:
                continue
            basis = mset.bases[gauge]
            self._paulis[gauge] = {
                lab: basis.logical_pauli(lab) for lab in PAULI_LABELS
            }

    def _axis(self, name: str) -> int:
        return 1 + self.axes.index(name)  # axis 0 is the shot axis

    def _pipeline_segments(self, kind: str, arg: str, gauge):
        key = (kind, arg, gauge)
        if key not in self._segments:
            params = self.mset.params.with_gauge(gauge)
            if kind == "sbs":
                pipe = dynamics.noisy_sbs_instrument(arg, params, self.mset.noise).pipeline
            else:
                pipe = dynamics.cx_channel(arg, params, self.mset.noise).pipeline
            steps = []
            for step in pipe.steps:
                if isinstance(step, dynamics.UnitaryStep):
                    steps.append(("u", step.u))
                else:
                    steps.append(
                        ("seg", _BatchSegment(step.h, list(step.c_ops), step.t))
                    )
            self._segments[key] = steps
        return self._segments[key]

    # -- state manipulation helpers ---------------------------------------

    def _to_front(self, states, names: list[str]):
        """Reorder so the named axes (after shots) come first; returns
        (reshaped view (S, D, R), inverse permutation info)."""
        order = [0] + [self._axis(n) for n in names] + [
            self._axis(n) for n in self.axes if n not in names
        ]
        moved = np.ascontiguousarray(np.transpose(states, order))
        dim = int(np.prod([states.shape[self._axis(n)] for n in names]))
        rest = moved.size // (states.shape[0] * dim)
        return moved.reshape(states.shape[0], dim, rest), order, moved.shape

    def _from_front(self, flat, order, shape):
        moved = flat.reshape(shape)
        inv = np.argsort(order)
        return np.ascontiguousarray(np.transpose(moved, inv))

    def _apply_unitary(self, states, u, names: list[str]):
        flat, order, shape = self._to_front(states, names)
        flat = np.matmul(u, flat)
        return self._from_front(flat, order, shape)

    def _set_axis(self, collapsed: np.ndarray, name: str, vec: np.ndarray):
        """Replace a collapsed (singleton) TLS factor with the state ``vec``."""
        axis = self._axis(name)
        shape = [1] * collapsed.ndim
        shape[axis] = 2
        return collapsed * vec.reshape(shape)

    def _measure_axis(self, states, name: str, rng):
        axis = self._axis(name)
        amp2 = np.abs(states) ** 2
        sum_axes = tuple(a for a in range(1, states.ndim) if a != axis)
        probs = amp2.sum(axis=sum_axes)  # (S, 2)
        p1 = probs[:, 1] / probs.sum(axis=1)
        outcome = (rng.random(states.shape[0]) < p1).astype(np.uint8)
        collapsed = np.take_along_axis(
            states, outcome.reshape([-1] + [1] * (states.ndim - 1)).astype(np.int64), axis=axis
        )
        norms = np.sqrt(
            np.abs(collapsed).__pow__(2).sum(axis=tuple(range(1, collapsed.ndim)))
        )
        collapsed = collapsed / norms.reshape([-1] + [1] * (states.ndim - 1))
        return collapsed, outcome  # collapsed keeps a singleton axis

    # -- main loop ---------------------------------------------------------

    def initial_state(self, name: str, shots: int) -> np.ndarray:
        basis = self.mset.bases[(0, 0)]
        shape = [shots] + self.dims
        states = np.zeros(shape, dtype=complex)
        k0 = basis.ket(0, 0)
        k1 = basis.ket(0, 1)
        if name == "plus_x":
            mode_part = (k0 + k1) / np.sqrt(2)
            idx = tuple([slice(None), slice(None)] + [0] * (len(self.dims) - 1))
            states[idx] = mode_part[None, :]
        elif name == "bell":
            if not (self.has_d1 and self.has_syn):
                raise ValueError("bell preparation needs both TLS modes")
            # (|k0> |0>_d1 + |k1> |1>_d1)/sqrt(2), aux and syn in |0>
            states[:, :, 0, 0, 0] = k0[None, :] / np.sqrt(2)
            states[:, :, 0, 0, 1] = k1[None, :] / np.sqrt(2)
        else:
            raise ValueError(f"unknown preparation {name!r}")
        return states

    def run(self, shots: int, rng: np.random.Generator) -> dict:
        events = self.events
        n_records = sum(1 for ev in events if ev[0] == "record")
        n_meas = len(measurement_roles(events))
        labels = record_labels(events)
        bits = np.zeros((shots, n_meas), dtype=np.uint8)
        expects = np.zeros((shots, n_records, len(labels)))
        states = None
        survival = np.ones(shots)
        threshold = rng.random(shots)
        mi = ri = 0
        for ev, gauge in zip(events, self.gauges):
            kind = ev[0]
            if kind == "prep":
                states = self.initial_state(ev[1], shots)
            elif kind == "sbs":
                states, outcome, survival, threshold = self._run_sbs(
                    states, ev[1], gauge, survival, threshold, rng
                )
                bits[:, mi] = outcome
                mi += 1
            elif kind == "cx":
                states, survival, threshold = self._run_pipeline(
                    states, "cx", ev[1], gauge, ["mode", "syn"], survival, threshold, rng
                )
            elif kind == "cnot_ts":
                u = _cnot_unitary(first_is_control=(ev[1] == "syn_ctrl"))
                states = self._apply_unitary(states, u, ["syn", "d1"])
            elif kind == "h_syn":
                states = self._apply_unitary(states, dynamics.HADAMARD, ["syn"])
            elif kind == "reset_syn":
                collapsed, _ = self._measure_axis(states, "syn", rng)
                states = self._set_axis(collapsed, "syn", np.array([1.0, 0.0], dtype=complex))
            elif kind == "measure_syn":
                collapsed, outcome = self._measure_axis(states, "syn", rng)
                # syn is re-prepared in |0> right away; the record keeps the value
                states = self._set_axis(collapsed, "syn", np.array([1.0, 0.0], dtype=complex))
                bits[:, mi] = outcome
                mi += 1
            elif kind == "record":
                expects[:, ri] = self._expectations(states, gauge)
                ri += 1
            else:
                raise ValueError(f"unknown event {ev}")
        return {"bits": bits, "expectations": expects, "labels": labels}

    def _run_pipeline(self, states, kind, arg, gauge, names, survival, threshold, rng):
        for step_kind, payload in self._pipeline_segments(kind, arg, gauge):
            if step_kind == "u":
                states = self._apply_unitary(states, payload, names)
            else:
                flat, order, shape = self._to_front(states, names)
                flat, survival, threshold = payload.apply(flat, survival, threshold, rng)
                states = self._from_front(flat, order, shape)
        return states, survival, threshold

    def _run_sbs(self, states, quad, gauge, survival, threshold, rng):
        # fresh aux in |+x>
        collapsed, _ = self._measure_axis(states, "aux", rng)
        states = self._set_axis(collapsed, "aux", dynamics.PLUS_X)
        states, survival, threshold = self._run_pipeline(
            states, "sbs", quad, gauge, ["mode", "aux"], survival, threshold, rng
        )
        collapsed, outcome = self._measure_axis(states, "aux", rng)
        states = self._set_axis(collapsed, "aux", np.array([1.0, 0.0], dtype=complex))
        return states, outcome, survival, threshold

    def _expectations(self, states, gauge):
        paulis = self._paulis[gauge]
        shots = states.shape[0]
        out = np.zeros((shots, 16 if self.has_d1 else 4))
        flat, order, shape = self._to_front(states, ["mode"])
        col = 0
        for a, lab_a in enumerate(PAULI_LABELS):
            pa = paulis[lab_a]
            moved = np.matmul(pa, flat)
            phi = self._from_front(moved, order, shape)
            if not self.has_d1:
                out[:, col] = _batch_inner(states, phi)
                col += 1
                continue
            for lab_b in PAULI_LABELS:
                sig = channels.PAULIS[lab_b] if lab_b != "I" else np.eye(2)
                chi = self._apply_unitary_linear(phi, sig, "d1")
                out[:, col] = _batch_inner(states, chi)
                col += 1
        return out

    def _apply_unitary_linear(self, states, m, name):
        flat, order, shape = self._to_front(states, [name])
        flat = np.matmul(m, flat)
        return self._from_front(flat, order, shape)


# ---------------------------------------------------------------------------
# orchestration


def run_model_comparison(
    mset: store.ModelSet,
    experiment: str,
    rounds: int,
    shots: int,
    seed: int = 0,
    backends: tuple[str, ...] = BACKENDS,
    chunk: int = 4000,
) -> dict[str, dict]:
    """Run the same experiment description under each backend.

    Returns per backend a dict with ``bits`` (measurement records in
    circuit order), ``expectations`` (shots, records, paulis), and
    ``labels``. Shots are chunked to bound memory.
    """
    if experiment not in EXPERIMENT_EVENTS:
        raise ValueError(f"unknown experiment {experiment!r}")
    events = EXPERIMENT_EVENTS[experiment](rounds)
    out = {}
    for b_i, backend in enumerate(backends):
        if backend == "trajectory":
            engine = TrajectoryBackend(mset, events)
        elif backend == "ptm_plus":
            engine = DenseModelBackend(mset, events, twirled=False)
        elif backend == "bp_plus":
            engine = DenseModelBackend(mset, events, twirled=True)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        pieces = []
        done = 0
        part = 0
        while done < shots:
            n = min(chunk, shots - done)
            rng = np.random.default_rng((seed, b_i, part))
            pieces.append(engine.run(n, rng))
            done += n
            part += 1
        out[backend] = {
            "bits": np.concatenate([p["bits"] for p in pieces]),
            "expectations": np.concatenate([p["expectations"] for p in pieces]),
            "labels": pieces[0]["labels"],
            "roles": measurement_roles(events),
        }
    return out


def summarize_comparison(results: dict[str, dict], seed: int = 0) -> dict:
    """Per-backend expectation curves with bootstrap CIs, outcome
    correlations, nonzero-sBs-count distributions, and post-selected
    final expectations."""
    summary: dict = {}
    for backend, res in results.items():
        rng = np.random.default_rng((seed, sum(map(ord, backend))))
        exp = res["expectations"]
        labels = res["labels"]
        mean = exp.mean(axis=0)
        cis = np.stack(
            [stats.bootstrap_mean_ci_batch(exp[:, :, j], rng) for j in range(exp.shape[2])],
            axis=-1,
        )  # (2, records, paulis)
        roles = res["roles"]
        sbs_cols = [i for i, r in enumerate(roles) if r.startswith("sbs")]
        k_counts = res["bits"][:, sbs_cols].sum(axis=1)
        claim = "XX" if "XX" in labels else "X"
        final_vals = exp[:, -1, labels.index(claim)]
        summary[backend] = {
            "labels": labels,
            "roles": roles,
            "mean_expectations": mean,
            "ci_expectations": cis,
            "correlations": stats.pearson_corr(res["bits"].astype(float)),
            "k_distribution": stats.k_distribution(k_counts),
            "postselected_final": stats.postselect_by_k(final_vals, k_counts, rng),
        }
    return summary


def run_surface_memory(
    mset: store.ModelSet,
    distance: int,
    rounds: int,
    shots: int,
    seed: int = 0,
    decoders: tuple[str, ...] = REGIMES,
    sbs_schedule: tuple[str, ...] = ("q", "p", "q", "p"),
    init_basis: str = "X",
) -> dict:
    """Two-step sampling of the memory experiment plus decoding.

    The same shot set is decoded by every requested decoder.
    """
    circuit = surface.build_memory_circuit(
        distance,
        rounds,
        n_sectors=mset.n_sectors,
        sbs_schedule=sbs_schedule,
        init_basis=init_basis,
        per_gauge_models=mset.per_gauge,
    )
    models = mset.models_for_circuit()
    circuit.validate(models)
    rng = np.random.default_rng(seed)
    paths = sample_error_paths_batch(circuit, models, shots, rng)
    run = run_batch(circuit, models, paths, rng)
    topology = DecodingTopology(circuit)
    decode_results = {}
    for regime in decoders:
        decode_results[regime] = decode_records(
            circuit,
            models,
            run["records"],
            regime,
            outcomes=paths.outcomes,
            paths=paths,
            topology=topology,
        )
    return {
        "circuit": circuit,
        "records": run["records"],
        "paths": paths,
        "decodes": decode_results,
    }


def sector_history_export(circuit, paths, mode: int) -> dict:
    """Per-shot error-sector history of one data mode (first shot).

    Returns the sampled sector path, the sBs outcomes, and the marginal
    data-qubit Pauli rates selected at each site, in site order.
    """
    sites = circuit.bp_sites
    tags = []
    for i, op in enumerate(sites):
        carrier = [t for t in op.targets if circuit.sector_counts[t] > 1]
        if carrier and carrier[0] == mode:
            tags.append(i)
    return {
        "site_indices": tags,
        "model_keys": [sites[i].model for i in tags],
        "e_in": np.stack([paths.e_in[i] for i in tags], axis=1),
        "e_out": np.stack([paths.e_out[i] for i in tags], axis=1),
        "outcome": np.stack([paths.outcome[i] for i in tags], axis=1),
    }


# ---------------------------------------------------------------------------
# result persistence: binary records + JSON summary + CSV tables


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def save_comparison(results: dict, summary: dict, directory) -> None:
    """Persist a model-comparison run: per-backend shot records and
    expectations, a JSON summary, and CSV tables of the headline curves."""
    import csv
    import json
    from pathlib import Path

    from .circuits import write_records

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for backend, res in results.items():
        write_records(
            directory / f"{backend}.bprc",
            res["bits"],
            res["roles"],
            meta={"backend": backend},
        )
        np.savez_compressed(
            directory / f"{backend}_expectations.npz",
            expectations=res["expectations"].astype(np.float32),
            labels=np.array(res["labels"]),
        )
    (directory / "summary.json").write_text(json.dumps(_jsonable(summary), indent=1))
    # headline CSV: per-record mean expectations with bootstrap CIs
    for backend, s in summary.items():
        with open(directory / f"{backend}_expectations.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["record_index"]
                + [f"{lab}_{suffix}" for lab in s["labels"] for suffix in ("mean", "lo", "hi")]
            )
            mean = np.asarray(s["mean_expectations"])
            cis = np.asarray(s["ci_expectations"])
            for i in range(mean.shape[0]):
                row = [i]
                for j in range(mean.shape[1]):
                    row += [mean[i, j], cis[0, i, j], cis[1, i, j]]
                writer.writerow(row)
        with open(directory / f"{backend}_k_distribution.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "fraction"])
            for k, frac in s["k_distribution"].items():
                writer.writerow([k, frac])
        with open(directory / f"{backend}_postselected.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "mean", "n", "ci_lo", "ci_hi"])
            for k, rec in s["postselected_final"].items():
                writer.writerow([k, rec["mean"], rec["n"], rec["ci"][0], rec["ci"][1]])


def load_comparison(directory) -> tuple[dict, dict]:
    import json
    from pathlib import Path

    from .circuits import read_records

    directory = Path(directory)
    summary = json.loads((directory / "summary.json").read_text())
    results = {}
    for rec_file in sorted(directory.glob("*.bprc")):
        backend = rec_file.stem
        bits, roles, _meta = read_records(rec_file)
        data = np.load(directory / f"{backend}_expectations.npz")
        results[backend] = {
            "bits": bits,
            "roles": roles,
            "expectations": data["expectations"],
            "labels": [str(x) for x in data["labels"]],
        }
    return results, summary


def save_surface_run(run: dict, directory) -> None:
    """Persist a memory experiment: records, sBs outcomes, sampled sector
    histories, decode summaries, and a per-mode history export."""
    import csv
    import json
    from pathlib import Path

    from .circuits import write_records

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    circuit = run["circuit"]
    roles = circuit.measurement_roles()
    write_records(directory / "records.bprc", run["records"], roles, meta=circuit.meta)
    paths = run["paths"]
    np.savez_compressed(
        directory / "error_paths.npz",
        outcomes=paths.outcomes,
        e_in=np.stack(paths.e_in, axis=1) if paths.e_in else np.zeros((paths.shots, 0), np.int64),
        e_out=np.stack(paths.e_out, axis=1) if paths.e_out else np.zeros((paths.shots, 0), np.int64),
        site_outcome=np.stack(paths.outcome, axis=1) if paths.outcome else np.zeros((paths.shots, 0), np.int64),
    )
    summary = {"decoders": {}, "meta": circuit.meta}
    for regime, res in run["decodes"].items():
        lo, hi = res.wilson_interval()
        summary["decoders"][regime] = {
            "shots": res.shots,
            "failures": res.failures,
            "error_rate": res.error_rate,
            "wilson_95": [lo, hi],
            "dropped_hyperedges": res.dropped_hyperedges,
        }
    (directory / "summary.json").write_text(json.dumps(_jsonable(summary), indent=1))
    with open(directory / "logical_error_rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["decoder", "shots", "failures", "error_rate", "wilson_lo", "wilson_hi"])
        for regime, doc in summary["decoders"].items():
            writer.writerow(
                [regime, doc["shots"], doc["failures"], doc["error_rate"]]
                + list(doc["wilson_95"])
            )
    (directory / "summary.txt").write_text(
        "\n".join(
            f"{regime}: {doc['failures']}/{doc['shots']} failures, "
            f"P_L = {doc['error_rate']:.5f}, 95% Wilson [{doc['wilson_95'][0]:.5f}, "
            f"{doc['wilson_95'][1]:.5f}]"
            for regime, doc in summary["decoders"].items()
        )
        + "\n"
    )
