"""Rotated surface-code memory circuits over GKP data qubits.

Data qubits are GKP modes on a d x d grid; syndrome qubits are TLS measuring
the stabilizers through CNOTs implemented with a single conditional
displacement each. X parity checks use the syndrome qubit as control
(model 'cx_sd'), Z checks use the data qubit as control ('cx_ds'). After
every CNOT the participating GKP mode is stabilized by a configurable burst
of sBs rounds, (q, p, q, p) by default, each emitting an inner-code outcome.

Gauge bookkeeping: a CNOT flips g_q ('sd') or g_p ('ds') of its data mode.
With per-gauge models enabled, sites reference gauge-resolved model keys
like ``sbs_q@10``; by default a single trivial-gauge model per gate class
serves all gauges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuits import AugmentedCircuit, BpSiteOp, CliffordOp, MeasureOp, ResetOp

#: step order of the four data corners per check type, chosen so that hook
#: errors run parallel to the matching logical boundary
_X_ORDER = ((0, 1), (0, 0), (1, 1), (1, 0))  # NE, NW, SE, SW
_Z_ORDER = ((0, 1), (1, 1), (0, 0), (1, 0))  # NE, SE, NW, SW


@dataclass(frozen=True)
class CheckInfo:
    kind: str  # 'X' or 'Z'
    plaquette: tuple[int, int]
    mode: int  # syndrome mode index
    support: tuple[int, ...]  # data mode indices
    schedule: tuple[int | None, ...]  # data mode per step, None = idle


@dataclass
class Layout:
    """Rotated surface-code layout with a 4-step CNOT schedule."""

    distance: int
    data_coords: list[tuple[int, int]]
    checks: list[CheckInfo]

    @property
    def n_data(self) -> int:
        return len(self.data_coords)

    @property
    def n_syndrome(self) -> int:
        return len(self.checks)

    @property
    def n_modes(self) -> int:
        return self.n_data + self.n_syndrome

    def checks_of_kind(self, kind: str) -> list[CheckInfo]:
        return [c for c in self.checks if c.kind == kind]


def rotated_surface_layout(d: int) -> Layout:
    """Standard rotated layout: d^2 data, d^2 - 1 checks, weight 4 in the
    bulk and 2 on the boundary; X checks terminate the top/bottom rows."""
    if d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be odd and >= 3, got {d}")
    data_coords = [(r, c) for r in range(d) for c in range(d)]
    data_index = {rc: i for i, rc in enumerate(data_coords)}
    checks: list[CheckInfo] = []
    syn_mode = d * d
    for r in range(-1, d):
        for c in range(-1, d):
            kind = "X" if (r + c) % 2 else "Z"
            corners = [(r + dr, c + dc) for dr, dc in ((0, 0), (0, 1), (1, 0), (1, 1))]
            present = [rc for rc in corners if rc in data_index]
            if len(present) == 1:
                continue
            if len(present) == 2:
                on_top_bottom = r == -1 or r == d - 1
                if kind == "X" and not on_top_bottom:
                    continue
                if kind == "Z" and on_top_bottom:
                    continue
            order = _X_ORDER if kind == "X" else _Z_ORDER
            schedule = []
            for dr, dc in order:
                rc = (r + dr, c + dc)
                schedule.append(data_index[rc] if rc in data_index else None)
            checks.append(
                CheckInfo(
                    kind=kind,
                    plaquette=(r, c),
                    mode=syn_mode,
                    support=tuple(data_index[rc] for rc in present),
                    schedule=tuple(schedule),
                )
            )
            syn_mode += 1
    layout = Layout(distance=d, data_coords=data_coords, checks=checks)
    assert layout.n_syndrome == d * d - 1
    return layout


class GaugeTracker:
    """Per-mode (g_q, g_p) timelines; CX sites flip one component."""

    def __init__(self, n_modes: int):
        self.current = [(0, 0)] * n_modes
        self.timelines: list[list[tuple[int, int]]] = [[(0, 0)] for _ in range(n_modes)]

    def flip(self, mode: int, component: str) -> None:
        g_q, g_p = self.current[mode]
        self.current[mode] = (1 - g_q, g_p) if component == "q" else (g_q, 1 - g_p)
        self.timelines[mode].append(self.current[mode])

    def gauge(self, mode: int) -> tuple[int, int]:
        return self.current[mode]


class _PendingPauli:
    """Compile-time frame for the deterministic logical Z/X of sBs rounds.

    The error parts of BP+ models are Pauli channels and commute with this
    frame as channels, so it only needs to be folded into measurement flips.
    """

    def __init__(self, n_modes: int):
        self.x = np.zeros(n_modes, dtype=np.uint8)
        self.z = np.zeros(n_modes, dtype=np.uint8)

    def add(self, mode: int, pauli: str) -> None:
        if pauli in ("X", "Y"):
            self.x[mode] ^= 1
        if pauli in ("Z", "Y"):
            self.z[mode] ^= 1

    def through_clifford(self, gate: str, targets: tuple[int, ...]) -> None:
        if gate == "H":
            (q,) = targets
            self.x[q], self.z[q] = self.z[q], self.x[q]
        elif gate == "S":
            (q,) = targets
            self.z[q] ^= self.x[q]
        elif gate == "CNOT":
            c, t = targets
            self.x[t] ^= self.x[c]
            self.z[c] ^= self.z[t]
        elif gate == "CZ":
            c, t = targets
            self.z[t] ^= self.x[c]
            self.z[c] ^= self.x[t]
        # single-qubit Paulis commute up to phase

    def measurement_flip(self, mode: int, basis: str) -> int:
        return int(self.x[mode] if basis == "Z" else self.z[mode])

    def clear(self, mode: int) -> None:
        self.x[mode] = 0
        self.z[mode] = 0


def model_key(kind: str, gauge: tuple[int, int], per_gauge: bool) -> str:
    return f"{kind}@{gauge[0]}{gauge[1]}" if per_gauge else kind


SBS_IDEAL_PAULI = {"q": "Z", "p": "X"}


def build_memory_circuit(
    d: int,
    rounds: int,
    n_sectors: int,
    sbs_schedule: tuple[str, ...] = ("q", "p", "q", "p"),
    init_basis: str = "X",
    per_gauge_models: bool = False,
) -> AugmentedCircuit:
    """Memory experiment: logical |+> (or |0>), ``rounds`` rounds of checks,
    transversal data readout, detectors and the logical observable annotated.

    Every BP+ site references a model key; the gauge of each data mode is
    tracked along its timeline so keys resolve to the right variant when
    per-gauge models are enabled. The deterministic logical Z/X applied by
    each sBs round is folded into measurement flip bits at compile time.
    """
    if init_basis not in ("X", "Z"):
        raise ValueError("init_basis must be 'X' or 'Z'")
    if rounds < 1:
        raise ValueError("need at least one round")
    for quad in sbs_schedule:
        if quad not in ("q", "p"):
            raise ValueError(f"bad sBs schedule entry {quad!r}")
    layout = rotated_surface_layout(d)
    n_modes = layout.n_modes
    circuit = AugmentedCircuit(
        sector_counts=[n_sectors] * layout.n_data + [1] * layout.n_syndrome
    )
    gauges = GaugeTracker(n_modes)
    pending = _PendingPauli(n_modes)
    ops = circuit.ops
    meas_index = 0
    meas_flips: list[int] = []
    check_meas: dict[int, list[int]] = {i: [] for i in range(layout.n_syndrome)}
    sbs_tags: list[dict] = []

    def emit_measure(mode: int, basis: str, role: str) -> int:
        nonlocal meas_index
        flip = pending.measurement_flip(mode, basis)
        ops.append(MeasureOp(mode, basis=basis, role=role, flip=flip))
        meas_flips.append(flip)
        meas_index += 1
        return meas_index - 1

    def emit_sbs_burst(mode: int) -> None:
        for quad in sbs_schedule:
            gauge = gauges.gauge(mode)
            key = model_key(f"sbs_{quad}", gauge, per_gauge_models)
            ops.append(BpSiteOp(key, (mode,), emits=True))
            sbs_tags.append({"mode": mode, "quadrature": quad, "gauge": list(gauge)})
            pending.add(mode, SBS_IDEAL_PAULI[quad])

    # data preparation (noiseless): |0> or |+> on every GKP mode
    for m in range(layout.n_data):
        ops.append(ResetOp(m))
        if init_basis == "X":
            ops.append(CliffordOp("H", (m,)))
    for _round in range(rounds):
        for check in layout.checks:
            ops.append(ResetOp(check.mode))
            pending.clear(check.mode)
            if check.kind == "X":
                ops.append(CliffordOp("H", (check.mode,)))
        for step in range(4):
            for check in layout.checks:
                data = check.schedule[step]
                if data is None:
                    continue
                if check.kind == "X":
                    control, target = check.mode, data
                    cx_kind, flip_comp = "cx_sd", "q"
                else:
                    control, target = data, check.mode
                    cx_kind, flip_comp = "cx_ds", "p"
                gauge = gauges.gauge(data)
                key = model_key(cx_kind, gauge, per_gauge_models)
                ops.append(CliffordOp("CNOT", (control, target)))
                pending.through_clifford("CNOT", (control, target))
                ops.append(BpSiteOp(key, (data, check.mode), emits=False))
                gauges.flip(data, flip_comp)
                emit_sbs_burst(data)
        for check in layout.checks:
            if check.kind == "X":
                ops.append(CliffordOp("H", (check.mode,)))
                pending.through_clifford("H", (check.mode,))
            idx = emit_measure(check.mode, "Z", "syndrome")
            check_meas[layout.checks.index(check)].append(idx)
    final_data_meas = {}
    for m in range(layout.n_data):
        final_data_meas[m] = emit_measure(m, init_basis, "data")

    # detectors: deterministic parities of the noiseless circuit
    detectors: list[list[int]] = []
    detector_meta: list[dict] = []
    for ci, check in enumerate(layout.checks):
        seq = check_meas[ci]
        matches_init = check.kind == init_basis
        if matches_init:
            detectors.append([seq[0]])
            detector_meta.append({"check": ci, "round": 0, "kind": check.kind})
        for t in range(1, rounds):
            detectors.append([seq[t - 1], seq[t]])
            detector_meta.append({"check": ci, "round": t, "kind": check.kind})
        if matches_init:
            final = [seq[-1]] + [final_data_meas[m] for m in check.support]
            detectors.append(final)
            detector_meta.append({"check": ci, "round": rounds, "kind": check.kind})
    # logical observable: a transversal line of final data measurements; the
    # X string runs between the X-check boundaries (top/bottom, so a column)
    if init_basis == "X":
        line = [m for m, (r, c) in enumerate(layout.data_coords) if c == 0]
    else:
        line = [m for m, (r, c) in enumerate(layout.data_coords) if r == 0]
    observable = [final_data_meas[m] for m in line]

    # records carry the true (ideal-Pauli-included) outcomes; the noiseless
    # parity of every detector is then the XOR of its members' folded flips
    circuit.detectors = detectors
    circuit.observables = [observable]
    circuit.detector_offsets = [
        int(np.bitwise_xor.reduce([meas_flips[i] for i in det])) for det in detectors
    ]
    circuit.observable_offsets = [
        int(np.bitwise_xor.reduce([meas_flips[i] for i in observable]))
    ]
    circuit.meta = {
        "distance": d,
        "rounds": rounds,
        "init_basis": init_basis,
        "sbs_schedule": list(sbs_schedule),
        "per_gauge_models": per_gauge_models,
        "n_data": layout.n_data,
        "n_syndrome": layout.n_syndrome,
        "detector_meta": detector_meta,
        "sbs_tags": sbs_tags,
        "gauge_timelines": gauges.timelines[: layout.n_data],
    }
    return circuit


def required_model_keys(circuit: AugmentedCircuit) -> set[str]:
    return {op.model for op in circuit.bp_sites}
