"""Augmented Clifford circuits with BP+ channel sites, error-path sampling,
and sampling-circuit execution.

An :class:`AugmentedCircuit` is a register of modes (each with a classical
error-sector dimension; 1 for a TLS) and a list of operations: ideal
Cliffords, BP+ channel sites, measurements, and resets. Error-path sampling
follows the two-step scheme: first the classical part (sector indices and
sBs outcomes) is sampled through the whole circuit, producing an ordinary
Pauli-noise circuit; then the logical part is sampled with a stabilizer
tableau or batched Pauli frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .channels import BpPlusModel
from .tableau import PauliFrameBatch, Tableau

# Pauli flat index (base-4 digits, first target slowest) -> X/Z bits
_PAULI_XBIT = np.array([0, 1, 1, 0], dtype=np.uint8)
_PAULI_ZBIT = np.array([0, 0, 1, 1], dtype=np.uint8)


@dataclass(frozen=True)
class CliffordOp:
    gate: str
    targets: tuple[int, ...]


@dataclass(frozen=True)
class BpSiteOp:
    model: str
    targets: tuple[int, ...]
    emits: bool = False


@dataclass(frozen=True)
class MeasureOp:
    target: int
    basis: str = "Z"
    role: str = ""
    flip: int = 0  # compile-time deterministic parity flip folded into the record


@dataclass(frozen=True)
class ResetOp:
    target: int


@dataclass(frozen=True)
class ProbeOp:
    """Record per-shot expectation of a Pauli string (no collapse)."""

    name: str
    xmask: tuple[int, ...]
    zmask: tuple[int, ...]


@dataclass(frozen=True)
class PauliNoiseOp:
    targets: tuple[int, ...]
    rates: tuple[float, ...]  # 4^k entries over Pauli strings on targets


@dataclass
class AugmentedCircuit:
    """Register plus ordered operation list, with optional detector annotations."""

    sector_counts: list[int]
    ops: list = field(default_factory=list)
    detectors: list[list[int]] = field(default_factory=list)
    observables: list[list[int]] = field(default_factory=list)
    detector_offsets: list[int] = field(default_factory=list)
    observable_offsets: list[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return len(self.sector_counts)

    @property
    def n_measurements(self) -> int:
        return sum(1 for op in self.ops if isinstance(op, MeasureOp))

    @property
    def bp_sites(self) -> list[BpSiteOp]:
        return [op for op in self.ops if isinstance(op, BpSiteOp)]

    def measurement_roles(self) -> list[str]:
        return [op.role for op in self.ops if isinstance(op, MeasureOp)]

    def validate(self, models: dict[str, BpPlusModel]) -> None:
        n = self.n_modes
        for op in self.ops:
            targets = getattr(op, "targets", None)
            if targets is None:
                targets = (op.target,) if hasattr(op, "target") else ()
            for t in targets:
                if t < 0 or t >= n:
                    raise ValueError(f"target {t} out of range in {op}")
            if isinstance(op, BpSiteOp):
                if op.model not in models:
                    raise KeyError(f"unresolved model id {op.model!r}")
                model = models[op.model]
                expected = int(np.prod([self.sector_counts[t] for t in op.targets]))
                if model.n_sectors != expected:
                    raise ValueError(
                        f"site {op} sector space {expected} does not match "
                        f"model n_sectors={model.n_sectors}"
                    )
                if model.n_logical != len(op.targets):
                    raise ValueError(
                        f"site {op} arity {len(op.targets)} does not match "
                        f"model n_logical={model.n_logical}"
                    )
                if op.emits and model.n_outcomes < 2:
                    raise ValueError(f"site {op} emits but model has one outcome")


@dataclass
class SiteSample:
    """Sampled classical data of one BP+ site."""

    op_index: int
    targets: tuple[int, ...]
    model: str
    e_in: int
    e_out: int
    outcome: int


@dataclass
class SamplingCircuit:
    """Ordinary Clifford circuit with per-site Pauli rates (Algorithm-1 output)."""

    sector_counts: list[int]
    ops: list
    outcomes: list[int]
    history: list[SiteSample]
    detectors: list[list[int]] = field(default_factory=list)
    observables: list[list[int]] = field(default_factory=list)


def _flat_sector(e: list[int] | np.ndarray, targets: tuple[int, ...], counts: list[int]) -> int:
    idx = 0
    for t in targets:
        idx = idx * counts[t] + int(e[t])
    return idx


def _unflatten_sector(flat: int, targets: tuple[int, ...], counts: list[int]) -> list[int]:
    out = []
    for t in reversed(targets):
        out.append(flat % counts[t])
        flat //= counts[t]
    return list(reversed(out))


def sample_error_paths(
    circuit: AugmentedCircuit,
    models: dict[str, BpPlusModel],
    rng: np.random.Generator,
) -> SamplingCircuit:
    """Sample the classical error-sector evolution through the circuit.

    Every BP+ site is replaced by a Pauli-noise site whose rates are the
    model's p(l | o, e, e') at the sampled outcome and transition; the
    sampled outcomes and the full sector history are returned alongside.
    The sampling never consults the logical state.
    """
    circuit.validate(models)
    counts = circuit.sector_counts
    e = [0] * circuit.n_modes
    ops_out: list = []
    outcomes: list[int] = []
    history: list[SiteSample] = []
    for op_index, op in enumerate(circuit.ops):
        if not isinstance(op, BpSiteOp):
            ops_out.append(op)
            continue
        model = models[op.model]
        e_in = _flat_sector(e, op.targets, counts)
        joint = model.trans[:, :, e_in].reshape(-1)
        pick = int(rng.choice(joint.size, p=joint / joint.sum()))
        o, e_out = divmod(pick, model.n_sectors)
        rates = model.pauli[o, e_out, e_in]
        ops_out.append(PauliNoiseOp(op.targets, tuple(float(r) for r in rates)))
        for t, e_t in zip(op.targets, _unflatten_sector(e_out, op.targets, counts)):
            e[t] = e_t
        if op.emits:
            outcomes.append(o)
        history.append(SiteSample(op_index, op.targets, op.model, e_in, e_out, o))
    return SamplingCircuit(
        sector_counts=list(counts),
        ops=ops_out,
        outcomes=outcomes,
        history=history,
        detectors=circuit.detectors,
        observables=circuit.observables,
    )


def run_sampling_circuit(sc: SamplingCircuit, rng: np.random.Generator) -> dict:
    """Execute a sampling circuit on a stabilizer tableau (one shot).

    Returns the measurement record, probe expectations, and the roles/flip
    conventions already folded in.
    """
    n = len(sc.sector_counts)
    tab = Tableau(n)
    bits: list[int] = []
    probes: dict[str, int] = {}
    for op in sc.ops:
        if isinstance(op, CliffordOp):
            tab.apply(op.gate, *op.targets)
        elif isinstance(op, PauliNoiseOp):
            rates = np.asarray(op.rates)
            ell = int(rng.choice(rates.size, p=rates / rates.sum()))
            digits = _pauli_digits(ell, len(op.targets))
            xmask = np.zeros(n, dtype=np.uint8)
            zmask = np.zeros(n, dtype=np.uint8)
            for t, dg in zip(op.targets, digits):
                xmask[t] = _PAULI_XBIT[dg]
                zmask[t] = _PAULI_ZBIT[dg]
            tab.apply_pauli(xmask, zmask)
        elif isinstance(op, MeasureOp):
            bit = _tableau_measure(tab, op, rng)
            bits.append(bit ^ op.flip)
        elif isinstance(op, ResetOp):
            tab.reset(op.target, rng)
        elif isinstance(op, ProbeOp):
            probes[op.name] = tab.pauli_expectation(
                np.array(op.xmask, dtype=np.uint8), np.array(op.zmask, dtype=np.uint8)
            )
        else:
            raise TypeError(f"unexpected op in sampling circuit: {op}")
    return {"bits": np.array(bits, dtype=np.uint8), "probes": probes}


def _tableau_measure(tab: Tableau, op: MeasureOp, rng) -> int:
    if op.basis == "Z":
        return tab.measure(op.target, rng)
    if op.basis == "X":
        tab.apply("H", op.target)
        bit = tab.measure(op.target, rng)
        tab.apply("H", op.target)
        return bit
    raise ValueError(f"unsupported measurement basis {op.basis!r}")


def _pauli_digits(flat: int, k: int) -> list[int]:
    digits = []
    for _ in range(k):
        digits.append(flat % 4)
        flat //= 4
    return list(reversed(digits))


# ---------------------------------------------------------------------------
# batched two-step sampling


@dataclass
class ErrorPathBatch:
    """Vectorized Algorithm-1 output for many shots.

    ``e_in``/``e_out``/``outcome`` are (shots,) arrays per BP+ site, in
    circuit order; ``outcomes`` stacks the emitting sites as a
    (shots, n_emitting) matrix.
    """

    site_ops: list[BpSiteOp]
    e_in: list[np.ndarray]
    e_out: list[np.ndarray]
    outcome: list[np.ndarray]
    outcomes: np.ndarray
    shots: int


def sample_error_paths_batch(
    circuit: AugmentedCircuit,
    models: dict[str, BpPlusModel],
    shots: int,
    rng: np.random.Generator,
) -> ErrorPathBatch:
    circuit.validate(models)
    counts = circuit.sector_counts
    gkp_modes = [m for m in range(circuit.n_modes) if counts[m] > 1]
    e = np.zeros((shots, circuit.n_modes), dtype=np.int64)
    site_ops, e_ins, e_outs, outs = [], [], [], []
    emitted = []
    for op in circuit.ops:
        if not isinstance(op, BpSiteOp):
            continue
        model = models[op.model]
        # flat input sector over the site's targets (mixed radix)
        e_in = np.zeros(shots, dtype=np.int64)
        for t in op.targets:
            e_in = e_in * counts[t] + e[:, t]
        cdf = model.joint_cdf()[e_in]  # (shots, n_out * n_sec)
        u = rng.random(shots)
        pick = (u[:, None] > cdf).sum(axis=1)
        o = pick // model.n_sectors
        e_out = pick % model.n_sectors
        rem = e_out.copy()
        for t in reversed(op.targets):
            e[:, t] = rem % counts[t]
            rem //= counts[t]
        site_ops.append(op)
        e_ins.append(e_in)
        e_outs.append(e_out)
        outs.append(o)
        if op.emits:
            emitted.append(o)
    outcomes = np.column_stack(emitted).astype(np.uint8) if emitted else np.zeros((shots, 0), np.uint8)
    return ErrorPathBatch(site_ops, e_ins, e_outs, outs, outcomes, shots)


def reference_run(circuit: AugmentedCircuit, seed: int = 0) -> dict:
    """Noiseless tableau pass fixing reference bits for frame sampling.

    BP+ sites act as identity here. Probe reference expectations are
    captured at their circuit positions.
    """
    rng = np.random.default_rng(seed)
    n = circuit.n_modes
    tab = Tableau(n)
    bits = []
    probe_refs = []
    for op in circuit.ops:
        if isinstance(op, CliffordOp):
            tab.apply(op.gate, *op.targets)
        elif isinstance(op, MeasureOp):
            bits.append(_tableau_measure(tab, op, rng))
        elif isinstance(op, ResetOp):
            tab.reset(op.target, rng)
        elif isinstance(op, ProbeOp):
            probe_refs.append(
                tab.pauli_expectation(
                    np.array(op.xmask, dtype=np.uint8), np.array(op.zmask, dtype=np.uint8)
                )
            )
    return {"bits": np.array(bits, dtype=np.uint8), "probe_refs": probe_refs}


def run_batch(
    circuit: AugmentedCircuit,
    models: dict[str, BpPlusModel],
    paths: ErrorPathBatch,
    rng: np.random.Generator,
    reference: dict | None = None,
) -> dict:
    """Frame-propagate all shots of a sampled error-path batch.

    Returns the measurement records (shots, n_measurements) with the
    compile-time flips folded in, plus per-probe expectation arrays.
    """
    reference = reference or reference_run(circuit)
    shots = paths.shots
    n = circuit.n_modes
    frames = PauliFrameBatch(n, shots, rng)
    frames.fz[:] = rng.integers(0, 2, size=frames.fz.shape, dtype=np.uint8)
    records = np.zeros((shots, circuit.n_measurements), dtype=np.uint8)
    probe_values: dict[str, np.ndarray] = {}
    meas_i = 0
    site_i = 0
    probe_i = 0
    for op in circuit.ops:
        if isinstance(op, CliffordOp):
            frames.apply(op.gate, *op.targets)
        elif isinstance(op, BpSiteOp):
            model = models[op.model]
            cdf = model.pauli_cdf()[paths.outcome[site_i], paths.e_out[site_i], paths.e_in[site_i]]
            u = rng.random(shots)
            ell = (u[:, None] > cdf).sum(axis=1)
            k = len(op.targets)
            xbits = np.zeros((shots, k), dtype=np.uint8)
            zbits = np.zeros((shots, k), dtype=np.uint8)
            rem = ell
            for j in range(k - 1, -1, -1):
                digit = rem % 4
                rem = rem // 4
                xbits[:, j] = _PAULI_XBIT[digit]
                zbits[:, j] = _PAULI_ZBIT[digit]
            frames.apply_pauli_masks(op.targets, xbits, zbits)
            site_i += 1
        elif isinstance(op, MeasureOp):
            if op.basis == "X":
                frames.apply("H", op.target)
            bits = frames.measure_z(op.target, int(reference["bits"][meas_i]))
            if op.basis == "X":
                frames.apply("H", op.target)
            records[:, meas_i] = bits ^ np.uint8(op.flip)
            meas_i += 1
        elif isinstance(op, ResetOp):
            frames.reset_z(op.target)
        elif isinstance(op, ProbeOp):
            xm = np.array(op.xmask, dtype=np.uint8)
            zm = np.array(op.zmask, dtype=np.uint8)
            probe_values[op.name] = frames.pauli_expectations(
                xm, zm, reference["probe_refs"][probe_i]
            )
            probe_i += 1
    return {"records": records, "probes": probe_values}


def evaluate_parities(
    records: np.ndarray,
    index_sets: list[list[int]],
    offsets: list[int] | None = None,
) -> np.ndarray:
    """Parity bits of measurement-index sets for every shot.

    ``offsets`` holds the deterministic noiseless parity of each set (from
    ideal logical Paulis folded into the record); the returned bits are
    relative to it, so a noiseless circuit yields all zeros.
    """
    out = np.zeros((records.shape[0], len(index_sets)), dtype=np.uint8)
    for j, idxs in enumerate(index_sets):
        if idxs:
            out[:, j] = records[:, idxs].sum(axis=1) % 2
        if offsets is not None and offsets[j]:
            out[:, j] ^= 1
    return out


# ---------------------------------------------------------------------------
# circuit text format

_OP_NAMES_1Q = {"H", "S", "X", "Y", "Z"}


def circuit_to_text(circuit: AugmentedCircuit) -> str:
    """One op per line. Grammar:

    ``modes <sector_count>...`` header, then per line one of
    ``H|S|X|Y|Z <q>``, ``CNOT|CZ <c> <t>``, ``BP <q>... model=<id> [emits]``,
    ``M <q> [basis=Z|X] [role=<tag>] [flip=0|1]``, ``R <q>``,
    ``PROBE <name> x=<bits> z=<bits>``.
    """
    lines = ["modes " + " ".join(str(c) for c in circuit.sector_counts)]
    for op in circuit.ops:
        if isinstance(op, CliffordOp):
            lines.append(op.gate + " " + " ".join(map(str, op.targets)))
        elif isinstance(op, BpSiteOp):
            line = "BP " + " ".join(map(str, op.targets)) + f" model={op.model}"
            if op.emits:
                line += " emits"
            lines.append(line)
        elif isinstance(op, MeasureOp):
            line = f"M {op.target}"
            if op.basis != "Z":
                line += f" basis={op.basis}"
            if op.role:
                line += f" role={op.role}"
            if op.flip:
                line += f" flip={op.flip}"
            lines.append(line)
        elif isinstance(op, ResetOp):
            lines.append(f"R {op.target}")
        elif isinstance(op, ProbeOp):
            xs = "".join(str(b) for b in op.xmask)
            zs = "".join(str(b) for b in op.zmask)
            lines.append(f"PROBE {op.name} x={xs} z={zs}")
        else:
            raise TypeError(f"cannot serialize op {op}")
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> AugmentedCircuit:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("modes "):
        raise ValueError("circuit text must start with a 'modes' header")
    counts = [int(tok) for tok in lines[0].split()[1:]]
    circuit = AugmentedCircuit(sector_counts=counts)
    for ln in lines[1:]:
        tokens = ln.split()
        head = tokens[0]
        if head in _OP_NAMES_1Q or head in ("CNOT", "CZ"):
            circuit.ops.append(CliffordOp(head, tuple(int(t) for t in tokens[1:])))
        elif head == "BP":
            targets = tuple(int(t) for t in tokens[1:] if t.isdigit())
            kv = dict(t.split("=", 1) for t in tokens[1:] if "=" in t)
            emits = "emits" in tokens
            circuit.ops.append(BpSiteOp(kv["model"], targets, emits))
        elif head == "M":
            kv = dict(t.split("=", 1) for t in tokens[2:] if "=" in t)
            circuit.ops.append(
                MeasureOp(
                    int(tokens[1]),
                    basis=kv.get("basis", "Z"),
                    role=kv.get("role", ""),
                    flip=int(kv.get("flip", 0)),
                )
            )
        elif head == "R":
            circuit.ops.append(ResetOp(int(tokens[1])))
        elif head == "PROBE":
            kv = dict(t.split("=", 1) for t in tokens[2:])
            circuit.ops.append(
                ProbeOp(
                    tokens[1],
                    tuple(int(c) for c in kv["x"]),
                    tuple(int(c) for c in kv["z"]),
                )
            )
        else:
            raise ValueError(f"cannot parse circuit line: {ln!r}")
    return circuit


def annotations_to_json(circuit: AugmentedCircuit) -> str:
    """Sidecar detector/observable annotation document."""
    return json.dumps(
        {
            "detectors": circuit.detectors,
            "observables": circuit.observables,
            "measurement_roles": circuit.measurement_roles(),
            "meta": circuit.meta,
        },
        indent=1,
    )


def annotations_from_json(circuit: AugmentedCircuit, text: str) -> AugmentedCircuit:
    doc = json.loads(text)
    circuit.detectors = [list(d) for d in doc.get("detectors", [])]
    circuit.observables = [list(o) for o in doc.get("observables", [])]
    circuit.meta = doc.get("meta", {})
    return circuit


# ---------------------------------------------------------------------------
# binary shot records

_RECORD_MAGIC = b"BPRC"
_RECORD_VERSION = 1


def write_records(path, bits: np.ndarray, roles: list[str], meta: dict | None = None) -> None:
    """Shot records as a binary container.

    Layout: magic ``BPRC``, little-endian u32 version, u32 header length,
    UTF-8 JSON header (shot count, measurement count, per-measurement
    roles, user metadata), then the bit matrix packed row-major with
    ``numpy.packbits``.
    """
    import struct as _struct

    bits = np.asarray(bits, dtype=np.uint8)
    header = json.dumps(
        {
            "shots": int(bits.shape[0]),
            "n_measurements": int(bits.shape[1]),
            "roles": list(roles),
            "meta": meta or {},
        }
    ).encode()
    payload = np.packbits(bits, axis=1)
    with open(path, "wb") as fh:
        fh.write(_RECORD_MAGIC)
        fh.write(_struct.pack("<II", _RECORD_VERSION, len(header)))
        fh.write(header)
        fh.write(payload.tobytes())


def read_records(path) -> tuple[np.ndarray, list[str], dict]:
    import struct as _struct

    blob = open(path, "rb").read()
    if blob[:4] != _RECORD_MAGIC:
        raise ValueError("not a shot-record container (bad magic)")
    version, hlen = _struct.unpack("<II", blob[4:12])
    if version != _RECORD_VERSION:
        raise ValueError(f"unsupported record format version {version}")
    header = json.loads(blob[12 : 12 + hlen].decode())
    shots = header["shots"]
    n_meas = header["n_measurements"]
    packed_cols = (n_meas + 7) // 8
    packed = np.frombuffer(blob[12 + hlen :], dtype=np.uint8, count=shots * packed_cols)
    bits = np.unpackbits(packed.reshape(shots, packed_cols), axis=1)[:, :n_meas]
    return bits, header["roles"], header.get("meta", {})
