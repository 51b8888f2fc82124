"""Detector error models and minimum-weight perfect-matching decoding.

Every BP+ site of a circuit contributes mechanisms: a single Pauli string
fires at the site with some probability and flips a deterministic set of
detectors and logical observables. Signatures (which detectors/observables
flip) depend only on the circuit and are computed once by frame
propagation; probabilities depend on the decoder's information regime and
may vary per shot.

Mechanisms flipping one or two detectors become matching-graph edges (one
detector pairs with the virtual boundary). Mechanisms flipping more are
decomposed into two existing edges when an exact decomposition exists,
otherwise dropped with a counted warning. Matching is exact blossom
(networkx) over a complete defect graph with Dijkstra path weights
w = -log(p/(1-p)) and per-edge logical parities.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .circuits import (
    AugmentedCircuit,
    BpSiteOp,
    CliffordOp,
    MeasureOp,
    ResetOp,
    _PAULI_XBIT,
    _PAULI_ZBIT,
    _pauli_digits,
)

BOUNDARY = -1


@dataclass(frozen=True)
class Mechanism:
    probability: float
    detectors: tuple[int, ...]
    logicals: tuple[int, ...]


@dataclass
class DetectorModel:
    """Merged error mechanisms of a circuit under fixed site rates."""

    n_detectors: int
    n_observables: int
    mechanisms: list[Mechanism]
    dropped_hyperedges: int = 0


def xor_probability(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent mechanisms fires."""
    return p1 * (1.0 - p2) + p2 * (1.0 - p1)


# ---------------------------------------------------------------------------
# signatures


@dataclass
class SiteSignatures:
    """Per-Pauli detector/observable signatures of one BP+ site."""

    op_index: int
    targets: tuple[int, ...]
    model: str
    n_paulis: int
    detectors: list[tuple[int, ...]]  # per Pauli index (0 = identity, empty)
    logicals: list[tuple[int, ...]]


def site_signatures(circuit: AugmentedCircuit) -> list[SiteSignatures]:
    """Propagate every site's Pauli errors to detector/observable flips.

    A batch of frames (one per Pauli string of the site) is pushed through
    the remainder of the circuit; measurement flips are mapped through the
    detector and observable definitions.
    """
    ops = circuit.ops
    n_modes = circuit.n_modes
    n_meas = circuit.n_measurements
    meas_pos = np.cumsum([1 if isinstance(op, MeasureOp) else 0 for op in ops])
    out: list[SiteSignatures] = []
    for pos, op in enumerate(ops):
        if not isinstance(op, BpSiteOp):
            continue
        k = len(op.targets)
        n_paulis = 4**k
        fx = np.zeros((n_paulis, n_modes), dtype=np.uint8)
        fz = np.zeros((n_paulis, n_modes), dtype=np.uint8)
        for p in range(n_paulis):
            for t, dg in zip(op.targets, _pauli_digits(p, k)):
                fx[p, t] = _PAULI_XBIT[dg]
                fz[p, t] = _PAULI_ZBIT[dg]
        flips = np.zeros((n_paulis, n_meas), dtype=np.uint8)
        mi = int(meas_pos[pos])
        for later in ops[pos + 1 :]:
            if isinstance(later, CliffordOp):
                g, tg = later.gate, later.targets
                if g == "H":
                    (q,) = tg
                    fx[:, q], fz[:, q] = fz[:, q].copy(), fx[:, q].copy()
                elif g == "S":
                    (q,) = tg
                    fz[:, q] ^= fx[:, q]
                elif g == "CNOT":
                    c, t = tg
                    fx[:, t] ^= fx[:, c]
                    fz[:, c] ^= fz[:, t]
                elif g == "CZ":
                    c, t = tg
                    fz[:, t] ^= fx[:, c]
                    fz[:, c] ^= fx[:, t]
            elif isinstance(later, MeasureOp):
                q = later.target
                flips[:, mi] = fx[:, q] if later.basis == "Z" else fz[:, q]
                mi += 1
            elif isinstance(later, ResetOp):
                fx[:, later.target] = 0
                fz[:, later.target] = 0
        det_sigs, log_sigs = [], []
        for p in range(n_paulis):
            dets = tuple(
                j
                for j, members in enumerate(circuit.detectors)
                if int(flips[p, members].sum()) % 2
            )
            logs = tuple(
                j
                for j, members in enumerate(circuit.observables)
                if int(flips[p, members].sum()) % 2
            )
            det_sigs.append(dets)
            log_sigs.append(logs)
        out.append(
            SiteSignatures(pos, op.targets, op.model, n_paulis, det_sigs, log_sigs)
        )
    return out


def build_detector_model(
    circuit: AugmentedCircuit,
    site_rates: list[np.ndarray],
    signatures: list[SiteSignatures] | None = None,
    min_rate: float = 1e-12,
) -> DetectorModel:
    """Merge per-site Pauli rates into a detector error model.

    ``site_rates[i]`` holds the probability of each Pauli string at BP+
    site ``i`` (circuit order). Mechanisms with identical signatures merge
    by the exclusive-or probability formula; trivial signatures are kept
    out of the model.
    """
    signatures = signatures or site_signatures(circuit)
    if len(site_rates) != len(signatures):
        raise ValueError(
            f"{len(site_rates)} rate vectors for {len(signatures)} BP+ sites"
        )
    merged: dict[tuple, float] = {}
    for sig, rates in zip(signatures, site_rates):
        for p in range(1, sig.n_paulis):
            rate = float(rates[p])
            if rate < min_rate:
                continue
            key = (sig.detectors[p], sig.logicals[p])
            if key == ((), ()):
                continue
            merged[key] = xor_probability(merged.get(key, 0.0), rate)
    mechanisms = [
        Mechanism(p, dets, logs) for (dets, logs), p in sorted(merged.items())
    ]
    return DetectorModel(
        n_detectors=len(circuit.detectors),
        n_observables=len(circuit.observables),
        mechanisms=mechanisms,
    )


# ---------------------------------------------------------------------------
# matching graph


@dataclass
class MatchingGraph:
    """Edge-weighted detector graph with a virtual boundary node."""

    n_detectors: int
    n_observables: int
    edges: dict[tuple[int, int], tuple[float, tuple[int, ...]]] = field(default_factory=dict)
    dropped_hyperedges: int = 0

    def add_mechanism(self, dets: tuple[int, ...], logs: tuple[int, ...], p: float) -> bool:
        if len(dets) == 0:
            return True  # logical-only mechanism: invisible to matching
        if len(dets) == 1:
            key = (dets[0], BOUNDARY)
        elif len(dets) == 2:
            key = (min(dets), max(dets))
        else:
            return False
        old_p, old_logs = self.edges.get(key, (0.0, logs))
        if key in self.edges and old_logs != logs:
            # conflicting logical assignment on one edge: keep the heavier
            if p <= old_p:
                return True
            old_logs = logs
        self.edges[key] = (xor_probability(old_p, p), old_logs)
        return True


def build_matching_graph(model: DetectorModel) -> MatchingGraph:
    graph = MatchingGraph(model.n_detectors, model.n_observables)
    deferred = []
    for mech in model.mechanisms:
        if not graph.add_mechanism(mech.detectors, mech.logicals, mech.probability):
            deferred.append(mech)
    for mech in deferred:
        if not _decompose_into_edges(graph, mech):
            graph.dropped_hyperedges += 1
    return graph


def _decompose_into_edges(graph: MatchingGraph, mech: Mechanism) -> bool:
    """Split a >2-detector mechanism into two existing edges, if possible."""
    dets = mech.detectors
    logs = set(mech.logicals)
    n = len(dets)
    for split in range(1, 1 << (n - 1)):
        part_a = tuple(d for i, d in enumerate(dets) if split >> i & 1)
        part_b = tuple(d for i, d in enumerate(dets) if not split >> i & 1)
        keys = []
        ok = True
        for part in (part_a, part_b):
            if len(part) == 1:
                keys.append((part[0], BOUNDARY))
            elif len(part) == 2:
                keys.append((min(part), max(part)))
            else:
                ok = False
                break
        if not ok or any(k not in graph.edges for k in keys):
            continue
        combined = set(graph.edges[keys[0]][1]) ^ set(graph.edges[keys[1]][1])
        if combined != logs:
            continue
        for k in keys:
            p_old, l_old = graph.edges[k]
            graph.edges[k] = (xor_probability(p_old, mech.probability), l_old)
        return True
    return False


def edge_weight(p: float) -> float:
    p = min(max(p, 1e-15), 0.5 - 1e-12)
    return -math.log(p / (1.0 - p))


class Matcher:
    """MWPM decoder over a fixed graph topology.

    Weights are fixed at construction; :meth:`decode` accepts a detector
    bit vector and returns the predicted flip of every observable. Shortest
    paths between defects (and to the boundary) carry the parity of logical
    flips along the path. Ties break toward lower node indices so decoding
    is deterministic.
    """

    def __init__(self, graph: MatchingGraph):
        self.graph = graph
        self.n_observables = graph.n_observables
        self.adj: dict[int, list[tuple[int, float, frozenset]]] = {}
        for (a, b), (p, logs) in sorted(graph.edges.items()):
            w = edge_weight(p)
            self.adj.setdefault(a, []).append((b, w, frozenset(logs)))
            self.adj.setdefault(b, []).append((a, w, frozenset(logs)))

    def _dijkstra(self, source: int):
        dist = {source: 0.0}
        logical = {source: frozenset()}
        heap = [(0.0, source)]
        visited = set()
        while heap:
            d, node = heapq.heappop(heap)
            if node in visited:
                continue
            visited.add(node)
            for nxt, w, logs in self.adj.get(node, ()):
                nd = d + w
                if nxt not in dist or nd < dist[nxt] - 1e-15:
                    dist[nxt] = nd
                    logical[nxt] = logical[node] ^ logs
                    heapq.heappush(heap, (nd, nxt))
        return dist, logical

    def decode(self, syndrome: np.ndarray) -> np.ndarray:
        """Predicted logical-observable flips for one detector bit vector."""
        if len(syndrome) != self.graph.n_detectors:
            raise ValueError(
                f"syndrome length {len(syndrome)} != {self.graph.n_detectors} detectors"
            )
        defects = [int(i) for i in np.flatnonzero(syndrome)]
        out = np.zeros(self.n_observables, dtype=np.uint8)
        if not defects:
            return out
        paths = {}
        dists = {}
        for d in defects:
            dist, logical = self._dijkstra(d)
            dists[d] = dist
            paths[d] = logical
        nxg = nx.Graph()
        big = 0.0
        entries = []
        for i, a in enumerate(defects):
            if BOUNDARY not in dists[a]:
                raise RuntimeError(f"defect {a} cannot reach the boundary")
            entries.append((f"d{i}", f"b{i}", dists[a][BOUNDARY], paths[a][BOUNDARY]))
            for j in range(i + 1, len(defects)):
                b = defects[j]
                if b in dists[a]:
                    entries.append((f"d{i}", f"d{j}", dists[a][b], paths[a][b]))
        for i in range(len(defects)):
            for j in range(i + 1, len(defects)):
                entries.append((f"b{i}", f"b{j}", 0.0, frozenset()))
        big = max((w for _, _, w, _ in entries), default=0.0) + 1.0
        for a, b, w, logs in entries:
            nxg.add_edge(a, b, weight=big - w, logs=logs)
        mate = nx.max_weight_matching(nxg, maxcardinality=True)
        if len(mate) * 2 != nxg.number_of_nodes():
            raise RuntimeError("matching is not perfect; defect graph malformed")
        for a, b in mate:
            for obs in nxg.edges[a, b]["logs"]:
                out[obs] ^= 1
        return out


def mwpm_decode(model: DetectorModel, syndrome: np.ndarray) -> np.ndarray:
    """One-call decode: build the graph for ``model`` and match ``syndrome``."""
    return Matcher(build_matching_graph(model)).decode(np.asarray(syndrome))
