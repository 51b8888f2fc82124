"""Outer-code decoding under three information regimes.

All three decoders are matching decoders over the same detector topology;
they differ in how site Pauli rates are estimated:

* autonomous: no inner-code information; rates are marginalized over the
  prior sector distribution propagated forward through each mode's site
  timeline (no outcome conditioning).
* concatenated: the sBs outcome record of each mode reweights its sector
  chain by exact forward-backward inference; per-shot posterior transition
  marginals mix the conditional Pauli tables.
* full information: the sampled error-sector history itself selects
  p(l | o, e, e') per site, per shot.

Mechanism signatures are shared; only probabilities (hence edge weights)
differ per shot, so the matching topology is compiled once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import BpPlusModel
from .circuits import AugmentedCircuit, ErrorPathBatch, evaluate_parities
from .matching import (
    BOUNDARY,
    Matcher,
    MatchingGraph,
    SiteSignatures,
    site_signatures,
)

REGIMES = ("autonomous", "concatenated", "full_info")


@dataclass
class ModeTimeline:
    """Ordered BP+ sites touching one GKP mode."""

    mode: int
    site_positions: list[int]  # indices into the circuit's BP-site order
    outcome_cols: list[int | None]  # column in the outcome record, if emitting


def mode_timelines(circuit: AugmentedCircuit) -> list[ModeTimeline]:
    sites = circuit.bp_sites
    gkp = [m for m in range(circuit.n_modes) if circuit.sector_counts[m] > 1]
    timelines = {m: ModeTimeline(m, [], []) for m in gkp}
    emit_col = 0
    for i, op in enumerate(sites):
        carrier = [t for t in op.targets if circuit.sector_counts[t] > 1]
        if len(carrier) != 1:
            raise ValueError(
                f"site {op} must touch exactly one sector-carrying mode, got {carrier}"
            )
        tl = timelines[carrier[0]]
        tl.site_positions.append(i)
        tl.outcome_cols.append(emit_col if op.emits else None)
        if op.emits:
            emit_col += 1
    return [timelines[m] for m in gkp]


def sector_forward_backward(
    site_models: list[BpPlusModel],
    observations: list[int | None],
) -> list[np.ndarray]:
    """Exact smoothing over one mode's hidden sector chain (single shot).

    ``observations[t]`` is the observed outcome of site ``t`` or None when
    the site emits nothing (its outcome index is then summed out). Returns
    the posterior transition marginals xi_t(e', e), each normalized to 1.
    The recursion is scaled per step; an impossible observation sequence
    raises rather than dividing by zero.
    """
    if len(site_models) != len(observations):
        raise ValueError("one observation slot per site required")
    n = len(site_models)
    if n == 0:
        return []
    n_sec = site_models[0].n_sectors
    mats = []
    for model, obs in zip(site_models, observations):
        if obs is None:
            m = model.trans.sum(axis=0).T  # (e_in, e_out)
        else:
            m = model.trans[obs].T
        mats.append(m)
    alphas = np.zeros((n + 1, n_sec))
    alphas[0, 0] = 1.0
    for t in range(n):
        a = alphas[t] @ mats[t]
        norm = a.sum()
        if norm <= 0:
            raise FloatingPointError(f"zero-likelihood outcome sequence at site {t}")
        alphas[t + 1] = a / norm
    betas = np.zeros((n + 1, n_sec))
    betas[n] = 1.0
    for t in range(n - 1, -1, -1):
        b = mats[t] @ betas[t + 1]
        norm = b.sum()
        if norm <= 0:
            raise FloatingPointError(f"zero-likelihood backward pass at site {t}")
        betas[t] = b / norm
    xis = []
    for t in range(n):
        xi = alphas[t][:, None] * mats[t] * betas[t + 1][None, :]
        total = xi.sum()
        if total <= 0:
            raise FloatingPointError(f"degenerate posterior at site {t}")
        xis.append(xi / total)
    return xis


# ---------------------------------------------------------------------------
# compiled decoding topology


@dataclass
class _EdgeSpec:
    key: tuple[int, int]
    logicals: tuple[int, ...]
    contributions: list[tuple[int, int]]  # (site order index, pauli class index)


class DecodingTopology:
    """Signature classes per site plus the matching-edge layout they induce.

    Hyperedge classes are decomposed into two component edges once (using
    the full class list to define which edges exist); the same decomposition
    then applies for any per-shot probabilities.
    """

    def __init__(self, circuit: AugmentedCircuit, signatures: list[SiteSignatures] | None = None):
        self.circuit = circuit
        self.signatures = signatures or site_signatures(circuit)
        self.n_detectors = len(circuit.detectors)
        self.n_observables = len(circuit.observables)
        # group Pauli indices of each site into signature classes
        self.site_classes: list[list[tuple[tuple, tuple, list[int]]]] = []
        for sig in self.signatures:
            groups: dict[tuple, list[int]] = {}
            for p in range(1, sig.n_paulis):
                key = (sig.detectors[p], sig.logicals[p])
                if key == ((), ()):
                    continue
                groups.setdefault(key, []).append(p)
            self.site_classes.append(
                [(dets, logs, members) for (dets, logs), members in sorted(groups.items())]
            )
        # edge layout
        edge_index: dict[tuple[int, int], int] = {}
        self.edges: list[_EdgeSpec] = []
        hyper = []
        for s, classes in enumerate(self.site_classes):
            for c, (dets, logs, _members) in enumerate(classes):
                if len(dets) > 2:
                    hyper.append((s, c, dets, logs))
                    continue
                key = (dets[0], BOUNDARY) if len(dets) == 1 else (min(dets), max(dets))
                if key not in edge_index:
                    edge_index[key] = len(self.edges)
                    self.edges.append(_EdgeSpec(key, logs, []))
                self.edges[edge_index[key]].contributions.append((s, c))
        self.dropped_hyperedges = 0
        for s, c, dets, logs in hyper:
            pair = self._find_decomposition(edge_index, dets, logs)
            if pair is None:
                self.dropped_hyperedges += 1
                continue
            for key in pair:
                self.edges[edge_index[key]].contributions.append((s, c))

    def _find_decomposition(self, edge_index, dets, logs):
        logset = set(logs)
        n = len(dets)
        for split in range(1, 1 << (n - 1)):
            parts = (
                tuple(d for i, d in enumerate(dets) if split >> i & 1),
                tuple(d for i, d in enumerate(dets) if not split >> i & 1),
            )
            keys = []
            ok = True
            for part in parts:
                if len(part) == 1:
                    keys.append((part[0], BOUNDARY))
                elif len(part) == 2:
                    keys.append((min(part), max(part)))
                else:
                    ok = False
                    break
            if not ok or any(k not in edge_index for k in keys):
                continue
            la = set(self.edges[edge_index[keys[0]]].logicals)
            lb = set(self.edges[edge_index[keys[1]]].logicals)
            if la ^ lb != logset:
                continue
            return keys
        return None

    # -- per-shot class probabilities -> edge weights -> matching ----------

    def class_probabilities_static(self, rates: list[np.ndarray]) -> list[np.ndarray]:
        """Collapse per-site Pauli rates into signature-class probabilities."""
        out = []
        for classes, r in zip(self.site_classes, rates):
            out.append(np.array([float(np.sum(r[members])) for _, _, members in classes]))
        return out

    def edge_probabilities(self, class_probs) -> np.ndarray:
        """Fold class probabilities into edge firing probabilities.

        ``class_probs[s]`` is either a vector over classes (static) or a
        (shots, n_classes) matrix; the result is (n_edges,) or
        (shots, n_edges) accordingly.
        """
        batched = class_probs and class_probs[0].ndim == 2
        shape = (class_probs[0].shape[0], len(self.edges)) if batched else (len(self.edges),)
        probs = np.zeros(shape)
        for j, spec in enumerate(self.edges):
            acc = probs[..., j]
            for s, c in spec.contributions:
                q = class_probs[s][..., c]
                acc = acc * (1.0 - q) + q * (1.0 - acc)
            probs[..., j] = acc
        return probs

    def decode_batch(self, edge_probs: np.ndarray, syndromes: np.ndarray) -> np.ndarray:
        """Match every shot; ``edge_probs`` may be static or per shot."""
        shots = syndromes.shape[0]
        out = np.zeros((shots, self.n_observables), dtype=np.uint8)
        static = edge_probs.ndim == 1
        matcher = self._matcher(edge_probs) if static else None
        for s in range(shots):
            m = matcher if static else self._matcher(edge_probs[s])
            out[s] = m.decode(syndromes[s])
        return out

    def _matcher(self, probs: np.ndarray) -> Matcher:
        graph = MatchingGraph(self.n_detectors, self.n_observables)
        for spec, p in zip(self.edges, probs):
            if p > 1e-12:
                graph.edges[spec.key] = (float(p), spec.logicals)
        return Matcher(graph)


# ---------------------------------------------------------------------------
# per-regime site rates


def _site_tables(circuit: AugmentedCircuit, models: dict[str, BpPlusModel]):
    return [models[op.model] for op in circuit.bp_sites]


def autonomous_class_probs(
    topology: DecodingTopology, models: dict[str, BpPlusModel]
) -> list[np.ndarray]:
    """Static class probabilities from the forward prior over sectors."""
    circuit = topology.circuit
    tables = _site_tables(circuit, models)
    n_sites = len(tables)
    rates: list[np.ndarray | None] = [None] * n_sites
    for tl in mode_timelines(circuit):
        n_sec = circuit.sector_counts[tl.mode]
        pi = np.zeros(n_sec)
        pi[0] = 1.0
        for pos in tl.site_positions:
            model = tables[pos]
            # marginal Pauli rates at this site under the prior
            rates[pos] = np.einsum("b,oab,oabl->l", pi, model.trans, model.pauli)
            pi = np.einsum("b,oab->a", pi, model.trans)
            pi /= pi.sum()
    return topology.class_probabilities_static([r for r in rates])


def concatenated_class_probs(
    topology: DecodingTopology,
    models: dict[str, BpPlusModel],
    outcomes: np.ndarray,
    withhold_outcomes: bool = False,
) -> list[np.ndarray]:
    """Per-shot class probabilities from outcome-conditioned smoothing.

    Forward-backward runs per mode, vectorized over shots; emitting sites
    condition on their recorded outcome. With ``withhold_outcomes`` the
    observation columns are ignored and the result degrades exactly to the
    autonomous prior rates.
    """
    circuit = topology.circuit
    tables = _site_tables(circuit, models)
    shots = outcomes.shape[0]
    n_sites = len(tables)
    out: list[np.ndarray | None] = [None] * n_sites
    for tl in mode_timelines(circuit):
        n_sec = circuit.sector_counts[tl.mode]
        n = len(tl.site_positions)
        msum = []  # outcome-summed transition (e_in, e_out) per site
        mobs = []  # per-outcome transition, or None
        obs_bits = []
        for pos, col in zip(tl.site_positions, tl.outcome_cols):
            model = tables[pos]
            msum.append(model.trans.sum(axis=0).T)
            if col is None or withhold_outcomes:
                mobs.append(None)
                obs_bits.append(None)
            else:
                mobs.append(np.transpose(model.trans, (0, 2, 1)))  # (o, e_in, e_out)
                obs_bits.append(outcomes[:, col].astype(np.int64))
        # backward pass (stored), then forward pass computing class masses
        betas = np.ones((n + 1, shots, n_sec))
        for t in range(n - 1, -1, -1):
            if mobs[t] is None:
                b = betas[t + 1] @ msum[t].T
            else:
                b0 = betas[t + 1] @ mobs[t][0].T
                b1 = betas[t + 1] @ mobs[t][1].T
                b = np.where(obs_bits[t][:, None] == 1, b1, b0)
            norm = b.sum(axis=1, keepdims=True)
            if np.any(norm <= 0):
                raise FloatingPointError("zero-likelihood sBs outcome sequence")
            betas[t] = b / norm
        alpha = np.zeros((shots, n_sec))
        alpha[:, 0] = 1.0
        for t, (pos, col) in enumerate(zip(tl.site_positions, tl.outcome_cols)):
            model = tables[pos]
            n_cls = len(topology.site_classes[pos])
            site_out = np.zeros((shots, n_cls))
            beta = betas[t + 1]
            if mobs[t] is None:
                sel = [(np.arange(shots), None)]
            else:
                bits = obs_bits[t]
                sel = [(np.flatnonzero(bits == o), o) for o in (0, 1)]
            for rows, o in sel:
                if rows.size == 0:
                    continue
                if o is None:
                    joint = np.einsum("oab,oabl->bal", model.trans, model.pauli)
                else:
                    joint = np.einsum("ab,abl->bal", model.trans[o], model.pauli[o])
                den_m = joint.sum(axis=2)  # (e_in, e_out)
                a_rows = alpha[rows]
                b_rows = beta[rows]
                den = np.einsum("se,ef,sf->s", a_rows, den_m, b_rows)
                bad = den <= 0
                if np.any(bad):
                    raise FloatingPointError("degenerate sector posterior")
                for c, (_d, _l, members) in enumerate(topology.site_classes[pos]):
                    w_c = joint[:, :, members].sum(axis=2)
                    num = np.einsum("se,ef,sf->s", a_rows, w_c, b_rows)
                    site_out[rows, c] = num / den
            out[pos] = site_out
            # forward update
            if mobs[t] is None:
                a = alpha @ msum[t]
            else:
                a0 = alpha @ mobs[t][0]
                a1 = alpha @ mobs[t][1]
                a = np.where(obs_bits[t][:, None] == 1, a1, a0)
            alpha = a / a.sum(axis=1, keepdims=True)
    return [o for o in out]


def full_info_class_probs(
    topology: DecodingTopology,
    models: dict[str, BpPlusModel],
    paths: ErrorPathBatch,
) -> list[np.ndarray]:
    """Per-shot class probabilities from the sampled sector history."""
    circuit = topology.circuit
    tables = _site_tables(circuit, models)
    out = []
    for pos, model in enumerate(tables):
        rates = model.pauli[paths.outcome[pos], paths.e_out[pos], paths.e_in[pos]]
        classes = topology.site_classes[pos]
        site_out = np.zeros((paths.shots, len(classes)))
        for c, (_d, _l, members) in enumerate(classes):
            site_out[:, c] = rates[:, members].sum(axis=1)
        out.append(site_out)
    return out


# ---------------------------------------------------------------------------
# top-level decoders


@dataclass
class DecodeResult:
    regime: str
    predicted: np.ndarray  # (shots, n_observables)
    actual: np.ndarray
    failures: int
    shots: int
    dropped_hyperedges: int = 0

    @property
    def error_rate(self) -> float:
        return self.failures / self.shots

    def wilson_interval(self, z: float = 1.96) -> tuple[float, float]:
        from .stats import wilson_interval

        return wilson_interval(self.failures, self.shots, z=z)


def decode_records(
    circuit: AugmentedCircuit,
    models: dict[str, BpPlusModel],
    records: np.ndarray,
    regime: str,
    outcomes: np.ndarray | None = None,
    paths: ErrorPathBatch | None = None,
    topology: DecodingTopology | None = None,
) -> DecodeResult:
    """Decode a shot set under one information regime."""
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}")
    topology = topology or DecodingTopology(circuit)
    syndromes = evaluate_parities(records, circuit.detectors, circuit.detector_offsets)
    actual = evaluate_parities(records, circuit.observables, circuit.observable_offsets)
    if regime == "autonomous":
        class_probs = autonomous_class_probs(topology, models)
    elif regime == "concatenated":
        if outcomes is None:
            raise ValueError("concatenated decoding needs the sBs outcome record")
        class_probs = concatenated_class_probs(topology, models, outcomes)
    else:
        if paths is None:
            raise ValueError("full-information decoding needs the sampled history")
        class_probs = full_info_class_probs(topology, models, paths)
    edge_probs = topology.edge_probabilities(class_probs)
    predicted = topology.decode_batch(edge_probs, syndromes)
    failures = int(np.any(predicted != actual, axis=1).sum())
    return DecodeResult(
        regime=regime,
        predicted=predicted,
        actual=actual,
        failures=failures,
        shots=records.shape[0],
        dropped_hyperedges=topology.dropped_hyperedges,
    )
