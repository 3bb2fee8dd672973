"""Check an aggregation against the full CTMC.

The full chain is cut into sub-chains (one per configuration of the small
groups), boundary states are located, the rates of transitions between
sub-chains are tabulated and checked for regularity, and the chain-level
equations obtained by summing the full Chapman-Kolmogorov equations are
compared with those of the directly generated aggregated CTMC.
"""

from __future__ import annotations

import dataclasses
from collections import defaultdict
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .analysis import ActionClassification, GroupPartition, classify, coop_partners, enabled_actions
from .solvers import OdeSystem, build_marginal_odes
from .statespace import Ctmc, StateLayout
from .syntax import GroupedModel, PepaError

REL_TOL = 1e-9


class PartitionMismatch(PepaError):
    pass


class IrregularRatesError(PepaError):
    pass


class GeneratorMismatch(PepaError):
    pass


def _close(a: float, b: float) -> bool:
    return a == b or abs(a - b) <= REL_TOL * max(abs(a), abs(b))


@dataclasses.dataclass(frozen=True)
class SubChainPartition:
    layout: StateLayout          # layout of the small groups
    keys: tuple[tuple, ...]      # chain id -> small-group sub-vector, sorted
    chain_index: np.ndarray      # full state -> chain id

    @property
    def count(self) -> int:
        return len(self.keys)

    def members(self, chain: int) -> np.ndarray:
        return np.flatnonzero(self.chain_index == chain)

    @property
    def chains(self) -> dict[tuple, np.ndarray]:
        return {k: self.members(i) for i, k in enumerate(self.keys)}


def partition_subchains(full: Ctmc, classification: ActionClassification,
                        small_layout: StateLayout) -> SubChainPartition:
    """Group states by their small-group configuration.

    The result is checked against the connected components of the graph
    of large-only transitions; a disagreement raises ``PartitionMismatch``.
    """
    cols = np.concatenate([np.arange(full.layout.slice(g).start, full.layout.slice(g).stop)
                           for g in small_layout.groups]) if small_layout.groups else np.zeros(0, int)
    sub = full.states[:, cols]
    keys, chain_index = np.unique(sub, axis=0, return_inverse=True)
    chain_index = chain_index.ravel().astype(np.int64)
    keys = tuple(tuple(int(x) for x in k) for k in keys.reshape(len(keys), len(cols)))

    large = [i for i, a in enumerate(full.actions) if a in classification.large_only]
    mask = np.isin(full.act, large) & (full.src != full.dst)
    n = full.size
    graph = sp.coo_matrix((np.ones(mask.sum()), (full.src[mask], full.dst[mask])), shape=(n, n))
    ncomp, comp = connected_components(graph, directed=True, connection="weak")
    if ncomp != len(keys):
        raise PartitionMismatch(
            f"{ncomp} components of large-only transitions but {len(keys)} small-group configurations")
    pairs = set(zip(comp.tolist(), chain_index.tolist()))
    if len(pairs) != len(keys):
        raise PartitionMismatch("large-only connectivity does not match the small-group configurations")
    return SubChainPartition(small_layout, keys, chain_index)


@dataclasses.dataclass(frozen=True)
class BoundaryReport:
    blocked: Mapping[int, frozenset]    # boundary state -> blocked action types
    chain_index: np.ndarray

    @property
    def states(self) -> frozenset[int]:
        return frozenset(self.blocked)

    def bl(self, chain: int, action: str) -> frozenset[int]:
        return frozenset(s for s, acts in self.blocked.items()
                         if action in acts and self.chain_index[s] == chain)

    def per_chain(self) -> dict[int, dict]:
        out: dict[int, dict] = defaultdict(lambda: {"boundary": set(), "blocked": {}})
        for s, acts in self.blocked.items():
            entry = out[int(self.chain_index[s])]
            entry["boundary"].add(s)
            entry["blocked"][s] = acts
        return dict(out)


def boundary_states(full: Ctmc, model: GroupedModel, partition: GroupPartition,
                    chains: Optional[SubChainPartition] = None,
                    classification: Optional[ActionClassification] = None) -> BoundaryReport:
    """States where some shared action is blocked for lack of large-group partners."""
    classification = classification or classify(model, partition)
    layout = full.layout
    zero_masks = []   # (action, mask of states where a required large partner offers nothing)
    for hs in sorted(partition.small):
        for a in sorted(enabled_actions(model, hs) & classification.shared):
            for hl in sorted(coop_partners(model, hs, a) & partition.large):
                if a not in enabled_actions(model, hl):
                    continue   # never offers a, so it cannot be what blocks it
                comp = model.component_of(hl)
                cols = [layout.index(hl, s) for s in comp.states
                        if any(t.action == a for t in comp.outgoing(s))]
                total = full.states[:, cols].sum(axis=1) if cols else np.zeros(full.size, int)
                zero_masks.append((a, total == 0))
    blocked: dict[int, set] = defaultdict(set)
    for a, mask in zero_masks:
        for s in np.flatnonzero(mask).tolist():
            blocked[s].add(a)
    chain_index = chains.chain_index if chains is not None else np.zeros(full.size, dtype=np.int64)
    return BoundaryReport({s: frozenset(v) for s, v in sorted(blocked.items())}, chain_index)


@dataclasses.dataclass(frozen=True)
class CrossRateTable:
    per_action: Mapping[tuple, float]   # (action, Yi, Yj) -> rate
    total: Mapping[tuple, float]        # (Yi, Yj) -> rate
    irregularities: tuple

    @property
    def regular(self) -> bool:
        return not self.irregularities


def cross_rates(full: Ctmc, chains: SubChainPartition, boundary: BoundaryReport,
                classification: ActionClassification) -> CrossRateTable:
    """Rates between sub-chains, with a check that non-boundary sources agree."""
    ci = chains.chain_index
    per_action, total, problems = {}, defaultdict(float), []
    for a_idx, action in enumerate(full.actions):
        if action not in classification.small_only | classification.shared:
            continue
        sel = full.act == a_idx
        out_rate = np.bincount(full.src[sel], weights=full.rate[sel], minlength=full.size)
        cross = sel & (ci[full.src] != ci[full.dst])
        flows: dict[tuple, dict[int, float]] = defaultdict(lambda: defaultdict(float))
        for s, d, r in zip(full.src[cross].tolist(), full.dst[cross].tolist(), full.rate[cross].tolist()):
            flows[(int(ci[s]), int(ci[d]))][s] += r
        for (yi, yj), by_src in sorted(flows.items()):
            blocked = boundary.bl(yi, action)
            members = chains.members(yi)
            candidates = [s for s in members.tolist() if s not in blocked and out_rate[s] > 0]
            ref = None
            for s in candidates:
                r = by_src.get(s)
                if r is None:
                    problems.append({"action": action, "from": chains.keys[yi], "to": chains.keys[yj],
                                     "state": s, "issue": "missing transition"})
                    continue
                if ref is None:
                    ref = r
                elif not _close(r, ref):
                    problems.append({"action": action, "from": chains.keys[yi], "to": chains.keys[yj],
                                     "state": s, "issue": f"rate {r!r} differs from {ref!r}"})
            if ref is None:
                ref = next(iter(by_src.values()))
            per_action[(action, yi, yj)] = ref
            total[(yi, yj)] += ref
    return CrossRateTable(per_action, dict(total), tuple(problems))


def collapse_ck(full: Ctmc, chains: SubChainPartition, table: CrossRateTable,
                boundary: Optional[BoundaryReport] = None, force: bool = False) -> OdeSystem:
    """Sum the full C-K equations over each sub-chain.

    The coefficient of each sub-chain's probability is read off a state of
    that chain with no blocked action (boundary mass taken as negligible);
    chains made only of boundary states fall back to the rate table. The
    two sources are required to agree wherever both are available.
    """
    if not table.regular and not force:
        raise IrregularRatesError(f"{len(table.irregularities)} irregular cross-chain rates; use force to collapse")
    m = chains.count
    odes = build_marginal_odes(full)
    indicator = sp.csr_matrix((np.ones(full.size), (chains.chain_index, np.arange(full.size))), shape=(m, full.size))
    summed = (indicator @ odes.matrix).tocsc()
    blocked = boundary.states if boundary is not None else frozenset()
    # float noise around zero scales with the largest exit rate
    atol = REL_TOL * max(1.0, float(np.max(np.abs(odes.matrix.diagonal()), initial=0.0)))

    from_table = np.zeros((m, m))
    for (yi, yj), r in table.total.items():
        from_table[yj, yi] += r
        from_table[yi, yi] -= r

    out = np.zeros((m, m))
    for k in range(m):
        reps = [s for s in chains.members(k).tolist() if s not in blocked]
        if not reps:
            out[:, k] = from_table[:, k]
            continue
        col = summed[:, reps[0]].toarray().ravel()
        for s in reps[1:]:
            other = summed[:, s].toarray().ravel()
            if not np.allclose(other, col, rtol=REL_TOL, atol=atol) and not force:
                raise IrregularRatesError(f"non-boundary states of chain {chains.keys[k]} disagree")
        if not force and not np.allclose(col, from_table[:, k], rtol=REL_TOL, atol=atol):
            raise GeneratorMismatch(f"summed C-K equations disagree with the rate table for chain {chains.keys[k]}")
        out[:, k] = col
    return OdeSystem(sp.csr_matrix(out), chains.keys)


@dataclasses.dataclass(frozen=True)
class GeneratorDiff:
    max_diff: float
    where: Optional[tuple]   # (equation label, coefficient label) of the largest difference
    matched: int

    def as_dict(self) -> dict:
        return {"max_diff": self.max_diff, "matched": self.matched,
                "where": [list(w) for w in self.where] if self.where else None}


def compare_generators(collapsed: OdeSystem, aggregated: Ctmc) -> GeneratorDiff:
    """Largest coefficient difference between two chain-level ODE systems."""
    agg = build_marginal_odes(aggregated)
    pos = {lab: i for i, lab in enumerate(agg.labels)}
    missing = [lab for lab in collapsed.labels if lab not in pos]
    extra = set(pos) - set(collapsed.labels)
    if missing or extra:
        raise GeneratorMismatch(f"unmatched states: {sorted(missing)[:5]} {sorted(extra)[:5]}")
    perm = np.array([pos[lab] for lab in collapsed.labels])
    a = agg.matrix.toarray()[np.ix_(perm, perm)]
    diff = np.abs(collapsed.matrix.toarray() - a)
    if diff.size == 0:
        return GeneratorDiff(0.0, None, 0)
    i, j = np.unravel_index(np.argmax(diff), diff.shape)
    worst = float(diff[i, j])
    where = (collapsed.labels[i], collapsed.labels[j]) if worst > 0 else None
    return GeneratorDiff(worst, where, len(perm))
