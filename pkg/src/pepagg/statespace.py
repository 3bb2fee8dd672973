"""Count-oriented semantics and CTMC generation.

States are tuples of counts, one entry per (group, local state) in the
order of the equation's leaves and each component's state order. The
recursive successor function here is the reference semantics; state-space
exploration runs on a compiled form of the model (see ``_program``) through
the extension kernel when it is built, and a pure-Python kernel otherwise.
"""

from __future__ import annotations

import dataclasses
import io
import json
import logging
from collections import defaultdict
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import kernels
from ._program import compile_model
from .rates import ApparentRate
from .syntax import CoopNode, GroupLeaf, GroupedModel, ModelError, PepaError, SequentialComponent

log = logging.getLogger(__name__)

StateVector = tuple

DEFAULT_STATE_CAP = 10**7


class StateCapExceeded(PepaError):
    pass


@dataclasses.dataclass(frozen=True)
class StateLayout:
    """Position of every (group, local state) counter in a state vector."""

    groups: tuple[str, ...]
    states: tuple[tuple[str, ...], ...]

    @classmethod
    def of(cls, model: GroupedModel) -> "StateLayout":
        leaves = model.groups
        return cls(tuple(l.label for l in leaves),
                   tuple(model.components[l.component].states for l in leaves))

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.states:
            out.append(acc)
            acc += len(s)
        return tuple(out)

    @property
    def dimension(self) -> int:
        return sum(len(s) for s in self.states)

    def index(self, group: str, state: str) -> int:
        g = self.groups.index(group)
        return self.offsets[g] + self.states[g].index(state)

    def slice(self, group: str) -> slice:
        g = self.groups.index(group)
        start = self.offsets[g]
        return slice(start, start + len(self.states[g]))

    @property
    def labels(self) -> list[str]:
        return [f"{g}.{s}" for g, ss in zip(self.groups, self.states) for s in ss]

    def sub_layout(self, groups: Iterable[str]) -> "StateLayout":
        keep = set(groups)
        pairs = [(g, s) for g, s in zip(self.groups, self.states) if g in keep]
        return StateLayout(tuple(g for g, _ in pairs), tuple(s for _, s in pairs))

    def project(self, state: Sequence[int], sub: "StateLayout") -> tuple:
        out = []
        for g in sub.groups:
            out.extend(state[self.slice(g)])
        return tuple(out)

    def as_dict(self) -> dict:
        return {"groups": list(self.groups), "states": [list(s) for s in self.states]}


def initial_state(model: GroupedModel) -> StateVector:
    vec = []
    for leaf in model.groups:
        counts = dict(leaf.initial_counts)
        vec.extend(counts.get(s, 0) for s in model.components[leaf.component].states)
    return tuple(vec)


# ---------------------------------------------------------------------------
# Apparent rates


def apparent_rate(comp: SequentialComponent, state: str, action: str) -> ApparentRate:
    total = ApparentRate.zero()
    for t in comp.outgoing(state):
        if t.action == action:
            total = total + ApparentRate.of(t.rate)
    return total


def apparent_rate_to(comp: SequentialComponent, state: str, action: str, target: str) -> ApparentRate:
    total = ApparentRate.zero()
    for t in comp.outgoing(state):
        if t.action == action and t.target == target:
            total = total + ApparentRate.of(t.rate)
    return total


def group_apparent_rate(model: GroupedModel, state: Sequence[int], group: str, action: str) -> ApparentRate:
    layout = StateLayout.of(model)
    comp = model.component_of(group)
    sub = state[layout.slice(group)]
    total = ApparentRate.zero()
    for s, n in zip(comp.states, sub):
        if n:
            total = total + apparent_rate(comp, s, action).scale(n)
    return total


def theta(sub: Sequence[int], source: int, target: int) -> tuple:
    """Move one instance from local state ``source`` to ``target``."""
    if sub[source] <= 0:
        raise ValueError(f"no instance in local state {source} to move")
    out = list(sub)
    out[source] -= 1
    out[target] += 1
    return tuple(out)


# ---------------------------------------------------------------------------
# Reference successor semantics


def _moves(model, eq, state, layout, action):
    """Moves of ``eq`` on ``action`` as ((rate, deltas) list, apparent rate)."""
    if isinstance(eq, GroupLeaf):
        comp = model.components[eq.component]
        off = layout.offsets[layout.groups.index(eq.label)]
        moves, total = [], ApparentRate.zero()
        for t in comp.transitions:
            if t.action != action:
                continue
            i = off + comp.states.index(t.source)
            n = state[i]
            if n == 0:
                continue
            r = ApparentRate.of(t.rate).scale(n)
            total = total + r
            moves.append((r, ((i, off + comp.states.index(t.target)),)))
        return moves, total
    left, ra_left = _moves(model, eq.left, state, layout, action)
    right, ra_right = _moves(model, eq.right, state, layout, action)
    if action not in eq.coop_set:
        return left + right, ra_left + ra_right
    shared = ra_left.min(ra_right)
    if shared.is_zero:
        return [], shared
    moves = []
    for r1, d1 in left:
        for r2, d2 in right:
            rate = shared.scale(r1.ratio(ra_left) * r2.ratio(ra_right))
            if not rate.is_zero:
                moves.append((rate, d1 + d2))
    return moves, shared


def _actions(model: GroupedModel) -> list[str]:
    return sorted(set().union(*(c.actions for c in model.components.values())))


def successors(model: GroupedModel, state: Sequence[int]) -> list[tuple[str, float, StateVector]]:
    """All one-step transitions of ``state``, aggregated by (action, target)."""
    layout = StateLayout.of(model)
    state = tuple(state)
    out = []
    for action in _actions(model):
        moves, _ = _moves(model, model.equation, state, layout, action)
        agg: dict[tuple, float] = defaultdict(float)
        for rate, deltas in moves:
            if rate.is_zero:
                continue
            if rate.passive:
                raise ModelError(f"action {action!r} is passive at the top level (incomplete model)")
            target = list(state)
            for i, j in deltas:
                target[i] -= 1
                target[j] += 1
            agg[tuple(target)] += rate.value
        out.extend((action, agg[t], t) for t in sorted(agg))
    return out


# ---------------------------------------------------------------------------
# CTMC


@dataclasses.dataclass(frozen=True)
class Ctmc:
    layout: StateLayout
    states: np.ndarray          # (n, d) counts
    actions: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    act: np.ndarray
    rate: np.ndarray
    initial: int = 0

    @property
    def size(self) -> int:
        return len(self.states)

    def state(self, i: int) -> StateVector:
        return tuple(int(x) for x in self.states[i])

    def index_of(self, state: Sequence[int]) -> int:
        lookup = self.__dict__.get("_lookup")
        if lookup is None:
            lookup = {tuple(int(x) for x in row): i for i, row in enumerate(self.states)}
            object.__setattr__(self, "_lookup", lookup)
        return lookup[tuple(state)]

    @property
    def transitions(self) -> list[tuple[int, int, str, float]]:
        return [(int(s), int(d), self.actions[a], float(r))
                for s, d, a, r in zip(self.src, self.dst, self.act, self.rate)]

    def generator(self) -> sp.csr_matrix:
        """Infinitesimal generator; self-loops are dropped."""
        n = self.size
        keep = self.src != self.dst
        q = sp.coo_matrix((self.rate[keep], (self.src[keep], self.dst[keep])), shape=(n, n)).tocsr()
        q.sum_duplicates()
        out = np.asarray(q.sum(axis=1)).ravel()
        return (q - sp.diags(out)).tocsr()

    def to_json(self) -> str:
        doc = {
            "layout": self.layout.as_dict(),
            "initial": self.initial,
            "states": self.states.tolist(),
            "actions": list(self.actions),
            "transitions": [[int(s), int(d), self.actions[a], float(r)]
                            for s, d, a, r in zip(self.src, self.dst, self.act, self.rate)],
        }
        return json.dumps(doc, indent=None, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Ctmc":
        doc = json.loads(text)
        layout = StateLayout(tuple(doc["layout"]["groups"]), tuple(tuple(s) for s in doc["layout"]["states"]))
        actions = tuple(doc["actions"])
        trs = doc["transitions"]
        return cls(layout, np.asarray(doc["states"], dtype=np.int64).reshape(-1, layout.dimension), actions,
                   np.array([t[0] for t in trs], dtype=np.int64), np.array([t[1] for t in trs], dtype=np.int64),
                   np.array([actions.index(t[2]) for t in trs], dtype=np.int64),
                   np.array([t[3] for t in trs], dtype=float), doc["initial"])

    def to_matrix_market(self) -> str:
        buf = io.BytesIO()
        scipy.io.mmwrite(buf, self.generator().tocoo(), precision=17)
        return buf.getvalue().decode()


def generate_ctmc(model: GroupedModel, initial: Optional[Sequence[int]] = None,
                  state_cap: int = DEFAULT_STATE_CAP, backend: Optional[str] = None) -> Ctmc:
    """Breadth-first closure of the initial state under the successor relation.

    States are numbered in discovery order; each state's successors are
    visited sorted by (action, target vector).
    """
    layout = StateLayout.of(model)
    start = initial_state(model) if initial is None else tuple(initial)
    if len(start) != layout.dimension:
        raise ModelError(f"initial state has {len(start)} entries, model dimension is {layout.dimension}")
    for g, leaf in zip(layout.groups, model.groups):
        if sum(start[layout.slice(g)]) != leaf.size:
            raise ModelError(f"initial state changes the population of group {g!r}")
    program = compile_model(model)
    explore = kernels.get_explore(backend)
    states, src, dst, act, rate, passive = explore(program, np.asarray(start, dtype=np.int64), state_cap)
    if passive >= 0:
        raise ModelError(f"action {program.actions[passive]!r} is passive at the top level (incomplete model)")
    if states is None:
        raise StateCapExceeded(f"state space exceeds the cap of {state_cap} states")
    log.info("generated %d states, %d transitions", len(states), len(src))
    return Ctmc(layout, states, tuple(program.actions), src, dst, act, rate)
