"""Flatten a model's cooperation tree into arrays for the exploration kernels.

For every action type the tree becomes a post-order list of nodes whose
apparent rates are linear forms of the counts (leaves), sums (independent
composition) or cooperation minima (synchronising nodes). Every way the
action can fire is a *template*: the local transitions it moves and the
synchronising nodes it passes through. Its rate in a state is

    prod(count[src] * coef for each local transition)
      * prod(min(left, right) / (left * right) for each synchronising node)

which is the cooperation rule applied bottom-up.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .syntax import CoopNode, GroupLeaf, GroupedModel, ModelError

LEAF, SUM, MIN = 0, 1, 2
ABSENT, ACTIVE, PASSIVE, MIXED = 0, 1, 2, 3


@dataclasses.dataclass
class Program:
    actions: list
    dimension: int
    # nodes, grouped per action in post-order
    act_node_start: np.ndarray
    act_node_end: np.ndarray
    node_type: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_kind: np.ndarray
    node_lkind: np.ndarray
    node_rkind: np.ndarray
    term_start: np.ndarray
    term_end: np.ndarray
    term_idx: np.ndarray
    term_coef: np.ndarray
    # templates, grouped per action
    act_tmpl_start: np.ndarray
    act_tmpl_end: np.ndarray
    tmpl_passive: np.ndarray
    tr_start: np.ndarray
    tr_end: np.ndarray
    tr_src: np.ndarray
    tr_dst: np.ndarray
    tr_coef: np.ndarray
    sy_start: np.ndarray
    sy_end: np.ndarray
    sy_node: np.ndarray


def _offsets(model: GroupedModel) -> dict:
    out, acc = {}, 0
    for leaf in model.groups:
        out[leaf.label] = acc
        acc += len(model.components[leaf.component].states)
    return out


def compile_model(model: GroupedModel) -> Program:
    offsets = _offsets(model)
    actions = sorted(set().union(*(c.actions for c in model.components.values())))
    nodes = []      # (type, left, right, kind, lkind, rkind, terms)
    act_nodes, act_tmpls = [], []
    templates = []  # (passive, transitions, syncs)

    def build(eq, action, under_sync):
        """Append nodes for ``eq``; return (node id, kind, templates)."""
        if isinstance(eq, GroupLeaf):
            comp = model.components[eq.component]
            off = offsets[eq.label]
            kind, terms, tmpls = ABSENT, [], []
            for t in comp.transitions:
                if t.action != action:
                    continue
                kind = PASSIVE if t.rate.passive else ACTIVE
                coef = float(t.rate.weight if t.rate.passive else t.rate.value)
                src = off + comp.states.index(t.source)
                terms.append((src, coef))
                tmpls.append((kind, [(src, off + comp.states.index(t.target), coef)], []))
            nodes.append((LEAF, -1, -1, kind, ABSENT, ABSENT, terms))
            return len(nodes) - 1, kind, tmpls
        sync = action in eq.coop_set
        lid, lkind, ltm = build(eq.left, action, under_sync or sync)
        rid, rkind, rtm = build(eq.right, action, under_sync or sync)
        if not sync:
            if lkind == ABSENT:
                kind = rkind
            elif rkind == ABSENT or rkind == lkind:
                kind = lkind
            else:
                kind = MIXED
            if kind == MIXED and under_sync:
                raise ModelError(f"apparent rate of {action!r} mixes active and passive offers")
            nodes.append((SUM, lid, rid, kind, lkind, rkind, []))
            return len(nodes) - 1, kind, ltm + rtm
        if ABSENT in (lkind, rkind):
            kind = ABSENT
        elif PASSIVE == lkind == rkind:
            kind = PASSIVE
        else:
            kind = ACTIVE
        nodes.append((MIN, lid, rid, kind, lkind, rkind, []))
        nid = len(nodes) - 1
        tmpls = []
        if kind != ABSENT:
            for _, tl, sl in ltm:
                for _, tr, sr in rtm:
                    tmpls.append((kind, tl + tr, sl + sr + [nid]))
        return nid, kind, tmpls

    for action in actions:
        n0, t0 = len(nodes), len(templates)
        _, _, tmpls = build(model.equation, action, False)
        templates.extend(tmpls)
        act_nodes.append((n0, len(nodes)))
        act_tmpls.append((t0, len(templates)))

    i64 = lambda xs: np.asarray(xs, dtype=np.int64)
    f64 = lambda xs: np.asarray(xs, dtype=np.float64)

    term_start, term_end, term_idx, term_coef = [], [], [], []
    for node in nodes:
        term_start.append(len(term_idx))
        for i, c in node[6]:
            term_idx.append(i)
            term_coef.append(c)
        term_end.append(len(term_idx))

    tr_start, tr_end, tr_src, tr_dst, tr_coef = [], [], [], [], []
    sy_start, sy_end, sy_node = [], [], []
    for _, trs, syncs in templates:
        tr_start.append(len(tr_src))
        for s, d, c in trs:
            tr_src.append(s)
            tr_dst.append(d)
            tr_coef.append(c)
        tr_end.append(len(tr_src))
        sy_start.append(len(sy_node))
        sy_node.extend(syncs)
        sy_end.append(len(sy_node))

    return Program(
        actions=actions,
        dimension=sum(len(model.components[l.component].states) for l in model.groups),
        act_node_start=i64([a for a, _ in act_nodes]),
        act_node_end=i64([b for _, b in act_nodes]),
        node_type=i64([n[0] for n in nodes]),
        node_left=i64([n[1] for n in nodes]),
        node_right=i64([n[2] for n in nodes]),
        node_kind=i64([n[3] for n in nodes]),
        node_lkind=i64([n[4] for n in nodes]),
        node_rkind=i64([n[5] for n in nodes]),
        term_start=i64(term_start), term_end=i64(term_end),
        term_idx=i64(term_idx), term_coef=f64(term_coef),
        act_tmpl_start=i64([a for a, _ in act_tmpls]),
        act_tmpl_end=i64([b for _, b in act_tmpls]),
        tmpl_passive=i64([1 if k == PASSIVE else 0 for k, _, _ in templates]),
        tr_start=i64(tr_start), tr_end=i64(tr_end),
        tr_src=i64(tr_src), tr_dst=i64(tr_dst), tr_coef=f64(tr_coef),
        sy_start=i64(sy_start), sy_end=i64(sy_end), sy_node=i64(sy_node),
    )
