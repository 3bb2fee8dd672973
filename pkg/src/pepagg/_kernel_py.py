"""Pure-Python exploration kernel (fallback for the compiled one).

The floating-point operations are performed in the same order as in
``_kernel_cy.pyx`` so both produce bit-identical chains.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from ._program import ACTIVE, LEAF, MIN, PASSIVE, SUM


def _evaluate(p, state, n0, n1, vals, fact):
    for n in range(n0, n1):
        t = p.node_type[n]
        if t == LEAF:
            v = 0.0
            for k in range(p.term_start[n], p.term_end[n]):
                c = state[p.term_idx[k]]
                if c:
                    v += c * p.term_coef[k]
            vals[n] = v
        elif t == SUM:
            vals[n] = vals[p.node_left[n]] + vals[p.node_right[n]]
        else:
            a = vals[p.node_left[n]]
            b = vals[p.node_right[n]]
            lk, rk = p.node_lkind[n], p.node_rkind[n]
            if a == 0.0 or b == 0.0:
                m = 0.0
            elif lk == PASSIVE and rk == ACTIVE:
                m = b
            elif lk == ACTIVE and rk == PASSIVE:
                m = a
            else:
                m = a if a < b else b
            vals[n] = m
            fact[n] = m / (a * b) if m != 0.0 else 0.0


def explore(p, start, cap):
    """Return (states, src, dst, act, rate, passive_action) for the model program."""
    # plain lists are much faster than numpy scalars in this loop
    p = _Lists(p)
    nnodes = len(p.node_type)
    vals = [0.0] * nnodes
    fact = [0.0] * nnodes
    start = tuple(int(x) for x in start)
    index = {start: 0}
    order = [start]
    queue = deque([start])
    src, dst, act, rate = [], [], [], []
    while queue:
        state = queue.popleft()
        si = index[state]
        for a in range(len(p.actions)):
            t0, t1 = p.act_tmpl_start[a], p.act_tmpl_end[a]
            if t0 == t1:
                continue
            _evaluate(p, state, p.act_node_start[a], p.act_node_end[a], vals, fact)
            agg = {}
            for t in range(t0, t1):
                r = 1.0
                for k in range(p.tr_start[t], p.tr_end[t]):
                    c = state[p.tr_src[k]]
                    if c == 0:
                        r = 0.0
                        break
                    r *= c * p.tr_coef[k]
                if r == 0.0:
                    continue
                for k in range(p.sy_start[t], p.sy_end[t]):
                    r *= fact[p.sy_node[k]]
                if r == 0.0:
                    continue
                if p.tmpl_passive[t]:
                    return None, None, None, None, None, a
                target = list(state)
                for k in range(p.tr_start[t], p.tr_end[t]):
                    target[p.tr_src[k]] -= 1
                    target[p.tr_dst[k]] += 1
                target = tuple(target)
                agg[target] = agg.get(target, 0.0) + r
            for target in sorted(agg):
                j = index.get(target)
                if j is None:
                    if len(order) >= cap:
                        return None, None, None, None, None, -1
                    j = len(order)
                    index[target] = j
                    order.append(target)
                    queue.append(target)
                src.append(si)
                dst.append(j)
                act.append(a)
                rate.append(agg[target])
    states = np.asarray(order, dtype=np.int64).reshape(len(order), len(start))
    return (states, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
            np.asarray(act, dtype=np.int64), np.asarray(rate, dtype=np.float64), -1)


class _Lists:
    def __init__(self, p):
        for name, value in vars(p).items():
            setattr(self, name, value.tolist() if isinstance(value, np.ndarray) else value)
