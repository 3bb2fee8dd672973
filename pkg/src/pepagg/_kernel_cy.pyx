# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled exploration kernel; mirrors ``_kernel_py.explore`` operation for operation."""

import numpy as np
cimport numpy as cnp
from cpython.tuple cimport PyTuple_New, PyTuple_SET_ITEM
from cpython.ref cimport Py_INCREF

cnp.import_array()

cdef enum:
    LEAF = 0
    SUM = 1
    ACTIVE = 1
    PASSIVE = 2


cdef tuple _as_tuple(const cnp.int64_t[:] buf, Py_ssize_t d):
    cdef tuple out = PyTuple_New(d)
    cdef Py_ssize_t i
    cdef object item
    for i in range(d):
        item = <long long> buf[i]
        Py_INCREF(item)
        PyTuple_SET_ITEM(out, i, item)
    return out


def explore(p, start, Py_ssize_t cap):
    cdef:
        const cnp.int64_t[:] act_node_start = p.act_node_start
        const cnp.int64_t[:] act_node_end = p.act_node_end
        const cnp.int64_t[:] node_type = p.node_type
        const cnp.int64_t[:] node_left = p.node_left
        const cnp.int64_t[:] node_right = p.node_right
        const cnp.int64_t[:] node_lkind = p.node_lkind
        const cnp.int64_t[:] node_rkind = p.node_rkind
        const cnp.int64_t[:] term_start = p.term_start
        const cnp.int64_t[:] term_end = p.term_end
        const cnp.int64_t[:] term_idx = p.term_idx
        const double[:] term_coef = p.term_coef
        const cnp.int64_t[:] act_tmpl_start = p.act_tmpl_start
        const cnp.int64_t[:] act_tmpl_end = p.act_tmpl_end
        const cnp.int64_t[:] tmpl_passive = p.tmpl_passive
        const cnp.int64_t[:] tr_start = p.tr_start
        const cnp.int64_t[:] tr_end = p.tr_end
        const cnp.int64_t[:] tr_src = p.tr_src
        const cnp.int64_t[:] tr_dst = p.tr_dst
        const double[:] tr_coef = p.tr_coef
        const cnp.int64_t[:] sy_start = p.sy_start
        const cnp.int64_t[:] sy_end = p.sy_end
        const cnp.int64_t[:] sy_node = p.sy_node
        Py_ssize_t nact = len(p.actions)
        Py_ssize_t d = len(start)
        Py_ssize_t nnodes = node_type.shape[0]
        cnp.ndarray vals_arr = np.zeros(max(nnodes, 1))
        cnp.ndarray fact_arr = np.zeros(max(nnodes, 1))
        double[:] vals = vals_arr
        double[:] fact = fact_arr
        cnp.ndarray target_arr = np.zeros(d, dtype=np.int64)
        cnp.int64_t[:] target = target_arr
        cnp.ndarray store = np.zeros((1024, d), dtype=np.int64)
        cnp.int64_t[:, :] states = store
        Py_ssize_t nstates = 1, head = 0, a, n, k, t, i, j
        long long c
        double v, x, y, m, r
        dict index = {}
        dict agg
        list src = [], dst = [], act = [], rate = []
        tuple key

    for i in range(d):
        states[0, i] = start[i]
    index[_as_tuple(states[0], d)] = 0

    while head < nstates:
        for a in range(nact):
            if act_tmpl_start[a] == act_tmpl_end[a]:
                continue
            for n in range(act_node_start[a], act_node_end[a]):
                if node_type[n] == LEAF:
                    v = 0.0
                    for k in range(term_start[n], term_end[n]):
                        c = states[head, term_idx[k]]
                        if c:
                            v += c * term_coef[k]
                    vals[n] = v
                elif node_type[n] == SUM:
                    vals[n] = vals[node_left[n]] + vals[node_right[n]]
                else:
                    x = vals[node_left[n]]
                    y = vals[node_right[n]]
                    if x == 0.0 or y == 0.0:
                        m = 0.0
                    elif node_lkind[n] == PASSIVE and node_rkind[n] == ACTIVE:
                        m = y
                    elif node_lkind[n] == ACTIVE and node_rkind[n] == PASSIVE:
                        m = x
                    else:
                        m = x if x < y else y
                    vals[n] = m
                    fact[n] = m / (x * y) if m != 0.0 else 0.0
            agg = {}
            for t in range(act_tmpl_start[a], act_tmpl_end[a]):
                r = 1.0
                for k in range(tr_start[t], tr_end[t]):
                    c = states[head, tr_src[k]]
                    if c == 0:
                        r = 0.0
                        break
                    r *= c * tr_coef[k]
                if r == 0.0:
                    continue
                for k in range(sy_start[t], sy_end[t]):
                    r *= fact[sy_node[k]]
                if r == 0.0:
                    continue
                if tmpl_passive[t]:
                    return None, None, None, None, None, a
                for i in range(d):
                    target[i] = states[head, i]
                for k in range(tr_start[t], tr_end[t]):
                    target[tr_src[k]] -= 1
                    target[tr_dst[k]] += 1
                key = _as_tuple(target, d)
                agg[key] = agg.get(key, 0.0) + r
            for key in sorted(agg):
                j = index.get(key, -1)
                if j < 0:
                    if nstates >= cap:
                        return None, None, None, None, None, -1
                    if nstates == states.shape[0]:
                        store = np.concatenate([store, np.zeros_like(store)])
                        states = store
                    for i in range(d):
                        states[nstates, i] = key[i]
                    j = nstates
                    index[key] = j
                    nstates += 1
                src.append(head)
                dst.append(j)
                act.append(a)
                rate.append(agg[key])
        head += 1

    return (store[:nstates].copy(), np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
            np.asarray(act, dtype=np.int64), np.asarray(rate, dtype=np.float64), -1)
