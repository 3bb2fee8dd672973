"""Marginal-distribution ODEs, transient and steady-state solution."""

from __future__ import annotations

import dataclasses
import logging
import warnings
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import connected_components

from .statespace import Ctmc
from .syntax import PepaError

log = logging.getLogger(__name__)

STEADY = "steady"
DENSE_LIMIT = 5_000
DIRECT_LIMIT = 20_000


class SolverError(PepaError):
    pass


class ReducibleChainError(SolverError):
    pass


@dataclasses.dataclass(frozen=True)
class OdeSystem:
    """dp/dt = A p with A[i, j] the rate of flux from state j into state i."""

    matrix: sp.csr_matrix
    labels: tuple

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()


@dataclasses.dataclass(frozen=True)
class Distribution:
    probs: np.ndarray
    time: Union[float, str] = STEADY

    def __post_init__(self):
        total = float(np.sum(self.probs))
        if abs(total - 1.0) > 1e-9:
            raise SolverError(f"distribution sums to {total!r}")


def build_marginal_odes(ctmc: Ctmc) -> OdeSystem:
    """One equation per state: influx from predecessors, efflux to successors."""
    n = ctmc.size
    rows, cols, vals = [], [], []
    for s, d, r in zip(ctmc.src.tolist(), ctmc.dst.tolist(), ctmc.rate.tolist()):
        rows.append(d)      # + r * P(s) in the equation of d
        cols.append(s)
        vals.append(r)
        rows.append(s)      # - r * P(s) in the equation of s
        cols.append(s)
        vals.append(-r)
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    a.eliminate_zeros()
    return OdeSystem(a, tuple(ctmc.state(i) for i in range(n)))


def _clamp(p: np.ndarray, where) -> np.ndarray:
    neg = p < 0
    if neg.any():
        mass = -p[neg].sum()
        if mass > 1e-9:
            warnings.warn(f"clamped {mass:.3g} of negative probability mass at {where}", RuntimeWarning, stacklevel=3)
        p = np.where(neg, 0.0, p)
    return p / p.sum()


DENSE_STEP_LIMIT = 2_000


def _trapezoid(a: sp.csr_matrix, p0, times, h):
    n = a.shape[0]
    eye = sp.identity(n, format="csc")
    if n <= DENSE_STEP_LIMIT:
        # every full step applies the same matrix, so jump by repeated squaring
        ident = np.eye(n)
        dense = a.toarray()
        step = np.linalg.solve(ident - 0.5 * h * dense, ident + 0.5 * h * dense)
        advance = lambda p, k: np.linalg.matrix_power(step, k) @ p
        partial = lambda p, dt: np.linalg.solve(ident - 0.5 * dt * dense, (ident + 0.5 * dt * dense) @ p)
    else:
        lhs = spla.splu((eye - 0.5 * h * a).tocsc())
        rhs = (eye + 0.5 * h * a).tocsr()

        def advance(p, k):
            for _ in range(k):
                p = lhs.solve(rhs @ p)
            return p

        partial = lambda p, dt: spla.spsolve((eye - 0.5 * dt * a).tocsc(), (eye + 0.5 * dt * a) @ p)
    out, t, p = [], 0.0, p0.copy()
    for target in times:
        k = int((target - t) / h * (1 + 1e-12))
        if k > 0:
            p = advance(p, k)
            t += k * h
        if target - t > 1e-12 * max(1.0, target):
            p = partial(p, target - t)
        t = target
        out.append(p.copy())
    return out


def transient(odes: OdeSystem, p0: Sequence[float], times: Sequence[float], method: str = "rk45",
              rtol: float = 1e-6, atol: float = 1e-8) -> list[Distribution]:
    """Integrate dp/dt = A p from time 0 and report p at ``times``.

    ``method`` is ``rk45`` (adaptive embedded Runge-Kutta) or ``trapezoid``
    (implicit, fixed step 0.1 / max rate) for stiff systems.
    """
    p0 = np.asarray(p0, dtype=float)
    times = np.asarray(times, dtype=float)
    if abs(p0.sum() - 1.0) > 1e-9:
        raise SolverError("initial distribution is not normalised")
    if len(times) == 0:
        return []
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise SolverError("output times must be ascending and nonnegative")
    a = odes.matrix
    if method == "trapezoid":
        max_rate = float(np.max(np.abs(a.diagonal()))) if a.shape[0] else 0.0
        h = 0.1 / max_rate if max_rate > 0 else float(times[-1] or 1.0)
        raw = _trapezoid(a, p0, times, h)
    elif method == "rk45":
        if times[-1] == 0:
            raw = [p0.copy() for _ in times]
        else:
            sol = solve_ivp(lambda t, y: a @ y, (0.0, float(times[-1])), p0, method="RK45",
                            t_eval=times, rtol=rtol, atol=atol)
            if not sol.success:
                raise SolverError(f"integration failed at t={sol.t[-1] if len(sol.t) else 0.0}: {sol.message}")
            raw = [sol.y[:, k] for k in range(len(times))]
    else:
        raise ValueError(f"unknown integration method {method!r}")
    return [Distribution(_clamp(p, f"t={t:g}"), float(t)) for p, t in zip(raw, times)]


def _check_irreducible(q: sp.csr_matrix) -> None:
    n = q.shape[0]
    if n <= 1:
        return
    ncomp, labels = connected_components(q, directed=True, connection="strong")
    if ncomp == 1:
        return
    # a component with no edge into it from elsewhere cannot be re-entered
    cond = set()
    coo = q.tocoo()
    for i, j in zip(coo.row, coo.col):
        if i != j and labels[i] != labels[j]:
            cond.add((labels[i], labels[j]))
    entered = {b for _, b in cond}
    unreachable = [c for c in range(ncomp) if c not in entered and c != labels[0]]
    target = unreachable[0] if unreachable else next(c for c in range(ncomp) if c != labels[0])
    members = np.flatnonzero(labels == target)
    raise ReducibleChainError(
        f"chain is reducible: {ncomp} strongly connected components; component of states "
        f"{members[:10].tolist()}{'...' if len(members) > 10 else ''} is not reachable from the others")


def _power(q: sp.csr_matrix, tol: float = 1e-11, max_iter: int = 2_000_000) -> np.ndarray:
    """Uniformisation + power iteration with Aitken extrapolation every few steps.

    Stops when the residual ||pi Q|| falls below ``tol`` times the largest exit rate.
    """
    n = q.shape[0]
    lam = 1.02 * float(np.max(-q.diagonal()))
    pt = (sp.identity(n, format="csr") + q / lam).T.tocsr()
    qt = q.T.tocsr()
    p = np.full(n, 1.0 / n)
    hist = []
    for it in range(max_iter):
        nxt = pt @ p
        nxt /= nxt.sum()
        hist.append(nxt)
        if len(hist) == 3:
            x0, x1, x2 = hist
            den = x2 - 2 * x1 + x0
            safe = np.abs(den) > 1e-300
            ext = x2.copy()
            ext[safe] = x2[safe] - (x2[safe] - x1[safe]) ** 2 / den[safe]
            if np.all(ext >= 0) and np.abs(qt @ ext).max() < np.abs(qt @ x2).max():
                nxt = ext / ext.sum()
            hist = []
        p = nxt
        if it % 25 == 0 and np.abs(qt @ p).max() < tol * lam:
            return p
    raise SolverError("power iteration did not converge")


def steady_state(ctmc: Union[Ctmc, OdeSystem], method: Optional[str] = None) -> Distribution:
    """Solve pi Q = 0, sum(pi) = 1.

    Dense LU up to ``DENSE_LIMIT`` states, sparse LU up to ``DIRECT_LIMIT``,
    uniformised power iteration beyond.
    """
    q = ctmc.generator() if isinstance(ctmc, Ctmc) else ctmc.matrix.T.tocsr()
    n = q.shape[0]
    if n == 1:
        return Distribution(np.ones(1))
    _check_irreducible(q)
    if method is None:
        method = "dense" if n <= DENSE_LIMIT else "sparse" if n <= DIRECT_LIMIT else "power"
    if method == "dense":
        a = q.T.toarray()
        a[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = scipy.linalg.solve(a, b)
    elif method == "sparse":
        a = q.T.tolil()
        a[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[-1] = 1.0
        pi = spla.spsolve(a.tocsc(), b)
    elif method == "power":
        pi = _power(q)
    else:
        raise ValueError(f"unknown steady-state method {method!r}")
    pi = _clamp(pi, "steady state")
    residual = np.abs(pi @ q).max()
    scale = max(1.0, float(np.max(np.abs(q.diagonal()))))
    if residual > 1e-10 * scale:
        log.warning("steady-state residual %.3g", residual)
    return Distribution(pi)


def marginal_measure(dist: Distribution, labels: Sequence, predicate: Callable[[tuple], bool]) -> float:
    if len(labels) != len(dist.probs):
        raise ValueError("labels do not cover the distribution")
    return float(sum(p for p, lab in zip(dist.probs, labels) if predicate(lab)))


def boundary_probability(full_dist: Distribution, boundary) -> float:
    states = boundary.states if hasattr(boundary, "states") else boundary
    idx = np.fromiter(sorted(states), dtype=np.int64)
    return float(full_dist.probs[idx].sum()) if len(idx) else 0.0


def chain_sums(dist: Distribution, chain_index: np.ndarray, nchains: int) -> np.ndarray:
    """Total probability of each sub-chain."""
    return np.bincount(chain_index, weights=dist.probs, minlength=nchains)
