"""Exact discrete OT and exact TiOT.

The inner problem ``min_pi <C, pi>`` over couplings is solved by a
transportation (network) simplex on the bipartite spanning-tree basis.
Degeneracy is removed by the classical perturbation ``a_i + d`` and
``b_n + m d``, carried symbolically: every flow is a pair
``(value, coefficient of d)`` compared lexicographically, so every
basis is nondegenerate and pivoting cannot cycle.

The outer problem ``max_w T(w)`` is concave and piecewise linear in
``w``; it is maximized by bisection on the supergradient
``<Gamma - Phi, pi_w>``. Successive inner solves share one simplex
object, so each one starts from the previous optimal basis (the
marginals do not change with ``w``, so that basis stays feasible).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.optimize import linprog

from .errors import InvalidInputError, SolverFailure
from .measures import CostPair, combine

logger = logging.getLogger(__name__)

_LEX_TOL = 1e-13


@dataclass(frozen=True)
class TransportPlan:
    """A coupling together with the marginals it is meant to satisfy."""

    matrix: NDArray[np.float64]
    row_marginal: NDArray[np.float64]
    col_marginal: NDArray[np.float64]

    def marginal_errors(self) -> tuple[float, float]:
        """L1 errors of the row and column sums."""
        r = float(np.abs(self.matrix.sum(axis=1) - self.row_marginal).sum())
        c = float(np.abs(self.matrix.sum(axis=0) - self.col_marginal).sum())
        return r, c

    def max_marginal_error(self) -> float:
        r = np.abs(self.matrix.sum(axis=1) - self.row_marginal).max()
        c = np.abs(self.matrix.sum(axis=0) - self.col_marginal).max()
        return float(max(r, c))


def _lex_less(p0, p1, q0, q1) -> bool:
    if p0 < q0 - _LEX_TOL:
        return True
    if p0 > q0 + _LEX_TOL:
        return False
    return p1 < q1


class TransportSimplex:
    """Network simplex for the transportation problem with fixed marginals.

    The object keeps its last optimal basis; calling :meth:`solve` again
    with a different cost matrix warm-starts from it.
    """

    def __init__(self, a: ArrayLike, b: ArrayLike, max_pivots: Optional[int] = None):
        a = np.asarray(a, dtype=float).reshape(-1)
        b = np.asarray(b, dtype=float).reshape(-1)
        if a.size == 0 or b.size == 0:
            raise InvalidInputError("marginals must be nonempty")
        if np.any(a < 0) or np.any(b < 0):
            raise InvalidInputError("marginals must be nonnegative")
        if abs(a.sum() - b.sum()) > 1e-9:
            raise InvalidInputError(f"marginals have different mass: {a.sum()} vs {b.sum()}")
        self.a = a
        self.b = b
        self.m = m = a.size
        self.n = n = b.size
        self.max_pivots = max_pivots if max_pivots is not None else 20 * m * n + 1000
        self.pivots = 0
        self._init_northwest()

    # -- basis construction ------------------------------------------------

    def _init_northwest(self):
        m, n = self.m, self.n
        s0 = self.a.copy()
        s1 = np.ones(m)  # every supply perturbed by +d
        d0 = self.b.copy()
        d1 = np.zeros(n)
        d1[-1] = m  # last demand perturbed by +m d
        rows, cols, f0, f1 = [], [], [], []
        i = j = 0
        while True:
            if _lex_less(s0[i], s1[i], d0[j], d1[j]):
                x0, x1 = s0[i], s1[i]
            else:
                x0, x1 = d0[j], d1[j]
            rows.append(i)
            cols.append(j)
            f0.append(x0)
            f1.append(x1)
            s0[i] -= x0
            s1[i] -= x1
            d0[j] -= x0
            d1[j] -= x1
            if i == m - 1 and j == n - 1:
                break
            # the perturbation makes exactly one of the two exhausted,
            # except at the final cell
            if j == n - 1 or (i < m - 1 and _lex_less(s0[i], s1[i], d0[j], d1[j])):
                i += 1
            else:
                j += 1
        if len(rows) != m + n - 1:
            raise SolverFailure(f"initial basis has {len(rows)} cells, expected {m + n - 1}")
        self.rows = np.array(rows, dtype=np.int64)
        self.cols = np.array(cols, dtype=np.int64)
        self.f0 = np.array(f0, dtype=float)
        self.f1 = np.array(f1, dtype=float)
        self._rebuild_adjacency()

    def _rebuild_adjacency(self):
        m = self.m
        self.adj = [dict() for _ in range(m + self.n)]
        for k, (i, j) in enumerate(zip(self.rows, self.cols)):
            self.adj[i][m + j] = k
            self.adj[m + j][i] = k

    # -- tree utilities ----------------------------------------------------

    def _potentials(self, cost: NDArray):
        """Solve ``u_i + v_j = c_ij`` on the basis tree rooted at row 0."""
        m, n = self.m, self.n
        pot = np.zeros(m + n)
        parent = np.full(m + n, -1, dtype=np.int64)
        parent_cell = np.full(m + n, -1, dtype=np.int64)
        depth = np.zeros(m + n, dtype=np.int64)
        seen = np.zeros(m + n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        adj = self.adj
        while queue:
            node = queue.popleft()
            for nb, k in adj[node].items():
                if seen[nb]:
                    continue
                seen[nb] = True
                c = cost[self.rows[k], self.cols[k]]
                pot[nb] = c - pot[node]
                parent[nb] = node
                parent_cell[nb] = k
                depth[nb] = depth[node] + 1
                queue.append(nb)
        if not seen.all():
            raise SolverFailure("basis is not a spanning tree")
        self._parent, self._parent_cell, self._depth = parent, parent_cell, depth
        return pot[:m], pot[m:]

    def _cycle(self, i: int, j: int) -> list[int]:
        """Basis cells on the tree path from column node ``j`` to row node ``i``."""
        parent, pcell, depth = self._parent, self._parent_cell, self._depth
        x, y = self.m + j, i
        up_j, up_i = [], []
        while depth[x] > depth[y]:
            up_j.append(pcell[x])
            x = parent[x]
        while depth[y] > depth[x]:
            up_i.append(pcell[y])
            y = parent[y]
        while x != y:
            up_j.append(pcell[x])
            x = parent[x]
            up_i.append(pcell[y])
            y = parent[y]
        return up_j + up_i[::-1]

    # -- main loop ---------------------------------------------------------

    def solve(self, cost: ArrayLike) -> tuple[TransportPlan, float]:
        cost = np.asarray(cost, dtype=float)
        if cost.shape != (self.m, self.n):
            raise InvalidInputError(f"cost shape {cost.shape} != ({self.m}, {self.n})")
        if not np.all(np.isfinite(cost)):
            raise InvalidInputError("cost matrix has non-finite entries")
        tol = 1e-12 * max(1.0, float(np.abs(cost).max()))
        m = self.m
        pivots = 0
        while True:
            u, v = self._potentials(cost)
            reduced = cost - u[:, None] - v[None, :]
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tol:
                break
            if pivots >= self.max_pivots:
                raise SolverFailure(
                    f"network simplex exceeded {self.max_pivots} pivots without reaching optimality"
                )
            pivots += 1
            ei, ej = divmod(flat, self.n)
            path = self._cycle(ei, ej)
            minus = path[0::2]
            plus = path[1::2]
            leave = minus[0]
            for k in minus[1:]:
                if _lex_less(self.f0[k], self.f1[k], self.f0[leave], self.f1[leave]):
                    leave = k
            t0, t1 = self.f0[leave], self.f1[leave]
            self.f0[minus] -= t0
            self.f1[minus] -= t1
            self.f0[plus] += t0
            self.f1[plus] += t1
            li, lj = self.rows[leave], self.cols[leave]
            del self.adj[li][m + lj]
            del self.adj[m + lj][li]
            self.rows[leave], self.cols[leave] = ei, ej
            self.f0[leave], self.f1[leave] = t0, t1
            self.adj[ei][m + ej] = leave
            self.adj[m + ej][ei] = leave
        self.pivots += pivots
        self.duals = (u, v)
        plan = np.zeros((self.m, self.n))
        plan[self.rows, self.cols] = np.maximum(self.f0, 0.0)
        value = float(np.sum(cost * plan))
        return TransportPlan(plan, self.a, self.b), value


def solve_discrete_ot(cost: ArrayLike, a: ArrayLike, b: ArrayLike) -> tuple[TransportPlan, float]:
    """Exact optimal transport between weights ``a`` and ``b`` under ``cost``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(a.sum() - 1) > 1e-9 or abs(b.sum() - 1) > 1e-9:
        raise InvalidInputError("marginals must each sum to 1")
    return TransportSimplex(a, b).solve(cost)


@dataclass(frozen=True)
class ExactTiOTSolution:
    w_star: float
    plan: TransportPlan
    value: float
    distance: float
    supergradient_at_w: float
    bracket: tuple[float, float]
    evaluations: int = 0


def value_and_supergradient(cp: CostPair, a, b, w: float, simplex: Optional[TransportSimplex] = None):
    """Inner OT value ``T(w)`` and the supergradient ``<Gamma - Phi, pi_w>``.

    Returns ``(T_w, slope, plan)``.
    """
    cost = combine(cp, w)
    if simplex is None:
        plan, value = solve_discrete_ot(cost, a, b)
    else:
        plan, value = simplex.solve(cost)
    slope = float(np.sum(cp.diff * plan.matrix))
    return value, slope, plan


def tiot_exact(cp: CostPair, a, b, w_tol: float = 1e-9) -> ExactTiOTSolution:
    """Maximize the concave value function ``T(w)`` by supergradient bisection."""
    if w_tol <= 0:
        raise InvalidInputError("w_tol must be positive")
    simplex = TransportSimplex(a, b)
    evals = 0

    def probe(w):
        nonlocal evals
        evals += 1
        return value_and_supergradient(cp, a, b, w, simplex)

    def finish(w, val, slope, plan, bracket):
        return ExactTiOTSolution(
            w_star=float(w),
            plan=plan,
            value=max(val, 0.0),
            distance=max(val, 0.0) ** (1.0 / cp.p),
            supergradient_at_w=slope,
            bracket=bracket,
            evaluations=evals,
        )

    t0, s0, p0 = probe(0.0)
    if s0 <= 0:
        return finish(0.0, t0, s0, p0, (0.0, 0.0))
    t1, s1, p1 = probe(1.0)
    if s1 >= 0:
        return finish(1.0, t1, s1, p1, (1.0, 1.0))

    lo, hi = (0.0, t0, s0, p0), (1.0, t1, s1, p1)
    while hi[0] - lo[0] > w_tol:
        mid = 0.5 * (lo[0] + hi[0])
        tm, sm, pm = probe(mid)
        if sm == 0.0:
            return finish(mid, tm, sm, pm, (lo[0], hi[0]))
        if sm > 0:
            lo = (mid, tm, sm, pm)
        else:
            hi = (mid, tm, sm, pm)
    mid = 0.5 * (lo[0] + hi[0])
    tm, sm, pm = probe(mid)
    best = max([lo, hi, (mid, tm, sm, pm)], key=lambda c: c[1])
    return finish(best[0], best[1], best[2], best[3], (lo[0], hi[0]))


def wasserstein_pp(cp: CostPair, a, b, w: float) -> float:
    """``W_{p,w}^p``: exact OT value for the fixed blend ``C(w)``."""
    return solve_discrete_ot(combine(cp, w), a, b)[1]


def tiot_lp_dual(cp: CostPair, a, b) -> float:
    """TiOT value from the joint LP over dual potentials and ``w``.

    The LP ``min a.u + b.v`` subject to ``-u_i - v_j + w (Phi_ij - Gamma_ij)
    <= Phi_ij`` and ``0 <= w <= 1`` has optimum equal to minus the TiOT
    value (substitute ``u -> -u``, ``v -> -v`` to recover the Kantorovich
    dual), so the negated optimum is returned.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = cp.shape
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    rows = np.arange(m * n)
    H = sparse.hstack(
        [
            sparse.csr_matrix((-np.ones(m * n), (rows, ii)), shape=(m * n, m)),
            sparse.csr_matrix((-np.ones(m * n), (rows, jj)), shape=(m * n, n)),
            sparse.csr_matrix((cp.phi - cp.gamma).reshape(-1, 1)),
        ],
        format="csr",
    )
    r = cp.phi.ravel()
    q = np.concatenate([a, b, [0.0]])
    bounds = [(None, None)] * (m + n) + [(0.0, 1.0)]
    res = linprog(q, A_ub=H, b_ub=r, bounds=bounds, method="highs")
    if res.status != 0:
        raise SolverFailure(f"TiOT LP failed: {res.message}")
    return float(-res.fun)
