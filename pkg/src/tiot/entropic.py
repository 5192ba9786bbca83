"""Entropic TiOT (eTiOT) via hybrid block coordinate descent.

The dual of the inner entropic problem gives the jointly convex objective

    F(u, v, w) = -u.a - v.b + eps * sum_ij exp((u_i + v_j - c_ij(w)) / eps) a_i b_j - eps

minimized over potentials ``u, v`` and the blend weight ``w`` in [0, 1].
HBCD minimizes exactly in ``u`` and ``v`` (Sinkhorn half-steps on the
scalings ``g = a exp(u/eps)``, ``h = b exp(v/eps)``) and takes projected
gradient steps in ``w``. The eTiOT value is ``-min F``.

Kernels that would underflow are handled by running the same updates on
the potentials with log-sum-exp reductions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError, SolverFailure
from .exact import TransportPlan
from .measures import CostPair, DiscreteMeasure, TimeSeries, build_cost_pair, combine, lift_to_measure

logger = logging.getLogger(__name__)

StepsizeRule = Literal["theoretical", "adaptive_sigma", "adaptive_inverse"]
STEPSIZE_RULES = ("theoretical", "adaptive_sigma", "adaptive_inverse")

# above this ||C||_inf / eps the kernel is handled in the log domain
LOG_DOMAIN_RATIO = 200.0
_ETA_FLOOR = 1e-12
_ETA_CAP = 1e6
_MAX_HALVINGS = 60


# ---------------------------------------------------------------------------
# dual state and pointwise quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualState:
    """Dual potentials ``(u, v)``, blend weight ``w`` and regularization.

    Potentials are the primary representation; scalings and kernel are
    derived on demand, so the state stays meaningful when ``exp(u/eps)``
    would overflow.
    """

    u: NDArray[np.float64]
    v: NDArray[np.float64]
    w: float
    epsilon: float
    a: NDArray[np.float64]
    b: NDArray[np.float64]
    cost: NDArray[np.float64]

    @classmethod
    def from_scalings(cls, g, h, w, epsilon, cp: CostPair, a, b) -> "DualState":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        g = np.asarray(g, dtype=float)
        h = np.asarray(h, dtype=float)
        if np.any(g <= 0) or np.any(h <= 0):
            raise InvalidInputError("scalings must be strictly positive")
        u = epsilon * np.log(g / a)
        v = epsilon * np.log(h / b)
        return cls(u, v, float(w), float(epsilon), a, b, combine(cp, w))

    @property
    def g(self) -> NDArray:
        return self.a * np.exp(self.u / self.epsilon)

    @property
    def h(self) -> NDArray:
        return self.b * np.exp(self.v / self.epsilon)

    @property
    def kernel(self) -> NDArray:
        return np.exp(-self.cost / self.epsilon)

    def plan(self) -> NDArray:
        """``Diag(g) K Diag(h)`` evaluated without forming ``g`` or ``K``."""
        return _plan_from_potentials(self.u, self.v, self.cost, self.epsilon, self.a, self.b)


def _plan_from_potentials(u, v, cost, eps, a, b) -> NDArray:
    return np.exp((u[:, None] + v[None, :] - cost) / eps) * a[:, None] * b[None, :]


def _logsumexp_rows(z: NDArray) -> NDArray:
    mx = z.max(axis=1)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    return mx + np.log(np.exp(z - mx[:, None]).sum(axis=1))


def dual_objective(u, v, w, cp: CostPair, a, b, epsilon) -> float:
    """The dual objective ``F(u, v, w)``, evaluated with a log-sum-exp shift."""
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    z = (u[:, None] + v[None, :] - combine(cp, w)) / epsilon
    z = z + np.log(a)[:, None] + np.log(b)[None, :]
    mx = float(z.max())
    total = math.exp(mx) * float(np.exp(z - mx).sum()) if mx < 700 else math.inf
    value = -float(u @ a) - float(v @ b) + epsilon * total - epsilon
    if not math.isfinite(value):
        raise SolverFailure(f"dual objective is not finite (max exponent {mx:.3g})")
    return value


def grad_w(state: DualState, cp: CostPair) -> float:
    """``dF/dw = g^T ((Phi - Gamma) o K) h``."""
    return float(np.sum((cp.phi - cp.gamma) * state.plan()))


def curvature_sigma(state: DualState, cp: CostPair) -> float:
    """``(1/eps) g^T ((Phi - Gamma)^2 o K) h``, the second derivative of F in w."""
    d = cp.gamma - cp.phi
    return float(np.sum(d * d * state.plan()) / state.epsilon)


# ---------------------------------------------------------------------------
# theory constants
# ---------------------------------------------------------------------------


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class TheoryConstants:
    eta_theoretical: float
    kappa: float
    tau: float
    lipschitz_w: float
    rho1: float

    @classmethod
    def compute(cls, cp: CostPair, epsilon: float) -> "TheoryConstants":
        m, n = cp.shape
        c, ct = cp.c_inf, cp.ctilde_inf
        r = c / epsilon
        lip = (ct * ct / epsilon) * _exp(6 * r)
        eta = (epsilon / (ct * ct)) * _exp(-6 * r) if ct > 0 else math.inf
        return cls(
            eta_theoretical=eta,
            kappa=_exp(-6 * r) / (2 * epsilon),
            tau=ct * ct * _exp(6 * r) / (2 * epsilon),
            lipschitz_w=lip,
            rho1=(192 * m + 216 * n + 24) * (c * c / epsilon) * _exp(18 * r),
        )


# ---------------------------------------------------------------------------
# Sinkhorn half-steps in scaling or log form
# ---------------------------------------------------------------------------


class _Scaling:
    """Alternating marginal projections on a Gibbs kernel.

    The kernel is held as ``logk = -C / eps``; in scaling form its
    exponential ``K`` is kept as well and the iterates are ``g, h``, in log
    form they are the potentials ``u, v``.
    """

    def __init__(self, logk: NDArray, a: NDArray, b: NDArray, eps: float, log_domain: bool):
        self.a, self.b, self.eps = a, b, eps
        self.loga, self.logb = np.log(a), np.log(b)
        self.log_domain = log_domain
        n = b.size
        # h = 1/n, i.e. v = eps * log((1/n) / b)
        self.u = np.zeros(a.size)
        self.v = eps * (math.log(1.0 / n) - self.logb)
        self.g = np.ones(a.size)
        self.h = np.full(n, 1.0 / n)
        self.set_kernel(logk)

    def set_kernel(self, logk: NDArray, K: Optional[NDArray] = None):
        self.logk = logk
        if not self.log_domain:
            if K is None:
                with np.errstate(under="ignore"):
                    K = np.exp(logk)
            self.K = K

    def _to_log(self):
        logger.debug("switching to log-domain iterations")
        self.log_domain = True
        self.K = None

    def potentials(self) -> tuple[NDArray, NDArray]:
        if self.log_domain:
            return self.u, self.v
        return self.eps * (np.log(self.g) - self.loga), self.eps * (np.log(self.h) - self.logb)

    def update_g(self, normalize: bool = False, stop_below: float = -1.0) -> float:
        """Row half-step; returns ``||g o (K h) - a||_1`` for the ``g`` held on entry.

        When that residual is already below ``stop_below`` the iterate is
        left untouched, so the caller can stop on the current ``(g, K, h)``.
        """
        if not self.log_domain:
            kh = self.K @ self.h
            if np.all(kh > 0) and np.all(np.isfinite(kh)):
                residual = float(np.abs(self.g * kh - self.a).sum())
                if residual < stop_below:
                    return residual
                self.g = self.a / kh
                if normalize:
                    shift = float(self.a @ (np.log(self.g) - self.loga))
                    self.g = self.g * math.exp(-shift)
                return residual
            self.u = self.eps * (np.log(self.g) - self.loga)
            self.v = self.eps * (np.log(self.h) - self.logb)
            self._to_log()
        z = self.logk + (self.v / self.eps + self.logb)[None, :]
        lse = _logsumexp_rows(z)
        with np.errstate(over="ignore"):
            rows = self.a * np.exp(self.u / self.eps + lse)
        residual = float(np.abs(rows - self.a).sum())
        if residual < stop_below:
            return residual
        self.u = -self.eps * lse
        if normalize:
            self.u = self.u - float(self.a @ self.u)
        return residual

    def update_h(self):
        if not self.log_domain:
            ktg = self.K.T @ self.g
            if np.all(ktg > 0) and np.all(np.isfinite(ktg)):
                self.h = self.b / ktg
                return
            self.u = self.eps * (np.log(self.g) - self.loga)
            self._to_log()
        z = self.logk + (self.u / self.eps + self.loga)[:, None]
        self.v = -self.eps * _logsumexp_rows(z.T)

    def plan_with(self, logk: NDArray, K: Optional[NDArray] = None) -> NDArray:
        """Plan for the current iterates and an arbitrary kernel."""
        if not self.log_domain and K is not None:
            return self.g[:, None] * K * self.h[None, :]
        u, v = self.potentials()
        z = logk + (u / self.eps + self.loga)[:, None]
        z += (v / self.eps + self.logb)[None, :]
        return np.exp(z, out=z)

    def plan(self) -> NDArray:
        return self.plan_with(self.logk, None if self.log_domain else self.K)

    def row_residual(self) -> float:
        if self.log_domain:
            z = self.logk + (self.v / self.eps + self.logb)[None, :]
            rows = np.exp(_logsumexp_rows(z) + self.u / self.eps) * self.a
        else:
            rows = self.g * (self.K @ self.h)
        return float(np.abs(rows - self.a).sum())

    def check_finite(self, where: str):
        arrays = (("u", self.u), ("v", self.v)) if self.log_domain else (("g", self.g), ("h", self.h))
        for name, arr in arrays:
            if not np.all(np.isfinite(arr)):
                raise SolverFailure(f"non-finite {name} after {where}")


def _use_log_domain(flag: Optional[bool], c_inf: float, eps: float) -> bool:
    if flag is not None:
        return flag
    return c_inf / eps > LOG_DOMAIN_RATIO


def _validate_marginals(a, b, shape):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if (a.size, b.size) != tuple(shape):
        raise InvalidInputError(f"marginal sizes {(a.size, b.size)} do not match cost shape {shape}")
    if np.any(a <= 0) or np.any(b <= 0):
        raise InvalidInputError("marginals must be strictly positive")
    return a, b


def _kl_gibbs(plan: NDArray, u, v, transport: float, eps: float) -> float:
    """``KL(plan | a b^T)`` for ``plan_ij = a_i b_j exp((u_i + v_j - C_ij) / eps)``.

    Uses ``sum plan * log(plan / ab) = (u.r + v.c - <C, plan>) / eps`` with
    ``r, c`` the marginals of ``plan``.
    """
    r = plan.sum(axis=1)
    c = plan.sum(axis=0)
    return float((u @ r + v @ c - transport) / eps - r.sum() + 1.0)


# ---------------------------------------------------------------------------
# fixed-cost Sinkhorn
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SinkhornResult:
    plan: TransportPlan
    value: float
    iterations: int
    final_residual: float
    converged: bool


def sinkhorn_fixed_cost(
    cost: ArrayLike,
    a: ArrayLike,
    b: ArrayLike,
    epsilon: float,
    marginal_tol: float = 0.005,
    max_iters: int = 100_000,
    check_every: int = 10,
    log_domain: Optional[bool] = None,
) -> SinkhornResult:
    """Standard Sinkhorn scaling for a fixed cost matrix; value is ``<cost, plan>``.

    Stops once ``||g o (K h) - a||_1 < marginal_tol``; ``check_every`` sets
    how often iterates are screened for non-finite entries.
    """
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    cost = np.asarray(cost, dtype=float)
    if not np.all(np.isfinite(cost)):
        raise InvalidInputError("cost matrix has non-finite entries")
    a, b = _validate_marginals(a, b, cost.shape)
    c_inf = float(np.abs(cost).max())
    sk = _Scaling(cost / -epsilon, a, b, epsilon, _use_log_domain(log_domain, c_inf, epsilon))
    residual = math.inf
    converged = False
    done = 0
    for it in range(1, max_iters + 1):
        res = sk.update_g(stop_below=marginal_tol if it > 1 else -1.0)
        if it > 1 and res < marginal_tol:
            residual, converged = res, True
            break
        sk.update_h()
        done = it
        if it % check_every == 0:
            sk.check_finite(f"iteration {it}")
    if not converged:
        sk.check_finite(f"iteration {done}")
        residual = sk.row_residual()
    plan = sk.plan()
    if not converged:
        logger.warning("Sinkhorn stopped after %d iterations, residual %.3g", done, residual)
    return SinkhornResult(
        TransportPlan(plan, a, b), float(np.vdot(cost, plan)), done, residual, converged
    )


# ---------------------------------------------------------------------------
# HBCD
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HBCDConfig:
    """Parameters of :func:`hbcd_solve`.

    ``w_subiter_tol=None`` picks 1e-7, or 1e-2 once ``max(m, n) >= 1000``.
    ``log_domain=None`` switches automatically on ``||C||_inf / eps``.
    ``eta`` overrides the theoretical stepsize when the rule is
    ``theoretical``; ``inverse_scale`` is the constant ``c`` of the
    ``adaptive_inverse`` rule ``eta = c / sigma``.
    """

    epsilon: float
    marginal_tol: float = 0.005
    freq: int = 10
    max_iters: int = 100_000
    stepsize_rule: StepsizeRule = "adaptive_inverse"
    w_subiter_tol: Optional[float] = None
    w_max_subiters: int = 50
    normalize_u: bool = False
    log_domain: Optional[bool] = None
    w_init: float = 0.5
    eta: Optional[float] = None
    inverse_scale: float = 1.0
    record_trace: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")
        if not self.marginal_tol > 0:
            raise InvalidInputError("marginal_tol must be positive")
        if self.freq < 1:
            raise InvalidInputError("freq must be >= 1")
        if self.stepsize_rule not in STEPSIZE_RULES:
            raise InvalidInputError(f"unknown stepsize rule {self.stepsize_rule!r}")
        if not 0.0 <= self.w_init <= 1.0:
            raise InvalidInputError("w_init must lie in [0, 1]")

    def subiter_tol(self, m: int, n: int) -> float:
        if self.w_subiter_tol is not None:
            return self.w_subiter_tol
        return 1e-2 if max(m, n) >= 1000 else 1e-7


@dataclass(frozen=True)
class EtiotSolution:
    plan: TransportPlan
    w: float
    transport_value: float
    full_objective: float
    iterations: int
    final_residual: float
    converged: bool
    log_domain: bool = False
    w_updates: int = 0
    dual_trace: Optional[list[float]] = None
    w_trace: Optional[list[float]] = field(default=None, repr=False)
    u: Optional[NDArray] = field(default=None, repr=False)
    v: Optional[NDArray] = field(default=None, repr=False)

    @property
    def distance(self) -> float:
        return max(self.transport_value, 0.0) ** 0.5


class _WBlock:
    """Kernel and derivatives of F along ``w`` with the potentials frozen."""

    def __init__(self, cp: CostPair, eps: float):
        self.eps = eps
        self.d = cp.gamma - cp.phi
        self.d2 = self.d * self.d  # only the log-domain path needs it
        self.neg_phi = cp.phi / -eps
        self.neg_d = self.d / -eps

    def logk(self, w: float) -> NDArray:
        out = np.multiply(self.neg_d, w)
        out += self.neg_phi
        return out

    def stats(self, sk: _Scaling, logk: NDArray, K: Optional[NDArray], with_sigma: bool) -> tuple[float, float, float]:
        """``(sum plan, dF/dw, sigma)`` for the current potentials and kernel.

        Along ``w`` the objective is ``eps * sum plan`` plus a constant.
        With an explicit kernel the sums are taken as ``g^T (M o K) h``
        without forming the plan.
        """
        if K is not None and not sk.log_domain:
            g, h = sk.g, sk.h
            mass = float(g @ (K @ h))
            dk = self.d * K
            grad = -float(g @ (dk @ h))
            sigma = math.nan
            if with_sigma:
                dk *= self.d
                sigma = float(g @ (dk @ h)) / self.eps
            return mass, grad, sigma
        plan = sk.plan_with(logk, None)
        grad = -float(np.vdot(self.d, plan))
        sigma = float(np.vdot(self.d2, plan)) / self.eps if with_sigma else math.nan
        return float(plan.sum()), grad, sigma


def _stepsize(rule: str, sigma: float, scale: float) -> float:
    if rule == "adaptive_sigma":
        return sigma / 20 if sigma >= 10 else sigma / 10
    eta = scale / sigma if sigma > 0 else _ETA_CAP
    return min(max(eta, _ETA_FLOOR), _ETA_CAP)


def _w_step(sk: _Scaling, wb: _WBlock, w: float, config: HBCDConfig, eta_theory: float, sub_tol: float):
    """Projected-gradient subiterations on ``w``; returns ``(w, logk, K)`` at the new ``w``."""
    logk = sk.logk
    K = None if sk.log_domain else sk.K
    adaptive = config.stepsize_rule != "theoretical"
    mass, grad, sigma = wb.stats(sk, logk, K, adaptive)
    if not adaptive:
        if grad == 0.0:
            return w, logk, K
        eta = config.eta if config.eta is not None else eta_theory
        w_new = min(max(w - eta * grad, 0.0), 1.0)
        logk = wb.logk(w_new)
        return w_new, logk, None
    for _ in range(config.w_max_subiters):
        if grad == 0.0:
            break
        eta = _stepsize(config.stepsize_rule, sigma, config.inverse_scale)
        for _ in range(_MAX_HALVINGS):
            w_new = min(max(w - eta * grad, 0.0), 1.0)
            if w_new == w:
                break
            logk_new = wb.logk(w_new)
            K_new = None
            if not sk.log_domain:
                with np.errstate(under="ignore"):
                    K_new = np.exp(logk_new)
            stats_new = wb.stats(sk, logk_new, K_new, True)
            if stats_new[0] <= mass * (1 + 1e-15):
                break
            eta *= 0.5
        else:
            w_new = w
        if w_new == w:
            break
        step = abs(w_new - w)
        w, logk, K = w_new, logk_new, K_new
        mass, grad, sigma = stats_new
        if step < sub_tol:
            break
    return w, logk, K


def hbcd_solve(
    cp: CostPair,
    a: ArrayLike,
    b: ArrayLike,
    config: HBCDConfig,
    callback: Optional[Callable[[DualState, int], None]] = None,
) -> EtiotSolution:
    """Solve eTiOT with the HBCD iteration.

    Each iteration performs the two Sinkhorn half-steps; every ``freq``
    iterations ``w`` is updated by projected gradient and the kernel is
    rebuilt. The run stops at the start of the first iteration whose row
    residual ``||g o (K h) - a||_1`` against the current kernel is below
    ``marginal_tol``. ``callback(state, iteration)`` runs after every
    completed iteration.
    """
    a, b = _validate_marginals(a, b, cp.shape)
    eps = config.epsilon
    m, n = cp.shape
    w = float(config.w_init)
    wb = _WBlock(cp, eps)
    sk = _Scaling(wb.logk(w), a, b, eps, _use_log_domain(config.log_domain, cp.c_inf, eps))
    eta_theory = TheoryConstants.compute(cp, eps).eta_theoretical
    sub_tol = config.subiter_tol(m, n)
    trace = [] if config.record_trace else None
    w_trace = [w] if config.record_trace else None
    residual = math.inf
    converged = False
    w_updates = 0
    done = 0
    for it in range(1, config.max_iters + 1):
        # termination is tested against the current kernel, i.e. after any w-update
        res = sk.update_g(normalize=config.normalize_u, stop_below=config.marginal_tol if it > 1 else -1.0)
        if it > 1 and res < config.marginal_tol:
            residual, converged = res, True
            break
        sk.update_h()
        done = it
        if it % config.freq == 0:
            sk.check_finite(f"iteration {it}")
            w, logk, K = _w_step(sk, wb, w, config, eta_theory, sub_tol)
            if not math.isfinite(w):
                raise SolverFailure(f"w became non-finite at iteration {it}")
            sk.set_kernel(logk, K)
            w_updates += 1
            if trace is not None:
                u, v = sk.potentials()
                trace.append(dual_objective(u, v, w, cp, a, b, eps))
                w_trace.append(w)
        if callback is not None:
            u, v = sk.potentials()
            callback(DualState(u.copy(), v.copy(), w, eps, a, b, combine(cp, w)), it)
    if not converged:
        sk.check_finite(f"iteration {done}")
        residual = sk.row_residual()
    plan = sk.plan()
    u, v = sk.potentials()
    transport = w * float(np.vdot(cp.gamma, plan)) + (1 - w) * float(np.vdot(cp.phi, plan))
    kl = _kl_gibbs(plan, u, v, transport, eps)
    if not converged:
        logger.warning("HBCD stopped after %d iterations, residual %.3g", done, residual)
    return EtiotSolution(
        plan=TransportPlan(plan, a, b),
        w=w,
        transport_value=transport,
        full_objective=transport + eps * kl,
        iterations=done,
        final_residual=residual,
        converged=converged,
        log_domain=sk.log_domain,
        w_updates=w_updates,
        dual_trace=trace,
        w_trace=w_trace,
        u=u,
        v=v,
    )


def etiot(alpha: DiscreteMeasure, beta: DiscreteMeasure, config: HBCDConfig, p: float = 2.0) -> EtiotSolution:
    """Convenience wrapper: build the cost pair and run :func:`hbcd_solve`."""
    cp = build_cost_pair(alpha, beta, p)
    return hbcd_solve(cp, alpha.weights, beta.weights, config)


# ---------------------------------------------------------------------------
# eTAOT baseline
# ---------------------------------------------------------------------------


def etaot_cost(alpha: DiscreteMeasure, beta: DiscreteMeasure, omega: float) -> NDArray:
    """``||x - y||^2 + omega (t - s)^2``; note this is not a convex blend."""
    if omega < 0:
        raise InvalidInputError("omega must be nonnegative")
    cp = build_cost_pair(alpha, beta, 2.0)
    return cp.gamma + omega * cp.phi


def etaot_distance(
    alpha,
    beta,
    omega: float,
    epsilon: float,
    marginal_tol: float = 0.005,
    scale_kl: bool = True,
) -> float:
    """eTAOT value ``<C(omega), pi>`` with ``pi`` the entropic plan.

    With ``scale_kl=False`` the KL term enters unweighted, i.e. the
    Sinkhorn kernel uses a unit regularization regardless of ``epsilon``.
    """
    if isinstance(alpha, TimeSeries):
        alpha = lift_to_measure(alpha)
    if isinstance(beta, TimeSeries):
        beta = lift_to_measure(beta)
    cost = etaot_cost(alpha, beta, omega)
    reg = epsilon if scale_kl else 1.0
    res = sinkhorn_fixed_cost(cost, alpha.weights, beta.weights, reg, marginal_tol)
    return res.value
