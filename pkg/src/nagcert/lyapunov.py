"""Discrete Lyapunov energy, iteration threshold, rate bounds and inequality oracles.

The discrete energy of a Nesterov/FISTA state at iteration k >= 1 is

    E(k) = s (k+r)(2k+r) / (1 - mu s) * (f(x_k) - f*)
         + s (k-1)^2 / 2 * ||v_k||^2
         + 1/2 * ||sqrt(s) (k-1) v_k + r (x_k - x*)||^2

with v_k = (x_k - x_{k-1}) / sqrt(s).  For composite problems f is replaced by
Phi = f + g.  Past the threshold K it contracts by the factor
1 + (1 - L s) mu s / 4 per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError, InvalidInputError, InvalidParameterError, SearchOverflowError
from .optimizers import OptimizerState, Trace, run
from .problems import CompositeProblem, Problem, as_composite, proximal_subgradient, smooth_part

Array = np.ndarray

SEARCH_CAP = 10**9
PERSISTENCE = 100


@dataclass(frozen=True)
class EnergyBreakdown:
    potential: float
    kinetic: float
    mixed: float

    @property
    def total(self) -> float:
        return self.potential + self.kinetic + self.mixed


def discrete_lyapunov(problem: Problem, state: OptimizerState, mu: Optional[float] = None) -> EnergyBreakdown:
    """Potential, kinetic and mixed parts of E(k) for ``state`` (requires k >= 1)."""
    mu = problem.mu if mu is None else mu
    s, r, k = state.s, state.r, state.k
    if mu * s >= 1.0:
        raise InvalidParameterError(f"need mu*s < 1, got {mu * s}")
    if k < 1:
        raise InvalidParameterError("the energy needs k >= 1 (v_0 is undefined)")
    v = state.velocity
    x_star = problem.minimizer
    potential = s * (k + r) * (2 * k + r) / (1.0 - mu * s) * problem.gap(state.x)
    kinetic = 0.5 * s * (k - 1) ** 2 * float(v @ v)
    w = math.sqrt(s) * (k - 1) * v + r * (state.x - x_star)
    mixed = 0.5 * float(w @ w)
    return EnergyBreakdown(potential, kinetic, mixed)


def lyapunov_value(problem: Problem, mu: Optional[float] = None):
    """Closure ``state -> E(k)`` suitable for :func:`nagcert.optimizers.run`."""
    return lambda state: discrete_lyapunov(problem, state, mu).total


# ---------------------------------------------------------------------------
# Threshold


class Threshold(NamedTuple):
    K: int
    leading_coefficient: float


def threshold_margin(k: float, L: float, mu: float, s: float, r: float) -> float:
    """Left minus right side of the sufficient condition for contraction at iteration k:

    (1-Ls) mu s/4 (k+r)(2k+r) - (4k+3r+2) + r(1-mu s)(k+r) - mu s (1-Ls)/4 (4k+3r+2).
    """
    c = (1.0 - L * s) * mu * s / 4.0
    return c * (k + r) * (2 * k + r) - (4 * k + 3 * r + 2) + r * (1.0 - mu * s) * (k + r) - c * (4 * k + 3 * r + 2)


def _margin_coefficients(L, mu, s, r):
    c = (1.0 - L * s) * mu * s / 4.0
    a2 = 2.0 * c
    a1 = 3.0 * r * c - 4.0 + r * (1.0 - mu * s) - 4.0 * c
    a0 = c * r * r - (3.0 * r + 2.0) + r * r * (1.0 - mu * s) - c * (3.0 * r + 2.0)
    return a2, a1, a0


def find_threshold(L: float, mu: float, s: float, r: float) -> Threshold:
    """Smallest K from which the contraction condition holds at every later iteration.

    The margin is a quadratic in k with leading coefficient mu s (1 - L s) / 2 > 0,
    so it stays nonnegative beyond its larger root.  The returned K also
    satisfies the condition on the next ``PERSISTENCE`` integers, and is at
    least 1 with K + r > 0 so that E(K) is defined.
    """
    if not (0.0 < mu <= L):
        raise InvalidParameterError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if not (0.0 < s < 1.0 / L):
        raise InvalidParameterError(f"need 0 < s < 1/L, got s={s}")
    a2, a1, a0 = _margin_coefficients(L, mu, s, r)
    if not a2 > 0:
        raise SearchOverflowError("leading coefficient is not positive; no threshold exists")

    disc = a1 * a1 - 4.0 * a2 * a0
    if disc < 0:
        start = 0
    else:
        root = (-a1 + math.sqrt(disc)) / (2.0 * a2)
        # back off a little in case rounding pushed the root estimate up
        start = max(0, math.floor(root) - 2)

    def persists(k):
        return all(threshold_margin(j, L, mu, s, r) >= 0 for j in range(k, k + PERSISTENCE + 1))

    k = start
    while not persists(k):
        k += 1
        if k > SEARCH_CAP:
            raise SearchOverflowError(f"no threshold below {SEARCH_CAP}")
    k = max(k, 1, math.floor(-r) + 1)
    return Threshold(int(k), a2)


# ---------------------------------------------------------------------------
# Bounds


@dataclass(frozen=True)
class RateBound:
    """Linear-rate bounds anchored at E(K)."""

    K: int
    E_K: float
    s: float
    r: float
    L: float
    mu: float

    @property
    def rate_base(self) -> float:
        return 1.0 + (1.0 - self.L * self.s) * self.mu * self.s / 4.0

    @property
    def alpha(self) -> float:
        return self.s * self.L

    def _decay(self, k: int, rate_base: float) -> float:
        """rate_base^-(k-K) / ((k+r)(2k+r)), evaluated in log space so it underflows to 0."""
        if k < self.K:
            raise DomainError(f"bound valid for k >= K={self.K}, got k={k}")
        return math.exp(-(k - self.K) * math.log(rate_base)) / ((k + self.r) * (2 * k + self.r))

    def bound_f(self, k: int) -> float:
        return self.E_K / self.s * self._decay(k, self.rate_base)

    def bound_grad(self, k: int) -> float:
        return 4.0 * self.E_K / (self.s**2 * (1.0 - self.L * self.s)) * self._decay(k, self.rate_base)

    def bound_f_alpha(self, k: int) -> float:
        """Objective bound written with alpha = sL (1/s restored as L/alpha)."""
        a = self.alpha
        q = 1.0 + a * (1.0 - a) / 4.0 * self.mu / self.L
        return self.L * self.E_K / a * self._decay(k, q)

    def bound_grad_alpha(self, k: int) -> float:
        a = self.alpha
        q = 1.0 + a * (1.0 - a) / 4.0 * self.mu / self.L
        return 4.0 * self.L**2 * self.E_K / (a * a * (1.0 - a)) * self._decay(k, q)


def smooth_rate_bound(tb: RateBound, k: int) -> tuple[float, float]:
    """(bound on f(x_k) - f*, bound on ||grad f(y_k)||^2) for Nesterov-1983."""
    return tb.bound_f(k), tb.bound_grad(k)


def composite_rate_bound(tb: RateBound, k: int) -> tuple[float, float]:
    """(bound on Phi(x_k) - Phi*, bound on ||G_s(y_k)||^2) for FISTA."""
    return tb.bound_f(k), tb.bound_grad(k)


# ---------------------------------------------------------------------------
# Inequality oracles (each returns RHS - LHS; nonnegative when the inequality holds)


def check_strong_smooth_inequality(problem: Problem, x: Array, y: Array, s: float) -> float:
    """f(y - s grad f(y)) - f(x) <= <grad f(y), y-x> - mu/2 ||y-x||^2 - (s - L s^2/2) ||grad f(y)||^2."""
    sm = smooth_part(problem)
    gy = sm.grad(y)
    d = y - x
    lhs = sm.f(y - s * gy) - sm.f(x)
    rhs = float(gy @ d) - 0.5 * sm.mu * float(d @ d) - (s - 0.5 * sm.L * s * s) * float(gy @ gy)
    return float(rhs - lhs)


def check_subgradient_lower_bound(problem: Problem, y: Array, s: float) -> float:
    """||G_s(y)||^2 - 2 mu (Phi(y - s G_s(y)) - Phi*)."""
    cp = as_composite(problem)
    G = proximal_subgradient(cp, y, s)
    return float(G @ G) - 2.0 * cp.mu * cp.gap(y - s * G)


def check_fundamental_proximal(problem: Problem, x: Array, y: Array, s: float) -> float:
    """Phi(y - s G) - Phi(x) <= <G, y-x> - s/2 ||G||^2 - mu/2 ||y-x||^2 with G = G_s(y)."""
    cp = as_composite(problem)
    G = proximal_subgradient(cp, y, s)
    d = y - x
    lhs = cp.phi(y - s * G) - cp.phi(x)
    rhs = float(G @ d) - 0.5 * s * float(G @ G) - 0.5 * cp.mu * float(d @ d)
    return float(rhs - lhs)


def strong_convexity_residual(problem: Problem, x: Array, y: Array) -> float:
    """f(y) - f(x) - <grad f(x), y - x> - mu/2 ||y - x||^2 (nonnegative for mu-strongly convex f)."""
    sm = smooth_part(problem)
    d = y - x
    return float(sm.f(y) - sm.f(x) - sm.grad(x) @ d - 0.5 * sm.mu * float(d @ d))


# ---------------------------------------------------------------------------
# Trace-level checks


@dataclass
class ContractionReport:
    passed: bool
    max_violation: float
    worst_k: Optional[int]
    n_checked: int
    rate_base: float
    tol: float


def check_contraction(trace: Trace, tb: RateBound, window: Optional[int] = None, tol: float = 1e-8,
                      rate_base: Optional[float] = None) -> ContractionReport:
    """Check E(k+1) * rate_base <= E(k) * (1 + tol) for k in [K, K + window).

    ``max_violation`` is max(E(k+1) rate_base / E(k) - 1 - tol), clipped below at
    -inf; the check passes when it is <= 0.  Steps with E(k) = E(k+1) = 0 pass.
    """
    rb = tb.rate_base if rate_base is None else rate_base
    ks = np.asarray(trace.k)
    E = np.asarray(trace.lyapunov)
    sel = ks >= tb.K
    if window is not None:
        sel &= ks <= tb.K + window
    ks, E = ks[sel], E[sel]
    if ks.size < 2:
        raise InvalidInputError("need at least two consecutive recorded iterations past K")
    if np.any(np.diff(ks) != 1):
        raise InvalidInputError("contraction check needs consecutive iterations (record_every = 1)")
    if np.any(np.isnan(E)):
        raise InvalidInputError("lyapunov column missing inside the window")
    lhs = E[1:] * rb
    rhs = E[:-1] * (1.0 + tol)
    excess = lhs - rhs
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(excess > 0, excess / np.maximum(np.abs(E[:-1]), np.finfo(float).tiny), 0.0)
    worst = int(np.argmax(rel))
    max_violation = float(rel[worst])
    return ContractionReport(
        passed=bool(np.all(excess <= 0)),
        max_violation=max_violation,
        worst_k=int(ks[worst]) if max_violation > 0 else None,
        n_checked=int(excess.size),
        rate_base=rb,
        tol=tol,
    )


@dataclass
class DominationReport:
    passed: bool
    max_ratio_f: float
    max_ratio_grad: float
    n_checked: int
    tol: float


def check_domination(trace: Trace, tol: float = 1e-8) -> DominationReport:
    """Measured error and gradient columns must stay below the filled bound columns."""
    sel = ~np.isnan(trace.bound_f)
    if not np.any(sel):
        raise InvalidInputError("no bound columns filled")
    f = trace.f_err[sel]
    g = trace.gradient_column()[sel]
    bf = trace.bound_f[sel]
    bg = trace.bound_grad[sel]
    ok = (f <= bf * (1.0 + tol)) & (g <= bg * (1.0 + tol))
    with np.errstate(divide="ignore", invalid="ignore"):
        rf = np.max(np.where(bf > 0, f / bf, np.inf))
        rg = np.max(np.where(bg > 0, g / bg, np.inf))
    return DominationReport(bool(np.all(ok)), float(rf), float(rg), int(sel.sum()), tol)


def fill_bounds(trace: Trace, tb: RateBound) -> None:
    """Populate bound_f / bound_grad for every recorded k >= K (in place)."""
    for i, k in enumerate(trace.k):
        if k >= tb.K:
            trace.bound_f[i] = tb.bound_f(int(k))
            trace.bound_grad[i] = tb.bound_grad(int(k))


@dataclass
class Certification:
    method: str
    threshold: Threshold
    bound: RateBound
    trace: Trace
    domination: DominationReport
    contraction: Optional[ContractionReport]
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.domination.passed and (self.contraction is None or self.contraction.passed)

    def summary(self) -> dict:
        out = {
            "method": self.method,
            "K": self.threshold.K,
            "rate_base": self.bound.rate_base,
            "E_K": self.bound.E_K,
            "bounds_passed": self.domination.passed,
            "max_ratio_f": self.domination.max_ratio_f,
            "max_ratio_grad": self.domination.max_ratio_grad,
        }
        if self.contraction is not None:
            out.update(
                contraction_passed=self.contraction.passed,
                max_violation=self.contraction.max_violation,
                contraction_window=self.contraction.n_checked,
            )
        out["passed"] = self.passed
        return out


def certify(method: str, problem: Problem, s: float, r: float = 2.0, x0: Optional[Array] = None,
            window: int = 2000, max_iter: Optional[int] = None, tol: float = 1e-8,
            record_every: int = 1, shift_start: bool = False) -> Certification:
    """Run ``method`` past the threshold and check the rate bounds and energy contraction.

    Uses the problem's certified (mu, L).  The run extends to ``K + window``
    unless ``max_iter`` is larger.  The contraction check is skipped when
    records are not consecutive.
    """
    if method not in ("nesterov", "nesterov-phase", "fista"):
        raise InvalidParameterError(f"no rate certificate for method {method!r}")
    target = problem if method == "fista" else smooth_part(problem)
    thr = find_threshold(target.L, target.mu, s, r)
    n = thr.K + window if max_iter is None else max(max_iter, thr.K + 1)
    trace = run(method, target, s, r, x0, max_iter=n, record_every=record_every,
                shift_start=shift_start, lyapunov=lyapunov_value(target))
    try:
        E_K = float(trace.lyapunov[trace.index_of(thr.K)])
    except KeyError:
        raise InvalidInputError(f"threshold K={thr.K} is not a recorded iteration; use record_every=1")
    tb = RateBound(thr.K, E_K, s, r, target.L, target.mu)
    fill_bounds(trace, tb)
    dom = check_domination(trace, tol)
    contraction = check_contraction(trace, tb, window, tol) if record_every == 1 else None
    return Certification(method, thr, tb, trace, dom, contraction)
