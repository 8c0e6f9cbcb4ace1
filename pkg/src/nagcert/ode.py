"""Gradient-correction high-resolution ODE, its Lyapunov function and the exponential bound.

    X'' + (3/t) X' + sqrt(s) Hess f(X) X' + (1 + 3 sqrt(s) / (2t)) grad f(X) = 0

The 3/t coefficient is singular at t = 0, so trajectories start at
t0 = sqrt(s) (by default) with X(t0) = x0 and X'(t0) = 0, and are integrated
with fixed-step classical Runge-Kutta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DivergenceError, InsufficientDataError, InvalidParameterError, SingularTimeError
from .problems import Problem, smooth_part

Array = np.ndarray

BLOWUP_FACTOR = 1e10


@dataclass(frozen=True, eq=False)
class ContinuousState:
    t: float
    X: Array
    V: Array


def ode_rhs(problem: Problem, state: ContinuousState, s: float) -> Array:
    """Acceleration X'' = -(3/t) V - sqrt(s) Hess f(X) V - (1 + 3 sqrt(s)/(2t)) grad f(X)."""
    t = state.t
    if not t > 0:
        raise SingularTimeError(f"the ODE is singular at t <= 0 (t={t})")
    sm = smooth_part(problem)
    rs = math.sqrt(s)
    return -(3.0 / t) * state.V - rs * sm.hessian_vec(state.X, state.V) - (1.0 + 1.5 * rs / t) * sm.grad(state.X)


def continuous_lyapunov(problem: Problem, state: ContinuousState, s: float) -> float:
    """E(t) = 2t(t+sqrt(s))(f(X)-f*) + t^2/2 ||V||^2 + 1/2 ||t V + 2(X-x*) + t sqrt(s) grad f(X)||^2."""
    t = state.t
    if not t > 0:
        raise SingularTimeError(f"the Lyapunov function needs t > 0 (t={t})")
    sm = smooth_part(problem)
    rs = math.sqrt(s)
    V = state.V
    w = t * V + 2.0 * (state.X - sm.minimizer) + t * rs * sm.grad(state.X)
    return 2.0 * t * (t + rs) * sm.gap(state.X) + 0.5 * t * t * float(V @ V) + 0.5 * float(w @ w)


def threshold_time(mu: float, s: float) -> float:
    """T = 4 / (mu sqrt(s))."""
    return 4.0 / (mu * math.sqrt(s))


def decay_rate(mu: float, s: float) -> float:
    return 0.25 * mu * math.sqrt(s)


@dataclass
class ContinuousTrace:
    t: Array
    f_err: Array
    lyapunov: Array
    theorem3_bound: Array
    T: float
    E_T: float
    t_T: float
    X_final: Array
    s: float
    mu: float

    def __len__(self) -> int:
        return int(self.t.size)

    def rows(self):
        return zip(self.t, self.f_err, self.lyapunov, self.theorem3_bound)


def stable_dt(L: float, s: float, t0: float) -> float:
    """Largest step admitted by the explicit RK4 stability heuristic."""
    return min(t0 / 10.0, 0.5 / math.sqrt(L) * min(1.0, math.sqrt(s)))


def integrate(problem: Problem, s: float, x0, t0: Optional[float] = None, t_end: float = 100.0,
              dt: float = 0.01, sample_every: int = 1, check_step: bool = True) -> ContinuousTrace:
    """RK4 from (t0, x0, V = 0) to ``t_end``.

    The step is adjusted down to (t_end - t0)/n so the grid lands on t_end.
    Samples are taken every ``sample_every`` steps and at the final time.  The
    exponential-bound column is filled for samples at or past T = 4/(mu sqrt(s)),
    anchored at the first such sample.
    """
    sm = smooth_part(problem)
    rs = math.sqrt(s)
    t0 = rs if t0 is None else float(t0)
    if not 0 < t0 < t_end:
        raise InvalidParameterError(f"need 0 < t0 < t_end, got t0={t0}, t_end={t_end}")
    if not dt > 0 or sample_every < 1:
        raise InvalidParameterError("dt and sample_every must be positive")
    if check_step and dt > stable_dt(sm.L, s, t0) * (1 + 1e-12):
        raise InvalidParameterError(f"dt={dt} exceeds the stability limit {stable_dt(sm.L, s, t0):.6g}")

    n = max(1, math.ceil((t_end - t0) / dt - 1e-9))
    h = (t_end - t0) / n
    X = np.array(x0, dtype=float).ravel()
    V = np.zeros_like(X)

    def acc(t, x, v):
        return ode_rhs(sm, ContinuousState(t, x, v), s)

    n_samples = n // sample_every + 1 + (1 if n % sample_every else 0)
    ts = np.empty(n_samples)
    fe = np.empty(n_samples)
    ly = np.empty(n_samples)
    f_ref = max(sm.gap(X), np.finfo(float).tiny)
    j = 0
    for i in range(n + 1):
        t = t0 + i * h
        if i % sample_every == 0 or i == n:
            st = ContinuousState(t, X, V)
            ts[j] = t
            fe[j] = sm.gap(X)
            ly[j] = continuous_lyapunov(sm, st, s)
            if not math.isfinite(fe[j]) or fe[j] > BLOWUP_FACTOR * f_ref:
                raise DivergenceError(
                    f"integrator blew up at t={t:.6g}: f_err={fe[j]:.3g} vs initial {f_ref:.3g} "
                    f"(dt={h:.3g}, L={sm.L:.3g})"
                )
            j += 1
        if i == n:
            break
        k1x, k1v = V, acc(t, X, V)
        k2x, k2v = V + 0.5 * h * k1v, acc(t + 0.5 * h, X + 0.5 * h * k1x, V + 0.5 * h * k1v)
        k3x, k3v = V + 0.5 * h * k2v, acc(t + 0.5 * h, X + 0.5 * h * k2x, V + 0.5 * h * k2v)
        k4x, k4v = V + h * k3v, acc(t + h, X + h * k3x, V + h * k3v)
        X = X + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        V = V + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)

    T = threshold_time(sm.mu, s)
    bound = np.full(n_samples, np.nan)
    past = np.nonzero(ts >= T)[0]
    if past.size:
        i_T = past[0]
        t_T, E_T = float(ts[i_T]), float(ly[i_T])
        tt = ts[past]
        bound[past] = E_T / (2.0 * tt * (tt + rs)) * np.exp(-decay_rate(sm.mu, s) * (tt - t_T))
    else:
        t_T, E_T = math.nan, math.nan
    return ContinuousTrace(ts, fe, ly, bound, T, E_T, t_T, X, s, sm.mu)


@dataclass
class OdeRateReport:
    bound_passed: bool
    max_ratio: float
    lyapunov_passed: bool
    max_lyapunov_increase: float
    decay_passed: bool
    max_decay_ratio: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.bound_passed and self.lyapunov_passed and self.decay_passed


def ode_rate_check(trace: ContinuousTrace, tol: float = 1e-3, lyapunov_tol: float = 1e-6) -> OdeRateReport:
    """Check the exponential bound and energy decay on every sample with t >= T.

    * f_err(t) <= bound(t) (1 + tol);
    * E(t_{i+1}) <= E(t_i) (1 + lyapunov_tol) between consecutive samples;
    * E(t) <= E(t_T) exp(-(mu sqrt(s)/4)(t - t_T)) (1 + tol).
    """
    sel = np.nonzero(trace.t >= trace.T)[0]
    if sel.size < 2:
        raise InsufficientDataError(
            f"trace ends at t={trace.t[-1]:.6g} but the bound needs samples past T={trace.T:.6g}"
        )
    f = trace.f_err[sel]
    b = trace.theorem3_bound[sel]
    E = trace.lyapunov[sel]
    tt = trace.t[sel]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(b > 0, f / b, np.where(f > 0, np.inf, 0.0))
        step = np.where(E[:-1] > 0, (E[1:] - E[:-1]) / E[:-1], np.where(E[1:] > 0, np.inf, 0.0))
        envelope = E[0] * np.exp(-decay_rate(trace.mu, trace.s) * (tt - tt[0]))
        decay = np.where(envelope > 0, E / envelope, np.where(E > 0, np.inf, 0.0))
    return OdeRateReport(
        bound_passed=bool(np.all(f <= b * (1.0 + tol))),
        max_ratio=float(ratio.max()),
        lyapunov_passed=bool(np.all(E[1:] <= E[:-1] * (1.0 + lyapunov_tol))),
        max_lyapunov_increase=float(step.max()),
        decay_passed=bool(np.all(E <= envelope * (1.0 + tol))),
        max_decay_ratio=float(decay.max()),
        n_checked=int(sel.size),
    )


def richardson_ratio(problem: Problem, s: float, x0, t0: float, t_end: float, dt: float) -> float:
    """||X_h - X_{h/2}|| / ||X_{h/2} - X_{h/4}|| at t_end; about 16 for a fourth-order method."""
    finals = [integrate(problem, s, x0, t0, t_end, dt / m, sample_every=10**9).X_final for m in (1, 2, 4)]
    num = float(np.linalg.norm(finals[0] - finals[1]))
    den = float(np.linalg.norm(finals[1] - finals[2]))
    if den == 0.0:
        raise InsufficientDataError("step refinement produced identical endpoints")
    return num / den
