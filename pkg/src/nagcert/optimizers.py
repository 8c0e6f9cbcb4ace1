"""Gradient descent, Nesterov-1983 (two-sequence and phase-space forms) and FISTA.

Indexing follows the classical schedule: k starts at 0 with y_0 = x_0, and the
extrapolated point produced at iteration k is

    y_k = x_k + (k - 1) / (k + r) * (x_k - x_{k-1}).

The phase-space form tracks the velocity v_k = (x_k - x_{k-1}) / sqrt(s)
instead of x_{k-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import InvalidParameterError, MomentumSingularityError
from .problems import (
    CompositeProblem,
    Problem,
    SmoothProblem,
    StepSize,
    _step_value,
    proximal_step,
    smooth_part,
)

Array = np.ndarray

METHODS = ("gd", "nesterov", "nesterov-phase", "fista")


def momentum(k: int, r: float) -> float:
    """Coefficient (k - 1)/(k + r) used to build y_k."""
    denom = k + r
    if denom == 0:
        raise MomentumSingularityError(k, r)
    return (k - 1) / denom


def is_negative_integer(r: float) -> bool:
    return r < 0 and float(r).is_integer()


def shifted_start(r: float) -> int:
    """First iteration index that keeps k + r >= 1 for a negative integer r."""
    return int(-r) + 1 if is_negative_integer(r) else 0


@dataclass(frozen=True, eq=False)
class OptimizerState:
    k: int
    x: Array
    x_prev: Array
    y: Array
    s: float
    r: float = 2.0
    v: Optional[Array] = None

    @classmethod
    def initial(cls, x0, s: float, r: float = 2.0, k0: int = 0) -> "OptimizerState":
        x0 = np.array(x0, dtype=float)
        return cls(k=k0, x=x0, x_prev=x0.copy(), y=x0.copy(), s=float(s), r=float(r))

    @property
    def velocity(self) -> Array:
        if self.v is not None:
            return self.v
        return (self.x - self.x_prev) / math.sqrt(self.s)


@dataclass(frozen=True)
class TraceRecord:
    k: int
    f_err: float
    grad_sq: Optional[float] = None
    prox_grad_sq: Optional[float] = None
    lyapunov: Optional[float] = None
    bound_f: Optional[float] = None
    bound_grad: Optional[float] = None


TRACE_COLUMNS = ("f_err", "grad_sq", "prox_grad_sq", "lyapunov", "bound_f", "bound_grad")


@dataclass
class Trace:
    """Column-oriented trace; missing quantities are NaN.

    Indexing and iteration yield :class:`TraceRecord` rows with ``None`` in
    place of NaN.
    """

    method: str
    k: Array
    f_err: Array
    grad_sq: Array
    prox_grad_sq: Array
    lyapunov: Array
    bound_f: Array
    bound_grad: Array

    @classmethod
    def empty(cls, method: str, n: int = 0) -> "Trace":
        nan = lambda: np.full(n, np.nan)  # noqa: E731
        return cls(method, np.zeros(n, dtype=np.int64), *(nan() for _ in TRACE_COLUMNS))

    def __len__(self) -> int:
        return int(self.k.size)

    def __getitem__(self, i: int) -> TraceRecord:
        vals = [getattr(self, c)[i] for c in TRACE_COLUMNS]
        return TraceRecord(int(self.k[i]), *(None if np.isnan(v) else float(v) for v in vals))

    def __iter__(self) -> Iterator[TraceRecord]:
        return (self[i] for i in range(len(self)))

    def index_of(self, k: int) -> int:
        idx = np.searchsorted(self.k, k)
        if idx >= len(self) or self.k[idx] != k:
            raise KeyError(f"iteration {k} not recorded")
        return int(idx)

    def gradient_column(self) -> Array:
        """grad_sq for smooth runs, prox_grad_sq for composite runs."""
        return self.prox_grad_sq if self.method == "fista" else self.grad_sq


# ---------------------------------------------------------------------------
# Single steps


def gd_step(problem: Problem, x: Array, s) -> Array:
    """x - s grad f(x)."""
    return x - _step_value(s) * problem.grad(x)


def _advance(state: OptimizerState, x_new: Array, v_new: Optional[Array] = None) -> OptimizerState:
    k1 = state.k + 1
    y_new = x_new + momentum(k1, state.r) * (x_new - state.x)
    return replace(state, k=k1, x=x_new, x_prev=state.x, y=y_new, v=v_new)


def nesterov_step(problem: Problem, state: OptimizerState) -> OptimizerState:
    """x_{k+1} = y_k - s grad f(y_k); y_{k+1} = x_{k+1} + k/(k+1+r) (x_{k+1} - x_k)."""
    return _advance(state, state.y - state.s * problem.grad(state.y))


def nesterov_phase_step(problem: Problem, state: OptimizerState) -> OptimizerState:
    """Implicit-velocity update of (x_k, v_k).

    y_k      = x_k + (k-1)/(k+r) sqrt(s) v_k
    v_{k+1}  = v_k - (r+1)/(k+r) v_k - sqrt(s) grad f(y_k)
    x_{k+1}  = x_k + sqrt(s) v_{k+1}
    """
    if state.k < 1:
        raise InvalidParameterError("phase-space step needs k >= 1 (v_0 is undefined)")
    k, r = state.k, state.r
    rs = math.sqrt(state.s)
    v = state.velocity
    y = state.x + momentum(k, r) * rs * v
    v_new = v - ((r + 1) / (k + r)) * v - rs * problem.grad(y)
    x_new = state.x + rs * v_new
    y_new = x_new + momentum(k + 1, r) * rs * v_new
    return replace(state, k=k + 1, x=x_new, x_prev=state.x, y=y_new, v=v_new)


def fista_step(problem: CompositeProblem, state: OptimizerState) -> OptimizerState:
    """Nesterov momentum with the gradient step replaced by the s-proximal step."""
    return _advance(state, proximal_step(problem, state.y, state.s))


def phase_residual(problem: Problem, before: OptimizerState, after: OptimizerState) -> float:
    """Scaled residual of (k+r) v_{k+1} - (k-1) v_k + (k+r) sqrt(s) grad f(y_k)."""
    k, r, rs = before.k, before.r, math.sqrt(before.s)
    g = problem.grad(before.y)
    lhs = (k + r) * after.velocity - (k - 1) * before.velocity
    rhs = -(k + r) * rs * g
    scale = 1.0 + np.linalg.norm(lhs) + np.linalg.norm(rhs)
    return float(np.linalg.norm(lhs - rhs) / scale)


# ---------------------------------------------------------------------------
# Runner


def default_record_every(max_iter: int) -> int:
    return 1 if max_iter <= 10**5 else 10


def validate_r(r: float, k0: int = 0) -> None:
    """Reject r when some executed index would hit k + r = 0."""
    if is_negative_integer(r) and k0 + r < 1:
        raise MomentumSingularityError(int(-r), r)


def run(method: str, problem: Problem, s, r: float = 2.0, x0: Optional[Array] = None,
        max_iter: int = 1000, record_every: Optional[int] = None, *,
        shift_start: bool = False,
        lyapunov: Optional[Callable[[OptimizerState], float]] = None) -> Trace:
    """Run ``method`` for ``max_iter`` iterations and return its trace.

    Records are taken at k = 0, record_every, 2*record_every, ... and at
    k = max_iter.  ``f_err`` is the objective error at x_k (Phi for FISTA);
    ``grad_sq`` is ||grad f(y_k)||^2 for smooth methods and ``prox_grad_sq`` is
    ||G_s(y_k)||^2 for FISTA.  ``lyapunov`` (optional) is evaluated on every
    recorded state with k >= 1.

    With ``shift_start`` a negative integer ``r`` starts the schedule at
    k = -r + 1 so that k + r never vanishes; otherwise such ``r`` is rejected.
    """
    if method not in METHODS:
        raise InvalidParameterError(f"unknown method {method!r}; choose from {METHODS}")
    if max_iter < 1:
        raise InvalidParameterError("max_iter must be >= 1")
    if record_every is None:
        record_every = default_record_every(max_iter)
    if record_every < 1:
        raise InvalidParameterError("record_every must be >= 1")
    step = s if isinstance(s, StepSize) else StepSize(float(s), problem.L)
    s = step.s
    k0 = shifted_start(r) if shift_start else 0
    validate_r(r, k0)

    if method == "fista":
        if not isinstance(problem, CompositeProblem):
            raise InvalidParameterError("fista needs a CompositeProblem")
        target = problem
    else:
        target = smooth_part(problem)

    x0 = np.zeros(problem.dimension) if x0 is None else np.asarray(x0, dtype=float)
    state = OptimizerState.initial(x0, s, r, k0)

    n_rec = -(-max_iter // record_every) + 1
    trace = Trace.empty(method, n_rec)
    grad_col = trace.prox_grad_sq if method == "fista" else trace.grad_sq
    gap = target.gap
    grad = target.grad
    slot = 0

    for it in range(max_iter + 1):
        record = it % record_every == 0 or it == max_iter
        # gradient (or prox step) at y_k is shared between the record and the step
        if method == "fista":
            x_next = proximal_step(target, state.y, s)
            gvec = (state.y - x_next) / s
        else:
            gvec = grad(state.y)
        if record:
            trace.k[slot] = state.k
            trace.f_err[slot] = gap(state.x)
            grad_col[slot] = float(gvec @ gvec)
            if lyapunov is not None and state.k >= 1:
                trace.lyapunov[slot] = lyapunov(state)
            slot += 1
        if it == max_iter:
            break
        if method == "gd":
            x_new = state.x - s * gvec
            state = replace(state, k=state.k + 1, x=x_new, x_prev=state.x, y=x_new)
        elif method == "fista":
            state = _advance(state, x_next)
        elif method == "nesterov-phase" and state.k > k0:
            state = nesterov_phase_step(target, state)
        else:
            state = _advance(state, state.y - s * gvec)
    return trace


def iterates(method: str, problem: Problem, s: float, r: float = 2.0, x0: Optional[Array] = None,
             n_steps: int = 100, shift_start: bool = False) -> Iterator[OptimizerState]:
    """Yield the states x_0, x_1, ..., x_{n_steps} of a method (for iterate-level comparisons)."""
    k0 = shifted_start(r) if shift_start else 0
    validate_r(r, k0)
    x0 = np.zeros(problem.dimension) if x0 is None else np.asarray(x0, dtype=float)
    state = OptimizerState.initial(x0, s, r, k0)
    yield state
    for _ in range(n_steps):
        if method == "gd":
            x_new = gd_step(problem, state.x, s)
            state = replace(state, k=state.k + 1, x=x_new, x_prev=state.x, y=x_new)
        elif method == "fista":
            state = fista_step(problem, state)
        elif method == "nesterov-phase" and state.k > k0:
            state = nesterov_phase_step(smooth_part(problem), state)
        elif method in METHODS:
            state = nesterov_step(smooth_part(problem), state)
        else:
            raise InvalidParameterError(f"unknown method {method!r}")
        yield state
