"""Objective functions and their oracles.

Two problem families are provided:

* :class:`SmoothProblem` -- a mu-strongly convex, L-smooth ``f`` with value,
  gradient and (optionally) Hessian-vector oracles.
* :class:`CompositeProblem` -- ``Phi = f + g`` with a convex ``g`` given through
  its proximal map.

Constructors cover diagonal quadratics, a small 1-D deblurring LASSO with a
ridge term, and a log-sum-exp plus ridge objective with a continuous Hessian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import InvalidParameterError, InvalidProblemError, NoConvergenceError

Array = np.ndarray

# Knuth's MMIX multiplier/increment for a full-period LCG modulo 2**64.
LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1

DEFAULT_MAX_ITER = 10**7


@dataclass(frozen=True, eq=False)
class SmoothProblem:
    """A function in the class of mu-strongly convex functions with L-Lipschitz gradient.

    ``x_star`` may be left as ``None``; the minimizer is then computed on first
    access to :attr:`minimizer` by long gradient descent.  ``gap_fn`` optionally
    evaluates ``f(x) - f(x*)`` without catastrophic cancellation; when absent the
    plain difference of values is used.
    """

    dimension: int
    f: Callable[[Array], float]
    grad: Callable[[Array], Array]
    mu: float
    L: float
    hvp: Optional[Callable[[Array, Array], Array]] = None
    x_star: Optional[Array] = None
    gap_fn: Optional[Callable[[Array], float]] = None
    name: str = "smooth"

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidProblemError(f"dimension must be positive, got {self.dimension}")
        if not (0.0 < self.mu <= self.L) or not math.isfinite(self.L):
            raise InvalidProblemError(f"need 0 < mu <= L < inf, got mu={self.mu}, L={self.L}")

    @cached_property
    def minimizer(self) -> Array:
        if self.x_star is not None:
            return np.array(self.x_star, dtype=float)
        return minimizer_oracle(self)

    @cached_property
    def f_star(self) -> float:
        return float(self.f(self.minimizer))

    def gap(self, x: Array) -> float:
        """Objective error f(x) - f(x*)."""
        if self.gap_fn is not None:
            return float(self.gap_fn(x))
        return float(self.f(x)) - self.f_star

    def hessian_vec(self, x: Array, v: Array) -> Array:
        """Hessian-vector product, falling back to a central difference of gradients."""
        if self.hvp is not None:
            return self.hvp(x, v)
        vn = float(np.linalg.norm(v))
        if vn == 0.0:
            return np.zeros_like(v, dtype=float)
        h = 1e-6 * (1.0 + float(np.linalg.norm(x))) / (1.0 + vn)
        return (self.grad(x + h * v) - self.grad(x - h * v)) / (2.0 * h)


@dataclass(frozen=True, eq=False)
class CompositeProblem:
    """``Phi = f + g`` with ``prox(z, s) = argmin_y ||y - z||^2 / (2 s) + g(y)``.

    ``l1_weight`` is set when ``g = l1_weight * ||.||_1``; checks that rely on
    the sign/threshold structure of the soft-threshold use it.
    """

    smooth: SmoothProblem
    g: Callable[[Array], float]
    prox: Callable[[Array, float], Array]
    x_star: Optional[Array] = None
    gap_fn: Optional[Callable[[Array], float]] = None
    l1_weight: Optional[float] = None
    name: str = "composite"
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.smooth.dimension

    @property
    def mu(self) -> float:
        return self.smooth.mu

    @property
    def L(self) -> float:
        return self.smooth.L

    def f(self, x: Array) -> float:
        return self.smooth.f(x)

    def grad(self, x: Array) -> Array:
        return self.smooth.grad(x)

    def phi(self, x: Array) -> float:
        return float(self.smooth.f(x)) + float(self.g(x))

    @cached_property
    def minimizer(self) -> Array:
        if self.x_star is not None:
            return np.array(self.x_star, dtype=float)
        return minimizer_oracle(self)

    @cached_property
    def phi_star(self) -> float:
        return self.phi(self.minimizer)

    def gap(self, x: Array) -> float:
        """Objective error Phi(x) - Phi(x*)."""
        if self.gap_fn is not None:
            return float(self.gap_fn(x))
        return self.phi(x) - self.phi_star


Problem = Union[SmoothProblem, CompositeProblem]


@dataclass(frozen=True)
class StepSize:
    """A step size validated against the smoothness constant: 0 < s < 1/L."""

    s: float
    L: float

    def __post_init__(self):
        if not (self.s > 0.0 and self.s * self.L < 1.0):
            raise InvalidParameterError(
                f"step size must satisfy 0 < s < 1/L = {1.0 / self.L:.6g}, got s={self.s}"
            )

    @property
    def alpha(self) -> float:
        """Nondimensional step alpha = s L, always in (0, 1)."""
        return self.s * self.L

    @classmethod
    def fraction_of_max(cls, L: float, factor: float) -> "StepSize":
        return cls(factor / L, L)


# ---------------------------------------------------------------------------
# Deterministic noise


def lcg_uniform(seed: int, n: int) -> Array:
    """``n`` uniforms in [0, 1) from the 64-bit LCG ``x <- a x + c mod 2**64``.

    The top 53 bits of each state become the mantissa of the sample.
    """
    state = int(seed) & _MASK64
    out = np.empty(n)
    for i in range(n):
        state = (LCG_MULTIPLIER * state + LCG_INCREMENT) & _MASK64
        out[i] = (state >> 11) * (1.0 / 9007199254740992.0)
    return out


def lcg_normal(seed: int, n: int) -> Array:
    """Approximately standard normal samples: sum of 12 LCG uniforms minus 6."""
    u = lcg_uniform(seed, 12 * n).reshape(n, 12)
    return u.sum(axis=1) - 6.0


def spike_signal(n: int, n_spikes: int = 6, seed: int = 7) -> Array:
    """A sparse test signal with ``n_spikes`` nonzero entries at LCG-chosen positions."""
    if n < 1:
        raise InvalidProblemError("signal length must be positive")
    u = lcg_uniform(seed, 2 * n_spikes)
    x = np.zeros(n)
    for pos, amp in zip(u[:n_spikes], u[n_spikes:]):
        x[int(pos * n)] = (2.0 * amp - 1.0) + math.copysign(0.5, amp - 0.5)
    return x


# ---------------------------------------------------------------------------
# Constructors


def make_quadratic(hessian_diagonal: Sequence[float], shift: Optional[Sequence[float]] = None) -> SmoothProblem:
    """f(x) = sum_i c_i (x_i - shift_i)^2 with mu = 2 min c, L = 2 max c, x* = shift.

    Note the Hessian is 2 diag(c), so ``hessian_diagonal=(0.5,)`` gives f = x^2 / 2.
    """
    c = np.asarray(hessian_diagonal, dtype=float).ravel()
    if c.size == 0 or not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise InvalidProblemError(f"hessian diagonal entries must be positive and finite, got {c}")
    shift_arr = np.zeros_like(c) if shift is None else np.asarray(shift, dtype=float).ravel()
    if shift_arr.shape != c.shape:
        raise InvalidProblemError("shift must match the diagonal length")
    two_c = 2.0 * c

    def f(x):
        d = x - shift_arr
        return float(np.dot(c, d * d))

    def grad(x):
        return two_c * (x - shift_arr)

    def hvp(x, v):
        return two_c * v

    return SmoothProblem(
        dimension=c.size,
        f=f,
        grad=grad,
        mu=float(two_c.min()),
        L=float(two_c.max()),
        hvp=hvp,
        x_star=shift_arr.copy(),
        gap_fn=f,
        name="quadratic",
    )


def circulant_blur(kernel: Sequence[float], n: int) -> Array:
    """Dense circular-convolution matrix of size n x n, kernel centred on the diagonal."""
    k = np.asarray(kernel, dtype=float).ravel()
    if k.size == 0 or n < 1:
        raise InvalidProblemError("kernel and signal must be non-empty")
    if k.size > n:
        raise InvalidProblemError("kernel longer than the signal")
    offsets = np.arange(k.size) - k.size // 2
    A = np.zeros((n, n))
    rows = np.arange(n)
    for w, off in zip(k, offsets):
        A[rows, (rows - off) % n] += w
    return A


def power_iteration(matvec: Callable[[Array], Array], dim: int, max_iter: int = 200,
                    rtol: float = 1e-8, seed: int = 12345) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite operator."""
    v = np.ones(dim) + 0.1 * (lcg_uniform(seed, dim) - 0.5)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        lam_new = float(np.dot(v, w))
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


def make_lasso_deblur(kernel: Sequence[float], true_signal: Sequence[float], noise_seed: int,
                      lam: float, ridge: float, noise_std: float = 1e-2,
                      lipschitz_inflation: float = 1.01) -> CompositeProblem:
    """Ridge-regularised 1-D deblurring LASSO.

    f(x) = 0.5 ||A x - b||^2 + 0.5 ridge ||x||^2,  g(x) = lam ||x||_1,
    where A is circular convolution with ``kernel`` and
    b = A true_signal + noise_std * (LCG normal noise from ``noise_seed``).

    The certified strong-convexity modulus is ``ridge`` alone; L is the
    power-iteration estimate of sigma_max(A)^2 + ridge, inflated by
    ``lipschitz_inflation``.  Both the smooth part and the composite problem
    carry their exact minimizers.
    """
    signal = np.asarray(true_signal, dtype=float).ravel()
    kern = np.asarray(kernel, dtype=float).ravel()
    if signal.size == 0 or kern.size == 0:
        raise InvalidProblemError("kernel and signal must be non-empty")
    if not ridge > 0:
        raise InvalidProblemError(f"ridge must be positive, got {ridge}")
    if lam < 0:
        raise InvalidProblemError(f"l1 weight must be nonnegative, got {lam}")
    n = signal.size
    A = circulant_blur(kern, n)
    b = A @ signal + noise_std * lcg_normal(noise_seed, n)
    H = A.T @ A + ridge * np.eye(n)
    Atb = A.T @ b

    sigma_sq = power_iteration(lambda v: A.T @ (A @ v), n)
    L = lipschitz_inflation * (sigma_sq + ridge)

    def f(x):
        res = A @ x - b
        return 0.5 * float(res @ res) + 0.5 * ridge * float(x @ x)

    def grad(x):
        return H @ x - Atb

    def hvp(x, v):
        return H @ v

    x_ls = np.linalg.solve(H, Atb)

    def smooth_gap(x):
        d = x - x_ls
        return 0.5 * float(d @ (H @ d))

    smooth = SmoothProblem(n, f, grad, mu=float(ridge), L=float(L), hvp=hvp, x_star=x_ls,
                           gap_fn=smooth_gap, name="lasso-deblur-smooth")

    def g(x):
        return lam * float(np.sum(np.abs(x)))

    def prox(z, s):
        return soft_threshold(z, lam * s)

    if lam == 0.0:
        x_star = x_ls
    else:
        provisional = CompositeProblem(smooth, g, prox, l1_weight=float(lam))
        x_star = _polish_l1(H, Atb, lam, minimizer_oracle(provisional))
    grad_star = grad(x_star)
    abs_star = np.abs(x_star)

    def gap(x):
        d = x - x_star
        return float(grad_star @ d) + 0.5 * float(d @ (H @ d)) + lam * float(np.sum(np.abs(x) - abs_star))

    return CompositeProblem(smooth, g, prox, x_star=x_star, gap_fn=gap, l1_weight=float(lam),
                            name="lasso-deblur", meta={"blur": A, "data": b, "hessian": H})


def _polish_l1(H: Array, Atb: Array, lam: float, x: Array) -> Array:
    """Exact LASSO solution on the support and sign pattern of ``x``, if it is KKT-consistent.

    Falls back to ``x`` when the re-solved point changes sign on the support or
    violates the off-support subgradient bound by more than ``x`` does.
    """
    support = x != 0.0
    if not np.any(support):
        return x
    sgn = np.sign(x[support])
    cand = np.zeros_like(x)
    cand[support] = np.linalg.solve(H[np.ix_(support, support)], Atb[support] - lam * sgn)
    if np.any(np.sign(cand[support]) != sgn):
        return x

    def kkt(z):
        gz = H @ z - Atb
        on = np.abs(gz[support] + lam * np.sign(z[support]))
        off = np.maximum(np.abs(gz[~support]) - lam, 0.0)
        return max(on.max(initial=0.0), off.max(initial=0.0))

    return cand if kkt(cand) <= kkt(x) else x


def make_logsumexp_ridge(A: Array, b: Array, ridge: float) -> SmoothProblem:
    """f(x) = log sum_i exp(a_i . x + b_i) + 0.5 ridge ||x||^2.

    mu = ridge and L = ridge + ||A||_2^2 / 2 (the softmax covariance has
    spectral norm at most 1/2).  The minimizer is found numerically.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != b.size:
        raise InvalidProblemError("A must be (m, d) with len(b) == m")
    if not ridge > 0:
        raise InvalidProblemError("ridge must be positive")
    L = ridge + 0.5 * float(np.linalg.norm(A, 2)) ** 2

    def _softmax(x):
        z = A @ x + b
        zmax = z.max()
        w = np.exp(z - zmax)
        tot = w.sum()
        return z, zmax, w / tot, tot

    def f(x):
        _, zmax, _, tot = _softmax(x)
        return zmax + math.log(tot) + 0.5 * ridge * float(x @ x)

    def grad(x):
        _, _, p, _ = _softmax(x)
        return A.T @ p + ridge * x

    def hvp(x, v):
        _, _, p, _ = _softmax(x)
        Av = A @ v
        return A.T @ (p * Av - p * float(p @ Av)) + ridge * v

    return SmoothProblem(A.shape[1], f, grad, mu=float(ridge), L=L, hvp=hvp, name="logsumexp-ridge")


def as_composite(problem: Problem) -> CompositeProblem:
    """View a smooth problem as ``f + 0``; composite problems pass through unchanged."""
    if isinstance(problem, CompositeProblem):
        return problem
    return CompositeProblem(
        problem,
        g=lambda x: 0.0,
        prox=lambda z, s: np.array(z, dtype=float, copy=True),
        x_star=problem.minimizer,
        gap_fn=problem.gap,
        l1_weight=0.0,
        name=problem.name,
    )


def smooth_part(problem: Problem) -> SmoothProblem:
    return problem.smooth if isinstance(problem, CompositeProblem) else problem


# ---------------------------------------------------------------------------
# Proximal maps


def soft_threshold(z: Array, t: float) -> Array:
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _step_value(s) -> float:
    return float(s.s) if isinstance(s, StepSize) else float(s)


def prox_g(problem: CompositeProblem, z: Array, s: float) -> Array:
    """argmin_y ||y - z||^2 / (2 s) + g(y)."""
    s = _step_value(s)
    if not s > 0:
        raise InvalidParameterError(f"prox parameter must be positive, got s={s}")
    return problem.prox(np.asarray(z, dtype=float), s)


def proximal_step(problem: Problem, x: Array, s) -> Array:
    """One proximal-gradient step ``prox_g(x - s grad f(x), s)``.

    For a smooth problem this is the plain gradient step.
    """
    s = _step_value(s)
    if isinstance(problem, SmoothProblem):
        return x - s * problem.grad(x)
    return prox_g(problem, x - s * problem.grad(x), s)


def proximal_subgradient(problem: Problem, x: Array, s) -> Array:
    """(x - proximal_step(x)) / s; equals grad f(x) when g is zero."""
    s = _step_value(s)
    if isinstance(problem, SmoothProblem):
        return problem.grad(x)
    return (x - proximal_step(problem, x, s)) / s


# ---------------------------------------------------------------------------
# Minimizers


def minimizer_oracle(problem: Problem, tol: Optional[float] = None, max_iter: int = DEFAULT_MAX_ITER,
                     x0: Optional[Array] = None) -> Array:
    """Minimizer by long (proximal-)gradient descent with step 1/L.

    Stops once ``||G_s(x)|| <= tol`` (``||grad f(x)||`` for smooth problems).
    Quadratics built by :func:`make_quadratic` and any problem with a stored
    ``x_star`` return it directly.
    """
    if problem.x_star is not None:
        return np.array(problem.x_star, dtype=float)
    if x0 is None:
        x0 = np.zeros(problem.dimension)
    if tol is None:
        tol = 1e-12 * (1.0 + float(np.linalg.norm(x0)))
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    s = 1.0 / problem.L
    x = np.array(x0, dtype=float)
    best, best_res = x.copy(), math.inf
    for _ in range(max_iter):
        step = proximal_subgradient(problem, x, s)
        res = float(np.linalg.norm(step))
        if res < best_res:
            best, best_res = x.copy(), res
        if res <= tol:
            return x
        x = x - s * step
    raise NoConvergenceError(
        f"minimizer oracle did not reach tol={tol:.3g} in {max_iter} iterations (best {best_res:.3g})",
        best_iterate=best,
        residual=best_res,
    )
