"""Per-mode spectral analysis of Nesterov-1983 on f(x) = mu x^2 / 2.

For one quadratic mode the iteration is linear:

    (x_k, y_k)^T = M_k (x_{k-1}, y_{k-1})^T,
    M_k = [[0, q], [-(k-1)/(k+r), (2k+r-1)/(k+r) q]],  q = 1 - mu s,

with characteristic polynomial lambda^2 - b lambda + c, b = tr M_k, c = det M_k.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DivergenceError, InvalidParameterError, MomentumSingularityError

OVERFLOW = 1e300


def _check_mu_s(mu_s: float) -> None:
    if not (0.0 < mu_s < 1.0):
        raise InvalidParameterError(f"need mu*s in (0, 1), got {mu_s}")


def iteration_matrix(mu_s: float, r: float, k: int) -> np.ndarray:
    if k + r == 0:
        raise MomentumSingularityError(k, r)
    q = 1.0 - mu_s
    return np.array([[0.0, q], [-(k - 1) / (k + r), (2 * k + r - 1) / (k + r) * q]])


def char_coefficients(mu_s: float, r: float, k: int) -> tuple[float, float]:
    """(b, c) of lambda^2 - b lambda + c."""
    if k + r == 0:
        raise MomentumSingularityError(k, r)
    q = 1.0 - mu_s
    return (2 * k + r - 1) / (k + r) * q, (k - 1) / (k + r) * q


def quadratic_roots(b: float, c: float) -> tuple[complex, complex]:
    """Roots of lambda^2 - b lambda + c, larger magnitude first, without cancellation."""
    disc = b * b - 4.0 * c
    if disc < 0:
        half = 0.5 * math.sqrt(-disc)
        return complex(0.5 * b, half), complex(0.5 * b, -half)
    big = 0.5 * (b + math.copysign(math.sqrt(disc), b))
    if big == 0.0:
        return 0j, 0j
    return complex(big), complex(c / big)


@dataclass(frozen=True)
class ModeSpectrum:
    k: int
    mu_s: float
    r: float
    matrix: np.ndarray
    roots: tuple[complex, complex]
    discriminant: float

    @property
    def b(self) -> float:
        return float(self.matrix[1, 1])

    @property
    def c(self) -> float:
        return float(-self.matrix[1, 0] * self.matrix[0, 1])

    @property
    def complex_pair(self) -> bool:
        return self.discriminant < 0

    @property
    def modulus(self) -> float:
        """|lambda| for a conjugate pair, else the spectral radius."""
        if self.complex_pair:
            return abs(self.roots[0])
        return max(abs(self.roots[0]), abs(self.roots[1]))

    @property
    def real_part(self) -> float:
        return max(self.roots[0].real, self.roots[1].real)

    def residual(self) -> float:
        """Largest |p(lambda)| / (1 + |lambda|^2) over both roots."""
        b, c = char_coefficients(self.mu_s, self.r, self.k)
        return max(abs(lam * lam - b * lam + c) / (1.0 + abs(lam) ** 2) for lam in self.roots)


def mode_spectrum(mu: float, s: float, r: float, k: int) -> ModeSpectrum:
    mu_s = mu * s
    _check_mu_s(mu_s)
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    b, c = char_coefficients(mu_s, r, k)
    return ModeSpectrum(
        k=int(k),
        mu_s=mu_s,
        r=float(r),
        matrix=iteration_matrix(mu_s, r, k),
        roots=quadratic_roots(b, c),
        discriminant=b * b - 4.0 * c,
    )


class AsymptoticRate(NamedTuple):
    real_part_limit: float
    modulus_limit: float
    f_error_rate: float


def asymptotic_rate(mu: float, s: float) -> AsymptoticRate:
    """Limits as k -> infinity: Re(lambda) -> 1 - mu s, |lambda| -> sqrt(1 - mu s).

    The objective error of a quadratic mode scales with x_k^2, so it contracts
    per iteration by |lambda|^2 -> 1 - mu s.
    """
    mu_s = mu * s
    _check_mu_s(mu_s)
    q = 1.0 - mu_s
    return AsymptoticRate(q, math.sqrt(q), q)


def discriminant_limit(mu: float, s: float) -> float:
    mu_s = mu * s
    return -4.0 * mu_s * (1.0 - mu_s)


def matrix_power_oracle(mu: float, s: float, r: float, x0: Sequence[float] | float, k_max: int) -> np.ndarray:
    """Apply M_1, ..., M_{k_max} to (x_0, y_0); returns an array of shape (k_max + 1, 2).

    ``x0`` is either the scalar x_0 (then y_0 = x_0) or the pair (x_0, y_0).
    Any mu s > 0 is accepted so that unstable steps (mu s well above 1) can be
    observed to diverge.
    """
    if not mu * s > 0:
        raise InvalidParameterError(f"need mu*s > 0, got {mu * s}")
    pair = np.atleast_1d(np.asarray(x0, dtype=float))
    z = np.array([pair[0], pair[0] if pair.size == 1 else pair[1]])
    out = np.empty((k_max + 1, 2))
    out[0] = z
    for k in range(1, k_max + 1):
        z = iteration_matrix(mu * s, r, k) @ z
        if not np.all(np.abs(z) <= OVERFLOW):
            raise DivergenceError(f"|x_k| exceeded {OVERFLOW:g} at k={k}")
        out[k] = z
    return out


def spectral_sweep(mu: float, s: float, r: float, ks: Iterable[int]) -> list[ModeSpectrum]:
    return [mode_spectrum(mu, s, r, int(k)) for k in ks]


SWEEP_COLUMNS = ("k", "re_lambda1", "im_lambda1", "re_lambda2", "im_lambda2", "discriminant", "modulus")


def sweep_rows(spectra: Iterable[ModeSpectrum]) -> list[tuple]:
    rows = []
    for sp in spectra:
        l1, l2 = sp.roots
        rows.append((sp.k, l1.real, l1.imag, l2.real, l2.imag, sp.discriminant, sp.modulus))
    return rows


def log_spaced_ks(k_min: int, k_max: int, n: int) -> np.ndarray:
    return np.unique(np.round(np.geomspace(k_min, k_max, n)).astype(np.int64))


def oscillation_period(mu: float, s: float, r: float, k: int) -> float:
    """2 pi / arg(lambda) for a complex pair, inf otherwise."""
    sp = mode_spectrum(mu, s, r, k)
    if not sp.complex_pair:
        return math.inf
    return 2.0 * math.pi / abs(cmath.phase(sp.roots[0]))
