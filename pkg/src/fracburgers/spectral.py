"""Periodic grid, Fourier transforms, multipliers and norms on the unit circle.

Fields are real, zero-mean functions on S^1 = R/Z sampled at x_j = j/n.
They are stored as one-sided complex Fourier coefficients

    u_hat[k] = (1/n) sum_j u(x_j) exp(-2 pi i k x_j),   k = 0 .. n/2,

so that u(x) = sum_{k=-n/2+1}^{n/2} u_hat[k] exp(2 pi i k x) with
u_hat[-k] = conj(u_hat[k]).  The zero mode is pinned to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import RejectedInputError

__all__ = [
    "Grid",
    "SpectralField",
    "NormRequest",
    "forward_transform",
    "inverse_transform",
    "apply_multiplier",
    "spectral_derivative",
    "dealias",
    "norm",
    "interpolation_check",
    "structure_integrand",
    "autocorrelation",
]


@dataclass(frozen=True)
class Grid:
    """Uniform collocation grid on the unit torus."""

    n_points: int

    def __post_init__(self):
        n = self.n_points
        if int(n) != n or n < 8 or n % 2:
            raise RejectedInputError(f"n_points must be an even integer >= 8, got {n!r}")
        object.__setattr__(self, "n_points", int(n))

    length = 1.0

    @property
    def dx(self) -> float:
        return 1.0 / self.n_points

    @property
    def n_modes(self) -> int:
        """Number of stored one-sided coefficients, n/2 + 1."""
        return self.n_points // 2 + 1

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n_points) / self.n_points

    @cached_property
    def k(self) -> np.ndarray:
        return np.arange(self.n_modes, dtype=float)

    @cached_property
    def multiplicity(self) -> np.ndarray:
        # modes +k and -k are both present except k = 0 and the Nyquist mode
        w = np.full(self.n_modes, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    @cached_property
    def dealias_cutoff(self) -> int:
        return self.n_points // 3


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Zero-mean real periodic field held by its Fourier coefficients.

    ``removed_mean`` records the space average subtracted by
    :func:`forward_transform`; it is not part of the field itself.
    """

    grid: Grid
    coeffs: np.ndarray
    time_tag: Optional[float] = None
    removed_mean: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (self.grid.n_modes,):
            raise RejectedInputError(
                f"expected {self.grid.n_modes} coefficients for n={self.grid.n_points}, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise RejectedInputError("coefficients must be finite")
        c[0] = 0.0
        # a real field has a real Nyquist coefficient
        c[-1] = c[-1].real
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid, time_tag=None) -> "SpectralField":
        return cls(grid, np.zeros(grid.n_modes, dtype=np.complex128), time_tag)

    @classmethod
    def from_modes(cls, grid: Grid, modes, time_tag=None) -> "SpectralField":
        """Build sum_j a_j sin(2 pi k_j x + phi_j) from ``(k, amplitude, phase)`` triples."""
        c = np.zeros(grid.n_modes, dtype=np.complex128)
        for k, amp, phase in modes:
            k = int(k)
            if not 1 <= k < grid.n_points // 2:
                raise RejectedInputError(f"mode {k} not representable on n={grid.n_points}")
            # a sin(2 pi k x + phi) = (a / 2i) e^{i phi} e^{2 pi i k x} + c.c.
            c[k] += amp * np.exp(1j * phase) / 2j
        return cls(grid, c, time_tag)

    def with_coeffs(self, coeffs, time_tag=None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.time_tag if time_tag is None else time_tag)

    def samples(self) -> np.ndarray:
        return inverse_transform(self)

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)


NORM_KINDS = ("Lp", "Wmp", "Hs", "HsIncrement")


@dataclass(frozen=True)
class NormRequest:
    """Which norm to compute.

    ``Lp`` and ``Wmp`` use ``m`` and ``p`` (``p = inf`` allowed); ``Hs`` and
    ``HsIncrement`` use ``s``.
    """

    kind: str
    m: int = 0
    p: float = 2.0
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise RejectedInputError(f"unknown norm kind {self.kind!r}")
        if self.kind == "Lp" and self.m != 0:
            raise RejectedInputError("Lp norms take m = 0; use Wmp for derivatives")
        if int(self.m) != self.m or self.m < 0:
            raise RejectedInputError(f"derivative order must be a nonnegative integer, got {self.m}")
        if not (1.0 <= self.p <= math.inf):
            raise RejectedInputError(f"Lebesgue exponent must lie in [1, inf], got {self.p}")
        if self.s < 0:
            raise RejectedInputError(f"fractional order must be nonnegative, got {self.s}")
        if self.kind == "HsIncrement" and not (0.0 < self.s < 1.0):
            raise RejectedInputError("HsIncrement requires 0 < s < 1")

    @classmethod
    def parse(cls, label: str) -> "NormRequest":
        """Inverse of :attr:`label`: ``L2``, ``Linf``, ``W1,inf``, ``H0.75``, ``Hinc0.5``."""
        label = label.strip()
        try:
            if label.startswith("Hinc"):
                return cls("HsIncrement", s=float(label[4:]))
            if label.startswith("H"):
                return cls("Hs", s=float(label[1:]))
            if label.startswith("L"):
                return cls("Lp", p=float(label[1:]))
            if label.startswith("W"):
                m, p = label[1:].split(",")
                return cls("Wmp", m=int(m), p=float(p))
        except ValueError:
            pass
        raise RejectedInputError(f"cannot parse norm label {label!r}")

    @property
    def label(self) -> str:
        p = "inf" if math.isinf(self.p) else f"{self.p:g}"
        if self.kind == "Lp":
            return f"L{p}"
        if self.kind == "Wmp":
            return f"W{self.m},{p}"
        if self.kind == "Hs":
            return f"H{self.s:g}"
        return f"Hinc{self.s:g}"

    @property
    def size(self) -> float:
        """Scaling "size" of the norm: m - 1/p for W^{m,p}, s - 1/2 for H^s."""
        if self.kind in ("Lp", "Wmp"):
            return self.m - (0.0 if math.isinf(self.p) else 1.0 / self.p)
        return self.s - 0.5


# ---------------------------------------------------------------------------
# transforms


def _rfft(samples: np.ndarray) -> np.ndarray:
    return np.fft.rfft(samples) / samples.shape[-1]


def _irfft(coeffs: np.ndarray, n: int) -> np.ndarray:
    return np.fft.irfft(coeffs, n) * n


def forward_transform(samples, grid: Optional[Grid] = None, time_tag=None) -> SpectralField:
    """Transform grid samples to a zero-mean :class:`SpectralField`.

    The sample mean is subtracted and kept in ``field.removed_mean``.
    """
    u = np.asarray(samples, dtype=float)
    if u.ndim != 1:
        raise RejectedInputError("samples must be one-dimensional")
    if grid is None:
        grid = Grid(u.size)
    elif u.size != grid.n_points:
        raise RejectedInputError(f"expected {grid.n_points} samples, got {u.size}")
    if not np.all(np.isfinite(u)):
        raise RejectedInputError("samples contain NaN or Inf")
    c = _rfft(u)
    mean = float(c[0].real)
    return SpectralField(grid, c, time_tag, mean)


def inverse_transform(field: SpectralField) -> np.ndarray:
    return _irfft(field.coeffs, field.grid.n_points)


# ---------------------------------------------------------------------------
# Fourier multipliers


def multiplier_symbol(grid: Grid, alpha: float) -> np.ndarray:
    """(2 pi |k|)^alpha on the stored modes, with the zero mode set to 0."""
    sym = (2.0 * np.pi * grid.k) ** alpha
    sym[0] = 0.0
    return sym


def apply_multiplier(field: SpectralField, alpha: float, scale: float = 1.0) -> SpectralField:
    """Apply scale * Lambda^alpha, Lambda = sqrt(-d^2/dx^2)."""
    if alpha < 0:
        raise RejectedInputError("alpha must be >= 0")
    return field.with_coeffs(scale * multiplier_symbol(field.grid, alpha) * field.coeffs)


def derivative_symbol(grid: Grid, order: int) -> np.ndarray:
    sym = (2j * np.pi * grid.k) ** order
    if order % 2:
        # the Nyquist mode has no real odd derivative on the grid
        sym[-1] = 0.0
    return sym


def spectral_derivative(field: SpectralField, order: int = 1) -> SpectralField:
    if int(order) != order or order < 1:
        raise RejectedInputError(f"derivative order must be a positive integer, got {order}")
    return field.with_coeffs(derivative_symbol(field.grid, int(order)) * field.coeffs)


def dealias_mask(grid: Grid) -> np.ndarray:
    return grid.k <= grid.dealias_cutoff


def dealias(field: SpectralField) -> SpectralField:
    """Two-thirds rule: zero every |k| > floor(n/3)."""
    return field.with_coeffs(np.where(dealias_mask(field.grid), field.coeffs, 0.0))


# ---------------------------------------------------------------------------
# norms


def _hs_norm(grid: Grid, coeffs: np.ndarray, s: float) -> float:
    k = grid.k[1:]
    energy = grid.multiplicity[1:] * np.abs(coeffs[1:]) ** 2
    if s == 0:
        total = energy.sum()
    else:
        total = (k ** (2.0 * s) * energy).sum()
    return float((2.0 * np.pi) ** s * math.sqrt(total))


def _physical_norm(values: np.ndarray, p: float) -> float:
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a.mean())
    if p == 2:
        return float(math.sqrt(np.mean(a * a)))
    return float(np.mean(a**p) ** (1.0 / p))


def autocorrelation(field: SpectralField) -> np.ndarray:
    """C(l_j) = int u(x + l_j) u(x) dx on every lattice shift l_j = j/n, j = 0..n-1."""
    n = field.grid.n_points
    return _irfft(np.abs(field.coeffs) ** 2, n)


def structure_integrand(field: SpectralField) -> np.ndarray:
    """Second-order increment integral int |u(x+l)-u(x)|^2 dx at l_j = j/n, j = 0..n."""
    c = autocorrelation(field)
    s2 = 2.0 * (c[0] - c)
    s2[0] = 0.0
    s2 = np.maximum(s2, 0.0)
    return np.append(s2, 0.0)


def _increment_norm(field: SpectralField, s: float) -> float:
    """Fractional norm from the increment integral over lattice shifts.

    S2 is taken quadratic in l on the first cell (exact for smooth fields)
    and linear between samples elsewhere; the weight l^-(2s+1) is
    integrated exactly against that interpolant on every cell.
    """
    n = field.grid.n_points
    h = 1.0 / n
    s2 = structure_integrand(field)
    total = s2[1] * h ** (-2.0 * s) / (2.0 - 2.0 * s)

    a = np.arange(1, n) * h
    b = a + h
    sa = s2[1:n]
    sb = s2[2 : n + 1]
    # moments of l^-(2s+1) over [a, b]
    i0 = (a ** (-2.0 * s) - b ** (-2.0 * s)) / (2.0 * s)
    if abs(s - 0.5) < 1e-14:
        i1 = np.log(b / a)
    else:
        i1 = (b ** (1.0 - 2.0 * s) - a ** (1.0 - 2.0 * s)) / (1.0 - 2.0 * s)
    slope = (sb - sa) / h
    total += float(np.sum((sa - slope * a) * i0 + slope * i1))
    return math.sqrt(max(total, 0.0))


def norm(field: SpectralField, req: NormRequest) -> float:
    """Evaluate the requested norm of ``field``.

    For ``p = inf`` the value is the maximum over collocation points, which
    can fall short of the true supremum by O(dx) relative.
    """
    grid = field.grid
    if req.kind == "Hs":
        return _hs_norm(grid, field.coeffs, req.s)
    if req.kind == "HsIncrement":
        return _increment_norm(field, req.s)
    coeffs = field.coeffs
    if req.m > 0:
        coeffs = derivative_symbol(grid, req.m) * coeffs
    return _physical_norm(_irfft(coeffs, grid.n_points), req.p)


@dataclass(frozen=True)
class InterpolationCheck:
    lhs: float
    rhs: float
    ratio: float
    theta: float = field(default=1.0)


def interpolation_check(field: SpectralField, s1: float, s2: float, s3: float) -> InterpolationCheck:
    """Compare ||v||_{s2} with ||v||_{s1}^theta ||v||_{s3}^(1-theta)."""
    if not (s1 <= s2 <= s3):
        raise RejectedInputError(f"need s1 <= s2 <= s3, got {(s1, s2, s3)}")
    lhs = _hs_norm(field.grid, field.coeffs, s2)
    if s3 == s1:
        return InterpolationCheck(lhs, lhs, 1.0, 1.0)
    theta = (s3 - s2) / (s3 - s1)
    rhs = _hs_norm(field.grid, field.coeffs, s1) ** theta * _hs_norm(field.grid, field.coeffs, s3) ** (1.0 - theta)
    if rhs == 0.0:
        return InterpolationCheck(lhs, rhs, 1.0, theta)
    return InterpolationCheck(lhs, rhs, lhs / rhs, theta)
