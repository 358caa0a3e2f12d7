"""Flux functions f, checks of their convexity and growth, and the term -(f(u))_x."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConvexityError, GrowthError, NonFiniteError, RejectedInputError
from .spectral import SpectralField, _irfft, _rfft, dealias_mask, derivative_symbol

__all__ = [
    "FluxSpec",
    "FluxReport",
    "validate",
    "nonlinear_term",
    "named_flux",
    "FLUX_NAMES",
    "burgers",
    "zero_flux",
    "linear_flux",
]


@dataclass(frozen=True)
class FluxSpec:
    """A flux f with its first two derivatives.

    ``sigma`` is the claimed lower bound on f'' and ``growth_h1`` the claimed
    exponent h with |f'(y)| <= C (1 + |y|)^h.  ``validation_radius`` is the
    half-width R of the interval [-R, R] on which both are sampled; ``None``
    lets the caller pick (10 D for a given initial condition).
    """

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv2: Callable[[np.ndarray], np.ndarray]
    sigma: float
    growth_h1: float
    validation_radius: Optional[float] = None
    max_radius: float = math.inf
    is_zero: bool = False

    def radius(self, D: Optional[float] = None) -> float:
        if self.validation_radius is not None:
            R = self.validation_radius
        elif D is not None:
            R = 10.0 * D
        else:
            raise RejectedInputError("validation radius unknown: give validation_radius or D")
        return min(R, self.max_radius)


@dataclass(frozen=True)
class FluxReport:
    sigma_observed: float
    h1_fit: float
    radius: float
    passed: bool


def validate(spec: FluxSpec, n_samples: int = 2001, D: Optional[float] = None) -> FluxReport:
    """Sample f'' and |f'| on [-R, R] and check strong convexity and sub-quadratic growth.

    The growth exponent is the least-squares log-log slope of
    max(|f'(y)|, |f'(-y)|) against y, sampled uniformly on [R/10, R].  Raises
    :class:`ConvexityError` or :class:`GrowthError` on failure.
    """
    if n_samples < 100:
        raise RejectedInputError("n_samples must be at least 100")
    R = spec.radius(D)
    if not R > 0:
        raise RejectedInputError("validation radius must be positive")

    y = np.linspace(-R, R, n_samples)
    with np.errstate(over="ignore", invalid="ignore"):
        f2 = np.asarray(spec.deriv2(y), dtype=float) * np.ones_like(y)
    if not np.all(np.isfinite(f2)):
        raise NonFiniteError(f"f'' is not finite on [-{R}, {R}]")
    i = int(np.argmin(f2))
    sigma_obs = float(f2[i])
    if sigma_obs < spec.sigma * (1.0 - 1e-6) or sigma_obs <= 0.0:
        raise ConvexityError(
            f"f''({y[i]:.6g}) = {sigma_obs:.6g} is below sigma = {spec.sigma}", y=float(y[i])
        )

    # uniform samples weight the fit toward large |y|
    yy = np.linspace(R / 10.0, R, max(n_samples // 2, 50))
    with np.errstate(over="ignore", invalid="ignore"):
        g = np.maximum(np.abs(spec.deriv(yy)), np.abs(spec.deriv(-yy)))
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise GrowthError("f' is not finite and nonzero on the growth-fit range", h1_fit=math.inf)
    h1 = float(np.polyfit(np.log(yy), np.log(g), 1)[0])
    if h1 >= 2.0:
        raise GrowthError(f"|f'| grows like |y|^{h1:.3f}; exponent must stay below 2", h1_fit=h1)

    _cross_check_derivatives(spec, R)
    return FluxReport(sigma_obs, h1, R, True)


def _cross_check_derivatives(spec: FluxSpec, R: float) -> None:
    # central differences against the user-supplied derivatives, 1e-6 relative
    y = np.linspace(-R, R, 41)
    h = 1e-4 * max(1.0, R)
    for lower, upper in ((spec.eval, spec.deriv), (spec.deriv, spec.deriv2)):
        approx = (np.asarray(lower(y + h)) - np.asarray(lower(y - h))) / (2 * h)
        exact = np.asarray(upper(y)) * np.ones_like(y)
        scale = max(float(np.max(np.abs(exact))), 1.0)
        err = float(np.max(np.abs(approx - exact))) / scale
        if err > 1e-6:
            raise RejectedInputError(
                f"flux {spec.name!r}: supplied derivative disagrees with finite differences ({err:.2e})"
            )


def nonlinear_term_coeffs(coeffs: np.ndarray, n: int, spec: FluxSpec, dmask=None, dsym=None) -> np.ndarray:
    """Array-level core of :func:`nonlinear_term`, used by the time stepper."""
    if spec.is_zero:
        return np.zeros_like(coeffs)
    u = _irfft(coeffs, n)
    with np.errstate(over="ignore", invalid="ignore"):
        fu = spec.eval(u)
    if not np.all(np.isfinite(fu)):
        raise NonFiniteError("flux evaluation overflowed")
    out = _rfft(np.asarray(fu, dtype=float) * np.ones(n))
    out *= -dsym
    out[~dmask] = 0.0
    out[0] = 0.0
    return out


def nonlinear_term(u: SpectralField, spec: FluxSpec) -> SpectralField:
    """-P d/dx F[f(u)]: pointwise flux on the grid, spectral derivative, two-thirds truncation."""
    grid = u.grid
    out = nonlinear_term_coeffs(
        u.coeffs, grid.n_points, spec, dealias_mask(grid), derivative_symbol(grid, 1)
    )
    return u.with_coeffs(out)


# ---------------------------------------------------------------------------
# built-in fluxes


def burgers() -> FluxSpec:
    return FluxSpec(
        "burgers",
        eval=lambda y: 0.5 * y * y,
        deriv=lambda y: y,
        deriv2=lambda y: np.ones_like(y, dtype=float),
        sigma=1.0,
        growth_h1=1.0,
    )


def burgers_quartic_mix(eps: float = 1e-6) -> FluxSpec:
    """y^2/2 + eps y^4.

    Only passes validation while the quartic part stays negligible on
    [-R, R], roughly 4 eps R^2 << 1; otherwise the fitted growth exponent
    approaches 3 and validation fails.
    """
    return FluxSpec(
        "burgers_quartic_mix",
        eval=lambda y: 0.5 * y * y + eps * y**4,
        deriv=lambda y: y + 4 * eps * y**3,
        deriv2=lambda y: 1.0 + 12 * eps * y * y,
        sigma=1.0,
        growth_h1=1.0,
    )


def cosh_capped() -> FluxSpec:
    """cosh(y) with the validation range capped at R = 5; test-only."""
    return FluxSpec(
        "cosh_capped",
        eval=np.cosh,
        deriv=np.sinh,
        deriv2=np.cosh,
        sigma=1.0,
        growth_h1=1.0,
        max_radius=5.0,
    )


def zero_flux() -> FluxSpec:
    """f = 0; the equation reduces to fractional heat flow.  Not convex, test use only."""
    zero = lambda y: np.zeros_like(y, dtype=float)  # noqa: E731
    return FluxSpec("zero", zero, zero, zero, sigma=0.0, growth_h1=0.0, is_zero=True)


def linear_flux(c: float) -> FluxSpec:
    """f(y) = c y, pure transport.  Not convex, test use only."""
    return FluxSpec(
        f"linear({c:g})",
        eval=lambda y: c * y,
        deriv=lambda y: c * np.ones_like(y, dtype=float),
        deriv2=lambda y: np.zeros_like(y, dtype=float),
        sigma=0.0,
        growth_h1=0.0,
    )


FLUX_NAMES = {
    "burgers": burgers,
    "burgers_quartic_mix": burgers_quartic_mix,
    "cosh_capped": cosh_capped,
}


def named_flux(name: str) -> FluxSpec:
    try:
        return FLUX_NAMES[name]()
    except KeyError:
        raise RejectedInputError(f"unknown flux {name!r}; choose from {sorted(FLUX_NAMES)}") from None
