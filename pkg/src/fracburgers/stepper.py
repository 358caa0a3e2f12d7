"""Exponential time differencing for u_t + (f(u))_x + nu Lambda^alpha u = 0.

The linear part is integrated exactly through the fractional heat semigroup
exp(-nu (2 pi |k|)^alpha t); the nonlinear term enters through the Duhamel
integral, approximated by the ETDRK2 (Cox-Matthews) or ETDRK4
(Cox-Matthews / Kassam-Trefethen) stage compositions.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import List, Optional

import numpy as np

from .errors import NonFiniteError, RejectedInputError, ResolutionError
from .flux import FluxSpec, validate
from .monitors import DiagnosticsRecord, MonitorSet, dissipation_rate
from .spectral import Grid, SpectralField, _irfft, _rfft, dealias_mask, derivative_symbol

__all__ = [
    "StepperConfig",
    "SolverState",
    "SolverRun",
    "ETDCoefficients",
    "heat_semigroup",
    "phi",
    "etd_coefficients",
    "step",
    "cfl_dt",
    "integrate",
    "SCHEMES",
]

log = logging.getLogger(__name__)

SCHEMES = ("ETDRK2", "ETDRK4")


@dataclass(frozen=True)
class StepperConfig:
    nu: float
    alpha: float
    t_end: float
    dt_max: float = 1e-2
    dt_cfl: float = 0.4
    scheme: str = "ETDRK4"

    def __post_init__(self):
        if not self.nu > 0:
            raise RejectedInputError(f"nu must be positive, got {self.nu}")
        if not 1.0 < self.alpha <= 2.0:
            raise RejectedInputError(f"alpha must lie in (1, 2], got {self.alpha}")
        if not self.dt_cfl > 0 or not self.dt_max > 0:
            raise RejectedInputError("dt_cfl and dt_max must be positive")
        if not self.t_end >= 0:
            raise RejectedInputError("t_end must be nonnegative")
        if self.scheme not in SCHEMES:
            raise RejectedInputError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    @property
    def beta(self) -> float:
        return 1.0 / (self.alpha - 1.0)


@dataclass(frozen=True)
class SolverState:
    field: SpectralField
    t: float
    step_count: int = 0
    dt_last: float = 0.0


@dataclass
class SolverRun:
    """Outcome of :func:`integrate`: configuration, records and final state."""

    config: StepperConfig
    flux_name: str
    grid: Grid
    records: List[DiagnosticsRecord]
    final_state: SolverState
    D: Optional[float] = None
    sigma: Optional[float] = None
    t_start: float = 0.0
    wall_time: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def nu(self) -> float:
        return self.config.nu

    @property
    def alpha(self) -> float:
        return self.config.alpha

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def steps(self) -> int:
        return self.final_state.step_count


# ---------------------------------------------------------------------------
# linear part


def decay_rates(grid: Grid, nu: float, alpha: float) -> np.ndarray:
    """lambda_k = nu (2 pi |k|)^alpha."""
    return nu * (2.0 * np.pi * grid.k) ** alpha


def heat_semigroup(field_: SpectralField, nu: float, alpha: float, t: float) -> SpectralField:
    """exp(-t nu Lambda^alpha) applied to ``field_``."""
    if t < 0:
        raise RejectedInputError("semigroup time must be nonnegative")
    return field_.with_coeffs(np.exp(-decay_rates(field_.grid, nu, alpha) * t) * field_.coeffs)


# (threshold on |z| below which the Taylor series is used, highest power kept)
_PHI_TAYLOR = {1: (1e-3, 6), 2: (0.5, 20), 3: (0.5, 20)}


def phi(j: int, z):
    """phi_j(z) = sum_{i >= 0} z^i / (i + j)!, for j = 1, 2, 3.

    Closed forms cancel catastrophically near z = 0, so small |z| uses the
    truncated series (Horner form).
    """
    z = np.asarray(z, dtype=float)
    thr, order = _PHI_TAYLOR[j]
    small = np.abs(z) < thr
    out = np.empty_like(z)

    zs = z[small]
    acc = np.zeros_like(zs)
    for i in range(order, -1, -1):
        acc = acc * zs + 1.0 / factorial(i + j)
    out[small] = acc

    zb = z[~small]
    em1 = np.expm1(zb)
    if j == 1:
        out[~small] = em1 / zb
    elif j == 2:
        out[~small] = (em1 - zb) / zb**2
    else:
        out[~small] = (em1 - zb - 0.5 * zb**2) / zb**3
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ETDCoefficients:
    """Per-mode weights for one step of size ``dt``.

    ``E = exp(-lambda dt)``, ``E2 = exp(-lambda dt / 2)`` and ``phi1..phi3`` are
    evaluated at z = -lambda dt.  ``Q`` and ``f1..f3`` are the dt-scaled
    combinations used by the ETDRK4 stages.
    """

    dt: float
    E: np.ndarray
    E2: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    f1: Optional[np.ndarray] = None
    f2: Optional[np.ndarray] = None
    f3: Optional[np.ndarray] = None


def _coefficients_from_rates(lam: np.ndarray, dt: float, scheme: str = "ETDRK4") -> ETDCoefficients:
    z = -lam * dt
    E = np.exp(z)
    E2 = np.exp(0.5 * z)
    p1 = phi(1, z)
    p2 = phi(2, z)
    if scheme == "ETDRK2":
        return ETDCoefficients(dt, E, E2, p1, p2)
    p3 = phi(3, z)
    return ETDCoefficients(
        dt,
        E,
        E2,
        p1,
        p2,
        p3,
        Q=0.5 * dt * phi(1, 0.5 * z),
        f1=dt * (p1 - 3.0 * p2 + 4.0 * p3),
        f2=dt * (p2 - 2.0 * p3),
        f3=dt * (-p2 + 4.0 * p3),
    )


def etd_coefficients(nu: float, alpha: float, dt: float, grid: Grid, scheme: str = "ETDRK4") -> ETDCoefficients:
    if not dt > 0:
        raise RejectedInputError("dt must be positive")
    return _coefficients_from_rates(decay_rates(grid, nu, alpha), dt, scheme)


# ---------------------------------------------------------------------------
# nonlinear stages


class _Kernel:
    """Grid-level arrays and a small coefficient cache shared by successive steps."""

    def __init__(self, grid: Grid, cfg: StepperConfig, flux: FluxSpec):
        self.grid = grid
        self.n = grid.n_points
        self.cfg = cfg
        self.flux = flux
        self.lam = decay_rates(grid, cfg.nu, cfg.alpha)
        self.dmask = dealias_mask(grid)
        self.dsym = derivative_symbol(grid, 1)
        self._cache = {}

    def coefficients(self, dt: float) -> ETDCoefficients:
        co = self._cache.get(dt)
        if co is None:
            if len(self._cache) > 64:
                self._cache.clear()
            co = _coefficients_from_rates(self.lam, dt, self.cfg.scheme)
            self._cache[dt] = co
        return co

    def nonlinear(self, c: np.ndarray, u: Optional[np.ndarray] = None) -> np.ndarray:
        if self.flux.is_zero:
            return np.zeros_like(c)
        if u is None:
            u = _irfft(c, self.n)
        fu = self.flux.eval(u)
        out = _rfft(np.broadcast_to(np.asarray(fu, dtype=float), u.shape))
        out *= -self.dsym
        out[~self.dmask] = 0.0
        out[0] = 0.0
        return out

    def max_speed(self, u: np.ndarray) -> float:
        if self.flux.is_zero:
            return 0.0
        return float(np.max(np.abs(self.flux.deriv(u))))

    def advance(self, c: np.ndarray, dt: float, u: Optional[np.ndarray] = None) -> np.ndarray:
        co = self.coefficients(dt)
        Nu = self.nonlinear(c, u)
        if self.cfg.scheme == "ETDRK2":
            a = co.E * c + dt * co.phi1 * Nu
            Na = self.nonlinear(a)
            return a + dt * co.phi2 * (Na - Nu)
        a = co.E2 * c + co.Q * Nu
        Na = self.nonlinear(a)
        b = co.E2 * c + co.Q * Na
        Nb = self.nonlinear(b)
        cc = co.E2 * a + co.Q * (2.0 * Nb - Nu)
        Nc = self.nonlinear(cc)
        return co.E * c + co.f1 * Nu + 2.0 * co.f2 * (Na + Nb) + co.f3 * Nc


def _cfl_from_speed(speed: float, cfg: StepperConfig, dx: float, dt_last: float) -> float:
    dt = cfg.dt_max if speed == 0 else min(cfg.dt_max, cfg.dt_cfl * dx / speed)
    if dt_last > 0:
        dt = min(dt, 2.0 * dt_last)
    return dt


def cfl_dt(state: SolverState, cfg: StepperConfig, flux: FluxSpec) -> float:
    """min(dt_max, dt_cfl dx / max|f'(u)|), at most twice the previous step."""
    grid = state.field.grid
    kern = _Kernel(grid, cfg, flux)
    speed = kern.max_speed(state.field.samples())
    return _cfl_from_speed(speed, cfg, grid.dx, state.dt_last)


def step(state: SolverState, cfg: StepperConfig, flux: FluxSpec, dt: Optional[float] = None) -> SolverState:
    """Advance ``state`` by one exponential Runge-Kutta step (``dt`` from :func:`cfl_dt` by default)."""
    if dt is None:
        dt = cfl_dt(state, cfg, flux)
    kern = _Kernel(state.field.grid, cfg, flux)
    c = kern.advance(np.array(state.field.coeffs), dt)
    if not np.all(np.isfinite(c)):
        raise NonFiniteError(f"non-finite coefficients after step at t={state.t}", t=state.t)
    t = state.t + dt
    return SolverState(state.field.with_coeffs(c, time_tag=t), t, state.step_count + 1, dt)


# ---------------------------------------------------------------------------
# driver


def _quantize(dt: float, dt_max: float, per_octave: int) -> float:
    """Round dt down onto the ladder dt_max * 2^(-i / per_octave) so coefficients can be reused."""
    if per_octave <= 0 or dt >= dt_max:
        return min(dt, dt_max)
    i = math.ceil(math.log2(dt_max / dt) * per_octave - 1e-9)
    return dt_max * 2.0 ** (-i / per_octave)


def integrate(
    u0: SpectralField,
    cfg: StepperConfig,
    flux: FluxSpec,
    monitors: Optional[MonitorSet] = None,
    *,
    initial_state: Optional[SolverState] = None,
    c_res: float = 0.5,
    allow_underresolved: bool = False,
    validate_flux: bool = True,
    fixed_dt: Optional[float] = None,
    dt_ladder: int = 16,
) -> SolverRun:
    """Integrate from ``u0`` (or ``initial_state`` when resuming) up to ``cfg.t_end``.

    Steps are shortened so that every requested sample time is hit exactly;
    a record is taken at the start, at each sample time and at ``t_end``.
    ``fixed_dt`` bypasses the CFL rule (used for convergence studies).
    """
    from .diagnostics import compute_D  # avoids an import cycle

    grid = u0.grid if initial_state is None else initial_state.field.grid
    notes = []

    beta = cfg.beta
    length_scale = cfg.nu**beta
    if grid.dx > c_res * length_scale:
        msg = (
            f"grid spacing {grid.dx:.3g} exceeds {c_res} * nu^beta = {c_res * length_scale:.3g}; "
            "the dissipation layer is not resolved"
        )
        if not allow_underresolved:
            raise ResolutionError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)

    monitors = monitors if monitors is not None else MonitorSet(p_values=(), keep_spectrum=False)
    D = monitors.D
    if D is None and flux.sigma > 0 and np.any(u0.coeffs != 0):
        D = compute_D(u0).value
    sigma = monitors.sigma if monitors.sigma is not None else (flux.sigma or None)
    if validate_flux and not flux.is_zero:
        validate(flux, D=D)
    monitors = _with_bounds(monitors, D, sigma)

    if initial_state is None:
        state = SolverState(u0.with_coeffs(u0.coeffs, time_tag=0.0), 0.0, 0, 0.0)
    else:
        state = initial_state
    t = float(state.t)
    t0 = t
    c = np.array(state.field.coeffs)
    n = grid.n_points
    kern = _Kernel(grid, cfg, flux)

    e0 = float(np.sum(grid.multiplicity * np.abs(c) ** 2))
    rate = 2.0 * dissipation_rate(grid, c, cfg.nu, cfg.alpha)
    dissipated = 0.0

    targets = sorted({float(s) for s in monitors.sample_times if t0 < s < cfg.t_end} | {float(cfg.t_end)})
    targets = [s for s in targets if s > t0]

    wall = time.perf_counter()
    steps = state.step_count
    dt_last = state.dt_last
    records = [_stamp(monitors.record(state.field.with_coeffs(c, time_tag=t), cfg.nu, cfg.alpha, 0.0, e0), steps, dt_last)]

    for target in targets:
        while t < target:
            u = _irfft(c, n)
            if fixed_dt is not None:
                dt = fixed_dt
            else:
                dt = _cfl_from_speed(kern.max_speed(u), cfg, grid.dx, dt_last)
                dt = _quantize(dt, cfg.dt_max, dt_ladder)
            remaining = target - t
            land = remaining <= dt * (1.0 + 1e-9)
            if land:
                dt = remaining
            elif remaining < 2.0 * dt and fixed_dt is None:
                dt = 0.5 * remaining
            c = kern.advance(c, dt, u)
            if not np.all(np.isfinite(c)):
                raise NonFiniteError(f"solution blew up between t={t:.6g} and t={t + dt:.6g}", t=t)
            c[0] = 0.0
            new_rate = 2.0 * dissipation_rate(grid, c, cfg.nu, cfg.alpha)
            dissipated += 0.5 * dt * (rate + new_rate)
            rate = new_rate
            t = target if land else t + dt
            steps += 1
            dt_last = dt
        fld = SpectralField(grid, c, t)
        records.append(_stamp(monitors.record(fld, cfg.nu, cfg.alpha, dissipated, e0), steps, dt_last))
        log.debug("t=%.5g steps=%d dt=%.3g", t, steps, dt_last)

    final = SolverState(SpectralField(grid, c, t), t, steps, dt_last)
    return SolverRun(
        config=cfg,
        flux_name=flux.name,
        grid=grid,
        records=records,
        final_state=final,
        D=D,
        sigma=sigma,
        t_start=t0,
        wall_time=time.perf_counter() - wall,
        warnings=notes,
    )


def _stamp(rec: DiagnosticsRecord, steps: int, dt_last: float) -> DiagnosticsRecord:
    rec.steps = steps
    rec.dt_last = dt_last
    return rec


def _with_bounds(monitors: MonitorSet, D, sigma) -> MonitorSet:
    if monitors.D == D and monitors.sigma == sigma:
        return monitors
    from dataclasses import replace

    return replace(monitors, D=D, sigma=sigma)
