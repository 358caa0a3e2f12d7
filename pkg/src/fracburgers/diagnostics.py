"""Small-scale quantities of a run and the time-averaging machinery.

All time averages are taken over a window [T1, T2] that depends on the
initial datum (through D) and on f (through sigma), but not on nu.
Averages use the trapezoid rule on the recorded sample times, with linear
interpolation at the window ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (
    DegenerateFlatness,
    DegenerateInitialData,
    LatticeShiftError,
    RejectedInputError,
    WindowNotCovered,
)
from .monitors import DiagnosticsRecord, increment_moments
from .spectral import NormRequest, SpectralField, _irfft, norm

__all__ = [
    "DQuantity",
    "compute_D",
    "RangePartition",
    "TimeWindow",
    "time_window",
    "window_weights",
    "time_average",
    "structure_function",
    "flatness",
    "energy_spectrum",
    "band_count",
    "dissipation_residual",
    "lattice_index",
    "StaticRun",
]

C_TILDE_SAFETY = 1.2


@dataclass(frozen=True)
class DQuantity:
    """max(|u0|_1^{-1}, |u0|_{1,inf}) together with both components."""

    value: float
    inv_l1: float
    w1inf: float


def compute_D(u0: SpectralField) -> DQuantity:
    l1 = norm(u0, NormRequest("Lp", p=1.0))
    if l1 == 0.0 or not np.any(u0.coeffs != 0):
        raise DegenerateInitialData("D is undefined for the zero initial condition")
    w1inf = norm(u0, NormRequest("Wmp", m=1, p=math.inf))
    value = max(1.0 / l1, w1inf)
    if not value > 1.0:
        # zero mean forces |u|_1 <= |u|_{1,inf} with strict inequality
        raise DegenerateInitialData(f"D = {value} is not > 1; grid too coarse for u0?")
    return DQuantity(value, 1.0 / l1, w1inf)


@dataclass(frozen=True)
class RangePartition:
    """Dissipation / inertial / energy ranges J1, J2, J3 of separations.

    By default C1 = K^-2/4, C2 = K^-4/20 and nu0 = (K^-2/6)^(1/beta).  Other
    values may be passed as long as C1 <= K^-2/4 and 5K^2 <= C1/C2 < nu0^-beta.
    """

    K: float
    beta: float
    C1: Optional[float] = None
    C2: Optional[float] = None
    nu0: Optional[float] = None

    def __post_init__(self):
        if not self.K >= 1:
            raise RejectedInputError(f"K must be >= 1, got {self.K}")
        if not self.beta > 0:
            raise RejectedInputError("beta must be positive")
        K = self.K
        if self.C1 is None:
            object.__setattr__(self, "C1", K**-2 / 4.0)
        if self.C2 is None:
            object.__setattr__(self, "C2", K**-4 / 20.0)
        if self.nu0 is None:
            object.__setattr__(self, "nu0", (K**-2 / 6.0) ** (1.0 / self.beta))
        ratio = self.C1 / self.C2
        if self.C1 > K**-2 / 4.0 * (1 + 1e-12):
            raise RejectedInputError("C1 must not exceed K^-2/4")
        if not (5.0 * K**2 * (1 - 1e-12) <= ratio < self.nu0 ** (-self.beta)):
            raise RejectedInputError("need 5 K^2 <= C1/C2 < nu0^-beta")

    @classmethod
    def for_alpha(cls, K: float, alpha: float) -> "RangePartition":
        return cls(K, 1.0 / (alpha - 1.0))

    def bounds(self, nu: float):
        """(C1 nu^beta, C2): J1 = (0, a], J2 = (a, b], J3 = (b, 1]."""
        if nu > self.nu0 * (1 + 1e-12):
            raise RejectedInputError(f"nu = {nu} exceeds nu0 = {self.nu0:.4g}; ranges may overlap")
        a = self.C1 * nu**self.beta
        return a, self.C2

    def classify(self, ell: float, nu: float) -> int:
        a, b = self.bounds(nu)
        if ell <= a:
            return 1
        return 2 if ell <= b else 3

    def fit_window(self, nu: float, margin_decades: float = 0.5, which: int = 2):
        """Sub-interval of J1 or J2 shrunk by ``margin_decades`` at each end."""
        a, b = self.bounds(nu)
        m = 10.0**margin_decades
        if which == 1:
            return 0.0, a / m
        if which == 2:
            return a * m, b / m
        raise RejectedInputError("fit windows exist for J1 and J2 only")


@dataclass(frozen=True)
class TimeWindow:
    T1: float
    T2: float
    C_tilde: float

    def __post_init__(self):
        if not 0 <= self.T1 < self.T2:
            raise RejectedInputError(f"need 0 <= T1 < T2, got {self.T1}, {self.T2}")


def window_from_constants(D: float, sigma: float, C_tilde: float) -> TimeWindow:
    T1 = 0.25 / (D * D * C_tilde)
    T2 = max(1.5 * T1, 2.0 * D / sigma)
    return TimeWindow(T1, T2, C_tilde)


def time_window(D, sigma: float, run, C_tilde: Optional[float] = None, safety: float = C_TILDE_SAFETY) -> TimeWindow:
    """T1 = D^-2 C~^-1 / 4, T2 = max(3 T1 / 2, 2 D / sigma).

    C~ defaults to ``safety`` times the largest sampled nu ||u||_{alpha/2}^2.
    Raises :class:`WindowNotCovered` when the run stops before T2.
    """
    Dv = D.value if isinstance(D, DQuantity) else float(D)
    if C_tilde is None:
        C_tilde = safety * max(r.dissipation for r in run.records)
    if not C_tilde > 0:
        raise RejectedInputError("C_tilde must be positive (is the run identically zero?)")
    win = window_from_constants(Dv, sigma, C_tilde)
    t_last = run.records[-1].t
    if t_last < win.T2 * (1 - 1e-12):
        raise WindowNotCovered(f"run ends at t={t_last:.6g} < T2={win.T2:.6g}")
    return win


def window_weights(times: Sequence[float], T1: float, T2: float) -> np.ndarray:
    """Weights w with sum_i w_i g(t_i) = average over [T1, T2] of the piecewise-linear interpolant of g."""
    t = np.asarray(times, dtype=float)
    if t.size == 0 or t[0] > T1 * (1 + 1e-12) + 1e-300 or t[-1] < T2 * (1 - 1e-12):
        lo = t[0] if t.size else math.nan
        hi = t[-1] if t.size else math.nan
        raise WindowNotCovered(f"samples span [{lo:.6g}, {hi:.6g}], window is [{T1:.6g}, {T2:.6g}]")
    w = np.zeros(t.size)
    for i in range(t.size - 1):
        ta, tb = t[i], t[i + 1]
        h = tb - ta
        if h <= 0:
            continue
        lo, hi = max(ta, T1), min(tb, T2)
        if hi <= lo:
            continue
        w[i] += ((tb - lo) ** 2 - (tb - hi) ** 2) / (2.0 * h)
        w[i + 1] += ((hi - ta) ** 2 - (lo - ta) ** 2) / (2.0 * h)
    return w / (T2 - T1)


Observable = Union[str, Callable[[DiagnosticsRecord], float], NormRequest]


def _observable_values(run, observable: Observable) -> np.ndarray:
    if isinstance(observable, NormRequest):
        return np.array([r.norms[observable] for r in run.records])
    if isinstance(observable, str):
        return np.array([getattr(r, observable) for r in run.records])
    return np.array([observable(r) for r in run.records], dtype=float)


def time_average(run, window: TimeWindow, observable: Observable, kappa: float = 1.0) -> float:
    """({A^kappa})^(1/kappa) with {.} the trapezoid average over [T1, T2]."""
    if not kappa > 0:
        raise RejectedInputError("kappa must be positive")
    values = _observable_values(run, observable)
    w = window_weights(run.times, window.T1, window.T2)
    avg = float(np.dot(w, np.abs(values) ** kappa))
    return avg ** (1.0 / kappa)


def lattice_index(ell: float, n: int) -> int:
    j = ell * n
    jr = int(round(j))
    if abs(j - jr) > 1e-9 * max(1.0, abs(j)) or not 1 <= jr <= n:
        raise LatticeShiftError(f"separation {ell!r} is not a lattice shift j/{n} with 1 <= j <= {n}")
    return jr


def _sp_values(run, p: float, j: int) -> np.ndarray:
    key = (float(p), j)
    n = run.grid.n_points
    out = []
    for r in run.records:
        if key in r.sp:
            out.append(r.sp[key])
        elif j == n or j == 0:
            out.append(1.0 if p == 0 else 0.0)
        elif r.coeffs is not None:
            u = _irfft(r.coeffs, n)
            out.append(increment_moments(u, (p,), (j,))[key])
        else:
            raise LatticeShiftError(f"S_{p:g} at shift j={j} was not monitored and fields were not kept")
    return np.array(out)


def _window(run, window):
    if window is not None:
        return window
    if run.D is None or not run.sigma:
        raise RejectedInputError("run carries no D / sigma; pass a TimeWindow explicitly")
    return time_window(run.D, run.sigma, run)


def structure_function(run, p: float, ell: float, window: Optional[TimeWindow] = None) -> float:
    """S_p(ell): time average of int |u(t, x + ell) - u(t, x)|^p dx."""
    if p < 0:
        raise RejectedInputError("p must be nonnegative")
    j = lattice_index(ell, run.grid.n_points)
    win = _window(run, window)
    w = window_weights(run.times, win.T1, win.T2)
    return float(np.dot(w, _sp_values(run, p, j)))


def flatness(run, ell: float, window: Optional[TimeWindow] = None) -> float:
    """F(ell) = S_4 / S_2^2."""
    win = _window(run, window)
    s2 = structure_function(run, 2.0, ell, win)
    if s2 <= 0.0:
        raise DegenerateFlatness(f"S_2({ell}) = 0")
    return structure_function(run, 4.0, ell, win) / s2**2


def band_count(k: float, M: float) -> int:
    """Number of positive integers in [k/M, M k]."""
    lo = math.ceil(k / M - 1e-12)
    hi = math.floor(M * k + 1e-12)
    return max(0, hi - max(lo, 1) + 1)


def averaged_mode_energy(run, window: Optional[TimeWindow] = None) -> np.ndarray:
    """{|u_hat[k]|^2} for k = 0 .. n/2."""
    win = _window(run, window)
    w = window_weights(run.times, win.T1, win.T2)
    acc = np.zeros(run.grid.n_modes)
    for wi, r in zip(w, run.records):
        if wi == 0.0:
            continue
        if r.mode_energy is None:
            raise RejectedInputError("run was recorded without mode energies")
        acc += wi * r.mode_energy
    return acc


def energy_spectrum(run, k: float, M: float = 2.0, window: Optional[TimeWindow] = None, _avg=None) -> float:
    """Layer-averaged spectrum E(k) over |n| in [k/M, M k], both endpoints included.

    Modes above the grid's Nyquist number are counted in the denominator
    with zero energy.
    """
    if not k >= 1 or not M >= 1:
        raise RejectedInputError("need k >= 1 and M >= 1")
    energy = averaged_mode_energy(run, window) if _avg is None else _avg
    nmax = energy.size - 1
    lo = max(1, math.ceil(k / M - 1e-12))
    hi = math.floor(M * k + 1e-12)
    count = 2 * band_count(k, M)
    top = min(hi, nmax)
    if top < lo:
        return 0.0
    mult = np.full(top - lo + 1, 2.0)
    if top == nmax:
        mult[-1] = 1.0
    return float(np.dot(mult, energy[lo : top + 1]) / count)


def _record_at(run, t: float) -> DiagnosticsRecord:
    times = run.times
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-9 * max(1.0, abs(t)):
        raise RejectedInputError(f"no record at t={t}; nearest is {times[i]}")
    return run.records[i]


def dissipation_residual(run, t_a: float, t_b: float, method: str = "steps") -> float:
    """(|u(t_b)|^2 - |u(t_a)|^2 + 2 nu int_{t_a}^{t_b} ||u||_{alpha/2}^2) / |u(t_a)|^2.

    ``method="steps"`` uses the dissipation integral accumulated by the
    integrator at every step; ``"samples"`` integrates the recorded rates by
    the trapezoid rule on the sample times.
    """
    if not t_a < t_b:
        raise RejectedInputError("need t_a < t_b")
    ra, rb = _record_at(run, t_a), _record_at(run, t_b)
    if ra.energy == 0.0:
        return 0.0
    if method == "steps":
        integral = rb.dissipated - ra.dissipated
    elif method == "samples":
        sel = [r for r in run.records if t_a - 1e-12 <= r.t <= t_b + 1e-12]
        tt = np.array([r.t for r in sel])
        rate = np.array([2.0 * r.dissipation for r in sel])
        integral = float(np.sum(0.5 * (rate[1:] + rate[:-1]) * np.diff(tt)))
    else:
        raise RejectedInputError(f"unknown method {method!r}")
    return (rb.energy - ra.energy + integral) / ra.energy


@dataclass
class StaticRun:
    """A frozen field repeated at given times; lets the diagnostics run without dynamics."""

    grid: object
    records: list
    D: Optional[float] = None
    sigma: Optional[float] = None
    nu: float = 0.0
    steps: int = 0
    wall_time: float = 0.0
    warnings: list = field(default_factory=list)

    @classmethod
    def from_field(cls, field_: SpectralField, times: Sequence[float], p_values=(0.0, 0.5, 1.0, 2.0, 4.0)):
        from .monitors import MonitorSet

        mon = MonitorSet(p_values=(), keep_spectrum=True, keep_fields=True)
        recs = []
        for t in times:
            recs.append(mon.record(field_.with_coeffs(field_.coeffs, time_tag=float(t)), 0.0, 2.0, 0.0, 0.0))
        return cls(field_.grid, recs)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])
