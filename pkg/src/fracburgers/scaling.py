"""Viscosity sweeps, log-log fits and comparison with the predicted exponents."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .diagnostics import (
    RangePartition,
    TimeWindow,
    averaged_mode_energy,
    compute_D,
    dissipation_residual,
    energy_spectrum,
    time_average,
    window_from_constants,
    window_weights,
    _sp_values,
)
from .errors import (
    FracBurgersError,
    LogDomainError,
    RejectedInputError,
    UnsupportedTarget,
    WindowNotCovered,
)
from .flux import named_flux
from .monitors import MonitorSet, default_ell_indices
from .presets import initial_field
from .spectral import Grid, NormRequest
from .stepper import SolverRun, StepperConfig, integrate

__all__ = [
    "Target",
    "theoretical_exponent",
    "default_tolerance",
    "FitResult",
    "Skipped",
    "fit_loglog",
    "GridRule",
    "SweepPlan",
    "RunAnalysis",
    "SweepReport",
    "run_sweep",
    "analyze_sweep",
]

log = logging.getLogger(__name__)

TARGET_KINDS = ("norm", "sp_ell", "sp_nu", "spectrum", "flatness")


# ---------------------------------------------------------------------------
# targets and exponents


@dataclass(frozen=True)
class Target:
    """An observable whose scaling is predicted.

    ``kind`` is one of ``norm`` (a norm against nu), ``sp_ell`` (S_p against
    ell inside J1 or J2), ``sp_nu`` (S_p against nu at a fixed ell in J1),
    ``spectrum`` (E(k) against k with 1/k in J2) and ``flatness`` (F against
    ell in J2).
    """

    kind: str
    norm: Optional[NormRequest] = None
    p: float = 2.0
    range: int = 2

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise UnsupportedTarget(self.kind)
        if self.kind == "norm" and self.norm is None:
            raise RejectedInputError("norm targets need a NormRequest")
        if self.range not in (1, 2):
            raise RejectedInputError("range must be 1 or 2")

    @property
    def label(self) -> str:
        if self.kind == "norm":
            return f"norm:{self.norm.label}"
        if self.kind == "sp_ell":
            return f"S{self.p:g}:J{self.range}"
        if self.kind == "sp_nu":
            return f"S{self.p:g}@nu:J{self.range}"
        if self.kind == "spectrum":
            return f"E:J{self.range}"
        return f"F:J{self.range}"

    @classmethod
    def parse(cls, label: str) -> "Target":
        s = label.strip()
        if s.startswith("norm:"):
            return cls("norm", norm=NormRequest.parse(s[5:]))
        m = re.fullmatch(r"S([0-9.]+)(@nu)?:J([12])", s)
        if m:
            kind = "sp_nu" if m.group(2) else "sp_ell"
            return cls(kind, p=float(m.group(1)), range=int(m.group(3)))
        m = re.fullmatch(r"([EF]):J([12])", s)
        if m:
            return cls("spectrum" if m.group(1) == "E" else "flatness", range=int(m.group(2)))
        raise UnsupportedTarget(label)


def _as_target(t: Union[str, Target, NormRequest]) -> Target:
    if isinstance(t, Target):
        return t
    if isinstance(t, NormRequest):
        return Target("norm", norm=t)
    return Target.parse(t)


def theoretical_exponent(target: Union[str, Target, NormRequest], alpha: float) -> float:
    """Predicted log-log slope for ``target``; norms are per-norm (not squared) exponents."""
    if not 1.0 < alpha <= 2.0:
        raise RejectedInputError(f"alpha must lie in (1, 2], got {alpha}")
    if isinstance(target, str):
        try:
            target = _as_target(target)
        except (UnsupportedTarget, RejectedInputError, ValueError):
            raise UnsupportedTarget(target) from None
    if not isinstance(target, (Target, NormRequest)):
        raise UnsupportedTarget(repr(target))
    target = _as_target(target)
    beta = 1.0 / (alpha - 1.0)
    if target.kind == "norm":
        req = target.norm
        if req.kind == "Lp":
            return -beta * max(0.0, -1.0 / req.p)
        if req.kind == "Wmp":
            return -beta * max(0.0, req.m - 1.0 / req.p)
        if req.kind in ("Hs", "HsIncrement"):
            return -beta * max(0.0, req.s - 0.5)
        raise UnsupportedTarget(target.label)
    p = target.p
    if target.kind == "sp_ell":
        return p if target.range == 1 else min(1.0, p)
    if target.kind == "sp_nu":
        if target.range != 1:
            raise UnsupportedTarget(target.label)
        return -beta * (p - 1.0) if p >= 1.0 else 0.0
    if target.kind == "spectrum":
        if target.range != 2:
            raise UnsupportedTarget(target.label)
        return -2.0
    if target.range != 2:
        raise UnsupportedTarget(target.label)
    return -1.0


def default_tolerance(target: Union[str, Target], alpha: float) -> float:
    """Absolute slope tolerance used to set the pass flag of a fit."""
    target = _as_target(target)
    theo = theoretical_exponent(target, alpha)
    if target.kind == "norm":
        req = target.norm
        rel = 0.20 if (req.kind == "Wmp" and req.p == math.inf) else 0.15
        return rel * abs(theo) if theo != 0 else 0.1
    if target.kind == "sp_ell":
        if target.range == 1:
            return 0.2
        return {0.5: 0.1, 2.0: 0.15}.get(target.p, 0.2)
    if target.kind == "spectrum":
        return 0.3
    return 0.2


# ---------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    n_points: int
    x_range: Tuple[float, float] = (math.nan, math.nan)
    theoretical: float = math.nan
    tolerance: float = math.nan
    convention: str = ""

    @property
    def abs_error(self) -> float:
        return abs(self.slope - self.theoretical)

    @property
    def passed(self) -> Optional[bool]:
        if math.isnan(self.theoretical) or math.isnan(self.tolerance):
            return None
        return bool(self.abs_error <= self.tolerance)

    def judged(self, theoretical: float, tolerance: float, convention: str = "") -> "FitResult":
        return FitResult(
            self.slope,
            self.intercept,
            self.r2,
            self.n_points,
            self.x_range,
            float(theoretical),
            float(tolerance),
            convention or self.convention,
        )


@dataclass(frozen=True)
class Skipped:
    """Placeholder for an observable that could not be fitted."""

    reason: str
    theoretical: float = math.nan

    passed = None


def fit_loglog(points: Sequence[Tuple[float, float]]) -> FitResult:
    """Least-squares line through (log x, log y)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise RejectedInputError(f"need at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise LogDomainError("log-log fit needs strictly positive values")
    dx = np.diff(x)
    if not (np.all(dx > 0) or np.all(dx < 0)):
        raise RejectedInputError("x must be strictly monotone")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    r2 = min(1.0, max(0.0, r2))
    return FitResult(float(slope), float(intercept), r2, len(pts), (float(x.min()), float(x.max())))


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class GridRule:
    """n(nu): a fixed size, or the smallest power of two with n nu^beta >= ``factor``."""

    kind: str = "pow2"
    n: int = 16384
    factor: float = 3.2
    n_min: int = 256
    n_max: int = 16384

    def __post_init__(self):
        if self.kind not in ("fixed", "pow2"):
            raise RejectedInputError(f"grid rule kind must be 'fixed' or 'pow2', got {self.kind!r}")
        if self.factor < 2.0:
            raise RejectedInputError("factor must be at least 2 (n nu^beta >= 2)")

    def __call__(self, nu: float, beta: float) -> int:
        if self.kind == "fixed":
            n = self.n
        else:
            need = self.factor / nu**beta
            n = max(self.n_min, 1 << max(3, math.ceil(math.log2(need) - 1e-12)))
            n = min(n, self.n_max)
        if n * nu**beta < 2.0:
            raise RejectedInputError(f"n = {n} does not resolve nu^beta = {nu**beta:.3g} (need n nu^beta >= 2)")
        return n


@dataclass(frozen=True)
class SweepPlan:
    alpha: float
    nu_list: Tuple[float, ...]
    grid_rule: GridRule = GridRule()
    flux_name: str = "burgers"
    u0_name: str = "default"
    kappa: float = 2.0
    observables: Tuple[Target, ...] = ()
    K: float = 4.0
    M: float = 2.0
    margin_decades: float = 0.5
    scheme: str = "ETDRK4"
    dt_cfl: float = 0.4
    dt_max: float = 1e-2
    samples_log: int = 240
    samples_lin: int = 120
    p_values: Tuple[float, ...] = (0.5, 1.0, 2.0, 3.0, 4.0)
    ell_count: int = 64
    strict: bool = True

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise RejectedInputError(f"alpha must lie in (1, 2], got {self.alpha}")
        nus = tuple(float(v) for v in self.nu_list)
        object.__setattr__(self, "nu_list", nus)
        object.__setattr__(self, "observables", tuple(_as_target(o) for o in self.observables))
        if any(not v > 0 for v in nus):
            raise RejectedInputError("viscosities must be positive")
        if any(b >= a for a, b in zip(nus, nus[1:])):
            raise RejectedInputError("nu_list must be strictly decreasing")
        part = self.partition
        for v in nus if self.strict else ():
            if v > part.nu0:
                raise RejectedInputError(f"nu = {v} exceeds nu0 = {part.nu0:.4g} for K = {self.K}")
            self.grid_rule(v, self.beta)
        if not self.kappa > 0:
            raise RejectedInputError("kappa must be positive")
        if self.M < 1:
            raise RejectedInputError("M must be >= 1")

    @property
    def beta(self) -> float:
        return 1.0 / (self.alpha - 1.0)

    @property
    def partition(self) -> RangePartition:
        return RangePartition(self.K, self.beta)

    def norm_requests(self) -> List[NormRequest]:
        return [o.norm for o in self.observables if o.kind == "norm"]

    def sample_times(self, t_end: float) -> np.ndarray:
        lo = np.geomspace(t_end * 1e-6, t_end, self.samples_log)
        lin = np.linspace(0.0, t_end, self.samples_lin + 1)[1:]
        return np.unique(np.concatenate([lo, lin]))


# ---------------------------------------------------------------------------
# execution


def reference_D(plan: SweepPlan) -> float:
    n = max(plan.grid_rule(v, plan.beta) for v in plan.nu_list) if plan.nu_list else 1024
    return compute_D(initial_field(Grid(n), plan.u0_name)).value


def execute_run(plan: SweepPlan, nu: float, D: float, t_end: float, keep_fields: bool = False) -> SolverRun:
    n = plan.grid_rule(nu, plan.beta)
    grid = Grid(n)
    flux = named_flux(plan.flux_name)
    u0 = initial_field(grid, plan.u0_name)
    cfg = StepperConfig(nu, plan.alpha, t_end, dt_max=plan.dt_max, dt_cfl=plan.dt_cfl, scheme=plan.scheme)
    mon = MonitorSet(
        sample_times=plan.sample_times(t_end),
        norms=plan.norm_requests(),
        p_values=plan.p_values,
        ell_indices=default_ell_indices(n, plan.ell_count),
        keep_spectrum=True,
        keep_fields=keep_fields,
        D=D,
        sigma=flux.sigma,
    )
    log.info("run alpha=%g nu=%.4g n=%d t_end=%.4g", plan.alpha, nu, n, t_end)
    return integrate(u0, cfg, flux, mon)


@dataclass
class RunAnalysis:
    """Time-averaged quantities of one run over the sweep window."""

    nu: float
    n: int
    steps: int
    wall_time: float
    C_tilde_run: float
    budget_residual: float
    maxprin_margin: float
    norms: Dict[str, float]
    ells: np.ndarray
    sp: Dict[float, np.ndarray]
    flatness: np.ndarray
    ks: np.ndarray
    spectrum: np.ndarray
    mode_energy: np.ndarray
    fits: Dict[str, Union[FitResult, Skipped]] = field(default_factory=dict)
    dissipation_slope: Union[FitResult, Skipped, None] = None


@dataclass
class SweepReport:
    plan: SweepPlan
    runs: Dict[float, SolverRun]
    failures: Dict[float, str]
    D: float = math.nan
    window: Optional[TimeWindow] = None
    analyses: Dict[float, RunAnalysis] = field(default_factory=dict)
    fits: Dict[str, Union[FitResult, Skipped]] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures and len(self.runs) == len(self.plan.nu_list)

    def all_fits(self) -> Dict[str, Union[FitResult, Skipped]]:
        """Sweep-level fits followed by per-run fits, labelled with the viscosity."""
        out = dict(self.fits)
        for nu, a in sorted(self.analyses.items(), reverse=True):
            for lab, fr in a.fits.items():
                out[f"{lab} nu={nu:.6g}"] = fr
            if a.dissipation_slope is not None:
                out[f"E:diss nu={nu:.6g}"] = a.dissipation_slope
        return out


def run_sweep(plan: SweepPlan, keep_fields: bool = False) -> SweepReport:
    """Run every viscosity of ``plan`` and analyze the results.

    A failing run stops the sweep; runs completed so far are analyzed and the
    failure is recorded in ``report.failures``.
    """
    report = SweepReport(plan, {}, {})
    if not plan.nu_list:
        return report
    flux = named_flux(plan.flux_name)
    D = reference_D(plan)
    t_end = 2.0 * D / flux.sigma
    report.D = D
    for nu in plan.nu_list:
        try:
            report.runs[nu] = execute_run(plan, nu, D, t_end, keep_fields=keep_fields)
        except FracBurgersError as exc:
            log.error("run nu=%g failed: %s", nu, exc)
            report.failures[nu] = f"{type(exc).__name__}: {exc}"
            break
    if report.runs:
        analyze_sweep(report)
    return report


def analyze_sweep(report: SweepReport, partition: Optional[RangePartition] = None) -> SweepReport:
    """Fill window, per-run analyses and fits of ``report`` from its runs."""
    plan = report.plan
    flux = named_flux(plan.flux_name)
    runs = report.runs
    if math.isnan(report.D):
        report.D = reference_D(plan)
    C_tilde = 1.2 * max(max(r.dissipation for r in run.records) for run in runs.values())
    window = window_from_constants(report.D, flux.sigma, C_tilde)
    for run in runs.values():
        if run.records[-1].t < window.T2 * (1 - 1e-12):
            raise WindowNotCovered(f"run nu={run.nu} ends before T2={window.T2:.6g}")
    report.window = window
    part = partition or plan.partition
    report.analyses = {nu: analyze_run(run, window, plan, part) for nu, run in runs.items()}
    report.fits = nu_fits(report)
    return report


def analyze_run(run: SolverRun, window: TimeWindow, plan: SweepPlan, part: RangePartition) -> RunAnalysis:
    n = run.grid.n_points
    w = window_weights(run.times, window.T1, window.T2)
    js = sorted({j for (_, j) in run.records[0].sp})
    ells = np.array(js, dtype=float) / n
    sp = {p: np.array([float(np.dot(w, _sp_values(run, p, j))) for j in js]) for p in plan.p_values}
    with np.errstate(divide="ignore", invalid="ignore"):
        flat = sp[4.0] / sp[2.0] ** 2 if (4.0 in sp and 2.0 in sp) else np.full(len(js), np.nan)
    energy = averaged_mode_energy(run, window)
    ks = np.unique(np.round(np.geomspace(1, n // 2, 60)).astype(int))
    spec = np.array([energy_spectrum(run, int(k), plan.M, window, _avg=energy) for k in ks])
    norms = {
        req.label: time_average(run, window, req, plan.kappa) for req in plan.norm_requests()
    }
    margins = [r.maxprin_margin for r in run.records if not math.isnan(r.maxprin_margin)]
    a = RunAnalysis(
        nu=run.nu,
        n=n,
        steps=run.steps,
        wall_time=run.wall_time,
        C_tilde_run=1.2 * max(r.dissipation for r in run.records),
        budget_residual=dissipation_residual(run, run.records[0].t, run.records[-1].t),
        maxprin_margin=max(margins) if margins else math.nan,
        norms=norms,
        ells=ells,
        sp=sp,
        flatness=flat,
        ks=ks,
        spectrum=spec,
        mode_energy=energy,
    )
    for tgt in plan.observables:
        if tgt.kind in ("sp_ell", "flatness", "spectrum"):
            a.fits[tgt.label] = range_fit(a, tgt, part, plan)
    a.dissipation_slope = dissipation_range_slope(a, plan.beta)
    return a


def _judge(fit: FitResult, tgt: Target, alpha: float, convention: str = "") -> FitResult:
    return fit.judged(theoretical_exponent(tgt, alpha), default_tolerance(tgt, alpha), convention)


def window_fit(xs: np.ndarray, ys: np.ndarray, lo: float, hi: float) -> Union[FitResult, Skipped]:
    """Log-log fit over the points with lo < x < hi."""
    sel = (xs > lo) & (xs < hi) & (ys > 0) & np.isfinite(ys)
    if sel.sum() < 3:
        return Skipped(f"{int(sel.sum())} usable points in ({lo:.3g}, {hi:.3g}); need 3")
    return fit_loglog(list(zip(xs[sel], ys[sel])))


def range_fit(a: RunAnalysis, tgt: Target, part: RangePartition, plan: SweepPlan):
    theo = theoretical_exponent(tgt, plan.alpha)
    try:
        lo, hi = part.fit_window(a.nu, plan.margin_decades, tgt.range)
    except RejectedInputError as exc:
        return Skipped(str(exc), theo)
    if tgt.kind == "sp_ell":
        if tgt.p not in a.sp:
            return Skipped(f"S_{tgt.p:g} not monitored", theo)
        fit = window_fit(a.ells, a.sp[tgt.p], lo, hi)
    elif tgt.kind == "flatness":
        fit = window_fit(a.ells, a.flatness, lo, hi)
    else:
        kmin = 1.0 / hi
        kmax = math.inf if lo == 0 else 1.0 / lo
        fit = window_fit(a.ks.astype(float), a.spectrum, kmin, kmax)
    if isinstance(fit, Skipped):
        return Skipped(fit.reason, theo)
    return _judge(fit, tgt, plan.alpha)


def dissipation_range_slope(a: RunAnalysis, beta: float, floor: float = 1e-28):
    """Slope of E(k) for nu^-beta <= k <= n/3, above the round-off floor."""
    kd = a.nu ** (-beta)
    top = a.n // 3
    ref = a.spectrum[0] if a.spectrum.size else 0.0
    sel = (a.ks >= kd) & (a.ks <= top) & (a.spectrum > floor * ref)
    if sel.sum() < 2:
        return Skipped(f"no resolved wavenumbers in [{kd:.4g}, {top}]")
    k, e = a.ks[sel].astype(float), a.spectrum[sel]
    if sel.sum() == 2:
        s = float(np.log(e[1] / e[0]) / np.log(k[1] / k[0]))
        return FitResult(s, math.nan, 1.0, 2, (k[0], k[1]))
    return fit_loglog(list(zip(k, e)))


def nu_fits(report: SweepReport) -> Dict[str, Union[FitResult, Skipped]]:
    plan = report.plan
    an = report.analyses
    nus = sorted(an)
    out = {}
    for tgt in plan.observables:
        if tgt.kind == "norm":
            theo = theoretical_exponent(tgt, plan.alpha)
            if len(nus) < 3:
                out[tgt.label] = Skipped(f"nu-fit needs 3 viscosities, have {len(nus)}", theo)
                continue
            pts = [(nu, an[nu].norms[tgt.norm.label]) for nu in nus]
            conv = f"per-norm, (<|.|^{plan.kappa:g}>)^(1/{plan.kappa:g}) vs nu"
            try:
                out[tgt.label] = _judge(fit_loglog(pts), tgt, plan.alpha, conv)
            except LogDomainError as exc:
                out[tgt.label] = Skipped(str(exc), theo)
        elif tgt.kind == "sp_nu":
            out[tgt.label] = sp_nu_fit(report, tgt)
    return out


def sp_nu_fit(report: SweepReport, tgt: Target):
    """S_p against nu at one separation lying on every grid and inside J1 for every nu."""
    plan = report.plan
    theo = theoretical_exponent(tgt, plan.alpha)
    an = report.analyses
    nus = sorted(an)
    if len(nus) < 3:
        return Skipped(f"nu-fit needs 3 viscosities, have {len(nus)}", theo)
    part = plan.partition
    hi = min(part.fit_window(nu, plan.margin_decades, 1)[1] for nu in nus)
    common = set.intersection(*[set(np.round(an[nu].ells, 15)) for nu in nus])
    cands = sorted(e for e in common if e < hi)
    if not cands or tgt.p not in an[nus[0]].sp:
        return Skipped(f"no separation common to all grids below {hi:.3g}", theo)
    ell = cands[-1]
    pts = []
    for nu in nus:
        i = int(np.argmin(np.abs(an[nu].ells - ell)))
        pts.append((nu, an[nu].sp[tgt.p][i]))
    try:
        return _judge(fit_loglog(pts), tgt, plan.alpha, f"fixed ell={ell:.6g}")
    except LogDomainError as exc:
        return Skipped(str(exc), theo)


def refit_ranges(report: SweepReport, K: float) -> Dict[float, Dict[str, Union[FitResult, Skipped]]]:
    """Per-run range fits redone with another K, for sensitivity reporting."""
    part = RangePartition(K, report.plan.beta)
    out = {}
    for nu, a in report.analyses.items():
        out[nu] = {
            t.label: range_fit(a, t, part, report.plan)
            for t in report.plan.observables
            if t.kind in ("sp_ell", "flatness", "spectrum")
        }
    return out
