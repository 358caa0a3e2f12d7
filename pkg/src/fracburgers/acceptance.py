"""Acceptance checks on the desk configuration.

The desk configuration is two viscosity sweeps (alpha = 2 and alpha = 1.5)
with Burgers flux, the default two-mode initial condition, ETDRK4, K = 4 and
M = 2.  Each viscosity list holds four points with nu^beta log-spaced in
[2e-4, 2e-3], so that n = 2^14 resolves the smallest dissipation length.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .diagnostics import (
    RangePartition,
    StaticRun,
    TimeWindow,
    energy_spectrum,
    flatness,
    structure_function,
)
from .flux import burgers, zero_flux
from .io import DEFAULT_OBSERVABLES, write_sweep_outputs
from .presets import initial_field
from .scaling import (
    FitResult,
    Skipped,
    SweepPlan,
    SweepReport,
    GridRule,
    fit_loglog,
    refit_ranges,
    run_sweep,
    window_fit,
)
from .spectral import Grid, SpectralField, forward_transform, interpolation_check
from .stepper import StepperConfig, heat_semigroup, integrate

__all__ = ["Criterion", "desk_plan", "AcceptanceContext", "evaluate", "run_acceptance", "DESK_ALPHAS"]

DESK_ALPHAS = (2.0, 1.5)
DESK_K = 4.0
SENSITIVITY_K = (2.0, 4.0, 8.0)


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def desk_nu_list(alpha: float) -> tuple:
    """Four viscosities with nu^beta log-spaced from 2e-3 down to 2e-4."""
    beta = 1.0 / (alpha - 1.0)
    scales = np.geomspace(2e-3, 2e-4, 4)
    return tuple(float(s ** (1.0 / beta)) for s in scales)


def desk_plan(alpha: float, K: float = DESK_K) -> SweepPlan:
    return SweepPlan(
        alpha=alpha,
        nu_list=desk_nu_list(alpha),
        grid_rule=GridRule("pow2", factor=3.2, n_min=256, n_max=16384),
        observables=DEFAULT_OBSERVABLES,
        K=K,
        M=2.0,
    )


# ---------------------------------------------------------------------------
# exactness and order


def exactness_checks() -> Dict[str, float]:
    """Errors of the closed-form identities (all should be at round-off level)."""
    rng = np.random.default_rng(0)
    grid = Grid(256)
    u = rng.standard_normal(grid.n_points)
    f = forward_transform(u, grid)
    v = u - u.mean()
    out = {}
    out["parseval"] = abs(float(np.sum(grid.multiplicity * np.abs(f.coeffs) ** 2)) - float(np.mean(v * v))) / float(
        np.mean(v * v)
    )

    k, nu, alpha, t = 3, 0.01, 1.5, 0.7
    mode = SpectralField.from_modes(grid, [(k, 1.0, 0.0)])
    exact = math.exp(-nu * (2 * math.pi * k) ** alpha * t) * np.sin(2 * np.pi * k * grid.x)
    out["heat_mode"] = float(np.max(np.abs(heat_semigroup(mode, nu, alpha, t).samples() - exact)))

    a = heat_semigroup(heat_semigroup(f, nu, alpha, 0.3), nu, alpha, 0.4)
    b = heat_semigroup(f, nu, alpha, 0.7)
    out["composition"] = float(np.max(np.abs(a.coeffs - b.coeffs)))

    smooth = heat_semigroup(f, 1e-3, 2.0, 1.0)
    out["interpolation_ratio"] = interpolation_check(smooth, 0.5, 0.75, 1.0).ratio

    sine = initial_field(grid, "sine")
    static = StaticRun.from_field(sine, [0.0, 1.0])
    win = TimeWindow(0.0, 1.0, math.nan)
    out["static_S2"] = abs(structure_function(static, 2.0, 0.5, win) - 2.0)
    out["static_F"] = abs(flatness(static, 0.5, win) - 1.5)
    out["static_E1"] = abs(energy_spectrum(static, 1, 2.0, win) - 0.125)
    return out


EXACTNESS_TOL = {
    "parseval": 1e-10,
    "heat_mode": 1e-12,
    "composition": 1e-12,
    "static_S2": 1e-8,
    "static_F": 1e-8,
    "static_E1": 1e-10,
}


def convergence_order(dts=(0.02, 0.01, 0.005, 0.0025), dt_ref=1e-4, scheme="ETDRK4") -> FitResult:
    """Self-convergence of the integrator on alpha = 2, nu = 0.05, u0 = sin(2 pi x), t = 0.2."""
    grid = Grid(256)
    u0 = initial_field(grid, "sine")
    cfg = StepperConfig(0.05, 2.0, 0.2, scheme=scheme)

    def final(dt):
        return integrate(u0, cfg, burgers(), fixed_dt=dt).final_state.field.samples()

    ref = final(dt_ref)
    errs = [float(np.max(np.abs(final(dt) - ref))) for dt in dts]
    return fit_loglog(list(zip(dts, errs)))


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class AcceptanceContext:
    exactness: Dict[str, float]
    order: FitResult
    reports: Dict[float, SweepReport]
    out: Path
    seed_diffs: Optional[List[str]] = None

    def runs(self):
        for alpha, rep in self.reports.items():
            for nu, run in sorted(rep.runs.items()):
                yield alpha, nu, run


def build_context(out=None, seed_check: bool = True, echo: Callable[[str], None] = lambda s: None) -> AcceptanceContext:
    out = Path(out) if out is not None else Path(tempfile.mkdtemp(prefix="fracburgers-acceptance-"))
    echo("exactness checks")
    ex = exactness_checks()
    echo("integrator order")
    order = convergence_order()
    reports = {}
    for alpha in DESK_ALPHAS:
        plan = desk_plan(alpha)
        echo(f"sweep alpha={alpha:g} nu={', '.join(f'{v:.4g}' for v in plan.nu_list)}")
        rep = run_sweep(plan)
        write_sweep_outputs(out / f"alpha_{alpha:g}", rep)
        reports[alpha] = rep
    ctx = AcceptanceContext(ex, order, reports, out)
    if seed_check:
        from .cli import seed_check_sweep

        rep = reports[1.5]
        echo("determinism rerun of the alpha=1.5 smallest-nu run")
        ctx.seed_diffs = seed_check_sweep(rep, out / "alpha_1.5") if rep.runs else ["no runs"]
    return ctx


# ---------------------------------------------------------------------------
# criteria


def _fit_text(fr) -> str:
    if isinstance(fr, Skipped):
        return f"skipped ({fr.reason})"
    return f"{fr.slope:.3f} (target {fr.theoretical:.3f} +- {fr.tolerance:.3f})"


def _range_criterion(ctx: AcceptanceContext, labels, number: int, name: str, extra=None) -> Criterion:
    """Every fit of ``labels`` on every run must be evaluable and pass."""
    ok = True
    parts = []
    for alpha, rep in ctx.reports.items():
        for nu in sorted(rep.analyses):
            a = rep.analyses[nu]
            for lab in labels:
                fr = a.fits.get(lab, Skipped("not fitted"))
                good = isinstance(fr, FitResult) and bool(fr.passed)
                ok &= good
                if nu == min(rep.analyses) or not good:
                    parts.append(f"a={alpha:g} nu={nu:.3g} {lab} {_fit_text(fr)}")
    if extra is not None:
        e_ok, e_txt = extra()
        ok &= e_ok
        parts.append(e_txt)
    if not ctx.reports or not any(rep.analyses for rep in ctx.reports.values()):
        ok = False
        parts.append("no runs")
    return Criterion(number, name, ok, "; ".join(dict.fromkeys(parts)))


def evaluate(ctx: AcceptanceContext) -> List[Criterion]:
    res = []

    bad = [k for k, tol in EXACTNESS_TOL.items() if not ctx.exactness[k] <= tol]
    ratio = ctx.exactness["interpolation_ratio"]
    if not ratio <= 1 + 1e-10:
        bad.append("interpolation_ratio")
    detail = ", ".join(f"{k}={v:.2e}" for k, v in ctx.exactness.items())
    res.append(Criterion(1, "exactness suite", not bad, detail + (f"; failing: {bad}" if bad else "")))

    o = ctx.order.slope
    res.append(Criterion(2, "ETDRK4 self-convergence order", 3.5 <= o <= 4.5, f"observed order {o:.3f}"))

    worst_b, worst_m = 0.0, 0.0
    for _, _, run in ctx.runs():
        t0, t1 = run.records[0].t, run.records[-1].t
        from .diagnostics import dissipation_residual

        worst_b = max(worst_b, abs(dissipation_residual(run, t0, t1)))
        worst_m = max(worst_m, max(r.maxprin_margin for r in run.records))
    have_runs = any(True for _ in ctx.runs())
    res.append(Criterion(3, "energy budget over [0, T2]", have_runs and worst_b < 1e-4, f"max |residual| = {worst_b:.3e}"))
    res.append(
        Criterion(4, "maximum principle max u_x <= 1.05 min(D, 1/(sigma t))", have_runs and worst_m <= 1.05, f"max ratio = {worst_m:.4f}")
    )

    ok5, parts = True, []
    for alpha, rep in ctx.reports.items():
        for lab in ("norm:H1", "norm:W1,inf"):
            fr = rep.fits.get(lab, Skipped("missing"))
            good = isinstance(fr, FitResult) and bool(fr.passed)
            ok5 &= good
            parts.append(f"a={alpha:g} {lab} per-norm slope {_fit_text(fr)}")
    res.append(Criterion(5, "nu-scaling of norms", ok5 and bool(ctx.reports), "; ".join(parts)))

    res.append(_range_criterion(ctx, ("S2:J2", "S4:J2", "S0.5:J2", "S2:J1"), 6, "structure-function slopes in J2 / J1"))
    res.append(_range_criterion(ctx, ("F:J2",), 7, "flatness slope in J2"))

    def diss():
        ok, worst = True, -math.inf
        for alpha, rep in ctx.reports.items():
            for nu, a in rep.analyses.items():
                d = a.dissipation_slope
                if not isinstance(d, FitResult):
                    ok = False
                    continue
                worst = max(worst, d.slope)
                ok &= d.slope <= -4.0
        return ok, f"steepest-allowed dissipation-range slope check: max slope {worst:.2f} (need <= -4)"

    res.append(_range_criterion(ctx, ("E:J2",), 8, "energy spectrum", extra=diss))

    ok9, parts = True, []
    for alpha, rep in ctx.reports.items():
        beta = 1.0 / (alpha - 1.0)
        fr = rep.fits.get("norm:H0.75", Skipped("missing"))
        bound = -beta * (2 * 0.75 - 1.0) * 1.2
        if isinstance(fr, FitResult):
            sq = 2.0 * fr.slope
            good = sq >= bound
            parts.append(f"a={alpha:g} squared-average slope {sq:.3f} >= {bound:.3f}")
        else:
            good = False
            parts.append(f"a={alpha:g} {fr.reason}")
        ok9 &= good
    res.append(Criterion(9, "H^0.75 upper bound", ok9 and bool(ctx.reports), "; ".join(parts)))

    if ctx.seed_diffs is None:
        res.append(Criterion(10, "determinism", False, "seed check not run"))
    else:
        res.append(
            Criterion(
                10,
                "determinism (alpha=1.5 smallest-nu rerun, byte-for-byte)",
                not ctx.seed_diffs,
                "identical" if not ctx.seed_diffs else "differs: " + ", ".join(ctx.seed_diffs),
            )
        )
    return res


# ---------------------------------------------------------------------------
# supplementary reporting


def c_tilde_spread(rep: SweepReport) -> float:
    vals = [a.C_tilde_run for a in rep.analyses.values()]
    return max(vals) / min(vals) if vals else math.nan


def k_sensitivity(rep: SweepReport, Ks=SENSITIVITY_K) -> Dict[float, Dict[float, Dict[str, object]]]:
    return {K: refit_ranges(rep, K) for K in Ks}


def calibrated_slopes(rep: SweepReport, lower_factor: float = 30.0, upper: float = 0.05) -> Dict[str, object]:
    """Slopes on ell in (lower_factor nu^beta, upper) for the smallest viscosity.

    Not an acceptance window: it locates the range where the desk runs
    actually show inertial behaviour, for comparison with the J2 fits.
    """
    if not rep.analyses:
        return {}
    nu = min(rep.analyses)
    a = rep.analyses[nu]
    lo = lower_factor * nu**rep.plan.beta
    out = {f"S{p:g}": window_fit(a.ells, a.sp[p], lo, upper) for p in sorted(a.sp)}
    out["F"] = window_fit(a.ells, a.flatness, lo, upper)
    out["E"] = window_fit(a.ks.astype(float), a.spectrum, 1.0 / upper, 1.0 / lo)
    out["window"] = (lo, upper)
    return out


def supplementary_lines(ctx: AcceptanceContext) -> List[str]:
    lines = []
    for alpha, rep in ctx.reports.items():
        lines.append(f"info a={alpha:g}: C_tilde spread across the sweep = {c_tilde_spread(rep):.3f}x (invariant: < 2)")
        part = rep.plan.partition
        for K, fits in k_sensitivity(rep).items():
            p = RangePartition(K, rep.plan.beta)
            nu = min(fits)
            lo, hi = p.fit_window(nu, rep.plan.margin_decades)
            txt = ", ".join(f"{lab} {_fit_text(fr)}" for lab, fr in fits[nu].items())
            lines.append(f"info a={alpha:g} K={K:g}: J2 fit window ({lo:.3g}, {hi:.3g}) at nu={nu:.3g}: {txt}")
        cal = calibrated_slopes(rep)
        if cal:
            lo, hi = cal.pop("window")
            txt = ", ".join(
                f"{k} {v.slope:.3f}" if isinstance(v, FitResult) else f"{k} skipped" for k, v in cal.items()
            )
            lines.append(f"info a={alpha:g}: slopes on ell in ({lo:.3g}, {hi:.3g}) [outside the admissible J2]: {txt}")
    return lines


def run_acceptance(out=None, seed_check: bool = True, echo: Callable[[str], None] = print) -> List[Criterion]:
    ctx = build_context(out, seed_check, echo)
    results = evaluate(ctx)
    for r in results:
        echo(r.line())
    for line in supplementary_lines(ctx):
        echo(line)
    echo(f"outputs in {ctx.out}")
    return results
