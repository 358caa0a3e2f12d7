"""Command-line entry point: ``fracburgers {run,sweep,analyze,verify}``."""

from __future__ import annotations

import argparse
import filecmp
import json
import logging
import math
import shutil
import sys
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .diagnostics import StaticRun, TimeWindow, compute_D, time_window
from .errors import ConfigError, FracBurgersError, WindowNotCovered
from .flux import named_flux
from .io import (
    RunConfig,
    load_config,
    load_snapshot,
    run_dirname,
    save_snapshot,
    write_run_outputs,
    write_sweep_outputs,
)
from .monitors import MonitorSet, default_ell_indices
from .presets import initial_field
from .scaling import SweepPlan, analyze_run, analyze_sweep, execute_run, reference_D, run_sweep
from .spectral import Grid, NormRequest
from .stepper import SolverRun, StepperConfig, integrate

log = logging.getLogger("fracburgers")


# ---------------------------------------------------------------------------
# single runs


def execute_config(cfg: RunConfig, resume=None):
    """Integrate ``cfg`` (optionally from a snapshot) and return (run, analysis, window, D)."""
    grid = Grid(cfg.n)
    flux = named_flux(cfg.flux)
    u0 = initial_field(grid, cfg.u0)
    D = compute_D(u0).value
    t_end = cfg.t_end if cfg.t_end is not None else 2.0 * D / flux.sigma
    plan = cfg.plan()
    initial_state = None
    if resume is not None:
        snap = load_snapshot(resume)
        if snap.state.field.grid.n_points != cfg.n:
            raise ConfigError(f"snapshot has n = {snap.state.field.grid.n_points}, config has {cfg.n}", "n")
        if snap.alpha != cfg.alpha or snap.nu != cfg.nu:
            raise ConfigError("snapshot alpha / nu differ from the config", "nu")
        initial_state = snap.state
    mon = MonitorSet(
        sample_times=plan.sample_times(t_end),
        norms=[NormRequest.parse(s) for s in cfg.norms],
        p_values=cfg.p_values,
        ell_indices=default_ell_indices(cfg.n, cfg.ell_count),
        keep_spectrum=True,
        keep_fields=cfg.snapshots > 0,
        D=D,
        sigma=flux.sigma,
    )
    stepper_cfg = StepperConfig(cfg.nu, cfg.alpha, t_end, cfg.dt_max, cfg.dt_cfl, cfg.scheme)
    run = integrate(u0, stepper_cfg, flux, mon, initial_state=initial_state)
    try:
        window = time_window(D, flux.sigma, run)
        window_weights_ok = run.records[0].t <= window.T1
    except WindowNotCovered:
        window, window_weights_ok = None, False
    analysis = None
    if window is not None and window_weights_ok:
        analysis = analyze_run(run, window, plan, plan.partition)
    else:
        log.warning("run does not cover the averaging window; time averages and fits are omitted")
    return run, analysis, window, D


def _write_snapshots(out: Path, cfg: RunConfig, run: SolverRun) -> None:
    from .stepper import SolverState
    from .spectral import SpectralField

    save_snapshot(run.final_state, out / "final.fbrg", cfg.alpha, cfg.nu)
    if cfg.snapshots <= 0:
        return
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    idx = np.unique(np.round(np.linspace(0, len(run.records) - 1, cfg.snapshots)).astype(int))
    for i in idx:
        r = run.records[i]
        st = SolverState(SpectralField(run.grid, r.coeffs, r.t), r.t, r.steps, r.dt_last)
        save_snapshot(st, snap_dir / f"snap_{i:05d}.fbrg", cfg.alpha, cfg.nu)


def do_run(cfg: RunConfig, out, resume=None) -> Path:
    run, analysis, window, D = execute_config(cfg, resume)
    out = write_run_outputs(out, cfg, run, analysis, window, D)
    _write_snapshots(out, cfg, run)
    return out


# ---------------------------------------------------------------------------
# determinism


VOLATILE_KEYS = {"wall_time", "versions"}


def _strip(obj):
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [_strip(v) for v in obj]
    return obj


def compare_outputs(a, b) -> List[str]:
    """Files that differ between two output trees (manifests compared without wall times)."""
    a, b = Path(a), Path(b)
    fa = {p.relative_to(a) for p in a.rglob("*") if p.is_file()}
    fb = {p.relative_to(b) for p in b.rglob("*") if p.is_file()}
    diffs = sorted(str(p) for p in fa ^ fb)
    for rel in sorted(fa & fb):
        pa, pb = a / rel, b / rel
        if rel.name == "manifest.json":
            same = _strip(json.loads(pa.read_text())) == _strip(json.loads(pb.read_text()))
        else:
            same = filecmp.cmp(pa, pb, shallow=False)
        if not same:
            diffs.append(str(rel))
    return diffs


def seed_check_run(cfg: RunConfig, out) -> List[str]:
    """Rerun ``cfg`` into a scratch directory and diff against ``out``."""
    with tempfile.TemporaryDirectory() as tmp:
        do_run(cfg, tmp)
        return compare_outputs(out, tmp)


def seed_check_sweep(report, out) -> List[str]:
    """Rerun the smallest-viscosity run of a sweep and diff its output directory."""
    plan = report.plan
    nu = min(report.runs)
    run = execute_run(plan, nu, report.D, report.runs[nu].config.t_end)
    from .scaling import SweepReport

    partial = SweepReport(plan, {nu: run}, {}, D=report.D)
    partial.window = report.window
    partial.analyses = {nu: analyze_run(run, report.window, plan, plan.partition)}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        from .io import _write_run_tables, write_fits

        sub = tmp / run_dirname(nu)
        sub.mkdir()
        _write_run_tables(sub, run, partial.analyses[nu], [r.label for r in plan.norm_requests()])
        write_fits(sub / "fits.csv", partial.analyses[nu].fits)
        return compare_outputs(Path(out) / run_dirname(nu), sub)


# ---------------------------------------------------------------------------
# analyze


def analyze_snapshots(paths: Sequence[str], out, K: float = 4.0, M: float = 2.0) -> Path:
    """Diagnostics of saved snapshots, averaged over the span of their times.

    A single snapshot gives instantaneous values.
    """
    files: List[Path] = []
    for p in paths:
        p = Path(p)
        files.extend(sorted(p.glob("*.fbrg")) if p.is_dir() else [p])
    if not files:
        raise ConfigError("no snapshot files given", "snapshots")
    snaps = sorted((load_snapshot(f) for f in files), key=lambda s: s.state.t)
    first = snaps[0]
    n = first.state.field.grid.n_points
    if any(s.state.field.grid.n_points != n or s.alpha != first.alpha or s.nu != first.nu for s in snaps):
        raise ConfigError("snapshots come from different runs", "snapshots")
    cfg = RunConfig(alpha=first.alpha, nu=first.nu, n=n, K=K, M=M)
    plan = cfg.plan()
    mon = MonitorSet(
        norms=[NormRequest.parse(s) for s in cfg.norms],
        p_values=cfg.p_values,
        ell_indices=default_ell_indices(n, cfg.ell_count),
    )
    grid = first.state.field.grid
    records = [mon.record(s.state.field.with_coeffs(s.state.field.coeffs, time_tag=s.state.t), s.nu, s.alpha, 0.0, 0.0) for s in snaps]
    if len(records) == 1:
        r0 = records[0]
        t0 = r0.t
        records = [r0, mon.record(snaps[0].state.field.with_coeffs(snaps[0].state.field.coeffs, time_tag=t0 + 1.0), first.nu, first.alpha, 0.0, 0.0)]
    run = StaticRun(grid, records, nu=first.nu)
    window = TimeWindow(records[0].t, records[-1].t, math.nan)
    analysis = analyze_run(run, window, plan, plan.partition)
    return write_run_outputs(out, cfg, run, analysis, window, math.nan)


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracburgers", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="integrate a single run configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--resume", default=None, help="snapshot to continue from")
    p.add_argument("--seed-check", action="store_true", help="rerun and diff outputs byte-for-byte")

    p = sub.add_parser("sweep", help="run a viscosity sweep plan")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed-check", action="store_true", help="rerun the smallest-nu run and diff its outputs")

    p = sub.add_parser("analyze", help="diagnostics of saved snapshots")
    p.add_argument("snapshots", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--K", type=float, default=4.0)
    p.add_argument("--M", type=float, default=2.0)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--out", default=None)
    p.add_argument("--seed-check", action="store_true", help="include the determinism rerun")
    return ap


def _out_dir(arg, cfg, fallback: str) -> str:
    return arg or getattr(cfg, "out", None) or fallback


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.verb == "run":
            cfg = load_config(args.config)
            if not isinstance(cfg, RunConfig):
                raise ConfigError("`run` needs a single-run config (no nu_list)", "nu_list")
            out = do_run(cfg, _out_dir(args.out, cfg, "fracburgers-run"), args.resume)
            print(f"wrote {out}")
            if args.seed_check:
                return _report_seed(seed_check_run(cfg, out))
        elif args.verb == "sweep":
            plan = load_config(args.config)
            if not isinstance(plan, SweepPlan):
                raise ConfigError("`sweep` needs a plan with nu_list", "nu_list")
            report = run_sweep(plan)
            out = write_sweep_outputs(_out_dir(args.out, None, "fracburgers-sweep"), report)
            print(f"wrote {out}")
            for nu, msg in report.failures.items():
                print(f"run nu={nu:g} failed: {msg}", file=sys.stderr)
            if args.seed_check and report.runs:
                code = _report_seed(seed_check_sweep(report, out))
                if code:
                    return code
            return 1 if report.failures else 0
        elif args.verb == "analyze":
            out = analyze_snapshots(args.snapshots, args.out, args.K, args.M)
            print(f"wrote {out}")
        elif args.verb == "verify":
            from .acceptance import run_acceptance

            results = run_acceptance(out=args.out, seed_check=args.seed_check, echo=print)
            return 0 if all(r.passed for r in results) else 1
    except FracBurgersError as exc:
        key = getattr(exc, "key", None)
        where = f" [{key}]" if key else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return 2
    return 0


def _report_seed(diffs: List[str]) -> int:
    if diffs:
        print("seed check FAILED; differing files: " + ", ".join(diffs))
        return 1
    print("seed check passed: outputs are byte-identical")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
