"""Configuration files, binary snapshots and the CSV / JSON outputs of runs and sweeps."""

from __future__ import annotations

import csv
import json
import math
import platform
import struct
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from . import __version__
from .diagnostics import RangePartition, TimeWindow
from .errors import ConfigError, FracBurgersError, OutputError, SnapshotError
from .flux import FLUX_NAMES
from .presets import PRESETS
from .scaling import FitResult, GridRule, RunAnalysis, Skipped, SweepPlan, SweepReport, Target
from .spectral import Grid, NormRequest, SpectralField
from .stepper import SCHEMES, SolverState

__all__ = [
    "RunConfig",
    "parse_config",
    "serialize_config",
    "load_config",
    "save_snapshot",
    "load_snapshot",
    "write_run_outputs",
    "write_sweep_outputs",
    "fmt",
    "OUTPUT_FORMAT_VERSION",
]

OUTPUT_FORMAT_VERSION = 1
SNAPSHOT_MAGIC = b"FBRG"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQddd")
_TRAILER = struct.Struct("<Qd")

DEFAULT_NORMS = ("L2", "Linf", "W1,1", "W1,inf", "H0.5", "H0.75", "H1")
DEFAULT_OBSERVABLES = (
    "norm:H1",
    "norm:W1,inf",
    "norm:H0.75",
    "S2:J2",
    "S4:J2",
    "S0.5:J2",
    "S2:J1",
    "F:J2",
    "E:J2",
)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """One integration: solver settings, initial condition, monitor cadence and output place.

    ``u0`` is a preset name or a tuple of (k, amplitude, phase) sine modes.
    ``t_end = None`` means 2 D / sigma, the end of the averaging window.
    ``snapshots`` is the number of recorded states written as snapshot files.
    """

    alpha: float
    nu: float
    n: int
    flux: str = "burgers"
    t_end: Optional[float] = None
    dt_max: float = 1e-2
    dt_cfl: float = 0.4
    scheme: str = "ETDRK4"
    u0: Union[str, Tuple[Tuple[int, float, float], ...]] = "default"
    samples_log: int = 240
    samples_lin: int = 120
    norms: Tuple[str, ...] = DEFAULT_NORMS
    p_values: Tuple[float, ...] = (0.5, 1.0, 2.0, 3.0, 4.0)
    ell_count: int = 64
    K: float = 4.0
    M: float = 2.0
    kappa: float = 2.0
    snapshots: int = 0
    out: Optional[str] = None

    def plan(self) -> SweepPlan:
        """The one-viscosity plan used to analyze this run."""
        obs = tuple(f"norm:{lab}" for lab in self.norms) + tuple(
            o for o in DEFAULT_OBSERVABLES if not o.startswith("norm:")
        )
        return SweepPlan(
            alpha=self.alpha,
            nu_list=(self.nu,),
            grid_rule=GridRule("fixed", n=self.n),
            flux_name=self.flux,
            u0_name=self.u0 if isinstance(self.u0, str) else "default",
            kappa=self.kappa,
            observables=obs,
            K=self.K,
            M=self.M,
            scheme=self.scheme,
            dt_cfl=self.dt_cfl,
            dt_max=self.dt_max,
            samples_log=self.samples_log,
            samples_lin=self.samples_lin,
            p_values=self.p_values,
            ell_count=self.ell_count,
            strict=False,
        )


_RUN_KEYS = {f.name for f in fields(RunConfig)}
_PLAN_KEYS = {
    "alpha",
    "nu_list",
    "grid_rule",
    "flux",
    "u0",
    "kappa",
    "observables",
    "K",
    "M",
    "margin_decades",
    "scheme",
    "dt_cfl",
    "dt_max",
    "samples_log",
    "samples_lin",
    "p_values",
    "ell_count",
    "out",
}
_GRID_RULE_KEYS = {f.name for f in fields(GridRule)}


def _num(doc, key, kind=float, lo=None, hi=None, lo_open=False, required=False, default=None):
    if key not in doc:
        if required:
            raise ConfigError(f"missing required key {key!r}", key)
        return default
    raw = doc[key]
    if raw is None:
        return None
    try:
        if isinstance(raw, bool):
            raise ValueError
        if kind is int:
            val = int(raw)
            if val != float(raw):
                raise ValueError
        else:
            # YAML 1.1 reads "1e-3" as a string
            val = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {raw!r}", key) from None
    if not math.isfinite(val):
        raise ConfigError(f"{key}: must be finite", key)
    if lo is not None and (val < lo or (lo_open and val == lo)):
        raise ConfigError(f"{key} = {val} is out of range", key)
    if hi is not None and val > hi:
        raise ConfigError(f"{key} = {val} is out of range", key)
    return val


def _alpha(doc):
    a = _num(doc, "alpha", required=True)
    if not 1.0 < a <= 2.0:
        raise ConfigError(f"alpha = {a} outside (1, 2]; the supercritical range is not supported", "alpha")
    return a


def _u0(doc):
    raw = doc.get("u0", "default")
    if isinstance(raw, str):
        if raw not in PRESETS:
            raise ConfigError(f"u0: unknown preset {raw!r}", "u0")
        return raw
    try:
        modes = tuple((int(m[0]), float(m[1]), float(m[2])) for m in raw)
    except (TypeError, ValueError, IndexError):
        raise ConfigError("u0: expected a preset name or a list of [k, amplitude, phase]", "u0") from None
    if not modes or any(k < 1 for k, _, _ in modes):
        raise ConfigError("u0: modes need k >= 1", "u0")
    return modes


def _flux(doc):
    name = doc.get("flux", "burgers")
    if name not in FLUX_NAMES:
        raise ConfigError(f"flux: unknown flux {name!r}", "flux")
    return name


def _scheme(doc):
    s = doc.get("scheme", "ETDRK4")
    if s not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}", "scheme")
    return s


def _floats(doc, key, default):
    raw = doc.get(key, default)
    try:
        vals = tuple(float(v) for v in raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a list of numbers", key) from None
    return vals


def _strings(doc, key, default):
    raw = doc.get(key, default)
    if isinstance(raw, str) or not all(isinstance(v, str) for v in raw):
        raise ConfigError(f"{key}: expected a list of strings", key)
    return tuple(raw)


def _run_config(doc: dict) -> RunConfig:
    unknown = set(doc) - _RUN_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r}", key)
    n = _num(doc, "n", int, lo=8, required=True)
    if n % 2:
        raise ConfigError("n must be even", "n")
    norms = _strings(doc, "norms", DEFAULT_NORMS)
    for lab in norms:
        try:
            NormRequest.parse(lab)
        except (FracBurgersError, ValueError):
            raise ConfigError(f"norms: cannot parse {lab!r}", "norms") from None
    cfg = RunConfig(
        alpha=_alpha(doc),
        nu=_num(doc, "nu", lo=0.0, lo_open=True, required=True),
        n=n,
        flux=_flux(doc),
        t_end=_num(doc, "t_end", lo=0.0, lo_open=True),
        dt_max=_num(doc, "dt_max", lo=0.0, lo_open=True, default=1e-2),
        dt_cfl=_num(doc, "dt_cfl", lo=0.0, lo_open=True, default=0.4),
        scheme=_scheme(doc),
        u0=_u0(doc),
        samples_log=_num(doc, "samples_log", int, lo=0, default=240),
        samples_lin=_num(doc, "samples_lin", int, lo=0, default=120),
        norms=norms,
        p_values=_floats(doc, "p_values", (0.5, 1.0, 2.0, 3.0, 4.0)),
        ell_count=_num(doc, "ell_count", int, lo=2, default=64),
        K=_num(doc, "K", lo=1.0, default=4.0),
        M=_num(doc, "M", lo=1.0, default=2.0),
        kappa=_num(doc, "kappa", lo=0.0, lo_open=True, default=2.0),
        snapshots=_num(doc, "snapshots", int, lo=0, default=0),
        out=doc.get("out"),
    )
    if any(p < 0 for p in cfg.p_values):
        raise ConfigError("p_values must be nonnegative", "p_values")
    return cfg


def _plan(doc: dict) -> SweepPlan:
    unknown = set(doc) - _PLAN_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r}", key)
    gr = doc.get("grid_rule", {}) or {}
    if not isinstance(gr, dict) or set(gr) - _GRID_RULE_KEYS:
        raise ConfigError("grid_rule: expected a mapping with keys " + ", ".join(sorted(_GRID_RULE_KEYS)), "grid_rule")
    try:
        rule = GridRule(
            kind=gr.get("kind", "pow2"),
            n=_num(gr, "n", int, lo=8, default=16384),
            factor=_num(gr, "factor", default=3.2),
            n_min=_num(gr, "n_min", int, lo=8, default=256),
            n_max=_num(gr, "n_max", int, lo=8, default=16384),
        )
    except ConfigError as exc:
        raise ConfigError(str(exc), "grid_rule") from None
    except FracBurgersError as exc:
        raise ConfigError(f"grid_rule: {exc}", "grid_rule") from None
    u0 = _u0(doc)
    if not isinstance(u0, str):
        raise ConfigError("sweeps take a preset name for u0", "u0")
    kw = dict(
        alpha=_alpha(doc),
        nu_list=_floats(doc, "nu_list", ()),
        grid_rule=rule,
        flux_name=_flux(doc),
        u0_name=u0,
        kappa=_num(doc, "kappa", lo=0.0, lo_open=True, default=2.0),
        observables=_strings(doc, "observables", DEFAULT_OBSERVABLES),
        K=_num(doc, "K", lo=1.0, default=4.0),
        M=_num(doc, "M", lo=1.0, default=2.0),
        margin_decades=_num(doc, "margin_decades", lo=0.0, default=0.5),
        scheme=_scheme(doc),
        dt_cfl=_num(doc, "dt_cfl", lo=0.0, lo_open=True, default=0.4),
        dt_max=_num(doc, "dt_max", lo=0.0, lo_open=True, default=1e-2),
        samples_log=_num(doc, "samples_log", int, lo=0, default=240),
        samples_lin=_num(doc, "samples_lin", int, lo=0, default=120),
        p_values=_floats(doc, "p_values", (0.5, 1.0, 2.0, 3.0, 4.0)),
        ell_count=_num(doc, "ell_count", int, lo=2, default=64),
    )
    for lab in kw["observables"]:
        try:
            Target.parse(lab)
        except (FracBurgersError, KeyError, ValueError):
            raise ConfigError(f"observables: cannot parse {lab!r}", "observables") from None
    try:
        return SweepPlan(**kw)
    except FracBurgersError as exc:
        raise ConfigError(f"invalid sweep plan: {exc}", "nu_list") from None


def parse_config(text: str) -> Union[RunConfig, SweepPlan]:
    """Parse a YAML document into a :class:`RunConfig` or, when it has ``nu_list``, a :class:`SweepPlan`."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed document: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping of keys to values")
    if "nu_list" in doc:
        return _plan(doc)
    return _run_config(doc)


def load_config(path) -> Union[RunConfig, SweepPlan]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def config_dict(cfg: Union[RunConfig, SweepPlan]) -> dict:
    if isinstance(cfg, RunConfig):
        d = asdict(cfg)
        d["u0"] = cfg.u0 if isinstance(cfg.u0, str) else [list(m) for m in cfg.u0]
        d["norms"] = list(cfg.norms)
        d["p_values"] = list(cfg.p_values)
        return d
    return {
        "alpha": cfg.alpha,
        "nu_list": list(cfg.nu_list),
        "grid_rule": asdict(cfg.grid_rule),
        "flux": cfg.flux_name,
        "u0": cfg.u0_name,
        "kappa": cfg.kappa,
        "observables": [o.label for o in cfg.observables],
        "K": cfg.K,
        "M": cfg.M,
        "margin_decades": cfg.margin_decades,
        "scheme": cfg.scheme,
        "dt_cfl": cfg.dt_cfl,
        "dt_max": cfg.dt_max,
        "samples_log": cfg.samples_log,
        "samples_lin": cfg.samples_lin,
        "p_values": list(cfg.p_values),
        "ell_count": cfg.ell_count,
    }


def serialize_config(cfg: Union[RunConfig, SweepPlan]) -> str:
    return yaml.safe_dump(config_dict(cfg), sort_keys=False)


# ---------------------------------------------------------------------------
# snapshots


def save_snapshot(state: SolverState, path, alpha: float, nu: float) -> None:
    """Write header, the n/2 + 1 coefficients as little-endian f64 pairs, then (steps, dt_last)."""
    f = state.field
    n = f.grid.n_points
    c = np.ascontiguousarray(f.coeffs, dtype="<c16")
    head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n, float(alpha), float(nu), float(state.t))
    tail = _TRAILER.pack(int(state.step_count), float(state.dt_last))
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(c.view("<f8").tobytes())
            fh.write(tail)
    except OSError as exc:
        raise SnapshotError(f"cannot write snapshot {path}: {exc}") from None


@dataclass(frozen=True)
class Snapshot:
    state: SolverState
    alpha: float
    nu: float


def load_snapshot(path) -> Snapshot:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from None
    if len(data) < _HEADER.size:
        raise SnapshotError("file too short for a snapshot header")
    magic, version, n, alpha, nu, t = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if n < 8 or n % 2:
        raise SnapshotError(f"invalid grid size {n}")
    m = n // 2 + 1
    want = _HEADER.size + 16 * m + _TRAILER.size
    if len(data) != want:
        raise SnapshotError(f"length {len(data)} does not match n = {n} (expected {want})")
    c = np.frombuffer(data, dtype="<f8", count=2 * m, offset=_HEADER.size).view("<c16").astype(np.complex128)
    if c[0] != 0:
        raise SnapshotError("mean mode is not zero")
    steps, dt_last = _TRAILER.unpack_from(data, _HEADER.size + 16 * m)
    try:
        fld = SpectralField(Grid(int(n)), c, t)
    except FracBurgersError as exc:
        raise SnapshotError(f"invalid payload: {exc}") from None
    return Snapshot(SolverState(fld, t, int(steps), dt_last), alpha, nu)


# ---------------------------------------------------------------------------
# tabular outputs


def fmt(x) -> str:
    """17 significant digits, enough to recover the float exactly."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _write_dat(path: Path, xs, ys, comment: str) -> None:
    lines = [f"# {comment}"]
    for x, y in zip(xs, ys):
        lines.append(f"{fmt(x)} {fmt(y)}")
    path.write_text("\n".join(lines) + "\n")


FITS_HEADER = ("observable", "slope", "theoretical", "abs_error", "r2", "pass", "n_points", "x_min", "x_max", "convention")


def _fit_row(label: str, fr) -> List:
    if isinstance(fr, Skipped):
        theo = "" if math.isnan(fr.theoretical) else fmt(fr.theoretical)
        return [label, "", theo, "", "", "skipped", "0", "", "", fr.reason]
    passed = fr.passed
    return [
        label,
        fr.slope,
        "" if math.isnan(fr.theoretical) else fr.theoretical,
        "" if math.isnan(fr.theoretical) else fr.abs_error,
        fr.r2,
        "" if passed is None else passed,
        fr.n_points,
        fr.x_range[0],
        fr.x_range[1],
        fr.convention,
    ]


def write_fits(path: Path, fits: Dict[str, Union[FitResult, Skipped]]) -> None:
    _write_csv(path, FITS_HEADER, (_fit_row(k, v) for k, v in fits.items()))


def _ensure_dir(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"cannot write to {out}: {exc}") from None
    return out


def _write_run_tables(out: Path, run, a: Optional[RunAnalysis], norm_labels: Sequence[str]) -> None:
    rows = []
    if run is not None:
        reqs = [NormRequest.parse(s) for s in norm_labels]
        for r in run.records:
            rows.append([r.t] + [r.norms.get(q, math.nan) for q in reqs])
    _write_csv(out / "norms.csv", ["t"] + list(norm_labels), rows)
    if a is None:
        _write_csv(out / "structure.csv", ["ell", "p", "S_p"], [])
        _write_csv(out / "spectrum.csv", ["k", "E_k"], [])
        return
    srows = [[ell, p, a.sp[p][i]] for p in sorted(a.sp) for i, ell in enumerate(a.ells)]
    _write_csv(out / "structure.csv", ["ell", "p", "S_p"], srows)
    _write_csv(out / "spectrum.csv", ["k", "E_k"], zip(a.ks, a.spectrum))
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    for p in sorted(a.sp):
        _write_dat(plots / f"S{p:g}_vs_ell.dat", a.ells, a.sp[p], f"ell S_{p:g}(ell), time-averaged")
    _write_dat(plots / "F_vs_ell.dat", a.ells, a.flatness, "ell F(ell)")
    _write_dat(plots / "E_vs_k.dat", a.ks, a.spectrum, "k E(k)")
    if run is not None:
        _write_dat(plots / "energy_vs_t.dat", run.times, [r.energy for r in run.records], "t |u|^2")
        _write_dat(plots / "maxux_vs_t.dat", run.times, [r.max_ux for r in run.records], "t max u_x")


def _window_constants(window: Optional[TimeWindow], part: RangePartition) -> dict:
    d = {"K": part.K, "C1": part.C1, "C2": part.C2, "nu0": part.nu0}
    if window is not None:
        d.update({"T1": window.T1, "T2": window.T2, "C_tilde": window.C_tilde})
    return d


def _versions() -> dict:
    return {
        "fracburgers": __version__,
        "numpy": np.__version__,
        "pyyaml": yaml.__version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
    }


def _run_entry(a: RunAnalysis) -> dict:
    return {
        "nu": a.nu,
        "n": a.n,
        "steps": a.steps,
        "wall_time": a.wall_time,
        "C_tilde_run": a.C_tilde_run,
        "budget_residual": a.budget_residual,
        "maxprin_margin": a.maxprin_margin,
    }


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def write_run_outputs(out, cfg: RunConfig, run, analysis: Optional[RunAnalysis], window: Optional[TimeWindow], D: float) -> Path:
    """Write the outputs of a single run to ``out``."""
    out = _ensure_dir(out)
    _write_run_tables(out, run, analysis, cfg.norms)
    write_fits(out / "fits.csv", analysis.fits if analysis is not None else {})
    manifest = {
        "format_version": OUTPUT_FORMAT_VERSION,
        "kind": "run",
        "config": config_dict(cfg),
        "versions": _versions(),
        "D": D,
        "sigma": run.sigma if run is not None else None,
        "constants": _window_constants(window, RangePartition(cfg.K, 1.0 / (cfg.alpha - 1.0))),
        "runs": [_run_entry(analysis)] if analysis is not None else [],
        "wall_time": run.wall_time if run is not None else 0.0,
        "warnings": list(run.warnings) if run is not None else [],
    }
    _dump_json(out / "manifest.json", manifest)
    return out


def run_dirname(nu: float) -> str:
    return f"nu_{nu:.6g}"


def write_sweep_outputs(out, report: SweepReport) -> Path:
    """Top-level fits / manifest / nu-tables plus one sub-directory per viscosity."""
    out = _ensure_dir(out)
    plan = report.plan
    labels = [r.label for r in plan.norm_requests()]
    an = report.analyses
    nus = sorted(an)
    # top-level norms.csv: time-averaged norms against nu
    _write_csv(out / "norms.csv", ["nu"] + labels, ([nu] + [an[nu].norms[l] for l in labels] for nu in nus))
    if nus:
        finest = an[nus[0]]
        srows = [[ell, p, finest.sp[p][i]] for p in sorted(finest.sp) for i, ell in enumerate(finest.ells)]
        erows = list(zip(finest.ks, finest.spectrum))
    else:
        srows, erows = [], []
    _write_csv(out / "structure.csv", ["ell", "p", "S_p"], srows)
    _write_csv(out / "spectrum.csv", ["k", "E_k"], erows)
    write_fits(out / "fits.csv", report.all_fits())
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    for lab in labels:
        safe = lab.replace(",", "_")
        _write_dat(plots / f"norm_{safe}_vs_nu.dat", nus, [an[nu].norms[lab] for nu in nus], f"nu ({{|u|_{lab}^{plan.kappa:g}}})^(1/{plan.kappa:g})")
    for nu in nus:
        sub = out / run_dirname(nu)
        sub.mkdir(exist_ok=True)
        _write_run_tables(sub, report.runs.get(nu), an[nu], labels)
        write_fits(sub / "fits.csv", an[nu].fits)
    manifest = {
        "format_version": OUTPUT_FORMAT_VERSION,
        "kind": "sweep",
        "config": config_dict(plan),
        "versions": _versions(),
        "D": report.D,
        "constants": _window_constants(report.window, plan.partition),
        "runs": [_run_entry(an[nu]) for nu in nus],
        "failures": {fmt(k): v for k, v in report.failures.items()},
        "wall_time": sum(a.wall_time for a in an.values()),
    }
    _dump_json(out / "manifest.json", manifest)
    return out


def read_manifest(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("format_version") != OUTPUT_FORMAT_VERSION:
        raise OutputError(f"unsupported output format version {data.get('format_version')!r}")
    return data
