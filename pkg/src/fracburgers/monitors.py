"""Per-sample diagnostics taken while a run is integrated."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .spectral import Grid, NormRequest, SpectralField, _irfft, derivative_symbol, norm

__all__ = ["DiagnosticsRecord", "MonitorSet", "default_ell_indices", "dissipation_rate", "increment_moments"]

MAXPRIN_SLACK = 0.05

DEFAULT_P_VALUES = (0.5, 1.0, 2.0, 3.0, 4.0)


@dataclass
class DiagnosticsRecord:
    """Snapshot of monitored quantities at time ``t``.

    ``sp`` maps ``(p, j)`` to the space integral of |u(x + j dx) - u(x)|^p,
    before any time averaging.  ``mode_energy`` holds |u_hat[k]|^2 for
    k = 0 .. n/2.  ``dissipated`` is the running integral of
    2 nu ||u||_{alpha/2}^2 from the start of the run, and ``budget_residual``
    the energy-budget defect since the start, relative to the initial energy.
    ``maxprin_margin`` is max_x u_x divided by min(D, 1/(sigma t)).
    ``steps`` and ``dt_last`` echo the integrator state, so that a record
    holding ``coeffs`` can be turned back into a resumable state.
    """

    t: float
    energy: float
    dissipation: float
    dissipated: float
    max_ux: float
    sup: float
    w11: float
    budget_residual: float
    maxprin_margin: float
    norms: Dict[NormRequest, float] = field(default_factory=dict)
    sp: Dict[Tuple[float, int], float] = field(default_factory=dict)
    mode_energy: Optional[np.ndarray] = None
    coeffs: Optional[np.ndarray] = None
    bound: float = math.nan
    steps: int = 0
    dt_last: float = 0.0

    @property
    def supnorm_margin(self) -> float:
        """|u|_inf / min(D, 1/(sigma t))."""
        return self.sup / self.bound

    @property
    def w11_margin(self) -> float:
        """|u|_{1,1} / (2 min(D, 1/(sigma t)))."""
        return self.w11 / (2.0 * self.bound)


def default_ell_indices(n: int, count: int = 64) -> np.ndarray:
    """Log-spaced lattice shifts j in [1, n/2], deduplicated."""
    j = np.unique(np.round(np.geomspace(1, n // 2, count)).astype(int))
    return j


def dissipation_rate(grid: Grid, coeffs: np.ndarray, nu: float, alpha: float) -> float:
    """nu ||u||_{alpha/2}^2."""
    sym = (2.0 * np.pi * grid.k) ** alpha
    return float(nu * np.sum(grid.multiplicity * sym * (coeffs.real**2 + coeffs.imag**2)))


def increment_moments(u: np.ndarray, p_values: Sequence[float], ell_indices: Sequence[int]):
    """Space averages of |u(x + j dx) - u(x)|^p for every p and lattice shift j."""
    out = {}
    for j in ell_indices:
        j = int(j)
        d = np.abs(np.roll(u, -j) - u)
        sq = None
        for p in p_values:
            if p == 0:
                val = 1.0
            elif p == 1:
                val = d.mean()
            elif p == 2:
                sq = d * d if sq is None else sq
                val = sq.mean()
            elif p == 4:
                sq = d * d if sq is None else sq
                val = (sq * sq).mean()
            elif p == 0.5:
                val = np.sqrt(d).mean()
            else:
                val = (d**p).mean()
            out[(float(p), j)] = float(val)
    return out


@dataclass
class MonitorSet:
    """What to record, and when.

    ``sample_times`` is the wall of times at which records are taken (the
    run start and end are always added).  ``D`` and ``sigma`` feed the
    maximum-principle margin; they are filled in by the integrator when left
    as ``None``.
    """

    sample_times: Sequence[float] = ()
    norms: Sequence[NormRequest] = ()
    p_values: Sequence[float] = DEFAULT_P_VALUES
    ell_indices: Optional[Sequence[int]] = None
    keep_spectrum: bool = True
    keep_fields: bool = False
    D: Optional[float] = None
    sigma: Optional[float] = None

    def record(self, field_: SpectralField, nu: float, alpha: float, dissipated: float, e0: float) -> DiagnosticsRecord:
        grid = field_.grid
        c = field_.coeffs
        t = float(field_.time_tag or 0.0)
        n = grid.n_points
        u = _irfft(c, n)
        ux = _irfft(derivative_symbol(grid, 1) * c, n)
        energy = float(np.mean(u * u))
        max_ux = float(ux.max())
        sup = float(np.abs(u).max())
        w11 = float(np.abs(ux).mean())
        rate = dissipation_rate(grid, c, nu, alpha)
        residual = (energy - e0 + dissipated) / e0 if e0 > 0 else 0.0

        bound = margin = math.nan
        if self.D is not None and self.sigma:
            bound = self.D if t <= 0 else min(self.D, 1.0 / (self.sigma * t))
            margin = max_ux / bound

        ells = self.ell_indices if self.ell_indices is not None else default_ell_indices(n)
        sp = increment_moments(u, self.p_values, ells) if len(self.p_values) else {}
        norms = {req: norm(field_, req) for req in self.norms}
        return DiagnosticsRecord(
            t=t,
            energy=energy,
            dissipation=rate,
            dissipated=dissipated,
            max_ux=max_ux,
            sup=sup,
            w11=w11,
            budget_residual=residual,
            maxprin_margin=margin,
            norms=norms,
            sp=sp,
            mode_energy=(c.real**2 + c.imag**2) if self.keep_spectrum else None,
            coeffs=np.array(c) if self.keep_fields else None,
            bound=bound,
        )
