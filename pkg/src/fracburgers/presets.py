"""Named initial conditions, given as lists of (k, amplitude, phase) sine modes."""

from __future__ import annotations

from typing import Sequence, Tuple, Union

from .errors import RejectedInputError
from .spectral import Grid, SpectralField

Mode = Tuple[int, float, float]

PRESETS = {
    # sin(2 pi x) + 0.6 sin(4 pi x + 1)
    "default": ((1, 1.0, 0.0), (2, 0.6, 1.0)),
    "sine": ((1, 1.0, 0.0),),
}


def preset_modes(name: str) -> Tuple[Mode, ...]:
    try:
        return PRESETS[name]
    except KeyError:
        raise RejectedInputError(f"unknown initial condition {name!r}; choose from {sorted(PRESETS)}") from None


def initial_field(grid: Grid, spec: Union[str, Sequence[Mode]] = "default") -> SpectralField:
    """u0 = sum of amplitude * sin(2 pi k x + phase) over the given modes."""
    modes = preset_modes(spec) if isinstance(spec, str) else tuple(spec)
    if not modes:
        raise RejectedInputError("initial condition needs at least one mode")
    return SpectralField.from_modes(grid, modes, time_tag=0.0)
