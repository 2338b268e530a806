"""Spectral data types and line shapes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = ["LorentzianLine", "PolarizedLine", "Spectrum", "lorentzian",
           "lorentzian_sum", "malus_factor"]


@dataclass(frozen=True)
class LorentzianLine:
    """One emission line: center (nm), full width at half maximum (nm), area (counts*nm)."""
    center: float
    fwhm: float
    area: float

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("fwhm must be positive")
        if not self.area > 0:
            raise ValueError("area must be positive")


@dataclass(frozen=True)
class PolarizedLine:
    """A line emitted by a linear dipole; ``visibility`` 0 means unpolarized."""
    line: LorentzianLine
    dipole_angle: float = 0.0
    visibility: float = 1.0

    def __post_init__(self):
        if not 0 <= self.visibility <= 1:
            raise ValueError("visibility must lie in [0, 1]")


@dataclass
class Spectrum:
    wavelengths: np.ndarray
    counts: np.ndarray
    analyzer_angle: Optional[float] = None

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.wavelengths.shape != self.counts.shape or self.wavelengths.ndim != 1:
            raise ValueError("wavelengths and counts must be 1-d arrays of equal length")
        if np.any(np.diff(self.wavelengths) <= 0):
            raise ValueError("wavelength grid must be strictly ascending")


def lorentzian(x, center, fwhm, area):
    """Area-normalized Lorentzian profile."""
    hw = 0.5 * fwhm
    return area * hw / np.pi / ((np.asarray(x, dtype=float) - center) ** 2 + hw * hw)


def lorentzian_sum(x, lines: Sequence[LorentzianLine]):
    out = np.zeros(np.shape(x))
    for ln in lines:
        out += lorentzian(x, ln.center, ln.fwhm, ln.area)
    return out


def malus_factor(analyzer_angle: Optional[float], dipole_angle: float, visibility: float) -> float:
    """Transmitted intensity fraction ``(1 - v) + v cos^2(analyzer - dipole)``.

    Angles in degrees.  ``None`` means no analyzer in the detection path.
    """
    if analyzer_angle is None:
        return 1.0
    c = np.cos(np.deg2rad(analyzer_angle - dipole_angle))
    return (1.0 - visibility) + visibility * c * c
