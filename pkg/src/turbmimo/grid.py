"""Transverse sampling grid, complex fields and the angular-spectrum Fresnel step."""

from __future__ import annotations

import contextlib
import functools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import fft as sfft

from .fftback import fourier_filter


@dataclass(frozen=True)
class Grid:
    """Square sampling lattice.

    Parameters
    ----------
    n_points : int
        Samples per axis, a power of two >= 32.
    spacing : float
        Sample pitch [m].
    """

    n_points: int
    spacing: float

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 32 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 32, got {n!r}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing!r}")

    @property
    def extent(self) -> float:
        return self.n_points * self.spacing

    @property
    def freq_spacing(self) -> float:
        """Frequency step [cycles/m]."""
        return 1.0 / (self.n_points * self.spacing)

    @property
    def nyquist(self) -> float:
        return 1.0 / (2.0 * self.spacing)

    @property
    def cell_area(self) -> float:
        return self.spacing * self.spacing

    @functools.cached_property
    def coords(self) -> np.ndarray:
        """Centered 1-D coordinates; sample ``n_points // 2`` sits on the axis."""
        return (np.arange(self.n_points) - self.n_points // 2) * self.spacing

    @functools.cached_property
    def freqs(self) -> np.ndarray:
        """1-D spatial frequencies in FFT order [cycles/m]."""
        return sfft.fftfreq(self.n_points, self.spacing)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` coordinate arrays, rows indexed by y."""
        return np.meshgrid(self.coords, self.coords, indexing="xy")

    def freq_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.freqs, self.freqs, indexing="xy")

    @functools.cached_property
    def freq_sq(self) -> np.ndarray:
        fx, fy = self.freq_mesh()
        out = fx * fx + fy * fy
        out.setflags(write=False)
        return out


def make_grid(n_points: int, spacing: float) -> Grid:
    return Grid(n_points, float(spacing))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Scalar complex envelope sampled on a grid."""

    samples: np.ndarray
    grid: Grid

    def __post_init__(self):
        shape = (self.grid.n_points, self.grid.n_points)
        if self.samples.shape != shape:
            raise ValueError(f"samples shape {self.samples.shape} does not match grid {shape}")

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.grid.cell_area)

    def normalized(self) -> "ComplexField":
        p = self.power
        if p <= 0:
            raise ValueError("cannot normalize a zero field")
        return ComplexField(self.samples / np.sqrt(p), self.grid)


@dataclass(frozen=True, eq=False)
class AbsorberWindow:
    """Separable raised-cosine taper over the outer guard band."""

    profile: np.ndarray
    grid: Grid
    guard_fraction: float = 0.1


def _taper_1d(coords: np.ndarray, half_extent: float, guard_fraction: float) -> np.ndarray:
    inner = (1.0 - guard_fraction) * half_extent
    s = (np.abs(coords) - inner) / (half_extent - inner)
    return np.where(s <= 0, 1.0, 0.5 * (1.0 + np.cos(np.pi * np.clip(s, 0.0, 1.0))))


def make_absorber(grid: Grid, guard_fraction: float = 0.1) -> AbsorberWindow:
    if not 0 <= guard_fraction < 1:
        raise ValueError("guard_fraction must lie in [0, 1)")
    if guard_fraction == 0:
        profile = np.ones((grid.n_points, grid.n_points))
    else:
        t = _taper_1d(grid.coords, grid.extent / 2, guard_fraction)
        profile = np.outer(t, t)
    profile.setflags(write=False)
    return AbsorberWindow(profile, grid, guard_fraction)


# Debug hook: flips the sign of the quadratic transfer-function exponent.
_TRANSFER_SIGN = [1.0]


@contextlib.contextmanager
def inject_transfer_sign_flip():
    """Temporarily conjugate the Fresnel chirp (fault-injection hook for validation)."""
    _TRANSFER_SIGN[0] = -1.0
    try:
        yield
    finally:
        _TRANSFER_SIGN[0] = 1.0


def _piston_phase(distance: float, wavelength: float) -> complex:
    # exp(i k0 d) with k0 d reduced modulo 2*pi in exact rational arithmetic.
    cycles = Fraction(distance) / Fraction(wavelength)
    frac = float(cycles - (cycles.numerator // cycles.denominator))
    return complex(np.exp(2j * np.pi * frac))


@functools.lru_cache(maxsize=64)
def _transfer(grid: Grid, distance: float, wavelength: float, sign: float) -> np.ndarray:
    h = _piston_phase(distance, wavelength) * np.exp(
        -1j * sign * np.pi * wavelength * distance * grid.freq_sq
    )
    h.setflags(write=False)
    return h


def transfer_function(grid: Grid, distance: float, wavelength: float) -> np.ndarray:
    """Fresnel transfer function H(fx, fy) in FFT order."""
    return _transfer(grid, float(distance), float(wavelength), _TRANSFER_SIGN[0])


def propagate_samples(
    samples: np.ndarray, grid: Grid, distance: float, wavelength: float, overwrite: bool = False
) -> np.ndarray:
    """Angular-spectrum step on raw arrays; the last two axes are transverse.

    ``overwrite=True`` lets the transform reuse ``samples`` as scratch space.
    """
    if distance < 0:
        raise ValueError(f"propagation distance must be non-negative, got {distance}")
    if distance == 0:
        return samples.copy()
    return fourier_filter(samples, transfer_function(grid, distance, wavelength), overwrite)


def fresnel_propagate(field: ComplexField, distance: float, wavelength: float) -> ComplexField:
    """Propagate ``field`` a distance ``distance`` in vacuum.

    Uses unitary FFTs and the paraxial transfer function
    ``exp(i k0 d) exp(-i pi lambda d (fx^2 + fy^2))``, so discrete power is conserved.
    """
    return ComplexField(propagate_samples(field.samples, field.grid, distance, wavelength), field.grid)


def _check_grid(a: Grid, b: Grid):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def apply_phase_screen(field: ComplexField, screen) -> ComplexField:
    _check_grid(field.grid, screen.grid)
    return ComplexField(field.samples * screen.transmittance, field.grid)


def apply_absorber(field: ComplexField, window: AbsorberWindow) -> tuple[ComplexField, float]:
    """Multiply by the taper; returns the attenuated field and the power removed."""
    _check_grid(field.grid, window.grid)
    out = ComplexField(field.samples * window.profile, field.grid)
    absorbed = float(np.sum((1.0 - window.profile**2) * np.abs(field.samples) ** 2) * field.grid.cell_area)
    return out, absorbed
