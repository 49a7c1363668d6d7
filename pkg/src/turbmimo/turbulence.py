"""Von Karman turbulence statistics and AR(1)-correlated phase-screen synthesis."""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special

from .grid import Grid
from .rng import stream

SUBHARMONIC_LEVELS = 3  # levels below the FFT bin width


@dataclass(frozen=True)
class TurbulenceParams:
    """Path and medium parameters.

    Attributes
    ----------
    cn2 : float
        Refractive-index structure constant [m^-2/3]; 0 means vacuum.
    outer_scale, inner_scale : float
        L0 and l0 [m].
    wavelength, path_length : float
        [m].
    n_slabs : int
        Number of split-step slabs K.
    rho_z : float
        AR(1) coefficient linking consecutive screens.
    """

    cn2: float
    outer_scale: float = 30.0
    inner_scale: float = 5e-3
    wavelength: float = 1550e-9
    path_length: float = 10e3
    n_slabs: int = 40
    rho_z: float = 0.9

    def __post_init__(self):
        if self.cn2 < 0:
            raise ValueError("cn2 must be non-negative")
        if not self.outer_scale > self.inner_scale > 0:
            raise ValueError("need outer_scale > inner_scale > 0")
        if self.n_slabs < 1:
            raise ValueError("n_slabs must be >= 1")
        if not 0 <= self.rho_z < 1:
            raise ValueError("rho_z must lie in [0, 1)")
        if not (self.wavelength > 0 and self.path_length > 0):
            raise ValueError("wavelength and path_length must be positive")

    @property
    def kappa0(self) -> float:
        return 2 * np.pi / self.outer_scale

    @property
    def kappa_m(self) -> float:
        return 5.92 / self.inner_scale

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def dz(self) -> float:
        return self.path_length / self.n_slabs


def vonkarman_psd(kappa, params: TurbulenceParams):
    """Modified von Karman index spectrum Phi_n(kappa) [m^3]."""
    kappa = np.asarray(kappa, dtype=float)
    return (
        0.033
        * params.cn2
        * (kappa**2 + params.kappa0**2) ** (-11.0 / 6.0)
        * np.exp(-(kappa**2) / params.kappa_m**2)
    )


def screen_psd(kappa, params: TurbulenceParams):
    """Thin-screen phase spectrum 2 pi k0^2 dz Phi_n(kappa) for one slab."""
    return 2 * np.pi * params.k0**2 * params.dz * vonkarman_psd(kappa, params)


def fried_parameter(params: TurbulenceParams) -> float:
    if params.cn2 == 0:
        return np.inf
    return (0.423 * params.k0**2 * params.cn2 * params.path_length) ** (-3.0 / 5.0)


def rytov_variance(params: TurbulenceParams) -> float:
    return 1.23 * params.cn2 * params.k0 ** (7.0 / 6.0) * params.path_length ** (11.0 / 6.0)


def phase_structure_function(r, params: TurbulenceParams) -> np.ndarray:
    """Single-slab phase structure function by 1-D Hankel-type quadrature.

    D(r) = 8 pi^2 k0^2 dz * int_0^inf kappa Phi_n(kappa) (1 - J0(kappa r)) dkappa
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    pref = 8 * np.pi**2 * params.k0**2 * params.dz
    # log-spaced breakpoints keep quad accurate across the oscillatory tail
    edges = np.concatenate(([0.0], np.logspace(-4, np.log10(20 * params.kappa_m), 80)))
    out = np.empty_like(r)
    for i, ri in enumerate(r):
        f = lambda k: k * vonkarman_psd(k, params) * (1.0 - special.j0(k * ri))
        out[i] = pref * sum(integrate.quad(f, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    return out


@dataclass(frozen=True, eq=False)
class PhaseScreen:
    phase: np.ndarray
    grid: Grid
    slab_index: int

    @functools.cached_property
    def transmittance(self) -> np.ndarray:
        """exp(i phase), computed once per screen."""
        t = np.empty(self.phase.shape, dtype=complex)
        t.real = np.cos(self.phase)
        t.imag = np.sin(self.phase)
        t.setflags(write=False)
        return t


@functools.lru_cache(maxsize=8)
def _bin_power(grid: Grid, params: TurbulenceParams, inner_ring: bool) -> np.ndarray:
    """Phase variance Phi_phi dkappa^2 carried by each FFT bin, DC bin zeroed.

    ``inner_ring=False`` also zeroes the eight bins around DC, for use when
    subharmonics take over that region.
    """
    power = screen_psd(2 * np.pi * np.sqrt(grid.freq_sq), params) * (2 * np.pi * grid.freq_spacing) ** 2
    power[0, 0] = 0.0
    if not inner_ring:
        power[np.ix_([-1, 0, 1], [-1, 0, 1])] = 0.0
    power.setflags(write=False)
    return power


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    z = rng.standard_normal((2,) + tuple(shape))
    return (z[0] + 1j * z[1]) / np.sqrt(2.0)


class _Subharmonics:
    """Low-frequency patch replacing the 3x3 FFT bins around DC.

    Level 0 uses cells of one bin width around the origin; levels 1 to 3
    subdivide the central cell by 3 each time, 8 outer cells per level.

    Each cell frequency is jittered uniformly inside its cell once per
    realization, which makes the added power an unbiased estimate of the
    spectrum integrated over the cell.
    """

    def __init__(self, grid: Grid, params: TurbulenceParams, rng: np.random.Generator):
        df = grid.freq_spacing
        fx, fy, area = [], [], []
        for level in range(SUBHARMONIC_LEVELS + 1):
            d = df / 3**level
            for i in (-1, 0, 1):
                for j in (-1, 0, 1):
                    if i == 0 and j == 0:
                        continue
                    ux, uy = rng.random(2) - 0.5
                    fx.append((i + ux) * d)
                    fy.append((j + uy) * d)
                    area.append(d * d)
        fx, fy = np.array(fx), np.array(fy)
        kappa = 2 * np.pi * np.hypot(fx, fy)
        self.amp = np.sqrt(screen_psd(kappa, params) * (2 * np.pi) ** 2 * np.array(area))
        x = grid.coords
        # separable plane waves: exp(2 pi i (fx x + fy y)) = ey[:, None] * ex[None, :]
        self.ex = np.exp(2j * np.pi * np.outer(fx, x))
        self.ey = np.exp(2j * np.pi * np.outer(fy, x))
        self.size = len(fx)

    def field(self, g: np.ndarray) -> np.ndarray:
        c = self.amp * g
        lo = np.sqrt(2.0) * np.real((c[:, None] * self.ey).T @ self.ex)
        return lo - lo.mean()


def synthesize_screen_sequence(
    grid: Grid,
    params: TurbulenceParams,
    seed: int,
    stream_key: Sequence[int] = (),
    subharmonics: bool = False,
) -> list[PhaseScreen]:
    """K phase screens linked by an AR(1) recursion on their white noise.

    Slab k draws a real white-noise field from the stream ``(seed, *stream_key, 0, k)``;
    the AR(1) update ``w_k = rho w_{k-1} + sqrt(1 - rho^2) xi_k`` runs on that field,
    whose unitary Fourier transform supplies Hermitian, unit-variance circular
    Gaussian coefficients. Each coefficient is scaled by sqrt(Phi_phi(kappa)) dkappa
    and the zero-frequency (piston) term is dropped, so marginal screen statistics
    are identical for every slab.

    ``subharmonics=True`` adds low-frequency compensation: the 3x3 block of
    FFT bins around DC is replaced by jittered subharmonic cells (see
    :class:`_Subharmonics`).
    """
    n = grid.n_points
    K = params.n_slabs
    rho = params.rho_z
    innov = np.sqrt(1.0 - rho * rho)
    amp = np.sqrt(_bin_power(grid, params, not subharmonics))
    # phase = N^2 * ifft2(amp * g) with g = fft2(w, "ortho"); combined scale is N for r2c/c2r pairs
    amp_half = (amp * n)[:, : n // 2 + 1]
    sub = _Subharmonics(grid, params, stream(seed, *stream_key, 1)) if subharmonics else None

    screens = []
    w = g_sub = None
    for k in range(K):
        rng = stream(seed, *stream_key, 0, k)
        xi = rng.standard_normal((n, n))
        w = xi if w is None else rho * w + innov * xi
        phase = sfft.irfft2(amp_half * sfft.rfft2(w), s=(n, n))
        if sub is not None:
            xi_sub = _complex_normal(rng, (sub.size,))
            g_sub = xi_sub if g_sub is None else rho * g_sub + innov * xi_sub
            phase = phase + sub.field(g_sub)
        phase.setflags(write=False)
        screens.append(PhaseScreen(phase, grid, k))
    return screens


def vacuum_screens(grid: Grid, n_slabs: int) -> list[PhaseScreen]:
    zero = np.zeros((grid.n_points, grid.n_points))
    zero.setflags(write=False)
    return [PhaseScreen(zero, grid, k) for k in range(n_slabs)]


def write_screen(screen: PhaseScreen, params: TurbulenceParams, path) -> None:
    """Text dump: ``#`` header lines with grid and params, then row-major values."""
    header = [
        f"n_points={screen.grid.n_points}",
        f"spacing={screen.grid.spacing!r}",
        f"slab_index={screen.slab_index}",
    ] + [f"{k}={getattr(params, k)!r}" for k in params.__dataclass_fields__]
    np.savetxt(path, screen.phase, fmt="%.17g", header="\n".join(header))


def read_screen(path) -> tuple[np.ndarray, dict]:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
    return np.loadtxt(path), meta
