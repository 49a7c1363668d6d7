"""Split-step propagation of a mode bank through one turbulence realization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fftback import fourier_filter
from .grid import AbsorberWindow, ComplexField, propagate_samples, transfer_function
from .modes import ModeBank, gram_schmidt
from .turbulence import PhaseScreen, TurbulenceParams

SUBUNITARY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CrosstalkMatrix:
    """Kept-to-kept overlaps; entry ``t[r, m]`` is the amplitude from rail m into receiver mode r."""

    t: np.ndarray
    realization_id: int = 0
    cn2: float = 0.0

    @property
    def n(self) -> int:
        return self.t.shape[0]

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.t, compute_uv=False)

    def check_subunitary(self, tol: float = SUBUNITARY_TOL) -> None:
        smax = self.singular_values().max(initial=0.0)
        if smax > 1 + tol:
            raise ValueError(f"crosstalk matrix is not subunitary: largest singular value {smax:.17g}")


@dataclass(frozen=True, eq=False)
class ErasureVector:
    eps: np.ndarray
    realization_id: int = 0


def erasure_vector(t: CrosstalkMatrix) -> ErasureVector:
    """Per-rail leakage 1 - sum_r |t[r, m]|^2, clamped to [0, 1]."""
    keep = np.sum(np.abs(t.t) ** 2, axis=0)
    return ErasureVector(np.clip(1.0 - keep, 0.0, 1.0), t.realization_id)


def _check_inputs(banks: tuple[ModeBank, ModeBank], screens: Sequence[PhaseScreen], params: TurbulenceParams):
    tx, rx = banks
    if tx.grid != rx.grid:
        raise ValueError("transmit and receiver banks live on different grids")
    if len(screens) != params.n_slabs:
        raise ValueError(f"expected {params.n_slabs} screens, got {len(screens)}")
    for s in screens:
        if s.grid != tx.grid:
            raise ValueError(f"screen {s.slab_index} grid does not match the mode banks")


def _slab_step(fields, screen: PhaseScreen, params: TurbulenceParams, absorber):
    h = transfer_function(screen.grid, params.dz, params.wavelength)
    out = fourier_filter(fields, h, pre=screen.transmittance)
    if absorber is not None:
        out *= absorber.profile
    return out


def _overlaps(bra: np.ndarray, ket: np.ndarray, cell_area: float) -> np.ndarray:
    n = bra.shape[0]
    return np.conj(bra.reshape(n, -1)) @ ket.reshape(ket.shape[0], -1).T * cell_area


def propagate_realization(
    banks: tuple[ModeBank, ModeBank],
    screens: Sequence[PhaseScreen],
    params: TurbulenceParams,
    absorber: AbsorberWindow | None = None,
    realization_id: int = 0,
) -> tuple[list[ComplexField], CrosstalkMatrix, ErasureVector]:
    """Run every transmit mode through ``[screen; Fresnel step; absorber]`` for each slab.

    Returns the received fields, the crosstalk matrix against the receiver bank and
    the per-rail erasure probabilities.
    """
    _check_inputs(banks, screens, params)
    tx, rx = banks
    fields = np.array(tx.fields)
    for screen in screens:
        fields = _slab_step(fields, screen, params, absorber)
    t = CrosstalkMatrix(_overlaps(rx.fields, fields, tx.grid.cell_area), realization_id, params.cn2)
    return [ComplexField(f, tx.grid) for f in fields], t, erasure_vector(t)


@dataclass(frozen=True, eq=False)
class PlaneBases:
    """Vacuum-matched kept bases at every slab plane.

    ``planes[k]`` is the orthonormal basis at z_k. ``pulled[k]`` holds the
    basis at z_{k+1} pulled back through the absorber and the adjoint Fresnel
    step, so a slab block reduces to overlaps with the screened basis at z_k.
    """

    planes: np.ndarray
    pulled: np.ndarray

    def __post_init__(self):
        K, n = self.pulled.shape[:2]
        object.__setattr__(self, "_bra", np.conj(self.pulled.reshape(K, n, -1)))
        object.__setattr__(self, "_ket", np.ascontiguousarray(self.planes[:K].reshape(K, n, -1).transpose(0, 2, 1)))


def plane_bases(tx: ModeBank, params: TurbulenceParams, absorber: AbsorberWindow | None = None) -> PlaneBases:
    grid = tx.grid
    K = params.n_slabs
    planes = np.empty((K + 1,) + tx.fields.shape, dtype=complex)
    for k in range(K + 1):
        moved = propagate_samples(tx.fields, grid, k * params.dz, params.wavelength)
        planes[k] = gram_schmidt(moved, grid.cell_area)
    nxt = planes[1:] if absorber is None else planes[1:] * absorber.profile
    pulled = _adjoint_step(nxt, grid, params)
    return PlaneBases(planes, pulled)


def _adjoint_step(fields: np.ndarray, grid, params: TurbulenceParams) -> np.ndarray:
    h = transfer_function(grid, params.dz, params.wavelength)
    return fourier_filter(fields, np.conj(h))


@dataclass(frozen=True, eq=False)
class SlabFactors:
    factors: list[np.ndarray]
    full: CrosstalkMatrix

    def product(self) -> np.ndarray:
        out = np.eye(self.full.n, dtype=complex)
        for f in self.factors:
            out = f @ out
        return out

    def deviation(self) -> float:
        """Frobenius distance between the block product and the exact full-range matrix."""
        return float(np.linalg.norm(self.product() - self.full.t))


def slab_blocks(screens: Sequence[PhaseScreen], bases: PlaneBases) -> list[np.ndarray]:
    cell = screens[0].grid.cell_area
    K, n = bases.pulled.shape[:2]
    out = []
    for k, s in enumerate(screens):
        bra = bases._bra[k] * s.transmittance.reshape(-1)
        out.append(bra @ bases._ket[k] * cell)
    return out


def slabwise_factors(
    banks: tuple[ModeBank, ModeBank],
    screens: Sequence[PhaseScreen],
    params: TurbulenceParams,
    absorber: AbsorberWindow | None = None,
    realization_id: int = 0,
    bases: PlaneBases | None = None,
    full: CrosstalkMatrix | None = None,
) -> SlabFactors:
    """Per-slab kept blocks T_k and the exact full-range matrix for comparison."""
    _check_inputs(banks, screens, params)
    if bases is None:
        bases = plane_bases(banks[0], params, absorber)
    if full is None:
        _, full, _ = propagate_realization(banks, screens, params, absorber, realization_id)
    return SlabFactors(slab_blocks(screens, bases), full)
