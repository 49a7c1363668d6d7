"""Laguerre-Gaussian transmit modes, vacuum-matched receiver modes, inner products."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .grid import ComplexField, Grid, propagate_samples

MAX_ELL = 6

# Azimuthal index sets per multiplexing order; l = 0 is left out for even n.
ELL_SETS = {
    2: (-1, 1),
    3: (-1, 0, 1),
    4: (-2, -1, 1, 2),
    5: (-2, -1, 0, 1, 2),
}


def lg_field(ell: int, waist: float, grid: Grid) -> ComplexField:
    """p = 0 Laguerre-Gaussian mode with azimuthal index ``ell``, unit discrete power."""
    if abs(ell) > MAX_ELL:
        raise ValueError(f"|ell| must be <= {MAX_ELL}, got {ell}")
    if not waist > 0:
        raise ValueError("waist must be positive")
    x, y = grid.mesh()
    r = np.hypot(x, y)
    a = abs(ell)
    u = (
        np.sqrt(2.0 / (np.pi * factorial(a)))
        / waist
        * (np.sqrt(2.0) * r / waist) ** a
        * np.exp(-(r**2) / waist**2)
        * np.exp(1j * ell * np.arctan2(y, x))
    )
    return ComplexField(u, grid).normalized()


def mode_overlap(f: ComplexField, g: ComplexField) -> complex:
    """Discrete inner product <f, g> = sum conj(f) g dA."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    return complex(np.vdot(f.samples, g.samples) * f.grid.cell_area)


def gram_schmidt(stack: np.ndarray, cell_area: float) -> np.ndarray:
    """Orthonormalize fields along axis 0 in order (modified Gram-Schmidt, two passes)."""
    out = np.array(stack, dtype=complex)
    for i in range(len(out)):
        for _ in range(2):
            for j in range(i):
                out[i] -= np.vdot(out[j], out[i]) * cell_area * out[j]
        out[i] /= np.sqrt(np.sum(np.abs(out[i]) ** 2) * cell_area)
    return out


@dataclass(frozen=True, eq=False)
class ModeBank:
    fields: np.ndarray
    labels: tuple[int, ...]
    waist: float
    grid: Grid
    plane: str

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def modes(self) -> list[ComplexField]:
        return [ComplexField(f, self.grid) for f in self.fields]

    def gram(self) -> np.ndarray:
        flat = self.fields.reshape(self.n, -1)
        return np.conj(flat) @ flat.T * self.grid.cell_area


def transmit_bank(n: int, waist: float, grid: Grid) -> ModeBank:
    if n not in ELL_SETS:
        raise ValueError(f"unsupported mode count n={n}; supported: {sorted(ELL_SETS)}")
    labels = ELL_SETS[n]
    fields = np.stack([lg_field(ell, waist, grid).samples for ell in labels])
    fields.setflags(write=False)
    return ModeBank(fields, labels, waist, grid, "transmit")


def vacuum_basis(bank: ModeBank, distance: float, wavelength: float) -> np.ndarray:
    """Transmit modes carried through vacuum by ``distance``, then re-orthonormalized."""
    moved = propagate_samples(bank.fields, bank.grid, distance, wavelength)
    return gram_schmidt(moved, bank.grid.cell_area)


def build_banks(n: int, waist: float, grid: Grid, path_length: float, wavelength: float) -> tuple[ModeBank, ModeBank]:
    tx = transmit_bank(n, waist, grid)
    rx_fields = vacuum_basis(tx, path_length, wavelength)
    rx_fields.setflags(write=False)
    return tx, ModeBank(rx_fields, tx.labels, waist, grid, "receiver")
