"""Unitary 2-D FFT filtering with an optional FFTW backend.

pyFFTW is used when importable, with ``FFTW_ESTIMATE`` plans that own their
aligned buffers, so every call runs the same code path and results are
bitwise reproducible. Set ``TURBMIMO_FFT=scipy`` to force the scipy backend.
"""

from __future__ import annotations

import functools
import os

import numpy as np
from scipy import fft as sfft

try:
    import pyfftw
except ImportError:  # pragma: no cover - exercised only without pyfftw
    pyfftw = None

BACKEND = "pyfftw" if pyfftw is not None and os.environ.get("TURBMIMO_FFT", "").lower() != "scipy" else "scipy"


class _FilterPlan:
    def __init__(self, shape: tuple[int, ...]):
        self.a = pyfftw.empty_aligned(shape, dtype=complex)
        self.b = pyfftw.empty_aligned(shape, dtype=complex)
        self.c = pyfftw.empty_aligned(shape, dtype=complex)
        kw = dict(axes=(-2, -1), flags=("FFTW_ESTIMATE",), threads=1)
        self.fwd = pyfftw.FFTW(self.a, self.b, direction="FFTW_FORWARD", **kw)
        self.bwd = pyfftw.FFTW(self.b, self.c, direction="FFTW_BACKWARD", **kw)

    def __call__(self, x: np.ndarray, h: np.ndarray, pre: np.ndarray | None) -> np.ndarray:
        if pre is None:
            self.a[...] = x
        else:
            np.multiply(x, pre, out=self.a)
        self.fwd(normalise_idft=False, ortho=True)
        self.b *= h
        self.bwd(normalise_idft=False, ortho=True)
        return self.c.copy()


@functools.lru_cache(maxsize=16)
def _plan(shape: tuple[int, ...]) -> _FilterPlan:
    return _FilterPlan(shape)


def fourier_filter(
    x: np.ndarray, h: np.ndarray, overwrite: bool = False, pre: np.ndarray | None = None
) -> np.ndarray:
    """ifft2(fft2(x * pre) * h) over the last two axes with unitary transforms.

    ``pre`` is an optional pointwise factor (a screen transmittance, say);
    ``overwrite`` lets the scipy path reuse ``x`` as scratch.
    """
    if BACKEND == "pyfftw":
        return _plan(tuple(x.shape))(x, h, pre)
    if pre is not None:
        x, overwrite = x * pre, True
    spec = sfft.fft2(x, norm="ortho", axes=(-2, -1), overwrite_x=overwrite)
    spec *= h
    return sfft.ifft2(spec, norm="ortho", axes=(-2, -1), overwrite_x=True)
