"""Multi-photon detection statistics of a kept-subspace crosstalk matrix."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from math import factorial, prod

import numpy as np

from .propagation import SUBUNITARY_TOL, CrosstalkMatrix

MAX_PERMANENT_SIZE = 12
MAX_ENUMERATION_N = 5


def permanent(m) -> complex:
    """Matrix permanent by Ryser's formula, visiting column subsets in Gray-code order."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"permanent needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0j
    if n > MAX_PERMANENT_SIZE:
        raise ValueError(f"matrix too large for exact permanent (n={n} > {MAX_PERMANENT_SIZE})")
    row_sums = np.zeros(n, dtype=complex)
    total = 0j
    sign = -1.0 if n % 2 else 1.0  # (-1)^(n - |S|) with |S| = 0
    prev = 0
    for k in range(1, 1 << n):
        gray = k ^ (k >> 1)
        changed = gray ^ prev
        j = changed.bit_length() - 1
        if gray & changed:
            row_sums += a[:, j]
        else:
            row_sums -= a[:, j]
        sign = -sign
        total += sign * np.prod(row_sums)
        prev = gray
    return complex(total)


@functools.lru_cache(maxsize=None)
def _subset_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    bits = (np.arange(1, 1 << n)[:, None] >> np.arange(n)) & 1
    signs = (-1.0) ** (n - bits.sum(axis=1))
    return bits.astype(float), signs


def permanents(batch: np.ndarray) -> np.ndarray:
    """Ryser permanents of a stack of square matrices ``(..., n, n)``."""
    batch = np.asarray(batch, dtype=complex)
    n = batch.shape[-1]
    bits, signs = _subset_table(n)
    row_sums = batch @ bits.T  # (..., n_rows, n_subsets)
    return np.prod(row_sums, axis=-2) @ signs


def brute_force_permanent(m) -> complex:
    a = np.asarray(m, dtype=complex)
    n = a.shape[0]
    return complex(sum(prod(a[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))))


def _check_n(n: int):
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"exact enumeration supported for n <= {MAX_ENUMERATION_N}, got {n}")


def unitary_dilation(t: np.ndarray, tol: float = SUBUNITARY_TOL) -> np.ndarray:
    """Embed a contraction T as the upper-left block of a 2n x 2n unitary.

    [[T, (I - T T^+)^1/2], [(I - T^+ T)^1/2, -T^+]], square roots taken through the SVD.
    """
    t = np.asarray(t, dtype=complex)
    u, s, vh = np.linalg.svd(t)
    if s.max(initial=0.0) > 1 + tol:
        raise ValueError(f"matrix is not a contraction: largest singular value {s.max():.17g}")
    c = np.sqrt(np.clip(1.0 - s * s, 0.0, None))
    top_right = (u * c) @ u.conj().T
    bottom_left = (vh.conj().T * c) @ vh
    return np.block([[t, top_right], [bottom_left, -t.conj().T]])


@functools.lru_cache(maxsize=None)
def _multisets(n_photons: int, n_ports: int) -> tuple[np.ndarray, np.ndarray]:
    combos = np.array(list(itertools.combinations_with_replacement(range(n_ports), n_photons)))
    mult = np.array([prod(factorial(c) for c in np.bincount(row, minlength=n_ports)) for row in combos], dtype=float)
    return combos, mult


def output_distribution(u: np.ndarray, n_photons: int) -> tuple[np.ndarray, np.ndarray]:
    """Fock output law for one photon in each of the first ``n_photons`` input ports.

    Returns ``(outcomes, probs)`` with ``outcomes[i]`` the sorted output ports of
    multiset i and ``probs[i] = |perm(U[S, inputs])|^2 / prod(mu!)``.
    """
    u = np.asarray(u, dtype=complex)
    combos, mult = _multisets(n_photons, u.shape[0])
    sub = u[combos][:, :, :n_photons]
    probs = np.abs(permanents(sub)) ** 2 / mult
    return combos, probs


@dataclass(frozen=True)
class OutcomeStats:
    """Kept-port detection statistics for one realization.

    ``p_collision`` is the joint probability that all photons are kept and at
    least two share a port; ``p_collision_given_kept`` divides it by
    ``p_all_kept`` (NaN when nothing is kept).
    """

    p_all_kept: float
    p_collision_given_kept: float
    p_collision: float
    regime: str
    n: int


def _conditional(joint: float, p_kept: float) -> float:
    return joint / p_kept if p_kept > 0 else float("nan")


def indistinguishable_stats(t: CrosstalkMatrix | np.ndarray) -> OutcomeStats:
    tm = t.t if isinstance(t, CrosstalkMatrix) else np.asarray(t, dtype=complex)
    n = tm.shape[0]
    _check_n(n)
    combos, probs = output_distribution(unitary_dilation(tm), n)
    kept = np.all(combos < n, axis=1)
    repeated = np.any(np.diff(combos, axis=1) == 0, axis=1)
    p_kept = float(probs[kept].sum())
    joint = float(probs[kept & repeated].sum())
    return OutcomeStats(min(p_kept, 1.0), _conditional(joint, p_kept), joint, "indistinguishable", n)


@functools.lru_cache(maxsize=None)
def _assignments(n: int) -> tuple[np.ndarray, np.ndarray]:
    assign = np.array(list(itertools.product(range(n), repeat=n)))
    collide = np.array([len(set(a)) < n for a in assign])
    return assign, collide


def distinguishable_stats(t: CrosstalkMatrix | np.ndarray) -> OutcomeStats:
    tm = t.t if isinstance(t, CrosstalkMatrix) else np.asarray(t, dtype=complex)
    n = tm.shape[0]
    _check_n(n)
    if np.linalg.svd(tm, compute_uv=False).max(initial=0.0) > 1 + SUBUNITARY_TOL:
        raise ValueError("crosstalk matrix is not subunitary")
    port_prob = np.abs(tm) ** 2  # [r, m]: photon from rail m lands in port r
    assign, collide = _assignments(n)
    weights = np.prod(port_prob[assign, np.arange(n)], axis=1)
    p_kept = float(np.prod(np.clip(port_prob.sum(axis=0), 0.0, 1.0)))
    joint = float(weights[collide].sum())
    return OutcomeStats(p_kept, _conditional(joint, p_kept), joint, "distinguishable", n)
