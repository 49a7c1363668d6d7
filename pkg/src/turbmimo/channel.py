"""Erasure-flagged logical channel on n polarization qubits.

Each rail lives in C^2 (+) |flag>; basis index 0 = H, 1 = V, 2 = erasure flag.
Patterns ``s`` are tuples of 0/1 per rail, with 1 meaning the rail is erased.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .propagation import CrosstalkMatrix, ErasureVector

BLOCK_TOL = 1e-9
SATURATION_VARIANCE = 1e-6
FLAG = 2

_I2 = np.eye(2, dtype=complex)
_EMBED = np.array([[1, 0], [0, 1], [0, 0]], dtype=complex)


@dataclass(frozen=True, eq=False)
class RailBlock:
    b: np.ndarray
    jones: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class RailKraus:
    k0: np.ndarray
    k1: np.ndarray
    k2: np.ndarray

    @property
    def operators(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.k0, self.k1, self.k2

    def completeness(self) -> np.ndarray:
        return sum(k.conj().T @ k for k in self.operators)


def _eps_array(item) -> np.ndarray:
    if isinstance(item, ErasureVector):
        return np.asarray(item.eps, dtype=float)
    return np.asarray(item, dtype=float)


def rail_block(t: CrosstalkMatrix, rail: int, jones=None) -> RailBlock:
    """Polarization block of ``rail``: diagonal overlap times Jones matrix.

    The block is rescaled so that tr(B^+ B)/2 equals the rail's total kept
    probability, since arrivals in another kept port still count as survival.
    """
    n = t.n
    if not 0 <= rail < n:
        raise ValueError(f"rail {rail} out of range for n={n}")
    j = _I2 if jones is None else np.asarray(jones, dtype=complex)
    keep = float(np.clip(np.sum(np.abs(t.t[:, rail]) ** 2), 0.0, 1.0))
    b = t.t[rail, rail] * j
    norm = np.sqrt(np.real(np.trace(b.conj().T @ b)) / 2)
    if norm == 0:
        b, norm = j, np.sqrt(np.real(np.trace(j.conj().T @ j)) / 2)
    return RailBlock(b * (np.sqrt(keep) / norm), None if jones is None else j)


def _psd_sqrt(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def rail_kraus(block: RailBlock | np.ndarray) -> RailKraus:
    b = block.b if isinstance(block, RailBlock) else np.asarray(block, dtype=complex)
    btb = b.conj().T @ b
    top = np.linalg.eigvalsh((btb + btb.conj().T) / 2).max()
    if top > 1 + BLOCK_TOL:
        raise ValueError(f"B^+B has eigenvalue {top:.17g} > 1")
    c = _psd_sqrt(_I2 - btb)
    k0 = np.vstack([b, np.zeros((1, 2))])
    k1 = np.zeros((3, 2), dtype=complex)
    k2 = np.zeros((3, 2), dtype=complex)
    k1[FLAG] = c[0]
    k2[FLAG] = c[1]
    return RailKraus(k0, k1, k2)


def erasure_kraus(eps: float) -> RailKraus:
    """Kraus set of the plain single-rail erasure channel."""
    return rail_kraus(np.sqrt(1.0 - eps) * _I2)


def _kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats)


def embed_logical(rho: np.ndarray) -> np.ndarray:
    """Place a 2^n x 2^n logical state into the 3^n flagged space."""
    rho = np.asarray(rho, dtype=complex)
    n = int(round(np.log2(rho.shape[0])))
    v = _kron_all([_EMBED] * n)
    return v @ rho @ v.conj().T


def apply_product_channel(rho: np.ndarray, kraus: Sequence[RailKraus]) -> np.ndarray:
    """Apply the per-rail Kraus product to a logical state; output lives on 3^n."""
    rho = np.asarray(rho, dtype=complex)
    n = len(kraus)
    if n > 3:
        raise ValueError("dense product-channel application supported for n <= 3")
    if rho.shape != (2**n, 2**n):
        raise ValueError(f"expected a {2**n}x{2**n} logical state for {n} rails, got {rho.shape}")
    out = np.zeros((3**n, 3**n), dtype=complex)
    for alpha in itertools.product(range(3), repeat=n):
        k = _kron_all([kraus[m].operators[a] for m, a in enumerate(alpha)])
        out += k @ rho @ k.conj().T
    return out


def _flag_masks(n: int) -> np.ndarray:
    digits = np.array(list(itertools.product(range(3), repeat=n)))
    return (digits == FLAG).astype(int)


def _pattern_index(bits: np.ndarray) -> np.ndarray:
    n = bits.shape[-1]
    return bits @ (1 << np.arange(n - 1, -1, -1))


def patterns(n: int) -> list[tuple[int, ...]]:
    """All erasure patterns in index order (rail 0 is the most significant bit)."""
    return list(itertools.product((0, 1), repeat=n))


def flag_pattern_populations(rho3: np.ndarray) -> np.ndarray:
    """Probability of each erasure pattern in a 3^n flagged state, indexed like :func:`patterns`."""
    n = int(round(np.log(rho3.shape[0]) / np.log(3)))
    idx = _pattern_index(_flag_masks(n))
    return np.bincount(idx, weights=np.real(np.diag(rho3)), minlength=2**n)


def off_pattern_coherence(rho3: np.ndarray) -> float:
    """Largest |rho_ij| between basis states carrying different erasure patterns."""
    n = int(round(np.log(rho3.shape[0]) / np.log(3)))
    idx = _pattern_index(_flag_masks(n))
    mask = idx[:, None] != idx[None, :]
    return float(np.abs(rho3[mask]).max(initial=0.0))


def conditional_pattern_probs(eps) -> np.ndarray:
    """prod_m eps_m^s_m (1 - eps_m)^(1 - s_m) for every pattern."""
    e = _eps_array(eps)
    s = np.array(patterns(len(e)), dtype=bool)
    return np.prod(np.where(s, e, 1.0 - e), axis=1)


@dataclass(frozen=True, eq=False)
class ErasurePatternLaw:
    probs: np.ndarray
    n: int
    sample_count: int

    def p(self, pattern) -> float:
        bits = np.asarray(pattern, dtype=int)
        return float(self.probs[int(_pattern_index(bits))])

    @property
    def success(self) -> float:
        return float(self.probs[0])

    def marginals(self) -> np.ndarray:
        s = np.array(patterns(self.n))
        return s.T @ self.probs

    def product_of_marginals(self) -> np.ndarray:
        return conditional_pattern_probs(self.marginals())

    def total_variation_from_product(self) -> float:
        return 0.5 * float(np.abs(self.probs - self.product_of_marginals()).sum())


def _stack(ensemble) -> np.ndarray:
    eps = np.array([_eps_array(e) for e in ensemble], dtype=float)
    if eps.size == 0:
        raise ValueError("empty ensemble")
    if eps.ndim != 2:
        raise ValueError("inconsistent rail counts in ensemble")
    return eps


def erasure_pattern_law(ensemble) -> ErasurePatternLaw:
    eps = _stack(ensemble)
    s = np.array(patterns(eps.shape[1]), dtype=bool)
    per = np.prod(np.where(s[None], eps[:, None, :], 1.0 - eps[:, None, :]), axis=2)
    return ErasurePatternLaw(per.mean(axis=0), eps.shape[1], eps.shape[0])


def block_success(ensemble) -> float:
    eps = _stack(ensemble)
    return float(np.mean(np.prod(1.0 - eps, axis=1)))


def coarse_erasure_channel(rho: np.ndarray, p_succ: float) -> np.ndarray:
    """p_succ * rho (+) (1 - p_succ) |E><E| with one global flag appended last."""
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    out = np.zeros((d + 1, d + 1), dtype=complex)
    out[:d, :d] = p_succ * rho
    out[d, d] = 1.0 - p_succ
    return out


@dataclass(frozen=True, eq=False)
class ErasureCorrelation:
    """Indicator correlation matrix; NaN where a rail's erasure is saturated."""

    matrix: np.ndarray
    saturated: np.ndarray

    def mean_off_diagonal(self) -> float:
        n = self.matrix.shape[0]
        off = self.matrix[~np.eye(n, dtype=bool)]
        off = off[np.isfinite(off)]
        return float(off.mean()) if off.size else float("nan")

    @property
    def any_saturated(self) -> bool:
        return bool(self.saturated.any())


def _indicator_corr(mean: np.ndarray, second: np.ndarray) -> np.ndarray:
    cov = second - np.outer(mean, mean)
    var_l = mean * (1.0 - mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cov / np.sqrt(np.outer(var_l, var_l))
    np.fill_diagonal(corr, 1.0)
    return corr


def erasure_correlation(ensemble, saturation_variance: float = SATURATION_VARIANCE) -> ErasureCorrelation:
    """Correlation of Bernoulli erasure indicators implied by the eps ensemble.

    Indicators are conditionally independent given the realization, so
    Cov(L_m, L_m') = Cov(eps_m, eps_m') off the diagonal and
    Var(L_m) = E[eps_m] (1 - E[eps_m]). Rails whose eps variance is below
    ``saturation_variance`` are flagged and their entries set to NaN.
    """
    eps = _stack(ensemble)
    if eps.shape[0] < 2:
        raise ValueError("need at least two realizations")
    mean = eps.mean(axis=0)
    corr = _indicator_corr(mean, eps.T @ eps / eps.shape[0])
    saturated = (eps.var(axis=0) < saturation_variance) | (mean * (1 - mean) == 0)
    corr[saturated, :] = np.nan
    corr[:, saturated] = np.nan
    return ErasureCorrelation(corr, saturated)


def sampled_erasure_correlation(ensemble, rng: np.random.Generator, draws: int = 1) -> np.ndarray:
    """Pearson correlation of sampled indicators L_m ~ Bernoulli(eps_m), for cross-checks."""
    eps = np.repeat(_stack(ensemble), draws, axis=0)
    ind = (rng.random(eps.shape) < eps).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.corrcoef(ind.T)


CARDINAL_STATES = tuple(
    np.array(v, dtype=complex) / np.linalg.norm(v)
    for v in ([1, 0], [0, 1], [1, 1], [1, -1], [1, 1j], [1, -1j])
)


def polarization_fidelity(t: CrosstalkMatrix, jones=None, conditional: bool = True) -> np.ndarray:
    """Per-rail fidelity averaged over the six cardinal polarization states.

    ``jones`` is None, one 2x2 matrix for all rails, or a sequence of per-rail
    matrices. Conditional fidelity is NaN for a rail with no kept probability.
    """
    n = t.n
    if jones is None or np.ndim(jones) == 2:
        jones = [jones] * n
    out = np.empty(n)
    for m in range(n):
        blk = rail_block(t, m, jones[m])
        keep = np.real(np.trace(blk.b.conj().T @ blk.b)) / 2
        fids = []
        for psi in CARDINAL_STATES:
            phi = blk.b @ psi
            norm = np.real(np.vdot(phi, phi))
            fids.append(abs(np.vdot(psi, phi)) ** 2 / norm if norm > 0 else np.nan)
        cond = float(np.mean(fids))
        out[m] = cond if conditional else (0.0 if keep == 0 else keep * cond)
    return out
