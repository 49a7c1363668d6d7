"""Fast self-checks against analytic and brute-force oracles.

Every check is a pure function of the seed, so the printed report is
reproducible. Timings are deliberately left out of the report.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial, prod
from typing import Callable

import numpy as np

from .channel import apply_product_channel, conditional_pattern_probs, flag_pattern_populations, rail_block, rail_kraus
from .fftback import fourier_filter
from .grid import Grid, propagate_samples
from .modes import build_banks
from .photons import (
    brute_force_permanent,
    distinguishable_stats,
    indistinguishable_stats,
    output_distribution,
    permanent,
    unitary_dilation,
)
from .propagation import CrosstalkMatrix, propagate_realization
from .rng import stream
from .turbulence import TurbulenceParams, phase_structure_function, synthesize_screen_sequence, vacuum_screens

DEFAULT_SEED = 7


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{self.name:<24} {status}  value={self.value:.3e}  limit={self.limit:.1e}"
        return f"{text}  {self.detail}" if self.detail else text


# ---------------------------------------------------------------- oracles


def gaussian_beam(grid: Grid, waist: float, z: float, wavelength: float) -> np.ndarray:
    """Paraxial Gaussian beam E(r, z) = exp(-r^2 / (w0^2 (1 + i z/zR))) / (1 + i z/zR), unnormalized."""
    zr = np.pi * waist**2 / wavelength
    q = 1 + 1j * z / zr
    x, y = grid.mesh()
    return np.exp(-(x**2 + y**2) / (waist**2 * q)) / q


def second_moment_radius(samples: np.ndarray, grid: Grid) -> float:
    """Beam radius 2 sqrt(<x^2>) from the intensity, averaged over both axes."""
    x, y = grid.mesh()
    inten = np.abs(samples) ** 2
    p = inten.sum()
    cx, cy = (inten * x).sum() / p, (inten * y).sum() / p
    var = 0.5 * ((inten * (x - cx) ** 2).sum() + (inten * (y - cy) ** 2).sum()) / p
    return float(2 * np.sqrt(var))


def normalized_overlap(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def structure_function_estimate(phases: np.ndarray, lags) -> np.ndarray:
    """Ensemble D(r) along both axes; ``phases`` is (M, N, N).

    Differences never wrap around the grid edge, since subharmonic terms
    make the screen aperiodic.
    """
    out = []
    for m in lags:
        dx = phases[..., :, m:] - phases[..., :, :-m]
        dy = phases[..., m:, :] - phases[..., :-m, :]
        out.append(0.5 * (np.mean(dx**2) + np.mean(dy**2)))
    return np.array(out)


def lag_correlation(sequences: np.ndarray, lag: int) -> float:
    """Pooled correlation between slabs k and k + lag; ``sequences`` is (M, K, N, N)."""
    a = sequences[:, :-lag].reshape(-1)
    b = sequences[:, lag:].reshape(-1)
    return float(np.corrcoef(a, b)[0, 1])


def fock_distribution_bruteforce(u: np.ndarray, n_photons: int) -> dict[tuple[int, ...], float]:
    """Output occupation law from expanding prod_m (sum_r U[r, m] a_r^dagger)|0>.

    Each of the (ports)^n creation-operator paths adds its amplitude to the
    occupation pattern it produces; a pattern mu then has amplitude
    sqrt(prod mu!) times that sum. Independent of any permanent formula.
    """
    u = np.asarray(u, dtype=complex)
    ports = u.shape[0]
    amps: dict[tuple[int, ...], complex] = {}
    for path in itertools.product(range(ports), repeat=n_photons):
        occ = [0] * ports
        for r in path:
            occ[r] += 1
        key = tuple(occ)
        amps[key] = amps.get(key, 0j) + prod(u[r, m] for m, r in enumerate(path))
    return {k: abs(a) ** 2 * prod(factorial(c) for c in k) for k, a in amps.items()}


def random_contraction(rng: np.random.Generator, n: int, scale: float = 0.95) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * a / np.linalg.norm(a, 2)


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------- checks


def check_fft_roundtrip(seed: int) -> CheckResult:
    rng = stream(seed, 100)
    grid = Grid(128, 2.5e-3)
    x = rng.standard_normal((3, 128, 128)) + 1j * rng.standard_normal((3, 128, 128))
    y = fourier_filter(x, np.ones((128, 128)))
    err = float(np.abs(y - x).max() / np.abs(x).max())
    return CheckResult("fft_roundtrip", err < 1e-12, err, 1e-12, f"grid {grid.n_points}^2")


def check_power_conservation(seed: int) -> CheckResult:
    rng = stream(seed, 101)
    grid = Grid(128, 2.5e-3)
    x = rng.standard_normal((128, 128)) + 1j * rng.standard_normal((128, 128))
    p0 = np.sum(np.abs(x) ** 2)
    worst = 0.0
    for d in (1.0, 250.0, 1e4):
        p = np.sum(np.abs(propagate_samples(x, grid, d, 1550e-9)) ** 2)
        worst = max(worst, abs(p - p0) / p0)
    return CheckResult("power_conservation", worst < 1e-10, worst, 1e-10)


def check_semigroup(seed: int) -> CheckResult:
    rng = stream(seed, 102)
    grid = Grid(128, 2.5e-3)
    x = rng.standard_normal((128, 128)) + 1j * rng.standard_normal((128, 128))
    d1, d2, lam = 137.0, 2863.0, 1550e-9
    direct = propagate_samples(x, grid, d1 + d2, lam)
    composed = propagate_samples(propagate_samples(x, grid, d1, lam), grid, d2, lam)
    err = float(np.abs(direct - composed).max() / np.abs(direct).max())
    return CheckResult("semigroup", err < 1e-10, err, 1e-10)


def check_gaussian_beam(seed: int) -> CheckResult:
    """Waist at z = z_R against w0 sqrt(2), and the complex field against the analytic beam."""
    del seed  # deterministic input
    grid = Grid(256, 1.5e-3)
    w0, lam = 0.03, 1550e-9
    zr = np.pi * w0**2 / lam
    e0 = gaussian_beam(grid, w0, 0.0, lam)
    ez = propagate_samples(e0, grid, zr, lam)
    w = second_moment_radius(ez, grid)
    rel = abs(w / (w0 * np.sqrt(2)) - 1)
    fid = normalized_overlap(gaussian_beam(grid, w0, zr, lam), ez)
    ok = rel < 0.01 and fid > 1 - 1e-6
    return CheckResult("gaussian_beam", ok, rel, 0.01, f"field_overlap={fid:.9f}")


def check_structure_function(seed: int, n_sequences: int = 50) -> CheckResult:
    grid = Grid(128, 2.5e-3)
    # rho_z = 0 makes every slab an independent sample; per-slab statistics do not depend on rho_z
    params = TurbulenceParams(cn2=1e-14, rho_z=0.0)
    phases = np.concatenate(
        [
            np.array([s.phase for s in synthesize_screen_sequence(grid, params, seed, (j,), subharmonics=True)])
            for j in range(n_sequences)
        ]
    )
    lags = np.array([4, 8, 16, 32])
    measured = structure_function_estimate(phases, lags)
    expected = phase_structure_function(lags * grid.spacing, params)
    rel = np.abs(measured / expected - 1)
    detail = " ".join(f"r={r * grid.spacing:.3f}:{m / e:.3f}" for r, m, e in zip(lags, measured, expected))
    return CheckResult("structure_function", bool(rel.max() < 0.1), float(rel.max()), 0.1, detail)


def check_ar1_correlation(seed: int, n_sequences: int = 200) -> CheckResult:
    grid = Grid(64, 5e-3)
    params = TurbulenceParams(cn2=1e-14, n_slabs=3, rho_z=0.9)
    seq = np.array(
        [[s.phase for s in synthesize_screen_sequence(grid, params, seed, (j,))] for j in range(n_sequences)]
    )
    c1, c2 = lag_correlation(seq, 1), lag_correlation(seq, 2)
    err = max(abs(c1 - 0.9), abs(c2 - 0.81))
    return CheckResult("ar1_correlation", err < 0.05, err, 0.05, f"lag1={c1:.4f} lag2={c2:.4f}")


def check_mode_orthonormality(seed: int) -> CheckResult:
    del seed
    grid = Grid(128, 2.5e-3)
    worst = 0.0
    for n in (2, 3, 4, 5):
        for bank in build_banks(n, 0.03, grid, 1e4, 1550e-9):
            worst = max(worst, float(np.abs(bank.gram() - np.eye(n)).max()))
    return CheckResult("mode_orthonormality", worst < 1e-10, worst, 1e-10, "tx and rx banks, n=2..5")


def check_vacuum_limit(seed: int) -> CheckResult:
    del seed
    grid = Grid(128, 2.5e-3)
    params = TurbulenceParams(cn2=0.0)
    worst = 0.0
    for n in (2, 3, 4, 5):
        banks = build_banks(n, 0.03, grid, params.path_length, params.wavelength)
        _, t, ev = propagate_realization(banks, vacuum_screens(grid, params.n_slabs), params)
        ind, dis = indistinguishable_stats(t), distinguishable_stats(t)
        worst = max(
            worst,
            float(np.abs(t.t - np.eye(n)).max()),
            float(np.abs(ev.eps).max()),
            abs(ind.p_all_kept - 1),
            abs(dis.p_all_kept - 1),
            ind.p_collision,
            dis.p_collision,
        )
    return CheckResult("vacuum_limit", worst < 1e-6, worst, 1e-6, "T=I, eps=0, no collisions")


def check_permanent(seed: int, count: int = 100) -> CheckResult:
    rng = stream(seed, 103)
    worst = 0.0
    for i in range(count):
        n = 2 + i % 5
        m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        ref = brute_force_permanent(m)
        worst = max(worst, abs(permanent(m) - ref) / max(abs(ref), 1e-300))
    return CheckResult("permanent_oracle", worst < 1e-10, worst, 1e-10, f"{count} matrices, n=2..6")


def check_fock(seed: int) -> CheckResult:
    rng = stream(seed, 104)
    worst = 0.0
    for n in (2, 3):
        for _ in range(5):
            u = unitary_dilation(random_contraction(rng, n))
            combos, probs = output_distribution(u, n)
            ref = fock_distribution_bruteforce(u[:, :n], n)
            for c, p in zip(combos, probs):
                occ = tuple(np.bincount(c, minlength=2 * n))
                worst = max(worst, abs(p - ref.get(occ, 0.0)))
    bs = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    hom = indistinguishable_stats(bs)
    hom_err = max(abs(hom.p_collision_given_kept - 1), abs(hom.p_all_kept - 1))
    ok = worst < 1e-8 and hom_err < 1e-10
    return CheckResult("fock_oracle", ok, worst, 1e-8, f"hom_error={hom_err:.1e}")


def check_kraus_completeness(seed: int) -> CheckResult:
    rng = stream(seed, 105)
    worst = 0.0
    for n in (1, 2, 3, 5):
        t = CrosstalkMatrix(random_contraction(rng, n))
        for m in range(n):
            k = rail_kraus(rail_block(t, m))
            worst = max(worst, float(np.abs(k.completeness() - np.eye(2)).max()))
    return CheckResult("kraus_completeness", worst < 1e-12, worst, 1e-12)


def check_product_channel(seed: int) -> CheckResult:
    rng = stream(seed, 106)
    trace_err = pop_err = 0.0
    for n in (1, 2, 3):
        t = CrosstalkMatrix(random_contraction(rng, n))
        kraus = [rail_kraus(rail_block(t, m)) for m in range(n)]
        out = apply_product_channel(random_density(rng, 2**n), kraus)
        trace_err = max(trace_err, abs(np.trace(out) - 1))
        eps = 1 - np.sum(np.abs(t.t) ** 2, axis=0)
        pop_err = max(pop_err, float(np.abs(flag_pattern_populations(out) - conditional_pattern_probs(eps)).max()))
    ok = trace_err < 1e-10 and pop_err < 1e-12
    return CheckResult("product_channel", ok, float(trace_err), 1e-10, f"pattern_error={pop_err:.1e}")


CHECKS: dict[str, Callable[[int], CheckResult]] = {
    "fft_roundtrip": check_fft_roundtrip,
    "power_conservation": check_power_conservation,
    "semigroup": check_semigroup,
    "gaussian_beam": check_gaussian_beam,
    "structure_function": check_structure_function,
    "ar1_correlation": check_ar1_correlation,
    "mode_orthonormality": check_mode_orthonormality,
    "vacuum_limit": check_vacuum_limit,
    "permanent_oracle": check_permanent,
    "fock_oracle": check_fock,
    "kraus_completeness": check_kraus_completeness,
    "product_channel": check_product_channel,
}


def run_checks(seed: int = DEFAULT_SEED, names=None) -> list[CheckResult]:
    results = []
    for name in names or CHECKS:
        try:
            results.append(CHECKS[name](seed))
        except Exception as exc:  # a crashing check is a failed check
            results.append(CheckResult(name, False, float("nan"), float("nan"), f"error: {exc}"))
    return results


def format_report(results, seed: int) -> str:
    lines = [f"turbmimo validate (seed={seed})"]
    lines += [r.line() for r in results]
    failed = [r.name for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return "\n".join(lines) + "\n"
