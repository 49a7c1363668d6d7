"""Monte Carlo sweeps over turbulence strength and multiplexing order."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .channel import (
    SATURATION_VARIANCE,
    _indicator_corr,
    conditional_pattern_probs,
    polarization_fidelity,
)
from .config import SimConfig
from .fftback import BACKEND
from .grid import make_absorber
from .modes import build_banks
from .photons import distinguishable_stats, indistinguishable_stats
from .propagation import plane_bases, propagate_realization, slab_blocks
from .turbulence import fried_parameter, rytov_variance, synthesize_screen_sequence

log = logging.getLogger(__name__)

_STATS = {"distinguishable": distinguishable_stats, "indistinguishable": indistinguishable_stats}
COMMON_METRICS = (
    "mean_eps",
    "fidelity_conditional",
    "fidelity_unconditional",
    "p_succ",
    "block_deviation",
)
REGIME_METRICS = ("p_all_kept", "p_collision_given_kept", "p_collision")


@dataclass
class RealizationRecord:
    index: int
    eps: np.ndarray
    metrics: dict[str, float]
    pattern_probs: np.ndarray


class _Moments:
    """Count, mean and sum of squared deviations; merged with Chan's update. NaNs are skipped."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self):
        self.count, self.mean, self.m2 = 0, 0.0, 0.0

    def add(self, x: float):
        if np.isnan(x):
            return
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def merge(self, other: "_Moments"):
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n = self.count + other.count
        d = other.mean - self.mean
        self.mean += d * other.count / n
        self.m2 += other.m2 + d * d * self.count * other.count / n
        self.count = n

    def result(self) -> tuple[float, float]:
        if self.count == 0:
            return float("nan"), float("nan")
        if self.count < 2:
            return self.mean, 0.0
        return self.mean, float(np.sqrt(max(self.m2, 0.0) / (self.count - 1) / self.count))


@dataclass
class PointAccumulator:
    """Mergeable statistics for one (cn2, n) sweep point."""

    cn2: float
    n: int
    regimes: tuple[str, ...]
    moments: dict[str, _Moments] = field(default_factory=dict)
    eps: list[np.ndarray] = field(default_factory=list)
    pattern_sum: np.ndarray | None = None

    def __post_init__(self):
        names = list(COMMON_METRICS) + [f"{r}.{m}" for r in self.regimes for m in REGIME_METRICS]
        for name in names:
            self.moments.setdefault(name, _Moments())
        if self.pattern_sum is None:
            self.pattern_sum = np.zeros(2**self.n)

    @property
    def count(self) -> int:
        return len(self.eps)

    def add(self, rec: RealizationRecord):
        for name, mom in self.moments.items():
            mom.add(rec.metrics[name])
        self.eps.append(rec.eps)
        self.pattern_sum = self.pattern_sum + rec.pattern_probs

    def merge(self, other: "PointAccumulator") -> "PointAccumulator":
        if (other.cn2, other.n, other.regimes) != (self.cn2, self.n, self.regimes):
            raise ValueError("cannot merge accumulators of different sweep points")
        for name, mom in self.moments.items():
            mom.merge(other.moments[name])
        self.eps.extend(other.eps)
        self.pattern_sum = self.pattern_sum + other.pattern_sum
        return self

    def pattern_law(self) -> np.ndarray:
        return self.pattern_sum / self.count

    def correlation(self) -> tuple[float, float, bool]:
        """Mean off-diagonal indicator correlation, its jackknife error, saturation flag."""
        eps = np.array(self.eps)
        N, n = eps.shape
        if N < 2:
            return float("nan"), float("nan"), False
        mean = eps.mean(axis=0)
        saturated = (eps.var(axis=0) < SATURATION_VARIANCE) | (mean * (1 - mean) == 0)
        if saturated.any():
            live = ~saturated
        else:
            live = np.ones(n, dtype=bool)
        off = ~np.eye(n, dtype=bool) & np.outer(live, live)
        if not off.any():
            return float("nan"), float("nan"), True
        full = _indicator_corr(mean, eps.T @ eps / N)[off].mean()
        s1, s2 = eps.sum(axis=0), eps.T @ eps
        loo = []
        for j in range(N):
            e = eps[j]
            loo.append(_indicator_corr((s1 - e) / (N - 1), (s2 - np.outer(e, e)) / (N - 1))[off].mean())
        loo = np.array(loo)
        se = float(np.sqrt((N - 1) / N * np.sum((loo - loo.mean()) ** 2))) if np.all(np.isfinite(loo)) else float("nan")
        return float(full), se, bool(saturated.any())

    def eps_pearson(self) -> float:
        eps = np.array(self.eps)
        if eps.shape[0] < 2:
            return float("nan")
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.corrcoef(eps.T)
        off = c[~np.eye(self.n, dtype=bool)]
        off = off[np.isfinite(off)]
        return float(off.mean()) if off.size else float("nan")


@dataclass(frozen=True)
class SweepRow:
    cn2: float
    n_modes: int
    regime: str
    n_mc: int
    fried_parameter: float
    rytov_variance: float
    p_all_kept_mean: float
    p_all_kept_se: float
    p_collision_given_kept_mean: float
    p_collision_given_kept_se: float
    p_collision_mean: float
    p_collision_se: float
    mean_eps_mean: float
    mean_eps_se: float
    erasure_corr_mean: float
    erasure_corr_se: float
    erasure_saturated: bool
    eps_pearson_corr_mean: float
    fidelity_conditional_mean: float
    fidelity_conditional_se: float
    fidelity_unconditional_mean: float
    fidelity_unconditional_se: float
    p_succ_mean: float
    p_succ_se: float
    block_deviation_mean: float
    block_deviation_se: float


ROW_FIELDS = tuple(f.name for f in dataclasses.fields(SweepRow))


def rows_from_accumulator(acc: PointAccumulator, config: SimConfig) -> list[SweepRow]:
    params = config.params(acc.cn2)
    corr, corr_se, saturated = acc.correlation()
    common = {}
    for name in COMMON_METRICS:
        common[f"{name}_mean"], common[f"{name}_se"] = acc.moments[name].result()
    rows = []
    for regime in acc.regimes:
        per = {}
        for name in REGIME_METRICS:
            per[f"{name}_mean"], per[f"{name}_se"] = acc.moments[f"{regime}.{name}"].result()
        rows.append(
            SweepRow(
                cn2=acc.cn2,
                n_modes=acc.n,
                regime=regime,
                n_mc=acc.count,
                fried_parameter=fried_parameter(params),
                rytov_variance=rytov_variance(params),
                erasure_corr_mean=corr,
                erasure_corr_se=corr_se,
                erasure_saturated=saturated,
                eps_pearson_corr_mean=acc.eps_pearson(),
                **per,
                **common,
            )
        )
    return rows


class _PointSetup:
    """Realization-independent state for one multiplexing order."""

    def __init__(self, config: SimConfig, n: int):
        self.grid = config.grid()
        self.absorber = make_absorber(self.grid, config.guard_fraction) if config.absorber else None
        self.banks = build_banks(n, config.waist, self.grid, config.path_length, config.wavelength)
        self.bases = plane_bases(self.banks[0], config.params(0.0), self.absorber)


_SETUP_CACHE: dict = {}


def _setup(config: SimConfig, n: int) -> _PointSetup:
    key = (config, n)
    if key not in _SETUP_CACHE:
        _SETUP_CACHE.clear()
        _SETUP_CACHE[key] = _PointSetup(config, n)
    return _SETUP_CACHE[key]


def simulate_realization(config: SimConfig, ci: int, ni: int, index: int) -> RealizationRecord:
    """One turbulence realization, seeded by (master_seed, cn2 index, n index, realization index)."""
    cn2 = config.cn2_values()[ci]
    n = config.n_modes_sweep[ni]
    setup = _setup(config, n)
    params = config.params(cn2)
    screens = synthesize_screen_sequence(
        setup.grid, params, config.master_seed, stream_key=(ci, ni, index), subharmonics=config.subharmonics
    )
    _, t, ev = propagate_realization(setup.banks, screens, params, setup.absorber, realization_id=index)
    eps = ev.eps
    metrics = {
        "mean_eps": float(eps.mean()),
        "fidelity_conditional": float(np.mean(polarization_fidelity(t, conditional=True))),
        "fidelity_unconditional": float(np.mean(polarization_fidelity(t, conditional=False))),
        "p_succ": float(np.prod(1.0 - eps)),
    }
    blocks = slab_blocks(screens, setup.bases)
    prod = np.eye(n, dtype=complex)
    for b in blocks:
        prod = b @ prod
    metrics["block_deviation"] = float(np.linalg.norm(prod - t.t))
    for regime in config.regimes:
        st = _STATS[regime](t)
        metrics[f"{regime}.p_all_kept"] = st.p_all_kept
        metrics[f"{regime}.p_collision_given_kept"] = st.p_collision_given_kept
        metrics[f"{regime}.p_collision"] = st.p_collision
    return RealizationRecord(index, eps, metrics, conditional_pattern_probs(eps))


def _run_chunk(args) -> list[RealizationRecord]:
    config, ci, ni, indices = args
    try:
        return [simulate_realization(config, ci, ni, j) for j in indices]
    except Exception as exc:
        cn2 = config.cn2_values()[ci]
        raise RuntimeError(
            f"realization failure at cn2={cn2!r}, n={config.n_modes_sweep[ni]}, indices {indices[0]}..{indices[-1]}: {exc}"
        ) from exc


def simulate_point(config: SimConfig, ci: int, ni: int, indices: Iterable[int] | None = None) -> PointAccumulator:
    indices = range(config.n_mc) if indices is None else indices
    acc = PointAccumulator(config.cn2_values()[ci], config.n_modes_sweep[ni], tuple(config.regimes))
    for rec in _run_chunk((config, ci, ni, list(indices))):
        acc.add(rec)
    return acc


def _chunks(n_mc: int, size: int) -> list[list[int]]:
    return [list(range(a, min(a + size, n_mc))) for a in range(0, n_mc, size)]


def run_sweep(config: SimConfig, workers: int = 1, progress=None) -> list[SweepRow]:
    """Full sweep; rows ordered by (n_modes, cn2, regime) as configured.

    Records are folded into the accumulators in realization order, so the
    output does not depend on ``workers``.
    """
    cn2s = config.cn2_values()
    points = [(ci, ni) for ni in range(len(config.n_modes_sweep)) for ci in range(len(cn2s))]
    accs = {
        p: PointAccumulator(cn2s[p[0]], config.n_modes_sweep[p[1]], tuple(config.regimes)) for p in points
    }
    if workers <= 1:
        for p in points:
            for rec in _run_chunk((config, *p, list(range(config.n_mc)))):
                accs[p].add(rec)
            if progress:
                progress(p, accs[p])
    else:
        size = max(1, config.n_mc // 4)
        tasks = [(config, *p, chunk) for p in points for chunk in _chunks(config.n_mc, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (cfg, ci, ni, _), recs in zip(tasks, pool.map(_run_chunk, tasks)):
                for rec in recs:
                    accs[(ci, ni)].add(rec)
    rows = []
    for p in points:
        rows.extend(rows_from_accumulator(accs[p], config))
    return rows


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_results(rows: Sequence[SweepRow], path, config: SimConfig | None = None, wall_clock: float | None = None):
    """CSV with one row per (cn2, n_modes, regime) plus a ``.meta.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROW_FIELDS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, f)) for f in ROW_FIELDS])
    meta = {
        "artifact_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "wall_clock_seconds": wall_clock,
        "rows": len(rows),
        "fft_backend": BACKEND,
        "config": config.as_dict() if config is not None else None,
    }
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, default=float) + "\n")
    return meta_path


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def timed_sweep(config: SimConfig, workers: int = 1) -> tuple[list[SweepRow], float]:
    start = time.perf_counter()
    rows = run_sweep(config, workers=workers)
    return rows, time.perf_counter() - start


def default_workers() -> int:
    return os.cpu_count() or 1
