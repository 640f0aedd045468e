"""Surrogate increment series with exact power-law magnitudes and random
signs, and the bifurcation experiments built on them.

Magnitudes are drawn by inverse transform, x = i_min * (1 - u)^(-1/zeta), and
signs are fair coin flips from an independent stream.  Both streams derive
from one seed through SeedSequence spawning, so every run is reproducible
from (zeta, i_min, n, seed) alone.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conddist import DetectorParams, PhaseScan, scan
from .errors import InputError
from .series import IncrementSeries


@dataclass(frozen=True)
class SurrogateSpec:
    """Parameters of one surrogate series."""

    zeta: float
    i_min: float
    n: int
    seed: int

    def __post_init__(self) -> None:
        if self.zeta <= 0:
            raise InputError("zeta must be positive")
        if self.i_min <= 0:
            raise InputError("i_min must be positive")
        if self.n < 2:
            raise InputError("n must be >= 2")


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    magnitude_seq, sign_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(magnitude_seq), np.random.default_rng(sign_seq)


def sample_abs_increments(spec: SurrogateSpec) -> np.ndarray:
    """Power-law magnitudes >= i_min with CCDF exponent zeta, seed-stable."""
    rng, _ = _streams(spec.seed)
    u = rng.random(spec.n)
    return spec.i_min * (1.0 - u) ** (-1.0 / spec.zeta)


def assign_signs(absolute: np.ndarray, seed: int | np.random.Generator) -> IncrementSeries:
    """Attach independent fair random signs to a magnitude series."""
    absolute = np.asarray(absolute, dtype=float)
    if absolute.size == 0:
        raise InputError("empty magnitude series")
    if np.any(absolute < 0):
        raise InputError("magnitudes must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    signs = np.where(rng.random(len(absolute)) < 0.5, -1.0, 1.0)
    return IncrementSeries(signed=absolute * signs, absolute=absolute)


def surrogate_increments(spec: SurrogateSpec) -> IncrementSeries:
    """Full surrogate: magnitudes and signs from one spec."""
    mag_rng, sign_rng = _streams(spec.seed)
    u = mag_rng.random(spec.n)
    absolute = spec.i_min * (1.0 - u) ** (-1.0 / spec.zeta)
    return assign_signs(absolute, sign_rng)


def run_experiment(spec: SurrogateSpec, scales: list[int],
                   params: DetectorParams | None = None, jobs: int = 1) -> PhaseScan:
    """Generate a surrogate and scan it for the bifurcation."""
    return scan(surrogate_increments(spec), scales, params, jobs=jobs)


@dataclass(frozen=True)
class SweepCell:
    zeta: float
    seed: int
    scan: PhaseScan

    @property
    def present(self) -> bool:
        return self.scan.present_range is not None


@dataclass(frozen=True)
class ZetaAggregate:
    """Per-exponent summary over seeds."""

    zeta: float
    n_seeds: int
    present_fraction: float
    union_range: tuple[int, int] | None         # hull of present ranges
    intersection_range: tuple[int, int] | None


@dataclass(frozen=True)
class SweepResult:
    cells: tuple[SweepCell, ...]
    aggregates: tuple[ZetaAggregate, ...]


def _sweep_cell(args: tuple[float, int, float, int, list[int], DetectorParams]) -> SweepCell:
    zeta, seed, i_min, n, scales, params = args
    spec = SurrogateSpec(zeta=zeta, i_min=i_min, n=n, seed=seed)
    return SweepCell(zeta=zeta, seed=seed, scan=run_experiment(spec, scales, params))


def aggregate_zeta(zeta: float, cells: list[SweepCell]) -> ZetaAggregate:
    ranges = [c.scan.present_range for c in cells if c.scan.present_range is not None]
    frac = len(ranges) / len(cells)
    union = (min(r[0] for r in ranges), max(r[1] for r in ranges)) if ranges else None
    inter = None
    if ranges:
        lo, hi = max(r[0] for r in ranges), min(r[1] for r in ranges)
        if lo <= hi:
            inter = (lo, hi)
    return ZetaAggregate(zeta=zeta, n_seeds=len(cells), present_fraction=frac,
                         union_range=union, intersection_range=inter)


def sweep(zetas: list[float], seeds: list[int], i_min: float, n: int,
          scales: list[int], params: DetectorParams | None = None,
          jobs: int = 1) -> SweepResult:
    """Cartesian (zeta, seed) grid of surrogate experiments.

    Cells are independent; the result is identical for any job count.
    """
    if len(zetas) == 0:
        raise InputError("empty zeta list")
    if len(seeds) == 0:
        raise InputError("empty seed list")
    if len(set(seeds)) != len(seeds) or len(set(zetas)) != len(zetas):
        raise InputError("zetas and seeds must be distinct")
    params = params or DetectorParams()
    tasks = [(z, s, i_min, n, scales, params) for z in zetas for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_sweep_cell, tasks))
    else:
        cells = [_sweep_cell(t) for t in tasks]
    aggregates = tuple(aggregate_zeta(z, [c for c in cells if c.zeta == z]) for z in zetas)
    return SweepResult(cells=tuple(cells), aggregates=aggregates)
