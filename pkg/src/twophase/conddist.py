"""Conditional return distributions p(Z | r), modality classification, and
the scale scan for the unimodal-to-bimodal bifurcation.

Valid windows are bucketed by their fluctuation r (equal-count bins by
default), the return Z is histogrammed per bucket on a shared symmetric grid,
and each bucket is classified by counting prominent modes of the smoothed
histogram.  A scale shows the bifurcation when a unimodal phase at low r is
followed by a persistent run of bimodal buckets at the top of the r range.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks

from .errors import InputError, InsufficientDataError
from .series import IncrementSeries
from .windows import WindowStats, window_stats

UNIMODAL = "unimodal"
BIMODAL = "bimodal"
MULTIMODAL = "multimodal"
INSUFFICIENT = "insufficient"


@dataclass(frozen=True)
class DetectorParams:
    """Knobs of the modality detector; all surfaced as CLI flags.

    r_bins: number of fluctuation bins (equal-count by default)
    r_binning: "quantile" or "fixed" (equal-width)
    min_samples: buckets below this count are never classified
    smoothing: moving-average window over Z bins, odd number of bins
    prominence: minimal peak prominence as a fraction of the smoothed maximum
    persist: consecutive bimodal buckets required at and above the transition
    max_z_bins: cap on the shared Z grid; wider data gets coarser bins
    """

    r_bins: int = 24
    r_binning: str = "quantile"
    min_samples: int = 200
    smoothing: int = 3
    prominence: float = 0.1
    persist: int = 2
    max_z_bins: int = 4001

    def __post_init__(self) -> None:
        if self.r_bins < 1:
            raise InputError("r_bins must be >= 1")
        if self.r_binning not in ("quantile", "fixed"):
            raise InputError(f"unknown r_binning {self.r_binning!r}")
        if self.min_samples < 1:
            raise InputError("min_samples must be >= 1")
        if self.smoothing < 1 or self.smoothing % 2 == 0:
            raise InputError("smoothing must be an odd number of bins, >= 1")
        if not (0 < self.prominence <= 1):
            raise InputError("prominence must be in (0, 1]")
        if self.persist < 1:
            raise InputError("persist must be >= 1")
        if self.max_z_bins < 3:
            raise InputError("max_z_bins must be >= 3")


@dataclass(frozen=True)
class ConditionalDistribution:
    """r-binned, per-bin-normalized histograms of the return Z.

    The Z grid is uniform with width z_width, symmetric about zero (zero is a
    bin center); `masses[b]` sums to 1 for every occupied r-bin b.
    """

    scale: int
    r_edges: np.ndarray       # nb + 1 ascending edges
    r_counts: np.ndarray      # samples per r-bin
    z_width: float
    z_half: int               # bins per side; total bins = 2 * z_half + 1
    masses: np.ndarray        # shape (nb, 2 * z_half + 1)

    @property
    def n_bins(self) -> int:
        return len(self.r_counts)

    @property
    def z_centers(self) -> np.ndarray:
        return (np.arange(2 * self.z_half + 1) - self.z_half) * self.z_width

    @property
    def z_edges(self) -> np.ndarray:
        return (np.arange(2 * self.z_half + 2) - self.z_half - 0.5) * self.z_width

    def r_bin_bounds(self, b: int) -> tuple[float, float]:
        return float(self.r_edges[b]), float(self.r_edges[b + 1])


@dataclass(frozen=True)
class RBinModality:
    """Classification of one r-bin."""

    lower: float
    upper: float
    count: int
    classification: str
    mode_count: int
    mode_locations: tuple[float, ...]

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class ModalityReport:
    """Per-scale verdict on the unimodal-to-bimodal transition."""

    scale: int
    bins: tuple[RBinModality, ...]
    r_c: float | None
    present: bool
    reason: str


@dataclass(frozen=True)
class ScalePoint:
    scale: int
    present: bool
    r_c: float | None
    reason: str


@dataclass(frozen=True)
class PhaseScan:
    """Scan of the bifurcation verdict across scales.

    present_range is the maximal contiguous run of present scales in the
    scanned grid (ties resolved toward the largest scales), or None.
    """

    entries: tuple[ScalePoint, ...]
    present_range: tuple[int, int] | None


def _r_edges(r: np.ndarray, params: DetectorParams) -> np.ndarray:
    if params.r_binning == "quantile":
        qs = np.quantile(r, np.linspace(0.0, 1.0, params.r_bins + 1))
    else:
        qs = np.linspace(r.min(), r.max(), params.r_bins + 1)
    edges = np.unique(qs)
    if len(edges) == 1:
        # degenerate conditioning: a single bin holding everything
        edges = np.array([edges[0], edges[0]])
    return edges


def _z_grid(z: np.ndarray, n_fd: int, max_z_bins: int) -> tuple[float, int]:
    """Uniform symmetric Z grid: Freedman-Diaconis width from the pooled IQR
    at the typical per-bin sample size, capped at max_z_bins bins."""
    q75, q25 = np.percentile(z, [75, 25])
    width = 2.0 * (q75 - q25) / max(n_fd, 2) ** (1.0 / 3.0)
    maxabs = float(np.max(np.abs(z)))
    if maxabs <= 0:
        maxabs = 1.0
    if width <= 0:
        width = 2.0 * maxabs / 50.0
    half = int(np.ceil(maxabs / width + 0.5))
    if 2 * half + 1 > max_z_bins:
        half = (max_z_bins - 1) // 2
        width = maxabs / (half - 0.5)
    return width, half


def condition(windows: WindowStats, params: DetectorParams | None = None) -> ConditionalDistribution:
    """Bucket valid windows by r and histogram Z per bucket on a shared grid.

    Raises InsufficientDataError when fewer than min_samples windows are
    valid, or when every bucket falls below min_samples.
    """
    params = params or DetectorParams()
    z, r = windows.z_valid, windows.r_valid
    if len(z) < params.min_samples:
        raise InsufficientDataError(
            f"scale {windows.scale}: {len(z)} valid windows < min_samples={params.min_samples}")
    edges = _r_edges(r, params)
    nb = max(len(edges) - 1, 1)
    if edges[0] == edges[-1]:
        idx = np.zeros(len(r), dtype=np.int64)
    else:
        idx = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, nb - 1)
    counts = np.bincount(idx, minlength=nb)
    classified = counts >= params.min_samples
    if not classified.any():
        raise InsufficientDataError(
            f"scale {windows.scale}: all r-bins below min_samples={params.min_samples}")
    n_fd = int(np.median(counts[classified]))
    width, half = _z_grid(z, n_fd, params.max_z_bins)
    nz = 2 * half + 1
    masses = np.zeros((nb, nz))
    zi = np.rint(z / width).astype(np.int64) + half
    np.clip(zi, 0, nz - 1, out=zi)
    for b in range(nb):
        sel = idx == b
        if counts[b] == 0:
            continue
        masses[b] = np.bincount(zi[sel], minlength=nz) / counts[b]
    return ConditionalDistribution(
        scale=windows.scale, r_edges=edges, r_counts=counts,
        z_width=width, z_half=half, masses=masses)


def count_modes(mass: np.ndarray, smoothing: int = 3, prominence: float = 0.1,
                centers: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Count prominent modes of a normalized histogram.

    The histogram is smoothed with a moving average of `smoothing` bins and
    modes are local maxima whose prominence reaches `prominence` times the
    smoothed global maximum.  A histogram with no interior peak (a plateau)
    counts as one mode at the plateau center.  Returns (count, locations);
    locations are bin centers when `centers` is given, else bin indices.
    """
    mass = np.asarray(mass, dtype=float)
    if mass.size == 0 or mass.sum() <= 0:
        raise InputError("count_modes: empty histogram")
    if smoothing < 1 or smoothing % 2 == 0:
        raise InputError("smoothing must be an odd number of bins, >= 1")
    if smoothing > 1:
        kernel = np.ones(smoothing) / smoothing
        sm = np.convolve(mass, kernel, mode="same")
    else:
        sm = mass
    peaks, _ = find_peaks(sm, prominence=prominence * sm.max())
    if len(peaks) == 0:
        top = np.flatnonzero(sm == sm.max())
        peaks = np.array([top[(len(top) - 1) // 2]])
    if centers is not None:
        return len(peaks), np.asarray(centers, dtype=float)[peaks]
    return len(peaks), peaks


def _verdict(labels: list[str], persist: int) -> tuple[bool, int | None, str]:
    """Apply the transition rule to the classified-bin label sequence.

    Present iff some bimodal bin b has: no unimodal bin at or above b, a run
    of `persist` consecutive bimodal bins starting at b, at least one
    unimodal bin below b, and no multimodal bin between the last unimodal
    bin below b and b.  Returns (present, index into labels, reason).
    """
    if not labels:
        return False, None, "no r-bin reaches min_samples"
    if BIMODAL not in labels:
        return False, None, "no bimodal r-bin"
    for i, lab in enumerate(labels):
        if lab != BIMODAL:
            continue
        tail = labels[i:]
        if UNIMODAL in tail:
            continue
        if len(tail) < persist or any(t != BIMODAL for t in tail[:persist]):
            continue
        below = labels[:i]
        if UNIMODAL not in below:
            continue
        last_u = max(j for j, t in enumerate(below) if t == UNIMODAL)
        if MULTIMODAL in below[last_u + 1:]:
            continue
        return True, i, "unimodal phase followed by persistent bimodal phase"
    return False, None, "no persistent bimodal phase above a unimodal phase"


def classify(cond: ConditionalDistribution, params: DetectorParams | None = None) -> ModalityReport:
    """Classify every r-bin and decide whether the bifurcation is present."""
    params = params or DetectorParams()
    centers = cond.z_centers
    bins: list[RBinModality] = []
    for b in range(cond.n_bins):
        lower, upper = cond.r_bin_bounds(b)
        count = int(cond.r_counts[b])
        if count < params.min_samples:
            bins.append(RBinModality(lower, upper, count, INSUFFICIENT, 0, ()))
            continue
        k, locs = count_modes(cond.masses[b], params.smoothing, params.prominence, centers)
        label = UNIMODAL if k == 1 else (BIMODAL if k == 2 else MULTIMODAL)
        bins.append(RBinModality(lower, upper, count, label, k, tuple(float(x) for x in locs)))

    classified = [(b, rb.classification) for b, rb in enumerate(bins)
                  if rb.classification != INSUFFICIENT]
    labels = [c for _, c in classified]
    present, pos, reason = _verdict(labels, params.persist)
    r_c = bins[classified[pos][0]].midpoint if present and pos is not None else None
    return ModalityReport(scale=cond.scale, bins=tuple(bins), r_c=r_c,
                          present=present, reason=reason)


@dataclass(frozen=True)
class ScaleAnalysis:
    """Full per-scale detail kept by the scan for reporting."""

    scale: int
    report: ModalityReport
    cond: ConditionalDistribution | None


def analyze_scale(incs: IncrementSeries, scale: int,
                  params: DetectorParams | None = None) -> ScaleAnalysis:
    """Window, condition and classify one scale.

    Statistical starvation yields an absent verdict with a reason instead of
    an error; genuine input errors (scale longer than the series) propagate.
    """
    params = params or DetectorParams()
    ws = window_stats(incs, scale)
    try:
        cond = condition(ws, params)
    except InsufficientDataError as exc:
        report = ModalityReport(scale=scale, bins=(), r_c=None, present=False, reason=str(exc))
        return ScaleAnalysis(scale=scale, report=report, cond=None)
    return ScaleAnalysis(scale=scale, report=classify(cond, params), cond=cond)


def _analyze_cell(args: tuple[IncrementSeries, int, DetectorParams]) -> ScaleAnalysis:
    incs, scale, params = args
    return analyze_scale(incs, scale, params)


def scan_detailed(incs: IncrementSeries, scales: list[int],
                  params: DetectorParams | None = None, jobs: int = 1) -> list[ScaleAnalysis]:
    """analyze_scale over a scale grid, optionally in parallel.

    Results are ordered by the input grid and identical for any job count.
    """
    params = params or DetectorParams()
    if len(scales) == 0:
        raise InputError("empty scale grid")
    if sorted(scales) != list(scales):
        raise InputError("scales must be ascending")
    n = len(incs)
    too_long = [s for s in scales if s > n]
    if too_long:
        raise InputError(f"scales {too_long} exceed increment series length {n}")
    if jobs > 1 and len(scales) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_analyze_cell, [(incs, s, params) for s in scales]))
    else:
        results = [analyze_scale(incs, s, params) for s in scales]
    return results


def present_range(entries: list[tuple[int, bool]]) -> tuple[int, int] | None:
    """Maximal contiguous run of present scales; ties go to the latest run."""
    runs: list[list[int]] = []
    cur: list[int] = []
    for scale, present in entries:
        if present:
            cur.append(scale)
        else:
            if cur:
                runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    if not runs:
        return None
    best_len = max(len(r) for r in runs)
    best = [r for r in runs if len(r) == best_len][-1]
    return best[0], best[-1]


def scan(incs: IncrementSeries, scales: list[int],
         params: DetectorParams | None = None, jobs: int = 1) -> PhaseScan:
    """Classify every scale and report the maximal contiguous present-range."""
    analyses = scan_detailed(incs, scales, params, jobs)
    entries = tuple(ScalePoint(a.scale, a.report.present, a.report.r_c, a.report.reason)
                    for a in analyses)
    rng = present_range([(e.scale, e.present) for e in entries])
    return PhaseScan(entries=entries, present_range=rng)
