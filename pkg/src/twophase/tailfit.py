"""Power-law tail estimation for absolute increments, and the cross-scale
distribution collapse diagnostic.

The tail exponent convention throughout is the CCDF exponent zeta:
P(X >= x) ~ (x / i_min)^(-zeta); the density exponent is zeta + 1.  The lower
bound is selected by minimizing the Kolmogorov-Smirnov distance between the
empirical tail and its maximum-likelihood power law; a least-squares fit on
the log-binned histogram provides the second estimate that is averaged with
the first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, InsufficientDataError
from .series import IncrementSeries
from .windows import window_stats


@dataclass(frozen=True)
class TailFitConfig:
    """Estimation knobs.

    min_tail: smallest admissible number of tail samples
    max_candidates: lower-bound candidates kept after quantile decimation
    tie_epsilon: KS-distance differences below tie_epsilon/sqrt(n_tail) count
        as ties, resolved toward the smallest lower bound
    ls_ratio: geometric ratio of the log-histogram bins
    ls_min_bins: least-squares fit needs at least this many fitted bins
    ls_min_count: bins with fewer samples are dropped from the LS fit
    """

    min_tail: int = 50
    max_candidates: int = 1000
    tie_epsilon: float = 0.5
    ls_ratio: float = 1.25
    ls_min_bins: int = 5
    ls_min_count: int = 10

    def __post_init__(self) -> None:
        if self.min_tail < 2:
            raise InputError("min_tail must be >= 2")
        if self.max_candidates < 2:
            raise InputError("max_candidates must be >= 2")
        if self.tie_epsilon < 0:
            raise InputError("tie_epsilon must be >= 0")
        if self.ls_ratio <= 1:
            raise InputError("ls_ratio must be > 1")
        if self.ls_min_bins < 2:
            raise InputError("ls_min_bins must be >= 2")
        if self.ls_min_count < 1:
            raise InputError("ls_min_count must be >= 1")


@dataclass(frozen=True)
class TailFit:
    """Fitted power-law tail; zeta_ls/zeta_avg are None until the LS pass."""

    i_min: float
    zeta_ks: float
    stderr: float
    ks_stat: float
    n_tail: int
    zeta_ls: float | None = None
    zeta_avg: float | None = None

    def __post_init__(self) -> None:
        if self.i_min <= 0 or self.zeta_ks <= 0:
            raise InputError("i_min and zeta must be positive")
        if not (0 <= self.ks_stat <= 1):
            raise InputError("ks_stat must lie in [0, 1]")
        if self.zeta_avg is not None:
            if self.zeta_ls is None or self.zeta_avg != (self.zeta_ks + self.zeta_ls) / 2:
                raise InputError("zeta_avg must equal (zeta_ks + zeta_ls) / 2 exactly")


def _validate_positive(samples: np.ndarray) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InputError("empty sample")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise InputError("samples must be positive finite reals")
    return x


def mle_exponent(samples: np.ndarray, i_min: float, min_tail: int = 50) -> tuple[float, float]:
    """Continuous maximum-likelihood CCDF exponent of the tail at or above i_min.

    Returns (zeta, stderr) with zeta = n / sum(ln(x_k / i_min)) and
    stderr = zeta / sqrt(n).
    """
    x = _validate_positive(samples)
    if i_min <= 0:
        raise InputError("i_min must be positive")
    tail = x[x >= i_min]
    n = len(tail)
    if n < min_tail:
        raise InsufficientDataError(f"only {n} tail samples at i_min={i_min} (need {min_tail})")
    log_sum = float(np.sum(np.log(tail / i_min)))
    if log_sum <= 0:
        raise InsufficientDataError("no variation above i_min; cannot fit a tail")
    zeta = n / log_sum
    return zeta, zeta / np.sqrt(n)


def ks_distance(samples: np.ndarray, i_min: float, zeta: float) -> float:
    """Sup distance between the empirical tail CCDF and (x/i_min)^(-zeta).

    Both distributions are restricted and renormalized to x >= i_min; the
    empirical step function is evaluated from both sides at every tail point.
    """
    x = _validate_positive(samples)
    if i_min <= 0 or zeta <= 0:
        raise InputError("i_min and zeta must be positive")
    tail = np.sort(x[x >= i_min])
    n = len(tail)
    if n == 0:
        raise InsufficientDataError(f"no samples at or above i_min={i_min}")
    model_cdf = 1.0 - (tail / i_min) ** (-zeta)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(upper - model_cdf)), np.max(np.abs(lower - model_cdf))))


def _candidates(x_sorted: np.ndarray, config: TailFitConfig) -> np.ndarray:
    n = len(x_sorted)
    cands = np.unique(x_sorted)
    first_at = np.searchsorted(x_sorted, cands, side="left")
    cands = cands[(n - first_at) >= config.min_tail]
    if len(cands) == 0:
        raise InsufficientDataError(
            f"no lower-bound candidate leaves {config.min_tail} tail samples")
    if len(cands) > config.max_candidates:
        qs = np.linspace(0.0, 1.0, config.max_candidates)
        cands = np.unique(np.quantile(cands, qs, method="nearest"))
    return cands


def select_lower_bound(samples: np.ndarray, config: TailFitConfig | None = None) -> TailFit:
    """Pick the lower bound minimizing the KS distance of the MLE power law.

    Candidates are the distinct sample values (quantile-decimated beyond
    max_candidates).  KS distances within tie_epsilon/sqrt(n_tail) of the
    minimum count as ties and resolve toward the smallest lower bound, which
    keeps the selection from wandering up the tail on noise.
    """
    config = config or TailFitConfig()
    x = np.sort(_validate_positive(samples))
    n = len(x)
    cands = _candidates(x, config)

    fits = []
    for xm in cands:
        pos = np.searchsorted(x, xm, side="left")
        tail = x[pos:]
        m = len(tail)
        log_sum = float(np.sum(np.log(tail / xm)))
        if log_sum <= 0:
            continue
        zeta = m / log_sum
        model_cdf = 1.0 - (tail / xm) ** (-zeta)
        upper = np.arange(1, m + 1) / m
        lower = np.arange(0, m) / m
        d = float(max(np.max(np.abs(upper - model_cdf)), np.max(np.abs(lower - model_cdf))))
        fits.append((d, float(xm), zeta, m))
    if not fits:
        raise InsufficientDataError("no tail variation at any candidate lower bound")
    d_min = min(f[0] for f in fits)
    chosen = None
    for d, xm, zeta, m in fits:  # ascending xm
        if d <= d_min + config.tie_epsilon / np.sqrt(m):
            chosen = (d, xm, zeta, m)
            break
    assert chosen is not None
    d, xm, zeta, m = chosen
    return TailFit(i_min=xm, zeta_ks=zeta, stderr=zeta / np.sqrt(m), ks_stat=d, n_tail=m)


def ls_exponent(samples: np.ndarray, i_min: float, config: TailFitConfig | None = None) -> float:
    """CCDF exponent from least squares on the log-binned density histogram.

    Bins grow geometrically by ls_ratio from i_min; bins with fewer than
    ls_min_count samples are dropped, and the ordinary least-squares slope of
    log density against log bin center gives zeta = |slope| - 1.
    """
    config = config or TailFitConfig()
    x = _validate_positive(samples)
    if i_min <= 0:
        raise InputError("i_min must be positive")
    tail = x[x >= i_min]
    if len(tail) == 0:
        raise InsufficientDataError(f"no samples at or above i_min={i_min}")
    xmax = float(tail.max())
    nb = max(int(np.ceil(np.log(xmax / i_min) / np.log(config.ls_ratio))), 1)
    edges = i_min * config.ls_ratio ** np.arange(nb + 1)
    edges[-1] = max(edges[-1], xmax * (1 + 1e-12))
    counts, _ = np.histogram(tail, bins=edges)
    density = counts / (np.diff(edges) * len(tail))
    fit_mask = counts >= config.ls_min_count
    if fit_mask.sum() < config.ls_min_bins:
        raise InsufficientDataError(
            f"{int(fit_mask.sum())} occupied log-bins < {config.ls_min_bins} needed for LS")
    centers = np.sqrt(edges[:-1] * edges[1:])
    slope = np.polyfit(np.log(centers[fit_mask]), np.log(density[fit_mask]), 1)[0]
    return float(abs(slope) - 1.0)


def fit_tail(samples: np.ndarray, config: TailFitConfig | None = None) -> TailFit:
    """KS lower-bound selection followed by the LS exponent at that bound."""
    config = config or TailFitConfig()
    ks_fit = select_lower_bound(samples, config)
    zeta_ls = ls_exponent(samples, ks_fit.i_min, config)
    return TailFit(
        i_min=ks_fit.i_min, zeta_ks=ks_fit.zeta_ks, stderr=ks_fit.stderr,
        ks_stat=ks_fit.ks_stat, n_tail=ks_fit.n_tail,
        zeta_ls=zeta_ls, zeta_avg=(ks_fit.zeta_ks + zeta_ls) / 2)


def ccdf_points(samples: np.ndarray) -> np.ndarray:
    """Empirical P(X >= x) at each distinct sample value, as an (k, 2) array."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InputError("empty sample")
    x = np.sort(x)
    values, first_at = np.unique(x, return_index=True)
    ccdf = (len(x) - first_at) / len(x)
    return np.column_stack([values, ccdf])


@dataclass(frozen=True)
class CollapseReport:
    """Cross-scale stability of the rescaled return distribution.

    Every scale's returns are rescaled by their mean absolute deviation; the
    discrepancy matrix holds sup distances between the rescaled empirical
    CDFs, and the collapse score is its maximum entry.
    """

    scales: tuple[int, ...]
    dispersions: tuple[float, ...]
    n_windows: tuple[int, ...]
    pdf_points: tuple[np.ndarray, ...]   # per scale: (k, 2) rescaled (x, density)
    discrepancy: np.ndarray              # symmetric, zero diagonal
    score: float


def _two_sample_sup(a: np.ndarray, b: np.ndarray) -> float:
    merged = np.concatenate([a, b])
    ca = np.searchsorted(a, merged, side="right") / len(a)
    cb = np.searchsorted(b, merged, side="right") / len(b)
    return float(np.max(np.abs(ca - cb)))


def collapse(incs: IncrementSeries, scales: list[int], min_windows: int = 100,
             pdf_bins: int = 61) -> CollapseReport:
    """Rescaled-distribution collapse across scales (disjoint windows).

    Raises InsufficientDataError when any scale yields fewer than min_windows
    valid windows or a vanishing dispersion.
    """
    if len(scales) < 2:
        raise InputError("collapse needs at least 2 scales")
    if sorted(set(scales)) != list(scales):
        raise InputError("scales must be distinct and ascending")
    rescaled: list[np.ndarray] = []
    dispersions: list[float] = []
    counts: list[int] = []
    for s in scales:
        z = window_stats(incs, s).z_valid
        if len(z) < min_windows:
            raise InsufficientDataError(f"scale {s}: {len(z)} valid windows < {min_windows}")
        disp = float(np.mean(np.abs(z - z.mean())))
        if disp <= 0:
            raise InsufficientDataError(f"scale {s}: zero dispersion, cannot rescale")
        rescaled.append(np.sort(z / disp))
        dispersions.append(disp)
        counts.append(len(z))

    k = len(scales)
    mat = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            mat[i, j] = mat[j, i] = _two_sample_sup(rescaled[i], rescaled[j])

    lo = min(r[0] for r in rescaled)
    hi = max(r[-1] for r in rescaled)
    edges = np.linspace(lo, hi, pdf_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    pdfs = []
    for r in rescaled:
        dens, _ = np.histogram(r, bins=edges, density=True)
        keep = dens > 0
        pdfs.append(np.column_stack([centers[keep], dens[keep]]))

    return CollapseReport(
        scales=tuple(scales), dispersions=tuple(dispersions), n_windows=tuple(counts),
        pdf_points=tuple(pdfs), discrepancy=mat, score=float(mat.max()))
