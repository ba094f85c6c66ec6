"""Preprocessing chain for raw MS profiles.

Steps, in the order :func:`preprocess_batch` applies them: cube-root
variance stabilization, moving-window baseline subtraction, Gaussian
smoothing, windowed total-ion-current normalization and peak-based
dynamic-programming alignment against a reference profile.  A TIC z-score
rule screens raw profiles before any of that.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import minimum_filter1d
from scipy.signal import peak_prominences

from biofuse.errors import (
    BatchTooSmall,
    ConfigInvalid,
    NoPeaksWarning,
    SpectrumTooShort,
    ZeroTIC,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Spectrum:
    """One sample's intensity profile on an ascending m/z grid."""

    mz: np.ndarray
    intensity: np.ndarray
    sample_id: str = ""

    def __post_init__(self):
        mz = np.asarray(self.mz, dtype=np.float64)
        intensity = np.asarray(self.intensity, dtype=np.float64)
        if mz.ndim != 1 or intensity.shape != mz.shape:
            raise ValueError("mz and intensity must be 1-D arrays of equal length")
        if mz.size < 2:
            raise ValueError("a spectrum needs at least two points")
        if np.any(np.diff(mz) <= 0):
            raise ValueError("mz must be strictly increasing")
        object.__setattr__(self, "mz", mz)
        object.__setattr__(self, "intensity", intensity)

    def __len__(self) -> int:
        return self.mz.size

    def with_intensity(self, intensity: np.ndarray) -> "Spectrum":
        return Spectrum(self.mz, intensity, self.sample_id)


@dataclass(frozen=True)
class PipelineConfig:
    baseline_window: int = 200
    smooth_sigma: float = 5.0
    tic_lo: float = 1500.0
    tic_hi: float = 20000.0
    qc_sd_limit: float = 2.0
    gap_penalty: float = 0.0
    match_bandwidth: float = 25.0
    # Pairs further apart than this many bandwidths are never matched.
    match_cutoff: float = 3.0
    align: bool = True

    def __post_init__(self):
        if self.baseline_window < 3:
            raise ConfigInvalid("baseline_window must be >= 3")
        if not self.smooth_sigma > 0:
            raise ConfigInvalid("smooth_sigma must be positive")
        if not self.tic_lo < self.tic_hi:
            raise ConfigInvalid("tic_lo must be below tic_hi")
        if not self.qc_sd_limit > 0:
            raise ConfigInvalid("qc_sd_limit must be positive")
        if self.gap_penalty < 0:
            raise ConfigInvalid("gap_penalty must be >= 0")
        if not self.match_bandwidth > 0 or not self.match_cutoff > 0:
            raise ConfigInvalid("match_bandwidth and match_cutoff must be positive")

    @property
    def window(self) -> int:
        """Baseline window forced to an odd width so it can be centered."""
        w = int(self.baseline_window)
        return w if w % 2 == 1 else w + 1

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigInvalid(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Alignment:
    """Monotone peak matching plus the piecewise-linear m/z warp it induces.

    ``pairs`` holds (reference peak index, target peak index) positions into
    ``reference_peaks`` / ``target_peaks``, which are grid indices.  The
    warp maps target m/z ``anchor_target`` onto reference m/z
    ``anchor_reference`` and interpolates linearly in between.
    """

    pairs: list[tuple[int, int]]
    reference_peaks: np.ndarray
    target_peaks: np.ndarray
    score: float
    anchor_target: np.ndarray
    anchor_reference: np.ndarray
    no_peaks: bool = False

    def warp(self, mz: np.ndarray) -> np.ndarray:
        mz = np.asarray(mz, dtype=np.float64)
        src, dst = self.anchor_target, self.anchor_reference
        if src.size == 0:
            return mz.copy()
        out = np.interp(mz, src, dst)
        # unit slope beyond the outermost anchors
        below, above = mz < src[0], mz > src[-1]
        out[below] = mz[below] + (dst[0] - src[0])
        out[above] = mz[above] + (dst[-1] - src[-1])
        return out


def variance_stabilize(s: Spectrum) -> Spectrum:
    return s.with_intensity(np.cbrt(s.intensity))


def _window_mean(values: np.ndarray, half: int) -> np.ndarray:
    """Centered moving mean with windows truncated at the edges."""
    n = values.size
    offset = values.min()
    # shifting by the minimum keeps constant inputs exact under cumsum
    cs = np.concatenate(([0.0], np.cumsum(values - offset)))
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return (cs[hi] - cs[lo]) / (hi - lo) + offset


def estimate_baseline(intensity: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    # 'nearest' padding repeats an edge value that is already inside the
    # truncated window, so the minimum equals the truncated-window minimum.
    floor = minimum_filter1d(intensity, size=window, mode="nearest")
    return _window_mean(floor, half)


def correct_baseline(s: Spectrum, cfg: PipelineConfig) -> Spectrum:
    w = cfg.window
    if len(s) < cfg.baseline_window:
        raise SpectrumTooShort(
            f"spectrum {s.sample_id!r} has {len(s)} points, baseline window is {cfg.baseline_window}"
        )
    return s.with_intensity(s.intensity - estimate_baseline(s.intensity, w))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.floor(4.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-0.5 * (k / sigma) ** 2)


def smooth(s: Spectrum, cfg: PipelineConfig) -> Spectrum:
    return s.with_intensity(smooth_array(s.intensity, cfg.smooth_sigma))


def smooth_array(values: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian smoothing renormalized by the kernel mass inside the grid."""
    kernel = gaussian_kernel(sigma)
    r = kernel.size // 2
    n = values.size
    num = np.convolve(values, kernel, mode="full")[r : r + n]
    den = np.convolve(np.ones(n), kernel, mode="full")[r : r + n]
    return num / den


def tic(s: Spectrum, cfg: PipelineConfig) -> float:
    mask = (s.mz >= cfg.tic_lo) & (s.mz <= cfg.tic_hi)
    return float(s.intensity[mask].sum())


def normalize_tic(s: Spectrum, cfg: PipelineConfig, target: float = 1.0) -> Spectrum:
    if not target > 0:
        raise ValueError("target TIC must be positive")
    total = tic(s, cfg)
    if not total > 0:
        raise ZeroTIC(f"spectrum {s.sample_id!r} has windowed TIC {total}")
    return s.with_intensity(s.intensity * (target / total))


def tic_zscores(batch: Sequence[Spectrum], cfg: PipelineConfig) -> np.ndarray:
    if len(batch) < 2:
        raise BatchTooSmall("TIC quality control needs at least two spectra")
    tics = np.array([tic(s, cfg) for s in batch])
    sd = tics.std(ddof=1)
    if sd == 0:
        return np.zeros_like(tics)
    return (tics - tics.mean()) / sd


def qc_filter(batch: Sequence[Spectrum], cfg: PipelineConfig) -> tuple[list[Spectrum], list[Spectrum]]:
    """Split ``batch`` into (kept, excluded) by the raw-TIC z-score rule."""
    z = tic_zscores(batch, cfg)
    kept, excluded = [], []
    for s, zi in zip(batch, z):
        (excluded if abs(zi) > cfg.qc_sd_limit else kept).append(s)
    return kept, excluded


def _plateau_maxima(y: np.ndarray) -> np.ndarray:
    d = np.diff(y)
    nz = np.flatnonzero(d)
    if nz.size < 2:
        return np.array([], dtype=np.int64)
    sign = np.sign(d[nz])
    turn = np.flatnonzero((sign[:-1] > 0) & (sign[1:] < 0))
    left = nz[turn] + 1
    right = nz[turn + 1]
    return ((left + right) // 2).astype(np.int64)


def detect_peaks_array(y: np.ndarray) -> np.ndarray:
    """Grid indices where the first difference turns from rising to falling.

    Candidates must stand out from the noise floor: prominence of at least
    three times the median absolute first difference.
    """
    y = np.asarray(y, dtype=np.float64)
    cand = _plateau_maxima(y)
    if cand.size == 0:
        return cand
    floor = 3.0 * np.median(np.abs(np.diff(y)))
    prom = peak_prominences(y, cand)[0]
    return cand[(prom >= floor) & (prom > 0)]


def detect_spectrum_peaks(s: Spectrum) -> np.ndarray:
    return detect_peaks_array(s.intensity)


def _match_score(ref_mz: np.ndarray, tgt_mz: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    delta = ref_mz[:, None] - tgt_mz[None, :]
    score = np.exp(-(delta**2) / (2.0 * cfg.match_bandwidth**2))
    score[np.abs(delta) > cfg.match_cutoff * cfg.match_bandwidth] = -np.inf
    return score


def match_peaks(ref_mz: np.ndarray, tgt_mz: np.ndarray, cfg: PipelineConfig) -> tuple[float, list[tuple[int, int]]]:
    """Best monotone matching between two ascending peak position lists.

    Score is the sum of Gaussian match scores minus ``gap_penalty`` for each
    peak on either side that stays unmatched.
    """
    n, m = ref_mz.size, tgt_mz.size
    s = _match_score(ref_mz, tgt_mz, cfg)
    gap = cfg.gap_penalty
    best = np.empty((n + 1, m + 1))
    best[:, 0] = -gap * np.arange(n + 1)
    best[0, :] = -gap * np.arange(m + 1)
    move = np.zeros((n + 1, m + 1), dtype=np.int8)  # 0 match, 1 skip ref, 2 skip target
    move[1:, 0] = 1
    move[0, 1:] = 2
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = best[i - 1, j - 1] + s[i - 1, j - 1]
            up = best[i - 1, j] - gap
            left = best[i, j - 1] - gap
            if diag >= up and diag >= left:
                best[i, j], move[i, j] = diag, 0
            elif up >= left:
                best[i, j], move[i, j] = up, 1
            else:
                best[i, j], move[i, j] = left, 2
    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        mv = move[i, j]
        if mv == 0:
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif mv == 1:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return float(best[n, m]), pairs


def _anchors(pairs, ref_mz, tgt_mz, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    src = [float(tgt_mz[j]) for _, j in pairs]
    dst = [float(ref_mz[i]) for i, _ in pairs]
    if not src:
        return np.array([lo, hi]), np.array([lo, hi])
    if lo < src[0] and lo < dst[0]:
        src.insert(0, lo)
        dst.insert(0, lo)
    if hi > src[-1] and hi > dst[-1]:
        src.append(hi)
        dst.append(hi)
    return np.array(src), np.array(dst)


def align(target: Spectrum, reference: Spectrum, cfg: PipelineConfig) -> tuple[Alignment, Spectrum]:
    """Warp ``target`` onto ``reference``'s grid by matching detected peaks."""
    ref_pk = detect_spectrum_peaks(reference)
    tgt_pk = detect_spectrum_peaks(target)
    if ref_pk.size == 0 or tgt_pk.size == 0:
        warnings.warn(f"no peaks to align for sample {target.sample_id!r}", NoPeaksWarning, stacklevel=2)
        ident = Alignment([], ref_pk, tgt_pk, 0.0, np.array([]), np.array([]), no_peaks=True)
        warped = np.interp(reference.mz, target.mz, target.intensity)
        return ident, Spectrum(reference.mz, warped, target.sample_id)
    ref_mz = reference.mz[ref_pk]
    tgt_mz = target.mz[tgt_pk]
    score, pairs = match_peaks(ref_mz, tgt_mz, cfg)
    lo = min(reference.mz[0], target.mz[0])
    hi = max(reference.mz[-1], target.mz[-1])
    a_tgt, a_ref = _anchors(pairs, ref_mz, tgt_mz, lo, hi)
    result = Alignment(pairs, ref_pk, tgt_pk, score, a_tgt, a_ref)
    warped_mz = result.warp(target.mz)
    warped = np.interp(reference.mz, warped_mz, target.intensity)
    return result, Spectrum(reference.mz, warped, target.sample_id)


def mean_intensity(batch: Sequence[Spectrum]) -> np.ndarray:
    return np.mean(np.stack([s.intensity for s in batch]), axis=0)


@dataclass
class PreprocessResult:
    spectra: list[Spectrum]
    excluded: list[str]
    zscores: dict[str, float]
    tic_target: float
    alignments: list[Alignment] = field(default_factory=list)


def preprocess_batch(batch: Sequence[Spectrum], cfg: PipelineConfig) -> PreprocessResult:
    """Run QC and the full five-step chain over a batch sharing one m/z grid.

    The normalization target is the mean windowed TIC of the kept, smoothed
    spectra; the alignment reference is their mean profile.
    """
    z = tic_zscores(batch, cfg)
    zscores = {s.sample_id: float(zi) for s, zi in zip(batch, z)}
    kept, excluded = qc_filter(batch, cfg)
    if excluded:
        logger.info("QC excluded %d of %d spectra", len(excluded), len(batch))
    stage = [smooth(correct_baseline(variance_stabilize(s), cfg), cfg) for s in kept]
    target = float(np.mean([tic(s, cfg) for s in stage]))
    stage = [normalize_tic(s, cfg, target) for s in stage]
    alignments: list[Alignment] = []
    if cfg.align and len(stage) > 1:
        reference = Spectrum(stage[0].mz, mean_intensity(stage), "reference")
        aligned = []
        for s in stage:
            al, warped = align(s, reference, cfg)
            alignments.append(al)
            aligned.append(warped)
        stage = aligned
    return PreprocessResult(stage, [s.sample_id for s in excluded], zscores, target, alignments)
