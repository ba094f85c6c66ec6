"""Seeded two-source synthetic study.

The spectral source carries a diffuse linear signal: small class shifts
on many peaks whose amplitudes share a factor within blocks of
neighbouring peaks.  Shifts inside a block alternate in sign, so a
hyperplane can contrast peaks and cancel the shared variation while
axis-aligned splits see only weak marginal differences.  The panel source carries the
opposite kind of signal: an XOR pair and two one-sided threshold
features that trees pick up and a hyperplane mostly cannot.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from biofuse.dataset import CASE, CONTROL, Dataset, SourceTag
from biofuse.errors import ConfigInvalid
from biofuse.spectra import Spectrum


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 106
    n_cases: int = 53
    spectral_grid_size: int = 1554
    mz_lo: float = 1000.0
    mz_hi: float = 21000.0
    n_true_peaks: int = 100
    peak_width: float = 2.0  # Gaussian sd, grid points
    peak_correlation: float = 0.85
    block_size: int = 10
    peak_cv: float = 0.25
    linear_effect_size: float = 0.17
    informative_fraction: float = 0.6
    n_panel_features: int = 30
    panel_effect: float = 1.0
    noise_sd: float = 0.5
    baseline_level: float = 40.0
    mz_jitter: float = 0.0  # per-sample m/z shift sd, grid points
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not 0 < self.n_cases < self.n_samples:
            problems.append("need 0 < n_cases < n_samples")
        if not 0 <= self.peak_correlation < 1:
            problems.append("peak_correlation must lie in [0, 1)")
        if self.spectral_grid_size < 2 or self.n_true_peaks < 1 or self.n_panel_features < 1 or self.block_size < 1:
            problems.append("sizes must be positive")
        if self.n_panel_features < 4 and self.panel_effect > 0:
            problems.append("panel signal needs at least 4 panel features")
        if self.peak_width <= 0 or self.noise_sd < 0 or self.peak_cv < 0:
            problems.append("peak_width must be positive, noise_sd and peak_cv non-negative")
        if not 0 <= self.panel_effect <= 1:
            problems.append("panel_effect must lie in [0, 1]")
        if not 0 < self.informative_fraction <= 1:
            problems.append("informative_fraction must lie in (0, 1]")
        if not self.mz_lo < self.mz_hi:
            problems.append("mz_lo must be below mz_hi")
        usable = self.spectral_grid_size - 8 * self.peak_width
        if usable / self.n_true_peaks < 4 * self.peak_width:
            problems.append("grid too small for that many separated peaks")
        if problems:
            raise ConfigInvalid("; ".join(problems))

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - names
        if extra:
            raise ConfigInvalid(f"unknown synth keys: {sorted(extra)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SynthData:
    spectra: list[Spectrum]
    panel: Dataset
    labels: np.ndarray
    truth: dict


def _peak_centers(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    margin = 4 * cfg.peak_width
    lo, hi = margin, cfg.spectral_grid_size - 1 - margin
    spacing = (hi - lo) / cfg.n_true_peaks
    centers = lo + spacing * (np.arange(cfg.n_true_peaks) + 0.5)
    jitter = rng.uniform(-0.25, 0.25, cfg.n_true_peaks) * spacing
    return np.round(centers + jitter).astype(np.int64)


# share of affected cases carrying each signal: XOR pair, high cut, low cut
PANEL_REASONS = (0.2, 0.4, 0.4)
PANEL_CUT = 0.8
XOR_MARGIN = 0.3


def _panel(cfg: SynthConfig, labels: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    n, p = labels.size, cfg.n_panel_features
    X = rng.standard_normal((n, p))
    q = cfg.panel_effect
    case = labels == CASE
    informative = {}
    if q > 0:
        # affected controls sit inside both cuts and in the XOR quadrants
        # opposite to the affected cases
        reason = rng.choice(3, size=n, p=PANEL_REASONS)
        active = rng.random(n) < q
        xor = active & (~case | (reason == 0))
        flip = xor & (np.sign(X[:, 0]) * np.sign(X[:, 1]) != np.where(case, 1.0, -1.0))
        X[flip, 1] *= -1
        X[xor, :2] = np.sign(X[xor, :2]) * (np.abs(X[xor, :2]) + XOR_MARGIN)
        high = active & case & (reason == 1)
        low = active & case & (reason == 2)
        X[high, 2] = rng.uniform(PANEL_CUT, PANEL_CUT + 2.0, high.sum())
        X[low, 3] = rng.uniform(-PANEL_CUT - 2.0, -PANEL_CUT, low.sum())
        ctrl = active & ~case
        inside = rng.uniform(-PANEL_CUT, PANEL_CUT, (ctrl.sum(), 2))
        X[ctrl, 2] = np.where(X[ctrl, 2] > PANEL_CUT, inside[:, 0], X[ctrl, 2])
        X[ctrl, 3] = np.where(X[ctrl, 3] < -PANEL_CUT, inside[:, 1], X[ctrl, 3])
        informative = {"xor": [0, 1], "high_threshold": 2, "low_threshold": 3}
    return X, informative


def generate(cfg: SynthConfig) -> SynthData:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    n, g = cfg.n_samples, cfg.spectral_grid_size
    labels = np.full(n, CONTROL, dtype=np.int64)
    labels[rng.permutation(n)[: cfg.n_cases]] = CASE
    ids = [f"S{i:04d}" for i in range(n)]

    mz = np.linspace(cfg.mz_lo, cfg.mz_hi, g)
    centers = _peak_centers(cfg, rng)
    heights = rng.uniform(20.0, 100.0, cfg.n_true_peaks)
    block = np.arange(cfg.n_true_peaks) // cfg.block_size
    n_inf = max(1, int(round(cfg.informative_fraction * cfg.n_true_peaks)))
    informative = np.sort(rng.choice(cfg.n_true_peaks, n_inf, replace=False))
    effect = np.zeros(cfg.n_true_peaks)
    for b in np.unique(block[informative]):
        members = informative[block[informative] == b]
        signs = np.where(np.arange(members.size) % 2 == 0, 1.0, -1.0) * rng.choice([-1.0, 1.0])
        effect[members] = cfg.linear_effect_size * signs

    shared = rng.standard_normal((n, block.max() + 1))[:, block]
    own = rng.standard_normal((n, cfg.n_true_peaks))
    latent = np.sqrt(cfg.peak_correlation) * shared + np.sqrt(1 - cfg.peak_correlation) * own
    latent += 0.5 * labels[:, None] * effect[None, :]
    amplitude = np.maximum(heights * (1.0 + cfg.peak_cv * latent), 0.0)

    idx = np.arange(g, dtype=np.float64)
    in_window = (mz >= 1500.0) & (mz <= 20000.0)
    # loading amount: stratified uniform, so raw TIC z-scores stay near or below sqrt(3)
    loading = 0.8 + 0.4 * (rng.permutation(n) + rng.random(n)) / n
    # drift and offset shapes are shared, so loading alone moves the raw TIC
    drift = cfg.baseline_level * np.exp(-(mz - cfg.mz_lo) / 4000.0) + 0.1 * cfg.baseline_level
    spectra = []
    for i in range(n):
        shift = rng.normal(0.0, cfg.mz_jitter) if cfg.mz_jitter > 0 else 0.0
        profile = np.exp(-0.5 * ((idx[:, None] - centers[None, :] - shift) / cfg.peak_width) ** 2) @ amplitude[i]
        profile *= loading[i] * heights.sum() * cfg.peak_width * np.sqrt(2 * np.pi) / profile[in_window].sum()
        noise = rng.normal(0.0, cfg.noise_sd, g) if cfg.noise_sd > 0 else 0.0
        spectra.append(Spectrum(mz, profile + drift + noise, ids[i]))

    panel_X, panel_info = _panel(cfg, labels, rng)
    panel = Dataset(panel_X, labels, [SourceTag.PANEL] * cfg.n_panel_features,
                    [f"panel_{j}" for j in range(cfg.n_panel_features)], ids)
    truth = {
        "config": cfg.to_dict(),
        "peak_indices": centers.tolist(),
        "peak_mz": mz[centers].tolist(),
        "informative_peaks": informative.tolist(),
        "peak_blocks": block.tolist(),
        "peak_effects": effect.tolist(),
        "panel_informative": panel_info,
        "labels": labels.tolist(),
        "amplitudes": amplitude.tolist(),
    }
    return SynthData(spectra, panel, labels, truth)
