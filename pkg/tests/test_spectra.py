import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _oracles import brute_match, naive_smooth
from biofuse.errors import BatchTooSmall, ConfigInvalid, NoPeaksWarning, SpectrumTooShort, ZeroTIC
from biofuse.spectra import (
    PipelineConfig,
    Spectrum,
    align,
    correct_baseline,
    detect_peaks_array,
    estimate_baseline,
    gaussian_kernel,
    match_peaks,
    normalize_tic,
    preprocess_batch,
    qc_filter,
    smooth_array,
    tic,
    tic_zscores,
    variance_stabilize,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def grid(n, lo=1000.0, step=10.0):
    return lo + step * np.arange(n)


def spec(values, mz=None, sid="s"):
    values = np.asarray(values, dtype=np.float64)
    return Spectrum(grid(values.size) if mz is None else mz, values, sid)


def gauss(n, center, width, height=1.0):
    x = np.arange(n)
    return height * np.exp(-0.5 * ((x - center) / width) ** 2)


# brute-force references

def naive_baseline(v, window):
    half = window // 2
    n = v.size
    floor = np.array([v[max(0, i - half): min(n, i + half + 1)].min() for i in range(n)])
    return np.array([floor[max(0, i - half): min(n, i + half + 1)].mean() for i in range(n)])


# Spectrum and config

def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum([1.0], [1.0])
    with pytest.raises(ValueError):
        Spectrum([1.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        Spectrum([1.0, 2.0, 3.0], [1.0, 2.0])


def test_config_roundtrip_and_validation():
    cfg = PipelineConfig(baseline_window=100, smooth_sigma=2.0)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.window == 101
    with pytest.raises(ConfigInvalid):
        PipelineConfig(smooth_sigma=0)
    with pytest.raises(ConfigInvalid):
        PipelineConfig.from_dict({"bogus": 1})


# variance stabilization

def test_cube_root_examples():
    assert np.array_equal(variance_stabilize(spec([0.0, 8.0, 27.0])).intensity, [0.0, 2.0, 3.0])
    assert np.array_equal(variance_stabilize(spec([-8.0, 1.0])).intensity, [-2.0, 1.0])


@given(arrays(np.float64, st.integers(2, 50), elements=finite))
def test_cube_root_inverts(v):
    r = variance_stabilize(spec(v)).intensity
    assert np.allclose(r**3, v, rtol=1e-12, atol=1e-12)


@given(st.lists(finite, min_size=2, max_size=40, unique=True))
def test_cube_root_strictly_monotone(values):
    v = np.sort(np.array(values))
    r = variance_stabilize(spec(v)).intensity
    assert np.all(np.diff(r) >= 0)
    # strict once the inputs differ by more than rounding can erase
    apart = np.diff(v) > 1e-12 * np.maximum(np.abs(v[:-1]), np.abs(v[1:]))
    assert np.all(np.diff(r)[apart] > 0)


# baseline

def test_baseline_constant_removed():
    s = spec(np.full(500, 7.25))
    out = correct_baseline(s, PipelineConfig())
    assert np.max(np.abs(out.intensity)) <= 1e-12


def test_baseline_preserves_isolated_peak():
    n, w = 2000, 200
    ramp = 0.01 * np.arange(n) + 5
    peak = gauss(n, 1000, 8, 50.0)  # FWHM ~19, well under window / 4
    out = correct_baseline(spec(ramp + peak), PipelineConfig(baseline_window=w)).intensity
    assert abs(out[1000] - peak[1000]) / peak[1000] < 0.05


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(3, 120), elements=st.floats(-1e3, 1e3)), st.integers(1, 60))
def test_baseline_matches_two_pass_oracle(v, half):
    window = 2 * half + 1
    assert np.allclose(estimate_baseline(v, window), naive_baseline(v, window), rtol=0, atol=1e-9)


@settings(max_examples=30)
@given(arrays(np.float64, 300, elements=st.floats(-100, 100)), st.floats(-1e3, 1e3))
def test_baseline_ignores_additive_constant(v, c):
    cfg = PipelineConfig(baseline_window=50)
    a = correct_baseline(spec(v), cfg).intensity
    b = correct_baseline(spec(v + c), cfg).intensity
    assert np.allclose(a, b, atol=1e-9)


def test_baseline_too_short():
    with pytest.raises(SpectrumTooShort):
        correct_baseline(spec(np.ones(50)), PipelineConfig(baseline_window=200))


# smoothing

def test_smooth_impulse_mass_and_symmetry():
    v = np.zeros(101)
    v[50] = 1.0
    out = smooth_array(v, 5.0)
    assert abs(out.sum() - 1.0) < 1e-9
    assert np.allclose(out[50 - 20: 50], out[51: 71][::-1], atol=1e-15)


def test_smooth_constant_including_edges():
    out = smooth_array(np.full(37, 3.5), 5.0)
    assert np.max(np.abs(out - 3.5)) <= 1e-12


@settings(max_examples=40)
@given(arrays(np.float64, st.integers(1, 80), elements=st.floats(-1e3, 1e3)), st.floats(0.3, 8.0))
def test_smooth_matches_direct_convolution(v, sigma):
    assert np.allclose(smooth_array(v, sigma), naive_smooth(v, sigma), rtol=0, atol=1e-10 * max(1.0, np.abs(v).max()))


def test_smooth_semigroup_interior():
    rng = np.random.default_rng(3)
    v = smooth_array(rng.normal(size=600), 3.0) * 10 + gauss(600, 300, 15, 40)
    twice = smooth_array(smooth_array(v, 3.0), 4.0)
    once = smooth_array(v, 5.0)
    inner = slice(60, 540)
    rel = np.abs(twice[inner] - once[inner]).max() / np.abs(once[inner]).max()
    assert rel < 0.02


def test_kernel_truncated_at_four_sigma():
    assert gaussian_kernel(2.5).size == 2 * 10 + 1


# TIC normalization and QC

def test_normalize_tic_example():
    mz = np.array([1000.0, 1600.0, 5000.0, 19000.0, 21000.0])
    s = Spectrum(mz, [100.0, 10.0, 15.0, 25.0, 1000.0])
    cfg = PipelineConfig()
    assert tic(s, cfg) == 50.0
    out = normalize_tic(s, cfg, 1.0)
    assert np.allclose(out.intensity / s.intensity, 0.02, rtol=1e-15)
    assert abs(tic(out, cfg) - 1.0) <= 1e-12


@settings(max_examples=40)
@given(arrays(np.float64, 60, elements=st.floats(0.01, 1e4)), st.floats(0.1, 1e6))
def test_normalize_tic_target_and_idempotent(v, target):
    s = Spectrum(np.linspace(1000, 21000, 60), v)
    cfg = PipelineConfig()
    once = normalize_tic(s, cfg, target)
    assert abs(tic(once, cfg) - target) <= 1e-9 * target
    twice = normalize_tic(once, cfg, target)
    assert np.allclose(twice.intensity, once.intensity, rtol=1e-12, atol=0)


def test_normalize_zero_tic():
    s = Spectrum(np.linspace(1000, 21000, 10), np.zeros(10))
    with pytest.raises(ZeroTIC):
        normalize_tic(s, PipelineConfig())


def test_batch_normalized_to_common_tic():
    rng = np.random.default_rng(0)
    mz = np.linspace(1000, 21000, 300)
    batch = [Spectrum(mz, rng.uniform(1, 10, 300) * k, str(k)) for k in range(1, 6)]
    cfg = PipelineConfig()
    target = np.mean([tic(s, cfg) for s in batch])
    sums = [tic(normalize_tic(s, cfg, target), cfg) for s in batch]
    assert np.ptp(sums) <= 1e-9 * target


def _flat_batch(tics):
    mz = np.linspace(1500, 20000, 10)
    return [Spectrum(mz, np.full(10, t / 10.0), f"s{i}") for i, t in enumerate(tics)]


def test_qc_identical_tics_keep_all():
    kept, excluded = qc_filter(_flat_batch([100.0] * 5), PipelineConfig())
    assert len(kept) == 5 and excluded == []


def test_qc_outlier_excluded():
    batch = _flat_batch([100.0] * 10 + [10000.0])
    # by hand: mean 1000, sample sd = sqrt((10 * 900^2 + 9000^2) / 10) = 300 * sqrt(99)
    z = tic_zscores(batch, PipelineConfig())
    assert z[-1] == pytest.approx(30 / math.sqrt(99), rel=1e-12)
    assert z[-1] == pytest.approx(3.0151, abs=1e-4)
    kept, excluded = qc_filter(batch, PipelineConfig())
    assert [s.sample_id for s in excluded] == ["s10"]


def test_qc_infinite_limit_disables():
    kept, excluded = qc_filter(_flat_batch([100.0] * 10 + [10000.0]), PipelineConfig(qc_sd_limit=math.inf))
    assert excluded == []


def test_qc_needs_two():
    with pytest.raises(BatchTooSmall):
        tic_zscores(_flat_batch([1.0]), PipelineConfig())


# peak detection

def test_detect_ramp_and_triangle():
    assert detect_peaks_array(np.arange(20.0)).size == 0
    tri = np.concatenate([np.arange(8.0), np.arange(6.0, -1, -1)])
    assert detect_peaks_array(tri).tolist() == [7]


def test_detect_two_gaussians():
    y = gauss(400, 120, 6, 5) + gauss(400, 290, 9, 3)
    found = detect_peaks_array(y)
    assert found.size == 2
    assert abs(found[0] - 120) <= 1 and abs(found[1] - 290) <= 1


def test_detect_plateau_center():
    y = np.array([0, 1, 3, 3, 3, 1, 0], dtype=float)
    assert detect_peaks_array(y).tolist() == [3]


# alignment

def test_self_alignment_identity():
    mz = grid(600)
    ref = Spectrum(mz, gauss(600, 100, 4, 5) + gauss(600, 300, 4, 3) + gauss(600, 480, 4, 4))
    al, warped = align(ref, ref, PipelineConfig())
    assert all(i == j for i, j in al.pairs) and len(al.pairs) == 3
    assert np.allclose(al.warp(mz), mz, atol=1e-9)
    assert np.allclose(warped.intensity, ref.intensity, atol=1e-9)


def test_shift_recovered():
    n = 800
    mz = grid(n)
    centers = [150, 320, 500, 650]
    ref_y = sum(gauss(n, c, 4, 3 + i) for i, c in enumerate(centers))
    tgt_y = sum(gauss(n, c + 3, 4, 3 + i) for i, c in enumerate(centers))
    ref, tgt = Spectrum(mz, ref_y), Spectrum(mz, tgt_y)
    al, warped = align(tgt, ref, PipelineConfig(match_bandwidth=50.0))
    assert len(al.pairs) == 4
    offsets = [al.target_peaks[j] - al.reference_peaks[i] for i, j in al.pairs]
    assert offsets == [3, 3, 3, 3]
    # between the outermost matched peaks the warp is a pure shift
    inner = slice(150, 651)
    assert np.abs(warped.intensity[inner] - ref_y[inner]).max() < 1e-9
    assert np.all(np.diff(al.warp(mz)) >= 0)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0, 300), min_size=0, max_size=6, unique=True),
    st.lists(st.floats(0, 300), min_size=0, max_size=6, unique=True),
    st.floats(0, 1.0),
    st.floats(5, 60),
)
def test_match_equals_enumeration(ref, tgt, gap, bw):
    ref, tgt = np.sort(ref), np.sort(tgt)
    cfg = PipelineConfig(gap_penalty=gap, match_bandwidth=bw)
    score, pairs = match_peaks(ref, tgt, cfg)
    assert score == pytest.approx(brute_match(ref, tgt, cfg), abs=1e-12)
    # pairs strictly increasing in both coordinates and consistent with the score
    assert all(a[0] < b[0] and a[1] < b[1] for a, b in zip(pairs, pairs[1:]))
    recomputed = -gap * (ref.size + tgt.size - 2 * len(pairs)) + sum(
        math.exp(-(ref[i] - tgt[j]) ** 2 / (2 * bw**2)) for i, j in pairs)
    assert score == pytest.approx(recomputed, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0, 300), min_size=1, max_size=8, unique=True),
    st.lists(st.floats(0, 300), min_size=1, max_size=8, unique=True),
    st.floats(0, 1.0),
)
def test_match_score_symmetric(ref, tgt, gap):
    ref, tgt = np.sort(ref), np.sort(tgt)
    cfg = PipelineConfig(gap_penalty=gap)
    assert match_peaks(ref, tgt, cfg)[0] == pytest.approx(match_peaks(tgt, ref, cfg)[0], abs=1e-12)


def test_align_without_peaks_warns_and_keeps_grid():
    mz = grid(50)
    ref = Spectrum(mz, np.arange(50.0))
    with pytest.warns(NoPeaksWarning):
        al, warped = align(ref, ref, PipelineConfig())
    assert al.no_peaks and np.array_equal(warped.intensity, ref.intensity)


# full chain

def test_preprocess_batch_end_to_end():
    rng = np.random.default_rng(1)
    n = 1200
    mz = np.linspace(1000, 21000, n)
    batch = []
    for i in range(6):
        y = 30 * np.exp(-np.arange(n) / 400) + gauss(n, 300 + i % 2, 3, 40) + gauss(n, 800, 3, 25)
        batch.append(Spectrum(mz, y + rng.normal(0, 0.1, n) + 5, f"s{i}"))
    cfg = PipelineConfig(smooth_sigma=1.5, match_bandwidth=30.0)
    res = preprocess_batch(batch, cfg)
    assert res.excluded == [] and len(res.spectra) == 6
    sums = [tic(s, cfg) for s in res.spectra]
    assert all(np.array_equal(s.mz, mz) for s in res.spectra)
    assert np.ptp(sums) / np.mean(sums) < 0.05  # warping moves a little mass
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        again = preprocess_batch(batch, cfg)
    assert all(np.array_equal(a.intensity, b.intensity) for a, b in zip(res.spectra, again.spectra))
