import numpy as np
import pytest

from ctdistill import Geometry, RngStream, Volume, fbp, sinogram_of
from ctdistill.core import InvariantError, Sinogram
from ctdistill.degrade import (
    DegradeSpec,
    choose_mixture,
    conventional_lowres,
    degrade,
    degrade_conventional,
    degrade_low_dose,
    degrade_mixed,
    degrade_sparse_view,
    downsample_area,
    low_dose_sinogram,
    measured_sinograms,
    upsample_bilinear,
)
from ctdistill.metrics import psnr, ssim
from ctdistill.projector import FbpFilter


@pytest.fixture(scope="module")
def full_view(lung256, lung256_sino):
    vol, _ = lung256
    geom, sinos = lung256_sino
    return degrade_sparse_view(vol, 1, geom, sinos=sinos)


# -- sparse view -------------------------------------------------------------------


def test_stride_one_is_full_view_fbp(lung256, lung256_sino, full_view):
    vol, _ = lung256
    geom, sinos = lung256_sino
    assert full_view.data.tobytes() == fbp(sinos[0], FbpFilter(), geom).data.tobytes()


def test_stride_eight_loses_three_db_on_lung(lung256, lung256_sino, full_view):
    vol, _ = lung256
    geom, sinos = lung256_sino
    sparse = degrade_sparse_view(vol, 8, geom, sinos=sinos)
    assert psnr(full_view, vol) - psnr(sparse, vol) >= 3.0


@pytest.mark.xfail(strict=True, reason="Shepp-Logan full view is edge-limited (32.7 dB); k=8 costs ~2.1 dB, "
                                        "see notes on the sparse-view gap")
def test_stride_eight_loses_three_db_on_shepp_logan(sl256, sl256_sino):
    geom, s = sl256_sino
    full = degrade_sparse_view(sl256, 1, geom, sinos=[s])
    sparse = degrade_sparse_view(sl256, 8, geom, sinos=[s])
    assert psnr(full, sl256) - psnr(sparse, sl256) >= 3.0


def test_subsampling_equals_direct_acquisition(lung256, lung256_sino):
    vol, _ = lung256
    geom, sinos = lung256_sino
    sparse = degrade_sparse_view(vol, 8, geom, sinos=sinos)
    g90 = Geometry.for_volume(vol, n_angles=90)
    direct = fbp(sinogram_of(vol, g90), FbpFilter(), g90)
    assert np.abs(sparse.data - direct.data).max() <= 1e-5


def test_psnr_grows_with_retained_angles(lung256, lung256_sino):
    vol, _ = lung256
    geom, sinos = lung256_sino
    scores = [psnr(degrade_sparse_view(vol, k, geom, sinos=sinos), vol) for k in (16, 8, 4)]
    assert scores[0] <= scores[1] <= scores[2]


def test_too_few_angles():
    v = Volume.from_hu(np.zeros((32, 32)))
    with pytest.raises(InvariantError, match="at least 2"):
        degrade_sparse_view(v, 20, Geometry(32, n_angles=20))


# -- low dose ---------------------------------------------------------------------


def test_huge_alpha_is_noise_free(lung256, lung256_sino, full_view):
    vol, _ = lung256
    geom, sinos = lung256_sino
    out = degrade_low_dose(vol, DegradeSpec("low_dose", alpha=1e9), geom, rng=RngStream(3), sinos=sinos)
    assert psnr(out, full_view) >= 60.0


def test_single_bin_sample_mean():
    p = Sinogram(np.full((1, 1), 2.0), [0.0])
    spec = DegradeSpec("low_dose", alpha=50)
    gen = RngStream(9).generator()
    draws = np.array([low_dose_sinogram(p, spec, gen).data[0, 0] for _ in range(1000)])
    sigma = np.sqrt(2.0 / 50)
    assert abs(draws.mean() - 2.0) <= 3 * sigma / np.sqrt(1000)
    assert draws.std() == pytest.approx(sigma, rel=0.1)


@pytest.mark.parametrize("mode", ["paper", "transmission"])
def test_expectation_preserved_per_bin(lung256_sino, mode):
    geom, sinos = lung256_sino
    row = sinos[0].subset(slice(100, 101))
    # transmission mode: -log of Poisson counts is biased by about e^p / (2 i0); at the
    # default i0 = 1e5 that stays well under one standard error for this phantom
    spec = DegradeSpec("low_dose", alpha=50, mode=mode, i0=1e5)
    draws = np.stack([low_dose_sinogram(row, spec, RngStream(s).derive("low_dose", 0).generator()).data[0]
                      for s in range(500)])
    p = row.data[0]
    if mode == "paper":
        var = p / 50  # Poisson(alpha p) / alpha
    else:
        var = np.exp(p) / 1e5  # delta method for -log(Poisson(i0 e^-p) / i0)
    se = np.sqrt(var / 500)
    nonzero = p > 0
    assert np.all(np.abs(draws.mean(0) - p)[nonzero] <= 3 * se[nonzero])
    if mode == "paper":
        assert not draws[:, ~nonzero].any()


def test_psnr_grows_with_dose(lung256, lung256_sino):
    vol, _ = lung256
    geom, sinos = lung256_sino
    scores = [psnr(degrade_low_dose(vol, DegradeSpec("low_dose", alpha=a), geom, rng=RngStream(3), sinos=sinos), vol)
              for a in (20, 200, 2000)]
    assert scores[0] < scores[1] < scores[2]


def test_transmission_guard_handles_zero_counts():
    p = Sinogram(np.full((1, 4), 30.0), [0.0])  # e^-30 * 10 photons: essentially always 0 counts
    out = low_dose_sinogram(p, DegradeSpec("low_dose", mode="transmission", i0=10), RngStream(0).generator())
    np.testing.assert_allclose(out.data, -np.log(0.5 / 10))


def test_invalid_dose_parameters():
    with pytest.raises(InvariantError):
        DegradeSpec("low_dose", alpha=0)
    with pytest.raises(InvariantError):
        DegradeSpec("low_dose", mode="transmission", i0=5)


# -- conventional -------------------------------------------------------------------


def test_constant_is_a_fixed_point():
    v = Volume.from_hu(np.full((1, 64, 64), -300.0))
    out = degrade_conventional(v, DegradeSpec("conventional", sigma_gauss=0, photon_scale=1e9), RngStream(1))
    np.testing.assert_allclose(out.data, v.data, atol=0.01)


def test_downsample_then_upsample_keeps_constants():
    img = np.full((30, 30), 12.5)
    for s in (2, 3, 4):
        np.testing.assert_allclose(upsample_bilinear(downsample_area(img, s), s, img.shape), 12.5)


def test_area_downsample_is_block_mean():
    img = np.arange(16, dtype=float).reshape(4, 4)
    np.testing.assert_array_equal(downsample_area(img, 2), [[2.5, 4.5], [10.5, 12.5]])


def test_gaussian_sigma_on_acquisition_grid():
    img = np.full((256, 256), -850.0)
    spec = DegradeSpec("conventional", sigma_gauss=20.0, photon_scale=1e9)
    low = conventional_lowres(img, spec, RngStream(4).generator())
    assert low.std() == pytest.approx(20.0, rel=0.10)


def test_gaussian_sigma_after_bilinear_upsampling():
    # bilinear interpolation at offsets 1/4, 3/4 averages independent samples with
    # weights (3/4, 1/4) per axis: std gain (9/16 + 1/16) = 0.625 for s = 2
    v = Volume.from_hu(np.full((1, 256, 256), -850.0))
    out = degrade_conventional(v, DegradeSpec("conventional", sigma_gauss=20.0, photon_scale=1e9), RngStream(4))
    interior = out.data[0, 4:-4, 4:-4]
    assert interior.std() == pytest.approx(0.625 * 20.0, rel=0.10)


def test_conventional_strictly_degrades(lung256):
    vol, _ = lung256
    out = degrade_conventional(vol, DegradeSpec("conventional"), RngStream(2))
    assert psnr(out, vol) < 99.0
    assert ssim(out, vol) < 1.0


# -- mixed ----------------------------------------------------------------------


def test_singleton_mixture_is_its_component(lung256, lung256_sino):
    vol, _ = lung256
    geom, sinos = lung256_sino
    spec = DegradeSpec("mixed", mixed=(DegradeSpec("sparse_view", k=8),), mixed_mode="sequential")
    out = degrade_mixed(vol, spec, geom, rng=RngStream(1), sinos=sinos)
    assert out.data.tobytes() == degrade_sparse_view(vol, 8, geom, sinos=sinos).data.tobytes()


@pytest.mark.xfail(strict=True, reason="area-average + bilinear upsampling of the conventional step smooths "
                                        "the low-dose noise, so the composition beats low dose alone")
def test_sequential_mixture_is_worse_than_each_part(lung256, lung256_sino):
    vol, _ = lung256
    geom, sinos = lung256_sino
    parts = (DegradeSpec("low_dose", alpha=50), DegradeSpec("conventional", scale=2))
    both = degrade(vol, DegradeSpec("mixed", mixed=parts, mixed_mode="sequential"), geom, rng=RngStream(5),
                   sinos=sinos)
    alone = [psnr(degrade(vol, p, geom, rng=RngStream(5), sinos=sinos), vol) for p in parts]
    assert psnr(both, vol) <= min(alone)


def test_sequential_mixture_is_worse_than_its_last_part(lung256, lung256_sino):
    vol, _ = lung256
    geom, sinos = lung256_sino
    parts = (DegradeSpec("low_dose", alpha=50), DegradeSpec("conventional", scale=2))
    both = degrade(vol, DegradeSpec("mixed", mixed=parts, mixed_mode="sequential"), geom, rng=RngStream(5),
                   sinos=sinos)
    conventional_only = degrade(vol, parts[1], geom, rng=RngStream(5), sinos=sinos)
    assert psnr(both, vol) < psnr(conventional_only, vol)


def test_random_mixture_choice_reproducible():
    spec = DegradeSpec("mixed")
    picks = [choose_mixture(spec, RngStream(42).derive("case", i)).kind for i in range(30)]
    again = [choose_mixture(spec, RngStream(42).derive("case", i)).kind for i in range(30)]
    assert picks == again
    assert set(picks) == {"sparse_view", "low_dose", "conventional"}


def test_mixtures_cannot_nest():
    with pytest.raises(InvariantError):
        DegradeSpec("mixed", mixed=(DegradeSpec("mixed"),))


# -- shared properties ----------------------------------------------------------


ALL_SPECS = [
    DegradeSpec("sparse_view", k=8),
    DegradeSpec("low_dose", alpha=500),
    DegradeSpec("low_dose", mode="transmission", i0=1e5),
    DegradeSpec("conventional"),
    DegradeSpec("mixed"),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind}-{s.mode}")
def test_every_degradation_reduces_ssim(lung256, lung256_sino, spec):
    vol, _ = lung256
    geom, sinos = lung256_sino
    out = degrade(vol, spec, geom, rng=RngStream(8), sinos=sinos)
    assert ssim(out, vol) < 1 - 1e-4
    assert np.all(np.isfinite(out.data))


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind}-{s.mode}")
def test_same_seed_same_bytes(lung256, lung256_sino, spec):
    vol, _ = lung256
    geom, sinos = lung256_sino
    a = degrade(vol, spec, geom, rng=RngStream(8), sinos=sinos)
    b = degrade(vol, spec, geom, rng=RngStream(8))  # sinograms recomputed from scratch
    assert a.data.tobytes() == b.data.tobytes()


def test_measured_sinograms_match_degradation(lung256, lung256_sino):
    vol, _ = lung256
    geom, sinos = lung256_sino
    spec = DegradeSpec("low_dose", alpha=300)
    measured = measured_sinograms(vol, spec, geom, RngStream(6), sinos)
    direct = degrade(vol, spec, geom, rng=RngStream(6), sinos=sinos)
    assert fbp(measured[0], FbpFilter(), geom).data.tobytes() == direct.data.tobytes()
    assert measured_sinograms(vol, DegradeSpec("conventional"), geom, RngStream(6), sinos) is None
