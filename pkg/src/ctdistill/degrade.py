"""Sparse-view, low-dose, conventional and mixed degradation of HU volumes.

Every random draw comes from an :class:`~ctdistill.core.RngStream`
derived per (operation, slice), so outputs are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Geometry, InvariantError, Sinogram, Volume, as_rng, clamp_hu, mu_to_hu
from .projector import FbpFilter, fbp_mu, sinogram_of

KINDS = ("sparse_view", "low_dose", "conventional", "mixed")
HU_SHIFT = 1024.0


@dataclass(frozen=True)
class DegradeSpec:
    kind: str = "sparse_view"
    k: int = 8
    alpha: float = 500.0
    mode: str = "paper"
    i0: float = 1e5
    scale: int = 2
    sigma_gauss: float = 20.0
    photon_scale: float = 4.0
    mixed: tuple = ()
    mixed_mode: str = "random"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvariantError(f"unknown degradation {self.kind!r}")
        if self.k < 1:
            raise InvariantError(f"sparse-view stride must be >= 1, got {self.k}")
        if self.alpha <= 0:
            raise InvariantError(f"alpha must be > 0, got {self.alpha}")
        if self.mode not in ("paper", "transmission"):
            raise InvariantError(f"low-dose mode must be 'paper' or 'transmission', got {self.mode!r}")
        if self.mode == "transmission" and self.i0 < 10:
            raise InvariantError(f"i0 must be >= 10 photons, got {self.i0}")
        if self.scale not in (2, 3, 4):
            raise InvariantError(f"conventional scale must be 2, 3 or 4, got {self.scale}")
        if self.sigma_gauss < 0 or self.photon_scale <= 0:
            raise InvariantError("sigma_gauss must be >= 0 and photon_scale > 0")
        if self.mixed_mode not in ("random", "sequential"):
            raise InvariantError(f"mixed_mode must be 'random' or 'sequential', got {self.mixed_mode!r}")
        mixed = tuple(m if isinstance(m, DegradeSpec) else DegradeSpec(**m) for m in self.mixed)
        if self.kind == "mixed":
            if not mixed:
                mixed = default_mixture()
            if any(m.kind == "mixed" for m in mixed):
                raise InvariantError("mixed degradations cannot nest")
        object.__setattr__(self, "mixed", mixed)


def default_mixture() -> tuple:
    return (DegradeSpec("sparse_view"), DegradeSpec("low_dose"), DegradeSpec("conventional"))


def clean_sinograms(x: Volume, geom: Geometry) -> list:
    return [sinogram_of(x, geom, z) for z in range(x.nslices)]


def _reconstruct(sinos, geom, filt, like: Volume) -> Volume:
    slices = [mu_to_hu(fbp_mu(s, geom, filt), geom.mu_water) for s in sinos]
    return Volume.from_hu(np.stack(slices), like.spacing)


def _geom(x: Volume, geom: Geometry | None) -> Geometry:
    return Geometry.for_volume(x) if geom is None else geom


def degrade_sparse_view(x: Volume, k: int, geom=None, filt=FbpFilter(), sinos=None) -> Volume:
    """Keep every ``k``-th projection angle, then reconstruct."""
    geom = _geom(x, geom)
    if k < 1:
        raise InvariantError(f"stride must be >= 1, got {k}")
    kept = len(range(0, geom.n_angles, k))
    if kept < 2:
        raise InvariantError(f"stride {k} leaves {kept} of {geom.n_angles} angles; need at least 2")
    sinos = clean_sinograms(x, geom) if sinos is None else sinos
    return _reconstruct([s.subset(slice(0, None, k)) for s in sinos], geom, filt, x)


def low_dose_sinogram(p: Sinogram, spec: DegradeSpec, gen: np.random.Generator) -> Sinogram:
    """Poisson resampling of one sinogram.

    ``paper`` mode draws Poisson(alpha * p) and divides by alpha so the
    expectation stays p. ``transmission`` mode draws detected counts
    Poisson(i0 * exp(-p)) and takes the log, with zero counts read as 0.5.
    """
    data = np.asarray(p.data)
    if spec.mode == "paper":
        lam = spec.alpha * np.maximum(data, 0.0)
        noisy = gen.poisson(lam) / spec.alpha
    else:
        counts = gen.poisson(spec.i0 * np.exp(-data))
        noisy = -np.log(np.maximum(counts, 0.5) / spec.i0)
    return Sinogram(noisy, p.angles, p.bin_spacing)


def degrade_low_dose(x: Volume, spec: DegradeSpec, geom=None, filt=FbpFilter(), rng=None, sinos=None) -> Volume:
    geom = _geom(x, geom)
    rng = as_rng(rng)
    sinos = clean_sinograms(x, geom) if sinos is None else sinos
    noisy = [low_dose_sinogram(s, spec, rng.derive("low_dose", z).generator()) for z, s in enumerate(sinos)]
    return _reconstruct(noisy, geom, filt, x)


def downsample_area(img: np.ndarray, s: int) -> np.ndarray:
    """Block-average by ``s``; edges are padded by replication."""
    ny, nx = img.shape
    py, px = -ny % s, -nx % s
    if py or px:
        img = np.pad(img, ((0, py), (0, px)), mode="edge")
    h, w = img.shape
    return img.reshape(h // s, s, w // s, s).mean(axis=(1, 3))


def upsample_bilinear(img: np.ndarray, s: int, shape) -> np.ndarray:
    """Bilinear interpolation back to ``shape``; the inverse grid of :func:`downsample_area`."""
    ry = (np.arange(shape[0]) + 0.5) / s - 0.5
    rx = (np.arange(shape[1]) + 0.5) / s - 0.5
    coords = np.meshgrid(ry, rx, indexing="ij")
    return ndimage.map_coordinates(img, coords, order=1, mode="nearest")


def conventional_lowres(img: np.ndarray, spec: DegradeSpec, gen: np.random.Generator) -> np.ndarray:
    """Downsampled slice with Gaussian then signal-dependent Poisson noise (HU)."""
    low = downsample_area(np.asarray(img, dtype=np.float64), spec.scale)
    if spec.sigma_gauss > 0:
        low = low + gen.normal(0.0, spec.sigma_gauss, low.shape)
    lam = np.maximum(low + HU_SHIFT, 0.0) * spec.photon_scale
    return gen.poisson(lam) / spec.photon_scale - HU_SHIFT


def degrade_conventional(x: Volume, spec: DegradeSpec, rng=None) -> Volume:
    rng = as_rng(rng)
    out = []
    for z, img in enumerate(x.slices()):
        low = conventional_lowres(img, spec, rng.derive("conventional", z).generator())
        out.append(upsample_bilinear(low, spec.scale, img.shape))
    return Volume.from_hu(clamp_hu(np.stack(out)), x.spacing)


def choose_mixture(spec: DegradeSpec, rng) -> DegradeSpec:
    """The component a random-mode mixture applies for this case."""
    i = int(as_rng(rng).derive("mixed_choice").generator().integers(len(spec.mixed)))
    return spec.mixed[i]


def degrade_mixed(x: Volume, spec: DegradeSpec, geom=None, filt=FbpFilter(), rng=None, sinos=None) -> Volume:
    """Sequential composition, or one component drawn uniformly per case."""
    rng = as_rng(rng)
    if not spec.mixed:
        raise InvariantError("mixed degradation needs at least one component")
    if spec.mixed_mode == "random":
        return degrade(x, choose_mixture(spec, rng), geom, filt, rng.derive("mixed", 0), sinos)
    for i, part in enumerate(spec.mixed):
        x = degrade(x, part, geom, filt, rng.derive("mixed", i), sinos if i == 0 else None)
    return x


def degrade(x: Volume, spec: DegradeSpec, geom=None, filt=FbpFilter(), rng=None, sinos=None) -> Volume:
    """Apply ``spec`` to ``x``. ``sinos`` may carry precomputed clean sinograms of ``x``."""
    if spec.kind == "sparse_view":
        return degrade_sparse_view(x, spec.k, geom, filt, sinos)
    if spec.kind == "low_dose":
        return degrade_low_dose(x, spec, geom, filt, rng, sinos)
    if spec.kind == "conventional":
        return degrade_conventional(x, spec, rng)
    return degrade_mixed(x, spec, geom, filt, rng, sinos)


def measured_sinograms(x: Volume, spec: DegradeSpec, geom=None, rng=None, sinos=None):
    """The projection data a Radon-domain degradation reconstructed from.

    Uses the same random streams as :func:`degrade`, so the returned
    sinograms are exactly the ones behind its output. Image-domain and
    sequential-mixture degradations return ``None``.
    """
    rng = as_rng(rng)
    if spec.kind == "mixed":
        if spec.mixed_mode == "sequential":
            return None
        return measured_sinograms(x, choose_mixture(spec, rng), geom, rng.derive("mixed", 0), sinos)
    if spec.kind == "conventional":
        return None
    geom = _geom(x, geom)
    sinos = clean_sinograms(x, geom) if sinos is None else sinos
    if spec.kind == "sparse_view":
        return [s.subset(slice(0, None, spec.k)) for s in sinos]
    return [low_dose_sinogram(s, spec, rng.derive("low_dose", z).generator()) for z, s in enumerate(sinos)]
