"""Parallel-beam Radon transform, its matched adjoint, and filtered back-projection.

Image coordinates: pixel (row, col) has centre
``x = (col - (n-1)/2) * ps``, ``y = ((n-1)/2 - row) * ps``. The ray at angle
``theta`` and offset ``t`` is the line ``x cos(theta) + y sin(theta) = t``;
detector bin ``b`` sits at ``t = (b - (n_bins-1)/2) * bin_spacing``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Geometry, InvariantError, Sinogram, Volume, hu_to_mu, mu_to_hu

ANGLE_BLOCK = 32


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class FbpFilter:
    kind: str = "ramlak"
    cutoff: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ramlak", "hann"):
            raise InvariantError(f"unknown filter {self.kind!r}")
        if not 0 < self.cutoff <= 1:
            raise InvariantError(f"cutoff must be in (0, 1], got {self.cutoff}")


def _bins(geom: Geometry) -> np.ndarray:
    return (np.arange(geom.n_bins) - (geom.n_bins - 1) / 2.0) * geom.bin_spacing


@njit(cache=True, nogil=True)
def _forward_kernel(img, angles, first, last, ps, bin_spacing, out):
    n = img.shape[0]
    nb = out.shape[1]
    centre = (n - 1) / 2.0
    bcentre = (nb - 1) / 2.0
    for a in range(first, last):
        c = np.cos(angles[a])
        s = np.sin(angles[a])
        along_rows = abs(c) >= abs(s)
        step = ps / abs(c) if along_rows else ps / abs(s)
        for b in range(nb):
            t = (b - bcentre) * bin_spacing
            acc = 0.0
            for k in range(n):
                if along_rows:
                    u = (t - (centre - k) * ps * s) / (c * ps) + centre
                else:
                    u = centre - (t - (k - centre) * ps * c) / (s * ps)
                i0 = int(np.floor(u))
                w = u - i0
                if along_rows:
                    if 0 <= i0 < n:
                        acc += (1.0 - w) * img[k, i0]
                    if 0 <= i0 + 1 < n:
                        acc += w * img[k, i0 + 1]
                else:
                    if 0 <= i0 < n:
                        acc += (1.0 - w) * img[i0, k]
                    if 0 <= i0 + 1 < n:
                        acc += w * img[i0 + 1, k]
            out[a, b] = acc * step


@njit(cache=True, nogil=True)
def _adjoint_kernel(sino, angles, first, last, ps, bin_spacing, acc):
    """Scatter of :func:`_forward_kernel`; same stencil, transposed."""
    n = acc.shape[0]
    nb = sino.shape[1]
    centre = (n - 1) / 2.0
    bcentre = (nb - 1) / 2.0
    for a in range(first, last):
        c = np.cos(angles[a])
        s = np.sin(angles[a])
        along_rows = abs(c) >= abs(s)
        step = ps / abs(c) if along_rows else ps / abs(s)
        for b in range(nb):
            v = sino[a, b] * step
            if v == 0.0:
                continue
            t = (b - bcentre) * bin_spacing
            for k in range(n):
                if along_rows:
                    u = (t - (centre - k) * ps * s) / (c * ps) + centre
                else:
                    u = centre - (t - (k - centre) * ps * c) / (s * ps)
                i0 = int(np.floor(u))
                w = u - i0
                if along_rows:
                    if 0 <= i0 < n:
                        acc[k, i0] += (1.0 - w) * v
                    if 0 <= i0 + 1 < n:
                        acc[k, i0 + 1] += w * v
                else:
                    if 0 <= i0 < n:
                        acc[i0, k] += (1.0 - w) * v
                    if 0 <= i0 + 1 < n:
                        acc[i0 + 1, k] += w * v


@njit(cache=True, nogil=True)
def _pixel_backproject_kernel(q, angles, first, last, ps, bin_spacing, acc):
    """Pixel-driven back-projection with linear interpolation along the detector."""
    n = acc.shape[0]
    nb = q.shape[1]
    centre = (n - 1) / 2.0
    bcentre = (nb - 1) / 2.0
    for a in range(first, last):
        c = np.cos(angles[a])
        s = np.sin(angles[a])
        for row in range(n):
            y = (centre - row) * ps
            for col in range(n):
                x = (col - centre) * ps
                u = (x * c + y * s) / bin_spacing + bcentre
                i0 = int(np.floor(u))
                w = u - i0
                val = 0.0
                if 0 <= i0 < nb:
                    val += (1.0 - w) * q[a, i0]
                if 0 <= i0 + 1 < nb:
                    val += w * q[a, i0 + 1]
                acc[row, col] += val


def _check_image(img: np.ndarray, geom: Geometry) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if img.shape != (geom.image_n, geom.image_n):
        raise GeometryError(f"image shape {img.shape} does not match geometry image_n={geom.image_n}")
    return img


def _check_sino(s: Sinogram, geom: Geometry):
    if s.n_bins != geom.n_bins:
        raise GeometryError(f"sinogram has {s.n_bins} bins, geometry expects {geom.n_bins}")


def _blocks(n_angles: int):
    return [range(i, min(i + ANGLE_BLOCK, n_angles)) for i in range(0, n_angles, ANGLE_BLOCK)]


def _run(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def radon_forward(img, geom: Geometry, angles=None, workers: int | None = None) -> Sinogram:
    """Line integrals of an attenuation image (mm^-1) by Joseph's method.

    Each ray is marched one pixel row (or column, whichever is closer to
    perpendicular) at a time, linearly interpolating between the two
    nearest pixel centres; values outside the image count as zero.
    """
    img = _check_image(img, geom)
    angles = geom.angles if angles is None else np.asarray(angles, dtype=np.float64)
    out = np.zeros((angles.size, geom.n_bins))

    def project(block):
        _forward_kernel(img, angles, block.start, block.stop, geom.pixel_size, geom.bin_spacing, out)

    _run(project, _blocks(angles.size), workers)
    return Sinogram(out, angles, geom.bin_spacing)


def backproject(s: Sinogram, geom: Geometry, workers: int | None = None) -> np.ndarray:
    """Exact transpose of :func:`radon_forward` for the sinogram's angles."""
    _check_sino(s, geom)
    n = geom.image_n
    data = np.ascontiguousarray(s.data)

    def accumulate(block):
        acc = np.zeros((n, n))
        _adjoint_kernel(data, s.angles, block.start, block.stop, geom.pixel_size, geom.bin_spacing, acc)
        return acc

    img = np.zeros((n, n))
    for part in _run(accumulate, _blocks(s.n_angles), workers):
        img += part
    return img


def ramp_response(n_bins: int, bin_spacing: float, filt: FbpFilter = FbpFilter()):
    """Frequency response of the band-limited ramp, zero-padded length.

    Built from the spatial ramp kernel (1/4 at 0, -1/(pi k)^2 at odd k) so
    the DC term is correct; Hann apodisation and cutoff are applied on top.
    """
    size = max(64, int(2 ** np.ceil(np.log2(2 * n_bins))))
    k = np.concatenate([np.arange(0, size // 2 + 1), np.arange(-(size // 2) + 1, 0)])
    h = np.zeros(size)
    h[0] = 0.25
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd]) ** 2
    H = np.real(np.fft.rfft(h)) / bin_spacing
    f = np.fft.rfftfreq(size)  # cycles per sample, Nyquist 0.5
    fc = 0.5 * filt.cutoff
    window = (f <= fc + 1e-12).astype(float)
    if filt.kind == "hann":
        window *= 0.5 * (1.0 + np.cos(np.pi * f / fc))
    return H * window, size


def filter_sinogram(s: Sinogram, filt: FbpFilter = FbpFilter()) -> np.ndarray:
    H, size = ramp_response(s.n_bins, s.bin_spacing, filt)
    P = np.fft.rfft(s.data, n=size, axis=1)
    return np.fft.irfft(P * H, n=size, axis=1)[:, : s.n_bins]


def fbp_mu(s: Sinogram, geom: Geometry, filt: FbpFilter = FbpFilter(), workers: int | None = None) -> np.ndarray:
    """Filtered back-projection to attenuation (mm^-1), no clamping."""
    if s.n_angles < 2:
        raise GeometryError(f"fbp needs at least 2 angles, got {s.n_angles}")
    _check_sino(s, geom)
    q = np.ascontiguousarray(filter_sinogram(s, filt))
    n = geom.image_n

    def accumulate(block):
        acc = np.zeros((n, n))
        _pixel_backproject_kernel(q, s.angles, block.start, block.stop, geom.pixel_size, geom.bin_spacing, acc)
        return acc

    img = np.zeros((n, n))
    for part in _run(accumulate, _blocks(s.n_angles), workers):
        img += part
    return img * (np.pi / s.n_angles)


def fbp(s: Sinogram, filt: FbpFilter, geom: Geometry, workers: int | None = None) -> Volume:
    """Reconstruct one slice in HU (clamped)."""
    mu = fbp_mu(s, geom, filt, workers)
    ps = geom.pixel_size
    return Volume.from_hu(mu_to_hu(mu, geom.mu_water), (ps, ps, ps))


def sinogram_of(v: Volume, geom: Geometry, z: int = 0, workers: int | None = None) -> Sinogram:
    """Sinogram of slice ``z`` of a HU volume."""
    return radon_forward(hu_to_mu(v.data[z], geom.mu_water), geom, workers=workers)


def reconstruct_volume(sinos, filt: FbpFilter, geom: Geometry, spacing=None) -> Volume:
    """Stack per-slice FBP reconstructions into one volume."""
    slices = [mu_to_hu(fbp_mu(s, geom, filt), geom.mu_water) for s in sinos]
    ps = geom.pixel_size
    return Volume.from_hu(np.stack(slices), spacing or (ps, ps, ps))
