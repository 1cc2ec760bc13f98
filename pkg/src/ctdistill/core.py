"""Domain types, HU/attenuation conversion and seeded random streams."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

HU_MIN = -1024.0
HU_MAX = 3071.0
HU_RANGE = HU_MAX - HU_MIN
MU_WATER = 0.019  # mm^-1, roughly 70 keV


class InvariantError(ValueError):
    """A domain object was built from data that violates its invariants."""


def clamp_hu(values):
    return np.clip(values, HU_MIN, HU_MAX)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Volume:
    """HU voxel data of shape (nz, ny, nx) with spacing (sx, sy, sz) in mm.

    Values are stored as float32. Use :meth:`from_hu` to build one from
    arbitrary arrays; it clamps to the 12-bit CT range.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise InvariantError(f"volume data must be 3-D (nz, ny, nx), got shape {data.shape}")
        if min(data.shape) < 1:
            raise InvariantError(f"volume dims must be positive, got {data.shape}")
        if data.dtype != np.float32:
            data = data.astype(np.float32)
        bad = np.flatnonzero(~np.isfinite(data.ravel()))
        if bad.size:
            raise InvariantError(f"non-finite voxel at flat index {bad[0]}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise InvariantError(f"spacing must be three positive values, got {self.spacing}")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def from_hu(cls, values, spacing=(1.0, 1.0, 1.0)) -> "Volume":
        a = np.asarray(values, dtype=np.float64)
        if a.ndim == 2:
            a = a[None]
        return cls(clamp_hu(a).astype(np.float32), spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    @property
    def nslices(self) -> int:
        return self.data.shape[0]

    def slices(self):
        return iter(self.data)

    def replace(self, data) -> "Volume":
        """Same spacing, new (clamped) HU data."""
        return Volume.from_hu(data, self.spacing)


@dataclass(frozen=True)
class LabelMap:
    """Integer region IDs aligned with a :class:`Volume`; 0 is background."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise InvariantError(f"label data must be 3-D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise InvariantError(f"labels must be integers, got {data.dtype}")
        if data.size and data.min() < 0:
            raise InvariantError("labels must be non-negative")
        if data.dtype not in (np.uint8, np.uint16):
            if data.size and data.max() > np.iinfo(np.uint16).max:
                raise InvariantError("label exceeds dtype range")
            data = data.astype(np.uint16)
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    def ids(self) -> list[int]:
        return [int(i) for i in np.unique(self.data)]


@dataclass(frozen=True)
class Geometry:
    """Parallel-beam acquisition of a square ``image_n`` slice.

    Angles are ``i * pi / n_angles``; detector bins are centred on the
    rotation axis with ``bin_spacing`` mm pitch.
    """

    image_n: int
    pixel_size: float = 1.0
    n_angles: int = 720
    n_bins: int | None = None
    bin_spacing: float | None = None
    mu_water: float = MU_WATER

    def __post_init__(self):
        if self.image_n < 1 or self.n_angles < 1:
            raise InvariantError("image_n and n_angles must be positive")
        if self.pixel_size <= 0:
            raise InvariantError("pixel_size must be positive")
        if self.mu_water <= 0:
            raise InvariantError("mu_water must be positive")
        if self.bin_spacing is None:
            object.__setattr__(self, "bin_spacing", float(self.pixel_size))
        if self.n_bins is None:
            object.__setattr__(self, "n_bins", math.ceil(math.sqrt(2) * self.image_n))
        diag = math.sqrt(2) * self.image_n * self.pixel_size
        if self.n_bins * self.bin_spacing < diag - 1e-9:
            raise InvariantError(
                f"detector ({self.n_bins} x {self.bin_spacing} mm) does not cover image diagonal {diag:.2f} mm"
            )

    @classmethod
    def for_volume(cls, v: Volume, **kw) -> "Geometry":
        nx, ny, _ = v.dims
        if nx != ny:
            raise InvariantError(f"slices must be square, got {nx}x{ny}")
        return cls(image_n=nx, pixel_size=v.spacing[0], **kw)

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    def with_angles(self, n_angles: int) -> "Geometry":
        return Geometry(self.image_n, self.pixel_size, n_angles, self.n_bins, self.bin_spacing, self.mu_water)


@dataclass(frozen=True)
class Sinogram:
    """Line integrals of attenuation, shape (n_angles, n_bins)."""

    data: np.ndarray
    angles: np.ndarray
    bin_spacing: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        angles = np.asarray(self.angles, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != angles.size:
            raise InvariantError(f"sinogram shape {data.shape} does not match {angles.size} angles")
        if angles.size and (angles.min() < 0 or angles.max() >= np.pi):
            raise InvariantError("angles must lie in [0, pi)")
        if np.any(np.diff(angles) <= 0):
            raise InvariantError("angles must be strictly increasing")
        if not np.all(np.isfinite(data)):
            raise InvariantError("sinogram contains non-finite values")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "angles", _readonly(angles))
        object.__setattr__(self, "bin_spacing", float(self.bin_spacing))

    @property
    def n_angles(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    def subset(self, rows) -> "Sinogram":
        return Sinogram(self.data[rows], self.angles[rows], self.bin_spacing)


def hu_to_mu(hu, mu_water: float = MU_WATER) -> np.ndarray:
    """Linear attenuation (mm^-1) from HU; negative results clamp to 0."""
    if mu_water <= 0:
        raise InvariantError("mu_water must be positive")
    hu = np.asarray(hu.data if isinstance(hu, Volume) else hu, dtype=np.float64)
    return np.maximum(mu_water * (1.0 + hu / 1000.0), 0.0)


def mu_to_hu(mu, mu_water: float = MU_WATER) -> np.ndarray:
    if mu_water <= 0:
        raise InvariantError("mu_water must be positive")
    return clamp_hu(1000.0 * (np.asarray(mu, dtype=np.float64) / mu_water - 1.0))


def _digest64(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Seeded Philox stream.

    Philox is counter based, so a stream is fully described by its 128-bit
    key; the key is ``(seed, stream_id)``. ``stream_id`` is a 64-bit digest
    of the operation tag and indices, see :meth:`derive`.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & (2**64 - 1))
        object.__setattr__(self, "stream_id", int(self.stream_id) & (2**64 - 1))

    def derive(self, tag: str, *index) -> "RngStream":
        return RngStream(self.seed, _digest64(self.stream_id, tag, *index))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream_id]))


def as_rng(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else int(rng))


@dataclass(frozen=True)
class RegionStats:
    region_id: int
    voxel_count: int
    mean_hu: float
    std_hu: float = field(default=0.0)
