"""CTK1 container for volumes, label maps and sinograms.

Layout, all little-endian::

    0   4s   magic "CTK1"
    4   u32  version (1)
    8   3u32 nx, ny, nz
    20  3f32 sx, sy, sz
    32  u8   dtype: 0 f32 HU, 1 i16 HU, 2 u8 labels, 3 u16 labels
    33  ...  payload, z-major then y then x

Sinograms use nz=1, ny=n_angles, nx=n_bins, dtype f32, with
sx = bin spacing (mm) and sy = angular step (rad); angles are ``i * sy``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import HU_MAX, HU_MIN, InvariantError, LabelMap, Sinogram, Volume

MAGIC = b"CTK1"
VERSION = 1
HEADER = struct.Struct("<4sI3I3fB")
HEADER_SIZE = HEADER.size

DTYPES = {
    0: np.dtype("<f4"),
    1: np.dtype("<i2"),
    2: np.dtype("u1"),
    3: np.dtype("<u2"),
}
DTYPE_CODES = {"f32": 0, "i16": 1, "u8": 2, "u16": 3}


class FormatError(ValueError):
    """Malformed or truncated CTK1 file."""


def _pack(data: np.ndarray, spacing, code: int) -> bytes:
    nz, ny, nx = data.shape
    header = HEADER.pack(MAGIC, VERSION, nx, ny, nz, *map(float, spacing), code)
    return header + np.ascontiguousarray(data, dtype=DTYPES[code]).tobytes()


def _encode(obj, dtype: str | None) -> bytes:
    if isinstance(obj, LabelMap):
        code = DTYPE_CODES[dtype] if dtype else (2 if obj.data.max(initial=0) <= 255 else 3)
        if code not in (2, 3):
            raise InvariantError(f"label maps need a label dtype, got {dtype}")
        limit = np.iinfo(DTYPES[code]).max
        if obj.data.size and int(obj.data.max()) > limit:
            raise InvariantError(f"label exceeds dtype range ({int(obj.data.max())} > {limit})")
        return _pack(obj.data, obj.spacing, code)
    if isinstance(obj, Volume):
        code = DTYPE_CODES[dtype or "f32"]
        if code == 0:
            data = obj.data
        elif code == 1:
            data = np.rint(obj.data)
        else:
            raise InvariantError(f"volumes need an HU dtype, got {dtype}")
        return _pack(data, obj.spacing, code)
    if isinstance(obj, Sinogram):
        step = float(obj.angles[1] - obj.angles[0]) if obj.n_angles > 1 else np.pi
        if not np.allclose(obj.angles, np.arange(obj.n_angles) * step, rtol=0, atol=1e-9):
            raise InvariantError("only uniformly spaced sinograms starting at 0 can be stored")
        data = obj.data.astype(np.float32)[None]
        return _pack(data, (obj.bin_spacing, step, 1.0), 0)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_volume(obj, path, dtype: str | None = None) -> None:
    """Write a Volume, LabelMap or Sinogram. Output bytes depend only on ``obj``."""
    payload = _encode(obj, dtype)
    Path(path).write_bytes(payload)


def _parse(raw: bytes):
    if len(raw) < HEADER_SIZE or raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    _, version, nx, ny, nz, sx, sy, sz, code = HEADER.unpack_from(raw)
    if version != VERSION:
        raise FormatError(f"unsupported CTK1 version {version}")
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    dt = DTYPES[code]
    expected = HEADER_SIZE + nx * ny * nz * dt.itemsize
    if len(raw) != expected:
        kind = "truncated payload" if len(raw) < expected else "trailing bytes"
        raise FormatError(f"{kind}: file ends at byte offset {len(raw)}, expected {expected}")
    data = np.frombuffer(raw, dtype=dt, offset=HEADER_SIZE).reshape(nz, ny, nx)
    if code == 0:
        bad = np.flatnonzero(~np.isfinite(data.ravel()))
        if bad.size:
            offset = HEADER_SIZE + int(bad[0]) * dt.itemsize
            raise FormatError(f"non-finite value at byte offset {offset}")
    return data, (sx, sy, sz), code


def read_volume(path):
    """Parse a CTK1 file into a :class:`Volume` (HU dtypes) or :class:`LabelMap`."""
    data, spacing, code = _parse(Path(path).read_bytes())
    if code in (2, 3):
        return LabelMap(data.astype(DTYPES[code].newbyteorder("=")), spacing)
    values = data.astype(np.float32)
    if values.size and (values.min() < HU_MIN or values.max() > HU_MAX):
        values = np.clip(values, HU_MIN, HU_MAX)
    return Volume(values, spacing)


def read_sinogram(path) -> Sinogram:
    data, (sx, sy, _), code = _parse(Path(path).read_bytes())
    if code != 0 or data.shape[0] != 1:
        raise FormatError("sinogram files must be f32 with nz=1")
    n_angles = data.shape[1]
    return Sinogram(data[0].astype(np.float64), np.arange(n_angles) * float(sy), sx)


def import_raw(raw_path, sidecar_path=None) -> Volume:
    """Import a headerless 16-bit raw volume described by a JSON sidecar.

    The sidecar holds ``dims`` ([nx, ny, nz]), optional ``spacing``,
    ``dtype`` ("int16" or "uint16", default int16), ``byteorder``
    ("little"/"big") and a linear ``slope``/``intercept`` mapping stored
    values to HU.
    """
    raw_path = Path(raw_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else raw_path.with_suffix(".json")
    meta = json.loads(sidecar_path.read_text())
    nx, ny, nz = (int(d) for d in meta["dims"])
    kind = {"int16": "i2", "uint16": "u2"}[meta.get("dtype", "int16")]
    order = "<" if meta.get("byteorder", "little") == "little" else ">"
    dt = np.dtype(order + kind)
    raw = raw_path.read_bytes()
    if len(raw) != nx * ny * nz * 2:
        raise FormatError(f"raw size {len(raw)} does not match dims {nx}x{ny}x{nz} of 16-bit values")
    stored = np.frombuffer(raw, dtype=dt).reshape(nz, ny, nx).astype(np.float64)
    hu = stored * float(meta.get("slope", 1.0)) + float(meta.get("intercept", 0.0))
    return Volume.from_hu(hu, tuple(meta.get("spacing", (1.0, 1.0, 1.0))))
