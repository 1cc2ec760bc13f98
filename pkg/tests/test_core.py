import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctdistill.core import (
    HU_MAX,
    HU_MIN,
    Geometry,
    InvariantError,
    LabelMap,
    RngStream,
    Sinogram,
    Volume,
    hu_to_mu,
    mu_to_hu,
)
from ctdistill.fileio import HEADER_SIZE, FormatError, import_raw, read_sinogram, read_volume, write_volume


# -- HU <-> attenuation ------------------------------------------------------


@pytest.mark.parametrize("hu, mu", [(-1000.0, 0.0), (0.0, 0.019), (1000.0, 0.038)])
def test_hu_to_mu_reference_points(hu, mu):
    assert hu_to_mu(np.array(hu), 0.019) == pytest.approx(mu, abs=1e-15)


def test_mu_to_hu_reference_points():
    assert mu_to_hu(np.array(0.019), 0.019) == pytest.approx(0.0, abs=1e-12)
    assert mu_to_hu(np.array(0.0), 0.019) == -1000.0


def test_hu_below_air_clamps_to_zero_attenuation():
    assert hu_to_mu(np.array([-1024.0, -1010.0])).tolist() == [0.0, 0.0]


@given(arrays(np.float64, 32, elements=st.floats(-1000.0, 3071.0)))
def test_hu_mu_round_trip(hu):
    np.testing.assert_allclose(mu_to_hu(hu_to_mu(hu)), hu, rtol=0, atol=1e-9)


@given(st.lists(st.floats(-3000.0, 5000.0), min_size=2, max_size=40), st.floats(0.005, 0.05))
def test_hu_to_mu_monotone(values, mu_water):
    hu = np.sort(np.array(values))
    assert np.all(np.diff(hu_to_mu(hu, mu_water)) >= 0)


def test_nonpositive_mu_water_rejected():
    with pytest.raises(InvariantError):
        hu_to_mu(np.zeros(3), 0.0)
    with pytest.raises(InvariantError):
        Geometry(32, mu_water=-1.0)


# -- domain types ----------------------------------------------------------------


def test_volume_clamps_and_is_immutable():
    v = Volume.from_hu(np.array([[-5000.0, 0.0], [100.0, 9000.0]]))
    assert v.dims == (2, 2, 1)
    assert v.data.min() == HU_MIN and v.data.max() == HU_MAX
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1.0


def test_volume_rejects_non_finite():
    with pytest.raises(InvariantError, match="non-finite"):
        Volume(np.array([[[0.0, np.nan]]], dtype=np.float32))


def test_geometry_defaults_cover_diagonal():
    g = Geometry(256)
    assert g.n_bins == 363
    assert g.n_bins * g.bin_spacing >= np.sqrt(2) * 256
    with pytest.raises(InvariantError, match="cover"):
        Geometry(256, n_bins=300)


def test_sinogram_angle_invariants():
    with pytest.raises(InvariantError, match="increasing"):
        Sinogram(np.zeros((2, 4)), [0.5, 0.1])
    with pytest.raises(InvariantError, match=r"\[0, pi\)"):
        Sinogram(np.zeros((1, 4)), [np.pi])


# -- RNG -----------------------------------------------------------------------


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(7).derive("low_dose", 3).generator().random(5)
    b = RngStream(7).derive("low_dose", 3).generator().random(5)
    c = RngStream(7).derive("low_dose", 4).generator().random(5)
    d = RngStream(8).derive("low_dose", 3).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_slices_never_share_a_stream():
    ids = {RngStream(1).derive("conventional", z).stream_id for z in range(2000)}
    assert len(ids) == 2000


# -- CTK1 files ------------------------------------------------------------------


def test_header_is_33_bytes():
    assert HEADER_SIZE == 4 + 4 + 12 + 12 + 1


def test_zero_volume_file_size(tmp_path):
    p = tmp_path / "z.ctk"
    write_volume(Volume(np.zeros((1, 4, 4), np.float32)), p)
    assert p.stat().st_size == HEADER_SIZE + 64


def test_two_by_two_zero_file(tmp_path):
    p = tmp_path / "z.ctk"
    header = struct.pack("<4sI3I3fB", b"CTK1", 1, 2, 2, 1, 1.0, 1.0, 1.0, 0)
    p.write_bytes(header + np.zeros(4, "<f4").tobytes())
    v = read_volume(p)
    assert v.dims == (2, 2, 1)
    assert not v.data.any()


def test_truncated_payload_reports_offset(tmp_path):
    p = tmp_path / "t.ctk"
    header = struct.pack("<4sI3I3fB", b"CTK1", 1, 3, 3, 1, 1.0, 1.0, 1.0, 0)
    p.write_bytes(header + np.zeros(8, "<f4").tobytes())
    with pytest.raises(FormatError, match=f"truncated payload: file ends at byte offset {HEADER_SIZE + 32}"):
        read_volume(p)


def test_bad_magic(tmp_path):
    p = tmp_path / "m.ctk"
    p.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(FormatError, match="bad magic"):
        read_volume(p)


def test_non_finite_payload_reports_offset(tmp_path):
    p = tmp_path / "n.ctk"
    header = struct.pack("<4sI3I3fB", b"CTK1", 1, 2, 2, 1, 1.0, 1.0, 1.0, 0)
    p.write_bytes(header + np.array([0, 0, np.inf, 0], "<f4").tobytes())
    with pytest.raises(FormatError, match=f"byte offset {HEADER_SIZE + 8}"):
        read_volume(p)


@pytest.mark.parametrize("dtype", ["f32", "i16"])
def test_volume_round_trip(tmp_path, rng, dtype):
    hu = rng.uniform(-1024, 3071, size=(3, 5, 7))
    if dtype == "i16":
        hu = np.rint(hu)
    v = Volume.from_hu(hu, (0.5, 0.75, 2.0))
    p = tmp_path / "v.ctk"
    write_volume(v, p, dtype=dtype)
    back = read_volume(p)
    assert back.spacing == v.spacing
    assert back.data.tobytes() == v.data.tobytes()
    write_volume(back, tmp_path / "again.ctk", dtype=dtype)
    assert (tmp_path / "again.ctk").read_bytes() == p.read_bytes()


@pytest.mark.parametrize("top, code", [(200, 2), (4000, 3)])
def test_label_round_trip(tmp_path, rng, top, code):
    lab = LabelMap(rng.integers(0, top, size=(2, 6, 4)).astype(np.uint16))
    p = tmp_path / "l.ctk"
    write_volume(lab, p)
    assert p.read_bytes()[HEADER_SIZE - 1] == code
    back = read_volume(p)
    assert isinstance(back, LabelMap)
    assert np.array_equal(back.data, lab.data)


def test_label_out_of_u8_range(tmp_path):
    lab = LabelMap(np.array([[[0, 300]]], dtype=np.uint16))
    with pytest.raises(InvariantError, match="label exceeds dtype range"):
        write_volume(lab, tmp_path / "l.ctk", dtype="u8")


def test_same_volume_same_sha256(tmp_path, rng):
    v = Volume.from_hu(rng.normal(0, 300, (2, 8, 8)))
    write_volume(v, tmp_path / "a.ctk")
    write_volume(v, tmp_path / "b.ctk")
    digest = [hashlib.sha256((tmp_path / n).read_bytes()).hexdigest() for n in ("a.ctk", "b.ctk")]
    assert digest[0] == digest[1]


def test_sinogram_file_layout(tmp_path):
    g = Geometry(8, n_angles=6)
    s = Sinogram(np.arange(6 * g.n_bins, dtype=float).reshape(6, -1), g.angles, g.bin_spacing)
    p = tmp_path / "s.ctk"
    write_volume(s, p)
    _, _, nx, ny, nz, sx, sy, _, code = struct.unpack_from("<4sI3I3fB", p.read_bytes())
    assert (nx, ny, nz, code) == (g.n_bins, 6, 1, 0)
    back = read_sinogram(p)
    np.testing.assert_array_equal(back.data, s.data)
    np.testing.assert_allclose(back.angles, s.angles, atol=1e-6)


def test_import_raw(tmp_path):
    stored = np.arange(24, dtype=">i2").reshape(2, 3, 4)
    (tmp_path / "scan.raw").write_bytes(stored.tobytes())
    (tmp_path / "scan.json").write_text(json.dumps(
        {"dims": [4, 3, 2], "spacing": [0.7, 0.7, 1.5], "dtype": "int16", "byteorder": "big",
         "slope": 2.0, "intercept": -1024.0}))
    v = import_raw(tmp_path / "scan.raw")
    assert v.dims == (4, 3, 2)
    np.testing.assert_array_equal(v.data, stored.astype(np.float32) * 2 - 1024)
    with pytest.raises(FormatError):
        (tmp_path / "scan.raw").write_bytes(stored.tobytes()[:-2])
        import_raw(tmp_path / "scan.raw")


@settings(max_examples=25, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 3), st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1024, 3071, width=32)))
def test_round_trip_property(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("rt") / "v.ctk"
    v = Volume(data)
    write_volume(v, p)
    assert read_volume(p).data.tobytes() == v.data.tobytes()
