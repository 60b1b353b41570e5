import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vivid import io
from vivid.rom import fit_pod
from vivid.shallow_water import SnapshotSet, SweParams

finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_field_roundtrip(tmp_path_factory, field):
    path = tmp_path_factory.mktemp("f") / "x.fld"
    io.write_field(path, field)
    back = io.read_field(path)
    assert back.shape == field.shape and np.array_equal(back, field)


def test_field_layout(tmp_path):
    f = np.arange(6.0).reshape(2, 3)
    io.write_field(tmp_path / "x.fld", f)
    buf = (tmp_path / "x.fld").read_bytes()
    assert buf[:4] == b"FLD1"
    assert struct.unpack_from("<II", buf, 4) == (2, 3)
    assert np.array_equal(np.frombuffer(buf[12:], "<f8"), np.arange(6.0))
    assert len(buf) == 12 + 6 * 8


def test_field_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        io.write_field(tmp_path / "x.fld", np.zeros(3))
    (tmp_path / "bad.fld").write_bytes(b"FLD2" + bytes(8))
    with pytest.raises(io.FormatError):
        io.read_field(tmp_path / "bad.fld")
    io.write_field(tmp_path / "ok.fld", np.ones((3, 3)))
    (tmp_path / "short.fld").write_bytes((tmp_path / "ok.fld").read_bytes()[:-1])
    with pytest.raises(io.FormatError):
        io.read_field(tmp_path / "short.fld")


def test_read_field_requires_single_record(tmp_path):
    (tmp_path / "two.fld").write_bytes(io.field_bytes(np.ones((2, 2))) * 2)
    with pytest.raises(io.FormatError):
        io.read_field(tmp_path / "two.fld")
    assert len(io.read_fields(tmp_path / "two.fld")) == 2


def test_snapshot_roundtrip(tmp_path, rng):
    params = SweParams(h_p=0.2, r_w=5.0, grid=(4, 5))
    snaps = SnapshotSet(params, np.array([25, 50, 75]), rng.standard_normal((3, 4, 5)))
    io.write_snapshots(tmp_path / "s.fld", snaps)
    back = io.read_snapshots(tmp_path / "s.fld")
    assert back.params == params
    assert np.array_equal(back.times, snaps.times)
    assert np.array_equal(back.fields, snaps.fields)
    meta = json.loads((tmp_path / "s.json").read_text())
    assert meta["times"] == [25, 50, 75]


def test_container_roundtrip_and_checks(tmp_path, rng):
    t = [rng.standard_normal((2, 3)), rng.standard_normal(4)]
    io.write_container(tmp_path / "c.bin", b"TEST", [7, 8], t)
    header, payload = io.read_container(tmp_path / "c.bin", b"TEST")
    assert header == [7, 8]
    assert np.array_equal(payload, np.concatenate([x.ravel() for x in t]))
    with pytest.raises(io.FormatError):
        io.read_container(tmp_path / "c.bin", b"NOPE")
    with pytest.raises(ValueError):
        io.write_container(tmp_path / "c.bin", b"TOOLONG", [], [])
    buf = bytearray((tmp_path / "c.bin").read_bytes())
    buf[4:8] = struct.pack("<I", 99)
    (tmp_path / "v.bin").write_bytes(bytes(buf))
    with pytest.raises(io.FormatError, match="version"):
        io.read_container(tmp_path / "v.bin", b"TEST")


def test_pod_roundtrip(tmp_path, rng):
    basis = fit_pod(rng.standard_normal((30, 12)), 5)
    io.save_pod(tmp_path / "p.bin", basis)
    back = io.load_pod(tmp_path / "p.bin")
    assert np.array_equal(back.modes, basis.modes)
    assert np.array_equal(back.singular_values, basis.singular_values)
    assert back.n_state == basis.n_state
