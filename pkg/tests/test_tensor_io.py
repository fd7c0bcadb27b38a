import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attncut import tensor_io


def test_smallest_tensor_layout(tmp_path):
    # 4 magic + 4 version + 1 dtype + 1 ndim + 8 dims + 4 payload = 22 bytes
    path = tmp_path / "t.atnt"
    tensor_io.write_tensor(np.array([0.0], dtype=np.float32), path)
    data = path.read_bytes()
    assert len(data) == 22
    assert data[:4] == b"ATNT"
    assert struct.unpack_from("<I", data, 4)[0] == 1
    assert data[8] == 0  # dtype f32le
    assert data[9] == 1  # ndim
    assert struct.unpack_from("<Q", data, 10)[0] == 1
    assert data[18:] == b"\x00\x00\x00\x00"


def test_round_trip_identity(tmp_path):
    t = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7.0
    path = tmp_path / "t.atnt"
    tensor_io.write_tensor(t, path)
    back = tensor_io.read_tensor(path)
    assert back.shape == t.shape
    assert np.array_equal(back, t)


def test_write_is_deterministic(tmp_path):
    t = np.linspace(-1, 1, 30).reshape(5, 6)
    tensor_io.write_tensor(t, tmp_path / "a")
    tensor_io.write_tensor(t, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "t"
    tensor_io.write_tensor(np.zeros(3), path)
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(tensor_io.BadMagicError):
        tensor_io.read_tensor(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "t"
    tensor_io.write_tensor(np.zeros(3), path)
    data = bytearray(path.read_bytes())
    struct.pack_into("<I", data, 4, 9)
    path.write_bytes(bytes(data))
    with pytest.raises(tensor_io.VersionMismatchError):
        tensor_io.read_tensor(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t"
    tensor_io.write_tensor(np.zeros(3), path)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(tensor_io.TruncatedPayloadError):
        tensor_io.read_tensor(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "t"
    tensor_io.write_tensor(np.zeros(3), path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(tensor_io.PayloadSizeMismatchError):
        tensor_io.read_tensor(path)


def test_unsupported_dtype(tmp_path):
    path = tmp_path / "t"
    tensor_io.write_tensor(np.zeros(3), path)
    data = bytearray(path.read_bytes())
    data[8] = 7
    path.write_bytes(bytes(data))
    with pytest.raises(tensor_io.UnsupportedDtypeError):
        tensor_io.read_tensor(path)


@settings(max_examples=40, deadline=None)
@given(
    dims=st.lists(st.integers(min_value=1, max_value=5), min_size=1, max_size=4),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_round_trip_property(tmp_path_factory, dims, seed):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal(dims).astype(np.float32)
    path = tmp_path_factory.mktemp("rt") / "t.atnt"
    tensor_io.write_tensor(t, path)
    assert np.array_equal(tensor_io.read_tensor(path), t)


def test_mask_bytes(tmp_path):
    m = np.full((2, 2), 255, dtype=np.uint8)
    path = tmp_path / "m.pgm"
    tensor_io.write_mask(m, path)
    assert path.read_bytes() == b"P5\n2 2\n255\n\xff\xff\xff\xff"


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    m = (rng.random((7, 5)) > 0.5).astype(np.uint8) * 255
    path = tmp_path / "m.pgm"
    tensor_io.write_mask(m, path)
    assert np.array_equal(tensor_io.read_mask(path), m)


def test_mask_rejects_gray_value(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n2 1\n255\n\x07\xff")
    with pytest.raises(tensor_io.MaskFormatError):
        tensor_io.read_mask(path)
    with pytest.raises(tensor_io.MaskFormatError):
        tensor_io.write_mask(np.array([[7, 255]], dtype=np.uint8), tmp_path / "w.pgm")


def test_mask_rejects_wrong_maxval(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n1 1\n127\n\x00")
    with pytest.raises(tensor_io.MaskFormatError):
        tensor_io.read_mask(path)


def test_mask_rejects_non_p5(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(tensor_io.MaskFormatError):
        tensor_io.read_mask(path)


def test_manifest_empty(tmp_path):
    path = tmp_path / "manifest.txt"
    path.write_text("")
    assert len(tensor_io.load_manifest(path)) == 0


def test_manifest_single_entry(tmp_path):
    (tmp_path / "img.atnt").write_bytes(b"")
    (tmp_path / "bundle").mkdir()
    path = tmp_path / "manifest.txt"
    path.write_text("image=img.atnt\tattn=bundle\tlabel=dog\n")
    manifest = tensor_io.load_manifest(path)
    assert len(manifest) == 1
    entry = manifest.entries[0]
    assert entry.image == "img.atnt"
    assert entry.attn == "bundle"
    assert entry.label == "dog"
    assert entry.gt_mask is None and entry.gt_boxes is None


def test_manifest_missing_attn_names_line(tmp_path):
    path = tmp_path / "manifest.txt"
    path.write_text("image=img.atnt\tlabel=dog\n")
    with pytest.raises(tensor_io.ManifestError, match="line 1"):
        tensor_io.load_manifest(path, check_paths=False)


def test_manifest_boxes_and_order(tmp_path):
    lines = []
    for i in range(3):
        (tmp_path / f"i{i}.atnt").write_bytes(b"")
        (tmp_path / f"b{i}").mkdir()
        lines.append(f"image=i{i}.atnt\tattn=b{i}\tgt_boxes=1,2,3,4;5,6,7,8\tlabel=x{i}")
    path = tmp_path / "m.txt"
    path.write_text("\n".join(lines) + "\n")
    manifest = tensor_io.load_manifest(path)
    assert [e.label for e in manifest.entries] == ["x0", "x1", "x2"]
    assert manifest.entries[0].gt_boxes == [(1, 2, 3, 4), (5, 6, 7, 8)]


def test_manifest_unresolvable_path(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("image=missing.atnt\tattn=nowhere\tlabel=x\n")
    with pytest.raises(tensor_io.ManifestError, match="line 1"):
        tensor_io.load_manifest(path)


def test_manifest_write_round_trip(tmp_path):
    (tmp_path / "i.atnt").write_bytes(b"")
    (tmp_path / "b").mkdir()
    manifest = tensor_io.DatasetManifest(root=str(tmp_path))
    manifest.entries.append(tensor_io.ManifestEntry(
        image="i.atnt", attn="b", label="y", gt_boxes=[(0, 1, 2, 3)]))
    path = tmp_path / "m.txt"
    tensor_io.write_manifest(manifest, path)
    back = tensor_io.load_manifest(path)
    assert back.entries == manifest.entries
