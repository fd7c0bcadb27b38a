"""Bit-exact serialization of tensors, masks, and dataset manifests.

Formats are deliberately tiny and dependency-free so that any producer
(including the exporter living outside this package) can emit them:

* Tensor file: magic "ATNT", u32 version (1), u8 dtype (0 = f32le),
  u8 ndim, ndim x u64 dims, then the row-major float32 payload.
  Everything little-endian.
* Mask file: binary P5 PGM, maxval 255, pixel values restricted to {0, 255}.
* Manifest: one record per line, tab-separated key=value fields.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"ATNT"
VERSION = 1
DTYPE_F32LE = 0

_HEADER_FIXED = struct.Struct("<4sIBB")


class TensorIOError(Exception):
    """Base class for serialization failures."""


class BadMagicError(TensorIOError):
    pass


class VersionMismatchError(TensorIOError):
    pass


class UnsupportedDtypeError(TensorIOError):
    pass


class InvalidDimsError(TensorIOError):
    pass


class TruncatedPayloadError(TensorIOError):
    pass


class PayloadSizeMismatchError(TensorIOError):
    pass


class MaskFormatError(TensorIOError):
    pass


class ManifestError(TensorIOError):
    pass


def write_tensor(t: np.ndarray, path: str | os.PathLike) -> None:
    """Write a float tensor in the ATNT format.

    The output is byte-identical for identical inputs. dims must be nonempty
    with every extent >= 1.
    """
    arr = np.ascontiguousarray(t, dtype="<f4")
    if arr.ndim == 0 or any(d < 1 for d in arr.shape):
        raise InvalidDimsError(f"invalid tensor shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER_FIXED.pack(MAGIC, VERSION, DTYPE_F32LE, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read an ATNT tensor; exact inverse of write_tensor."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER_FIXED.size:
        raise TruncatedPayloadError(f"{path}: file shorter than fixed header")
    magic, version, dtype, ndim = _HEADER_FIXED.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if dtype != DTYPE_F32LE:
        raise UnsupportedDtypeError(f"{path}: dtype code {dtype}")
    if ndim < 1:
        raise InvalidDimsError(f"{path}: ndim must be >= 1")
    dims_end = _HEADER_FIXED.size + 8 * ndim
    if len(data) < dims_end:
        raise TruncatedPayloadError(f"{path}: truncated dims block")
    dims = struct.unpack_from(f"<{ndim}Q", data, _HEADER_FIXED.size)
    if any(d < 1 for d in dims):
        raise InvalidDimsError(f"{path}: zero extent in dims {dims}")
    count = 1
    for d in dims:
        count *= d
    expected = dims_end + 4 * count
    if len(data) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(data) - dims_end} bytes, expected {4 * count}"
        )
    if len(data) > expected:
        raise PayloadSizeMismatchError(
            f"{path}: {len(data) - expected} trailing bytes beyond payload"
        )
    flat = np.frombuffer(data, dtype="<f4", count=count, offset=dims_end)
    return flat.reshape(dims).copy()


def _validate_mask(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise MaskFormatError(f"mask must be 2-D, got shape {m.shape}")
    m = m.astype(np.uint8, copy=False)
    bad = (m != 0) & (m != 255)
    if bad.any():
        v = int(m[bad][0])
        raise MaskFormatError(f"mask contains value {v}, only 0 and 255 allowed")
    return m


def write_mask(m: np.ndarray, path: str | os.PathLike) -> None:
    """Write a binary mask as a P5 PGM with maxval 255."""
    m = _validate_mask(m)
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(m.tobytes(order="C"))


def read_mask(path: str | os.PathLike) -> np.ndarray:
    """Read a P5 PGM mask written by write_mask."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise MaskFormatError(f"{path}: not a P5 PGM")
    # header: three whitespace-separated tokens after P5 (width height maxval),
    # then a single whitespace byte before the pixel block
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MaskFormatError(f"{path}: truncated PGM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError as exc:
            raise MaskFormatError(f"{path}: bad header token") from exc
    pos += 1  # single whitespace separating header from pixels
    w, h, maxval = tokens
    if maxval != 255:
        raise MaskFormatError(f"{path}: maxval {maxval}, expected 255")
    if w < 1 or h < 1:
        raise MaskFormatError(f"{path}: bad dimensions {w}x{h}")
    pixels = data[pos : pos + w * h]
    if len(pixels) != w * h:
        raise MaskFormatError(f"{path}: expected {w * h} pixels, got {len(pixels)}")
    m = np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()
    return _validate_mask(m)


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    attn: str
    label: str
    gt_mask: str | None = None
    gt_boxes: list[tuple[int, int, int, int]] | None = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: str = "."

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, relpath: str) -> str:
        return os.path.normpath(os.path.join(self.root, relpath))


_REQUIRED_FIELDS = ("image", "attn", "label")
_KNOWN_FIELDS = {"image", "attn", "label", "gt_mask", "gt_boxes"}


def _parse_boxes(text: str, lineno: int) -> list[tuple[int, int, int, int]]:
    boxes = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        coords = part.split(",")
        if len(coords) != 4:
            raise ManifestError(f"line {lineno}: box needs 4 coords, got {part!r}")
        try:
            x0, y0, x1, y1 = (int(c) for c in coords)
        except ValueError as exc:
            raise ManifestError(f"line {lineno}: non-integer box coord in {part!r}") from exc
        if x0 > x1 or y0 > y1:
            raise ManifestError(f"line {lineno}: inverted box {part!r}")
        boxes.append((x0, y0, x1, y1))
    return boxes


def load_manifest(path: str | os.PathLike, check_paths: bool = True) -> DatasetManifest:
    """Parse a line-delimited manifest; entry order is preserved.

    Relative paths are resolved against the manifest's directory. With
    check_paths, every referenced image/attn/gt_mask path must exist.
    """
    root = os.path.dirname(os.path.abspath(path))
    manifest = DatasetManifest(root=root)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields: dict[str, str] = {}
            for token in line.split("\t"):
                if not token.strip():
                    continue
                if "=" not in token:
                    raise ManifestError(f"line {lineno}: expected key=value, got {token!r}")
                key, value = token.split("=", 1)
                key = key.strip()
                if key not in _KNOWN_FIELDS:
                    raise ManifestError(f"line {lineno}: unknown field {key!r}")
                if key in fields:
                    raise ManifestError(f"line {lineno}: duplicate field {key!r}")
                fields[key] = value
            for req in _REQUIRED_FIELDS:
                if req not in fields:
                    raise ManifestError(f"line {lineno}: missing required field {req!r}")
            entry = ManifestEntry(
                image=fields["image"],
                attn=fields["attn"],
                label=fields["label"],
                gt_mask=fields.get("gt_mask"),
                gt_boxes=_parse_boxes(fields["gt_boxes"], lineno) if "gt_boxes" in fields else None,
            )
            if check_paths:
                for p in (entry.image, entry.attn, entry.gt_mask):
                    if p is not None and not os.path.exists(manifest.resolve(p)):
                        raise ManifestError(f"line {lineno}: path not found: {p}")
            manifest.entries.append(entry)
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    lines = []
    for e in manifest.entries:
        parts = [f"image={e.image}", f"attn={e.attn}"]
        if e.gt_mask is not None:
            parts.append(f"gt_mask={e.gt_mask}")
        if e.gt_boxes is not None:
            boxes = ";".join(f"{b[0]},{b[1]},{b[2]},{b[3]}" for b in e.gt_boxes)
            parts.append(f"gt_boxes={boxes}")
        parts.append(f"label={e.label}")
        lines.append("\t".join(parts))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
