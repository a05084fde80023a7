"""Bit-exact persistence: 8-bit PGM/PPM images and a raw float32 tensor file.

Images travel as binary netpbm (P5 for grayscale, P6 for RGB, maxval 255).
Fields, filter banks and other float data use a little-endian container:

    magic    8 bytes  b"WFTENS01"
    dtype    4 bytes  b"f32 "
    rank     uint64 LE
    dims     rank x uint64 LE
    mlen     uint64 LE   (byte length of the metadata JSON, 0 if absent)
    metadata mlen bytes of UTF-8 JSON
    payload  prod(dims) x 4 bytes of little-endian float32

Readers reject malformed input outright; no partially constructed objects
are ever returned.
"""

import json
import struct

import numpy as np

from .validation import as_image

__all__ = [
    "FileFormatError",
    "read_image",
    "write_image",
    "read_tensor",
    "write_tensor",
]

TENSOR_MAGIC = b"WFTENS01"
TENSOR_DTYPE = b"f32 "


class FileFormatError(ValueError):
    """Raised when a file does not match its declared format."""


def _read_pnm_token(buf, pos):
    """Next whitespace-delimited token, skipping '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise FileFormatError("malformed header: unexpected end of file")
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def read_image(path):
    """Read a binary PGM (P5) or PPM (P6) file into a float image in [0, 1]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 2:
        raise FileFormatError("malformed header: file too short")
    magic = buf[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise FileFormatError(f"malformed header: unsupported magic {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_pnm_token(buf, pos)
        if not tok.isdigit():
            raise FileFormatError(f"malformed header: non-numeric field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FileFormatError(f"malformed header: bad dimensions {width}x{height}")
    if maxval != 255:
        raise FileFormatError(f"unsupported maxval {maxval} (only 255 is supported)")
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FileFormatError("malformed header: missing separator before payload")
    pos += 1
    expected = width * height * channels
    payload = buf[pos:pos + expected]
    if len(payload) < expected:
        raise FileFormatError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    return data.reshape(height, width, channels)


def write_image(img, path):
    """Write an image as binary PGM/PPM with maxval 255 (round half up)."""
    img = as_image(img)
    h, w, c = img.shape
    magic = b"P5" if c == 1 else b"P6"
    quantized = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(quantized.tobytes())


def write_tensor(path, values, metadata=None):
    """Write a float32 tensor with optional JSON metadata."""
    arr = np.ascontiguousarray(np.asarray(values), dtype="<f4")
    meta_bytes = b""
    if metadata is not None:
        meta_bytes = json.dumps(metadata, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(TENSOR_DTYPE)
        fh.write(struct.pack("<Q", arr.ndim))
        for d in arr.shape:
            fh.write(struct.pack("<Q", d))
        fh.write(struct.pack("<Q", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(arr.tobytes())


def read_tensor(path):
    """Read a tensor file; returns (values, metadata).

    values is a float32 array shaped per the stored dims; metadata is the
    parsed JSON object or None.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise FileFormatError(f"truncated file while reading {what}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(8, "magic") != TENSOR_MAGIC:
        raise FileFormatError("bad magic: not a tensor file")
    if take(4, "dtype") != TENSOR_DTYPE:
        raise FileFormatError("unsupported dtype tag")
    rank = struct.unpack("<Q", take(8, "rank"))[0]
    if rank > 32:
        raise FileFormatError(f"implausible rank {rank}")
    dims = tuple(struct.unpack("<Q", take(8, "dims"))[0] for _ in range(rank))
    mlen = struct.unpack("<Q", take(8, "metadata length"))[0]
    metadata = None
    if mlen:
        try:
            metadata = json.loads(take(mlen, "metadata").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FileFormatError(f"bad metadata JSON: {exc}") from exc
    count = 1
    for d in dims:
        count *= d
    payload = take(count * 4, "payload")
    if pos != len(buf):
        raise FileFormatError(f"{len(buf) - pos} trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return values.copy(), metadata
