"""Binary tensor containers (F32T / F64T) and binary PGM (P5) interchange.

F32T layout: the 4 magic bytes ``F32T``, a little-endian u32 rank, ``rank``
little-endian u32 dims, then the row-major little-endian float32 payload.
F64T is identical with magic ``F64T`` and a float64 payload.
"""

import struct

import numpy as np

from .errors import CorruptFile

_MAGIC = {b"F32T": np.dtype("<f4"), b"F64T": np.dtype("<f8")}


def encode_tensor(arr, dtype=np.float32):
    arr = np.asarray(arr)
    dtype = np.dtype(dtype)
    magic = b"F64T" if dtype == np.float64 else b"F32T"
    payload = np.ascontiguousarray(arr, dtype=_MAGIC[magic])
    head = magic + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + payload.tobytes()


def decode_tensor(buf, offset=0):
    """Decode one tensor starting at ``offset``; returns (array, next_offset)."""
    buf = memoryview(buf)
    if len(buf) < offset + 8:
        raise CorruptFile("truncated tensor header")
    magic = bytes(buf[offset:offset + 4])
    if magic not in _MAGIC:
        raise CorruptFile(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack_from("<I", buf, offset + 4)
    pos = offset + 8
    if rank > 16 or len(buf) < pos + 4 * rank:
        raise CorruptFile("truncated tensor dims")
    dims = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    dtype = _MAGIC[magic]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buf) < pos + nbytes:
        raise CorruptFile("truncated tensor payload")
    arr = np.frombuffer(buf[pos:pos + nbytes], dtype=dtype).reshape(dims)
    return arr.astype(dtype.newbyteorder("="), copy=True), pos + nbytes


def save_tensor(path, arr, dtype=np.float32):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(arr, dtype))


def load_tensor(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = decode_tensor(buf)
    if end != len(buf):
        raise CorruptFile(f"{len(buf) - end} trailing bytes after tensor")
    return arr


def _pgm_tokens(buf):
    """Yield header tokens and the offset just past the last one."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptFile("truncated PGM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    """Read a binary P5 PGM as a float32 (H, W) array scaled to [0, 1]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    tokens, pos = _pgm_tokens(buf)
    if tokens[0] != b"P5":
        raise CorruptFile("only binary P5 PGM is supported")
    width, height, maxval = (int(t) for t in tokens[1:])
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    if len(buf) < pos + count * dtype.itemsize:
        raise CorruptFile("truncated PGM payload")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    return (data.reshape(height, width) / float(maxval)).astype(np.float32)


def write_pgm(path, img, maxval=255):
    """Write a 2-D array with values in [0, 1] as 8-bit (or 16-bit) binary PGM."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[0]
    q = np.clip(np.rint(img * maxval), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (img.shape[1], img.shape[0], maxval))
        fh.write(q.astype(dtype).tobytes())
