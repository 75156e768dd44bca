"""TACT tensor files exchanged with out-of-process denoisers.

Request: ``b"TACT"``, u32 version, u32 H, u32 W, u32 C, u32 t, then H*W*C
little-endian float32 values (row-major, channel-interleaved), then H*W mask
bytes. Reply: ``b"TACT"``, u32 version, u32 H, u32 W, u32 C, then H*W*C
float32 values. The program is invoked as ``prog REQUEST REPLY`` and must exit 0.

Running ``python -m tacmode.tact echo REQUEST REPLY`` answers a request with
its own image, which is handy for checking an installation.
"""

from __future__ import annotations

import struct
import sys
from pathlib import Path

import numpy as np

from tacmode.core import DimensionError, TactileError

MAGIC = b"TACT"
VERSION = 1
_REQ_HEAD = struct.Struct("<4sIIIII")
_REP_HEAD = struct.Struct("<4sIIII")


class ProtocolError(TactileError):
    pass


def encode_request(noisy: np.ndarray, mask: np.ndarray, t: int) -> bytes:
    noisy = np.asarray(noisy)
    h, w, c = noisy.shape
    mask = np.asarray(mask)
    if mask.shape != (h, w):
        raise DimensionError(f"mask {mask.shape} does not match image {(h, w)}")
    return (
        _REQ_HEAD.pack(MAGIC, VERSION, h, w, c, int(t))
        + np.ascontiguousarray(noisy, dtype="<f4").tobytes()
        + np.ascontiguousarray(mask, dtype=np.uint8).tobytes()
    )


def decode_request(buf: bytes) -> tuple[np.ndarray, np.ndarray, int]:
    if len(buf) < _REQ_HEAD.size:
        raise ProtocolError("request truncated")
    magic, version, h, w, c, t = _REQ_HEAD.unpack_from(buf)
    if magic != MAGIC or version != VERSION:
        raise ProtocolError(f"bad request header {magic!r} v{version}")
    n = h * w * c
    expected = _REQ_HEAD.size + 4 * n + h * w
    if len(buf) != expected:
        raise ProtocolError(f"request is {len(buf)} bytes, expected {expected}")
    img = np.frombuffer(buf, dtype="<f4", count=n, offset=_REQ_HEAD.size).reshape(h, w, c)
    mask = np.frombuffer(buf, dtype=np.uint8, count=h * w, offset=_REQ_HEAD.size + 4 * n)
    return img.astype(np.float64), mask.reshape(h, w).astype(bool), t


def encode_reply(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    h, w, c = img.shape
    return _REP_HEAD.pack(MAGIC, VERSION, h, w, c) + np.ascontiguousarray(img, dtype="<f4").tobytes()


def decode_reply(buf: bytes, shape: tuple[int, int, int] | None = None) -> np.ndarray:
    if len(buf) < _REP_HEAD.size:
        raise ProtocolError("reply truncated")
    magic, version, h, w, c = _REP_HEAD.unpack_from(buf)
    if magic != MAGIC or version != VERSION:
        raise ProtocolError(f"bad reply header {magic!r} v{version}")
    if shape is not None and (h, w, c) != tuple(shape):
        raise DimensionError(f"reply has shape {(h, w, c)}, expected {tuple(shape)}")
    n = h * w * c
    if len(buf) != _REP_HEAD.size + 4 * n:
        raise ProtocolError(f"reply is {len(buf)} bytes, expected {_REP_HEAD.size + 4 * n}")
    return np.frombuffer(buf, dtype="<f4", count=n, offset=_REP_HEAD.size).reshape(h, w, c).astype(np.float64)


def serve(fn, argv=None) -> int:
    """Answer one request file with ``fn(noisy, mask, t)``; for writing denoiser programs."""
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: PROGRAM REQUEST REPLY", file=sys.stderr)
        return 2
    noisy, mask, t = decode_request(Path(argv[0]).read_bytes())
    Path(argv[1]).write_bytes(encode_reply(fn(noisy, mask, t)))
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] != "echo":
        print("usage: python -m tacmode.tact echo REQUEST REPLY", file=sys.stderr)
        return 2
    return serve(lambda noisy, mask, t: noisy, argv[1:])


if __name__ == "__main__":
    sys.exit(main())
