"""
Payload codec shared by the memory and storage managers

A payload is a UTF-8 string, length-prefixed with an 8-byte big-endian
byte count and wrapped in a zlib (DEFLATE) stream.
"""

import struct
import zlib

from .errors import StorageCorruptionError


LENGTH_PREFIX = struct.Struct(">Q")


def pack(s: str) -> bytes:
    """
    Compress a string payload

    Args:
        s: Payload text

    Returns:
        DEFLATE-compressed, length-prefixed UTF-8 bytes
    """
    raw = s.encode("utf-8")
    return zlib.compress(LENGTH_PREFIX.pack(len(raw)) + raw)


def unpack(data: bytes) -> str:
    """
    Decompress a payload produced by pack()

    Raises:
        StorageCorruptionError: stream truncated, not DEFLATE, or length mismatch
    """
    try:
        raw = zlib.decompress(data)
    except zlib.error as e:
        raise StorageCorruptionError(f"undecodable payload: {e}")

    if len(raw) < LENGTH_PREFIX.size:
        raise StorageCorruptionError("payload shorter than its length prefix")

    (length,) = LENGTH_PREFIX.unpack_from(raw)
    body = raw[LENGTH_PREFIX.size:]
    if len(body) != length:
        raise StorageCorruptionError(
            f"payload length mismatch: header says {length}, found {len(body)}"
        )

    try:
        return body.decode("utf-8")
    except UnicodeDecodeError as e:
        raise StorageCorruptionError(f"payload is not UTF-8: {e}")
