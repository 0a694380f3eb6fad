"""Canonical byte encoding used for hashing and snapshot lines.

Every value is length-prefixed (4-byte big-endian) and fields are concatenated
in declared order, which makes digests byte-exact reproducible and the encoded
stream parseable without a schema side channel. Floats encode as float.hex()
so round-trips are exact.
"""

from __future__ import annotations


def encode_field(b: bytes) -> bytes:
    return len(b).to_bytes(4, "big") + b


def encode_str(s: str) -> bytes:
    return encode_field(s.encode("utf-8"))


def encode_int(n: int) -> bytes:
    return encode_field(str(int(n)).encode("ascii"))


def encode_float(x: float) -> bytes:
    return encode_field(float(x).hex().encode("ascii"))


class FieldReader:
    """Sequential decoder for a stream of length-prefixed fields."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def read_bytes(self) -> bytes:
        if self._pos + 4 > len(self._data):
            raise ValueError("truncated field header")
        n = int.from_bytes(self._data[self._pos : self._pos + 4], "big")
        self._pos += 4
        if self._pos + n > len(self._data):
            raise ValueError("truncated field body")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def read_str(self) -> str:
        return self.read_bytes().decode("utf-8")

    def read_int(self) -> int:
        return int(self.read_bytes().decode("ascii"))

    def read_float(self) -> float:
        return float.fromhex(self.read_bytes().decode("ascii"))

    def at_end(self) -> bool:
        return self._pos == len(self._data)
