"""Little-endian binary helpers shared by the checkpoint and feature-cache formats"""

from typing import Type

import numpy as np

from protosed.core.errors import InputError

U32 = np.dtype("<u4")
F32 = np.dtype("<f4")


def pack_u32(value: int) -> bytes:
    return np.array([value], dtype=U32).tobytes()


def pack_array(values: np.ndarray) -> bytes:
    """rank (u32) + dims (u32 each) + row-major little-endian f32 payload"""
    array = np.ascontiguousarray(values, dtype=F32)
    return pack_u32(array.ndim) + np.array(array.shape, dtype=U32).tobytes() + array.tobytes()


def pack_text(text: str) -> bytes:
    encoded = text.encode("utf-8")
    return pack_u32(len(encoded)) + encoded


class ByteReader:
    """Sequential reader that raises `error` on truncation"""

    def __init__(self, data: bytes, error: Type[InputError], source: str = "<bytes>"):
        self.data = data
        self.offset = 0
        self.error = error
        self.source = source

    def read(self, n: int) -> bytes:
        if n < 0 or self.offset + n > len(self.data):
            raise self.error(f"{self.source}: truncated at byte {self.offset} (needed {n} more)")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return int(np.frombuffer(self.read(4), dtype=U32)[0])

    def text(self) -> str:
        raw = self.read(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise self.error(f"{self.source}: invalid UTF-8 text at byte {self.offset}") from e

    def array(self) -> np.ndarray:
        rank = self.u32()
        if rank > 8:
            raise self.error(f"{self.source}: implausible tensor rank {rank}")
        shape = tuple(int(d) for d in np.frombuffer(self.read(4 * rank), dtype=U32))
        count = int(np.prod(shape)) if shape else 1
        return np.frombuffer(self.read(4 * count), dtype=F32).reshape(shape).astype(np.float32)

    def expect_end(self):
        if self.offset != len(self.data):
            raise self.error(f"{self.source}: {len(self.data) - self.offset} trailing bytes")
