"""Seedable CSPRNG (AES-256 in counter mode).

Every secret key, noise term and query seed in the package is drawn from
:class:`Csprng`. Passing ``seed=None`` seeds from ``os.urandom``; tests pin
seeds for reproducibility.
"""
from __future__ import annotations

import hashlib
import os

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

_ZERO_IV = bytes(16)


def _keystream(key: bytes):
    return Cipher(algorithms.AES(key), modes.CTR(_ZERO_IV)).encryptor()


class Csprng:
    def __init__(self, seed: bytes | None = None):
        if seed is None:
            seed = os.urandom(32)
        self._key = hashlib.sha256(b"adpir-csprng" + bytes(seed)).digest()
        self._stream = _keystream(self._key)

    def bytes(self, n: int) -> bytes:
        return self._stream.update(bytes(n))

    def fork(self, label: bytes) -> "Csprng":
        """Independent child stream; does not advance this one."""
        return Csprng(hashlib.sha256(self._key + b"fork" + label).digest())

    def uniform_u32(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.bytes(4 * count), dtype="<u4").reshape(shape)

    def ternary(self, shape) -> np.ndarray:
        """Uniform over {-1, 0, 1} by rejection sampling bytes."""
        count = int(np.prod(shape))
        out = np.empty(0, dtype=np.int64)
        while out.size < count:
            raw = np.frombuffer(self.bytes(count + 64), dtype=np.uint8)
            raw = raw[raw < 255]
            out = np.concatenate([out, (raw % 3).astype(np.int64) - 1])
        return out[:count].reshape(shape)

    def centered_binomial(self, shape, eta: int) -> np.ndarray:
        """Centered binomial noise with variance ``eta / 2``.

        ``eta`` must be a multiple of 8 and at most 64.
        """
        if eta <= 0 or eta % 8 or eta > 64:
            raise ValueError("eta must be a multiple of 8 in [8, 64]")
        count = int(np.prod(shape))
        nb = eta // 8
        width = 1 << (nb - 1).bit_length()
        raw = np.frombuffer(self.bytes(2 * nb * count), dtype=np.uint8).reshape(count, 2, nb)
        if width != nb:
            padded = np.zeros((count, 2, width), dtype=np.uint8)
            padded[:, :, :nb] = raw
            raw = padded
        words = np.ascontiguousarray(raw).view(f"<u{width}")[:, :, 0]
        pc = np.bitwise_count(words).astype(np.int64)
        return (pc[:, 0] - pc[:, 1]).reshape(shape)


def expand_uniform_u32(seed: bytes, shape) -> np.ndarray:
    """Public deterministic expansion used for the compressed ``a`` polynomials."""
    count = int(np.prod(shape))
    key = hashlib.sha256(b"adpir-expand" + seed).digest()
    return np.frombuffer(_keystream(key).update(bytes(4 * count)), dtype="<u4").reshape(shape)
