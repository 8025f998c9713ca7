"""Arithmetic in Z_q[X]/(X^N + 1) with q = 2^32 (or smaller powers of two).

Products go through a complex FFT of length N/2: a real negacyclic
polynomial ``a`` is folded into ``(a[:N/2] + i*a[N/2:]) * psi^j`` which
evaluates it at the primitive 2N-th roots of unity congruent to 1 mod 4.
The conjugate roots carry no extra information for real inputs.

Results are rounded back to integers and reduced mod q. One operand is
always small (plaintext bytes, gadget digits or a ternary key), so
float64 rounding error stays far below one unit for N <= 4096; whatever
is left behaves as a tiny extra noise term, which is how torus-FHE
libraries use the same trick.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft


@lru_cache(maxsize=None)
def _twist(n: int) -> np.ndarray:
    return np.exp(1j * np.pi * np.arange(n // 2) / n)


def forward(a: np.ndarray) -> np.ndarray:
    """Evaluation form of integer polynomials along the last axis (length N)."""
    n = a.shape[-1]
    h = n // 2
    z = np.empty(a.shape[:-1] + (h,), dtype=np.complex128)
    z.real = a[..., :h]
    z.imag = a[..., h:]
    z *= _twist(n)
    return sfft.fft(z, axis=-1, overwrite_x=True)


def inverse(f: np.ndarray) -> np.ndarray:
    """Back to coefficient form, as float64 (not yet rounded)."""
    h = f.shape[-1]
    z = sfft.ifft(f, axis=-1)
    z *= _twist(2 * h).conj()
    out = np.empty(f.shape[:-1] + (2 * h,), dtype=np.float64)
    out[..., :h] = z.real
    out[..., h:] = z.imag
    return out


def round_mod(x: np.ndarray, log_q: int) -> np.ndarray:
    """Round floats to integers and reduce into [0, q) as uint32."""
    r = np.rint(x).astype(np.int64)
    return (r & ((1 << log_q) - 1)).astype(np.uint32)


def centered(a: np.ndarray, log_q: int) -> np.ndarray:
    """Lift residues in [0, q) to the signed range [-q/2, q/2) as float64."""
    a = a.astype(np.int64)
    half = 1 << (log_q - 1)
    return (((a + half) & ((1 << log_q) - 1)) - half).astype(np.float64)


def negacyclic_mul(a: np.ndarray, b: np.ndarray, log_q: int) -> np.ndarray:
    """Exact-for-small-operand product of two polynomial batches, mod q."""
    return round_mod(inverse(forward(a) * forward(b)), log_q)


def gadget_decompose(a: np.ndarray, base_bits: int, levels: int, log_q: int) -> np.ndarray:
    """Signed base-2^base_bits digits of residues mod q.

    Bits below ``log_q - levels * base_bits`` are rounded off first, so the
    digits satisfy ``sum(d_i * 2^(skip + i*base_bits)) == a - r (mod q)``
    with ``|r| <= 2^(skip-1)``. Returns shape ``(levels,) + a.shape``;
    digits lie in [-B/2, B/2).
    """
    skip = log_q - base_bits * levels
    base = 1 << base_bits
    half = base >> 1
    mask = base - 1
    x = a.astype(np.int64)
    if skip:
        x += 1 << (skip - 1)
        x >>= skip
    digits = np.empty((levels,) + a.shape, dtype=np.int64)
    for i in range(levels):
        d = digits[i]
        np.add(x, half, out=d)
        d &= mask
        d -= half
        x -= d
        x >>= base_bits
    return digits
