"""Local category computation: feature-hashed profiles and SimHash.

A client's browsing events become a sparse ``feature -> weight`` map,
which is hashed into a dense vector of fixed dimension ``d``. SimHash then
projects that vector onto ``b`` pseudo-random hyperplanes regenerated from
a public seed; bit ``i`` is 1 when the projection is >= 0.

Projections are computed in exact integer arithmetic (quantized profile
times quantized hyperplanes), so the same inputs give the same bits on
every machine.
"""
from __future__ import annotations

import dataclasses
import hashlib
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from adpir.errors import DimensionMismatch

DEFAULT_DIM = 1024
SEED_BYTES = 32

# fixed-point scales for the exact projection; 2^24 * 2^20 * 2^14 stays below 2^63
_PROFILE_SCALE = 1 << 24
_PLANE_SCALE = 1 << 16
_MAX_DIM = 1 << 14


def _feature_slot(token: str, dim: int) -> tuple[int, int]:
    h = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "little")
    sign = -1 if h >> 63 else 1
    return h % dim, sign


@dataclasses.dataclass(frozen=True)
class PreferenceProfile:
    features: Mapping[str, float]
    dim: int = DEFAULT_DIM

    @cached_property
    def dense(self) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in sorted(self.features):
            slot, sign = _feature_slot(token, self.dim)
            vec[slot] += sign * self.features[token]
        return vec

    def is_zero(self) -> bool:
        return not np.any(self.dense)


def build_profile(events: Iterable[tuple[str, float]], dim: int = DEFAULT_DIM) -> PreferenceProfile:
    """Sum weights per feature id; empty input gives the zero profile."""
    features: dict[str, float] = {}
    for token, weight in events:
        features[token] = features.get(token, 0.0) + float(weight)
    return PreferenceProfile(features, dim)


def profile_from_vector(vec: np.ndarray) -> PreferenceProfile:
    """Profile whose dense form is exactly ``vec`` (used by tests and benchmarks)."""
    vec = np.asarray(vec, dtype=np.float64)
    prof = PreferenceProfile({}, len(vec))
    object.__setattr__(prof, "dense", vec.copy())
    return prof


@dataclasses.dataclass(frozen=True)
class HyperplaneSet:
    seed: bytes
    bits: int
    dim: int = DEFAULT_DIM

    def __post_init__(self):
        if len(self.seed) != SEED_BYTES:
            raise ValueError(f"hyperplane seed must be {SEED_BYTES} bytes")
        if self.bits < 1:
            raise ValueError("need at least one hyperplane")
        if not 1 <= self.dim <= _MAX_DIM:
            raise ValueError(f"dimension must be in [1, {_MAX_DIM}]")

    @cached_property
    def planes(self) -> np.ndarray:
        """Integer Gaussian hyperplanes, shape ``(bits, dim)``."""
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(self.seed, "little")))
        g = rng.standard_normal((self.bits, self.dim))
        return np.rint(g * _PLANE_SCALE).astype(np.int64)


def projections(profile: PreferenceProfile, h: HyperplaneSet) -> np.ndarray:
    if profile.dim != h.dim:
        raise DimensionMismatch(f"profile has dimension {profile.dim}, hyperplanes {h.dim}")
    vec = profile.dense
    peak = np.max(np.abs(vec)) if vec.size else 0.0
    if peak == 0:
        return np.zeros(h.bits, dtype=np.int64)
    q = np.rint(vec / peak * _PROFILE_SCALE).astype(np.int64)
    return h.planes @ q


def get_category(profile: PreferenceProfile, h: HyperplaneSet) -> str:
    """SimHash bitstring of length ``h.bits``; a zero projection maps to 1."""
    bits = projections(profile, h) >= 0
    return "".join("1" if b else "0" for b in bits)
