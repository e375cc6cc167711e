"""Locality-sensitive indexes for fast candidate generation.

Two families, both used only to gather candidates — every returned score is
an exact rescoring, so the index can lose recall but never precision:

* CosineLshIndex: random-hyperplane signatures for unit-ish vectors. Each
  of the P hyperplanes contributes one sign bit; bits are grouped into B
  bands of R rows, and two vectors collide when any band matches exactly.
  A single bit agrees with probability 1 - angle/pi.
* MinHashIndex: min-wise signatures for token sets under universal hashing
  h_i(x) = (a_i * x + b_i) mod p, banded the same way; a single slot
  matches with probability equal to the Jaccard similarity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import ColumnKey
from .errors import ConfigError, DuplicateKeyError, InputError, NumericError
from .seeding import rng_for, stable_token_hash

MERSENNE_P = (1 << 31) - 1   # prime modulus; products stay below 2**62


def _band_check(n_total: int, n_bands: int, rows_per_band: int, kind: str) -> None:
    if n_bands * rows_per_band != n_total:
        raise ConfigError(
            f"{kind}: bands * rows must equal {n_total}, "
            f"got {n_bands} * {rows_per_band} = {n_bands * rows_per_band}")


class CosineLshIndex:
    """Random-hyperplane index over fixed-dimension vectors."""

    def __init__(self, dim: int, n_planes: int = 256, n_bands: int = 32,
                 rows_per_band: int = 8, seed: int = 0,
                 planes: np.ndarray | None = None):
        if dim < 1:
            raise ConfigError(f"dim must be >= 1, got {dim}")
        _band_check(n_planes, n_bands, rows_per_band, "cosine index")
        self.dim = dim
        self.n_planes = n_planes
        self.n_bands = n_bands
        self.rows_per_band = rows_per_band
        self.seed = seed
        if planes is None:
            raw = rng_for(seed, "cosine-planes").standard_normal((n_planes, dim))
            raw /= np.linalg.norm(raw, axis=1, keepdims=True)
            planes = raw.astype(np.float32)
        if planes.shape != (n_planes, dim):
            raise ConfigError(f"planes shape {planes.shape} != {(n_planes, dim)}")
        self.planes = planes
        self.buckets: list[dict[bytes, list[ColumnKey]]] = [
            {} for _ in range(n_bands)]
        self.vectors: dict[ColumnKey, np.ndarray] = {}
        self._units: dict[ColumnKey, np.ndarray] = {}

    @property
    def size(self) -> int:
        return len(self.vectors)

    def keys(self) -> list[ColumnKey]:
        return sorted(self.vectors)

    def signature(self, vector: np.ndarray) -> np.ndarray:
        """P sign bits as uint8; a dot product of exactly zero counts as 1."""
        v = self._prepare(vector)
        dots = self.planes.astype(np.float64) @ v
        return (dots >= 0.0).astype(np.uint8)

    def _prepare(self, vector: np.ndarray) -> np.ndarray:
        v = np.asarray(vector, dtype=np.float32).astype(np.float64)
        if v.shape != (self.dim,):
            raise ConfigError(f"vector shape {v.shape} != ({self.dim},)")
        return v

    def _band_keys(self, bits: np.ndarray) -> list[bytes]:
        per_band = bits.reshape(self.n_bands, self.rows_per_band)
        return [np.packbits(row).tobytes() for row in per_band]

    def insert(self, key: ColumnKey, vector: np.ndarray) -> None:
        if key in self.vectors:
            raise DuplicateKeyError(f"key already indexed: {key}")
        v = self._prepare(vector)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise NumericError(f"zero-norm vector for key {key}")
        bits = self.signature(v)
        for band, bkey in enumerate(self._band_keys(bits)):
            self.buckets[band].setdefault(bkey, []).append(key)
        self.vectors[key] = np.asarray(vector, dtype=np.float32)
        self._units[key] = v / norm

    def _unit(self, key: ColumnKey) -> np.ndarray:
        # Rebuilds the cache after a load that populated .vectors directly.
        u = self._units.get(key)
        if u is None:
            v = self.vectors.get(key)
            if v is None:
                raise InputError(f"unknown key {key!r} in cosine index")
            v = v.astype(np.float64)
            u = v / np.linalg.norm(v)
            self._units[key] = u
        return u

    def rebuild_buckets(self) -> None:
        """Recompute band buckets from stored vectors (after deserialization)."""
        self.buckets = [{} for _ in range(self.n_bands)]
        for key in sorted(self.vectors):
            bits = self.signature(self.vectors[key])
            for band, bkey in enumerate(self._band_keys(bits)):
                self.buckets[band].setdefault(bkey, []).append(key)

    def lookup(self, vector: np.ndarray, threshold: float
               ) -> list[tuple[ColumnKey, float]]:
        """Bucket collisions, exactly rescored; sorted by (-cosine, key).

        Scores are true cosines of the stored float32 vectors — banding
        only decides which candidates get scored at all.
        """
        v = self._prepare(vector)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise NumericError("zero-norm query vector")
        uq = v / norm
        bits = self.signature(v)
        candidates: set[ColumnKey] = set()
        for band, bkey in enumerate(self._band_keys(bits)):
            candidates.update(self.buckets[band].get(bkey, ()))
        return self._rescore(uq, sorted(candidates), threshold)

    def scan(self, vector: np.ndarray, threshold: float
             ) -> list[tuple[ColumnKey, float]]:
        """Exhaustive variant of lookup: every stored key is a candidate."""
        v = self._prepare(vector)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise NumericError("zero-norm query vector")
        return self._rescore(v / norm, sorted(self.vectors), threshold)

    def _rescore(self, unit_query: np.ndarray, keys: list[ColumnKey],
                 threshold: float) -> list[tuple[ColumnKey, float]]:
        if not keys:
            return []
        units = np.stack([self._unit(k) for k in keys])
        scores = units @ unit_query
        hits = [(k, float(s)) for k, s in zip(keys, scores) if s >= threshold]
        hits.sort(key=lambda kv: (-kv[1], kv[0]))
        return hits

    def cosine(self, key_a: ColumnKey, key_b: ColumnKey) -> float:
        return float(self._unit(key_a) @ self._unit(key_b))


class MinHashIndex:
    """Banded min-hash index over token sets, with exact Jaccard rescoring."""

    def __init__(self, n_perms: int = 128, n_bands: int = 32,
                 rows_per_band: int = 4, seed: int = 0):
        _band_check(n_perms, n_bands, rows_per_band, "minhash index")
        self.n_perms = n_perms
        self.n_bands = n_bands
        self.rows_per_band = rows_per_band
        self.seed = seed
        rng = rng_for(seed, "minhash-perms")
        self.coef_a = rng.integers(1, MERSENNE_P, size=n_perms, dtype=np.uint64)
        self.coef_b = rng.integers(0, MERSENNE_P, size=n_perms, dtype=np.uint64)
        self.buckets: list[dict[bytes, list[ColumnKey]]] = [
            {} for _ in range(n_bands)]
        self.token_sets: dict[ColumnKey, frozenset[str]] = {}

    @property
    def size(self) -> int:
        return len(self.token_sets)

    def keys(self) -> list[ColumnKey]:
        return sorted(self.token_sets)

    def signature(self, tokens: frozenset[str] | set[str]) -> np.ndarray:
        """Per-permutation minimum of (a*x + b) mod p over the token hashes."""
        if not tokens:
            raise InputError("cannot build a min-hash signature of an empty set")
        xs = np.array(sorted(stable_token_hash(t, self.seed) % MERSENNE_P
                             for t in tokens), dtype=np.uint64)
        # (n_tokens, n_perms): a*x stays < 2**62, so uint64 never wraps.
        prods = (xs[:, None] * self.coef_a[None, :] + self.coef_b[None, :]) \
            % np.uint64(MERSENNE_P)
        return prods.min(axis=0)

    def _band_keys(self, sig: np.ndarray) -> list[bytes]:
        per_band = sig.reshape(self.n_bands, self.rows_per_band)
        return [row.tobytes() for row in per_band]

    def insert(self, key: ColumnKey, tokens: frozenset[str] | set[str]) -> None:
        if key in self.token_sets:
            raise DuplicateKeyError(f"key already indexed: {key}")
        sig = self.signature(tokens)
        for band, bkey in enumerate(self._band_keys(sig)):
            self.buckets[band].setdefault(bkey, []).append(key)
        self.token_sets[key] = frozenset(tokens)

    def rebuild_buckets(self) -> None:
        self.buckets = [{} for _ in range(self.n_bands)]
        for key in sorted(self.token_sets):
            sig = self.signature(self.token_sets[key])
            for band, bkey in enumerate(self._band_keys(sig)):
                self.buckets[band].setdefault(bkey, []).append(key)

    def lookup(self, tokens: frozenset[str] | set[str], threshold: float
               ) -> list[tuple[ColumnKey, float]]:
        """Bucket collisions rescored with exact Jaccard; (-score, key) order."""
        if not tokens:
            return []
        sig = self.signature(tokens)
        candidates: set[ColumnKey] = set()
        for band, bkey in enumerate(self._band_keys(sig)):
            candidates.update(self.buckets[band].get(bkey, ()))
        return self._rescore(frozenset(tokens), sorted(candidates), threshold)

    def scan(self, tokens: frozenset[str] | set[str], threshold: float
             ) -> list[tuple[ColumnKey, float]]:
        if not tokens:
            return []
        return self._rescore(frozenset(tokens), sorted(self.token_sets), threshold)

    def _rescore(self, query: frozenset[str], keys: list[ColumnKey],
                 threshold: float) -> list[tuple[ColumnKey, float]]:
        hits = []
        for key in keys:
            stored = self.token_sets[key]
            union = len(query | stored)
            score = len(query & stored) / union if union else 0.0
            if score >= threshold:
                hits.append((key, score))
        hits.sort(key=lambda kv: (-kv[1], kv[0]))
        return hits

    def jaccard(self, key_a: ColumnKey, key_b: ColumnKey) -> float:
        for key in (key_a, key_b):
            if key not in self.token_sets:
                raise InputError(f"unknown key {key!r} in token index")
        a, b = self.token_sets[key_a], self.token_sets[key_b]
        union = len(a | b)
        return len(a & b) / union if union else 0.0
