"""Space-filling-curve serialization of 3D and merged 4D voxel sets.

Two codec families: Z-order (Morton bit interleaving) and Hilbert (Skilling's
transpose algorithm). Both are exact bijections between d-dimensional grid
coordinates and ranks in [0, 2^(d*bits)). "Trans" variants rotate the axes
before encoding (x->y->z->x in 3D, x->y->z->t->x in 4D) to diversify the
traversal patterns.

Bit-significance conventions, declared here once:
  * Z-order interleaves with x in the least significant slot of each bit
    group, then y, z, and (in 4D) t in the most significant slot.
  * Hilbert uses the transpose convention in which the first axis carries the
    most significant interleave slot.

Serialization of a voxel grid either orders each stage independently and
concatenates by stage (``spatial_3d``, batch-offset semantics) or merges all
stages and lets t participate as a coordinate axis (``spatiotemporal_4d``).
Duplicate spatial voxels from different stages are distinct keys and are never
dropped.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import VoxelGrid4D

DEFAULT_BITS_PER_AXIS = 16


class Curve(str, enum.Enum):
    Z_ORDER = "z_order"
    HILBERT = "hilbert"
    Z_ORDER_TRANS = "z_order_trans"
    HILBERT_TRANS = "hilbert_trans"


class SerializationDims(str, enum.Enum):
    SPATIAL_3D = "spatial_3d"
    SPATIOTEMPORAL_4D = "spatiotemporal_4d"


class ScheduleMix(str, enum.Enum):
    SPATIAL_ONLY = "spatial_only"
    TEMPORAL_ONLY = "temporal_only"
    MIXED = "mixed"


_TRANS_PERMS = {3: (2, 0, 1), 4: (3, 0, 1, 2)}  # axis rotation x->y->z(->t)->x


def _axis_permutation(curve: Curve, ndims: int) -> tuple[int, ...]:
    if curve in (Curve.Z_ORDER_TRANS, Curve.HILBERT_TRANS):
        return _TRANS_PERMS[ndims]
    return tuple(range(ndims))


def _check_coords(coords: np.ndarray, bits: int) -> np.ndarray:
    arr = np.asarray(coords, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ValueError(f"coords must have shape (N, 3) or (N, 4), got {arr.shape}")
    d = arr.shape[1]
    if d * bits > 64:
        raise ValueError("d * bits_per_axis must not exceed 64")
    if arr.size and (arr.min() < 0 or arr.max() >= (1 << bits)):
        raise ValueError(f"coordinate out of range [0, 2^{bits})")
    return arr.astype(np.uint64)


def _interleave(parts: np.ndarray, bits: int, slot_of_axis: Sequence[int]) -> np.ndarray:
    """Interleave bit b of axis i into rank bit b*d + slot_of_axis[i]."""
    d = parts.shape[1]
    rank = np.zeros(len(parts), dtype=np.uint64)
    for b in range(bits):
        for i in range(d):
            bit = (parts[:, i] >> np.uint64(b)) & np.uint64(1)
            rank |= bit << np.uint64(b * d + slot_of_axis[i])
    return rank


def _deinterleave(rank: np.ndarray, d: int, bits: int,
                  slot_of_axis: Sequence[int]) -> np.ndarray:
    parts = np.zeros((len(rank), d), dtype=np.uint64)
    for b in range(bits):
        for i in range(d):
            bit = (rank >> np.uint64(b * d + slot_of_axis[i])) & np.uint64(1)
            parts[:, i] |= bit << np.uint64(b)
    return parts


def _morton_encode(coords: np.ndarray, bits: int) -> np.ndarray:
    # slot i for axis i: x least significant, t (when present) most significant
    return _interleave(coords, bits, range(coords.shape[1]))


def _morton_decode(rank: np.ndarray, d: int, bits: int) -> np.ndarray:
    return _deinterleave(rank, d, bits, range(d))


def _hilbert_axes_to_transpose(X: np.ndarray, bits: int) -> np.ndarray:
    """Skilling's in-place transform from axes to Hilbert transpose form."""
    d = X.shape[1]
    Q = 1 << (bits - 1)
    while Q > 1:
        P = np.uint64(Q - 1)
        uQ = np.uint64(Q)
        for i in range(d):
            has = (X[:, i] & uQ) != 0
            X[:, 0] = np.where(has, X[:, 0] ^ P, X[:, 0])
            swap = np.where(has, np.uint64(0), (X[:, 0] ^ X[:, i]) & P)
            X[:, 0] ^= swap
            X[:, i] ^= swap
        Q >>= 1
    for i in range(1, d):
        X[:, i] ^= X[:, i - 1]
    t = np.zeros(len(X), dtype=np.uint64)
    Q = 1 << (bits - 1)
    while Q > 1:
        sel = (X[:, d - 1] & np.uint64(Q)) != 0
        t[sel] ^= np.uint64(Q - 1)
        Q >>= 1
    X ^= t[:, None]
    return X


def _hilbert_transpose_to_axes(X: np.ndarray, bits: int) -> np.ndarray:
    """Inverse of :func:`_hilbert_axes_to_transpose`."""
    d = X.shape[1]
    t = X[:, d - 1] >> np.uint64(1)
    for i in range(d - 1, 0, -1):
        X[:, i] ^= X[:, i - 1]
    X[:, 0] ^= t
    Q = 2
    while Q != (1 << bits):
        P = np.uint64(Q - 1)
        uQ = np.uint64(Q)
        for i in range(d - 1, -1, -1):
            has = (X[:, i] & uQ) != 0
            X[:, 0] = np.where(has, X[:, 0] ^ P, X[:, 0])
            swap = np.where(has, np.uint64(0), (X[:, 0] ^ X[:, i]) & P)
            X[:, 0] ^= swap
            X[:, i] ^= swap
        Q <<= 1
    return X


def _hilbert_encode(coords: np.ndarray, bits: int) -> np.ndarray:
    transpose = _hilbert_axes_to_transpose(coords.copy(), bits)
    d = transpose.shape[1]
    # transpose convention: axis 0 carries the most significant slot
    return _interleave(transpose, bits, [d - 1 - i for i in range(d)])


def _hilbert_decode(rank: np.ndarray, d: int, bits: int) -> np.ndarray:
    transpose = _deinterleave(rank, d, bits, [d - 1 - i for i in range(d)])
    return _hilbert_transpose_to_axes(transpose, bits)


def encode_keys(coords, curve: Curve | str,
                bits_per_axis: int = DEFAULT_BITS_PER_AXIS) -> np.ndarray:
    """Vectorized curve ranks for an (N, d) array of grid coordinates."""
    curve = Curve(curve)
    arr = _check_coords(coords, bits_per_axis)
    perm = _axis_permutation(curve, arr.shape[1])
    arr = arr[:, perm]
    if curve in (Curve.Z_ORDER, Curve.Z_ORDER_TRANS):
        return _morton_encode(arr, bits_per_axis)
    return _hilbert_encode(arr, bits_per_axis)


def decode_keys(ranks, curve: Curve | str, ndims: int,
                bits_per_axis: int = DEFAULT_BITS_PER_AXIS) -> np.ndarray:
    """Inverse of :func:`encode_keys`; returns (N, ndims) int64 coordinates."""
    curve = Curve(curve)
    if ndims not in (3, 4):
        raise ValueError("ndims must be 3 or 4")
    if ndims * bits_per_axis > 64:
        raise ValueError("ndims * bits_per_axis must not exceed 64")
    arr = np.asarray(ranks, dtype=np.uint64)
    limit = 1 << (ndims * bits_per_axis)
    if arr.size and limit < (1 << 64) and int(arr.max()) >= limit:
        raise ValueError("rank out of range")
    if curve in (Curve.Z_ORDER, Curve.Z_ORDER_TRANS):
        parts = _morton_decode(arr, ndims, bits_per_axis)
    else:
        parts = _hilbert_decode(arr, ndims, bits_per_axis)
    perm = _axis_permutation(curve, ndims)
    out = np.empty_like(parts)
    out[:, list(perm)] = parts
    return out.astype(np.int64)


def encode_key(coord: Sequence[int], curve: Curve | str,
               bits_per_axis: int = DEFAULT_BITS_PER_AXIS) -> int:
    """Curve rank of a single 3- or 4-tuple grid coordinate."""
    return int(encode_keys(np.asarray(coord)[None, :], curve, bits_per_axis)[0])


def decode_key(rank: int, curve: Curve | str, ndims: int,
               bits_per_axis: int = DEFAULT_BITS_PER_AXIS) -> tuple[int, ...]:
    return tuple(int(v) for v in
                 decode_keys(np.asarray([rank]), curve, ndims, bits_per_axis)[0])


@dataclass(frozen=True)
class SerializationPattern:
    """One traversal pattern: a curve plus the dimensionality it encodes."""

    curve: Curve
    dims: SerializationDims

    def __post_init__(self):
        object.__setattr__(self, "curve", Curve(self.curve))
        object.__setattr__(self, "dims", SerializationDims(self.dims))

    @property
    def ndims(self) -> int:
        return 3 if self.dims == SerializationDims.SPATIAL_3D else 4

    @property
    def axis_permutation(self) -> tuple[int, ...]:
        return _axis_permutation(self.curve, self.ndims)


def serialize_sequence(grid: VoxelGrid4D, pattern: SerializationPattern,
                       bits_per_axis: int = DEFAULT_BITS_PER_AXIS) -> np.ndarray:
    """Total order over all voxels of a grid under one pattern.

    Returns a permutation of voxel row indices. Coordinates are shifted to
    non-negative by the per-axis minimum before encoding. ``spatial_3d``
    orders each stage independently and concatenates by ascending stage;
    ``spatiotemporal_4d`` merges all stages with t as a fourth axis.
    """
    keys = grid.keys.astype(np.int64)
    shifted = keys - keys.min(axis=0)
    if shifted.max() >= (1 << bits_per_axis):
        raise ValueError(f"grid extent exceeds 2^{bits_per_axis} cells per axis")
    if pattern.dims == SerializationDims.SPATIAL_3D:
        codes = encode_keys(shifted[:, :3], pattern.curve, bits_per_axis)
        return np.lexsort((codes, shifted[:, 3]))
    codes = encode_keys(shifted, pattern.curve, bits_per_axis)
    return np.argsort(codes, kind="stable")


_SPATIAL_POOL = tuple(SerializationPattern(c, SerializationDims.SPATIAL_3D)
                      for c in Curve)
_TEMPORAL_POOL = tuple(SerializationPattern(c, SerializationDims.SPATIOTEMPORAL_4D)
                       for c in Curve)


@dataclass(frozen=True)
class PatternSchedule:
    """Per-layer pattern orderings, a pure function of (seed, layer index)."""

    layers: tuple[tuple[SerializationPattern, ...], ...]
    rng_seed: int
    mix: ScheduleMix


def make_schedule(seed: int, n_layers: int,
                  mix: ScheduleMix | str = ScheduleMix.MIXED) -> PatternSchedule:
    """Shuffle the pattern pool independently per layer.

    ``spatial_only`` layers shuffle the four 3D patterns, ``temporal_only``
    the four 4D patterns, and ``mixed`` the union of both pools.
    """
    mix = ScheduleMix(mix)
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    pool = {
        ScheduleMix.SPATIAL_ONLY: _SPATIAL_POOL,
        ScheduleMix.TEMPORAL_ONLY: _TEMPORAL_POOL,
        ScheduleMix.MIXED: _SPATIAL_POOL + _TEMPORAL_POOL,
    }[mix]
    layers = []
    for layer in range(n_layers):
        rng = np.random.default_rng((int(seed), layer))
        order = rng.permutation(len(pool))
        layers.append(tuple(pool[i] for i in order))
    return PatternSchedule(layers=tuple(layers), rng_seed=int(seed), mix=mix)
