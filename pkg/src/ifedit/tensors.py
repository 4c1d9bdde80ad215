"""Core tensor types and the shape-level operations everything else builds on.

All tensors use float32 in row-major (C, F, H, W) layout so that bit-identical
assertions are meaningful across runs. Instances are immutable after
construction (the wrapped arrays are marked read-only) and safe to share
between threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeError

IFED_MAGIC = b"IFED"
IFED_VERSION = 1

_AXIS_NAMES = ("temporal", "height", "width")


def _frozen_f32(data, ndim: int, what: str) -> np.ndarray:
    arr = np.array(data, dtype=np.float32, order="C", copy=True)
    if arr.ndim != ndim:
        raise ShapeError(f"{what} must be {ndim}-D, got {arr.ndim}-D")
    if arr.size == 0:
        raise ShapeError(f"{what} has an empty axis: shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{what} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PixelVideo:
    """A frame sequence in pixel space, shape (F, H, W, 3).

    Values live in [0, 1] at the input/output boundary of the pipeline;
    intermediate decodes of noisy latents may exceed that range and are
    clamped only when written to disk.
    """

    frames: np.ndarray

    def __post_init__(self):
        arr = _frozen_f32(self.frames, 4, "PixelVideo")
        if arr.shape[-1] != 3:
            raise ShapeError(f"PixelVideo needs 3 color channels, got {arr.shape[-1]}")
        object.__setattr__(self, "frames", arr)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True, eq=False)
class VideoLatent:
    """A 4-D latent tensor, dims (C, F_lat, H_lat, W_lat)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_f32(self.data, 4, "VideoLatent"))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def frame_count(self) -> int:
        return self.data.shape[1]

    @property
    def grid(self) -> tuple[int, int, int]:
        """The (F_lat, H_lat, W_lat) grid shared with masks and co-latents."""
        return self.data.shape[1:]


@dataclass(frozen=True, eq=False)
class TemporalMask:
    """Binary observation mask, shape (F_lat, H_lat, W_lat).

    Slice 0 marks the observed conditioning frame (all ones); every other
    temporal slice is all zeros. Subsampling always retains slice 0, so the
    invariant survives dropout.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_f32(self.values, 3, "TemporalMask")
        if not np.isin(arr, (0.0, 1.0)).all():
            raise ValueError("TemporalMask entries must be 0 or 1")
        if not (arr[0] == 1.0).all():
            raise ValueError("TemporalMask slice 0 must be all ones")
        if arr.shape[0] > 1 and not (arr[1:] == 0.0).all():
            raise ValueError("TemporalMask slices past 0 must be all zeros")
        object.__setattr__(self, "values", arr)

    @property
    def grid(self) -> tuple[int, int, int]:
        return self.values.shape


def first_frame_mask(f_lat: int, h_lat: int, w_lat: int) -> TemporalMask:
    """Canonical mask: slice 0 observed, the rest unobserved."""
    values = np.zeros((f_lat, h_lat, w_lat), dtype=np.float32)
    values[0] = 1.0
    return TemporalMask(values)


def _check_same_grid(a: tuple[int, ...], b: tuple[int, ...], left: str, right: str) -> None:
    for name, da, db in zip(_AXIS_NAMES, a, b):
        if da != db:
            raise ShapeError(
                f"{left} and {right} disagree on the {name} axis: {da} vs {db}"
            )


def concat_channels(z: VideoLatent, y: VideoLatent, m: TemporalMask) -> VideoLatent:
    """Stack [z | y | m] along the channel dimension.

    The mask contributes a single broadcast channel. No values are modified.
    """
    _check_same_grid(z.grid, y.grid, "z", "y")
    _check_same_grid(z.grid, m.grid, "z", "m")
    return VideoLatent(np.concatenate([z.data, y.data, m.values[None]], axis=0))


def _checked_indices(indices: Sequence[int], f_lat: int) -> list[int]:
    idx = [int(i) for i in indices]
    if not idx:
        raise ValueError("index list must be non-empty")
    for i in idx:
        if i < 0 or i >= f_lat:
            raise IndexError(f"temporal index {i} out of range for {f_lat} frames")
    for a, b in zip(idx, idx[1:]):
        if b <= a:
            raise ValueError(f"indices must be strictly increasing, got {a} before {b}")
    return idx


def temporal_select(x: VideoLatent, indices: Sequence[int]) -> VideoLatent:
    """Keep only the listed temporal slices, bit-for-bit, in order."""
    idx = _checked_indices(indices, x.frame_count)
    return VideoLatent(x.data[:, idx])


def select_mask(m: TemporalMask, indices: Sequence[int]) -> TemporalMask:
    """Temporal selection for masks; index 0 must be retained."""
    idx = _checked_indices(indices, m.values.shape[0])
    return TemporalMask(m.values[idx])


# --- binary tensor dump format ------------------------------------------------
#
# magic "IFED", version u32 LE, ndims u32 LE, dims as u32 LE list, payload as
# little-endian float32, row-major. Round-trips must be bit-exact.


def dump_bytes(arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(arr, dtype="<f4")
    header = IFED_MAGIC + struct.pack("<II", IFED_VERSION, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + a.tobytes()


def load_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 12 or buf[:4] != IFED_MAGIC:
        raise ValueError("not an IFED tensor blob (bad magic)")
    version, ndim = struct.unpack_from("<II", buf, 4)
    if version != IFED_VERSION:
        raise ValueError(f"unsupported IFED version {version}")
    offset = 12
    if len(buf) < offset + 4 * ndim:
        raise ValueError("truncated IFED header")
    dims = struct.unpack_from(f"<{ndim}I", buf, offset)
    offset += 4 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload = buf[offset:]
    if len(payload) != 4 * count:
        raise ValueError(
            f"IFED payload size mismatch: expected {4 * count} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32, copy=True)


def write_ifed(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_bytes(arr))


def read_ifed(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return load_bytes(fh.read())
