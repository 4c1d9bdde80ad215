"""Deterministic, exactly invertible toy 3D video codec.

Stands in for a learned video autoencoder while preserving the structural
property that matters to the pipeline: one latent frame decodes into a group
of q pixel frames (latent frame 0 carries pixel frame 0 alone). The transform
is a space-to-channel rearrangement followed by a fixed orthonormal mixing
matrix per spatial site, so encode/decode round-trips are exact up to float32
rounding and temporal groups never leak into each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ShapeError
from .tensors import PixelVideo, VideoLatent

_BASIS_SEED = 0x1FED


@dataclass(frozen=True)
class CodecSpec:
    """Compression factors: q pixel frames per latent frame, p per spatial axis."""

    q: int = 4
    p: int = 2

    def __post_init__(self):
        if self.q < 1 or self.p < 1:
            raise ValueError(f"compression factors must be >= 1, got q={self.q} p={self.p}")

    @property
    def channels(self) -> int:
        return 3 * self.q * self.p * self.p

    def latent_frames(self, pixel_frames: int) -> int:
        if pixel_frames < 1 or (pixel_frames - 1) % self.q != 0:
            raise ShapeError(
                f"temporal axis: frame count {pixel_frames} must satisfy (F - 1) mod {self.q} == 0"
            )
        return 1 + (pixel_frames - 1) // self.q

    def pixel_frames(self, latent_frames: int) -> int:
        return 1 + (latent_frames - 1) * self.q


@lru_cache(maxsize=None)
def _basis(c: int) -> np.ndarray:
    """Fixed orthonormal C x C mixing matrix, float64."""
    rng = np.random.default_rng(_BASIS_SEED + c)
    g = rng.standard_normal((c, c))
    q_mat, r = np.linalg.qr(g)
    # Fix column signs so the decomposition is unique.
    return q_mat * np.sign(np.diag(r))


def _check_spatial(h: int, w: int, p: int) -> None:
    if h % p != 0:
        raise ShapeError(f"height axis: {h} not divisible by spatial factor {p}")
    if w % p != 0:
        raise ShapeError(f"width axis: {w} not divisible by spatial factor {p}")


def encode(x: PixelVideo, spec: CodecSpec) -> VideoLatent:
    """Group frames temporally, fold p x p spatial blocks into channels, mix.

    Latent frame 0 encodes pixel frame 0 alone (the rest of its temporal group
    is zero-padded); latent frame j >= 1 encodes pixel frames
    [1 + (j-1)q, 1 + jq).
    """
    f, h, w = x.frame_count, x.height, x.width
    f_lat = spec.latent_frames(f)
    _check_spatial(h, w, spec.p)
    q, p = spec.q, spec.p
    h_lat, w_lat = h // p, w // p

    groups = np.zeros((f_lat, q, h, w, 3), dtype=np.float32)
    groups[0, 0] = x.frames[0]
    if f_lat > 1:
        groups[1:] = x.frames[1:].reshape(f_lat - 1, q, h, w, 3)

    # (f_lat, q, h_lat, p, w_lat, p, 3) -> channel order (q, color, p_i, p_j)
    folded = groups.reshape(f_lat, q, h_lat, p, w_lat, p, 3)
    folded = folded.transpose(0, 1, 6, 3, 5, 2, 4)
    folded = folded.reshape(f_lat, spec.channels, h_lat, w_lat)

    mixed = np.einsum("ij,fjhw->ifhw", _basis(spec.channels), folded.astype(np.float64))
    return VideoLatent(mixed.astype(np.float32))


def decode(z: VideoLatent, spec: CodecSpec) -> PixelVideo:
    """Exact inverse of :func:`encode` up to float32 rounding.

    Output values are not clamped here; clamping happens only when frames are
    written to disk.
    """
    if z.channels != spec.channels:
        raise ShapeError(
            f"channel axis: latent has {z.channels} channels, codec expects {spec.channels}"
        )
    f_lat, h_lat, w_lat = z.grid
    q, p = spec.q, spec.p

    folded = np.einsum("ij,ifhw->fjhw", _basis(spec.channels), z.data.astype(np.float64))
    folded = folded.reshape(f_lat, q, 3, p, p, h_lat, w_lat)
    groups = folded.transpose(0, 1, 5, 3, 6, 4, 2)  # (f_lat, q, h_lat, p, w_lat, p, 3)
    groups = groups.reshape(f_lat, q, h_lat * p, w_lat * p, 3).astype(np.float32)

    f = spec.pixel_frames(f_lat)
    frames = np.empty((f, h_lat * p, w_lat * p, 3), dtype=np.float32)
    frames[0] = groups[0, 0]  # zero-padded tail of group 0 is discarded
    if f_lat > 1:
        frames[1:] = groups[1:].reshape(f - 1, h_lat * p, w_lat * p, 3)
    return PixelVideo(frames)
