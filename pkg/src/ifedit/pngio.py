"""PNG boundary I/O. Internal math stays in linear [0, 1] float32; values are
clamped and quantized only here, at write time."""

from __future__ import annotations

import math

import numpy as np
from PIL import Image


def load_image(path) -> np.ndarray:
    """Read an image file as float32 RGB in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_image(path, frame: np.ndarray) -> None:
    arr = np.clip(np.asarray(frame, dtype=np.float32), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(path, format="PNG")


def tile_frames(frames: np.ndarray, cols: int | None = None, pad: int = 1) -> np.ndarray:
    """Arrange (F, H, W, 3) frames into one grid image for quick inspection."""
    f, h, w, c = frames.shape
    if cols is None:
        cols = int(math.ceil(math.sqrt(f)))
    rows = int(math.ceil(f / cols))
    grid = np.ones((rows * (h + pad) - pad, cols * (w + pad) - pad, c), dtype=np.float32)
    for i in range(f):
        r, col = divmod(i, cols)
        grid[r * (h + pad):r * (h + pad) + h, col * (w + pad):col * (w + pad) + w] = frames[i]
    return grid
