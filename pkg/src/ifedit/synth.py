"""Seeded synthetic edit scenes: geometric shapes on textured backgrounds with
templated instructions, so the bench and ablation suites need no dataset."""

from __future__ import annotations

import numpy as np

SHAPES = ("square", "circle", "triangle")
MOVES = ("moves right", "moves up", "grows larger", "shrinks slightly", "drifts to the left")


def make_scene(seed: int, height: int = 64, width: int = 64) -> tuple[np.ndarray, str]:
    """Return (image, instruction) for one synthetic edit case."""
    rng = np.random.default_rng(np.random.SeedSequence([0x5CE4E, seed]))

    # smooth textured background: coarse noise blown up, per-channel tint
    coarse = rng.uniform(0.25, 0.75, size=(max(height // 8, 1), max(width // 8, 1)))
    tex = np.kron(coarse, np.ones((8, 8)))[:height, :width]
    tint = rng.uniform(0.6, 1.0, size=3)
    img = tex[:, :, None] * tint[None, None, :]

    shape = SHAPES[int(rng.integers(len(SHAPES)))]
    color = rng.uniform(0.0, 1.0, size=3)
    cy = int(rng.integers(height // 4, 3 * height // 4))
    cx = int(rng.integers(width // 4, 3 * width // 4))
    r = int(rng.integers(min(height, width) // 8, min(height, width) // 4))
    yy, xx = np.mgrid[0:height, 0:width]
    if shape == "square":
        mask = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    elif shape == "circle":
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    else:  # triangle: downward half of the square
        mask = (np.abs(xx - cx) <= (yy - cy + r) // 2) & (yy >= cy - r) & (yy <= cy + r)
    img[mask] = color

    move = MOVES[int(rng.integers(len(MOVES)))]
    instruction = f"the {shape} {move}"
    return np.clip(img, 0.0, 1.0).astype(np.float32), instruction
