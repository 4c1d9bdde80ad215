"""Sharpness scoring, sharpest-frame selection, and the still-video
post-refinement pass.

Scoring is the mean absolute response of the 4-neighbor Laplacian after a
channel-mean grayscale conversion, with replicate padding so constant frames
score exactly zero.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .codec import CodecSpec
from .tensors import PixelVideo

log = logging.getLogger(__name__)

DEFAULT_STILL_PROMPT = "A perfectly still video that enhances image clarity and fine details"


@dataclass(frozen=True)
class SharpnessReport:
    """Per-frame blur scores plus the argmax choice (ties to the lowest index)."""

    scores: tuple[float, ...]
    selected_index: int
    selected_score: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "scores": list(self.scores),
                "selected_index": self.selected_index,
                "selected_score": self.selected_score,
            },
            indent=2,
        )


@dataclass(frozen=True)
class RefineConfig:
    """Length and step budget of the brief refinement clip."""

    still_prompt: str = DEFAULT_STILL_PROMPT
    clip_frames: int = 9
    steps: int = 4


def laplacian_score(frame: np.ndarray) -> float:
    """Mean |Laplacian| of the channel-mean grayscale frame.

    Uses the 4-neighbor kernel under replicate padding; accumulation in
    float64 keeps the score stable under content translation.
    """
    f = np.asarray(frame, dtype=np.float64)
    if f.size == 0:
        raise ValueError("cannot score an empty frame")
    if f.ndim == 3:
        g = f.mean(axis=2)
    elif f.ndim == 2:
        g = f
    else:
        raise ValueError(f"frame must be 2-D or 3-D, got {f.ndim}-D")
    padded = np.pad(g, 1, mode="edge")
    lap = (
        padded[:-2, 1:-1]
        + padded[2:, 1:-1]
        + padded[1:-1, :-2]
        + padded[1:-1, 2:]
        - 4.0 * g
    )
    return float(np.abs(lap).mean())


def select_sharpest(frames: Sequence[np.ndarray]) -> SharpnessReport:
    if len(frames) == 0:
        raise ValueError("need at least one frame to select from")
    scores = tuple(laplacian_score(f) for f in frames)
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return SharpnessReport(scores=scores, selected_index=best, selected_score=scores[best])


def candidate_frames(video: PixelVideo, spec: CodecSpec) -> list[np.ndarray]:
    """The pixel frames decoded from the final latent frame.

    For a single-latent clip that is frame 0 alone; otherwise the last q
    frames of the decoded video.
    """
    f_lat = spec.latent_frames(video.frame_count)
    if f_lat == 1:
        return [video.frames[0]]
    start = 1 + (f_lat - 2) * spec.q
    return [video.frames[i] for i in range(start, start + spec.q)]


ClipRunner = Callable[[np.ndarray, str, int, int], PixelVideo]


def refine(
    x_star: np.ndarray,
    cfg: RefineConfig,
    run_clip: ClipRunner,
) -> tuple[np.ndarray, SharpnessReport]:
    """Re-inject the selected frame as a short still video and keep the
    sharpest frame of the whole refinement clip.

    `run_clip(image, instruction, frames, steps)` is the pipeline handle; it
    must return the decoded refinement clip.
    """
    if cfg.steps < 1:
        raise ValueError(f"refinement needs >= 1 steps, got {cfg.steps}")
    if cfg.clip_frames < 1:
        raise ValueError(f"refinement clip needs >= 1 frames, got {cfg.clip_frames}")
    clip = run_clip(x_star, cfg.still_prompt, cfg.clip_frames, cfg.steps)
    report = select_sharpest(list(clip.frames))
    log.info(
        "refinement picked frame %d/%d (score %.6g)",
        report.selected_index,
        clip.frame_count,
        report.selected_score,
    )
    return clip.frames[report.selected_index], report
