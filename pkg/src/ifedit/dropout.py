"""One-shot temporal latent dropout and the compute accounting around it.

Once the denoising trajectory crosses the trigger threshold, the latent, the
conditioning, and the mask are subsampled jointly along the temporal axis with
stride K, keeping slice 0 and the final slice. The ledger counts
latent-frames x spatial-sites per denoiser call, the quantity proportional to
transformer sequence length, so the cost reduction can be asserted exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

from .scheduler import ExpertPhase, make_schedule
from .tensors import TemporalMask, VideoLatent, select_mask, temporal_select


@dataclass(frozen=True)
class DropoutPolicy:
    """Stride K, trigger threshold, and the one-shot flag.

    K = 1 makes the subsampling an identity; `applied` flips false -> true at
    most once per run.
    """

    k: int = 3
    t_threshold: float = 0.9
    applied: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"stride must be >= 1, got {self.k}")
        if not 0.0 < self.t_threshold <= 1.0:
            raise ValueError(f"trigger threshold {self.t_threshold} outside (0, 1]")


@dataclass(frozen=True)
class DenoiseState:
    """Per-run denoising state the dropout operator rewrites in one shot."""

    z: VideoLatent
    y: VideoLatent
    m: TemporalMask
    policy: DropoutPolicy
    applied_indices: tuple[int, ...] | None = None


def dropout_indices(f_lat: int, k: int) -> tuple[int, ...]:
    """Retained temporal indices: the stride-K grid plus the final slice.

    Slice 0 anchors global layout and the last slice carries the edit target,
    so both always survive.
    """
    if f_lat < 1:
        raise ValueError(f"frame count must be >= 1, got {f_lat}")
    if k < 1:
        raise ValueError(f"stride must be >= 1, got {k}")
    kept = set(range(0, f_lat, k))
    kept.add(f_lat - 1)
    return tuple(sorted(kept))


def maybe_apply(state: DenoiseState, t: float) -> DenoiseState:
    """Subsample z, y, and m jointly once t falls to or below the threshold.

    A no-op above the threshold or after the one-shot flag has flipped.
    """
    if state.policy.applied or t > state.policy.t_threshold:
        return state
    idx = dropout_indices(state.z.frame_count, state.policy.k)
    return DenoiseState(
        z=temporal_select(state.z, idx),
        y=temporal_select(state.y, idx),
        m=select_mask(state.m, idx),
        policy=replace(state.policy, applied=True),
        applied_indices=idx,
    )


def predicted_token_steps(
    f_lat: int,
    n_steps: int,
    t_threshold: float,
    k: int,
    h_lat: int,
    w_lat: int,
) -> tuple[int, int]:
    """(baseline, reduced) token-step totals for one denoising loop.

    baseline runs every step at full temporal length; reduced counts the steps
    before the trigger at full length and the rest at the retained-slice count.
    """
    sites = h_lat * w_lat
    baseline = n_steps * f_lat * sites
    n_pre = sum(1 for t in make_schedule(n_steps).times if t > t_threshold)
    kept = len(dropout_indices(f_lat, k))
    reduced = n_pre * f_lat * sites + (n_steps - n_pre) * kept * sites
    return baseline, reduced


@dataclass(frozen=True)
class LedgerRecord:
    step: int
    t: float
    expert: ExpertPhase
    frames: int
    spatial_sites: int

    @property
    def token_steps(self) -> int:
        return self.frames * self.spatial_sites


@dataclass
class ComputeLedger:
    """Append-only per-step compute record for a single pipeline run."""

    records: list[LedgerRecord] = field(default_factory=list)

    def record(self, t: float, expert: ExpertPhase, frames: int, spatial_sites: int) -> LedgerRecord:
        rec = LedgerRecord(len(self.records) + 1, t, expert, frames, spatial_sites)
        self.records.append(rec)
        return rec

    @property
    def total_token_steps(self) -> int:
        return sum(r.token_steps for r in self.records)

    def expert_sequence(self) -> list[ExpertPhase]:
        return [r.expert for r in self.records]

    def segments(self) -> list[list[LedgerRecord]]:
        """Split records at points where t jumps back up (a nested run started)."""
        out: list[list[LedgerRecord]] = []
        for rec in self.records:
            if not out or rec.t > out[-1][-1].t:
                out.append([rec])
            else:
                out[-1].append(rec)
        return out

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "t", "expert", "frames", "token_steps"])
        for r in self.records:
            writer.writerow([r.step, r.t, r.expert.value, r.frames, r.token_steps])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())
