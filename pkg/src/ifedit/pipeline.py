"""End-to-end edit orchestration: conditioning construction, the denoising
loop with one-shot temporal dropout, decoding, sharpest-frame selection, and
the optional still-video refinement pass.

Runs are fully deterministic: the config seed fixes the initial noise of the
main clip and of the refinement clip, and everything else is a pure function
of the request.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .backends import (
    AnalyticDenoiser,
    AnalyticSpec,
    CoupledDenoiser,
    DenoiserInput,
    MoEDenoiser,
    RemoteConfig,
    RemoteDenoiser,
    make_motion_target,
)
from .codec import CodecSpec, decode, encode
from .dropout import ComputeLedger, DenoiseState, DropoutPolicy, maybe_apply
from .errors import ConfigError, IFEditError, PipelineError
from .prompt import EnhancedPrompt, VLMConfig, bypass_prompt, embed, enhance
from .refine import RefineConfig, SharpnessReport, candidate_frames, refine, select_sharpest
from .scheduler import euler_step, make_schedule
from .tensors import PixelVideo, VideoLatent, first_frame_mask

log = logging.getLogger(__name__)

BACKENDS = ("analytic", "coupled", "remote")
MOTIONS = ("prompt", "identity")

_MAIN_NOISE_KEY = 0
_REFINE_NOISE_KEY = 1


@dataclass(frozen=True)
class EditConfig:
    frames: int = 33
    steps: int = 8
    k: int = 3
    t_threshold: float = 0.9
    switch_t: float = 0.9
    seed: int = 0
    codec: CodecSpec = CodecSpec()
    backend: str = "analytic"
    coupling: float = 0.25
    tau: float = 0.0
    motion: str = "prompt"
    enhance: bool = True
    refine: bool = True
    tld: bool = True
    refine_clip: RefineConfig = RefineConfig()
    vlm: VLMConfig | None = None
    remote: RemoteConfig | None = None
    keep_step_dumps: bool = False

    def validate(self) -> None:
        q = self.codec.q
        if self.frames < 1 or (self.frames - 1) % q != 0:
            raise ConfigError(f"frames={self.frames} must satisfy (F - 1) mod {q} == 0")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.t_threshold <= 1.0:
            raise ConfigError(f"t_threshold {self.t_threshold} outside (0, 1]")
        if not 0.0 < self.switch_t < 1.0:
            raise ConfigError(f"switch_t {self.switch_t} outside (0, 1)")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.motion not in MOTIONS:
            raise ConfigError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        if not 0.0 <= self.coupling < 1.0:
            raise ConfigError(f"coupling {self.coupling} outside [0, 1)")
        if self.tau < 0.0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        rc = self.refine_clip
        if rc.steps < 1:
            raise ConfigError(f"refinement steps must be >= 1, got {rc.steps}")
        if rc.clip_frames < 1 or (rc.clip_frames - 1) % q != 0:
            raise ConfigError(
                f"refinement clip frames={rc.clip_frames} must satisfy (F - 1) mod {q} == 0"
            )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "frames": self.frames,
            "steps": self.steps,
            "k": self.k,
            "t_threshold": self.t_threshold,
            "switch_t": self.switch_t,
            "seed": self.seed,
            "codec": {"q": self.codec.q, "p": self.codec.p},
            "backend": self.backend,
            "coupling": self.coupling,
            "tau": self.tau,
            "motion": self.motion,
            "enhance": self.enhance,
            "refine": self.refine,
            "tld": self.tld,
            "refine_clip": {
                "still_prompt": self.refine_clip.still_prompt,
                "frames": self.refine_clip.clip_frames,
                "steps": self.refine_clip.steps,
            },
        }
        if self.vlm is not None:
            d["vlm"] = {
                "url": self.vlm.url,
                "model": self.vlm.model,
                "api_key": self.vlm.api_key,
                "timeout_s": self.vlm.timeout_s,
                "retries": self.vlm.retries,
                "backoff_s": self.vlm.backoff_s,
            }
        if self.remote is not None:
            d["remote"] = {
                "base_url": self.remote.base_url,
                "timeout_s": self.remote.timeout_s,
                "retries": self.remote.retries,
                "backoff_s": self.remote.backoff_s,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EditConfig":
        known = {
            "frames", "steps", "k", "t_threshold", "switch_t", "seed", "codec",
            "backend", "coupling", "tau", "motion", "enhance", "refine", "tld",
            "refine_clip", "vlm", "remote", "keep_step_dumps",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {k: v for k, v in d.items() if k in known}
        try:
            if "codec" in kwargs:
                kwargs["codec"] = CodecSpec(**kwargs["codec"])
            if "refine_clip" in kwargs:
                rc = kwargs["refine_clip"]
                kwargs["refine_clip"] = RefineConfig(
                    still_prompt=rc.get("still_prompt", RefineConfig.still_prompt),
                    clip_frames=rc.get("frames", RefineConfig.clip_frames),
                    steps=rc.get("steps", RefineConfig.steps),
                )
            if kwargs.get("vlm") is not None:
                kwargs["vlm"] = VLMConfig(**kwargs["vlm"])
            if kwargs.get("remote") is not None:
                kwargs["remote"] = RemoteConfig(**kwargs["remote"])
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "EditConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True, eq=False)
class EditRequest:
    input_image: np.ndarray
    instruction: str
    config: EditConfig = EditConfig()

    def __post_init__(self):
        if not self.instruction:
            raise ConfigError("instruction must be non-empty")
        img = np.array(self.input_image, dtype=np.float32, copy=True)
        if img.ndim != 3 or img.shape[-1] != 3:
            raise ConfigError(f"input image must be (H, W, 3), got shape {img.shape}")
        if img.min() < 0.0 or img.max() > 1.0 or not np.isfinite(img).all():
            raise ConfigError("input image values must lie in [0, 1]")
        p = self.config.codec.p
        if img.shape[0] % p != 0 or img.shape[1] % p != 0:
            raise ConfigError(
                f"image dims {img.shape[:2]} not divisible by spatial factor {p}"
            )
        img.setflags(write=False)
        object.__setattr__(self, "input_image", img)


@dataclass(frozen=True)
class Provenance:
    """Which clip the final frame came from, and its index inside that clip."""

    clip: str
    frame_index: int


@dataclass(eq=False)
class EditResult:
    final_frame: np.ndarray
    candidates: tuple[np.ndarray, ...]
    sharpness: SharpnessReport
    refine_report: SharpnessReport | None
    provenance: Provenance
    ledger: ComputeLedger
    prompt: EnhancedPrompt
    video: PixelVideo
    step_dumps: tuple[tuple[int, float, VideoLatent], ...] | None
    duration_s: float


def _staged(phase: str, exc: Exception) -> PipelineError:
    err = PipelineError(phase, str(exc))
    err.__cause__ = exc
    return err


def _build_moe(cfg: EditConfig, y: VideoLatent, emb: np.ndarray, ledger: ComputeLedger) -> MoEDenoiser:
    if cfg.backend == "analytic":
        inner: Any = AnalyticDenoiser(AnalyticSpec(make_motion_target(y, emb, cfg.motion), cfg.tau))
    elif cfg.backend == "coupled":
        inner = CoupledDenoiser(
            AnalyticSpec(make_motion_target(y, emb, cfg.motion), cfg.tau), cfg.coupling
        )
    else:
        rc = cfg.remote or RemoteConfig.from_env()
        if rc is None:
            raise ConfigError(
                "remote backend selected but no endpoint configured (set IFEDIT_BACKEND_URL)"
            )
        inner = RemoteDenoiser(rc)
    # Toy experts share parameters; dispatch and accounting are still exercised.
    return MoEDenoiser(high=inner, low=inner, switch_t=cfg.switch_t, ledger=ledger)


def _generate_clip(
    image: np.ndarray,
    emb: np.ndarray,
    frames: int,
    steps: int,
    cfg: EditConfig,
    ledger: ComputeLedger,
    noise_key: int,
    keep_dumps: bool,
) -> tuple[PixelVideo, VideoLatent, list[tuple[int, float, VideoLatent]] | None]:
    codec = cfg.codec
    h, w = image.shape[:2]

    # pseudo-video: the observed frame followed by zero placeholders
    pseudo = np.zeros((frames, h, w, 3), dtype=np.float32)
    pseudo[0] = image
    y = encode(PixelVideo(pseudo), codec)
    f_lat, h_lat, w_lat = y.grid
    m = first_frame_mask(f_lat, h_lat, w_lat)

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, noise_key]))
    z = VideoLatent(rng.standard_normal((codec.channels, f_lat, h_lat, w_lat), dtype=np.float32))

    moe = _build_moe(cfg, y, emb, ledger)
    schedule = make_schedule(steps)
    state = DenoiseState(z, y, m, DropoutPolicy(k=cfg.k, t_threshold=cfg.t_threshold))
    dumps: list[tuple[int, float, VideoLatent]] | None = [] if keep_dumps else None
    restricted = False

    for step_idx, (t, t_next) in enumerate(schedule.pairs(), start=1):
        if cfg.tld:
            state = maybe_apply(state, t)
            if state.applied_indices is not None and not restricted:
                moe = moe.restrict_temporal(state.applied_indices)
                restricted = True
        x0_pred = moe.predict(DenoiserInput(state.z, state.y, state.m, t, emb))
        z_next = euler_step(state.z, x0_pred, t, t_next)
        state = dataclasses.replace(state, z=z_next)
        if dumps is not None:
            dumps.append((step_idx, t, z_next))

    return decode(state.z, codec), state.z, dumps


def edit(request: EditRequest) -> EditResult:
    """Run the full editing pipeline for one request."""
    cfg = request.config
    cfg.validate()
    t0 = time.perf_counter()
    ledger = ComputeLedger()

    try:
        if cfg.enhance:
            ep = enhance(request.input_image, request.instruction, cfg.vlm or VLMConfig.from_env())
        else:
            ep = bypass_prompt(request.instruction)
        emb = embed(ep.temporal_prompt)
    except IFEditError:
        raise
    except Exception as exc:
        raise _staged("enhance", exc)

    try:
        video, z_final, dumps = _generate_clip(
            request.input_image, emb, cfg.frames, cfg.steps, cfg, ledger,
            _MAIN_NOISE_KEY, cfg.keep_step_dumps,
        )
    except Exception as exc:
        raise _staged("generate", exc)

    try:
        cands = candidate_frames(video, cfg.codec)
        report = select_sharpest(cands)
        x_star = cands[report.selected_index]
        f_lat = cfg.codec.latent_frames(cfg.frames)
        cand_start = 0 if f_lat == 1 else 1 + (f_lat - 2) * cfg.codec.q
    except Exception as exc:
        raise _staged("select", exc)

    refine_report: SharpnessReport | None = None
    if cfg.refine:
        def run_clip(img: np.ndarray, instruction: str, frames: int, steps: int) -> PixelVideo:
            # refinement bypasses enhancement: the still prompt is embedded directly
            clip, _, _ = _generate_clip(
                img, embed(instruction), frames, steps, cfg, ledger,
                _REFINE_NOISE_KEY, keep_dumps=False,
            )
            return clip

        try:
            final, refine_report = refine(x_star, cfg.refine_clip, run_clip)
            provenance = Provenance("refinement", refine_report.selected_index)
        except Exception as exc:
            raise _staged("refine", exc)
    else:
        final = x_star
        provenance = Provenance("main", cand_start + report.selected_index)

    duration = time.perf_counter() - t0
    log.info(
        "edit done in %.3fs: %d ledger records, %d token-steps, output from %s frame %d",
        duration, len(ledger.records), ledger.total_token_steps,
        provenance.clip, provenance.frame_index,
    )
    return EditResult(
        final_frame=final,
        candidates=tuple(cands),
        sharpness=report,
        refine_report=refine_report,
        provenance=provenance,
        ledger=ledger,
        prompt=ep,
        video=video,
        step_dumps=tuple(dumps) if dumps is not None else None,
        duration_s=duration,
    )
