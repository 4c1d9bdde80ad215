"""Denoiser backends: the backend abstraction, an analytic Gaussian-posterior
oracle, a temporally coupled variant, a remote HTTP model client, and the
two-expert wrapper that dispatches on the schedule phase.

All backends predict the clean latent x0 rather than noise, which keeps the
tau = 0 oracle and the one-step exactness arguments trivial.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import os
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dropout import ComputeLedger
from .errors import ContractError, ProtocolError, ShapeError
from .netutil import post_json_with_retries
from .scheduler import ExpertPhase, alpha, expert_for, sigma
from .tensors import TemporalMask, VideoLatent, dump_bytes, load_bytes, temporal_select

log = logging.getLogger(__name__)

_MOTION_KEY = b"ifedit-motion-v1"


@dataclass(frozen=True, eq=False)
class DenoiserInput:
    """Argument tuple of one denoiser call."""

    z_t: VideoLatent
    y: VideoLatent
    m: TemporalMask
    t: float
    prompt_embedding: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValueError(f"timestep {self.t} outside (0, 1]")
        if self.z_t.grid != self.y.grid:
            raise ShapeError(f"z grid {self.z_t.grid} != y grid {self.y.grid}")
        if self.z_t.grid != self.m.grid:
            raise ShapeError(f"z grid {self.z_t.grid} != mask grid {self.m.grid}")
        emb = np.array(self.prompt_embedding, dtype=np.float32, copy=True)
        if emb.ndim != 1:
            raise ShapeError("prompt embedding must be a flat vector")
        emb.setflags(write=False)
        object.__setattr__(self, "prompt_embedding", emb)


class DenoiserBackend(ABC):
    """Clean-latent predictor; deterministic given identical inputs."""

    descriptor: str = "backend"

    @abstractmethod
    def predict(self, inp: DenoiserInput) -> VideoLatent:
        ...

    def restrict_temporal(self, indices: Sequence[int]) -> "DenoiserBackend":
        """Return a view of this backend for a temporally subsampled run.

        Backends whose targets live elsewhere (remote servers) simply see
        shorter clips and return self.
        """
        return self


# --- analytic Gaussian-posterior oracle ----------------------------------------


@dataclass(frozen=True, eq=False)
class AnalyticSpec:
    """Target clean latent and prior spread for the closed-form oracle."""

    mu_c: VideoLatent
    tau: float

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau >= 0.0):
            raise ValueError(f"prior std must be finite and >= 0, got {self.tau}")


def motion_shifts(embedding: np.ndarray, frame_index: int, h_lat: int, w_lat: int) -> tuple[int, int]:
    """Deterministic per-frame spatial shift derived from the prompt embedding."""
    emb_bytes = np.asarray(embedding, dtype="<f4").tobytes()
    digest = hashlib.blake2b(
        emb_bytes + struct.pack("<I", frame_index), key=_MOTION_KEY, digest_size=8
    ).digest()
    a, b = struct.unpack("<II", digest)
    return a % h_lat, b % w_lat


def motion_slice(base: np.ndarray, embedding: np.ndarray, frame_index: int, motion: str) -> np.ndarray:
    """Target slice for one original frame index: base circularly shifted by a
    prompt-derived offset, or base itself under the identity program."""
    if motion not in ("prompt", "identity"):
        raise ValueError(f"unknown motion program {motion!r}")
    if frame_index == 0 or motion == "identity":
        return base
    dx, dy = motion_shifts(embedding, frame_index, base.shape[1], base.shape[2])
    return np.roll(base, (dx, dy), axis=(1, 2))


def make_motion_target(y: VideoLatent, embedding: np.ndarray, motion: str = "prompt") -> VideoLatent:
    """Build the oracle's clean latent from the conditioning.

    Slice 0 is taken from the conditioning latent; each later slice is slice 0
    circularly shifted by a prompt-derived offset ("prompt" motion) or left in
    place ("identity" motion).
    """
    base = y.data[:, 0]
    slices = [motion_slice(base, embedding, j, motion) for j in range(y.frame_count)]
    return VideoLatent(np.stack(slices, axis=1))


def analytic_predict(inp: DenoiserInput, spec: AnalyticSpec) -> VideoLatent:
    """Posterior mean of z0 ~ N(mu_c, tau^2 I) observed through z_t = a z0 + s eps.

    mu_c + (a tau^2 / (a^2 tau^2 + s^2)) (z_t - a mu_c), elementwise and
    independently per temporal slice.
    """
    if spec.mu_c.shape != inp.z_t.shape:
        raise ShapeError(f"target shape {spec.mu_c.shape} != z_t shape {inp.z_t.shape}")
    if spec.tau == 0.0:
        return spec.mu_c
    a = alpha(inp.t)
    s = sigma(inp.t)
    gain = a * spec.tau**2 / (a * a * spec.tau**2 + s * s)
    return VideoLatent(spec.mu_c.data + gain * (inp.z_t.data - a * spec.mu_c.data))


def coupled_predict(inp: DenoiserInput, spec: AnalyticSpec, lam: float) -> VideoLatent:
    """Analytic prediction followed by a temporal moving average.

    slice_j <- (1 - lam) slice_j + lam * mean(existing neighbors j-1, j+1);
    end slices average with their single neighbor. The cross-frame dependence
    is what makes temporal dropout deviate under this backend.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"coupling strength {lam} outside [0, 1)")
    base = analytic_predict(inp, spec)
    if lam == 0.0 or base.frame_count == 1:
        return base
    d = base.data
    nm = np.empty_like(d)
    nm[:, 0] = d[:, 1]
    nm[:, -1] = d[:, -2]
    if d.shape[1] > 2:
        nm[:, 1:-1] = 0.5 * (d[:, :-2] + d[:, 2:])
    return VideoLatent((1.0 - lam) * d + lam * nm)


class AnalyticDenoiser(DenoiserBackend):
    descriptor = "analytic"

    def __init__(self, spec: AnalyticSpec):
        self.spec = spec

    def predict(self, inp: DenoiserInput) -> VideoLatent:
        return analytic_predict(inp, self.spec)

    def restrict_temporal(self, indices: Sequence[int]) -> "AnalyticDenoiser":
        return type(self)(replace(self.spec, mu_c=temporal_select(self.spec.mu_c, indices)))


class CoupledDenoiser(AnalyticDenoiser):
    descriptor = "coupled"

    def __init__(self, spec: AnalyticSpec, lam: float = 0.25):
        if not 0.0 <= lam < 1.0:
            raise ValueError(f"coupling strength {lam} outside [0, 1)")
        super().__init__(spec)
        self.lam = lam

    def predict(self, inp: DenoiserInput) -> VideoLatent:
        return coupled_predict(inp, self.spec, self.lam)

    def restrict_temporal(self, indices: Sequence[int]) -> "CoupledDenoiser":
        return type(self)(
            replace(self.spec, mu_c=temporal_select(self.spec.mu_c, indices)), self.lam
        )


# --- remote model server client -------------------------------------------------


@dataclass(frozen=True)
class RemoteConfig:
    """Endpoint and retry policy; defaults read from IFEDIT_BACKEND_*."""

    base_url: str
    timeout_s: float = 10.0
    retries: int = 2
    backoff_s: float = 0.25

    @classmethod
    def from_env(cls) -> "RemoteConfig | None":
        url = os.environ.get("IFEDIT_BACKEND_URL", "").strip()
        if not url:
            return None
        timeout_ms = float(os.environ.get("IFEDIT_BACKEND_TIMEOUT_MS", "10000"))
        return cls(base_url=url, timeout_s=timeout_ms / 1000.0)


def _b64_tensor(arr: np.ndarray) -> str:
    return base64.b64encode(dump_bytes(arr)).decode("ascii")


def remote_predict(inp: DenoiserInput, cfg: RemoteConfig) -> VideoLatent:
    """POST one denoiser call to {base_url}/v1/predict and validate the reply.

    Tensors travel base64-encoded in the binary dump format, so the wire
    round-trip is bit-exact.
    """
    payload = {
        "z": _b64_tensor(inp.z_t.data),
        "y": _b64_tensor(inp.y.data),
        "m": _b64_tensor(inp.m.values),
        "t": float(inp.t),
        "emb": [float(v) for v in inp.prompt_embedding],
    }
    resp = post_json_with_retries(
        cfg.base_url.rstrip("/") + "/v1/predict",
        payload,
        timeout_s=cfg.timeout_s,
        retries=cfg.retries,
        backoff_s=cfg.backoff_s,
    )
    if resp.status_code != 200:
        raise ProtocolError(f"model server returned HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        body = resp.json()
        x0 = load_bytes(base64.b64decode(body["x0"]))
    except Exception as exc:
        raise ProtocolError(f"malformed model server response: {exc}") from exc
    if tuple(x0.shape) != inp.z_t.shape:
        raise ContractError(
            f"model server shape contract violated: expected {inp.z_t.shape}, got {tuple(x0.shape)}"
        )
    return VideoLatent(x0)


class RemoteDenoiser(DenoiserBackend):
    descriptor = "remote"

    def __init__(self, cfg: RemoteConfig):
        self.cfg = cfg

    def predict(self, inp: DenoiserInput) -> VideoLatent:
        return remote_predict(inp, self.cfg)


# --- two-expert wrapper ----------------------------------------------------------


class MoEDenoiser(DenoiserBackend):
    """Dispatches to the high-noise expert above the switch point, low below.

    When a ledger is attached, every call appends one step record with the
    phase that ran and the token count of the call.
    """

    def __init__(
        self,
        high: DenoiserBackend,
        low: DenoiserBackend,
        switch_t: float,
        ledger: ComputeLedger | None = None,
    ):
        if not 0.0 < switch_t < 1.0:
            raise ValueError(f"switch point {switch_t} outside (0, 1)")
        self.high = high
        self.low = low
        self.switch_t = switch_t
        self.ledger = ledger
        self.descriptor = f"moe({high.descriptor}|{low.descriptor})"

    def predict(self, inp: DenoiserInput) -> VideoLatent:
        phase = expert_for(inp.t, self.switch_t)
        inner = self.high if phase is ExpertPhase.HIGH_NOISE else self.low
        out = inner.predict(inp)
        if self.ledger is not None:
            _, f, h, w = inp.z_t.shape
            self.ledger.record(t=inp.t, expert=phase, frames=f, spatial_sites=h * w)
        return out

    def restrict_temporal(self, indices: Sequence[int]) -> "MoEDenoiser":
        return MoEDenoiser(
            self.high.restrict_temporal(indices),
            self.low.restrict_temporal(indices),
            self.switch_t,
            self.ledger,
        )


def moe_predict(inp: DenoiserInput, moe: MoEDenoiser) -> VideoLatent:
    return moe.predict(inp)
