"""Prompt enhancement: turn a static edit instruction into a temporally
grounded prompt via a remote vision-language endpoint, with a deterministic
offline fallback, plus the stable text embedding the toy backends condition on.
"""

from __future__ import annotations

import base64
import hashlib
import io
import logging
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .netutil import post_json_with_retries

log = logging.getLogger(__name__)

EMBEDDING_DIM = 64

REASONING_MARKER = "REASONING:"
PROMPT_MARKER = "PROMPT:"

# Stand-in instruction template; override via VLMConfig.system_prompt.
DEFAULT_SYSTEM_PROMPT = (
    "You rewrite image-editing instructions as short video captions. Look at the "
    "attached image and the instruction, reason about how the scene would have to "
    "evolve over time for the edit to come true: what moves, appears, or "
    "transforms, in what order, while everything else keeps its identity and the "
    "camera stays put. Then write one caption describing that evolution from the "
    "first frame to the final edited frame.\n"
    "Answer in exactly this form:\n"
    f"{REASONING_MARKER} <your step-by-step visual reasoning>\n"
    f"{PROMPT_MARKER} <one-paragraph temporally grounded caption>"
)

FALLBACK_REASONING = "(offline fallback: no vision-language endpoint was used)"
BYPASS_REASONING = "(enhancement bypassed: raw instruction passed through)"


class PromptSource(Enum):
    REMOTE = "remote"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class EnhancedPrompt:
    original: str
    reasoning: str
    temporal_prompt: str
    source: PromptSource

    def __post_init__(self):
        if not self.temporal_prompt:
            raise ValueError("temporal_prompt must be non-empty")


@dataclass(frozen=True)
class VLMConfig:
    """Chat-completions endpoint settings; read from IFEDIT_VLM_* by default."""

    url: str
    model: str = "default"
    api_key: str = ""
    timeout_s: float = 10.0
    retries: int = 2
    backoff_s: float = 0.25
    system_prompt: str = DEFAULT_SYSTEM_PROMPT

    @classmethod
    def from_env(cls) -> "VLMConfig | None":
        url = os.environ.get("IFEDIT_VLM_URL", "").strip()
        if not url:
            return None
        return cls(
            url=url,
            model=os.environ.get("IFEDIT_VLM_MODEL", "default"),
            api_key=os.environ.get("IFEDIT_VLM_KEY", ""),
        )


def fallback_prompt(instruction: str) -> EnhancedPrompt:
    """Deterministic template used whenever no endpoint answers."""
    temporal = (
        "The scene evolves continuously over time: "
        + instruction
        + " The camera and unrelated scene elements remain unchanged throughout."
    )
    return EnhancedPrompt(instruction, FALLBACK_REASONING, temporal, PromptSource.FALLBACK)


def bypass_prompt(instruction: str) -> EnhancedPrompt:
    """No-enhancement path: the raw instruction goes straight to embedding."""
    return EnhancedPrompt(instruction, BYPASS_REASONING, instruction, PromptSource.FALLBACK)


def _image_data_url(image: np.ndarray) -> str:
    from PIL import Image

    arr = np.clip(np.asarray(image, dtype=np.float32), 0.0, 1.0)
    buf = io.BytesIO()
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def _parse_delimited(content: str) -> tuple[str, str]:
    r_at = content.find(REASONING_MARKER)
    p_at = content.find(PROMPT_MARKER)
    if r_at < 0 or p_at < 0 or p_at < r_at:
        raise ValueError("response missing REASONING:/PROMPT: sections")
    reasoning = content[r_at + len(REASONING_MARKER):p_at].strip()
    temporal = content[p_at + len(PROMPT_MARKER):].strip()
    if not temporal:
        raise ValueError("response has an empty PROMPT: section")
    return reasoning, temporal


def enhance(image: np.ndarray, instruction: str, cfg: VLMConfig | None = None) -> EnhancedPrompt:
    """Total enhancement: never fails, falling back to the offline template.

    With an endpoint configured, sends a chat-completions request carrying the
    image as a base64 data URL and parses the delimited reply; any transport or
    parse problem downgrades to the fallback and is logged.
    """
    if not instruction:
        raise ValueError("instruction must be non-empty")
    if cfg is None or not cfg.url:
        return fallback_prompt(instruction)
    payload = {
        "model": cfg.model,
        "messages": [
            {"role": "system", "content": cfg.system_prompt},
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": instruction},
                    {"type": "image_url", "image_url": {"url": _image_data_url(image)}},
                ],
            },
        ],
    }
    headers = {}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    try:
        resp = post_json_with_retries(
            cfg.url.rstrip("/") + "/v1/chat/completions",
            payload,
            headers=headers,
            timeout_s=cfg.timeout_s,
            retries=cfg.retries,
            backoff_s=cfg.backoff_s,
        )
        if resp.status_code != 200:
            raise ValueError(f"endpoint returned HTTP {resp.status_code}")
        content = resp.json()["choices"][0]["message"]["content"]
        reasoning, temporal = _parse_delimited(str(content))
    except Exception as exc:  # fallback guarantees a result
        log.warning("prompt enhancement failed (%s); using fallback", exc)
        return fallback_prompt(instruction)
    return EnhancedPrompt(instruction, reasoning, temporal, PromptSource.REMOTE)


def embed(temporal_prompt: str) -> np.ndarray:
    """Stable 64-dim embedding of the prompt text, each coordinate in [-1, 1].

    Built from SHAKE-256 so identical text gives identical vectors across runs
    and platforms; no learned components.
    """
    if not temporal_prompt:
        raise ValueError("cannot embed empty text")
    digest = hashlib.shake_256(temporal_prompt.encode("utf-8")).digest(EMBEDDING_DIM * 8)
    words = np.frombuffer(digest, dtype="<u8").astype(np.float64)
    return (words / float(2**64) * 2.0 - 1.0).astype(np.float32)
