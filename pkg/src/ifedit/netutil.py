"""Small HTTP helper shared by the remote denoiser and the prompt enhancer."""

from __future__ import annotations

import logging
import time
from typing import Any, Mapping

import requests

from .errors import TransportError

log = logging.getLogger(__name__)


def post_json_with_retries(
    url: str,
    payload: Mapping[str, Any],
    *,
    headers: Mapping[str, str] | None = None,
    timeout_s: float = 10.0,
    retries: int = 2,
    backoff_s: float = 0.25,
) -> requests.Response:
    """POST JSON, retrying timeouts and connection failures with exponential backoff.

    `retries` counts additional attempts after the first. Raises TransportError
    once all attempts are exhausted.
    """
    last_exc: Exception | None = None
    for attempt in range(retries + 1):
        try:
            return requests.post(url, json=payload, headers=dict(headers or {}), timeout=timeout_s)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_exc = exc
            if attempt < retries:
                delay = backoff_s * (2.0 ** attempt)
                log.warning("POST %s failed (%s), retrying in %.2fs", url, exc.__class__.__name__, delay)
                time.sleep(delay)
    raise TransportError(f"POST {url} failed after {retries + 1} attempts: {last_exc}")
