"""Loopback HTTP stubs for the model-server and chat-completions protocols.

Used by the test suite and the demo script to exercise the remote code paths
without any production model. The model stub can mirror the in-process
analytic backend bit-for-bit, including runs where the client subsampled the
temporal axis, provided it is configured with the same dropout policy.
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .backends import AnalyticSpec, DenoiserInput, analytic_predict, motion_slice
from .dropout import dropout_indices
from .tensors import TemporalMask, VideoLatent, dump_bytes, load_bytes

Route = Callable[[dict], tuple[int, Any]]


class _Handler(BaseHTTPRequestHandler):
    server_version = "ifedit-stub"

    def log_message(self, *args):  # keep test output quiet
        pass

    def do_POST(self):
        routes: Mapping[str, Route] = getattr(self.server, "routes", {})
        route = routes.get(self.path)
        if route is None:
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            status, payload = route(json.loads(raw.decode("utf-8")))
        except Exception as exc:
            status, payload = 500, {"error": str(exc)}
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class StubHTTPServer:
    """Threaded localhost server mapping POST paths to route callables."""

    def __init__(self, routes: Mapping[str, Route]):
        self.routes = dict(routes)
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        assert self._server is not None, "server not started"
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubHTTPServer":
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self._server.routes = self.routes  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        self._server = None
        self._thread = None

    def __enter__(self) -> "StubHTTPServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


PredictFn = Callable[[np.ndarray, np.ndarray, np.ndarray, float, np.ndarray], np.ndarray]


def _predict_route(fn: PredictFn) -> Route:
    def route(payload: dict) -> tuple[int, Any]:
        z = load_bytes(base64.b64decode(payload["z"]))
        y = load_bytes(base64.b64decode(payload["y"]))
        m = load_bytes(base64.b64decode(payload["m"]))
        t = float(payload["t"])
        emb = np.asarray(payload["emb"], dtype=np.float32)
        x0 = fn(z, y, m, t, emb)
        return 200, {"x0": base64.b64encode(dump_bytes(np.asarray(x0))).decode("ascii")}

    return route


def model_server(fn: PredictFn) -> StubHTTPServer:
    """Stub implementing POST /v1/predict around an arbitrary predictor."""
    return StubHTTPServer({"/v1/predict": _predict_route(fn)})


def chat_server(content_fn: Callable[[dict], str]) -> StubHTTPServer:
    """Stub implementing POST /v1/chat/completions with a fixture reply."""

    def route(payload: dict) -> tuple[int, Any]:
        return 200, {"choices": [{"message": {"content": content_fn(payload)}}]}

    return StubHTTPServer({"/v1/chat/completions": route})


def analytic_stub_fn(
    tau: float,
    motion: str = "prompt",
    k: int = 3,
    full_sizes: Sequence[int] = (9, 3),
) -> PredictFn:
    """Server-side analytic predictor matching the in-process backend.

    The clean-latent target is rebuilt per request from the received
    conditioning and embedding. When the request carries fewer temporal slices
    than any configured full size, the retained original indices are recovered
    from the dropout policy (stride k), which keeps the per-frame motion
    aligned with a client that subsampled mid-run.
    """

    def resolve_indices(f_received: int) -> list[int]:
        if f_received in full_sizes:
            return list(range(f_received))
        for full in full_sizes:
            idx = dropout_indices(full, k)
            if len(idx) == f_received:
                return list(idx)
        return list(range(f_received))

    def fn(z: np.ndarray, y: np.ndarray, m: np.ndarray, t: float, emb: np.ndarray) -> np.ndarray:
        f_lat, h_lat, w_lat = z.shape[1:]
        base = y[:, 0]
        orig = resolve_indices(f_lat)
        mu = np.stack([motion_slice(base, emb, j, motion) for j in orig], axis=1)
        inp = DenoiserInput(VideoLatent(z), VideoLatent(y), TemporalMask(m), t, emb)
        return analytic_predict(inp, AnalyticSpec(VideoLatent(mu), tau)).data

    return fn
