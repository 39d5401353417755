"""Low-latency selection server and its JSON facade.

The binary protocol is built for a policy process that produces a fresh
population every control step: one TCP connection, one length-prefixed
request frame per step, one length-prefixed JSON reply. Frames embed the
population in the exact file-format layout so a single parser serves disk
and wire. A small HTTP facade exposes the same scoring over JSON for
browser clients, which never parse the binary format.
"""

from __future__ import annotations

import json
import mimetypes
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .density import DensityReport, Method, select
from .errors import FormatError, KdpeError
from .heatmap import HeatmapRequest, evaluate_heatmap
from .kernel import DEFAULT_BANDWIDTHS, Bandwidths
from .population import (Population, fig1_population, population_from_bytes,
                         population_from_json_dict, population_to_bytes,
                         population_to_json_dict)

DEFAULT_PORT = 7007
DEFAULT_MAX_FRAME = 64 * 1024 * 1024  # bytes, applies to one framed request

_METHOD_CODES = {0: Method.KDPE, 1: Method.KDPE_OOD, 2: Method.UNIFORM,
                 3: Method.TR_KDPE}
_CODE_FOR_METHOD = {m: c for c, m in _METHOD_CODES.items()}

# request id u64 | method u8 | scored step i32 (-1 = default) | seed u64 |
# sigma_pos f64 | sigma_rot f64 | sigma_grip f64, then the population bytes.
_FRAME_HEAD = struct.Struct("<QBiQddd")


@dataclass(frozen=True)
class SelectionRequestFrame:
    """One decoded selection request."""

    request_id: int
    method: Method
    step: int | None
    seed: int
    bandwidths: Bandwidths
    population: Population


def encode_frame(pop: Population, method: Method = Method.KDPE,
                 step: int | None = None, h: Bandwidths = DEFAULT_BANDWIDTHS,
                 seed: int = 0, request_id: int = 0) -> bytes:
    """Frame bytes for one request (without the length prefix)."""
    head = _FRAME_HEAD.pack(request_id, _CODE_FOR_METHOD[method],
                            -1 if step is None else step, seed,
                            h.sigma_pos, h.sigma_rot, h.sigma_grip)
    return head + population_to_bytes(pop)


def parse_frame(frame: bytes) -> SelectionRequestFrame:
    """Decode one frame; FormatError on anything malformed."""
    if len(frame) < _FRAME_HEAD.size:
        raise FormatError(f"frame shorter than {_FRAME_HEAD.size} byte header")
    rid, code, step, seed, spos, srot, sgrip = _FRAME_HEAD.unpack_from(frame, 0)
    method = _METHOD_CODES.get(code)
    if method is None:
        raise FormatError(f"unknown method code {code}")
    if step < -1:
        raise FormatError(f"bad scored step {step}")
    try:
        h = Bandwidths(sigma_pos=spos, sigma_rot=srot, sigma_grip=sgrip)
    except ValueError as e:
        raise FormatError(str(e)) from e
    pop = population_from_bytes(frame[_FRAME_HEAD.size:])
    return SelectionRequestFrame(request_id=rid, method=method,
                                 step=None if step == -1 else step,
                                 seed=seed, bandwidths=h, population=pop)


def run_request(req: SelectionRequestFrame) -> DensityReport:
    return select(req.population, req.method, step=req.step,
                  h=req.bandwidths, seed=req.seed)


def _encode_reply(doc: dict) -> bytes:
    data = json.dumps(doc, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(data)) + data


class _Handler(socketserver.StreamRequestHandler):
    """One connection: length-prefixed frames served strictly in order."""

    def handle(self):
        while True:
            head = self.rfile.read(4)
            if len(head) < 4:
                return
            (length,) = struct.unpack("<I", head)
            if length > self.server.max_frame:
                self._reply(0, error={"type": "FormatError",
                                      "message": f"frame of {length} bytes "
                                      f"exceeds cap {self.server.max_frame}"})
                return  # oversize closes the connection
            frame = self.rfile.read(length)
            if len(frame) < length:
                return
            self._serve_frame(frame)

    def _serve_frame(self, frame: bytes):
        # The id is echoed even for malformed frames when the first 8 bytes
        # exist; completely unparseable frames get id 0.
        rid = struct.unpack_from("<Q", frame, 0)[0] if len(frame) >= 8 else 0
        try:
            req = parse_frame(frame)
            report = run_request(req)
        except (KdpeError, ValueError) as e:
            self._reply(rid, error={"type": type(e).__name__, "message": str(e)})
            return
        except Exception as e:  # malformed input must never kill the server
            self._reply(rid, error={"type": "InternalError", "message": str(e)})
            return
        self._reply(req.request_id, report=report.to_dict())

    def _reply(self, rid: int, report: dict | None = None,
               error: dict | None = None):
        doc = {"request_id": rid, "ok": error is None}
        if report is not None:
            doc["report"] = report
        if error is not None:
            doc["error"] = error
        try:
            self.wfile.write(_encode_reply(doc))
        except OSError:
            pass  # peer went away; the connection loop will wind down


class SelectionServer(socketserver.ThreadingTCPServer):
    """Concurrent connections, in-order frames within each."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int] = ("127.0.0.1", DEFAULT_PORT),
                 max_frame: int = DEFAULT_MAX_FRAME):
        super().__init__(address, _Handler)
        self.max_frame = max_frame

    @property
    def port(self) -> int:
        return self.server_address[1]

    def serve_background(self) -> threading.Thread:
        thread = threading.Thread(
            target=lambda: self.serve_forever(poll_interval=0.05), daemon=True)
        thread.start()
        return thread


class SelectionClient:
    """Blocking client for the binary protocol; one reply per request."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 timeout: float | None = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rb")
        self._next_id = 1

    def request(self, pop: Population, method: Method = Method.KDPE,
                step: int | None = None, h: Bandwidths = DEFAULT_BANDWIDTHS,
                seed: int = 0, request_id: int | None = None) -> dict:
        if request_id is None:
            request_id = self._next_id
            self._next_id += 1
        frame = encode_frame(pop, method, step, h, seed, request_id)
        self.send_raw(frame)
        return self.read_reply()

    def send_raw(self, frame: bytes):
        self._sock.sendall(struct.pack("<I", len(frame)) + frame)

    def read_reply(self) -> dict:
        head = self._file.read(4)
        if len(head) < 4:
            raise ConnectionError("server closed the connection")
        (length,) = struct.unpack("<I", head)
        data = self._file.read(length)
        if len(data) < length:
            raise ConnectionError("truncated reply")
        return json.loads(data.decode("utf-8"))

    def close(self):
        try:
            self._file.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


# ---------------------------------------------------------------------------
# HTTP JSON facade (browser clients)
# ---------------------------------------------------------------------------

def _parse_bandwidths(doc) -> Bandwidths:
    if doc is None:
        return DEFAULT_BANDWIDTHS
    return Bandwidths.from_dict(doc)


def _api_select(body: dict) -> dict:
    pop = population_from_json_dict(body["population"])
    method = Method.parse(body.get("method", "kdpe"))
    step = body.get("step")
    h = _parse_bandwidths(body.get("bandwidths"))
    seed = int(body.get("seed", 0))
    start = time.perf_counter()
    report = select(pop, method, step=step, h=h, seed=seed)
    elapsed_ms = (time.perf_counter() - start) * 1e3
    return {"ok": True, "report": report.to_dict(), "elapsed_ms": elapsed_ms}


def _api_heatmap(body: dict) -> dict:
    pop = population_from_json_dict(body["population"])
    fields = dict(body.get("request", {}))
    if "bandwidths" in fields:
        fields["bandwidths"] = _parse_bandwidths(fields["bandwidths"])
    req = HeatmapRequest(**fields)
    start = time.perf_counter()
    result = evaluate_heatmap(pop, req)
    result["ok"] = True
    result["elapsed_ms"] = (time.perf_counter() - start) * 1e3
    return result


class _FacadeHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass  # quiet by default; the CLI prints the bind address once

    def _send_json(self, doc: dict, status: int = 200):
        data = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self._cors()
        self.end_headers()
        self.wfile.write(data)

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        if self.path == "/api/fig1":
            self._send_json({"ok": True,
                             "population": population_to_json_dict(fig1_population())})
        elif self.path == "/api/health":
            self._send_json({"ok": True})
        elif self.server.static_root is not None:
            self._send_static()
        else:
            self._send_json({"ok": False,
                             "error": {"type": "NotFound",
                                       "message": self.path}}, 404)

    def _send_static(self):
        rel = self.path.split("?", 1)[0].lstrip("/") or "index.html"
        root = self.server.static_root
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            self._send_json({"ok": False, "error": {"type": "NotFound",
                                                    "message": self.path}}, 404)
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_json({"ok": False, "error": {"type": "NotFound",
                                                    "message": self.path}}, 404)
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        data = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self._cors()
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        if length > self.server.max_body:
            self._send_json({"ok": False,
                             "error": {"type": "FormatError",
                                       "message": "request body too large"}}, 413)
            return
        try:
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            if self.path == "/api/select":
                self._send_json(_api_select(body))
            elif self.path == "/api/heatmap":
                self._send_json(_api_heatmap(body))
            else:
                self._send_json({"ok": False,
                                 "error": {"type": "NotFound",
                                           "message": self.path}}, 404)
        except (KdpeError, ValueError, KeyError, TypeError,
                json.JSONDecodeError) as e:
            self._send_json({"ok": False,
                             "error": {"type": type(e).__name__,
                                       "message": str(e)}}, 400)


class FacadeServer(ThreadingHTTPServer):
    """JSON-over-HTTP mirror of the binary protocol, plus static files."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int],
                 static_dir: str | Path | None = None,
                 max_body: int = DEFAULT_MAX_FRAME):
        super().__init__(address, _FacadeHandler)
        self.static_root = Path(static_dir).resolve() if static_dir else None
        self.max_body = max_body

    @property
    def port(self) -> int:
        return self.server_address[1]

    def serve_background(self) -> threading.Thread:
        thread = threading.Thread(
            target=lambda: self.serve_forever(poll_interval=0.05), daemon=True)
        thread.start()
        return thread
