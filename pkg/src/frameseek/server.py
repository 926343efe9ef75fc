"""Networked frame store speaking newline-delimited JSON over TCP.

One JSON object per line in each direction; one connection is one session.
Requests:

    {"op": "meta", "video": id}              -> {"ok": true, "frames": T}
    {"op": "frame", "video": id, "index": n} -> {"ok": true, "index": n, "score": s}
    {"op": "stats"}                          -> {"ok": true, "requests": {...}, "total": n}
    {"op": "bye"}                            -> {"ok": true} and the session ends

Errors come back as {"ok": false, "error": msg} and the session continues
(except after "bye"). Only scores ever cross the wire; labels a catalog may
hold stay server-side. "stats" reports per-session counters of successful
frame responses, which is the transmission-cost model: one request, one unit.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from typing import Mapping

import numpy as np

from .episode import TransportError


class ServerCatalog:
    """Read-only map video_id -> scores (labels optional, never transmitted)."""

    def __init__(
        self,
        scores: Mapping[str, np.ndarray],
        labels: Mapping[str, np.ndarray] | None = None,
    ):
        self._scores = {
            vid: np.ascontiguousarray(arr, dtype=np.float64) for vid, arr in scores.items()
        }
        self._labels = dict(labels) if labels else {}

    def video_ids(self) -> list[str]:
        return sorted(self._scores)

    def frame_count(self, video_id: str) -> int:
        return self._scores[video_id].size

    def score(self, video_id: str, index: int) -> float:
        return float(self._scores[video_id][index])

    def has_video(self, video_id: str) -> bool:
        return video_id in self._scores


class _SessionHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        catalog: ServerCatalog = self.server.catalog  # type: ignore[attr-defined]
        counters: dict[str, int] = {}
        for raw in self.rfile:
            try:
                response, done = self._respond(catalog, counters, raw)
            except Exception as exc:  # defensive: never kill the session
                response, done = {"ok": False, "error": f"internal error: {exc}"}, False
            self.wfile.write((json.dumps(response) + "\n").encode("utf-8"))
            self.wfile.flush()
            if done:
                break

    def _respond(
        self, catalog: ServerCatalog, counters: dict[str, int], raw: bytes
    ) -> tuple[dict, bool]:
        try:
            request = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return {"ok": False, "error": "malformed request line"}, False
        if not isinstance(request, dict) or "op" not in request:
            return {"ok": False, "error": "malformed request line"}, False
        op = request["op"]
        if op == "meta":
            video = request.get("video")
            if not catalog.has_video(video):
                return {"ok": False, "error": "no such video"}, False
            return {"ok": True, "frames": catalog.frame_count(video)}, False
        if op == "frame":
            video = request.get("video")
            index = request.get("index")
            if not catalog.has_video(video):
                return {"ok": False, "error": "no such video"}, False
            if not isinstance(index, int) or not 0 <= index < catalog.frame_count(video):
                return {"ok": False, "error": "index out of bounds"}, False
            counters[video] = counters.get(video, 0) + 1
            return {"ok": True, "index": index, "score": catalog.score(video, index)}, False
        if op == "stats":
            return {
                "ok": True,
                "requests": dict(sorted(counters.items())),
                "total": sum(counters.values()),
            }, False
        if op == "bye":
            return {"ok": True}, True
        return {"ok": False, "error": f"unknown op: {op!r}"}, False


class FrameServer(socketserver.ThreadingTCPServer):
    """Threaded NDJSON frame server; one thread per session."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, catalog: ServerCatalog, address: tuple[str, int]):
        self._sessions_lock = threading.Lock()
        self._sessions: set[socket.socket] = set()
        super().__init__(address, _SessionHandler)
        self.catalog = catalog

    @property
    def bound_address(self) -> tuple[str, int]:
        host, port = self.socket.getsockname()[:2]
        return host, port

    def process_request(self, request, client_address) -> None:
        with self._sessions_lock:
            self._sessions.add(request)
        super().process_request(request, client_address)

    def shutdown_request(self, request) -> None:
        with self._sessions_lock:
            self._sessions.discard(request)
        super().shutdown_request(request)

    def stop(self) -> None:
        """Stop accepting, sever remaining sessions, release the socket.

        Handlers finish the response they are writing; sessions idling for
        their next request see EOF and exit.
        """
        self.shutdown()
        with self._sessions_lock:
            sessions = list(self._sessions)
        for conn in sessions:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self.server_close()


def serve(catalog: ServerCatalog, bind_address: tuple[str, int]) -> FrameServer:
    """Bind and return the server; call serve_forever() (or start a thread)."""
    try:
        return FrameServer(catalog, bind_address)
    except OSError as exc:
        raise OSError(f"cannot bind {bind_address[0]}:{bind_address[1]}: {exc}") from exc


def start_in_thread(catalog: ServerCatalog, host: str = "127.0.0.1", port: int = 0):
    """Convenience for tests: returns (server, thread) already serving."""
    server = serve(catalog, (host, port))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


class RemoteFrameSource:
    """FrameSource over one server session; counts successful fetches."""

    def __init__(self, address: tuple[str, int], video_id: str, timeout: float = 30.0):
        self.video_id = video_id
        self.requests = 0
        try:
            self._sock = socket.create_connection(address, timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {address[0]}:{address[1]}: {exc}") from exc
        self._file = self._sock.makefile("rwb")
        self._frames: int | None = None

    def _roundtrip(self, request: dict) -> dict:
        try:
            self._file.write((json.dumps(request) + "\n").encode("utf-8"))
            self._file.flush()
            line = self._file.readline()
        except (OSError, ValueError) as exc:  # ValueError: file already closed
            raise TransportError(f"connection lost: {exc}") from exc
        if not line:
            raise TransportError("connection closed by server")
        try:
            response = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TransportError(f"undecodable response: {exc}") from exc
        return response

    def _checked(self, request: dict) -> dict:
        response = self._roundtrip(request)
        if not response.get("ok"):
            raise TransportError(str(response.get("error", "unknown server error")))
        return response

    def frame_count(self) -> int:
        if self._frames is None:
            response = self._checked({"op": "meta", "video": self.video_id})
            self._frames = int(response["frames"])
        return self._frames

    def fetch(self, t: int) -> float:
        response = self._checked({"op": "frame", "video": self.video_id, "index": int(t)})
        self.requests += 1
        return float(response["score"])

    def session_stats(self) -> dict:
        return self._checked({"op": "stats"})

    def close(self) -> None:
        try:
            self._roundtrip({"op": "bye"})
        except TransportError:
            pass
        finally:
            self._file.close()
            self._sock.close()

    def __enter__(self) -> "RemoteFrameSource":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()
