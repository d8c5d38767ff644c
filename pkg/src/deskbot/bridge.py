"""Websocket bridge between the tick loop and browser clients.

The simulation stays single threaded; the bridge runs an asyncio event
loop on its own thread. Outbound envelopes are JSON-encoded once per tick
on the simulation thread and handed to the loop, which fans them out to
per-client bounded queues (oldest frames are dropped first, with a drop
counter reported to the client). Inbound frames are validated and queued;
the serial_control node publishes them at its next tick.

Frames are JSON objects {"topic": str, "tick": int, "data": {...}}.
Clients may send teleop_key, estop_reset and goal frames, plus
{"topic": "subscribe", "data": {"topics": [...]}} to narrow the outbound
stream (all exported topics are sent by default).

Plain HTTP requests on the same port serve the browser UI (if built) and
GET /scene.json, the static world geometry.
"""

from __future__ import annotations

import asyncio
import json
import os
import queue
import threading
from collections import deque

from websockets.asyncio.server import serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Response

from . import bus
from .bus import Envelope, payload_to_wire, wire_to_payload
from .plant import World

INBOUND_TOPICS = (bus.TELEOP_KEY, bus.ESTOP_RESET, bus.GOAL)

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}

_PLACEHOLDER = b"""<!doctype html>
<html><head><title>deskbot</title></head>
<body style="font-family: sans-serif">
<h1>deskbot bridge</h1>
<p>The browser UI is not built. Run <code>npm install &amp;&amp; npm run
build</code> in <code>frontend/</code>, then restart <code>deskbot
serve</code> from the repository root (or point DESKBOT_UI_DIR at the
built assets).</p>
<p>The websocket stream itself is live on this port.</p>
</body></html>
"""


class BridgeError(Exception):
    pass


class _Client:
    __slots__ = ("conn", "frames", "wakeup", "topics", "dropped")

    def __init__(self, conn, limit: int):
        self.conn = conn
        self.frames: deque = deque(maxlen=limit)
        self.wakeup = asyncio.Event()
        self.topics: set[str] | None = None  # None = every exported topic
        self.dropped = 0


class Bridge:
    """Owns the server thread; the simulation thread only ever touches
    collect(), flush_tick() and drain_inbound()."""

    def __init__(
        self,
        world: World,
        port: int = 8765,
        host: str = "127.0.0.1",
        meta: dict | None = None,
        topics=None,
        queue_limit: int = 256,
        static_dir: str | None = None,
    ):
        self.world = world
        self.port = port
        self.host = host
        self.meta = dict(meta or {})
        self.exported = set(topics) if topics is not None else None
        self.queue_limit = queue_limit
        self.static_dir = self._resolve_static(static_dir)
        self._tick_buffer: list[Envelope] = []
        self._inbound: queue.Queue = queue.Queue(maxsize=1024)
        self._clients: set[_Client] = set()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._stop_event: asyncio.Event | None = None
        self._thread: threading.Thread | None = None
        self._started = threading.Event()
        self._start_error: BaseException | None = None

    @staticmethod
    def _resolve_static(static_dir: str | None) -> str | None:
        candidates = [
            static_dir,
            os.environ.get("DESKBOT_UI_DIR"),
            os.path.join("frontend", "dist"),
        ]
        for cand in candidates:
            if cand and os.path.isdir(cand):
                return os.path.realpath(cand)
        return None

    # ---- simulation-thread API -------------------------------------------

    def collect(self, env: Envelope) -> None:
        """Bus sink: remember this tick's envelopes for the next flush."""
        if self.exported is None or env.topic in self.exported:
            self._tick_buffer.append(env)

    def flush_tick(self, tick: int) -> None:
        """Encode the tick's frames and hand them to the server loop."""
        if not self._tick_buffer:
            return
        frames = [
            (
                env.topic,
                json.dumps(
                    {
                        "topic": env.topic,
                        "tick": env.tick,
                        "data": payload_to_wire(env.payload),
                    }
                ),
            )
            for env in self._tick_buffer
        ]
        self._tick_buffer.clear()
        loop = self._loop
        if loop is not None and not loop.is_closed():
            loop.call_soon_threadsafe(self._fan_out, frames)

    def drain_inbound(self) -> list:
        """Everything clients sent since the last tick, oldest first."""
        items = []
        while True:
            try:
                items.append(self._inbound.get_nowait())
            except queue.Empty:
                return items

    # ---- lifecycle --------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._thread_main, name="deskbot-bridge", daemon=True
        )
        self._thread.start()
        self._started.wait(timeout=10.0)
        if self._start_error is not None:
            raise BridgeError(
                f"cannot serve on {self.host}:{self.port}: {self._start_error}"
            )
        if not self._started.is_set():
            raise BridgeError("bridge thread did not start")

    def stop(self) -> None:
        loop, stop = self._loop, self._stop_event
        if loop is not None and stop is not None and not loop.is_closed():
            loop.call_soon_threadsafe(stop.set)
        if self._thread is not None:
            self._thread.join(timeout=10.0)

    def _thread_main(self) -> None:
        try:
            asyncio.run(self._serve())
        except OSError as exc:
            self._start_error = exc
        finally:
            self._started.set()

    async def _serve(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._stop_event = asyncio.Event()
        async with serve(
            self._handler,
            self.host,
            self.port,
            process_request=self._process_request,
            open_timeout=5.0,
            close_timeout=1.0,  # don't let a dead client stall shutdown
        ):
            self._started.set()
            await self._stop_event.wait()

    # ---- server-loop internals ---------------------------------------------

    def _fan_out(self, frames: list[tuple[str, str]]) -> None:
        for client in self._clients:
            for topic, text in frames:
                if client.topics is not None and topic not in client.topics:
                    continue
                if len(client.frames) == client.frames.maxlen:
                    client.dropped += 1
                client.frames.append(text)
            client.wakeup.set()

    async def _sender(self, client: _Client) -> None:
        while True:
            await client.wakeup.wait()
            client.wakeup.clear()
            while client.frames:
                await client.conn.send(client.frames.popleft())
            if client.dropped:
                n, client.dropped = client.dropped, 0
                await client.conn.send(
                    json.dumps({"topic": "_bridge", "tick": -1, "data": {"dropped": n}})
                )

    async def _handler(self, conn) -> None:
        client = _Client(conn, self.queue_limit)
        self._clients.add(client)
        sender = asyncio.create_task(self._sender(client))
        try:
            await conn.send(
                json.dumps(
                    {
                        "topic": "_hello",
                        "tick": -1,
                        "data": {"world": self.world.to_dict(), **self.meta},
                    }
                )
            )
            async for message in conn:
                await self._on_message(client, message)
        except ConnectionClosed:
            pass
        finally:
            sender.cancel()
            self._clients.discard(client)

    async def _on_message(self, client: _Client, message) -> None:
        try:
            frame = json.loads(message)
            topic = frame["topic"]
            data = frame.get("data") or {}
            if not isinstance(data, dict):
                raise ValueError("frame data must be an object")
        except (ValueError, KeyError, TypeError) as exc:
            await self._error(client, f"malformed frame: {exc}")
            return
        if topic == "subscribe":
            topics = data.get("topics")
            if not isinstance(topics, list) or not all(
                isinstance(t, str) for t in topics
            ):
                await self._error(client, "subscribe needs data.topics: [str]")
                return
            client.topics = set(topics)
            return
        if topic not in INBOUND_TOPICS:
            await self._error(client, f"clients cannot publish to {topic!r}")
            return
        try:
            payload = wire_to_payload(topic, data)
        except ValueError as exc:
            await self._error(client, str(exc))
            return
        try:
            self._inbound.put_nowait((topic, payload))
        except queue.Full:
            await self._error(client, "inbound queue full; frame dropped")

    async def _error(self, client: _Client, message: str) -> None:
        await client.conn.send(
            json.dumps({"topic": "_error", "tick": -1, "data": {"message": message}})
        )

    # ---- plain HTTP --------------------------------------------------------

    def _process_request(self, conn, request):
        if "upgrade" in request.headers.get("Connection", "").lower():
            return None  # continue the websocket handshake
        path = request.path.split("?", 1)[0]
        if path == "/scene.json":
            body = json.dumps({"world": self.world.to_dict(), **self.meta}).encode()
            return self._response(200, "OK", "application/json", body)
        return self._static_response(path)

    def _static_response(self, path: str):
        if path == "/":
            path = "/index.html"
        if self.static_dir is None:
            if path == "/index.html":
                return self._response(200, "OK", "text/html; charset=utf-8", _PLACEHOLDER)
            return self._response(404, "Not Found", "text/plain", b"not found\n")
        full = os.path.realpath(os.path.join(self.static_dir, path.lstrip("/")))
        if not full.startswith(self.static_dir + os.sep) or not os.path.isfile(full):
            return self._response(404, "Not Found", "text/plain", b"not found\n")
        ctype = _CONTENT_TYPES.get(os.path.splitext(full)[1], "application/octet-stream")
        with open(full, "rb") as f:
            return self._response(200, "OK", ctype, f.read())

    @staticmethod
    def _response(status: int, reason: str, ctype: str, body: bytes) -> Response:
        headers = Headers()
        headers["Content-Type"] = ctype
        headers["Content-Length"] = str(len(body))
        return Response(status, reason, headers, body)
