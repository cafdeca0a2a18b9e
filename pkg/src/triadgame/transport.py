"""Transport bindings for the engine.

Two interchangeable bindings speak the same newline-delimited JSON framing:

* ``SimNet`` — a deterministic in-process discrete-event network with
  configurable delays, seeded jitter, and targeted message dropping. This is
  the consistency baseline used by tests and the scenario harness.
* ``TcpEngineServer`` / ``TcpClient`` — a plain TCP binding for real use.

Within one session messages are never reordered; per-link delivery times are
clamped to be non-decreasing even when jitter is injected.
"""

from __future__ import annotations

import heapq
import json
import queue
import random
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Callable

from .chronos import Millis
from .client import GameClient
from .engine import GameEngine


@dataclass
class DropRule:
    """Drop the nth matching server-to-client message (1-based), once."""

    to_device: str
    msg_type: str = "UPDATE"
    nth: int = 1

    def __post_init__(self) -> None:
        self._seen = 0
        self._dropped = False

    def should_drop(self, device: str, msg: dict) -> bool:
        if self._dropped or device != self.to_device or msg.get("type") != self.msg_type:
            return False
        self._seen += 1
        if self._seen == self.nth:
            self._dropped = True
            return True
        return False


class SimNet:
    """Deterministic simulated network binding engine and clients together."""

    def __init__(
        self,
        engine: GameEngine,
        c2s_delay_ms: int = 20,
        s2c_delay_ms: int = 20,
        jitter_ms: int = 0,
        seed: int | str = 0,
        drop_rule: DropRule | None = None,
    ) -> None:
        self.engine = engine
        self.c2s_delay_ms = c2s_delay_ms
        self.s2c_delay_ms = s2c_delay_ms
        self.jitter_ms = jitter_ms
        self.drop_rule = drop_rule
        self.dropped: list[tuple[str, dict]] = []
        self.deliveries: list[tuple[Millis, str, dict]] = []  # s2c deliveries
        self._rng = random.Random(f"net/{seed}")
        self._heap: list[tuple[Millis, int, Callable[[], None]]] = []
        self._tiebreak = 0
        self._link_clock: dict[tuple[str, str], Millis] = {}
        self.now: Millis = 0
        self.clients: dict[str, GameClient] = {}
        self._hooks: dict[str, Callable[[dict, "SimNet"], None]] = {}
        engine.clock = lambda: self.now
        engine.set_sender(self._server_send)

    def register_client(
        self,
        client: GameClient,
        hook: Callable[[dict, "SimNet"], None] | None = None,
    ) -> GameClient:
        self.clients[client.device] = client
        if hook is not None:
            self._hooks[client.device] = hook
        return client

    # -- scheduling -------------------------------------------------------------

    def _schedule(self, at: Millis, action: Callable[[], None]) -> None:
        self._tiebreak += 1
        heapq.heappush(self._heap, (at, self._tiebreak, action))

    def call_at(self, at: Millis, action: Callable[[], None]) -> None:
        """Schedule an arbitrary harness action (e.g. a device taking a sample)."""
        self._schedule(at, action)

    def _delayed(self, base_delay: int, link: tuple[str, str]) -> Millis:
        delay = base_delay + (self._rng.randint(0, self.jitter_ms) if self.jitter_ms else 0)
        at = self.now + max(0, delay)
        at = max(at, self._link_clock.get(link, at))  # FIFO per link
        self._link_clock[link] = at
        return at

    def client_send(self, device: str, msg: dict, at: Millis | None = None) -> None:
        """Send one client message to the engine over the simulated link."""

        def deliver_to_engine(device=device, msg=msg) -> None:
            responses = self.engine.handle_message(device, msg)
            for resp in responses:
                self._server_send(device, resp)

        if at is not None:
            self._schedule(at, lambda: self.client_send(device, msg))
            return
        self._schedule(self._delayed(self.c2s_delay_ms, (device, "server")), deliver_to_engine)

    def _server_send(self, device: str, msg: dict) -> None:
        if self.drop_rule is not None and self.drop_rule.should_drop(device, msg):
            self.dropped.append((device, msg))
            return

        def deliver_to_client(device=device, msg=msg) -> None:
            self.deliveries.append((self.now, device, msg))
            client = self.clients.get(device)
            if client is not None:
                client.on_message(msg)
            hook = self._hooks.get(device)
            if hook is not None:
                hook(msg, self)

        self._schedule(self._delayed(self.s2c_delay_ms, ("server", device)), deliver_to_client)

    def run(self, until: Millis | None = None) -> Millis:
        """Process scheduled events in time order; returns the final sim time.

        Without ``until`` the network runs to quiescence (empty schedule).
        """
        while self._heap:
            at, _, action = self._heap[0]
            if until is not None and at > until:
                break
            heapq.heappop(self._heap)
            # Heap order makes `at` non-decreasing except for events scheduled
            # before the run started (e.g. a sync phase at negative times).
            self.now = at
            action()
        if until is not None and until > self.now:
            self.now = until
        return self.now


# ---------------------------------------------------------------------------
# TCP binding
# ---------------------------------------------------------------------------

def encode_frame(msg: dict) -> bytes:
    return (json.dumps(msg, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


class _EngineConnectionHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: TcpEngineServer = self.server  # type: ignore[assignment]
        device: str | None = None
        outbox: queue.Queue = queue.Queue()
        stop = threading.Event()

        def writer() -> None:
            while not stop.is_set():
                try:
                    msg = outbox.get(timeout=0.1)
                except queue.Empty:
                    continue
                try:
                    self.wfile.write(encode_frame(msg))
                    self.wfile.flush()
                except OSError:
                    return

        writer_thread = threading.Thread(target=writer, daemon=True)
        writer_thread.start()
        try:
            for line in self.rfile:
                line = line.strip()
                if not line:
                    continue
                try:
                    msg = json.loads(line)
                except json.JSONDecodeError:
                    outbox.put(
                        {"type": "RESULT", "ok": False, "error": "malformed_message",
                         "message": "frame is not valid JSON"}
                    )
                    continue
                if device is None:
                    device = str(msg.get("device") or f"conn-{self.client_address[1]}")
                    server.register_outbox(device, outbox)
                for resp in server.engine.handle_message(device, msg):
                    outbox.put(resp)
        finally:
            stop.set()
            if device is not None:
                server.unregister(device)


class TcpEngineServer:
    """Serves one engine over TCP with the shared NDJSON framing."""

    def __init__(self, engine: GameEngine, host: str = "127.0.0.1", port: int = 0) -> None:
        self.engine = engine
        engine.clock = lambda: int(time.time() * 1000)
        engine.set_sender(self.push)
        self._outboxes: dict[str, queue.Queue] = {}
        self._lock = threading.Lock()
        self._server = socketserver.ThreadingTCPServer((host, port), _EngineConnectionHandler)
        self._server.daemon_threads = True
        self._server.engine = engine  # type: ignore[attr-defined]
        self._server.register_outbox = self.register_outbox  # type: ignore[attr-defined]
        self._server.unregister = self.unregister  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address  # type: ignore[return-value]

    def register_outbox(self, device: str, outbox: queue.Queue) -> None:
        with self._lock:
            self._outboxes[device] = outbox

    def unregister(self, device: str) -> None:
        with self._lock:
            self._outboxes.pop(device, None)
        self.engine.drop_device(device)

    def push(self, device: str, msg: dict) -> None:
        with self._lock:
            outbox = self._outboxes.get(device)
        if outbox is not None:
            outbox.put(msg)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class TcpClient:
    """Line-framed client for tests and manual poking."""

    def __init__(self, host: str, port: int, device: str) -> None:
        self.device = device
        self.state = GameClient(device=device)
        self._sock = socket.create_connection((host, port), timeout=5.0)
        self._file = self._sock.makefile("rb")
        self._inbox: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            for line in self._file:
                msg = json.loads(line)
                self.state.on_message(msg)
                self._inbox.put(msg)
        except (OSError, ValueError):
            pass

    def send(self, msg: dict) -> None:
        self._sock.sendall(encode_frame(msg))

    def recv(self, timeout: float = 5.0) -> dict:
        return self._inbox.get(timeout=timeout)

    def recv_type(self, msg_type: str, timeout: float = 5.0) -> dict:
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError(f"no {msg_type} within {timeout}s")
            msg = self._inbox.get(timeout=remaining)
            if msg.get("type") == msg_type:
                return msg

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass
