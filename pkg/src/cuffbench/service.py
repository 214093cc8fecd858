"""Network front of a live session: length-delimited JSON over TCP.

Framing: each message is the payload byte length in ASCII decimal, a newline,
the UTF-8 JSON payload, and a trailing newline.  Commands carry `cmd` and a
client-chosen `id`; the service answers each with a `reply` carrying the same
id.  Subscribers additionally receive the broadcast stream (snapshot first,
then every transition and step result in order).  Slow subscribers never
stall the session: their stream buffer is bounded, oldest messages are
dropped, and a `gap` message reports how many went missing.
"""

from __future__ import annotations

import collections
import json
import socket
import threading
from pathlib import Path

from cuffbench.electrode import parse_config
from cuffbench.session import (
    BackendError,
    ProtocolError,
    Session,
    pulse_from_wire,
    ramp_from_wire,
)

MAX_FRAME_BYTES = 64 * 1024 * 1024
DEFAULT_STREAM_BUFFER = 256


def send_frame(sock: socket.socket, message: dict) -> None:
    payload = json.dumps(message).encode("utf-8")
    sock.sendall(str(len(payload)).encode("ascii") + b"\n" + payload + b"\n")


def recv_frame(fh) -> dict | None:
    """Read one frame from a file-like over the socket; None on EOF."""
    line = fh.readline(32)
    if not line:
        return None
    try:
        length = int(line.strip())
    except ValueError:
        raise ConnectionError(f"bad frame length {line!r}") from None
    if not 0 <= length <= MAX_FRAME_BYTES:
        raise ConnectionError(f"frame length {length} out of bounds")
    payload = fh.read(length + 1)
    if len(payload) < length + 1:
        return None
    return json.loads(payload[:length].decode("utf-8"))


class _Connection:
    """One client: reader thread for commands, writer thread for replies and
    the bounded broadcast stream."""

    def __init__(self, service: "SessionService", sock: socket.socket, stream_buffer: int):
        self.service = service
        self.sock = sock
        self.stream_buffer = stream_buffer
        self.subscribed = False
        self.closed = False
        self._replies: collections.deque = collections.deque()
        self._stream: collections.deque = collections.deque()
        self._dropped = 0
        self._cond = threading.Condition()
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)

    def start(self) -> None:
        self._writer.start()
        self._reader.start()

    def enqueue_reply(self, message: dict) -> None:
        with self._cond:
            self._replies.append(message)
            self._cond.notify()

    def enqueue_stream(self, message: dict) -> None:
        if not self.subscribed:
            return
        with self._cond:
            if len(self._stream) >= self.stream_buffer:
                self._stream.popleft()
                self._dropped += 1
            self._stream.append(message)
            self._cond.notify()

    def _write_loop(self) -> None:
        while True:
            with self._cond:
                while not self._replies and not self._stream and not self.closed:
                    self._cond.wait()
                if self.closed and not self._replies and not self._stream:
                    return
                batch = []
                while self._replies:
                    batch.append(self._replies.popleft())
                if self._dropped:
                    batch.append({"kind": "gap", "dropped_messages": self._dropped})
                    self._dropped = 0
                while self._stream:
                    batch.append(self._stream.popleft())
            try:
                for message in batch:
                    send_frame(self.sock, message)
            except OSError:
                self.close()
                return

    def _read_loop(self) -> None:
        fh = self.sock.makefile("rb")
        try:
            while True:
                try:
                    message = recv_frame(fh)
                except (ConnectionError, json.JSONDecodeError, OSError):
                    break
                if message is None:
                    break
                self.service._dispatch(self, message)
        finally:
            self.close()

    def close(self) -> None:
        with self._cond:
            if self.closed:
                return
            self.closed = True
            self._cond.notify()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass
        self.service._forget(self)


class SessionService:
    """One session, many clients; all state mutations funnel through the
    session's own serialization."""

    def __init__(
        self,
        backend,
        host: str = "127.0.0.1",
        port: int = 0,
        session_dir: str | Path | None = None,
        stream_buffer: int = DEFAULT_STREAM_BUFFER,
    ):
        self.session = Session(backend, session_dir=session_dir)
        self.session.add_listener(self._broadcast)
        self.host = host
        self.port = port
        self.stream_buffer = stream_buffer
        self._listener: socket.socket | None = None
        self._connections: list[_Connection] = []
        self._lock = threading.Lock()  # guards connections + broadcast ordering
        self._accept_thread: threading.Thread | None = None
        self._shutdown = threading.Event()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> tuple[str, int]:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self.port))
        sock.listen()
        self._listener = sock
        self.port = sock.getsockname()[1]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return sock.getsockname()[:2]

    def serve_forever(self) -> None:
        self._shutdown.wait()

    def shutdown(self, reason: str = "shutdown") -> None:
        if self.session.state not in ("saturated", "stopped", "idle"):
            try:
                self.session.abort(reason)
            except Exception:
                pass
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._connections)
        for conn in conns:
            conn.close()
        self._shutdown.set()

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while True:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            conn = _Connection(self, sock, self.stream_buffer)
            with self._lock:
                self._connections.append(conn)
            conn.start()

    def _forget(self, conn: _Connection) -> None:
        with self._lock:
            if conn in self._connections:
                self._connections.remove(conn)

    def _broadcast(self, message: dict) -> None:
        with self._lock:
            for conn in self._connections:
                conn.enqueue_stream(message)

    # -- command handling ----------------------------------------------------

    def _dispatch(self, conn: _Connection, message: dict) -> None:
        cmd = message.get("cmd")
        cmd_id = message.get("id")
        if cmd == "subscribe":
            # Snapshot and registration happen under the broadcast lock so the
            # stream is gapless from the subscription point.
            with self._lock:
                conn.subscribed = True
                snapshot = self.session.snapshot()
            conn.enqueue_stream(snapshot)
            conn.enqueue_reply({"kind": "reply", "id": cmd_id, "ok": True})
            return
        if cmd in ("configure", "run_step", "run_to_saturation", "mark_saturated", "abort"):
            worker = threading.Thread(
                target=self._run_command, args=(conn, cmd, cmd_id, message), daemon=True
            )
            worker.start()
            return
        conn.enqueue_reply(
            {
                "kind": "reply",
                "id": cmd_id,
                "ok": False,
                "error_kind": "usage",
                "error": f"unknown command {cmd!r}",
            }
        )

    def _run_command(self, conn: _Connection, cmd: str, cmd_id, message: dict) -> None:
        try:
            if cmd == "configure":
                config = parse_config(message["config"])
                ramp = ramp_from_wire(message.get("ramp", {}))
                pulse = pulse_from_wire(message.get("pulse", {}))
                state = self.session.configure(config, ramp, pulse)
                result = {"state": state}
            elif cmd == "run_step":
                step = self.session.run_step()
                result = {
                    "state": step.state,
                    "step_index": step.step_index,
                    "amplitude_uA": step.amplitude_ua,
                    "saturated": step.saturated,
                }
            elif cmd == "run_to_saturation":
                state = self.session.run_to_saturation()
                result = {"state": state}
            elif cmd == "mark_saturated":
                state = self.session.mark_saturated()
                result = {"state": state}
            else:
                state = self.session.abort(str(message.get("reason", "operator_abort")))
                result = {"state": state}
        except ProtocolError as exc:
            self._reply_error(conn, cmd_id, "protocol", exc)
        except BackendError as exc:
            self._reply_error(conn, cmd_id, "backend", exc)
        except (KeyError, ValueError) as exc:
            self._reply_error(conn, cmd_id, "value", exc)
        else:
            conn.enqueue_reply({"kind": "reply", "id": cmd_id, "ok": True, **result})

    def _reply_error(self, conn: _Connection, cmd_id, kind: str, exc: Exception) -> None:
        conn.enqueue_reply(
            {
                "kind": "reply",
                "id": cmd_id,
                "ok": False,
                "error_kind": kind,
                "error": str(exc),
                "state": self.session.state,
            }
        )


class SessionClient:
    """Small synchronous client for scripts and tests."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.timeout = timeout
        self._fh = self.sock.makefile("rb")
        self._next_id = 1
        self._replies: dict[int, dict] = {}
        self._stream: collections.deque = collections.deque()
        self._cond = threading.Condition()
        self._eof = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            while True:
                message = recv_frame(self._fh)
                if message is None:
                    break
                with self._cond:
                    if message.get("kind") == "reply":
                        self._replies[message.get("id")] = message
                    else:
                        self._stream.append(message)
                    self._cond.notify_all()
        except (ConnectionError, OSError, json.JSONDecodeError):
            pass
        finally:
            with self._cond:
                self._eof = True
                self._cond.notify_all()

    def send_command(self, cmd: str, **payload) -> int:
        with self._cond:
            cmd_id = self._next_id
            self._next_id += 1
        send_frame(self.sock, {"cmd": cmd, "id": cmd_id, **payload})
        return cmd_id

    def wait_reply(self, cmd_id: int, timeout: float | None = None) -> dict:
        deadline = timeout if timeout is not None else self.timeout
        with self._cond:
            ok = self._cond.wait_for(
                lambda: cmd_id in self._replies or self._eof, timeout=deadline
            )
            if cmd_id in self._replies:
                return self._replies.pop(cmd_id)
            if not ok:
                raise TimeoutError(f"no reply to command {cmd_id}")
            raise ConnectionError("connection closed before reply")

    def command(self, cmd: str, timeout: float | None = None, **payload) -> dict:
        return self.wait_reply(self.send_command(cmd, **payload), timeout)

    def next_message(self, timeout: float | None = None) -> dict:
        deadline = timeout if timeout is not None else self.timeout
        with self._cond:
            ok = self._cond.wait_for(lambda: self._stream or self._eof, timeout=deadline)
            if self._stream:
                return self._stream.popleft()
            if not ok:
                raise TimeoutError("no stream message")
            raise ConnectionError("connection closed")

    def drain_messages(self) -> list[dict]:
        with self._cond:
            out = list(self._stream)
            self._stream.clear()
            return out

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass
