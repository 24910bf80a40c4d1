"""Message channel between the two operator agents.

Only boundary vectors, bound scalars and iteration tags ever cross.  Two
interchangeable transports are provided: an in-process queue pair and TCP
with 4-byte big-endian length-prefixed JSON frames.  Every message sent is
appended to a shared :class:`TransportAudit`.
"""

from __future__ import annotations

import json
import math
import queue
import socket
import struct
import threading
from dataclasses import dataclass, field

SENDERS = ("PDSO", "TNC")
PHASES = ("boundary_report", "z_broadcast", "bound_report", "binary_epoch")


class TransportError(RuntimeError):
    pass


class ProtocolError(TransportError):
    pass


def _num(x: float):
    # JSON has no infinities; they never occur in boundary data but bounds may be -inf
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


@dataclass(frozen=True)
class BoundaryMessage:
    sender: str
    phase: str
    k: int
    j: int
    payload: tuple = ()

    def __post_init__(self):
        if self.sender not in SENDERS:
            raise ProtocolError(f"unknown sender {self.sender!r}")
        if self.phase not in PHASES:
            raise ProtocolError(f"unknown phase {self.phase!r}")
        if int(self.k) < 0 or int(self.j) < 0:
            raise ProtocolError("iteration tags must be non-negative")
        object.__setattr__(self, "payload", tuple(float(v) for v in self.payload))

    def to_json(self) -> str:
        body = {"sender": self.sender, "phase": self.phase, "k": self.k, "j": self.j,
                "payload": [_num(v) for v in self.payload]}  # fmt: skip
        return json.dumps(body, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "BoundaryMessage":
        try:
            d = json.loads(text)
            return cls(d["sender"], d["phase"], int(d["k"]), int(d["j"]), tuple(float(v) for v in d["payload"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ProtocolError):
                raise
            raise ProtocolError(f"malformed frame: {exc}") from exc


@dataclass
class TransportAudit:
    entries: list = field(default_factory=list)  # (sender, phase, k, j, payload length, bytes, payload)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, msg: BoundaryMessage, size: int):
        with self._lock:
            self.entries.append((msg.sender, msg.phase, msg.k, msg.j, len(msg.payload), size, msg.payload))

    def payloads(self) -> list:
        return [(e[0], e[1], e[2], e[3], e[6]) for e in self.entries]

    def max_payload(self) -> int:
        return max((e[4] for e in self.entries), default=0)

    def __len__(self):
        return len(self.entries)


class Endpoint:
    """One agent's side of the channel."""

    def __init__(self, owner: str, audit: TransportAudit, timeout: float | None):
        if owner not in SENDERS:
            raise ProtocolError(f"unknown owner {owner!r}")
        self.owner = owner
        self.audit = audit
        self.timeout = timeout

    def send(self, msg: BoundaryMessage) -> bool:
        if msg.sender != self.owner:
            raise ProtocolError(f"{self.owner} endpoint cannot send as {msg.sender}")
        frame = msg.to_json().encode()
        # record before handing off so the shared audit order follows the protocol
        self.audit.record(msg, len(frame))
        self._put(frame)
        return True

    def recv(self, phase: str, k: int, j: int) -> BoundaryMessage:
        if phase not in PHASES:
            raise ProtocolError(f"unknown phase {phase!r}")
        msg = BoundaryMessage.from_json(self._get().decode())
        got = (msg.phase, msg.k, msg.j)
        if got != (phase, k, j) or msg.sender == self.owner:
            raise ProtocolError(f"{self.owner} expected {(phase, k, j)} from peer, got {got} from {msg.sender}")
        return msg

    def close(self):
        pass

    def _put(self, frame: bytes):
        raise NotImplementedError

    def _get(self) -> bytes:
        raise NotImplementedError


_CLOSED = object()


class InProcEndpoint(Endpoint):
    def __init__(self, owner, audit, inbox: queue.Queue, outbox: queue.Queue, timeout=None):
        super().__init__(owner, audit, timeout)
        self.inbox, self.outbox = inbox, outbox
        self.closed = False

    def _put(self, frame):
        if self.closed:
            raise TransportError(f"{self.owner}: endpoint closed")
        self.outbox.put(frame)

    def _get(self):
        try:
            frame = self.inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"{self.owner}: receive timed out") from None
        if frame is _CLOSED:
            raise TransportError(f"{self.owner}: peer gone")
        return frame

    def close(self):
        # wake any receiver blocked on either queue
        if not self.closed:
            self.closed = True
            self.inbox.put(_CLOSED)
            self.outbox.put(_CLOSED)


def inproc_pair(timeout: float | None = None):
    """Connected (PDSO, TNC) endpoints sharing one audit."""
    audit = TransportAudit()
    a, b = queue.Queue(), queue.Queue()
    return InProcEndpoint("PDSO", audit, a, b, timeout), InProcEndpoint("TNC", audit, b, a, timeout), audit


class TcpEndpoint(Endpoint):
    def __init__(self, owner, audit, sock: socket.socket, timeout=60.0):
        super().__init__(owner, audit, timeout)
        self.sock = sock
        sock.settimeout(timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _put(self, frame):
        try:
            self.sock.sendall(struct.pack(">I", len(frame)) + frame)
        except OSError as exc:
            raise TransportError(f"{self.owner}: peer gone ({exc})") from exc

    def _read(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except socket.timeout:
                raise TransportError(f"{self.owner}: receive timed out") from None
            except OSError as exc:
                raise TransportError(f"{self.owner}: peer gone ({exc})") from exc
            if not chunk:
                raise TransportError(f"{self.owner}: peer closed the connection")
            buf.extend(chunk)
        return bytes(buf)

    def _get(self):
        (n,) = struct.unpack(">I", self._read(4))
        return self._read(n)

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def tcp_pair(timeout: float = 60.0, host: str = "127.0.0.1"):
    """Connected (PDSO, TNC) endpoints over a loopback TCP connection."""
    audit = TransportAudit()
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        server.bind((host, 0))
        server.listen(1)
        client = socket.create_connection(server.getsockname(), timeout=timeout)
        conn, _ = server.accept()
    finally:
        server.close()
    return TcpEndpoint("PDSO", audit, client, timeout), TcpEndpoint("TNC", audit, conn, timeout), audit


def make_pair(kind: str = "inproc", timeout: float | None = None):
    if kind == "inproc":
        return inproc_pair(timeout)
    if kind == "tcp":
        return tcp_pair(60.0 if timeout is None else timeout)
    raise ValueError(f"unknown transport {kind!r}")
