"""Point-to-point transports (in-process and TCP) and the framed party link.

Both transports deliver raw frame bytes into a per-party inbox with strict
per-peer FIFO order; ``Link`` adds framing, session checks and aborts.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import defaultdict, deque

from .wire import Frame, FrameError, MsgType, check_length_field

log = logging.getLogger(__name__)


class ProtocolAbort(RuntimeError):
    pass


class Inbox:
    """Per-peer FIFO queues of frame bytes for one party."""

    def __init__(self):
        self._cond = threading.Condition()
        self._queues: dict[str, deque] = defaultdict(deque)
        self._abort: bytes | None = None
        self._closed: dict[str, str] = {}

    def put(self, peer: str, item) -> None:
        with self._cond:
            if isinstance(item, (bytes, bytearray)) and len(item) > 4 and item[4] == MsgType.ABORT:
                self._abort = bytes(item)
            self._queues[peer].append(item)
            self._cond.notify_all()

    def close(self, peer: str, reason: str) -> None:
        with self._cond:
            self._closed.setdefault(peer, reason)
            self._cond.notify_all()

    def get(self, peer: str, timeout: float | None):
        with self._cond:
            q = self._queues[peer]
            ok = self._cond.wait_for(
                lambda: q or self._abort is not None or peer in self._closed, timeout)
            if q:
                item = q.popleft()
                if isinstance(item, Exception):
                    raise item
                return item
            if self._abort is not None:
                return self._abort
            if peer in self._closed:
                raise ProtocolAbort(f"connection to {peer} lost: {self._closed[peer]}")
            assert not ok
            raise ProtocolAbort(f"timed out waiting for {peer}")


class LocalHub:
    """In-process transport: every party is a thread sharing this hub.

    ``tamper(src, dst, data)`` may rewrite frames in flight (tests only).
    """

    def __init__(self, tamper=None):
        self._inboxes: dict[str, Inbox] = defaultdict(Inbox)
        self._lock = threading.Lock()
        self.tamper = tamper
        self.traffic: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0])

    def inbox(self, pid: str) -> Inbox:
        with self._lock:
            return self._inboxes[pid]

    def endpoint(self, pid: str) -> LocalEndpoint:
        return LocalEndpoint(self, pid)


class LocalEndpoint:
    def __init__(self, hub: LocalHub, me: str):
        self.hub = hub
        self.me = me
        self.inbox = hub.inbox(me)

    def start(self) -> None:
        pass

    def send_bytes(self, peer: str, data: bytes) -> None:
        if self.hub.tamper is not None:
            data = self.hub.tamper(self.me, peer, data)
        stats = self.hub.traffic[(self.me, peer)]
        stats[0] += 1
        stats[1] += len(data)
        self.hub.inbox(peer).put(self.me, data)

    def recv_bytes(self, peer: str, timeout: float | None) -> bytes:
        return self.inbox.get(peer, timeout)

    def close(self) -> None:
        pass


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return bytes(buf)


def read_frame_bytes(sock: socket.socket) -> bytes:
    prefix = _read_exact(sock, 4)
    return prefix + _read_exact(sock, check_length_field(prefix))


class TcpEndpoint:
    """TCP transport: one long-lived connection per communicating pair.

    The party listed later in ``connect_to`` order dials; the acceptor learns
    who dialled from the first frame on the connection, which must be a SETUP
    frame whose payload starts with the sender's roster index.
    """

    def __init__(self, me: str, addresses: dict[str, tuple[str, int]], connect_to: list[str],
                 accept_from: list[str], roster: list[str], timeout: float = 60.0,
                 connect_timeout: float = 20.0):
        self.me = me
        self.addresses = addresses
        self.connect_to = list(connect_to)
        self.accept_from = set(accept_from)
        self.roster = roster
        self.timeout = timeout
        self.connect_timeout = connect_timeout
        self.inbox = Inbox()
        self._socks: dict[str, socket.socket] = {}
        self._send_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._cond = threading.Condition()
        self._listener: socket.socket | None = None
        self._closing = False

    def start(self) -> None:
        host, port = self.addresses[self.me]
        self._listener = socket.create_server((host, port), reuse_port=False)
        self._listener.settimeout(0.2)
        threading.Thread(target=self._accept_loop, name=f"{self.me}-accept", daemon=True).start()
        for peer in self.connect_to:
            sock = self._dial(peer)
            self._register(peer, sock)

    def _dial(self, peer: str) -> socket.socket:
        deadline = time.monotonic() + self.connect_timeout
        addr = self.addresses[peer]
        while True:
            try:
                sock = socket.create_connection(addr, timeout=self.connect_timeout)
                sock.settimeout(None)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                return sock
            except OSError as exc:
                if time.monotonic() > deadline:
                    raise ProtocolAbort(f"{peer} unreachable at {addr[0]}:{addr[1]}: {exc}") from None
                time.sleep(0.05)

    def _register(self, peer: str, sock: socket.socket, first: bytes | None = None) -> None:
        with self._cond:
            self._socks[peer] = sock
            self._cond.notify_all()
        if first is not None:
            self.inbox.put(peer, first)
        threading.Thread(target=self._reader, args=(peer, sock), name=f"{self.me}<-{peer}",
                         daemon=True).start()

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(target=self._identify, args=(conn,), daemon=True).start()

    def _identify(self, conn: socket.socket) -> None:
        try:
            data = read_frame_bytes(conn)
            frame = Frame.decode(data)
            if frame.mtype != MsgType.SETUP or len(frame.payload) < 16:
                raise FrameError("first frame on a connection must be SETUP")
            idx = int.from_bytes(frame.payload[:16], "little")
            peer = self.roster[idx] if idx < len(self.roster) else None
            if peer not in self.accept_from or peer in self._socks:
                raise FrameError(f"unexpected connection from roster index {idx}")
        except (OSError, FrameError, ConnectionError) as exc:
            log.warning("%s: rejected inbound connection: %s", self.me, exc)
            conn.close()
            return
        self._register(peer, conn, data)

    def _reader(self, peer: str, sock: socket.socket) -> None:
        try:
            while True:
                self.inbox.put(peer, read_frame_bytes(sock))
        except FrameError as exc:
            self.inbox.put(peer, ProtocolAbort(f"bad frame from {peer}: {exc}"))
        except (OSError, ConnectionError) as exc:
            self.inbox.close(peer, str(exc))

    def send_bytes(self, peer: str, data: bytes) -> None:
        with self._cond:
            if not self._cond.wait_for(lambda: peer in self._socks, self.timeout):
                raise ProtocolAbort(f"no connection from {peer}")
            sock = self._socks[peer]
        with self._send_locks[peer]:
            try:
                sock.sendall(data)
            except OSError as exc:
                raise ProtocolAbort(f"send to {peer} failed: {exc}") from None

    def recv_bytes(self, peer: str, timeout: float | None) -> bytes:
        return self.inbox.get(peer, timeout)

    def close(self) -> None:
        self._closing = True
        for sock in list(self._socks.values()):
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        if self._listener is not None:
            self._listener.close()


class Link:
    """Framed, session-checked messaging for one party over an endpoint."""

    def __init__(self, me: str, endpoint, session_id: bytes, timeout: float = 60.0):
        self.me = me
        self.endpoint = endpoint
        self.session_id = session_id
        self.timeout = timeout
        self.peers: set[str] = set()
        self.received: dict[str, int] = defaultdict(int)

    def send(self, peer: str, mtype: MsgType, payload: bytes = b"", round_: int = 0, gadget: int = 0) -> None:
        self.peers.add(peer)
        self.endpoint.send_bytes(peer, Frame(mtype, self.session_id, round_, gadget, payload).encode())

    def recv(self, peer: str, expect, round_: int | None = None, gadget: int | None = None) -> Frame:
        self.peers.add(peer)
        data = self.endpoint.recv_bytes(peer, self.timeout)
        try:
            frame = Frame.decode(data)
        except FrameError as exc:
            raise ProtocolAbort(f"malformed frame from {peer}: {exc}") from None
        self.received[peer] += len(data)
        if frame.mtype == MsgType.ABORT:
            raise ProtocolAbort(f"peer aborted: {frame.payload.decode(errors='replace')}")
        if frame.session_id != self.session_id:
            raise ProtocolAbort(f"session id mismatch from {peer}: {frame.session_id.hex()}")
        allowed = expect if isinstance(expect, tuple) else (expect,)
        if frame.mtype not in allowed:
            raise ProtocolAbort(f"expected {[t.name for t in allowed]} from {peer}, got {frame.mtype.name}")
        if round_ is not None and (frame.round, frame.gadget) != (round_, gadget):
            raise ProtocolAbort(f"round mismatch from {peer}: got ({frame.round}, {frame.gadget}), "
                                f"expected ({round_}, {gadget})")
        return frame

    def abort(self, reason: str, peers=None) -> None:
        for peer in sorted(peers if peers is not None else self.peers):
            try:
                self.send(peer, MsgType.ABORT, reason.encode()[:4096])
            except Exception:  # noqa: BLE001 - best effort while tearing down
                pass
