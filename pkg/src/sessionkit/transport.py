"""Message-oriented, reliable, order-preserving duplex transports.

Two realizations of the same small surface:

* `SimNetwork` -- an in-memory network of named nodes with per-channel FIFO
  queues, deterministic port allocation, a frame trace, and an optional
  attacker tap that may observe, suppress, or inject traffic and open its
  own connections.
* `TcpNetwork` -- real sockets, for running the demo over localhost.

Endpoints carry whole frames; order is preserved per direction and nothing
is lost or duplicated (the attacker tap is the only sanctioned violator).
"""

from __future__ import annotations

import socket
import threading
from collections import deque

from .errors import (
    AddressInUse,
    ChannelClosed,
    ConnectionRefused,
    Timeout,
    TransportError,
    Unsupported,
)
from .frames import HEADER_LEN, Frame, decode_frame, encode_frame

DEFAULT_TIMEOUT = 5.0


# -- simulated network ---------------------------------------------------------

class AttackerTap:
    """Base attacker policy: sees everything it watches, changes nothing.

    Subclasses override `watches` to pick channels and `on_frame` to copy or
    suppress traffic (return False to suppress).  `on_listen`/`on_connect`
    expose connection metadata (the simnet analogue of watching SYNs and
    open ports); an active attacker may open its own connections from a
    node obtained via `SimNetwork.node`.
    """

    def watches(self, src: str, dst: str) -> bool:
        return False

    def on_frame(self, src: str, dst: str, frame: Frame, chan_id: int) -> bool:
        return True

    def on_listen(self, node: str, port: int) -> None:
        pass

    def on_connect(self, src: str, dst: str, port: int) -> None:
        pass


class _SimChannel:
    """One connected pair: two FIFO queues and per-side open flags."""

    def __init__(self, chan_id: int, a: str, b: str):
        self.id = chan_id
        self.nodes = (a, b)  # index 0 connected, index 1 accepted
        self.queues = (deque(), deque())  # queues[i] holds frames travelling to nodes[i]
        self.open = [True, True]
        self.cond = threading.Condition()


class SimEndpoint:
    """One end of a simnet channel."""

    def __init__(self, net: "SimNetwork", channel: _SimChannel, side: int):
        self._net = net
        self._chan = channel
        self._side = side  # frames for us sit in channel.queues[side]

    @property
    def local_host(self) -> str:
        return self._chan.nodes[self._side]

    @property
    def peer_host(self) -> str:
        return self._chan.nodes[1 - self._side]

    @property
    def channel_id(self) -> int:
        return self._chan.id

    @property
    def is_open(self) -> bool:
        return self._chan.open[self._side]

    def send_frame(self, frame: Frame) -> None:
        chan = self._chan
        if not chan.open[self._side]:
            raise ChannelClosed("endpoint closed")
        deliver = self._net._consult_tap(self.local_host, self.peer_host, frame, chan.id)
        with chan.cond:
            if not chan.open[1 - self._side]:
                raise ChannelClosed("peer closed")
            if deliver:
                chan.queues[1 - self._side].append(frame)
                chan.cond.notify_all()
        self._net._record("frame", self.local_host, self.peer_host, chan.id,
                          frame, delivered=deliver)

    def recv_frame(self, timeout: float | None = None) -> Frame:
        chan = self._chan
        with chan.cond:
            while True:
                if chan.queues[self._side]:
                    return chan.queues[self._side].popleft()
                if not chan.open[self._side] or not chan.open[1 - self._side]:
                    raise ChannelClosed("channel closed with no queued frames")
                if not chan.cond.wait(timeout):
                    raise Timeout("recv_frame timed out")

    def close(self) -> None:
        with self._chan.cond:
            self._chan.open[self._side] = False
            self._chan.cond.notify_all()
        self._net._record("close", self.local_host, self.peer_host, self._chan.id, None)


class SimAcceptor:
    def __init__(self, net: "SimNetwork", node: str, port: int):
        self._net = net
        self.host = node
        self.port = port
        self._backlog: deque[SimEndpoint] = deque()
        self._cond = threading.Condition()
        self._closed = False

    @property
    def address(self) -> str:
        return f"sim://{self.host}:{self.port}"

    def accept(self, timeout: float | None = DEFAULT_TIMEOUT) -> SimEndpoint:
        with self._cond:
            while True:
                if self._backlog:
                    return self._backlog.popleft()
                if self._closed:
                    raise ChannelClosed("acceptor closed")
                if not self._cond.wait(timeout):
                    raise Timeout("accept timed out")

    def _enqueue(self, endpoint: SimEndpoint) -> None:
        with self._cond:
            if self._closed:
                raise ConnectionRefused(f"{self.address} no longer accepting")
            self._backlog.append(endpoint)
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            pending = list(self._backlog)
            self._backlog.clear()
            self._cond.notify_all()
        for ep in pending:
            ep.close()  # reset connections nobody will ever accept
        self._net._unbind(self.host, self.port)


class SimNode:
    """A named participant's handle onto the simulated network."""

    def __init__(self, net: "SimNetwork", name: str):
        self.net = net
        self.name = name

    def listen(self, port: int = 0) -> SimAcceptor:
        return self.net._listen(self.name, port)

    def connect_to(self, host: str, port: int,
                   timeout: float | None = DEFAULT_TIMEOUT) -> SimEndpoint:
        return self.net._connect(self.name, host, port)

    def connect(self, addr: str, timeout: float | None = DEFAULT_TIMEOUT) -> SimEndpoint:
        host, port = parse_sim_address(addr)
        return self.connect_to(host, port, timeout)


class SimNetwork:
    """Deterministic in-memory network with optional attacker tap."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._lock = threading.Lock()
        self._acceptors: dict[tuple[str, int], SimAcceptor] = {}
        self._channels: dict[int, _SimChannel] = {}
        self._next_port: dict[str, int] = {}
        self._next_chan = 0
        self._tap: AttackerTap | None = None
        self.trace: list[tuple] = []

    def node(self, name: str) -> SimNode:
        return SimNode(self, name)

    def attach_attacker(self, tap: AttackerTap) -> None:
        self._tap = tap

    # internal operations, called through SimNode

    def _listen(self, node: str, port: int) -> SimAcceptor:
        with self._lock:
            if port == 0:
                port = self._next_port.get(node, 1001)
                while (node, port) in self._acceptors:
                    port += 1
                self._next_port[node] = port + 1
            elif (node, port) in self._acceptors:
                raise AddressInUse(f"sim://{node}:{port}")
            acceptor = SimAcceptor(self, node, port)
            self._acceptors[(node, port)] = acceptor
        self._record("listen", node, node, -1, None, port=port)
        if self._tap is not None:
            self._tap.on_listen(node, port)
        return acceptor

    def _connect(self, src: str, host: str, port: int) -> SimEndpoint:
        with self._lock:
            acceptor = self._acceptors.get((host, port))
            if acceptor is None:
                raise ConnectionRefused(f"sim://{host}:{port} is not listening")
            chan = _SimChannel(self._next_chan, src, host)
            self._channels[chan.id] = chan
            self._next_chan += 1
        near = SimEndpoint(self, chan, 0)
        far = SimEndpoint(self, chan, 1)
        acceptor._enqueue(far)
        self._record("connect", src, host, chan.id, None, port=port)
        if self._tap is not None:
            self._tap.on_connect(src, host, port)
        return near

    def _unbind(self, node: str, port: int) -> None:
        with self._lock:
            self._acceptors.pop((node, port), None)

    def inject(self, injector: str, chan_id: int, toward: str, frame: Frame) -> None:
        """Attacker primitive: plant a frame on an existing channel as if the
        legitimate peer had sent it."""
        with self._lock:
            chan = self._channels[chan_id]
        side = chan.nodes.index(toward)
        with chan.cond:
            chan.queues[side].append(frame)
            chan.cond.notify_all()
        self._record("inject", injector, toward, chan_id, frame, delivered=True)

    def _consult_tap(self, src: str, dst: str, frame: Frame, chan_id: int) -> bool:
        if self._tap is not None and self._tap.watches(src, dst):
            return bool(self._tap.on_frame(src, dst, frame, chan_id))
        return True

    def _record(self, kind: str, src: str, dst: str, chan: int,
                frame: Frame | None, **extra) -> None:
        with self._lock:
            self.trace.append((
                len(self.trace), kind, src, dst, chan,
                frame.tag.name if frame is not None else None,
                len(frame.payload) if frame is not None else 0,
                extra,
            ))

    def channel_trace(self, chan_id: int) -> list[tuple]:
        """The per-channel projection of the trace (deterministic under FIFO)."""
        with self._lock:
            return [ev for ev in self.trace if ev[4] == chan_id]


def parse_sim_address(addr: str) -> tuple[str, int]:
    if not addr.startswith("sim://"):
        raise TransportError(f"not a simnet address: {addr!r}")
    host, _, port = addr[6:].rpartition(":")
    if not host or not port.isdigit():
        raise TransportError(f"malformed simnet address: {addr!r}")
    return host, int(port)


# -- TCP transport ---------------------------------------------------------------

class TcpEndpoint:
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._send_lock = threading.Lock()
        self._recv_lock = threading.Lock()
        self._closed = False

    @property
    def local_host(self) -> str:
        return self._sock.getsockname()[0]

    @property
    def peer_host(self) -> str:
        return self._sock.getpeername()[0]

    @property
    def is_open(self) -> bool:
        return not self._closed

    def send_frame(self, frame: Frame) -> None:
        data = encode_frame(frame)
        with self._send_lock:
            if self._closed:
                raise ChannelClosed("endpoint closed")
            try:
                self._sock.sendall(data)
            except (BrokenPipeError, ConnectionResetError, OSError) as exc:
                raise ChannelClosed(str(exc)) from exc

    def recv_frame(self, timeout: float | None = None) -> Frame:
        with self._recv_lock:
            if self._closed:
                raise ChannelClosed("endpoint closed")
            self._sock.settimeout(timeout)
            try:
                header = self._read_exact(HEADER_LEN)
                length = int.from_bytes(header[1:4], "big")
                payload = self._read_exact(length)
            except socket.timeout as exc:
                raise Timeout("recv_frame timed out") from exc
            except OSError as exc:
                raise ChannelClosed(str(exc)) from exc
        return decode_frame(header + payload)

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self._sock.recv(n - len(buf))
            if not chunk:
                raise ChannelClosed("peer closed")
            buf.extend(chunk)
        return bytes(buf)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class TcpAcceptor:
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self.host, self.port = sock.getsockname()[:2]

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def accept(self, timeout: float | None = DEFAULT_TIMEOUT) -> TcpEndpoint:
        self._sock.settimeout(timeout)
        try:
            conn, _ = self._sock.accept()
        except socket.timeout as exc:
            raise Timeout("accept timed out") from exc
        except OSError as exc:
            raise ChannelClosed(str(exc)) from exc
        conn.settimeout(None)
        return TcpEndpoint(conn)

    def close(self) -> None:
        self._sock.close()


class TcpNetwork:
    def __init__(self, bind_host: str = "127.0.0.1",
                 timeout: float = DEFAULT_TIMEOUT):
        self.bind_host = bind_host
        self.timeout = timeout

    def node(self, name: str) -> "TcpNetwork":
        return self  # node identity is meaningless over real sockets

    def listen(self, port: int = 0) -> TcpAcceptor:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            sock.bind((self.bind_host, port))
        except OSError as exc:
            sock.close()
            raise AddressInUse(f"{self.bind_host}:{port}") from exc
        sock.listen(8)
        return TcpAcceptor(sock)

    def connect_to(self, host: str, port: int,
                   timeout: float | None = None) -> TcpEndpoint:
        try:
            sock = socket.create_connection((host, port),
                                            timeout or self.timeout)
        except socket.timeout as exc:
            raise Timeout(f"{host}:{port}") from exc
        except OSError as exc:
            raise ConnectionRefused(f"{host}:{port}: {exc}") from exc
        sock.settimeout(None)
        return TcpEndpoint(sock)

    def connect(self, addr: str, timeout: float | None = None) -> TcpEndpoint:
        host, _, port = addr.rpartition(":")
        return self.connect_to(host, int(port), timeout)

    def attach_attacker(self, tap: AttackerTap) -> None:
        raise Unsupported("attacker taps exist only on the simulated network")
