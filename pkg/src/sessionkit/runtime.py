"""Typed session endpoints: initiation with duality validation, monitored I/O.

A Session owns a channel (plain Endpoint or SecureChannel, same surface)
and a remaining session type that the monitor advances exactly once per
successful operation.  Any frame or operation that disagrees with the head
of the remaining type aborts the session with TypeMismatch before a value
is ever delivered.

Every DATA/BRANCH/ITER frame piggybacks the sender's consumed-frame count;
receivers use it to prune `sent_unacked`, the FIFO of own frames the peer
has not yet consumed.  That FIFO is exactly what must be resent when a
session reconnects during delegation.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import (
    ChannelClosed,
    NonDualPeer,
    PrematureClose,
    SessionKitError,
    TypeMismatch,
    UnknownLabel,
)
from .frames import Frame, Tag
from .protocols import (
    CLIENT,
    SERVER,
    BaseType,
    Begin,
    End,
    InIter,
    IterEntered,
    IterExited,
    Offered,
    OfferBranch,
    OutIter,
    Received,
    Recv,
    Selected,
    SelectBranch,
    Send,
    SessionType,
    Sent,
    advance,
    is_dual,
    parse_protocol,
    render_protocol,
)

ACTIVE = "active"
DELEGATING = "delegating"
CLOSED = "closed"

COUNTED_TAGS = (Tag.DATA, Tag.BRANCH, Tag.ITER)


@dataclass(frozen=True)
class TypedValue:
    type_name: str
    data: bytes

    def encode(self) -> bytes:
        name = self.type_name.encode()
        if len(name) > 0xFF:
            raise ValueError("type name too long")
        return bytes([len(name)]) + name + self.data

    @classmethod
    def decode(cls, raw: bytes) -> "TypedValue":
        n = raw[0]
        return cls(raw[1:1 + n].decode(), raw[1 + n:])


class Session:
    """One endpoint of a running, monitored session."""

    def __init__(self, channel, local_remaining: SessionType, role: str,
                 timeout: float | None = 5.0):
        self.channel = channel
        self.local_remaining = local_remaining
        self.role = role
        self.state = ACTIVE
        self.timeout = timeout
        self.chan_label = "?"      # transcript labelling, set by role code
        self.peer_name = "?"
        self.seq_sent = 0          # counted frames sent so far
        self.consumed = 0          # counted frames received so far
        self.sent_unacked: deque[tuple[int, Frame]] = deque()
        # content consumed during lost-message replay, awaiting delivery
        self._replayed: deque[tuple[str, object]] = deque()
        # invoked when a delegation signal arrives mid-receive; installed by
        # the delegation layer to make migration transparent to role code
        self.on_delegation_signal: Optional[Callable] = None
        self._lock = threading.Lock()

    # -- plumbing ---------------------------------------------------------

    def _require_active(self):
        if self.state != ACTIVE:
            raise SessionKitError(f"session is {self.state}")

    def _abort(self):
        self.state = CLOSED
        try:
            self.channel.close()
        except Exception:
            pass

    def _advance(self, event):
        try:
            self.local_remaining = advance(self.local_remaining, event)
        except (TypeMismatch, UnknownLabel) as exc:
            self._abort()
            if isinstance(exc, UnknownLabel):
                raise TypeMismatch(self.local_remaining, event) from exc
            raise

    def _stamp(self) -> bytes:
        return self.consumed.to_bytes(4, "big")

    def _send_counted(self, tag: Tag, body: bytes, track: bool) -> None:
        frame = Frame(tag, self._stamp() + body)
        self.channel.send_frame(frame)
        if track:
            self.sent_unacked.append((self.seq_sent, frame))
        self.seq_sent += 1

    def _prune(self, peer_progress: int) -> None:
        while self.sent_unacked and self.sent_unacked[0][0] < peer_progress:
            self.sent_unacked.popleft()

    def _recv_counted(self) -> Frame:
        while True:
            frame = self.channel.recv_frame(timeout=self.timeout)
            if frame.tag == Tag.DS:
                if self.on_delegation_signal is None:
                    self._abort()
                    raise SessionKitError("unexpected delegation signal")
                self.on_delegation_signal(self, frame.payload)
                continue
            if frame.tag == Tag.CLOSE:
                self.state = CLOSED
                self.channel.close()
                raise ChannelClosed("peer closed the session")
            if frame.tag not in COUNTED_TAGS:
                self._abort()
                raise TypeMismatch(self.local_remaining, frame.tag.name)
            self._prune(int.from_bytes(frame.payload[:4], "big"))
            return frame

    def advance_event(self, event) -> None:
        """Advance the monitor for an event performed outside the typed ops
        (the delegation layer's higher-order send/receive)."""
        self._advance(event)

    def buffer_replayed(self, kind: str, content) -> None:
        """Queue content whose monitor advancement already happened during
        lost-message replay; the next matching receive operation delivers it."""
        self._replayed.append((kind, content))

    def replayed_pending(self) -> int:
        return len(self._replayed)

    def _pop_replayed(self, kind: str):
        tagged_kind, content = self._replayed.popleft()
        if tagged_kind != kind:
            self._abort()
            raise TypeMismatch(kind, tagged_kind)
        return content

    def consume_frame(self, frame: Frame):
        """Run one received counted frame through the monitor.

        Returns the decoded content (TypedValue, label, or iteration
        decision).  Shared by the normal receive path and lost-message
        replay after reconnection.
        """
        body = frame.payload[4:]
        if frame.tag == Tag.DATA:
            value = TypedValue.decode(body)
            self._advance(Received(BaseType(value.type_name)))
            self.consumed += 1
            return value
        if frame.tag == Tag.BRANCH:
            label = body.decode()
            self._advance(Offered(label))
            self.consumed += 1
            return label
        if frame.tag == Tag.ITER:
            again = bool(body[0])
            self._advance(IterEntered(out=False) if again else IterExited(out=False))
            self.consumed += 1
            return again
        raise AssertionError(frame.tag)

    # -- typed operations ----------------------------------------------------

    def send_value(self, value: TypedValue) -> None:
        self._require_active()
        self._advance(Sent(BaseType(value.type_name)))
        self._send_counted(Tag.DATA, value.encode(), track=True)

    def recv_value(self, expect: str | None = None) -> TypedValue:
        self._require_active()
        if self._replayed:
            value = self._pop_replayed("value")
        else:
            if not isinstance(self.local_remaining, Recv):
                self._abort()
                raise TypeMismatch(self.local_remaining, "recv_value")
            frame = self._recv_counted()
            value = self.consume_frame(frame)
            if not isinstance(value, TypedValue):
                raise TypeMismatch("value", value)
        if expect is not None and value.type_name != expect:
            self._abort()
            raise TypeMismatch(expect, value.type_name)
        return value

    def select_label(self, label: str) -> None:
        self._require_active()
        head = self.local_remaining
        if not isinstance(head, SelectBranch):
            self._abort()
            raise TypeMismatch(head, Selected(label))
        if label not in head.labels():
            raise UnknownLabel(label)  # nothing hit the wire; session survives
        self._advance(Selected(label))
        self._send_counted(Tag.BRANCH, label.encode(), track=True)

    def offer_labels(self) -> str:
        self._require_active()
        if self._replayed:
            return self._pop_replayed("label")
        if not isinstance(self.local_remaining, OfferBranch):
            self._abort()
            raise TypeMismatch(self.local_remaining, "offer_labels")
        frame = self._recv_counted()
        label = self.consume_frame(frame)
        if not isinstance(label, str):
            raise TypeMismatch("label", label)
        return label

    def iter_continue(self, again: bool) -> None:
        self._require_active()
        if not isinstance(self.local_remaining, OutIter):
            self._abort()
            raise TypeMismatch(self.local_remaining, "iter_continue")
        self._advance(IterEntered(out=True) if again else IterExited(out=True))
        self._send_counted(Tag.ITER, bytes([int(again)]), track=False)

    def iter_follow(self) -> bool:
        self._require_active()
        if self._replayed:
            return self._pop_replayed("iter")
        if not isinstance(self.local_remaining, InIter):
            self._abort()
            raise TypeMismatch(self.local_remaining, "iter_follow")
        frame = self._recv_counted()
        again = self.consume_frame(frame)
        if not isinstance(again, bool):
            raise TypeMismatch("iteration decision", again)
        return again

    def close(self) -> None:
        """Clean close. Raises PrematureClose (after closing) mid-protocol."""
        if self.state == CLOSED:
            return
        premature = self.state == ACTIVE and not isinstance(self.local_remaining, End)
        self.state = CLOSED
        try:
            self.channel.send_frame(Frame(Tag.CLOSE, self._stamp()))
        except ChannelClosed:
            pass
        self.channel.close()
        if premature:
            raise PrematureClose(f"closed with remaining type {self.local_remaining!r}")

    def force_close(self) -> None:
        """Transport-level close during delegation; no CLOSE frame, no complaint."""
        self.state = CLOSED
        self.channel.close()


def _exchange_types(channel, own: Begin, timeout: float | None):
    channel.send_frame(Frame(Tag.DATA, render_protocol(own, "init").encode()))
    frame = channel.recv_frame(timeout=timeout)
    if frame.tag != Tag.DATA:
        raise NonDualPeer("peer did not announce a session type")
    theirs = parse_protocol(frame.payload.decode())
    if not is_dual(own, theirs):
        channel.close()
        raise NonDualPeer(
            f"peer type is not dual to ours: {render_protocol(theirs)!r}"
        )


def request_session(net, host: str, port: int, t: SessionType,
                    auth=None, timeout: float | None = 5.0) -> Session:
    """Connect, exchange rendered types, and validate duality (client side)."""
    if not isinstance(t, Begin) or t.side != CLIENT:
        raise ValueError("request_session needs a cbegin-rooted protocol")
    channel = net.connect_to(host, port, timeout=timeout)
    if auth is not None:
        channel = auth.wrap(channel)
    _exchange_types(channel, t, timeout)
    return Session(channel, t.body, role="initiator", timeout=timeout)


def accept_session(acceptor, t: SessionType,
                   auth=None, timeout: float | None = 5.0) -> Session:
    """Accept one connection and validate duality (server side)."""
    if not isinstance(t, Begin) or t.side != SERVER:
        raise ValueError("accept_session needs an sbegin-rooted protocol")
    channel = acceptor.accept(timeout=timeout)
    if auth is not None:
        channel = auth.wrap(channel)
    _exchange_types(channel, t, timeout)
    return Session(channel, t.body, role="acceptor", timeout=timeout)
