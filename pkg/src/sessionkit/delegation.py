"""Reconnection-based session delegation, plain and credentialed.

Three roles cooperate to migrate a running session from the session-sender
to the session-receiver while the passive party keeps its half:

* the session-sender (`delegate`) announces the delegation over its carrier
  session with the receiver, learns the receiver's fresh port, signals the
  passive party where to reconnect, and closes its half;
* the session-receiver (`receive_delegation`) opens a fresh acceptor,
  returns the port, accepts exactly one reconnection, and replays the
  passive party's resent frames through the migrated session's monitor;
* the passive party (`handle_delegation_signal`) acknowledges the signal,
  closes the old connection, reconnects, and resends every frame the old
  peer never consumed.

In the credentialed variant the sender mints a fresh 32-byte credential,
hands it to both other parties, and the receiver admits the reconnection
only when the presented credential matches -- the answer travels back as
an OK/FAIL branch, and a FAIL tears down both the connection and the
port.  The plain variant omits all of that, which is precisely what lets
anyone who saw (or guessed) the address and port walk into the session.
"""

from __future__ import annotations

import hmac
import secrets
from dataclasses import dataclass
from typing import Optional

from .errors import (
    AuthFailed,
    ChannelClosed,
    DelegationError,
    DelegationRefused,
    InconsistentTypes,
    Timeout,
    TypeMismatch,
)
from .frames import Frame, Tag
from .protocols import (
    Received,
    Recv,
    Send,
    SessionMsg,
    SessionType,
    Sent,
    lost_message_count,
    parse_tail,
    render_tail,
)
from .runtime import ACTIVE, COUNTED_TAGS, DELEGATING, Session

CRED_LEN = 32
CRED_OK = "OK"
CRED_FAIL = "FAIL"

COMPLETED = "completed"
CREDENTIAL_REJECTED = "credential-rejected"
ABORTED = "aborted"

# every credential minted by this process, for freshness audits
credential_log: list[bytes] = []


class _NullTrace:
    def send(self, chan, to, desc, as_role=None):
        pass

    def recv(self, chan, frm, desc):
        pass

    def local(self, desc):
        pass


_NULL = _NullTrace()


@dataclass(frozen=True, eq=False)
class Credential:
    value: bytes

    def __post_init__(self):
        if len(self.value) != CRED_LEN:
            raise ValueError(f"credential must be {CRED_LEN} bytes")

    def __eq__(self, other):
        if not isinstance(other, Credential):
            return NotImplemented
        return hmac.compare_digest(self.value, other.value)

    def __hash__(self):
        return hash(self.value)


def make_credential() -> Credential:
    """A fresh 32-byte credential from the OS entropy source."""
    cred = Credential(secrets.token_bytes(CRED_LEN))
    credential_log.append(cred.value)
    return cred


def check_credential(expected: Credential, presented: Credential) -> bool:
    """Constant-time byte equality."""
    return hmac.compare_digest(expected.value, presented.value)


@dataclass(frozen=True)
class DelegationSignal:
    remaining_type: SessionType   # the sender's remaining view
    receiver_host: str
    receiver_port: int
    credential: Optional[Credential] = None


def encode_ds(ds: DelegationSignal) -> bytes:
    rendered = render_tail(ds.remaining_type).encode()
    host = ds.receiver_host.encode()
    out = len(rendered).to_bytes(2, "big") + rendered
    out += bytes([len(host)]) + host
    out += ds.receiver_port.to_bytes(2, "big")
    if ds.credential is not None:
        out += ds.credential.value
    return out


def decode_ds(payload: bytes) -> DelegationSignal:
    n = int.from_bytes(payload[:2], "big")
    pos = 2 + n
    rendered = payload[2:pos].decode()
    hn = payload[pos]
    host = payload[pos + 1:pos + 1 + hn].decode()
    pos += 1 + hn
    port = int.from_bytes(payload[pos:pos + 2], "big")
    pos += 2
    cred = Credential(payload[pos:pos + CRED_LEN]) if len(payload) > pos else None
    return DelegationSignal(parse_tail(rendered), host, port, cred)


@dataclass
class DelegationOutcome:
    status: str
    migrated: Optional[Session] = None
    reason: Optional[str] = None


@dataclass
class ReceiverContext:
    """What the session-receiver needs: somewhere to listen, and (secure
    mode) the SRP identity it accepts the reconnection under."""

    net: object
    auth: object = None
    accept_timeout: float = 5.0
    trace: object = None
    migrated_chan: str = "?"
    migrated_peer: str = "?"


@dataclass
class PassiveContext:
    """What the passive party needs to reconnect: a network handle and
    (secure mode) its own SRP credentials."""

    net: object
    auth: object = None
    timeout: float = 5.0
    trace: object = None
    migrated_chan: str = "?"
    migrated_peer: str = "?"


# -- session-sender ------------------------------------------------------------

def delegate(target: Session, carrier: Session, secure: bool,
             trace=None) -> DelegationOutcome:
    """Hand `target` off over `carrier`. Returns once the passive party has
    acknowledged and the sender's half is closed."""
    t = trace or _NULL
    head = carrier.local_remaining
    if not (isinstance(head, Send) and isinstance(head.msg, SessionMsg)):
        raise TypeMismatch(head, "delegation send")
    if head.msg.delegated != target.local_remaining:
        raise TypeMismatch(head.msg.delegated, target.local_remaining)
    if target.state != ACTIVE:
        raise DelegationError(f"target session is {target.state}")

    cred = None
    if secure:
        cred = make_credential()
        t.local("credential created")
    target.state = DELEGATING
    try:
        carrier.channel.send_frame(
            Frame(Tag.START_DELEGATION, cred.value if secure else b""))
        t.send(carrier.chan_label, carrier.peer_name,
               "START_DELEGATION::CRED" if secure else "START_DELEGATION")
        port_frame = carrier.channel.recv_frame(timeout=carrier.timeout)
        if port_frame.tag != Tag.PORT:
            raise DelegationError(f"expected PORT, got {port_frame.tag.name}")
        port = int.from_bytes(port_frame.payload, "big")
        t.recv(carrier.chan_label, carrier.peer_name, "PORT")
        ds = DelegationSignal(target.local_remaining, carrier.channel.peer_host,
                              port, cred)
        target.channel.send_frame(Frame(Tag.DS, encode_ds(ds)))
        t.send(target.chan_label, target.peer_name, "DS")
        while True:
            ack = target.channel.recv_frame(timeout=target.timeout)
            if ack.tag in COUNTED_TAGS:
                # in-flight traffic the passive party sent before seeing the
                # DS; deliberately left unconsumed, it travels again as LM
                t.recv(target.chan_label, target.peer_name,
                       f"{ack.tag.name} (unconsumed)")
                continue
            if ack.tag != Tag.DSACK:
                raise DelegationError(f"expected DSACK, got {ack.tag.name}")
            break
        t.recv(target.chan_label, target.peer_name, "DSACK")
    except (ChannelClosed, Timeout, DelegationError) as exc:
        target.force_close()
        return DelegationOutcome(ABORTED, reason=str(exc))

    target.force_close()
    t.local("close delegated session")
    carrier.advance_event(Sent(SessionMsg(ds.remaining_type)))
    return DelegationOutcome(COMPLETED)


# -- session-receiver ----------------------------------------------------------

def receive_delegation(ctx: ReceiverContext, carrier: Session,
                       secure: bool) -> DelegationOutcome:
    """Accept one migrated session announced on `carrier`."""
    t = ctx.trace or _NULL
    head = carrier.local_remaining
    if not (isinstance(head, Recv) and isinstance(head.msg, SessionMsg)):
        raise TypeMismatch(head, "delegation receive")
    migrated_type = head.msg.delegated

    start = carrier.channel.recv_frame(timeout=carrier.timeout)
    if start.tag != Tag.START_DELEGATION:
        raise DelegationError(f"expected START_DELEGATION, got {start.tag.name}")
    t.recv(carrier.chan_label, carrier.peer_name,
           "START_DELEGATION::CRED" if secure else "START_DELEGATION")
    expected_cred: Optional[Credential] = None
    if secure:
        if len(start.payload) != CRED_LEN:
            raise DelegationError("credentialed delegation announced without credential")
        expected_cred = Credential(start.payload)

    acceptor = ctx.net.listen(0)
    t.local("acceptor opened on free port")
    carrier.channel.send_frame(Frame(Tag.PORT, acceptor.port.to_bytes(2, "big")))
    t.send(carrier.chan_label, carrier.peer_name, "PORT")
    try:
        channel = acceptor.accept(timeout=ctx.accept_timeout)
        t.recv(ctx.migrated_chan, ctx.migrated_peer, "accept connection")
    except (Timeout, ChannelClosed) as exc:
        acceptor.close()
        return DelegationOutcome(ABORTED, reason=f"accept: {exc}")

    try:
        if secure:
            if ctx.auth is not None:
                channel = ctx.auth.wrap(channel)
            cred_frame = channel.recv_frame(timeout=ctx.accept_timeout)
            if cred_frame.tag != Tag.CRED or len(cred_frame.payload) != CRED_LEN:
                raise DelegationError("reconnection did not present a credential")
            t.recv(ctx.migrated_chan, ctx.migrated_peer, "CRED")
            if not check_credential(expected_cred, Credential(cred_frame.payload)):
                t.local("credential check: fail")
                channel.send_frame(
                    Frame(Tag.BRANCH, (0).to_bytes(4, "big") + CRED_FAIL.encode()))
                t.send(ctx.migrated_chan, ctx.migrated_peer, "FAIL")
                channel.close()
                acceptor.close()
                t.local("close port")
                return DelegationOutcome(CREDENTIAL_REJECTED,
                                         reason="credential mismatch")
            t.local("credential check: pass")
            channel.send_frame(
                Frame(Tag.BRANCH, (0).to_bytes(4, "big") + CRED_OK.encode()))
            t.send(ctx.migrated_chan, ctx.migrated_peer, "OK")

        lm = channel.recv_frame(timeout=ctx.accept_timeout)
        if lm.tag != Tag.LM:
            raise DelegationError(f"expected LM, got {lm.tag.name}")
    except (ChannelClosed, Timeout, AuthFailed, DelegationError) as exc:
        channel.close()
        acceptor.close()
        return DelegationOutcome(ABORTED, reason=str(exc))

    session = Session(channel, migrated_type, role="migrated",
                      timeout=ctx.accept_timeout)
    session.chan_label = ctx.migrated_chan
    session.peer_name = ctx.migrated_peer
    count = _replay_lost_messages(session, lm.payload)
    t.recv(ctx.migrated_chan, ctx.migrated_peer, f"LM ({count} frames)")
    acceptor.close()
    carrier.advance_event(Received(SessionMsg(migrated_type)))
    return DelegationOutcome(COMPLETED, migrated=session)


def _replay_lost_messages(session: Session, bundle: bytes) -> int:
    """Feed the resent frames through the monitor and re-baseline counters.

    Bundle layout: count(2) next_seq(4) peer_consumed(4), then per entry
    seq(4) tag(1) len(3) payload.  Decoded values are buffered on the
    session so ordinary receive operations deliver them.
    """
    count = int.from_bytes(bundle[0:2], "big")
    next_seq = int.from_bytes(bundle[2:6], "big")
    peer_consumed = int.from_bytes(bundle[6:10], "big")
    session.consumed = next_seq - count
    session.seq_sent = peer_consumed
    pos = 10
    for _ in range(count):
        seq = int.from_bytes(bundle[pos:pos + 4], "big")
        tag = Tag(bundle[pos + 4])
        n = int.from_bytes(bundle[pos + 5:pos + 8], "big")
        payload = bundle[pos + 8:pos + 8 + n]
        pos += 8 + n
        if seq != session.consumed:
            raise InconsistentTypes(f"resent frame out of order: {seq}")
        try:
            content = session.consume_frame(Frame(tag, payload))
        except TypeMismatch as exc:
            raise InconsistentTypes(f"lost-message replay violates type: {exc}") from exc
        kind = {Tag.DATA: "value", Tag.BRANCH: "label", Tag.ITER: "iter"}[tag]
        session.buffer_replayed(kind, content)
    if pos != len(bundle):
        raise InconsistentTypes("trailing bytes in lost-message bundle")
    return count


# -- passive party ---------------------------------------------------------------

def handle_delegation_signal(ctx: PassiveContext, target: Session,
                             secure: bool) -> Session:
    """Consume the pending delegation signal on `target` and migrate it."""
    frame = target.channel.recv_frame(timeout=ctx.timeout)
    if frame.tag != Tag.DS:
        raise DelegationError(f"expected DS, got {frame.tag.name}")
    return complete_delegation_signal(ctx, target, decode_ds(frame.payload), secure)


def complete_delegation_signal(ctx: PassiveContext, target: Session,
                               ds: DelegationSignal, secure: bool) -> Session:
    """The post-DS half of the passive role: ack, close, reconnect, resend."""
    t = ctx.trace or _NULL
    t.recv(target.chan_label, target.peer_name, "DS")
    if secure and ds.credential is None:
        raise DelegationError("delegation signal lacks the session credential")
    target.channel.send_frame(Frame(Tag.DSACK))
    t.send(target.chan_label, target.peer_name, "DSACK")
    target.force_close()
    t.local("close delegated session")

    k = lost_message_count(target.local_remaining, ds.remaining_type)
    if k > len(target.sent_unacked):
        raise InconsistentTypes(
            f"{k} lost messages but only {len(target.sent_unacked)} unacked frames")
    resend = list(target.sent_unacked)[len(target.sent_unacked) - k:]

    channel = ctx.net.connect_to(ds.receiver_host, ds.receiver_port,
                                 timeout=ctx.timeout)
    t.send(ctx.migrated_chan, ctx.migrated_peer, "connect")
    if secure:
        if ctx.auth is not None:
            try:
                channel = ctx.auth.wrap(channel)
            except (AuthFailed, ChannelClosed) as exc:
                raise DelegationRefused(f"receiver dropped the reconnection: {exc}") \
                    from exc
        channel.send_frame(Frame(Tag.CRED, ds.credential.value))
        t.send(ctx.migrated_chan, ctx.migrated_peer, "CRED")
        try:
            verdict = channel.recv_frame(timeout=ctx.timeout)
        except ChannelClosed:
            raise DelegationRefused("receiver closed during credential check") from None
        if verdict.tag != Tag.BRANCH or verdict.payload[4:].decode() != CRED_OK:
            t.recv(ctx.migrated_chan, ctx.migrated_peer, "FAIL")
            channel.close()
            raise DelegationRefused("receiver rejected the session credential")
        t.recv(ctx.migrated_chan, ctx.migrated_peer, "OK")

    bundle = len(resend).to_bytes(2, "big")
    bundle += target.seq_sent.to_bytes(4, "big")
    bundle += target.consumed.to_bytes(4, "big")
    for seq, frame in resend:
        bundle += seq.to_bytes(4, "big") + bytes([frame.tag])
        bundle += len(frame.payload).to_bytes(3, "big") + frame.payload
    channel.send_frame(Frame(Tag.LM, bundle))
    t.send(ctx.migrated_chan, ctx.migrated_peer, f"LM ({len(resend)} frames)")

    target.channel = channel
    target.state = ACTIVE
    target.sent_unacked = type(target.sent_unacked)(resend)
    target.chan_label = ctx.migrated_chan
    target.peer_name = ctx.migrated_peer
    return target


def install_transparent_reconnect(session: Session, ctx: PassiveContext,
                                  secure: bool) -> None:
    """Make delegation invisible to this session's role code: a DS arriving
    mid-receive triggers the full passive-party reconnection in place."""

    def on_signal(sess: Session, payload: bytes) -> None:
        complete_delegation_signal(ctx, sess, decode_ds(payload), secure)

    session.on_delegation_signal = on_signal
