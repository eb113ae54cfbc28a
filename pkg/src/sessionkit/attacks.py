"""Scripted network-attacker strategies against the delegation protocols.

Two attacks on the purchase scenario, both run from a dedicated attacker
node on the simulated network:

* `DsTheftAttack` (plain delegation): the tap copies the victim channel,
  steals the in-flight credit card frame, suppresses the delegation signal,
  forges the acknowledgment to the vendor, and reconnects to the handler
  first -- the original protocol accepts anyone who shows up, so the
  attacker walks away with the receipt.

* `PortRaceAttack` (credentialed delegation over SRP): the wire is opaque,
  so the attacker works from connection metadata alone (it sees the
  handler's fresh port appear, the moral equivalent of a port scan),
  authenticates as a legitimately registered but different user, and races
  the customer to the port.  Without the session credential the handler
  turns it away; `leak_cred` hands the credential over out of band to
  demonstrate that the check, not obscurity, is doing the work.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field

from .delegation import credential_log, decode_ds
from .demo import (
    DEMO_PASSWORDS,
    DemoConfig,
    purchase_role_fns,
    run_role_threads,
)
from .errors import SessionKitError
from .frames import Frame, Tag
from .protocols import End, OutIter, Recv, Send, SelectBranch, InIter, OfferBranch, dual
from .runtime import COUNTED_TAGS, Session, TypedValue
from .srp import ClientAuth, SrpSuite
from .transcript import Recorder, TEvent
from .transport import AttackerTap, SimNetwork

INFILTRATED = "INFILTRATED"
BLOCKED = "BLOCKED"


@dataclass
class AttackResult:
    verdict: str
    reason: str
    stolen: list = field(default_factory=list)
    outcomes: dict = field(default_factory=dict)
    events: list[TEvent] = field(default_factory=list)


def _leading_recv_count(t) -> int:
    k = 0
    while isinstance(t, Recv):
        k += 1
        t = t.cont
    return k


def _strip_inputs(t, k: int):
    for _ in range(k):
        t = t.cont
    return t


def _drive_as_victim(session: Session, trace, chan: str, peer: str,
                     spoof: str) -> list[TypedValue]:
    """Play the migrated session to completion the way the victim would."""
    received = []
    while not isinstance(session.local_remaining, End):
        head = session.local_remaining
        if isinstance(head, Send):
            session.send_value(TypedValue(head.msg.name, b"forged"))
            trace.send(chan, peer, f"{head.msg.name} (forged)", as_role=spoof)
        elif isinstance(head, Recv):
            value = session.recv_value()
            received.append(value)
            trace.recv(chan, peer, value.type_name, as_role=spoof)
        elif isinstance(head, SelectBranch):
            label = head.labels()[0]
            session.select_label(label)
            trace.send(chan, peer, label, as_role=spoof)
        elif isinstance(head, OfferBranch):
            trace.recv(chan, peer, session.offer_labels(), as_role=spoof)
        elif isinstance(head, OutIter):
            session.iter_continue(False)
            trace.send(chan, peer, "ITER exit", as_role=spoof)
        elif isinstance(head, InIter):
            session.iter_follow()
    return received


class DsTheftTap(AttackerTap):
    """Copy everything between passive party and sender; swallow the DS."""

    def __init__(self, passive: str, sender: str):
        self.passive = passive
        self.sender = sender
        self.captured: list[Frame] = []   # counted frames passive -> sender
        self.sent_by_sender = 0           # counted frames sender -> passive
        self.ds_payload: bytes | None = None
        self.chan_id: int | None = None
        self.ready = threading.Event()
        self._lock = threading.Lock()

    def watches(self, src: str, dst: str) -> bool:
        return {src, dst} == {self.passive, self.sender}

    def on_frame(self, src: str, dst: str, frame: Frame, chan_id: int) -> bool:
        with self._lock:
            if src == self.passive:
                if frame.tag in COUNTED_TAGS:
                    self.captured.append(frame)
                return True
            if frame.tag == Tag.DS:
                self.ds_payload = frame.payload
                self.chan_id = chan_id
                self.ready.set()
                return False  # the passive party never learns
            if frame.tag in COUNTED_TAGS:
                self.sent_by_sender += 1
            return True


class DsTheftAttack:
    """The reconnection attack on the plain resending protocol."""

    def __init__(self, net: SimNetwork, recorder: Recorder, *,
                 attacker: str = "E", passive: str = "C", sender: str = "V",
                 receiver_chan: str = "C-H", receiver_peer: str = "H",
                 victim_chan: str = "C-V",
                 expected_captures: int, timeout: float = 5.0):
        self.net = net
        self.trace = recorder.role(attacker)
        self.attacker = attacker
        self.passive = passive
        self.sender = sender
        self.receiver_chan = receiver_chan
        self.receiver_peer = receiver_peer
        self.victim_chan = victim_chan
        self.expected_captures = expected_captures
        self.timeout = timeout
        self.tap = DsTheftTap(passive, sender)
        net.attach_attacker(self.tap)
        self.result: AttackResult | None = None

    def _await_captures(self):
        if not self.tap.ready.wait(self.timeout):
            raise SessionKitError("no delegation signal observed")
        # the victim's last in-flight frames trail the DS only by scheduling
        deadline = time.monotonic() + self.timeout
        while time.monotonic() < deadline:
            with self.tap._lock:
                if len(self.tap.captured) >= self.expected_captures:
                    return
            time.sleep(0.001)
        raise SessionKitError("expected in-flight frames never appeared")

    def run(self) -> AttackResult:
        t = self.trace
        self._await_captures()
        ds = decode_ds(self.tap.ds_payload)
        t.local("DS intercepted: remaining type, address, port"
                + (", credential" if ds.credential else ""))
        self.net.inject(self.attacker, self.tap.chan_id, self.sender,
                        Frame(Tag.DSACK))
        t.send(self.victim_chan, self.sender, "DSACK (forged)",
               as_role=self.passive)

        channel = self.net.node(self.attacker).connect_to(
            ds.receiver_host, ds.receiver_port, timeout=self.timeout)
        t.send(self.receiver_chan, self.receiver_peer, "connect",
               as_role=self.passive)
        if ds.credential is not None:
            channel.send_frame(Frame(Tag.CRED, ds.credential.value))
            t.send(self.receiver_chan, self.receiver_peer, "CRED (stolen)",
                   as_role=self.passive)
            verdict = channel.recv_frame(timeout=self.timeout)
            if verdict.payload[4:].decode() != "OK":
                self.result = AttackResult(BLOCKED, "credential rejected")
                return self.result
            t.recv(self.receiver_chan, self.receiver_peer, "OK",
                   as_role=self.passive)

        k = _leading_recv_count(ds.remaining_type)
        resend = self.tap.captured[len(self.tap.captured) - k:]
        next_seq = len(self.tap.captured)
        bundle = k.to_bytes(2, "big") + next_seq.to_bytes(4, "big")
        bundle += self.tap.sent_by_sender.to_bytes(4, "big")
        for i, frame in enumerate(resend):
            bundle += (next_seq - k + i).to_bytes(4, "big") + bytes([frame.tag])
            bundle += len(frame.payload).to_bytes(3, "big") + frame.payload
        channel.send_frame(Frame(Tag.LM, bundle))
        t.send(self.receiver_chan, self.receiver_peer,
               f"LM ({k} frames, stolen)", as_role=self.passive)

        session = Session(channel, dual(_strip_inputs(ds.remaining_type, k)),
                          role="attacker", timeout=self.timeout)
        session.seq_sent = next_seq
        received = _drive_as_victim(session, t, self.receiver_chan,
                                    self.receiver_peer, self.passive)
        t.local("session completed while masquerading as the passive party")
        stolen = [TypedValue.decode(f.payload[4:]) for f in resend
                  if f.tag == Tag.DATA] + received
        self.result = AttackResult(INFILTRATED,
                                   "reconnection completed without any credential"
                                   if ds.credential is None else
                                   "reconnection completed with stolen credential",
                                   stolen=stolen)
        return self.result


class PortRaceTap(AttackerTap):
    """Metadata-only observer: hands fresh listening ports to the attacker."""

    def __init__(self, receiver: str, attacker: str, net: SimNetwork):
        self.receiver = receiver
        self.attacker = attacker
        self.net = net
        self.armed = False
        self.connections: queue.Queue = queue.Queue()

    def on_listen(self, node: str, port: int) -> None:
        if not self.armed or node != self.receiver:
            return
        # synchronous connect from inside listen(): the attacker's SYN is
        # first in the backlog, deterministically winning the race
        endpoint = self.net.node(self.attacker).connect_to(node, port)
        self.connections.put(endpoint)


class PortRaceAttack:
    """Race the passive party to the receiver's fresh port (secure variant)."""

    def __init__(self, net: SimNetwork, recorder: Recorder, *,
                 attacker: str = "E", passive: str = "C", receiver: str = "H",
                 receiver_chan: str = "C-H", delegated_type=None,
                 srp: bool = True, srp_identity: tuple[str, str] | None = None,
                 leak_cred: bool = False, timeout: float = 5.0):
        self.net = net
        self.trace = recorder.role(attacker)
        self.attacker = attacker
        self.passive = passive
        self.receiver = receiver
        self.receiver_chan = receiver_chan
        self.delegated_type = delegated_type
        self.srp = srp
        self.srp_identity = srp_identity or DEMO_PASSWORDS[attacker]
        self.leak_cred = leak_cred
        self.timeout = timeout
        self.tap = PortRaceTap(receiver, attacker, net)
        net.attach_attacker(self.tap)
        self.result: AttackResult | None = None

    def arm(self):
        self.tap.armed = True

    def run(self) -> AttackResult:
        t = self.trace
        try:
            endpoint = self.tap.connections.get(timeout=self.timeout)
        except queue.Empty:
            self.result = AttackResult(BLOCKED, "no reconnection port observed")
            return self.result
        t.local("fresh port observed on the receiver (connection metadata)")
        t.send(self.receiver_chan, self.receiver, "connect", as_role=self.passive)
        channel = endpoint
        if self.srp:
            username, password = self.srp_identity
            try:
                channel = ClientAuth(SrpSuite(), username, password).wrap(endpoint)
            except SessionKitError as exc:
                self.result = AttackResult(BLOCKED, f"transport rejected us: {exc}")
                return self.result
            t.local("authenticated as a registered (but wrong) user")

        if self.leak_cred:
            cred = credential_log[-1]
            t.local("session credential obtained out of band")
        else:
            cred = bytes(32)  # best guess
        channel.send_frame(Frame(Tag.CRED, cred))
        t.send(self.receiver_chan, self.receiver, "CRED (guessed)"
               if not self.leak_cred else "CRED (leaked)", as_role=self.passive)
        try:
            verdict = channel.recv_frame(timeout=self.timeout)
        except SessionKitError:
            self.result = AttackResult(BLOCKED, "credential rejected")
            return self.result
        label = verdict.payload[4:].decode() if verdict.tag == Tag.BRANCH else "?"
        if label != "OK":
            t.recv(self.receiver_chan, self.receiver, "FAIL", as_role=self.passive)
            self.result = AttackResult(BLOCKED, "credential rejected")
            return self.result
        t.recv(self.receiver_chan, self.receiver, "OK", as_role=self.passive)

        # fabricate the resend phase from public protocol knowledge
        k = _leading_recv_count(self.delegated_type)
        bundle = k.to_bytes(2, "big") + k.to_bytes(4, "big") + (0).to_bytes(4, "big")
        node = self.delegated_type
        for i in range(k):
            forged = TypedValue(node.msg.name, b"forged").encode()
            payload = (0).to_bytes(4, "big") + forged
            bundle += i.to_bytes(4, "big") + bytes([Tag.DATA])
            bundle += len(payload).to_bytes(3, "big") + payload
            node = node.cont
        channel.send_frame(Frame(Tag.LM, bundle))
        t.send(self.receiver_chan, self.receiver, f"LM ({k} frames, forged)",
               as_role=self.passive)
        session = Session(channel, dual(node), role="attacker",
                          timeout=self.timeout)
        session.seq_sent = k
        received = _drive_as_victim(session, t, self.receiver_chan,
                                    self.receiver, self.passive)
        t.local("session completed while masquerading as the passive party")
        self.result = AttackResult(INFILTRATED,
                                   "leaked credential accepted", stolen=received)
        return self.result


def run_attack(mode: str, seed: int = 0, leak_cred: bool = False,
               timeout: float = 5.0) -> AttackResult:
    """Stage the DS-interception attack against the purchase scenario."""
    if mode not in ("original", "secure"):
        raise ValueError(f"unknown attack mode {mode!r}")
    secure = mode == "secure"
    config = DemoConfig(transport="sim", secure=secure, seed=seed, timeout=timeout)
    net = SimNetwork(seed=seed)
    recorder = Recorder()
    v_acc = net.node("V").listen(0)
    h_acc = net.node("H").listen(0)
    iterations = 1

    if secure:
        from . import data_path
        from .protocols import parse_protocol_file
        decls = parse_protocol_file(data_path("purchase.sj").read_text())
        delegated = decls["handlerToVendor"].body.msg.delegated
        attack = PortRaceAttack(net, recorder, delegated_type=delegated,
                                srp=True, leak_cred=leak_cred, timeout=timeout)
        attack.arm()
    else:
        attack = DsTheftAttack(net, recorder,
                               expected_captures=2 * iterations + 3 + 1,
                               timeout=timeout)

    role_fns = purchase_role_fns(config, net, recorder, v_acc, h_acc,
                                 iterations=iterations, checkout=True)
    role_fns["E"] = attack.run
    outcomes = run_role_threads(role_fns, timeout * 4 + 5)
    result = attack.result or AttackResult(BLOCKED, "attack never ran")
    result.outcomes = outcomes
    result.events = recorder.canonical(seed=seed)
    return result
