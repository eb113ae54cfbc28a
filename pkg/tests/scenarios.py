"""Parameterized three-role delegation scenario for tests.

Roles follow the delegation naming convention: A is the passive party, B
the session-sender, C the session-receiver, E the optional attacker.

A sends `n` M-values to B and then waits for one R.  B consumes `consumed`
of them and delegates the rest of its half to C, so k = n - consumed
frames are in flight and must travel again over the reconnection.  C
finishes the session by draining the resent values and issuing the R.
"""

from dataclasses import dataclass, field

from sessionkit.attacks import AttackResult, DsTheftAttack, PortRaceAttack
from sessionkit.delegation import (
    COMPLETED,
    PassiveContext,
    ReceiverContext,
    delegate,
    install_transparent_reconnect,
    receive_delegation,
)
from sessionkit.demo import run_role_threads
from sessionkit.errors import SessionKitError
from sessionkit.frames import Frame, Tag
from sessionkit.protocols import parse_protocol_file, parse_tail
from sessionkit.runtime import Session, TypedValue, accept_session, request_session
from sessionkit.srp import ClientAuth, ServerAuth, SrpSuite, register
from sessionkit.transcript import Recorder
from sessionkit.transport import AttackerTap, SimNetwork


@dataclass
class ScenarioResult:
    outcomes: dict = field(default_factory=dict)
    consumed_at_b: list = field(default_factory=list)
    consumed_at_c: list = field(default_factory=list)
    received_by_a: bytes | None = None
    receiver_status: str | None = None
    migrated_type_at_completion: object = None
    a_unacked_after: int | None = None
    recorder: Recorder = None
    attack: AttackResult | None = None


def scenario_protocols(n: int, consumed: int):
    k = n - consumed
    ab = f"protocol ab {{ cbegin. {'!<M>.' * n} ?(R) }}"
    delegated = "?(M)." * k + "!<R>"
    bc = f"protocol bc {{ cbegin. !<{delegated}> }}"
    return (parse_protocol_file(ab)["ab"], parse_protocol_file(bc)["bc"],
            parse_tail(delegated))


class CredTamperTap(AttackerTap):
    """Rewrite the credential inside the (plaintext) delegation signal."""

    def __init__(self, net, sender: str, passive: str):
        self.net = net
        self.sender = sender
        self.passive = passive

    def watches(self, src, dst):
        return src == self.sender and dst == self.passive

    def on_frame(self, src, dst, frame, chan_id):
        if frame.tag == Tag.DS and len(frame.payload) >= 32:
            tampered = frame.payload[:-32] + bytes(32)
            self.net.inject("E", chan_id, dst, Frame(Tag.DS, tampered))
            return False
        return True


def run_scenario(n: int = 1, consumed: int = 0, secure: bool = True,
                 srp: bool = False, seed: int = 0,
                 attack_mode: str | None = None, leak_cred: bool = False,
                 tamper_cred: bool = False, timeout: float = 5.0) -> ScenarioResult:
    assert consumed <= n
    k = n - consumed
    ab, bc, delegated = scenario_protocols(n, consumed)
    net = SimNetwork(seed=seed)
    recorder = Recorder()
    result = ScenarioResult(recorder=recorder)

    suite = SrpSuite()
    registry = {u: register(suite, u, f"{u}-pw") for u in ("a", "b", "c", "eve")}
    def client_auth(user):
        return ClientAuth(suite, user, f"{user}-pw") if srp else None
    def server_auth():
        return ServerAuth(suite, registry) if srp else None

    b_acc = net.node("B").listen(0)
    c_acc = net.node("C").listen(0)

    attack = None
    if tamper_cred:
        net.attach_attacker(CredTamperTap(net, "B", "A"))
    elif attack_mode == "ds_theft":
        attack = DsTheftAttack(net, recorder, attacker="E", passive="A",
                               sender="B", receiver_chan="A-C", receiver_peer="C",
                               victim_chan="A-B", expected_captures=n + 1,
                               timeout=timeout)
    elif attack_mode == "port_race":
        attack = PortRaceAttack(net, recorder, attacker="E", passive="A",
                                receiver="C", receiver_chan="A-C",
                                delegated_type=delegated, srp=srp,
                                srp_identity=("eve", "eve-pw"),
                                leak_cred=leak_cred, timeout=timeout)
        attack.arm()

    def role_a():
        t = recorder.role("A")
        sess = request_session(net.node("A"), "B", b_acc.port, ab,
                               auth=client_auth("a"), timeout=timeout)
        sess.chan_label, sess.peer_name = "A-B", "B"
        install_transparent_reconnect(
            sess,
            PassiveContext(net=net.node("A"), auth=client_auth("a"),
                           timeout=timeout, trace=t,
                           migrated_chan="A-C", migrated_peer="C"),
            secure,
        )
        for i in range(n):
            sess.send_value(TypedValue("M", b"m%d" % i))
            t.send("A-B", "B", f"M[{i}]")
        r = sess.recv_value(expect="R")
        t.recv(sess.chan_label, sess.peer_name, "R")
        result.received_by_a = r.data
        result.a_unacked_after = len(sess.sent_unacked)
        sess.close()

    def role_b():
        t = recorder.role("B")
        sess = accept_session(b_acc, parse_protocol_file(
            f"protocol ba {{ sbegin. {'?(M).' * n} !<R> }}")["ba"],
            auth=server_auth(), timeout=timeout)
        sess.chan_label, sess.peer_name = "A-B", "A"
        for i in range(consumed):
            v = sess.recv_value(expect="M")
            t.recv("A-B", "A", f"M[{i}]")
            result.consumed_at_b.append(v.data)
        carrier = request_session(net.node("B"), "C", c_acc.port, bc,
                                  auth=client_auth("b"), timeout=timeout)
        carrier.chan_label, carrier.peer_name = "B-C", "C"
        outcome = delegate(sess, carrier, secure, trace=t)
        if outcome.status != COMPLETED:
            raise SessionKitError(f"delegate: {outcome.status} ({outcome.reason})")
        carrier.close()

    def role_c():
        t = recorder.role("C")
        carrier = accept_session(c_acc, parse_protocol_file(
            f"protocol cb {{ sbegin. ?({'?(M).' * k}!<R>) }}")["cb"],
            auth=server_auth(), timeout=timeout)
        carrier.chan_label, carrier.peer_name = "B-C", "B"
        ctx = ReceiverContext(net=net.node("C"), auth=server_auth(),
                              accept_timeout=timeout, trace=t,
                              migrated_chan="A-C", migrated_peer="A")
        outcome = receive_delegation(ctx, carrier, secure)
        result.receiver_status = outcome.status
        if outcome.status != COMPLETED:
            carrier.force_close()
            raise SessionKitError(f"receive: {outcome.status} ({outcome.reason})")
        migrated = outcome.migrated
        result.migrated_type_at_completion = migrated.local_remaining
        while migrated.replayed_pending():
            v = migrated.recv_value(expect="M")
            t.local(f"resent value delivered: {v.data.decode()}")
            result.consumed_at_c.append(v.data)
        migrated.send_value(TypedValue("R", b"done"))
        t.send(migrated.chan_label, migrated.peer_name, "R")
        migrated.close()
        carrier.close()

    role_fns = {"A": role_a, "B": role_b, "C": role_c}
    if attack is not None:
        role_fns["E"] = attack.run
    result.outcomes = run_role_threads(role_fns, timeout * 4 + 5)
    result.attack = attack.result if attack is not None else None
    return result
