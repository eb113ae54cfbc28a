"""Bounded explicit-state checker for the two delegation protocols.

The roles' per-step programs (passive party A, session-sender B,
session-receiver C, and the optional network attacker E) are encoded
directly as small state machines over FIFO channels; the checker
enumerates every interleaving up to a state bound and evaluates the
delegation correctness properties over the terminal states.  Each state
carries the summaries the properties need (which credential travelled
where, what the receiver consumed, who the port accepted), so properties
are terminal-state predicates and a failing one comes with a shortest
witness trace, replayable against the real implementation.

The attacker taps the channel carrying the delegation signal only in the
plain protocol; under the secured variant that channel is opaque to it, so
every attacker move stays disabled forever, which is exactly the paper's
blocked-attacker argument.  E never closes its connections: terminal
states record what it still holds open.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .errors import BoundExceeded

ORIGINAL = "original"
SECURE = "secure"

PROPERTIES = (
    "Freshness",
    "TernaryAuth",
    "Consistency",
    "Liveness",
    "Linearity",
    "AttackerExclusion",
)

# directional FIFO queue slots
QAB, QBA, QBC, QCB, QAC, QCA, QEC, QCE = range(8)
_QUEUE_NAMES = ("A>B", "B>A", "B>C", "C>B", "A>C", "C>A", "E>C", "C>E")

FRESH_CRED = ("cred", "fresh")
WRONG_CRED = ("cred", "guessed")


@dataclass(frozen=True)
class RoleState:
    phase: str
    data: tuple = ()


@dataclass(frozen=True)
class MState:
    a: RoleState
    b: RoleState
    c: RoleState
    e: RoleState
    queues: tuple
    port: str = "none"          # none | open | closed
    backlog: tuple = ()
    accepted: str = ""          # "" | "A" | "E"
    cred_check: str = ""        # "" | "pass" | "fail"
    c_consumed: tuple = ()
    attacker_acted: bool = False
    e_completed: bool = False
    closes: frozenset = frozenset()


@dataclass(frozen=True)
class ProtocolModel:
    mode: str                   # ORIGINAL | SECURE
    attacker_enabled: bool
    k: int                      # unacked messages at delegation time
    bound: int = 10**6


@dataclass
class Exploration:
    initial: MState
    states: int
    terminals: dict            # MState -> classification str
    parents: dict              # MState -> (MState, move label) for witnesses
    stuck_honest: list

    def witness_to(self, state: MState) -> list:
        steps = []
        while state in self.parents:
            state, label = self.parents[state]
            steps.append(label)
        steps.reverse()
        return steps


@dataclass
class Verdict:
    property: str
    holds: bool
    witness: Optional[list] = None
    detail: str = ""


def build_model(mode: str, attacker_enabled: bool, k: int,
                bound: int = 10**6) -> ProtocolModel:
    if mode not in (ORIGINAL, SECURE):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 <= k <= 2:
        raise ValueError("k must be in 0..2")
    return ProtocolModel(mode, attacker_enabled, k, bound)


def _initial(m: ProtocolModel) -> MState:
    a0 = RoleState("send", (0,)) if m.k else RoleState("await_ds")
    b0 = RoleState("make") if m.mode == SECURE else RoleState("start", (None,))
    e0 = RoleState("watch") if m.attacker_enabled else RoleState("idle")
    return MState(a=a0, b=b0, c=RoleState("await_start"), e=e0,
                  queues=((),) * 8)


def _push(queues: tuple, slot: int, msg) -> tuple:
    return tuple(q + (msg,) if i == slot else q for i, q in enumerate(queues))


def _pop(queues: tuple, slot: int) -> tuple:
    return tuple(q[1:] if i == slot else q for i, q in enumerate(queues))


def _label(role: str, action: str, chan: int | None, payload="") -> tuple:
    chan_name = _QUEUE_NAMES[chan] if chan is not None else "-"
    return (role, action, chan_name, str(payload))


def _a_moves(m: ProtocolModel, s: MState) -> list:
    a, out = s.a, []
    if a.phase == "send":
        i = a.data[0]
        nxt = RoleState("send", (i + 1,)) if i + 1 < m.k else RoleState("await_ds")
        out.append((_label("A", "send", QAB, ("data", i)),
                    _replace(s, a=nxt, queues=_push(s.queues, QAB, ("data", i)))))
    elif a.phase == "await_ds":
        q = s.queues[QBA]
        if q and q[0][0] == "ds":
            ds = q[0]
            out.append((_label("A", "recv", QBA, "DS"),
                        _replace(s, a=RoleState("send_dsack", (ds[2],)),
                                 queues=_pop(s.queues, QBA))))
    elif a.phase == "send_dsack":
        out.append((_label("A", "send", QAB, "DSACK"),
                    _replace(s, a=RoleState("close", a.data),
                             queues=_push(s.queues, QAB, ("dsack",)))))
    elif a.phase == "close":
        out.append((_label("A", "close", None),
                    _replace(s, a=RoleState("connect", a.data),
                             closes=s.closes | {"A"})))
    elif a.phase == "connect":
        if s.port == "open":
            nxt = "send_cred" if m.mode == SECURE else "send_lm"
            out.append((_label("A", "connect", QAC),
                        _replace(s, a=RoleState(nxt, a.data),
                                 backlog=s.backlog + ("A",))))
        elif s.port == "closed":
            out.append((_label("A", "refused", None),
                        _replace(s, a=RoleState("refused"))))
    elif a.phase == "send_cred":
        out.append((_label("A", "send", QAC, "CRED"),
                    _replace(s, a=RoleState("await_verdict"),
                             queues=_push(s.queues, QAC, a.data[0]))))
    elif a.phase == "await_verdict":
        q = s.queues[QCA]
        if q and q[0] == ("ok",):
            out.append((_label("A", "recv", QCA, "OK"),
                        _replace(s, a=RoleState("send_lm"),
                                 queues=_pop(s.queues, QCA))))
        elif q and q[0] == ("fail",):
            out.append((_label("A", "recv", QCA, "FAIL"),
                        _replace(s, a=RoleState("refused"),
                                 queues=_pop(s.queues, QCA))))
    elif a.phase == "send_lm":
        values = tuple(("data", i) for i in range(m.k))
        out.append((_label("A", "send", QAC, ("lm", m.k)),
                    _replace(s, a=RoleState("await_r"),
                             queues=_push(s.queues, QAC, ("lm", values)))))
    elif a.phase == "await_r":
        q = s.queues[QCA]
        if q and q[0] == ("rdata",):
            out.append((_label("A", "recv", QCA, "R"),
                        _replace(s, a=RoleState("done"),
                                 queues=_pop(s.queues, QCA))))
    return out


def _b_moves(m: ProtocolModel, s: MState) -> list:
    b, out = s.b, []
    if b.phase == "make":
        out.append((_label("B", "make_credential", None),
                    _replace(s, b=RoleState("start", (FRESH_CRED,)))))
    elif b.phase == "start":
        cred = b.data[0]
        payload = "START_DELEGATION::CRED" if cred else "START_DELEGATION"
        out.append((_label("B", "send", QBC, payload),
                    _replace(s, b=RoleState("await_port", b.data),
                             queues=_push(s.queues, QBC, ("start", cred)))))
    elif b.phase == "await_port":
        q = s.queues[QCB]
        if q and q[0][0] == "port":
            out.append((_label("B", "recv", QCB, "PORT"),
                        _replace(s, b=RoleState("send_ds", b.data),
                                 queues=_pop(s.queues, QCB))))
    elif b.phase == "send_ds":
        cred = b.data[0]
        out.append((_label("B", "send", QBA, "DS"),
                    _replace(s, b=RoleState("await_dsack"),
                             queues=_push(s.queues, QBA, ("ds", m.k, cred)))))
    elif b.phase == "await_dsack":
        q = s.queues[QAB]
        if q and q[0][0] == "data":
            out.append((_label("B", "discard", QAB, q[0]),
                        _replace(s, queues=_pop(s.queues, QAB))))
        elif q and q[0] == ("dsack",):
            out.append((_label("B", "recv", QAB, "DSACK"),
                        _replace(s, b=RoleState("close"),
                                 queues=_pop(s.queues, QAB))))
    elif b.phase == "close":
        out.append((_label("B", "close", None),
                    _replace(s, b=RoleState("done"), closes=s.closes | {"B"})))
    return out


def _c_moves(m: ProtocolModel, s: MState) -> list:
    c, out = s.c, []
    inbound = {"A": QAC, "E": QEC}
    outbound = {"A": QCA, "E": QCE}
    if c.phase == "await_start":
        q = s.queues[QBC]
        if q and q[0][0] == "start":
            out.append((_label("C", "recv", QBC, "START_DELEGATION"),
                        _replace(s, c=RoleState("open", (q[0][1],)),
                                 queues=_pop(s.queues, QBC))))
    elif c.phase == "open":
        out.append((_label("C", "open_port", None),
                    _replace(s, c=RoleState("send_port", c.data), port="open")))
    elif c.phase == "send_port":
        out.append((_label("C", "send", QCB, "PORT"),
                    _replace(s, c=RoleState("accept", c.data),
                             queues=_push(s.queues, QCB, ("port",)))))
    elif c.phase == "accept":
        if s.backlog:
            who = s.backlog[0]
            nxt = "await_cred" if m.mode == SECURE else "await_lm"
            out.append((_label("C", "accept", None, who),
                        _replace(s, c=RoleState(nxt, c.data), accepted=who,
                                 backlog=s.backlog[1:])))
    elif c.phase == "await_cred":
        q = s.queues[inbound[s.accepted]]
        if q and q[0][0] == "cred":
            match = q[0] == c.data[0]
            nxt = "send_ok" if match else "send_fail"
            out.append((_label("C", "recv", inbound[s.accepted], "CRED"),
                        _replace(s, c=RoleState(nxt, c.data),
                                 cred_check="pass" if match else "fail",
                                 queues=_pop(s.queues, inbound[s.accepted]))))
    elif c.phase == "send_ok":
        out.append((_label("C", "send", outbound[s.accepted], "OK"),
                    _replace(s, c=RoleState("await_lm", c.data),
                             queues=_push(s.queues, outbound[s.accepted], ("ok",)))))
    elif c.phase == "send_fail":
        out.append((_label("C", "send", outbound[s.accepted], "FAIL"),
                    _replace(s, c=RoleState("close_port", c.data),
                             queues=_push(s.queues, outbound[s.accepted], ("fail",)))))
    elif c.phase == "close_port":
        out.append((_label("C", "close_port", None),
                    _replace(s, c=RoleState("rejected"), port="closed")))
    elif c.phase == "await_lm":
        q = s.queues[inbound[s.accepted]]
        if q and q[0][0] == "lm":
            out.append((_label("C", "recv", inbound[s.accepted], ("lm", len(q[0][1]))),
                        _replace(s, c=RoleState("send_r", c.data),
                                 c_consumed=q[0][1],
                                 queues=_pop(s.queues, inbound[s.accepted]))))
    elif c.phase == "send_r":
        out.append((_label("C", "send", outbound[s.accepted], "R"),
                    _replace(s, c=RoleState("done"),
                             queues=_push(s.queues, outbound[s.accepted], ("rdata",)))))
    return out


def _e_moves(m: ProtocolModel, s: MState) -> list:
    e, out = s.e, []
    if e.phase == "watch":
        # the tap reads the delegation signal only when its channel is
        # unprotected; the secure variant leaves every move disabled
        if m.mode == ORIGINAL:
            q = s.queues[QBA]
            if q and q[0][0] == "ds":
                ds = q[0]
                out.append((_label("E", "intercept", QBA, "DS"),
                            _replace(s, e=RoleState("forge_ack", (ds,)),
                                     attacker_acted=True,
                                     queues=_pop(s.queues, QBA))))
                out.append((_label("E", "copy", QBA, "DS"),
                            _replace(s, e=RoleState("forge_ack", (ds,)),
                                     attacker_acted=True)))
    elif e.phase == "forge_ack":
        out.append((_label("E", "send", QAB, "DSACK (forged)"),
                    _replace(s, e=RoleState("connect", e.data),
                             queues=_push(s.queues, QAB, ("dsack",)))))
    elif e.phase == "connect":
        if s.port == "open":
            out.append((_label("E", "connect", QEC),
                        _replace(s, e=RoleState("send_lm", e.data),
                                 backlog=s.backlog + ("E",))))
        elif s.port == "closed":
            out.append((_label("E", "blocked", None),
                        _replace(s, e=RoleState("blocked"))))
    elif e.phase == "send_lm":
        ds = e.data[0]
        k = ds[1]
        forged = tuple(("evil", i) for i in range(k))
        out.append((_label("E", "send", QEC, ("lm", k, "forged")),
                    _replace(s, e=RoleState("await_r", e.data),
                             queues=_push(s.queues, QEC, ("lm", forged)))))
    elif e.phase == "await_r":
        q = s.queues[QCE]
        if q and q[0] == ("rdata",):
            out.append((_label("E", "recv", QCE, "R"),
                        _replace(s, e=RoleState("connected"), e_completed=True,
                                 queues=_pop(s.queues, QCE))))
    return out


def _replace(s: MState, **kw) -> MState:
    fields = dict(a=s.a, b=s.b, c=s.c, e=s.e, queues=s.queues, port=s.port,
                  backlog=s.backlog, accepted=s.accepted,
                  cred_check=s.cred_check, c_consumed=s.c_consumed,
                  attacker_acted=s.attacker_acted, e_completed=s.e_completed,
                  closes=s.closes)
    fields.update(kw)
    return MState(**fields)


def moves(m: ProtocolModel, s: MState) -> list:
    return _a_moves(m, s) + _b_moves(m, s) + _c_moves(m, s) + _e_moves(m, s)


def classify(s: MState) -> str:
    if s.e_completed:
        return "infiltrated"
    if s.cred_check == "fail":
        return "credential_rejected"
    if s.a.phase == "done" and s.b.phase == "done" and s.c.phase == "done":
        return "all_completed"
    return "stuck"


def explore(m: ProtocolModel) -> Exploration:
    """Exhaustive BFS over every interleaving up to the state bound."""
    init = _initial(m)
    visited = {init}
    parents: dict = {}
    terminals: dict = {}
    frontier = deque([init])
    while frontier:
        state = frontier.popleft()
        successors = moves(m, state)
        if not successors:
            terminals[state] = classify(state)
            continue
        for label, nxt in successors:
            if nxt in visited:
                continue
            if len(visited) >= m.bound:
                raise BoundExceeded(
                    f"state bound {m.bound} reached before exploration finished")
            visited.add(nxt)
            parents[nxt] = (state, label)
            frontier.append(nxt)
    stuck_honest = [
        s for s, cls in terminals.items()
        if cls == "stuck" and not s.attacker_acted
    ]
    return Exploration(init, len(visited), terminals, parents, stuck_honest)


def all_maximal_traces(m: ProtocolModel, limit: int = 200_000) -> list:
    """Every interleaved run as a label sequence (no-attacker models stay small)."""
    traces = []
    stack = [(_initial(m), [])]
    while stack:
        state, path = stack.pop()
        successors = moves(m, state)
        if not successors:
            traces.append(path)
            if len(traces) > limit:
                raise BoundExceeded(f"more than {limit} maximal traces")
            continue
        for label, nxt in reversed(successors):
            stack.append((nxt, path + [label]))
    return traces


def _violation_verdict(name: str, exploration: Exploration, bad_states: list,
                       detail: str) -> Verdict:
    if not bad_states:
        return Verdict(name, True)
    # shortest witness: BFS parents give shortest paths already
    witness_state = min(bad_states,
                        key=lambda s: len(exploration.witness_to(s)))
    return Verdict(name, False, exploration.witness_to(witness_state), detail)


def check(m: ProtocolModel, prop: str,
          exploration: Exploration | None = None) -> Verdict:
    if prop not in PROPERTIES:
        raise ValueError(f"unknown property {prop!r}")
    ex = exploration or explore(m)
    terminals = ex.terminals

    if prop == "Freshness":
        # every delegation is driven by a fresh make-instantiated credential
        if m.mode == ORIGINAL:
            bad = [s for s, cls in terminals.items() if cls == "all_completed"]
            return _violation_verdict(prop, ex, bad,
                                      "delegation completes with no credential ever created")
        bad = [s for s in terminals
               if s.c.data and s.c.data[0] is not None and s.c.data[0] != FRESH_CRED]
        return _violation_verdict(prop, ex, bad,
                                  "receiver stored a credential not minted for this session")

    if prop == "TernaryAuth":
        bad = [s for s, cls in terminals.items()
               if cls in ("all_completed", "infiltrated") and s.cred_check != "pass"]
        return _violation_verdict(prop, ex, bad,
                                  "delegation succeeded without matching credentials")

    if prop == "Consistency":
        prescribed = tuple(("data", i) for i in range(m.k))
        bad = [s for s, cls in terminals.items()
               if s.c.phase == "done" and s.c_consumed != prescribed]
        return _violation_verdict(prop, ex, bad,
                                  "receiver consumed a different value sequence than the "
                                  "passive party sent")

    if prop == "Liveness":
        # stuck states caused solely by attacker interference are excused
        bad = [
            s for s in terminals
            if not s.attacker_acted and not (
                s.a.phase == "done" and s.b.phase == "done" and s.c.phase == "done")
        ]
        return _violation_verdict(prop, ex, bad,
                                  "an honest run got stuck with no attacker involved")

    if prop == "Linearity":
        bad = []
        for s in terminals:
            accepted_count = 1 if s.accepted else 0
            if accepted_count > 1:
                bad.append(s)
            if s.c.phase == "done" and not s.accepted:
                bad.append(s)
        return _violation_verdict(prop, ex, bad,
                                  "a port was connected by more than one pair")

    if prop == "AttackerExclusion":
        bad = [s for s, cls in terminals.items() if cls == "infiltrated"]
        return _violation_verdict(prop, ex, bad,
                                  "the attacker completed the reconnection while "
                                  "masquerading as the passive party")

    raise AssertionError(prop)


def check_all(m: ProtocolModel, props: tuple = PROPERTIES) -> list[Verdict]:
    ex = explore(m)
    return [check(m, p, ex) for p in props]
