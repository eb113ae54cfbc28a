"""Role-level event recording and canonical transcript linearization.

Each role logs its own events in program order: wire sends, wire receives,
and local actions.  Cross-role ordering is recovered from the streams: the
i-th receive on a directed stream (channel, src, dst) matches the i-th send
on that stream, regardless of which thread got scheduled when.  The merge
then emits one canonical linearization of that partial order, with a
seed-chosen role priority for tie-breaks: identical runs (same script,
same seed) produce byte-identical transcripts even though the underlying
threads interleave differently every time.

A frame another party injects into a stream while impersonating a role is
logged with `as_role`, so the victim's receive still matches it.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass


@dataclass(frozen=True)
class TEvent:
    role: str   # who performed the event
    kind: str   # "send" | "recv" | "local"
    chan: str   # channel label ("" for local events)
    src: str    # stream sender identity (may be spoofed)
    dst: str
    desc: str


class RoleTrace:
    """A recorder handle bound to one role; safe to use from that role's thread."""

    def __init__(self, recorder: "Recorder", role: str):
        self._recorder = recorder
        self.role = role

    def send(self, chan: str, to: str, desc: str, as_role: str | None = None) -> None:
        self._recorder._add(TEvent(self.role, "send", chan,
                                   as_role or self.role, to, desc))

    def recv(self, chan: str, frm: str, desc: str, as_role: str | None = None) -> None:
        self._recorder._add(TEvent(self.role, "recv", chan, frm,
                                   as_role or self.role, desc))

    def local(self, desc: str) -> None:
        self._recorder._add(TEvent(self.role, "local", "", "", "", desc))


class Recorder:
    def __init__(self):
        self._lock = threading.Lock()
        self._by_role: dict[str, list[TEvent]] = {}

    def role(self, name: str) -> RoleTrace:
        with self._lock:
            self._by_role.setdefault(name, [])
        return RoleTrace(self, name)

    def _add(self, event: TEvent) -> None:
        with self._lock:
            self._by_role.setdefault(event.role, []).append(event)

    def events_of(self, role: str) -> list[TEvent]:
        with self._lock:
            return list(self._by_role.get(role, []))

    def canonical(self, seed: int = 0) -> list[TEvent]:
        """One deterministic linearization of the recorded partial order."""
        with self._lock:
            pending = {role: list(evs) for role, evs in self._by_role.items()}
        order = sorted(pending)
        random.Random(seed).shuffle(order)
        pointers = {role: 0 for role in pending}
        sends_out: dict[tuple, int] = {}
        recvs_out: dict[tuple, int] = {}
        out: list[TEvent] = []
        remaining = sum(len(evs) for evs in pending.values())
        while remaining:
            progressed = False
            for role in order:
                events = pending[role]
                i = pointers[role]
                if i >= len(events):
                    continue
                ev = events[i]
                stream = (ev.chan, ev.src, ev.dst)
                if ev.kind == "recv" and \
                        recvs_out.get(stream, 0) >= sends_out.get(stream, 0):
                    continue
                if ev.kind == "send":
                    sends_out[stream] = sends_out.get(stream, 0) + 1
                elif ev.kind == "recv":
                    recvs_out[stream] = recvs_out.get(stream, 0) + 1
                out.append(ev)
                pointers[role] += 1
                remaining -= 1
                progressed = True
                break
            if not progressed:
                stuck = {r: pending[r][pointers[r]:] for r in order
                         if pointers[r] < len(pending[r])}
                raise ValueError(f"transcript merge stuck; unmatched receives: {stuck}")
        return out


def format_transcript(events: list[TEvent]) -> str:
    lines = []
    for i, ev in enumerate(events, 1):
        place = ev.chan if ev.kind != "local" else "-"
        lines.append(f"{i:3d}  {ev.role:<2} {ev.kind:<5} {place:<7} {ev.desc}")
    return "\n".join(lines)


def transcript_json(events: list[TEvent]) -> str:
    return json.dumps({
        "steps": [
            {"step": i, "role": ev.role, "action": ev.desc,
             "kind": ev.kind, "channel": ev.chan}
            for i, ev in enumerate(events, 1)
        ]
    }, indent=2)
