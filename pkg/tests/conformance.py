"""Partial-order conformance matcher for delegation runs.

Normalizes both model-checker trace labels and demo transcript events into
one record shape, then checks that the numbered protocol steps each occur
exactly once and respect the step ordering: a strict chain up to the
acknowledgment, the two closes unordered relative to each other, then the
reconnection tail.  Extra events (application traffic, handshakes) are
ignored.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class NormEvent:
    role: str
    kind: str   # send | recv | local
    desc: str


def normalize_model_label(label) -> NormEvent:
    role, action, chan, payload = label
    if action in ("send", "recv"):
        return NormEvent(role, action, payload)
    if action == "connect":
        return NormEvent(role, "send", "connect")
    return NormEvent(role, "local", action if not payload else f"{action} {payload}")


def normalize_tevent(ev) -> NormEvent:
    return NormEvent(ev.role, ev.kind, ev.desc)


def _is(kind, *alternatives):
    # a trailing '*' marks a prefix alternative; everything else is exact
    def pred(ev: NormEvent, role: str) -> bool:
        if ev.role != role or ev.kind != kind:
            return False
        return any(ev.desc.startswith(alt[:-1]) if alt.endswith("*")
                   else ev.desc == alt for alt in alternatives)
    return pred


def fig_steps(secure: bool):
    """(step -> (role_key, predicate), ordering constraints) for one figure."""
    steps = {}
    if secure:
        steps["1:cred"] = ("sender", _is("local", "credential created",
                                         "make_credential"))
        steps["2:start"] = ("sender", _is("send", "START_DELEGATION::CRED"))
    else:
        steps["2:start"] = ("sender", _is("send", "START_DELEGATION"))
    steps["3:open"] = ("receiver", _is("local", "acceptor opened on free port",
                                       "open_port"))
    steps["4:port"] = ("receiver", _is("send", "PORT"))
    steps["5:ds"] = ("sender", _is("send", "DS"))
    steps["6:dsack"] = ("passive", _is("send", "DSACK"))
    steps["7:close_a"] = ("passive", _is("local", "close delegated session",
                                         "close"))
    steps["7':close_b"] = ("sender", _is("local", "close delegated session",
                                         "close"))
    steps["8:connect"] = ("passive", _is("send", "connect"))
    if secure:
        steps["9:cred"] = ("passive", _is("send", "CRED"))
        steps["9':check"] = ("receiver", _is("recv", "CRED"))
        steps["9a:ok"] = ("receiver", _is("send", "OK"))
    steps["10:lm"] = ("passive", _is("send", "LM (*", "('lm*"))

    chain = ["2:start", "3:open", "4:port", "5:ds", "6:dsack"]
    if secure:
        chain = ["1:cred"] + chain
    order = list(zip(chain, chain[1:]))
    order += [("6:dsack", "7:close_a"), ("6:dsack", "7':close_b"),
              ("7:close_a", "8:connect")]
    if secure:
        order += [("8:connect", "9:cred"), ("9:cred", "9':check"),
                  ("9':check", "9a:ok"), ("9a:ok", "10:lm")]
    else:
        order += [("8:connect", "10:lm")]
    return steps, order


def check_conformance(events: list[NormEvent], secure: bool,
                      roles: dict[str, str]) -> list[str]:
    """Empty list when the run matches the figure; problems otherwise.

    `roles` maps role keys (passive/sender/receiver) to role names as they
    appear in the events.
    """
    steps, order = fig_steps(secure)
    problems = []
    positions = {}
    for step, (role_key, pred) in steps.items():
        role = roles[role_key]
        hits = [i for i, ev in enumerate(events) if pred(ev, role)]
        if len(hits) != 1:
            problems.append(f"step {step}: expected exactly one match, got {len(hits)}")
        elif hits:
            positions[step] = hits[0]
    for before, after in order:
        if before in positions and after in positions:
            if not positions[before] < positions[after]:
                problems.append(f"ordering violated: {before} must precede {after}")
    return problems


def model_trace_conforms(trace, secure: bool) -> list[str]:
    events = [normalize_model_label(l) for l in trace]
    return check_conformance(events, secure,
                             {"passive": "A", "sender": "B", "receiver": "C"})


def model_traces_conform(traces, secure: bool) -> list[str]:
    """Bulk variant: classify the (small) label alphabet once, then validate
    each distinct erased step sequence."""
    steps, order = fig_steps(secure)
    roles = {"passive": "A", "sender": "B", "receiver": "C"}
    alphabet = {label for trace in traces for label in trace}
    label_step = {}
    for label in alphabet:
        ev = normalize_model_label(label)
        hits = [step for step, (rk, pred) in steps.items() if pred(ev, roles[rk])]
        if len(hits) > 1:
            return [f"label {label} matches several steps: {hits}"]
        if hits:
            label_step[label] = hits[0]
    problems = []
    required = set(steps)
    for erased in {tuple(label_step[l] for l in tr if l in label_step)
                   for tr in traces}:
        if sorted(erased) != sorted(required):
            problems.append(f"steps missing or repeated in {erased}")
            continue
        pos = {step: i for i, step in enumerate(erased)}
        problems.extend(
            f"ordering violated in {erased}: {b} before {a}"
            for b, a in order if not pos[b] < pos[a])
    return problems


def demo_events_conform(events, secure: bool) -> list[str]:
    normed = [normalize_tevent(ev) for ev in events]
    return check_conformance(normed, secure,
                             {"passive": "C", "sender": "V", "receiver": "H"})
