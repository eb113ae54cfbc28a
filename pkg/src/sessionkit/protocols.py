"""The session-type language: parsing, printing, duality, and monitor stepping.

A protocol declaration describes one endpoint's view of a binary session::

    protocol customerToVendor {
      cbegin.            // client side of the session
      ?(ProductList).    // receive a value
      ![                 // iteration, terminated by this endpoint
        !<ProductId>.    // send a value
        ?(int)
      ]*.
      !{                 // branch, chosen by this endpoint
        CHECKOUT: !<CreditCard>. ?(Receipt),
        EXIT:
      }
    }

Message payloads are either opaque base type names or, for delegation,
session types themselves (`!<?(CreditCard).!<Receipt>>` sends the remaining
half of another session).  The dual view flips every direction marker and
the begin side; two endpoints may only be connected when their declared
types are mutually dual.

`advance` is the monitor's stepping relation: it consumes one communication
event against the head of a remaining type, raising `TypeMismatch` when the
event is incompatible.  `lost_message_count` measures how many consecutive
inputs one peer's view lags behind the other's, which is exactly the number
of frames a reconnecting party must resend after delegation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    InconsistentTypes,
    ProtocolSyntaxError,
    TypeMismatch,
    UnknownLabel,
)

CLIENT = "client"
SERVER = "server"


# -- AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class End:
    def __repr__(self):
        return "End"


@dataclass(frozen=True)
class Begin:
    side: str  # CLIENT or SERVER
    body: "SessionType"


@dataclass(frozen=True)
class Send:
    msg: "MessageType"
    cont: "SessionType"


@dataclass(frozen=True)
class Recv:
    msg: "MessageType"
    cont: "SessionType"


@dataclass(frozen=True)
class SelectBranch:
    branches: tuple[tuple[str, "SessionType"], ...]  # source order preserved

    def labels(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.branches)

    def branch(self, label: str) -> "SessionType":
        for l, t in self.branches:
            if l == label:
                return t
        raise UnknownLabel(label)


@dataclass(frozen=True)
class OfferBranch:
    branches: tuple[tuple[str, "SessionType"], ...]

    labels = SelectBranch.labels
    branch = SelectBranch.branch


@dataclass(frozen=True)
class OutIter:
    body: "SessionType"
    cont: "SessionType"


@dataclass(frozen=True)
class InIter:
    body: "SessionType"
    cont: "SessionType"


SessionType = End | Begin | Send | Recv | SelectBranch | OfferBranch | OutIter | InIter


@dataclass(frozen=True)
class BaseType:
    name: str


@dataclass(frozen=True)
class SessionMsg:
    """Higher-order payload: the remaining type of a delegated session."""

    delegated: SessionType


MessageType = BaseType | SessionMsg


# -- communication events (monitor input) -------------------------------------

@dataclass(frozen=True)
class Sent:
    msg: MessageType


@dataclass(frozen=True)
class Received:
    msg: MessageType


@dataclass(frozen=True)
class Selected:
    label: str


@dataclass(frozen=True)
class Offered:
    label: str


@dataclass(frozen=True)
class IterEntered:
    out: bool  # True when this endpoint controls the loop


@dataclass(frozen=True)
class IterExited:
    out: bool


@dataclass(frozen=True)
class Closed:
    pass


CommEvent = Sent | Received | Selected | Offered | IterEntered | IterExited | Closed


# -- parsing -------------------------------------------------------------------

_COMPOUND = {
    "!": {"<": "!<", "[": "![", "{": "!{"},
    "?": {"(": "?(", "[": "?[", "{": "?{"},
}
_SINGLE = set("{}.,:>)")


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Token]:
    toks = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "/":
            if i + 1 < n and text[i + 1] == "/":
                while i < n and text[i] != "\n":
                    i += 1
                continue
            raise ProtocolSyntaxError("stray '/'", line, col)
        if c in _COMPOUND:
            nxt = text[i + 1] if i + 1 < n else ""
            kind = _COMPOUND[c].get(nxt)
            if kind is None:
                raise ProtocolSyntaxError(f"expected <, (, [ or {{ after {c!r}", line, col)
            toks.append(_Token(kind, kind, line, col))
            i += 2
            col += 2
            continue
        if c == "]":
            if i + 1 < n and text[i + 1] == "*":
                toks.append(_Token("]*", "]*", line, col))
                i += 2
                col += 2
                continue
            raise ProtocolSyntaxError("expected '*' after ']'", line, col)
        if c in _SINGLE:
            toks.append(_Token(c, c, line, col))
            i += 1
            col += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Token("ident", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise ProtocolSyntaxError(f"unexpected character {c!r}", line, col)
    toks.append(_Token("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.toks[self.pos]

    def next(self) -> _Token:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise ProtocolSyntaxError(
                f"expected {kind!r}, found {tok.text or 'end of input'!r}", tok.line, tok.col
            )
        return tok

    def error(self, message: str):
        tok = self.peek()
        raise ProtocolSyntaxError(message, tok.line, tok.col)

    # file := decl+
    def parse_file(self) -> dict[str, SessionType]:
        decls: dict[str, SessionType] = {}
        while self.peek().kind != "eof":
            name, typ = self.parse_decl()
            if name in decls:
                self.error(f"duplicate protocol name {name!r}")
            decls[name] = typ
        if not decls:
            self.error("no protocol declarations")
        return decls

    # decl := 'protocol' IDENT '{' ('cbegin'|'sbegin') ('.' seq)? '}'
    def parse_decl(self) -> tuple[str, SessionType]:
        kw = self.expect("ident")
        if kw.text != "protocol":
            raise ProtocolSyntaxError(f"expected 'protocol', found {kw.text!r}", kw.line, kw.col)
        name = self.expect("ident").text
        self.expect("{")
        begin = self.expect("ident")
        if begin.text == "cbegin":
            side = CLIENT
        elif begin.text == "sbegin":
            side = SERVER
        else:
            raise ProtocolSyntaxError(
                f"protocol body must start with cbegin or sbegin, found {begin.text!r}",
                begin.line, begin.col,
            )
        if self.peek().kind == ".":
            self.next()
            body = self.parse_seq()
        else:
            body = End()
        self.expect("}")
        return name, Begin(side, body)

    # seq := item ('.' item)* ; branch constructs close the sequence
    def parse_seq(self) -> SessionType:
        head, terminal = self.parse_item()
        if terminal or self.peek().kind != ".":
            return head
        self.next()
        cont = self.parse_seq()
        return _with_cont(head, cont)

    def parse_item(self) -> tuple[SessionType, bool]:
        tok = self.peek()
        if tok.kind == "!<":
            self.next()
            msg = self.parse_msg(closing=">")
            self.expect(">")
            return Send(msg, End()), False
        if tok.kind == "?(":
            self.next()
            msg = self.parse_msg(closing=")")
            self.expect(")")
            return Recv(msg, End()), False
        if tok.kind in ("![", "?["):
            self.next()
            body = End() if self.peek().kind == "]*" else self.parse_seq()
            self.expect("]*")
            node = OutIter(body, End()) if tok.kind == "![" else InIter(body, End())
            return node, False
        if tok.kind in ("!{", "?{"):
            self.next()
            branches = self.parse_branches()
            self.expect("}")
            node = SelectBranch(branches) if tok.kind == "!{" else OfferBranch(branches)
            return node, True
        if tok.kind == "ident" and tok.text in ("cbegin", "sbegin"):
            raise ProtocolSyntaxError("begin marker only allowed at the protocol root",
                                      tok.line, tok.col)
        self.error(f"expected a session action, found {tok.text or 'end of input'!r}")

    def parse_branches(self) -> tuple[tuple[str, SessionType], ...]:
        branches: list[tuple[str, SessionType]] = []
        seen: set[str] = set()
        while True:
            lab = self.expect("ident")
            if lab.text in seen:
                raise ProtocolSyntaxError(f"duplicate branch label {lab.text!r}",
                                          lab.line, lab.col)
            seen.add(lab.text)
            self.expect(":")
            if self.peek().kind in (",", "}"):
                body: SessionType = End()
            else:
                body = self.parse_seq()
            branches.append((lab.text, body))
            if self.peek().kind == ",":
                self.next()
                continue
            return tuple(branches)

    # msg := IDENT (if immediately closed) | seq | empty (completed session)
    def parse_msg(self, closing: str) -> MessageType:
        tok = self.peek()
        if tok.kind == closing:
            return SessionMsg(End())
        if tok.kind == "ident" and self.toks[self.pos + 1].kind == closing:
            self.next()
            return BaseType(tok.text)
        return SessionMsg(self.parse_seq())


def _with_cont(head: SessionType, cont: SessionType) -> SessionType:
    if isinstance(head, Send):
        return Send(head.msg, cont)
    if isinstance(head, Recv):
        return Recv(head.msg, cont)
    if isinstance(head, OutIter):
        return OutIter(head.body, cont)
    if isinstance(head, InIter):
        return InIter(head.body, cont)
    raise AssertionError(head)


def parse_protocol(text: str) -> SessionType:
    """Parse a source containing exactly one protocol declaration."""
    decls = _Parser(text).parse_file()
    if len(decls) != 1:
        raise ProtocolSyntaxError(f"expected one declaration, found {len(decls)}", 1, 1)
    return next(iter(decls.values()))


def parse_protocol_file(text: str) -> dict[str, SessionType]:
    """Parse a protocol file: one or more declarations, source order preserved."""
    return _Parser(text).parse_file()


def parse_tail(text: str) -> SessionType:
    """Parse a begin-free remaining type ('' means End). Inverse of render_tail."""
    if not text.strip():
        return End()
    parser = _Parser(text)
    typ = parser.parse_seq()
    parser.expect("eof")
    return typ


# -- printing ------------------------------------------------------------------

def render_protocol(t: SessionType, name: str = "p") -> str:
    """Render a full protocol declaration; parse_protocol round-trips it."""
    if not isinstance(t, Begin):
        raise TypeError("expected a Begin-rooted protocol type")
    marker = "cbegin" if t.side == CLIENT else "sbegin"
    if isinstance(t.body, End):
        return f"protocol {name} {{ {marker} }}\n"
    body = _render(t.body, indent=1)
    return f"protocol {name} {{\n  {marker}.\n{body}\n}}\n"


def render_tail(t: SessionType) -> str:
    """Render a begin-free remaining type on one line (End renders empty)."""
    if isinstance(t, End):
        return ""
    return _render(t, indent=None)


def _render(t: SessionType, indent: int | None) -> str:
    # indent=None renders compact one-line form
    pad = "" if indent is None else "  " * indent
    sep = "." if indent is None else ".\n"
    parts: list[str] = []
    while True:
        if isinstance(t, End):
            break
        if isinstance(t, Send):
            parts.append(f"{pad}!<{_render_msg(t.msg)}>")
            t = t.cont
        elif isinstance(t, Recv):
            parts.append(f"{pad}?({_render_msg(t.msg)})")
            t = t.cont
        elif isinstance(t, (OutIter, InIter)):
            sym = "!" if isinstance(t, OutIter) else "?"
            if indent is None:
                parts.append(f"{sym}[{_render(t.body, None)}]*")
            else:
                inner = _render(t.body, indent + 1)
                parts.append(f"{pad}{sym}[\n{inner}\n{pad}]*")
            t = t.cont
        elif isinstance(t, (SelectBranch, OfferBranch)):
            sym = "!" if isinstance(t, SelectBranch) else "?"
            if indent is None:
                inner = ", ".join(
                    f"{lab}:" + (f" {_render(b, None)}" if not isinstance(b, End) else "")
                    for lab, b in t.branches
                )
                parts.append(f"{sym}{{{inner}}}")
            else:
                lines = []
                for lab, b in t.branches:
                    if isinstance(b, End):
                        lines.append(f"{pad}  {lab}:")
                    else:
                        lines.append(f"{pad}  {lab}:\n{_render(b, indent + 2)}")
                parts.append(f"{pad}{sym}{{\n" + ",\n".join(lines) + f"\n{pad}}}")
            break  # branches close the sequence
        elif isinstance(t, Begin):
            raise TypeError("begin marker in non-root position")
        else:
            raise AssertionError(t)
    return sep.join(parts)


def _render_msg(m: MessageType) -> str:
    if isinstance(m, BaseType):
        return m.name
    return _render(m.delegated, indent=None)


# -- duality -------------------------------------------------------------------

def dual(t: SessionType) -> SessionType:
    """The reciprocal endpoint type: every direction marker inverted.

    Message payloads are untouched; a delegated session type is carried, not
    performed, so only the action moving it flips.
    """
    if isinstance(t, End):
        return t
    if isinstance(t, Begin):
        return Begin(SERVER if t.side == CLIENT else CLIENT, dual(t.body))
    if isinstance(t, Send):
        return Recv(t.msg, dual(t.cont))
    if isinstance(t, Recv):
        return Send(t.msg, dual(t.cont))
    if isinstance(t, SelectBranch):
        return OfferBranch(tuple((l, dual(b)) for l, b in t.branches))
    if isinstance(t, OfferBranch):
        return SelectBranch(tuple((l, dual(b)) for l, b in t.branches))
    if isinstance(t, OutIter):
        return InIter(dual(t.body), dual(t.cont))
    if isinstance(t, InIter):
        return OutIter(dual(t.body), dual(t.cont))
    raise AssertionError(t)


def is_dual(a: SessionType, b: SessionType) -> bool:
    return b == dual(a)


# -- monitor stepping ----------------------------------------------------------

def seq_concat(t: SessionType, k: SessionType) -> SessionType:
    """Sequential composition: every End leaf of `t` continues as `k`.

    Iteration bodies are left alone; their End leaves terminate the body,
    not the surrounding sequence.
    """
    if isinstance(t, End):
        return k
    if isinstance(t, Send):
        return Send(t.msg, seq_concat(t.cont, k))
    if isinstance(t, Recv):
        return Recv(t.msg, seq_concat(t.cont, k))
    if isinstance(t, SelectBranch):
        return SelectBranch(tuple((l, seq_concat(b, k)) for l, b in t.branches))
    if isinstance(t, OfferBranch):
        return OfferBranch(tuple((l, seq_concat(b, k)) for l, b in t.branches))
    if isinstance(t, OutIter):
        return OutIter(t.body, seq_concat(t.cont, k))
    if isinstance(t, InIter):
        return InIter(t.body, seq_concat(t.cont, k))
    raise TypeError(f"cannot sequence after {t!r}")


def advance(t: SessionType, e: CommEvent) -> SessionType:
    """Consume one communication event, returning the remaining type.

    Entering an iteration unfolds one body copy in front of the iteration
    node itself; exiting skips to the continuation.  `Closed` is accepted
    only at End; anywhere else it is the premature-close violation.
    """
    if isinstance(t, Send) and isinstance(e, Sent):
        if e.msg != t.msg:
            raise TypeMismatch(t, e)
        return t.cont
    if isinstance(t, Recv) and isinstance(e, Received):
        if e.msg != t.msg:
            raise TypeMismatch(t, e)
        return t.cont
    if isinstance(t, SelectBranch) and isinstance(e, Selected):
        return t.branch(e.label)
    if isinstance(t, OfferBranch) and isinstance(e, Offered):
        return t.branch(e.label)
    if isinstance(t, OutIter) and isinstance(e, IterEntered) and e.out:
        return seq_concat(t.body, t)
    if isinstance(t, OutIter) and isinstance(e, IterExited) and e.out:
        return t.cont
    if isinstance(t, InIter) and isinstance(e, IterEntered) and not e.out:
        return seq_concat(t.body, t)
    if isinstance(t, InIter) and isinstance(e, IterExited) and not e.out:
        return t.cont
    if isinstance(t, End) and isinstance(e, Closed):
        return t
    raise TypeMismatch(t, e)


def lost_message_count(local_remaining: SessionType, remote_remaining: SessionType) -> int:
    """How many consecutive inputs the remote view lags behind dual(local).

    The remote peer may only lag on inputs: messages this endpoint already
    sent but the peer never consumed.  Advancing `remote_remaining` through
    that many Recv/Offer heads must reach dual(local_remaining) exactly;
    anything else means the two views have diverged.
    """
    target = dual(local_remaining)
    frontier: list[tuple[SessionType, int]] = [(remote_remaining, 0)]
    seen: set[SessionType] = set()
    while frontier:
        nxt: list[tuple[SessionType, int]] = []
        for t, steps in frontier:
            if t == target:
                return steps
            if t in seen:
                continue
            seen.add(t)
            if isinstance(t, Recv):
                nxt.append((t.cont, steps + 1))
            elif isinstance(t, OfferBranch):
                nxt.extend((b, steps + 1) for _, b in t.branches)
        frontier = nxt
    raise InconsistentTypes(
        f"{render_tail(remote_remaining)!r} cannot reach dual of "
        f"{render_tail(local_remaining)!r} by consuming inputs"
    )
