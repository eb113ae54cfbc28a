"""The online purchase scenario: Customer, Vendor, and Payment Handler.

One scripted session: the customer fetches the product list, adds items in
the iterated segment, then either cancels (EXIT) or checks out.  On
CHECKOUT the vendor hands its half of the customer session to the handler,
who recovers the in-flight credit card message and issues the receipt.

Each role runs on its own thread over either the simulated network or real
TCP sockets, optionally under SRP authentication, and logs its events to a
shared Recorder; the canonical transcript is identical for a given script
and seed regardless of transport or thread interleavings.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from . import data_path
from .delegation import (
    COMPLETED,
    PassiveContext,
    ReceiverContext,
    delegate,
    install_transparent_reconnect,
    receive_delegation,
)
from .errors import SessionKitError, Timeout
from .protocols import parse_protocol_file
from .runtime import Session, TypedValue, accept_session, request_session
from .srp import ClientAuth, ServerAuth, SrpSuite, load_registry
from .transcript import Recorder, TEvent
from .transport import SimNetwork, TcpNetwork

DEMO_PASSWORDS = {
    "C": ("customer", "customer-demo-pw"),
    "V": ("vendor", "vendor-demo-pw"),
    "H": ("handler", "handler-demo-pw"),
    "E": ("eve", "eve-demo-pw"),
}

PRODUCTS = b"socks,boots,hat"
CREDIT_CARD = b"4111-1111-1111-1111"


@dataclass
class DemoConfig:
    transport: str = "sim"      # "sim" | "tcp"
    secure: bool = False        # SRP on every connection + credentialed delegation
    seed: int = 0
    timeout: float = 5.0
    registry_path: str | None = None


@dataclass
class DemoResult:
    events: list[TEvent]
    outcomes: dict[str, str]
    ok: bool


def _protocols():
    return parse_protocol_file(data_path("purchase.sj").read_text())


def _make_net(config: DemoConfig):
    if config.transport == "sim":
        return SimNetwork(seed=config.seed)
    if config.transport == "tcp":
        return TcpNetwork(timeout=config.timeout)
    raise ValueError(f"unknown transport {config.transport!r}")


def _auths(config: DemoConfig):
    """(client_auth, server_auth) factories per role, or (None, None)."""
    if not config.secure:
        return lambda role: None, lambda role: None
    suite = SrpSuite()
    path = config.registry_path or data_path("registry.txt")
    registry = load_registry(path)
    def client(role):
        username, password = DEMO_PASSWORDS[role]
        return ClientAuth(suite, username, password)
    def server(role):
        return ServerAuth(suite, registry)
    return client, server


def purchase_role_fns(config: DemoConfig, net, recorder: Recorder,
                      v_acc, h_acc, iterations: int, checkout: bool) -> dict:
    """The three role programs as closures, one per thread."""
    decls = _protocols()
    client_auth, server_auth = _auths(config)
    v_host, v_port = v_acc.host, v_acc.port
    h_host, h_port = h_acc.host, h_acc.port

    def customer():
        t = recorder.role("C")
        sess = request_session(net.node("C"), v_host, v_port,
                               decls["customerToVendor"],
                               auth=client_auth("C"), timeout=config.timeout)
        sess.chan_label, sess.peer_name = "C-V", "V"
        t.local("session requested (customerToVendor)")
        install_transparent_reconnect(
            sess,
            PassiveContext(net=net.node("C"), auth=client_auth("C"),
                           timeout=config.timeout, trace=t,
                           migrated_chan="C-H", migrated_peer="H"),
            config.secure,
        )
        products = sess.recv_value(expect="ProductList")
        t.recv("C-V", "V", "ProductList")
        for i in range(iterations):
            sess.iter_continue(True)
            t.send("C-V", "V", "ITER continue")
            sess.send_value(TypedValue("ProductId", b"item-%d" % i))
            t.send("C-V", "V", "ProductId")
            sess.recv_value(expect="int")
            t.recv("C-V", "V", "int (basket total)")
        sess.iter_continue(False)
        t.send("C-V", "V", "ITER exit")
        if checkout:
            sess.select_label("CHECKOUT")
            t.send("C-V", "V", "CHECKOUT")
            sess.send_value(TypedValue("CreditCard", CREDIT_CARD))
            t.send("C-V", "V", "CreditCard")
            receipt = sess.recv_value(expect="Receipt")
            t.recv(sess.chan_label, sess.peer_name, "Receipt")
            assert products.type_name == "ProductList" and receipt.data
        else:
            sess.select_label("EXIT")
            t.send("C-V", "V", "EXIT")
        sess.close()
        t.local("close")

    def vendor():
        t = recorder.role("V")
        sess = accept_session(v_acc, decls["vendorToCustomer"],
                              auth=server_auth("V"), timeout=config.timeout)
        sess.chan_label, sess.peer_name = "C-V", "C"
        t.local("session accepted (vendorToCustomer)")
        sess.send_value(TypedValue("ProductList", PRODUCTS))
        t.send("C-V", "C", "ProductList")
        total = 0
        while True:
            again = sess.iter_follow()
            t.recv("C-V", "C", "ITER continue" if again else "ITER exit")
            if not again:
                break
            sess.recv_value(expect="ProductId")
            t.recv("C-V", "C", "ProductId")
            total += 7
            sess.send_value(TypedValue("int", str(total).encode()))
            t.send("C-V", "C", "int (basket total)")
        label = sess.offer_labels()
        t.recv("C-V", "C", label)
        if label == "CHECKOUT":
            carrier = request_session(net.node("V"), h_host, h_port,
                                      decls["vendorToHandler"],
                                      auth=client_auth("V"), timeout=config.timeout)
            carrier.chan_label, carrier.peer_name = "V-H", "H"
            t.local("carrier session to H (vendorToHandler)")
            outcome = delegate(sess, carrier, config.secure, trace=t)
            if outcome.status != COMPLETED:
                raise SessionKitError(f"delegation {outcome.status}: {outcome.reason}")
            carrier.close()
            t.local("close carrier")
        else:
            sess.close()
            t.local("close")

    def handler():
        t = recorder.role("H")
        if not checkout:
            h_acc.close()
            return
        carrier = accept_session(h_acc, decls["handlerToVendor"],
                                 auth=server_auth("H"), timeout=config.timeout)
        carrier.chan_label, carrier.peer_name = "V-H", "V"
        t.local("carrier session accepted (handlerToVendor)")
        ctx = ReceiverContext(net=net.node("H"), auth=server_auth("H"),
                              accept_timeout=config.timeout, trace=t,
                              migrated_chan="C-H", migrated_peer="C")
        outcome = receive_delegation(ctx, carrier, config.secure)
        if outcome.status != COMPLETED:
            raise SessionKitError(f"delegation {outcome.status}: {outcome.reason}")
        migrated = outcome.migrated
        if migrated.replayed_pending():
            card = migrated.recv_value(expect="CreditCard")
            t.local("CreditCard recovered from resent messages")
        else:
            card = migrated.recv_value(expect="CreditCard")
            t.recv("C-H", "C", "CreditCard")
        migrated.send_value(TypedValue("Receipt", b"paid with card ending " + card.data[-4:]))
        t.send("C-H", "C", "Receipt")
        migrated.close()
        t.local("close migrated session")
        carrier.close()

    return {"C": customer, "V": vendor, "H": handler}


def run_role_threads(role_fns: dict, join_timeout: float) -> dict[str, str]:
    """Run each role on its own thread; outcome is 'ok' or the exception."""
    outcomes: dict[str, str] = {}
    threads = []
    for name, fn in role_fns.items():
        def run(name=name, fn=fn):
            try:
                fn()
                outcomes[name] = "ok"
            except SessionKitError as exc:
                outcomes[name] = f"{type(exc).__name__}: {exc}"
            except Exception as exc:  # surface bugs, don't hang the run
                outcomes[name] = f"{type(exc).__name__}: {exc}"
        threads.append(threading.Thread(target=run, name=name, daemon=True))
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=join_timeout)
    return outcomes


def run_purchase(config: DemoConfig, iterations: int, checkout: bool) -> DemoResult:
    """Run the full three-party scenario; returns the canonical transcript."""
    net = _make_net(config)
    recorder = Recorder()
    v_acc = net.node("V").listen(0)
    h_acc = net.node("H").listen(0)
    role_fns = purchase_role_fns(config, net, recorder, v_acc, h_acc,
                                 iterations, checkout)
    outcomes = run_role_threads(role_fns, config.timeout * 4 + 5)
    ok = all(v == "ok" for v in outcomes.values()) and len(outcomes) == 3
    return DemoResult(recorder.canonical(seed=config.seed), outcomes, ok)
