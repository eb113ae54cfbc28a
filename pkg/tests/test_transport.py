import threading

import pytest
from hypothesis import given, strategies as st

from sessionkit.errors import (
    AddressInUse,
    ChannelClosed,
    ConnectionRefused,
    FrameTooLarge,
    Timeout,
    TransportError,
    Unsupported,
)
from sessionkit.frames import MAX_PAYLOAD, Frame, Tag, decode_frame, encode_frame
from sessionkit.transport import AttackerTap, SimNetwork, TcpNetwork, parse_sim_address


# -- frame codec -----------------------------------------------------------------

def test_frame_round_trip():
    f = Frame(Tag.DS, b"\x00\x01payload")
    assert decode_frame(encode_frame(f)) == f


def test_frame_too_large():
    Frame(Tag.DATA, b"x" * MAX_PAYLOAD)  # at the bound: fine
    with pytest.raises(FrameTooLarge):
        Frame(Tag.DATA, b"x" * (MAX_PAYLOAD + 1))


def test_frame_unknown_tag():
    with pytest.raises(TransportError):
        decode_frame(b"\xff\x00\x00\x00")


@given(st.sampled_from(list(Tag)), st.binary(max_size=2048))
def test_frame_codec_property(tag, payload):
    f = Frame(tag, payload)
    assert decode_frame(encode_frame(f)) == f


# -- simnet ------------------------------------------------------------------------

def connected_pair(net, src="C", dst="V"):
    acceptor = net.node(dst).listen(0)
    near = net.node(src).connect_to(dst, acceptor.port)
    far = acceptor.accept(timeout=1)
    return near, far


def test_sim_listen_free_port():
    net = SimNetwork()
    acc = net.node("H").listen(0)
    assert acc.port > 0
    assert acc.address == f"sim://H:{acc.port}"


def test_sim_address_in_use():
    net = SimNetwork()
    net.node("H").listen(7)
    with pytest.raises(AddressInUse):
        net.node("H").listen(7)


def test_sim_connect_refused():
    net = SimNetwork()
    with pytest.raises(ConnectionRefused):
        net.node("C").connect_to("H", 4242)


def test_sim_fifo_round_trip():
    net = SimNetwork()
    near, far = connected_pair(net)
    near.send_frame(Frame(Tag.DATA, b"x"))
    near.send_frame(Frame(Tag.DATA, b"y"))
    assert far.recv_frame(timeout=1).payload == b"x"
    assert far.recv_frame(timeout=1).payload == b"y"
    far.send_frame(Frame(Tag.BRANCH, b"back"))
    assert near.recv_frame(timeout=1).payload == b"back"


def test_sim_close_drains_then_raises():
    net = SimNetwork()
    near, far = connected_pair(net)
    near.send_frame(Frame(Tag.DATA, b"last"))
    near.close()
    assert far.recv_frame(timeout=1).payload == b"last"
    with pytest.raises(ChannelClosed):
        far.recv_frame(timeout=1)
    with pytest.raises(ChannelClosed):
        far.send_frame(Frame(Tag.DATA, b"z"))


def test_sim_recv_timeout():
    net = SimNetwork()
    near, _ = connected_pair(net)
    with pytest.raises(Timeout):
        near.recv_frame(timeout=0.05)


def test_sim_reliability_under_threads():
    net = SimNetwork()
    near, far = connected_pair(net)
    sent = [Frame(Tag.DATA, bytes([i])) for i in range(200)]
    received = []

    def pump():
        for _ in sent:
            received.append(far.recv_frame(timeout=2))

    t = threading.Thread(target=pump)
    t.start()
    for f in sent:
        near.send_frame(f)
    t.join(timeout=5)
    assert received == sent  # order and content both preserved


def scenario(net):
    near, far = connected_pair(net)
    near.send_frame(Frame(Tag.DATA, b"a"))
    far.recv_frame(timeout=1)
    far.send_frame(Frame(Tag.DS, b"addr"))
    near.recv_frame(timeout=1)
    near.close()
    far.close()
    return net.trace


def test_sim_determinism_same_seed():
    t1 = scenario(SimNetwork(seed=7))
    t2 = scenario(SimNetwork(seed=7))
    assert t1 == t2


def test_sim_no_tap_matches_tapless_run():
    t1 = scenario(SimNetwork(seed=3))
    net = SimNetwork(seed=3)
    net.attach_attacker(AttackerTap())  # watches nothing
    t2 = scenario(net)
    assert t1 == t2


class DsSpy(AttackerTap):
    def __init__(self):
        self.seen = []

    def watches(self, src, dst):
        return src == "V" and dst == "C"

    def on_frame(self, src, dst, frame, chan_id):
        if frame.tag == Tag.DS:
            self.seen.append(frame.payload)
        return True


def test_sim_tap_copies_ds_frames():
    net = SimNetwork()
    spy = DsSpy()
    net.attach_attacker(spy)
    near, far = connected_pair(net, src="C", dst="V")
    far.send_frame(Frame(Tag.DS, b"H:1001+cred"))
    assert near.recv_frame(timeout=1).payload == b"H:1001+cred"
    assert spy.seen == [b"H:1001+cred"]


class SuppressAll(AttackerTap):
    def watches(self, src, dst):
        return True

    def on_frame(self, src, dst, frame, chan_id):
        return False


def test_sim_tap_suppression_blocks_both_parties():
    net = SimNetwork()
    net.attach_attacker(SuppressAll())
    near, far = connected_pair(net)
    near.send_frame(Frame(Tag.DATA, b"x"))
    with pytest.raises(Timeout):
        far.recv_frame(timeout=0.05)
    # the suppressed frame is attributed to the attacker in the trace
    suppressed = [ev for ev in net.trace if ev[1] == "frame" and not ev[7]["delivered"]]
    assert len(suppressed) == 1


def test_sim_acceptor_close_resets_backlog():
    net = SimNetwork()
    acc = net.node("H").listen(0)
    pending = net.node("C").connect_to("H", acc.port)
    acc.close()
    with pytest.raises(ChannelClosed):
        pending.recv_frame(timeout=1)
    with pytest.raises(ConnectionRefused):
        net.node("C").connect_to("H", acc.port)


def test_parse_sim_address():
    assert parse_sim_address("sim://H:1001") == ("H", 1001)
    with pytest.raises(TransportError):
        parse_sim_address("H:1001")


# -- TCP ---------------------------------------------------------------------------

def test_tcp_round_trip():
    net = TcpNetwork()
    acc = net.listen(0)
    assert acc.port > 0
    near = net.connect_to(acc.host, acc.port)
    far = acc.accept(timeout=2)
    near.send_frame(Frame(Tag.DATA, b"x" * 5000))
    assert far.recv_frame(timeout=2).payload == b"x" * 5000
    far.send_frame(Frame(Tag.CLOSE))
    assert near.recv_frame(timeout=2).tag == Tag.CLOSE
    near.close()
    with pytest.raises(ChannelClosed):
        far.recv_frame(timeout=2)
    far.close()
    acc.close()


def test_tcp_address_in_use():
    net = TcpNetwork()
    acc = net.listen(0)
    with pytest.raises(AddressInUse):
        net.listen(acc.port)
    acc.close()


def test_tcp_connect_refused():
    net = TcpNetwork()
    acc = net.listen(0)
    port = acc.port
    acc.close()
    with pytest.raises(ConnectionRefused):
        net.connect_to("127.0.0.1", port)


def test_tcp_rejects_attacker():
    with pytest.raises(Unsupported):
        TcpNetwork().attach_attacker(AttackerTap())
