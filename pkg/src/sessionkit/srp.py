"""SRP-6a mutual authentication and the authenticated channel it keys.

The handshake runs as an initial phase over any Endpoint.  Both sides
derive the shared key K and prove knowledge of it (M1 from the client, M2
from the server) before any session traffic flows; every subsequent frame
is encrypted with a per-frame keystream and carried under a MAC bound to
the direction and a strictly increasing counter, so modification, replay,
and reordering all surface as IntegrityFailure.

Conventions follow RFC 5054: k = H(N || PAD(g)), u = H(PAD(A) || PAD(B)),
x = H(salt || H(username ":" password)), with PAD to the byte length of N.
The hash is configurable (default SHA-256; the RFC's own test vector uses
SHA-1).
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass

from .errors import AuthFailed, ChannelClosed, IllegalParameter, IntegrityFailure
from .frames import Frame, Tag

# handshake sub-tags, carried as the first payload byte of DATA frames
HELLO = 0x01
SALT_B = 0x02
A_MSG = 0x03
M1_MSG = 0x04
M2_MSG = 0x05

MAC_LEN = 16

_N_1024 = int(
    "EEAF0AB9ADB38DD69C33F80AFA8FC5E860726187"
    "75FF3C0B9EA2314C9C256576D674DF7496EA81D3"
    "383B4813D692C6E0E0D5D8E250B98BE48E495C1D"
    "6089DAD15DC7D7B46154D6B6CE8EF4AD69B15D49"
    "82559B297BCF1885C529F566660E57EC68EDBC3C"
    "05726CC02FD4CBF4976EAA9AFD5138FE8376435B"
    "9FC61D2FC0EB06E3", 16,
)
_N_2048 = int(
    "AC6BDB41324A9A9BF166DE5E1389582FAF72B6651987EE07FC3192943DB56050A37329CBB4"
    "A099ED8193E0757767A13DD52312AB4B03310DCD7F48A9DA04FD50E8083969EDB767B0CF60"
    "95179A163AB3661A05FBD5FAAAE82918A9962F0B93B855F97993EC975EEAA80D740ADBF4FF"
    "747359D041D5C33EA71D281E446B14773BCA97B43A23FB801676BD207A436C6481F1D2B907"
    "8717461A5B9D32E688F87748544523B524B0D57D5EA77A2775D2ECFA032CFBDBF52FB37861"
    "60279004E57AE6AF874E7303CE53299CCC041C7BC308D82A5698F3A8D0C38271AE35F8E9DB"
    "FBB694B5C803D89F7AE435DE236D525F54759B65E372FCD68EF20FA7111F9E4AFF73", 16,
)


@dataclass(frozen=True)
class SrpGroup:
    name: str
    N: int
    g: int

    @property
    def byte_len(self) -> int:
        return (self.N.bit_length() + 7) // 8


GROUPS = {
    "rfc5054-1024": SrpGroup("rfc5054-1024", _N_1024, 2),
    "rfc5054-2048": SrpGroup("rfc5054-2048", _N_2048, 2),
}
DEFAULT_GROUP = GROUPS["rfc5054-1024"]


@dataclass(frozen=True)
class VerifierRecord:
    username: str
    salt: bytes
    verifier: int
    group_name: str


class SrpSuite:
    """An SRP group paired with a hash function."""

    def __init__(self, group: SrpGroup = DEFAULT_GROUP, hash_name: str = "sha256"):
        self.group = group
        self.hash_name = hash_name

    def H(self, *parts: bytes) -> bytes:
        return hashlib.new(self.hash_name, b"".join(parts)).digest()

    def pad(self, x: int) -> bytes:
        return x.to_bytes(self.group.byte_len, "big")

    @property
    def k(self) -> int:
        return int.from_bytes(self.H(self.pad(self.group.N), self.pad(self.group.g)), "big")

    def compute_x(self, salt: bytes, username: str, password: str) -> int:
        inner = self.H(username.encode() + b":" + password.encode())
        return int.from_bytes(self.H(salt + inner), "big")

    def session_key(self, S: int) -> bytes:
        return self.H(_itb(S))


def _itb(x: int) -> bytes:
    return x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")


def register(suite: SrpSuite, username: str, password: str,
             salt: bytes | None = None) -> VerifierRecord:
    """Create the server-side record: v = g^x mod N with a fresh random salt."""
    if not username or not password:
        raise ValueError("username and password must be non-empty")
    if salt is None:
        salt = secrets.token_bytes(16)
    x = suite.compute_x(salt, username, password)
    v = pow(suite.group.g, x, suite.group.N)
    return VerifierRecord(username, salt, v, suite.group.name)


# -- registry file: username:salt_hex:verifier_hex:group_name -------------------

def load_registry(path) -> dict[str, VerifierRecord]:
    registry: dict[str, VerifierRecord] = {}
    for line in open(path, encoding="utf-8"):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        username, salt_hex, verifier_hex, group_name = line.split(":")
        registry[username] = VerifierRecord(
            username, bytes.fromhex(salt_hex), int(verifier_hex, 16), group_name
        )
    return registry


def save_registry(path, records: dict[str, VerifierRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records.values():
            fh.write(f"{rec.username}:{rec.salt.hex()}:{rec.verifier:x}:{rec.group_name}\n")


# -- wire helpers ----------------------------------------------------------------

def _field(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise ValueError("handshake field too long")
    return len(data).to_bytes(2, "big") + data


def _split_fields(payload: bytes, count: int) -> list[bytes]:
    fields = []
    pos = 0
    for _ in range(count):
        if pos + 2 > len(payload):
            raise AuthFailed("truncated handshake message")
        n = int.from_bytes(payload[pos:pos + 2], "big")
        pos += 2
        if pos + n > len(payload):
            raise AuthFailed("truncated handshake message")
        fields.append(payload[pos:pos + n])
        pos += n
    if pos != len(payload):
        raise AuthFailed("trailing bytes in handshake message")
    return fields


def _send_msg(endpoint, subtag: int, *fields: bytes) -> None:
    endpoint.send_frame(Frame(Tag.DATA, bytes([subtag]) + b"".join(_field(f) for f in fields)))


def _recv_msg(endpoint, subtag: int, count: int, timeout: float | None) -> list[bytes]:
    frame = endpoint.recv_frame(timeout=timeout)
    if frame.tag != Tag.DATA or not frame.payload or frame.payload[0] != subtag:
        raise AuthFailed(f"unexpected handshake message (wanted sub-tag {subtag})")
    return _split_fields(frame.payload[1:], count)


# -- handshake --------------------------------------------------------------------

def client_handshake(endpoint, suite: SrpSuite, username: str, password: str,
                     ephemeral: int | None = None,
                     timeout: float | None = 5.0) -> "SecureChannel":
    """Authenticate to a server that holds our verifier; returns the keyed channel."""
    group = suite.group
    a = ephemeral if ephemeral is not None else int.from_bytes(secrets.token_bytes(32), "big")
    A = pow(group.g, a, group.N)
    _send_msg(endpoint, HELLO, username.encode())
    _send_msg(endpoint, A_MSG, _itb(A))
    try:
        salt, B_bytes = _recv_msg(endpoint, SALT_B, 2, timeout)
    except ChannelClosed:
        raise AuthFailed("server aborted the handshake") from None
    B = int.from_bytes(B_bytes, "big")
    if B % group.N == 0:
        raise IllegalParameter("B is zero modulo N")
    u = int.from_bytes(suite.H(suite.pad(A), suite.pad(B)), "big")
    if u == 0:
        raise IllegalParameter("u is zero")
    x = suite.compute_x(salt, username, password)
    S = pow((B - suite.k * pow(group.g, x, group.N)) % group.N, a + u * x, group.N)
    K = suite.session_key(S)
    M1 = suite.H(suite.pad(A), suite.pad(B), K)
    _send_msg(endpoint, M1_MSG, M1)
    try:
        (M2,) = _recv_msg(endpoint, M2_MSG, 1, timeout)
    except ChannelClosed:
        raise AuthFailed("server rejected our evidence") from None
    if not hmac.compare_digest(M2, suite.H(suite.pad(A), M1, K)):
        endpoint.close()
        raise AuthFailed("server evidence mismatch")
    return SecureChannel(endpoint, suite, K, is_client=True)


_SIM_SECRET = secrets.token_bytes(16)  # per-process, keeps fake records stable


def _simulated_record(suite: SrpSuite, username: str) -> VerifierRecord:
    # Unknown users walk the same code path against an unguessable verifier.
    salt = suite.H(b"sim-salt", username.encode(), _SIM_SECRET)[:16]
    x = int.from_bytes(suite.H(b"sim-x", username.encode(), _SIM_SECRET), "big")
    return VerifierRecord(username, salt, pow(suite.group.g, x, suite.group.N),
                          suite.group.name)


def server_handshake(endpoint, suite: SrpSuite, registry: dict[str, VerifierRecord],
                     ephemeral: int | None = None,
                     timeout: float | None = 5.0) -> "SecureChannel":
    """Accept one SRP-6a authentication; unknown users fail only at evidence time."""
    group = suite.group
    (username_raw,) = _recv_msg(endpoint, HELLO, 1, timeout)
    (A_bytes,) = _recv_msg(endpoint, A_MSG, 1, timeout)
    A = int.from_bytes(A_bytes, "big")
    if A % group.N == 0:
        endpoint.close()
        raise IllegalParameter("A is zero modulo N")
    username = username_raw.decode("utf-8", "replace")
    record = registry.get(username)
    known = record is not None and record.group_name == group.name
    if not known:
        record = _simulated_record(suite, username)
    b = ephemeral if ephemeral is not None else int.from_bytes(secrets.token_bytes(32), "big")
    v = record.verifier
    B = (suite.k * v + pow(group.g, b, group.N)) % group.N
    _send_msg(endpoint, SALT_B, record.salt, _itb(B))
    u = int.from_bytes(suite.H(suite.pad(A), suite.pad(B)), "big")
    if u == 0:
        endpoint.close()
        raise IllegalParameter("u is zero")
    S = pow(A * pow(v, u, group.N) % group.N, b, group.N)
    K = suite.session_key(S)
    try:
        (M1,) = _recv_msg(endpoint, M1_MSG, 1, timeout)
    except ChannelClosed:
        raise AuthFailed("client aborted the handshake") from None
    expected_M1 = suite.H(suite.pad(A), suite.pad(B), K)
    if not (hmac.compare_digest(M1, expected_M1) and known):
        endpoint.close()
        raise AuthFailed("client evidence mismatch")
    _send_msg(endpoint, M2_MSG, suite.H(suite.pad(A), M1, K))
    return SecureChannel(endpoint, suite, K, is_client=False)


# -- the authenticated channel -----------------------------------------------------

class SecureChannel:
    """Frame transport with per-frame encryption and MAC over (dir, counter, frame).

    Presents the same send_frame/recv_frame surface as a plain Endpoint, so
    sessions run over either interchangeably.  Counters start at zero per
    direction; any MAC failure closes the channel.
    """

    def __init__(self, endpoint, suite: SrpSuite, key: bytes, is_client: bool):
        self._inner = endpoint
        self._suite = suite
        self._enc_key = suite.H(b"enc", key)
        self._mac_key = suite.H(b"mac", key)
        self._send_dir = b"\x00" if is_client else b"\x01"
        self._recv_dir = b"\x01" if is_client else b"\x00"
        self._send_count = 0
        self._recv_count = 0
        self.session_key = key

    # keystream blocks: HMAC(enc_key, dir || counter || block index)
    def _keystream(self, direction: bytes, counter: int, n: int) -> bytes:
        out = bytearray()
        block = 0
        while len(out) < n:
            out.extend(hmac.new(
                self._enc_key,
                direction + counter.to_bytes(8, "big") + block.to_bytes(4, "big"),
                self._suite.hash_name,
            ).digest())
            block += 1
        return bytes(out[:n])

    def _mac(self, direction: bytes, counter: int, ciphertext: bytes) -> bytes:
        return hmac.new(
            self._mac_key,
            direction + counter.to_bytes(8, "big") + ciphertext,
            self._suite.hash_name,
        ).digest()[:MAC_LEN]

    def send_frame(self, frame: Frame) -> None:
        inner = bytes([frame.tag]) + frame.payload
        stream = self._keystream(self._send_dir, self._send_count, len(inner))
        ct = bytes(x ^ y for x, y in zip(inner, stream))
        mac = self._mac(self._send_dir, self._send_count, ct)
        self._send_count += 1
        self._inner.send_frame(Frame(Tag.DATA, ct + mac))

    def recv_frame(self, timeout: float | None = None) -> Frame:
        wire = self._inner.recv_frame(timeout=timeout)
        if wire.tag != Tag.DATA or len(wire.payload) < MAC_LEN + 1:
            self.close()
            raise IntegrityFailure("malformed protected frame")
        ct, mac = wire.payload[:-MAC_LEN], wire.payload[-MAC_LEN:]
        if not hmac.compare_digest(mac, self._mac(self._recv_dir, self._recv_count, ct)):
            self.close()
            raise IntegrityFailure("frame MAC mismatch")
        stream = self._keystream(self._recv_dir, self._recv_count, len(ct))
        self._recv_count += 1
        inner = bytes(x ^ y for x, y in zip(ct, stream))
        return Frame(Tag(inner[0]), inner[1:])

    @property
    def peer_host(self) -> str:
        return self._inner.peer_host

    @property
    def local_host(self) -> str:
        return self._inner.local_host

    @property
    def is_open(self) -> bool:
        return self._inner.is_open

    def close(self) -> None:
        self._inner.close()


def secure_send(channel: SecureChannel, frame: Frame) -> None:
    channel.send_frame(frame)


def secure_recv(channel: SecureChannel, timeout: float | None = None) -> Frame:
    return channel.recv_frame(timeout=timeout)


@dataclass(frozen=True)
class ClientAuth:
    """Credentials a connecting party presents on every new connection."""

    suite: SrpSuite
    username: str
    password: str

    def wrap(self, endpoint) -> SecureChannel:
        return client_handshake(endpoint, self.suite, self.username, self.password)


@dataclass(frozen=True)
class ServerAuth:
    """Verifier registry an accepting party authenticates against."""

    suite: SrpSuite
    registry: dict[str, VerifierRecord]

    def wrap(self, endpoint) -> SecureChannel:
        return server_handshake(endpoint, self.suite, self.registry)
