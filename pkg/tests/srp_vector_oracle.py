"""Independent SRP-6a transcript oracle.

Recomputes the RFC 5054 Appendix-B-style test vector from first principles
with nothing but hashlib and integer pow: SHA-1, the published 1024-bit
group, PAD() to the byte length of N for the k and u hashes.  Deliberately
imports nothing from the package under test.
"""

import hashlib

N_HEX = (
    "EEAF0AB9ADB38DD69C33F80AFA8FC5E860726187"
    "75FF3C0B9EA2314C9C256576D674DF7496EA81D3"
    "383B4813D692C6E0E0D5D8E250B98BE48E495C1D"
    "6089DAD15DC7D7B46154D6B6CE8EF4AD69B15D49"
    "82559B297BCF1885C529F566660E57EC68EDBC3C"
    "05726CC02FD4CBF4976EAA9AFD5138FE8376435B"
    "9FC61D2FC0EB06E3"
)
N = int(N_HEX, 16)
g = 2
NLEN = (N.bit_length() + 7) // 8

USERNAME = b"alice"
PASSWORD = b"password123"
SALT = bytes.fromhex("BEB25379D1A8581EB5A727673A2441EE")
LITTLE_A = int("60975527035CF2AD1989806F0407210BC81EDC04E2762A56AFD529DDDA2D4393", 16)
LITTLE_B = int("E487CB59D31AC550471E81F00F6928E01DDA08E974A004F49E61F5D105284D20", 16)


def _H(*parts: bytes) -> bytes:
    return hashlib.sha1(b"".join(parts)).digest()


def _pad(x: int) -> bytes:
    return x.to_bytes(NLEN, "big")


def _itb(x: int) -> bytes:
    return x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")


def rfc5054_vector() -> dict:
    k = int.from_bytes(_H(_pad(N), _pad(g)), "big")
    x = int.from_bytes(_H(SALT, _H(USERNAME + b":" + PASSWORD)), "big")
    v = pow(g, x, N)
    A = pow(g, LITTLE_A, N)
    B = (k * v + pow(g, LITTLE_B, N)) % N
    u = int.from_bytes(_H(_pad(A), _pad(B)), "big")
    S_client = pow((B - k * pow(g, x, N)) % N, LITTLE_A + u * x, N)
    S_server = pow(A * pow(v, u, N) % N, LITTLE_B, N)
    assert S_client == S_server
    return {
        "k": k, "x": x, "v": v, "A": A, "B": B, "u": u,
        "S": S_client, "K": hashlib.sha1(_itb(S_client)).digest(),
    }


if __name__ == "__main__":
    for name, value in rfc5054_vector().items():
        print(name, "=", value.hex().upper() if isinstance(value, bytes)
              else format(value, "X"))
