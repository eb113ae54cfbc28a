"""Exception hierarchy shared across the package."""


class SessionKitError(Exception):
    """Base class for all errors raised by this package."""


class ProtocolSyntaxError(SessionKitError):
    """Malformed protocol source. Carries 1-based line/column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class TypeMismatch(SessionKitError):
    """A communication event does not match the expected session type head.

    This is the monitor's communication-safety violation signal.
    """

    def __init__(self, expected, got):
        super().__init__(f"expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class InconsistentTypes(SessionKitError):
    """Two session endpoint views cannot be reconciled (session corruption)."""


class UnknownLabel(SessionKitError):
    """Branch label not present in the type being selected on."""


# -- transport ---------------------------------------------------------------

class TransportError(SessionKitError):
    pass


class AddressInUse(TransportError):
    pass


class ConnectionRefused(TransportError):
    pass


class ChannelClosed(TransportError):
    """Peer closed and all queued frames have been drained."""


class FrameTooLarge(TransportError):
    pass


class Timeout(TransportError):
    pass


class Unsupported(TransportError):
    """Operation not available on this transport (e.g. attacker taps on TCP)."""


# -- secure channel ----------------------------------------------------------

class AuthFailed(SessionKitError):
    """Handshake evidence mismatch: wrong password or active tampering."""


class IllegalParameter(SessionKitError):
    """A public handshake value failed the SRP-6a safety checks."""


class IntegrityFailure(SessionKitError):
    """Frame MAC mismatch; the channel is closed and the session aborted."""


# -- session runtime ---------------------------------------------------------

class NonDualPeer(SessionKitError):
    """Session initiation between non-dual parties."""


class PrematureClose(SessionKitError):
    """Close requested while the remaining type is not End, outside delegation."""


# -- delegation --------------------------------------------------------------

class DelegationError(SessionKitError):
    pass


class DelegationRefused(DelegationError):
    """The session receiver rejected the reconnection (credential mismatch)."""


# -- model checker -----------------------------------------------------------

class BoundExceeded(SessionKitError):
    """State or trace bound exhausted before exploration finished."""
