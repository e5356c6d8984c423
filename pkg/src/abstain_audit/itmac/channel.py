"""Framed message transport shared by the in-process and TCP back ends.

Every frame is {u8 msg_type}{u32 payload length, little-endian}{payload};
payloads are packed 8-byte little-endian field elements (or raw bytes for
the few control frames).  Each endpoint records the frames it sends and
receives so tests can assert what a party's view actually contained.
"""

import queue
import socket
import struct
from dataclasses import dataclass

_HEADER = struct.Struct("<BI")

# message types
MSG_HELLO = 1          # public-parameter agreement blob
MSG_NEED_DEALER = 2    # prover asks for more preprocessing material
MSG_DEALER_AUTH = 3    # dealer -> prover: (r, tag) pairs for fresh randoms
MSG_DEALER_TRIPLE = 4  # dealer -> prover: multiplication triples
MSG_INPUT_DELTA = 5    # prover -> verifier: masked inputs x - r
MSG_OPEN_MASKED = 6    # prover -> verifier: Beaver openings (masked values)
MSG_CHECK_COINS = 7    # verifier -> prover: seed for combination coins
MSG_CHECK_MAC = 8      # prover -> verifier: combined tag for the batch
MSG_CHECK_OK = 9       # verifier -> prover: batch accepted
MSG_REVEAL = 10        # prover -> verifier: plaintext value + its tag
MSG_VERDICT = 11       # verifier -> prover: revealed-bit echo
MSG_ABORT = 12         # either side: MAC/consistency failure

# what each frame type exposes to the party receiving it
DISCLOSURE = {
    MSG_HELLO: "public",
    MSG_NEED_DEALER: "public",
    MSG_DEALER_AUTH: "dealer-secret",
    MSG_DEALER_TRIPLE: "dealer-secret",
    MSG_INPUT_DELTA: "masked",
    MSG_OPEN_MASKED: "masked",
    MSG_CHECK_COINS: "public",
    MSG_CHECK_MAC: "mac",
    MSG_CHECK_OK: "public",
    MSG_REVEAL: "plaintext-value",
    MSG_VERDICT: "public",
    MSG_ABORT: "public",
}


@dataclass(frozen=True)
class FrameRecord:
    direction: str  # "sent" | "recv"
    msg_type: int
    length: int

    @property
    def disclosure(self) -> str:
        return DISCLOSURE[self.msg_type]


def pack_fields(values) -> bytes:
    return b"".join(v.to_bytes(8, "little") for v in values)


def unpack_fields(payload: bytes):
    if len(payload) % 8:
        raise ValueError("payload is not a whole number of field elements")
    return [int.from_bytes(payload[i:i + 8], "little")
            for i in range(0, len(payload), 8)]


class ChannelError(IOError):
    """Transport failure (distinct from protocol ABORT)."""


class _RecordingChannel:
    def __init__(self):
        self.transcript: list[FrameRecord] = []
        self.bytes_sent = 0
        self.bytes_received = 0

    def send(self, msg_type: int, payload: bytes = b"") -> None:
        self.transcript.append(FrameRecord("sent", msg_type, len(payload)))
        self.bytes_sent += _HEADER.size + len(payload)
        self._send_raw(_HEADER.pack(msg_type, len(payload)) + payload)

    def recv(self):
        header = self._recv_exact(_HEADER.size)
        msg_type, length = _HEADER.unpack(header)
        payload = self._recv_exact(length)
        self.transcript.append(FrameRecord("recv", msg_type, length))
        self.bytes_received += _HEADER.size + length
        return msg_type, payload


class LocalChannel(_RecordingChannel):
    """One endpoint of an in-process pair; blocking, so the two roles can
    run on separate threads of the same process."""

    def __init__(self, inbox: queue.SimpleQueue, outbox: queue.SimpleQueue,
                 timeout: float = 120.0):
        super().__init__()
        self._inbox = inbox
        self._outbox = outbox
        self._buf = b""
        self._timeout = timeout

    def _send_raw(self, data: bytes) -> None:
        self._outbox.put(data)

    def _recv_exact(self, n: int) -> bytes:
        while len(self._buf) < n:
            try:
                self._buf += self._inbox.get(timeout=self._timeout)
            except queue.Empty:
                raise ChannelError("peer sent nothing: protocol deadlock") from None
        out, self._buf = self._buf[:n], self._buf[n:]
        return out


def local_pair(timeout: float = 120.0):
    a_to_b, b_to_a = queue.SimpleQueue(), queue.SimpleQueue()
    return (LocalChannel(b_to_a, a_to_b, timeout),
            LocalChannel(a_to_b, b_to_a, timeout))


class TcpChannel(_RecordingChannel):
    def __init__(self, sock: socket.socket):
        super().__init__()
        self._sock = sock

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 30.0):
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise ChannelError(f"connect to {host}:{port} failed: {e}") from e
        sock.settimeout(600.0)
        return cls(sock)

    @classmethod
    def listen_accept(cls, host: str, port: int, timeout: float = 120.0):
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
            srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                srv.bind((host, port))
                srv.listen(1)
                srv.settimeout(timeout)
                sock, _ = srv.accept()
            except OSError as e:
                raise ChannelError(f"listen on {host}:{port} failed: {e}") from e
        sock.settimeout(600.0)
        return cls(sock)

    def _send_raw(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as e:
            raise ChannelError(f"send failed: {e}") from e

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self._sock.recv(n - got)
            except OSError as e:
                raise ChannelError(f"recv failed: {e}") from e
            if not chunk:
                raise ChannelError("connection closed mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self):
        self._sock.close()
