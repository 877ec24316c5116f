"""Duplex channels between the two parties.

``InProcessTransport`` delivers message objects by direct call (optionally
round-tripping them through the codec); ``SocketTransport`` frames them
over a stream socket with the active party served from its own thread.
Both give the passive side the same ``send`` / ``recv`` surface.
"""

from __future__ import annotations

import socket
import threading
from collections import deque
from typing import Iterator, Optional, Tuple

from .messages import (ForwardMsg, Message, ProtocolError, SessionClose, SessionHello,
                       encode_msg, narrowed, read_msg)
from .parties import ActiveParty


class ActiveWorker:
    """Answers frames for one session.

    ``batches`` yields ``(labels, x_active_or_None)`` aligned with the
    passive party's batch order; the active party keeps its own copy of the
    shared row order, as aligned vFL parties do.
    """

    def __init__(self, party: ActiveParty, batches: Iterator[Tuple]):
        self.party = party
        self.batches = batches
        self.closed = False

    def handle(self, msg: Message) -> Optional[Message]:
        if isinstance(msg, SessionHello):
            return self.party.accept_hello(msg)
        if isinstance(msg, ForwardMsg):
            try:
                y, xa = next(self.batches)
            except StopIteration:
                raise ProtocolError("active party ran out of label batches") from None
            return self.party.step(msg, y, xa)
        if isinstance(msg, SessionClose):
            self.closed = True
            return None
        raise ProtocolError(f"active party cannot handle {type(msg).__name__}")


class InProcessTransport:
    def __init__(self, worker: ActiveWorker, narrow: bool = False):
        self.worker = worker
        self.narrow = narrow
        self._replies: deque = deque()

    def send(self, msg: Message) -> None:
        if self._replies:
            raise ProtocolError("lockstep violation: previous reply not consumed")
        if self.narrow:
            msg = narrowed(msg)
        reply = self.worker.handle(msg)
        if reply is not None:
            self._replies.append(narrowed(reply) if self.narrow else reply)

    def recv(self) -> Message:
        if not self._replies:
            raise ProtocolError("no message waiting")
        return self._replies.popleft()

    def close(self) -> None:
        self.send(SessionClose())


def _reader(sock: socket.socket):
    def read_exactly(n: int) -> bytes:
        chunks = []
        while n:
            chunk = sock.recv(n)
            if not chunk:
                raise ProtocolError("connection closed mid-frame")
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)
    return read_exactly


def serve_socket(worker: ActiveWorker, sock: socket.socket) -> None:
    read_exactly = _reader(sock)
    try:
        while True:
            msg = read_msg(read_exactly)
            reply = worker.handle(msg)
            if isinstance(msg, SessionClose):
                return
            sock.sendall(encode_msg(reply))
    finally:
        sock.close()


class SocketTransport:
    def __init__(self, sock: socket.socket, thread: Optional[threading.Thread] = None):
        self.sock = sock
        self.thread = thread
        self._error: list = []
        self._read = _reader(sock)

    @classmethod
    def spawn(cls, worker: ActiveWorker) -> "SocketTransport":
        """Serve ``worker`` on a thread over a local socket pair."""
        ours, theirs = socket.socketpair()
        transport = cls(ours)

        def run():
            try:
                serve_socket(worker, theirs)
            except BaseException as exc:  # surfaced on the passive side
                transport._error.append(exc)

        transport.thread = threading.Thread(target=run, name="active-party", daemon=True)
        transport.thread.start()
        return transport

    @classmethod
    def connect(cls, host: str, port: int) -> "SocketTransport":
        return cls(socket.create_connection((host, port)))

    def _raise_remote(self):
        if self.thread is not None:
            self.thread.join(timeout=5)
        if self._error:
            raise self._error[0]

    def send(self, msg: Message) -> None:
        try:
            self.sock.sendall(encode_msg(msg))
        except OSError:
            self._raise_remote()
            raise

    def recv(self) -> Message:
        try:
            return read_msg(self._read)
        except ProtocolError:
            self._raise_remote()
            raise

    def close(self) -> None:
        try:
            self.send(SessionClose())
        finally:
            if self.thread is not None:
                self.thread.join(timeout=5)
            self.sock.close()
        if self._error:
            raise self._error[0]
