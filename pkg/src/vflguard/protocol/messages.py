"""Wire messages and their byte codec.

Every frame is little-endian::

    magic  "VFL1"            4 bytes
    type   u8                0 forward, 1 backward, 2 hello, 3 close
    batch  u64
    rows   u32
    cols   u32
    payload rows*cols f32    row-major
    loss   f32               backward frames only
    d_emb u32, version u16   hello frames only

Hello and close frames carry ``batch = rows = cols = 0``.  A frame's length
is fully determined by its 21-byte header, so frames can be read straight
off a byte stream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Union

import numpy as np

MAGIC = b"VFL1"
PROTOCOL_VERSION = 1
HEADER = struct.Struct("<4sBQII")
HELLO_TAIL = struct.Struct("<IH")
LOSS = struct.Struct("<f")


class ProtocolError(RuntimeError):
    pass


class MsgType(IntEnum):
    FORWARD = 0
    BACKWARD = 1
    HELLO = 2
    CLOSE = 3


@dataclass(frozen=True, eq=False)
class ForwardMsg:
    batch_id: int
    embedding: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, ForwardMsg) and self.batch_id == other.batch_id
                and self.embedding.shape == other.embedding.shape
                and np.array_equal(self.embedding, other.embedding))


@dataclass(frozen=True, eq=False)
class BackwardMsg:
    batch_id: int
    grad: np.ndarray
    loss_value: float

    def __eq__(self, other):
        return (isinstance(other, BackwardMsg) and self.batch_id == other.batch_id
                and self.grad.shape == other.grad.shape
                and np.array_equal(self.grad, other.grad)
                and (self.loss_value == other.loss_value
                     or (np.isnan(self.loss_value) and np.isnan(other.loss_value))))


@dataclass(frozen=True)
class SessionHello:
    d_emb: int
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class SessionClose:
    pass


Message = Union[ForwardMsg, BackwardMsg, SessionHello, SessionClose]


def _matrix(a: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ProtocolError(f"{what} must be a non-empty matrix, got shape {a.shape}")
    return a


def encode_msg(m: Message) -> bytes:
    if isinstance(m, ForwardMsg):
        a = _matrix(m.embedding, "embedding")
        return HEADER.pack(MAGIC, MsgType.FORWARD, m.batch_id, *a.shape) + a.astype("<f4").tobytes()
    if isinstance(m, BackwardMsg):
        a = _matrix(m.grad, "grad")
        return (HEADER.pack(MAGIC, MsgType.BACKWARD, m.batch_id, *a.shape) + a.astype("<f4").tobytes()
                + LOSS.pack(m.loss_value))
    if isinstance(m, SessionHello):
        return HEADER.pack(MAGIC, MsgType.HELLO, 0, 0, 0) + HELLO_TAIL.pack(m.d_emb, m.version)
    if isinstance(m, SessionClose):
        return HEADER.pack(MAGIC, MsgType.CLOSE, 0, 0, 0)
    raise TypeError(f"cannot encode {type(m).__name__}")


def _body_length(kind: int, rows: int, cols: int) -> int:
    if kind == MsgType.FORWARD:
        return 4 * rows * cols
    if kind == MsgType.BACKWARD:
        return 4 * rows * cols + LOSS.size
    if kind == MsgType.HELLO:
        return HELLO_TAIL.size
    if kind == MsgType.CLOSE:
        return 0
    raise ProtocolError(f"unknown message type {kind}")


def _parse_header(head: bytes):
    magic, kind, batch_id, rows, cols = HEADER.unpack(head)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    return kind, batch_id, rows, cols


def _build(kind, batch_id, rows, cols, body: bytes) -> Message:
    if kind in (MsgType.FORWARD, MsgType.BACKWARD):
        if rows < 1 or cols < 1:
            raise ProtocolError(f"empty matrix {rows}x{cols} in frame")
        mat = np.frombuffer(body, dtype="<f4", count=rows * cols).reshape(rows, cols).astype(np.float64)
        if kind == MsgType.FORWARD:
            return ForwardMsg(batch_id, mat)
        (loss,) = LOSS.unpack_from(body, 4 * rows * cols)
        return BackwardMsg(batch_id, mat, float(loss))
    if kind == MsgType.HELLO:
        d_emb, version = HELLO_TAIL.unpack(body)
        return SessionHello(d_emb, version)
    return SessionClose()


def decode_msg(data: bytes) -> Message:
    if len(data) < HEADER.size:
        raise ProtocolError(f"frame too short ({len(data)} bytes)")
    kind, batch_id, rows, cols = _parse_header(data[:HEADER.size])
    need = _body_length(kind, rows, cols)
    if len(data) != HEADER.size + need:
        raise ProtocolError(f"frame length {len(data)} != expected {HEADER.size + need}")
    return _build(kind, batch_id, rows, cols, data[HEADER.size:])


def read_msg(read_exactly: Callable[[int], bytes]) -> Message:
    """Read one frame using ``read_exactly(n)``, which must return n bytes."""
    head = read_exactly(HEADER.size)
    kind, batch_id, rows, cols = _parse_header(head)
    body = read_exactly(_body_length(kind, rows, cols))
    return _build(kind, batch_id, rows, cols, body)


def narrowed(m: Message) -> Message:
    """The message as it looks after a trip through the f32 wire format."""
    return decode_msg(encode_msg(m))
