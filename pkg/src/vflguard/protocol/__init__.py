from .messages import (BackwardMsg, ForwardMsg, MsgType, ProtocolError, SessionClose, SessionHello,
                       decode_msg, encode_msg, narrowed, read_msg)
from .parties import ActiveParty, PassiveParty, StepSummary, active_step, passive_backward, passive_forward
from .session import Experiment, Session, SessionAbort, build_dataset, build_models, run_training
from .transport import ActiveWorker, InProcessTransport, SocketTransport

__all__ = [
    "ActiveParty", "ActiveWorker", "BackwardMsg", "Experiment", "ForwardMsg", "InProcessTransport",
    "MsgType", "PassiveParty", "ProtocolError", "Session", "SessionAbort", "SessionClose",
    "SessionHello", "SocketTransport", "StepSummary", "active_step", "build_dataset", "build_models",
    "decode_msg", "encode_msg", "narrowed", "passive_backward", "passive_forward", "read_msg",
    "run_training",
]
