"""Live session hosting: wire protocol, state machine, event log, drivers, server."""

from .protocol import (
    LABELS,
    SCHEMA_VERSION,
    ProtocolViolation,
    SessionState,
    WireMessage,
    create_session,
    handle_message,
    header_record,
    state_hash,
)
from .eventlog import (
    EventLogWriter,
    IncompleteSessionError,
    ReplayError,
    ReplayResult,
    SequenceGapError,
    read_log,
    replay_log,
    session_data,
)
from .driver import LocalSession, ModelParticipant, ScriptedPlayer, play_session

__all__ = [
    "LABELS",
    "SCHEMA_VERSION",
    "ProtocolViolation",
    "SessionState",
    "WireMessage",
    "create_session",
    "handle_message",
    "header_record",
    "state_hash",
    "EventLogWriter",
    "IncompleteSessionError",
    "ReplayError",
    "ReplayResult",
    "SequenceGapError",
    "read_log",
    "replay_log",
    "session_data",
    "LocalSession",
    "ModelParticipant",
    "ScriptedPlayer",
    "play_session",
]
