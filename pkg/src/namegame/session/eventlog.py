"""Append-only JSONL event log: persistence, gap-checked replay, analysis extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..engine import TrialRecord
from ..analysis import ParticipantDatasetData, SessionData
from .protocol import (
    CLIENT_TYPES,
    LABELS,
    SessionState,
    WireMessage,
    config_from_header,
    create_session,
    handle_message,
    trial_record_from_event,
)

__all__ = [
    "EventLogWriter",
    "ReplayError",
    "SequenceGapError",
    "IncompleteSessionError",
    "ReplayResult",
    "read_log",
    "replay_log",
    "session_data",
    "persist_exchange",
]


class ReplayError(Exception):
    pass


class SequenceGapError(ReplayError):
    def __init__(self, lo: int, hi: int):
        self.missing = (lo, hi)
        super().__init__(f"event log is missing sequence numbers {lo}..{hi}")


class IncompleteSessionError(ReplayError):
    """The log ends before the session completed; carries the partial replay."""

    def __init__(self, partial: "ReplayResult"):
        self.partial = partial
        super().__init__(
            f"log ends in phase {partial.state.phase!r} after {len(partial.trials)} complete trials"
        )


class EventLogWriter:
    """One session's ordered append log. Each line is one JSON record with a
    server timestamp and a strictly increasing sequence number."""

    def __init__(self, path, session_id: str):
        self.path = Path(path)
        self.session_id = session_id
        self._seq = 0
        if self.path.exists():
            for record in read_log(self.path):
                self._seq = max(self._seq, record.get("sequence", 0))
        self._fh = self.path.open("a", encoding="utf-8")

    def append(self, type: str, body: dict, sender=None, to=None, wire_sequence=None) -> dict:
        self._seq += 1
        record = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "session_id": self.session_id,
            "sequence": self._seq,
            "type": type,
            "sender": sender,
            "to": to,
            "wire_sequence": wire_sequence,
            "body": body,
        }
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()
        return record

    def append_message(self, msg: WireMessage) -> dict:
        return self.append(
            msg.type, msg.body, sender=msg.sender, to=msg.to, wire_sequence=msg.sequence
        )

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def persist_exchange(
    writer: EventLogWriter | None,
    inbound: WireMessage,
    outbound: list[WireMessage],
    events: list[dict],
) -> None:
    """Log one accepted inbound message, its outbound replies, and derived events."""
    if writer is None:
        return
    writer.append_message(inbound)
    for msg in outbound:
        writer.append_message(msg)
    for event in events:
        writer.append(event["type"], event["body"])


def read_log(path) -> list[dict]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


@dataclass(frozen=True)
class ReplayResult:
    state: SessionState
    trials: tuple[TrialRecord, ...]
    header: dict
    # per trial: the listener's (categories, signs) label maps at trial start
    trial_snapshots: tuple = ()


def replay_log(source, strict: bool = True) -> ReplayResult:
    """Re-run the pure state machine over a log.

    The records must carry consecutive sequence numbers (a gap raises
    SequenceGapError naming the missing range). Only complete trials are
    yielded; with strict=True a log that ends before session completion raises
    IncompleteSessionError carrying the partial result.
    """
    records = read_log(source) if not isinstance(source, list) else source
    if not records:
        raise ReplayError("empty event log")
    last_seq = None
    for record in records:
        seq = record.get("sequence")
        if seq is None:
            raise ReplayError("record without sequence number")
        if last_seq is not None and seq != last_seq + 1:
            raise SequenceGapError(last_seq + 1, seq - 1)
        last_seq = seq
    if records[0]["type"] != "session_created":
        raise ReplayError("log does not start with a session_created header")
    header = records[0]["body"]
    session_id, config, manifests = config_from_header(header)
    state = create_session(session_id, config, manifests)

    trials: list[TrialRecord] = []
    snapshots: list[dict | None] = []
    logged_trials = 0
    for record in records[1:]:
        rtype = record["type"]
        if rtype == "trial":
            logged_trials += 1
            continue
        # server outbound records (including relays that share client type
        # names) are re-derived by the machine, not replayed
        if rtype not in CLIENT_TYPES or record.get("sender") in (None, "server"):
            continue
        msg = WireMessage(
            type=rtype,
            body=record.get("body") or {},
            sender=record.get("sender"),
            session_id=record.get("session_id", ""),
            sequence=int(record.get("wire_sequence") or 0),
        )
        state, outbound, events = handle_message(state, msg)
        if outbound and outbound[0].type == "protocol_error":
            raise ReplayError(
                f"logged message rejected on replay: {outbound[0].body.get('reason')}"
            )
        for event in events:
            if event["type"] == "trial":
                trials.append(trial_record_from_event(event["body"]))
                snapshots.append(event["body"].get("listener_snapshot"))
    complete = state.phase == "complete"
    if complete and logged_trials and logged_trials != len(trials):
        raise ReplayError(
            f"log contains {logged_trials} trial records but replay derived {len(trials)}"
        )
    result = ReplayResult(
        state=state, trials=tuple(trials), header=header, trial_snapshots=tuple(snapshots)
    )
    if strict and not complete:
        raise IncompleteSessionError(result)
    return result


def session_data(result: ReplayResult) -> SessionData:
    """Analysis view of a replayed session: per-participant final (x, c, s) plus trials."""
    state = result.state
    data = {}
    for pid in state.participants:
        for ds in state.datasets:
            if ds not in state.categorizations.get(pid, {}):
                continue
            manifest = state.manifests[ds]
            obs = np.array([[s["l"], s["u"], s["v"]] for s in manifest["stimuli"]])
            n = len(obs)
            categories = np.array(
                [LABELS.index(state.categorizations[pid][ds][str(i)]) for i in range(n)]
            )
            signs = np.array([LABELS.index(state.signs[pid][ds][str(i)]) for i in range(n)])
            data[(pid, ds)] = ParticipantDatasetData(
                participant_id=pid,
                dataset_id=ds,
                observations=obs,
                categories=categories,
                signs=signs,
            )
    trial_states = []
    for snap in result.trial_snapshots:
        if snap is None:
            trial_states.append(None)
            continue
        n = len(snap["categories"])
        trial_states.append(
            {
                "categories": np.array([LABELS.index(snap["categories"][str(i)]) for i in range(n)]),
                "signs": np.array([LABELS.index(snap["signs"][str(i)]) for i in range(n)]),
            }
        )
    return SessionData(
        participants=tuple(state.participants),
        data=data,
        trials=result.trials,
        trial_states=tuple(trial_states),
    )
