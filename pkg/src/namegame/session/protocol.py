"""Two-participant session state machine and wire message schema.

The machine is pure: handle_message(state, msg) returns a new state plus
outbound messages and derived trial events, so a session can be replayed
bit-exactly from its event log. Transport and persistence live elsewhere.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..engine import GameConfig, TrialRecord

__all__ = [
    "LABELS",
    "SCHEMA_VERSION",
    "WireMessage",
    "SessionState",
    "ProtocolViolation",
    "create_session",
    "handle_message",
    "state_hash",
    "header_record",
]

SCHEMA_VERSION = 1
LABELS = ("A", "B", "C", "D", "E")

# client -> server message types
CLIENT_TYPES = {
    "join",
    "submit_initial_categorization",
    "propose_name",
    "decision",
    "edit_categorization",
    "turn_advance",
}


class ProtocolViolation(Exception):
    """Raised by internal validators; surfaced to clients as protocol_error replies."""


@dataclass(frozen=True)
class WireMessage:
    """One protocol frame. On the wire: {session_id, sequence, type, sender, to, body}."""

    type: str
    body: dict
    sender: str | None = None
    to: str | None = None
    session_id: str = ""
    sequence: int = 0

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "sequence": self.sequence,
            "type": self.type,
            "sender": self.sender,
            "to": self.to,
            "body": self.body,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "WireMessage":
        return cls(
            type=doc["type"],
            body=doc.get("body") or {},
            sender=doc.get("sender"),
            to=doc.get("to"),
            session_id=doc.get("session_id", ""),
            sequence=int(doc.get("sequence", 0)),
        )


@dataclass
class SessionState:
    """Full session state; every field is JSON-pure so the state can be hashed."""

    session_id: str
    seed: int
    stimuli_per_dataset: int
    rounds: int
    datasets: list[str]
    manifests: dict  # dataset_id -> manifest document
    orders: dict  # dataset_id -> [rounds][n] stimulus order
    phase: str = "lobby"
    participants: list[str] = field(default_factory=list)
    client_seq: dict = field(default_factory=dict)  # sender -> last accepted sequence
    server_seq: int = 0
    categorizations: dict = field(default_factory=dict)  # pid -> ds -> {stim: label}
    signs: dict = field(default_factory=dict)  # pid -> ds -> {stim: label}
    initialized: list[str] = field(default_factory=list)  # pids done with current dataset init
    dataset_pos: int = 0
    trial_cursor: int = 0  # within current dataset: 0 .. rounds*n*2 - 1
    trial_counter: int = 0  # global, across datasets
    current: dict | None = None  # live trial context
    decision_counts: dict = field(default_factory=dict)  # pid -> ds -> int

    @property
    def current_dataset(self) -> str:
        return self.datasets[self.dataset_pos]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "seed": self.seed,
            "stimuli_per_dataset": self.stimuli_per_dataset,
            "rounds": self.rounds,
            "datasets": self.datasets,
            "manifests": self.manifests,
            "orders": self.orders,
            "phase": self.phase,
            "participants": self.participants,
            "client_seq": self.client_seq,
            "server_seq": self.server_seq,
            "categorizations": self.categorizations,
            "signs": self.signs,
            "initialized": self.initialized,
            "dataset_pos": self.dataset_pos,
            "trial_cursor": self.trial_cursor,
            "trial_counter": self.trial_counter,
            "current": self.current,
            "decision_counts": self.decision_counts,
        }


def state_hash(state: SessionState) -> str:
    payload = json.dumps(state.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def create_session(session_id: str, config: GameConfig, manifests: dict) -> SessionState:
    """Build a fresh session in the lobby. Stimulus presentation orders are fixed
    here from the config seed, so equal configs replay identically."""
    if not session_id:
        raise ValueError("session_id must be non-empty")
    missing = [ds for ds in config.datasets if ds not in manifests]
    if missing:
        raise ValueError(f"missing manifests for datasets: {missing}")
    for ds in config.datasets:
        n = len(manifests[ds].get("stimuli", []))
        if n == 0:
            raise ValueError(f"dataset {ds!r} has no stimuli")
        if n != config.stimuli_per_dataset:
            raise ValueError(
                f"dataset {ds!r} has {n} stimuli, config expects {config.stimuli_per_dataset}"
            )
    rng = np.random.default_rng(config.seed)
    orders = {
        ds: [
            [int(i) for i in rng.permutation(config.stimuli_per_dataset)]
            for _ in range(config.rounds)
        ]
        for ds in config.datasets
    }
    return SessionState(
        session_id=session_id,
        seed=config.seed,
        stimuli_per_dataset=config.stimuli_per_dataset,
        rounds=config.rounds,
        datasets=list(config.datasets),
        manifests={ds: manifests[ds] for ds in config.datasets},
        orders=orders,
    )


def header_record(state: SessionState) -> dict:
    """The session_created log header from which replay rebuilds the initial state."""
    return {
        "type": "session_created",
        "body": {
            "schema": SCHEMA_VERSION,
            "session_id": state.session_id,
            "seed": state.seed,
            "stimuli_per_dataset": state.stimuli_per_dataset,
            "rounds": state.rounds,
            "datasets": state.datasets,
            "manifests": state.manifests,
        },
    }


def config_from_header(body: dict) -> tuple[str, GameConfig, dict]:
    config = GameConfig(
        stimuli_per_dataset=body["stimuli_per_dataset"],
        rounds=body["rounds"],
        datasets=tuple(body["datasets"]),
        seed=body["seed"],
    )
    return body["session_id"], config, body["manifests"]


def _trial_slot(state: SessionState) -> dict:
    """Decode the trial cursor into (round, stimulus, speaker, listener)."""
    n = state.stimuli_per_dataset
    cursor = state.trial_cursor
    round_i = cursor // (2 * n)
    rem = cursor % (2 * n)
    stim = state.orders[state.current_dataset][round_i][rem // 2]
    direction = rem % 2
    speaker = state.participants[direction]
    listener = state.participants[1 - direction]
    return {
        "round": round_i + 1,
        "stimulus_index": stim,
        "speaker": speaker,
        "listener": listener,
    }


def _outbound(state: SessionState, type_: str, body: dict, to: str) -> WireMessage:
    state.server_seq += 1
    return WireMessage(
        type=type_,
        body=body,
        sender="server",
        to=to,
        session_id=state.session_id,
        sequence=state.server_seq,
    )


def _error(state: SessionState, msg: WireMessage, reason: str) -> WireMessage:
    # protocol errors are unordered advisories; they never touch session state
    return WireMessage(
        type="protocol_error",
        body={"reason": reason, "offending_type": msg.type, "offending_sequence": msg.sequence},
        sender="server",
        to=msg.sender,
        session_id=state.session_id,
        sequence=-1,
    )


def _start_trial_messages(state: SessionState) -> list[WireMessage]:
    slot = _trial_slot(state)
    ds = state.current_dataset
    state.current = {
        "round": slot["round"],
        "stimulus_index": slot["stimulus_index"],
        "speaker": slot["speaker"],
        "listener": slot["listener"],
        "proposal": None,
        "pending_trial": None,
        # the listener's maps as of trial start: the knowledge state its
        # acceptance ratio is computed from (in-trial edits arrive later)
        "listener_snapshot": {
            "categories": dict(state.categorizations[slot["listener"]][ds]),
            "signs": dict(state.signs[slot["listener"]][ds]),
        },
    }
    out = []
    for pid in state.participants:
        role = "speaker" if pid == slot["speaker"] else "listener"
        out.append(
            _outbound(
                state,
                "show_stimulus",
                {
                    "dataset_id": state.current_dataset,
                    "stimulus_index": slot["stimulus_index"],
                    "round": slot["round"],
                    "trial": state.trial_counter,
                    "role": role,
                },
                to=pid,
            )
        )
    state.phase = "naming_turn"
    return out


def _begin_dataset_messages(state: SessionState) -> list[WireMessage]:
    state.phase = "initialization"
    state.initialized = []
    state.trial_cursor = 0
    ds = state.current_dataset
    return [
        _outbound(
            state,
            "stimulus_set",
            {"dataset_id": ds, "manifest": state.manifests[ds]},
            to=pid,
        )
        for pid in state.participants
    ]


def _validate_labels_map(state: SessionState, labels: dict) -> dict:
    if not isinstance(labels, dict):
        raise ProtocolViolation("labels must be a map of stimulus index to label")
    cleaned = {}
    for key, label in labels.items():
        idx = int(key)
        if not 0 <= idx < state.stimuli_per_dataset:
            raise ProtocolViolation(f"stimulus index {idx} out of range")
        if label not in LABELS:
            raise ProtocolViolation(f"label {label!r} not in {LABELS}")
        cleaned[str(idx)] = label
    if len(cleaned) != state.stimuli_per_dataset:
        raise ProtocolViolation(
            f"categorization must cover all {state.stimuli_per_dataset} stimuli"
        )
    return cleaned


def _finish_trial(state: SessionState) -> list[dict]:
    """Emit the pending trial event and advance cursor/dataset/phase."""
    events = []
    pending = state.current.get("pending_trial")
    if pending is not None:
        events.append({"type": "trial", "body": pending})
    state.current = None
    state.trial_cursor += 1
    state.trial_counter += 1
    return events


def handle_message(
    state: SessionState, msg: WireMessage
) -> tuple[SessionState, list[WireMessage], list[dict]]:
    """Pure transition. Returns (new state, outbound messages, derived events).

    Invalid or out-of-turn messages produce a protocol_error reply and leave the
    state unchanged.
    """
    if msg.type not in CLIENT_TYPES:
        return state, [_error(state, msg, f"unknown or non-client message type {msg.type!r}")], []

    new = copy.deepcopy(state)
    try:
        out, events = _apply(new, msg)
    except ProtocolViolation as exc:
        return state, [_error(state, msg, str(exc))], []
    except (KeyError, TypeError, ValueError) as exc:
        return state, [_error(state, msg, f"malformed message: {exc}")], []
    return new, out, events


def _check_sender(state: SessionState, msg: WireMessage) -> str:
    sender = msg.sender
    if sender is None:
        raise ProtocolViolation("message has no sender")
    last = state.client_seq.get(sender)
    if last is not None and msg.sequence <= last:
        raise ProtocolViolation(
            f"sequence {msg.sequence} not greater than last accepted {last}"
        )
    return sender


def _apply(state: SessionState, msg: WireMessage) -> tuple[list[WireMessage], list[dict]]:
    sender = _check_sender(state, msg)
    handler = {
        "join": _on_join,
        "submit_initial_categorization": _on_submit_initial,
        "propose_name": _on_propose,
        "decision": _on_decision,
        "edit_categorization": _on_edit,
        "turn_advance": _on_turn_advance,
    }[msg.type]
    out, events = handler(state, msg, sender)
    state.client_seq[sender] = msg.sequence
    return out, events


def _on_join(state, msg, sender) -> tuple[list[WireMessage], list[dict]]:
    if state.phase != "lobby":
        raise ProtocolViolation("session is not accepting joins")
    pid = msg.body.get("participant") or sender
    if pid != sender:
        raise ProtocolViolation("join participant must match sender")
    if pid in state.participants:
        raise ProtocolViolation(f"participant {pid!r} already joined")
    if len(state.participants) >= 2:
        raise ProtocolViolation("session already has two participants")
    state.participants.append(pid)
    state.categorizations[pid] = {}
    state.signs[pid] = {}
    state.decision_counts[pid] = {}
    out = [
        _outbound(state, "joined", {"participant": pid, "participants": list(state.participants)}, to=p)
        for p in state.participants
    ]
    if len(state.participants) == 2:
        out += _begin_dataset_messages(state)
    return out, []


def _on_submit_initial(state, msg, sender) -> tuple[list[WireMessage], list[dict]]:
    if state.phase != "initialization":
        raise ProtocolViolation("not in the initialization phase")
    if sender not in state.participants:
        raise ProtocolViolation(f"unknown participant {sender!r}")
    if sender in state.initialized:
        raise ProtocolViolation("initial categorization already submitted")
    ds = msg.body.get("dataset_id")
    if ds != state.current_dataset:
        raise ProtocolViolation(f"expected dataset {state.current_dataset!r}, got {ds!r}")
    labels = _validate_labels_map(state, msg.body.get("labels", {}))
    state.categorizations[sender][ds] = dict(labels)
    # a participant's sign for a stimulus starts as their own category label
    state.signs[sender][ds] = dict(labels)
    state.decision_counts[sender][ds] = 0
    state.initialized.append(sender)
    out = [
        _outbound(state, "initialization_ack", {"dataset_id": ds, "participant": sender}, to=p)
        for p in state.participants
    ]
    if len(state.initialized) == 2:
        out += _start_trial_messages(state)
    return out, []


def _on_propose(state, msg, sender) -> tuple[list[WireMessage], list[dict]]:
    if state.phase != "naming_turn":
        raise ProtocolViolation("no naming turn in progress")
    if sender != state.current["speaker"]:
        raise ProtocolViolation("only the current speaker may propose a name")
    label = msg.body.get("label")
    if label not in LABELS:
        raise ProtocolViolation(f"label {label!r} not in {LABELS}")
    ds = state.current_dataset
    stim = str(state.current["stimulus_index"])
    state.current["proposal"] = label
    state.current["speaker_category"] = state.categorizations[sender][ds][stim]
    state.phase = "await_decision"
    out = [
        _outbound(
            state,
            "propose_name",
            {
                "label": label,
                "dataset_id": ds,
                "stimulus_index": state.current["stimulus_index"],
                "round": state.current["round"],
            },
            to=state.current["listener"],
        )
    ]
    return out, []


def _on_decision(state, msg, sender) -> tuple[list[WireMessage], list[dict]]:
    if state.phase != "await_decision":
        raise ProtocolViolation("no decision awaited")
    if sender != state.current["listener"]:
        raise ProtocolViolation("only the current listener may decide")
    accept = msg.body.get("accept")
    if not isinstance(accept, bool):
        raise ProtocolViolation("decision body must carry accept: true|false")
    ds = state.current_dataset
    stim = str(state.current["stimulus_index"])
    proposal = state.current["proposal"]
    listener_sign = state.signs[sender][ds][stim]
    listener_category = state.categorizations[sender][ds][stim]
    if accept:
        # an accepted proposal becomes the shared sign: both parties store it
        state.signs[sender][ds][stim] = proposal
        state.signs[state.current["speaker"]][ds][stim] = proposal
    state.decision_counts[sender][ds] += 1

    def label_index(label: str) -> int:
        return LABELS.index(label)

    diag = msg.body.get("diagnostics") or {}
    state.current["pending_trial"] = {
        "trial_index": state.trial_counter,
        "round": state.current["round"],
        "dataset_id": ds,
        "stimulus_index": state.current["stimulus_index"],
        "speaker_id": state.current["speaker"],
        "listener_id": sender,
        "speaker_sign": label_index(proposal),
        "listener_sign": label_index(listener_sign),
        "listener_category": label_index(listener_category),
        "r_mh": diag.get("r_mh"),
        "numerator": diag.get("numerator"),
        "denominator": diag.get("denominator"),
        "decision": int(accept),
        "post_edit": None,
        "listener_snapshot": state.current["listener_snapshot"],
    }
    state.phase = "await_edit"
    out = [
        _outbound(
            state,
            "decision",
            {"accept": accept, "stimulus_index": state.current["stimulus_index"], "dataset_id": ds},
            to=state.current["speaker"],
        )
    ]
    return out, []


def _on_edit(state, msg, sender) -> tuple[list[WireMessage], list[dict]]:
    if state.phase not in ("naming_turn", "await_decision", "await_edit"):
        raise ProtocolViolation("no categorization to edit yet")
    if sender not in state.participants:
        raise ProtocolViolation(f"unknown participant {sender!r}")
    ds = msg.body.get("dataset_id")
    if ds != state.current_dataset:
        raise ProtocolViolation(f"expected dataset {state.current_dataset!r}, got {ds!r}")
    if ds not in state.categorizations[sender]:
        raise ProtocolViolation("initial categorization not submitted for this dataset")
    stim_raw = msg.body.get("stimulus_index")
    label = msg.body.get("label")
    if label not in LABELS:
        raise ProtocolViolation(f"label {label!r} not in {LABELS}")
    stim = int(stim_raw)
    if not 0 <= stim < state.stimuli_per_dataset:
        raise ProtocolViolation(f"stimulus index {stim} out of range")
    state.categorizations[sender][ds][str(stim)] = label
    out = []
    if (
        state.phase == "await_edit"
        and sender == state.current["listener"]
        and stim == state.current["stimulus_index"]
    ):
        # altering the just-decided stimulus triggers the warning prompt
        state.current["pending_trial"]["post_edit"] = LABELS.index(label)
        out.append(
            _outbound(state, "edit_warning", {"stimulus_index": stim, "dataset_id": ds}, to=sender)
        )
    return out, []


def _on_turn_advance(state, msg, sender) -> tuple[list[WireMessage], list[dict]]:
    if state.phase != "await_edit":
        raise ProtocolViolation("nothing to advance")
    if sender != state.current["listener"]:
        raise ProtocolViolation("only the current listener may advance the turn")
    events = _finish_trial(state)
    n = state.stimuli_per_dataset
    if state.trial_cursor < state.rounds * n * 2:
        out = _start_trial_messages(state)
    elif state.dataset_pos + 1 < len(state.datasets):
        state.dataset_pos += 1
        out = _begin_dataset_messages(state)
    else:
        state.phase = "complete"
        out = [
            _outbound(state, "session_complete", {"trials": state.trial_counter}, to=pid)
            for pid in state.participants
        ]
    return out, events


def trial_record_from_event(body: dict) -> TrialRecord:
    """Typed TrialRecord from a logged trial event body."""
    return TrialRecord(
        trial_index=body["trial_index"],
        round=body["round"],
        dataset_id=body["dataset_id"],
        stimulus_index=body["stimulus_index"],
        speaker_id=body["speaker_id"],
        listener_id=body["listener_id"],
        speaker_sign=body["speaker_sign"],
        listener_sign=body["listener_sign"],
        listener_category=body["listener_category"],
        r_mh=body.get("r_mh"),
        decision=body["decision"],
        numerator=body.get("numerator"),
        denominator=body.get("denominator"),
        post_edit=body.get("post_edit"),
    )
