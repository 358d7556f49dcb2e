"""Local session driver: plays the full wire protocol with in-process participants.

The driver feeds participant-produced messages through the pure state machine
and persists everything, so a driven session's log is indistinguishable from a
live networked one.
"""

from __future__ import annotations

import numpy as np

from ..engine import (
    AcceptanceModelKind,
    mh_acceptance,
    model_acceptance,
    scripted_participant,
)
from ..model import Hyperparams, gibbs_fit, posterior_mean_state, sample_category, sign_posterior
from ..engine import GameConfig, TrialRecord
from .eventlog import EventLogWriter, persist_exchange
from .protocol import LABELS, WireMessage, create_session, handle_message, header_record, trial_record_from_event

__all__ = ["LocalSession", "ModelParticipant", "ScriptedPlayer", "play_session"]


class LocalSession:
    """Owns one session's state, per-sender sequence counters, and the log."""

    def __init__(self, session_id: str, config: GameConfig, manifests: dict, log_path=None):
        self.state = create_session(session_id, config, manifests)
        self.writer = EventLogWriter(log_path, session_id) if log_path else None
        if self.writer:
            header = header_record(self.state)
            self.writer.append(header["type"], header["body"])
        self._seq: dict[str, int] = {}

    def submit(self, type: str, body: dict, sender: str):
        """Send one client message; returns (outbound, events). Raises on rejection."""
        self._seq[sender] = self._seq.get(sender, 0) + 1
        msg = WireMessage(
            type=type,
            body=body,
            sender=sender,
            session_id=self.state.session_id,
            sequence=self._seq[sender],
        )
        new_state, outbound, events = handle_message(self.state, msg)
        if outbound and outbound[0].type == "protocol_error":
            raise RuntimeError(f"protocol error: {outbound[0].body['reason']}")
        self.state = new_state
        persist_exchange(self.writer, msg, outbound, events)
        return outbound, events

    def close(self):
        if self.writer:
            self.writer.close()


class ModelParticipant:
    """A synthetic participant backed by the Gaussian-mixture sign model.

    Perceives by resampling its category for the shown stimulus, proposes from
    its sign posterior, decides through an acceptance model, and refreshes its
    parameters after every exchange; sends categorization edits whenever its
    perceived label changes so the server-side record tracks its state.
    """

    def __init__(
        self,
        participant_id: str,
        kind: AcceptanceModelKind,
        hyper: Hyperparams,
        seed=0,
        init_iterations: int = 200,
        init_burn_in: int = 100,
    ):
        self.id = participant_id
        self.kind = kind
        self.hyper = hyper
        self._rng = np.random.default_rng(seed)
        self._init_iterations = init_iterations
        self._init_burn_in = init_burn_in
        self._obs: dict[str, np.ndarray] = {}
        self._states: dict[str, object] = {}
        self._sent_labels: dict[str, dict[int, str]] = {}

    def begin_dataset(self, dataset_id: str, manifest: dict) -> dict[str, str]:
        obs = np.array([[s["l"], s["u"], s["v"]] for s in manifest["stimuli"]])
        self._obs[dataset_id] = obs
        fit = gibbs_fit(
            obs, None, None, self.hyper, self._init_iterations, self._init_burn_in, self._rng
        )
        # working state: posterior means given the categorization actually
        # submitted, with signs starting as own labels (the wire convention)
        self._states[dataset_id] = posterior_mean_state(
            obs, fit.assignments, fit.assignments.copy(), self.hyper
        )
        labels = {str(i): LABELS[c] for i, c in enumerate(fit.assignments)}
        self._sent_labels[dataset_id] = {i: LABELS[c] for i, c in enumerate(fit.assignments)}
        return labels

    def perceive(self, dataset_id: str, stim: int, role: str) -> str | None:
        state = self._states[dataset_id]
        x = self._obs[dataset_id][stim]
        c = sample_category(x, int(state.signs[stim]), state, self._rng)
        self._states[dataset_id] = state.with_assignment(stim, c)
        label = LABELS[c]
        if self._sent_labels[dataset_id].get(stim) != label:
            self._sent_labels[dataset_id][stim] = label
            return label
        return None

    def propose(self, dataset_id: str, stim: int) -> str:
        state = self._states[dataset_id]
        c = int(state.assignments[stim])
        probs = sign_posterior(c, state.theta, self.hyper.pi)
        s_star = int(self._rng.choice(len(probs), p=probs))
        return LABELS[s_star]

    def decide(self, dataset_id: str, stim: int, proposal: str):
        state = self._states[dataset_id]
        c = int(state.assignments[stim])
        s_star = LABELS.index(proposal)
        s_own = int(state.signs[stim])
        numerator = float(state.theta[s_star, c])
        denominator = float(state.theta[s_own, c])
        r_mh = mh_acceptance(c, state.theta, s_star, s_own)
        p = model_acceptance(self.kind, r_mh, numerator, denominator)
        accept = bool(self._rng.random() < p)
        if accept:
            self._states[dataset_id] = state.with_sign(stim, s_star)
        diagnostics = {"r_mh": r_mh, "numerator": numerator, "denominator": denominator}
        return accept, diagnostics

    def post_edit(self, dataset_id: str, stim: int) -> str | None:
        return None

    def trial_finished(self, dataset_id, stim, proposal, accepted, was_speaker) -> None:
        state = self._states[dataset_id]
        if was_speaker and accepted:
            state = state.with_sign(stim, LABELS.index(proposal))
        self._states[dataset_id] = posterior_mean_state(
            self._obs[dataset_id], state.assignments, state.signs, self.hyper
        )


class ScriptedPlayer:
    """Fully deterministic participant for protocol tests.

    Categorizes by generating-component (or a fixed map), names each stimulus
    with its own current label, and decides from a fixed script or an
    acceptance-model rule. An edit plan {trial_counter: label} triggers
    post-decision edits of the just-decided stimulus.
    """

    def __init__(
        self,
        participant_id: str,
        decisions,
        seed=0,
        initial_labels: dict[str, dict[str, str]] | None = None,
        edit_plan: dict[int, str] | None = None,
    ):
        self.id = participant_id
        self._source = scripted_participant(decisions, seed=seed)
        self._initial_labels = initial_labels or {}
        self._edit_plan = edit_plan or {}
        self._labels: dict[str, dict[int, str]] = {}
        self._trials_seen = 0

    def begin_dataset(self, dataset_id: str, manifest: dict) -> dict[str, str]:
        if dataset_id in self._initial_labels:
            labels = dict(self._initial_labels[dataset_id])
        else:
            labels = {
                str(i): LABELS[(s["component_index"] - 1) % len(LABELS)]
                for i, s in enumerate(manifest["stimuli"])
            }
        self._labels[dataset_id] = {int(i): lab for i, lab in labels.items()}
        return labels

    def perceive(self, dataset_id: str, stim: int, role: str) -> str | None:
        return None

    def propose(self, dataset_id: str, stim: int) -> str:
        return self._labels[dataset_id][stim]

    def decide(self, dataset_id: str, stim: int, proposal: str):
        z = self._source.decide(1.0, 1.0, 1.0)
        if z:
            self._labels[dataset_id][stim] = proposal
        return bool(z), None

    def post_edit(self, dataset_id: str, stim: int) -> str | None:
        label = self._edit_plan.get(self._trials_seen)
        if label is not None:
            self._labels[dataset_id][stim] = label
        return label

    def trial_finished(self, dataset_id, stim, proposal, accepted, was_speaker) -> None:
        self._trials_seen += 1


def play_session(
    players: list,
    session_id: str,
    config: GameConfig,
    manifests: dict,
    log_path=None,
    max_steps: int = 1_000_000,
):
    """Run a complete session with the given participants (join order = list order).

    Returns (final SessionState, list of TrialRecord). With log_path set, the
    produced JSONL log replays to the identical final state.
    """
    if len(players) != 2:
        raise ValueError("a session needs exactly two participants")
    session = LocalSession(session_id, config, manifests, log_path=log_path)
    by_id = {p.id: p for p in players}
    for p in players:
        session.submit("join", {"participant": p.id}, sender=p.id)

    trials: list[TrialRecord] = []
    steps = 0
    while session.state.phase != "complete":
        steps += 1
        if steps > max_steps:
            raise RuntimeError("session did not complete; protocol loop stuck")
        state = session.state
        ds = state.current_dataset
        if state.phase == "initialization":
            for p in players:
                if p.id not in state.initialized:
                    labels = p.begin_dataset(ds, state.manifests[ds])
                    session.submit(
                        "submit_initial_categorization",
                        {"dataset_id": ds, "labels": labels},
                        sender=p.id,
                    )
        elif state.phase == "naming_turn":
            current = state.current
            stim = current["stimulus_index"]
            speaker = by_id[current["speaker"]]
            new_label = speaker.perceive(ds, stim, "speaker")
            if new_label is not None:
                session.submit(
                    "edit_categorization",
                    {"dataset_id": ds, "stimulus_index": stim, "label": new_label},
                    sender=speaker.id,
                )
            session.submit("propose_name", {"label": speaker.propose(ds, stim)}, sender=speaker.id)
        elif state.phase == "await_decision":
            current = state.current
            stim = current["stimulus_index"]
            listener = by_id[current["listener"]]
            new_label = listener.perceive(ds, stim, "listener")
            if new_label is not None:
                session.submit(
                    "edit_categorization",
                    {"dataset_id": ds, "stimulus_index": stim, "label": new_label},
                    sender=listener.id,
                )
            accept, diagnostics = listener.decide(ds, stim, current["proposal"])
            body = {"accept": accept}
            if diagnostics:
                body["diagnostics"] = diagnostics
            session.submit("decision", body, sender=listener.id)
        elif state.phase == "await_edit":
            current = state.current
            stim = current["stimulus_index"]
            listener = by_id[current["listener"]]
            speaker_id = current["speaker"]
            proposal = current["proposal"]
            accepted = bool(current["pending_trial"]["decision"])
            edit_label = listener.post_edit(ds, stim)
            if edit_label is not None:
                session.submit(
                    "edit_categorization",
                    {"dataset_id": ds, "stimulus_index": stim, "label": edit_label},
                    sender=listener.id,
                )
            _, events = session.submit("turn_advance", {}, sender=listener.id)
            for event in events:
                if event["type"] == "trial":
                    trials.append(trial_record_from_event(event["body"]))
            for p in players:
                p.trial_finished(ds, stim, proposal, accepted, p.id == speaker_id)
        else:
            raise RuntimeError(f"unexpected phase {state.phase!r}")
    session.close()
    return session.state, trials
