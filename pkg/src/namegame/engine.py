"""Joint-attention naming game engine: proposal, acceptance rules, learning, turn-taking."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .model import (
    AgentState,
    Hyperparams,
    default_hyperparams,
    gibbs_fit,
    posterior_mean_state,
    sample_category,
    sample_posterior_state,
    sign_posterior,
)
from .stimulus import StimulusSet

__all__ = [
    "Constant",
    "MH",
    "Numerator",
    "Subtraction",
    "Binary",
    "AffineMH",
    "AcceptanceModelKind",
    "TrialRecord",
    "GameConfig",
    "ScriptExhausted",
    "mh_acceptance",
    "model_acceptance",
    "speaker_propose",
    "run_naming_game",
    "sign_agreement",
    "trial_event_body",
    "write_history_jsonl",
    "read_history_jsonl",
    "scripted_participant",
    "ScriptedDecisions",
    "ModelDecisions",
    "initial_agents",
]


@dataclass(frozen=True)
class Constant:
    """Accept with a fixed rate regardless of the exchange.

    rate=None defers to the consumer: the analysis resolves it to the
    participant's own empirical acceptance rate.
    """

    rate: float | None

    def __post_init__(self):
        if self.rate is not None and not 0.0 <= self.rate <= 1.0:
            raise ValueError("constant acceptance rate must lie in [0, 1]")


@dataclass(frozen=True)
class MH:
    """Accept with the Metropolis-Hastings ratio itself."""


@dataclass(frozen=True)
class Numerator:
    """Accept with the likelihood of the proposed sign under the listener's table."""


@dataclass(frozen=True)
class Subtraction:
    """Accept with (numerator - denominator) / 2 + 1/2."""


@dataclass(frozen=True)
class Binary:
    """Accept with 0.1 when the MH ratio is <= 0.5, else 0.9."""


@dataclass(frozen=True)
class AffineMH:
    """Accept with a * r_mh + b; the behavioral model fitted in the analysis."""

    a: float
    b: float

    def __post_init__(self):
        if self.b < 0 or self.a + self.b > 1 + 1e-12:
            raise ValueError("affine model requires 0 <= b and a + b <= 1")


AcceptanceModelKind = Union[Constant, MH, Numerator, Subtraction, Binary, AffineMH]


class ScriptExhausted(RuntimeError):
    """A scripted participant ran out of planned decisions."""


@dataclass(frozen=True)
class TrialRecord:
    """One communication event (a single speaker-to-listener exchange)."""

    trial_index: int
    round: int
    dataset_id: str
    stimulus_index: int
    speaker_id: str
    listener_id: str
    speaker_sign: int
    listener_sign: int  # the listener's own sign before the decision
    listener_category: int
    r_mh: float | None
    decision: int  # 1 accepted, 0 rejected
    numerator: float | None = None
    denominator: float | None = None
    post_edit: int | None = None


@dataclass(frozen=True)
class GameConfig:
    """Session arithmetic: each participant decides stimuli_per_dataset x rounds times per dataset."""

    stimuli_per_dataset: int = 15
    rounds: int = 3
    datasets: tuple[str, ...] = ("hard", "easy")
    seed: int = 0

    def __post_init__(self):
        if self.stimuli_per_dataset < 1 or self.rounds < 1:
            raise ValueError("stimuli_per_dataset and rounds must be positive")
        if not self.datasets:
            raise ValueError("at least one dataset is required")

    @property
    def decisions_per_participant_per_dataset(self) -> int:
        return self.stimuli_per_dataset * self.rounds


def mh_acceptance(c_li: int, theta_li: np.ndarray, s_star: int, s_li: int) -> float:
    """min(1, theta[s_star][c] / theta[s_li][c]), with 0/0 and x/0 both mapping to 1."""
    theta_li = np.asarray(theta_li, dtype=float)
    L, K = theta_li.shape
    for name, idx, bound in (("category", c_li, K), ("proposed sign", s_star, L), ("own sign", s_li, L)):
        if not 0 <= idx < bound:
            raise ValueError(f"{name} index {idx} out of range")
    numerator = theta_li[s_star, c_li]
    denominator = theta_li[s_li, c_li]
    if denominator == 0.0:
        return 1.0
    return min(1.0, numerator / denominator)


def model_acceptance(
    kind: AcceptanceModelKind,
    r_mh: float,
    numerator: float,
    denominator: float,
) -> float:
    """Acceptance probability under any of the comparison models."""
    for name, value in (("r_mh", r_mh), ("numerator", numerator), ("denominator", denominator)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    if isinstance(kind, Constant):
        if kind.rate is None:
            raise ValueError("constant model rate is unresolved; supply a rate")
        return kind.rate
    if isinstance(kind, MH):
        return r_mh
    if isinstance(kind, Numerator):
        return numerator
    if isinstance(kind, Subtraction):
        return (numerator - denominator) / 2.0 + 0.5
    if isinstance(kind, Binary):
        return 0.1 if r_mh <= 0.5 else 0.9
    if isinstance(kind, AffineMH):
        p = kind.a * r_mh + kind.b
        if p < 0.0 or p > 1.0:
            warnings.warn(f"affine acceptance {p:.6f} clamped to [0, 1]")
            p = min(1.0, max(0.0, p))
        return p
    raise TypeError(f"unknown acceptance model {kind!r}")


def speaker_propose(c_sp: int, state_sp: AgentState, pi: np.ndarray, seed=0) -> int:
    """Sample the proposed sign from the speaker's sign posterior given its category."""
    rng = np.random.default_rng(seed)
    probs = sign_posterior(c_sp, state_sp.theta, pi)
    return int(rng.choice(len(probs), p=probs))


class ScriptedDecisions:
    """Replays a fixed accept/reject script, in order."""

    def __init__(self, decisions):
        self._decisions = [int(bool(d)) for d in decisions]
        self._pos = 0

    def decide(self, r_mh: float, numerator: float, denominator: float) -> int:
        if self._pos >= len(self._decisions):
            raise ScriptExhausted(f"script exhausted after {self._pos} decisions")
        z = self._decisions[self._pos]
        self._pos += 1
        return z


class ModelDecisions:
    """Draws decisions from an acceptance model, deterministically for a given seed."""

    def __init__(self, kind: AcceptanceModelKind, seed=0):
        self.kind = kind
        self._rng = np.random.default_rng(seed)

    def decide(self, r_mh: float, numerator: float, denominator: float) -> int:
        p = model_acceptance(self.kind, r_mh, numerator, denominator)
        return int(self._rng.random() < p)


def scripted_participant(records, seed=None):
    """Build a decision source from a fixed script or an acceptance-model rule."""
    if isinstance(records, (Constant, MH, Numerator, Subtraction, Binary, AffineMH)):
        return ModelDecisions(records, 0 if seed is None else seed)
    return ScriptedDecisions(records)


def initial_agents(
    observations: np.ndarray,
    hyper: Hyperparams,
    seed=0,
    iterations: int = 150,
    burn_in: int = 75,
) -> tuple[AgentState, AgentState]:
    """Two independently initialized agents for the same observations.

    Each agent runs its own unsupervised Gibbs chain, so their initial
    categorizations and signs differ.
    """
    ss = np.random.SeedSequence(seed).spawn(2)
    a = gibbs_fit(observations, None, None, hyper, iterations, burn_in, ss[0])
    b = gibbs_fit(observations, None, None, hyper, iterations, burn_in, ss[1])
    return a, b


def run_naming_game(
    agents: tuple[AgentState, AgentState],
    stimuli: StimulusSet | np.ndarray,
    config: GameConfig,
    model: AcceptanceModelKind,
    seed=None,
    hyper: Hyperparams | None = None,
    agent_ids: tuple[str, str] = ("A", "B"),
    refresh_every: int | None = 1,
    refresh_kind: str = "mean",
    listener_policies: dict | None = None,
    dataset_id: str | None = None,
) -> tuple[list[TrialRecord], tuple[AgentState, AgentState]]:
    """Play rounds of the naming game over one stimulus set.

    Every (round, stimulus) pair hosts two exchanges, one per speaking
    direction, so each participant makes exactly stimuli_per_dataset x rounds
    accept/reject decisions and speakers of consecutive trials alternate.
    On acceptance both agents store the proposal as their sign for the
    stimulus; on rejection neither changes. After each exchange (cadence
    configurable) both agents refresh their parameters from the conjugate
    posteriors given their current assignments and signs; refresh_kind picks
    posterior means (default, deterministic given the state and the quantity
    the analysis reconstructs) or posterior samples. Stimulus order is
    re-randomized each round from the game seed. Pure: identical inputs and
    seed yield identical histories and final states.
    """
    hyper = hyper or default_hyperparams()
    if isinstance(stimuli, StimulusSet):
        observations = stimuli.observations()
        dataset_id = dataset_id or stimuli.id
    else:
        observations = np.asarray(stimuli, dtype=float).reshape(-1, 3)
        dataset_id = dataset_id or "dataset"
    n = len(observations)
    if n != config.stimuli_per_dataset:
        raise ValueError(
            f"stimulus count {n} does not match config.stimuli_per_dataset "
            f"{config.stimuli_per_dataset}"
        )
    rng = np.random.default_rng(config.seed if seed is None else seed)
    states = {agent_ids[0]: agents[0], agent_ids[1]: agents[1]}
    history: list[TrialRecord] = []
    trial_index = 0

    for round_i in range(1, config.rounds + 1):
        order = rng.permutation(n)
        for stim in order:
            for sp_id, li_id in ((agent_ids[0], agent_ids[1]), (agent_ids[1], agent_ids[0])):
                sp, li = states[sp_id], states[li_id]
                x = observations[stim]

                c_sp = sample_category(x, int(sp.signs[stim]), sp, rng)
                sp = sp.with_assignment(stim, c_sp)
                s_star = speaker_propose(c_sp, sp, hyper.pi, rng)

                c_li = sample_category(x, int(li.signs[stim]), li, rng)
                li = li.with_assignment(stim, c_li)
                s_li = int(li.signs[stim])
                numerator = float(li.theta[s_star, c_li])
                denominator = float(li.theta[s_li, c_li])
                r_mh = mh_acceptance(c_li, li.theta, s_star, s_li)

                if listener_policies and li_id in listener_policies:
                    z = int(listener_policies[li_id].decide(r_mh, numerator, denominator))
                else:
                    p = model_acceptance(model, r_mh, numerator, denominator)
                    z = int(rng.random() < p)
                if z:
                    # an accepted proposal becomes the shared sign sample: both
                    # the listener and the proposing speaker store it
                    li = li.with_sign(stim, s_star)
                    sp = sp.with_sign(stim, s_star)

                states[sp_id], states[li_id] = sp, li
                if refresh_every and (trial_index + 1) % refresh_every == 0:
                    for pid in agent_ids:
                        st = states[pid]
                        if refresh_kind == "mean":
                            states[pid] = posterior_mean_state(
                                observations, st.assignments, st.signs, hyper
                            )
                        else:
                            states[pid] = sample_posterior_state(
                                observations, st.assignments, st.signs, hyper, rng
                            )

                history.append(
                    TrialRecord(
                        trial_index=trial_index,
                        round=round_i,
                        dataset_id=dataset_id,
                        stimulus_index=int(stim),
                        speaker_id=sp_id,
                        listener_id=li_id,
                        speaker_sign=s_star,
                        listener_sign=s_li,
                        listener_category=c_li,
                        r_mh=r_mh,
                        decision=z,
                        numerator=numerator,
                        denominator=denominator,
                    )
                )
                trial_index += 1

    return history, (states[agent_ids[0]], states[agent_ids[1]])


def sign_agreement(state_a: AgentState, state_b: AgentState) -> float:
    """Fraction of stimuli on which the two agents currently hold the same sign."""
    if len(state_a.signs) != len(state_b.signs):
        raise ValueError("agents must cover the same stimuli")
    if len(state_a.signs) == 0:
        return 1.0
    return float(np.mean(state_a.signs == state_b.signs))


def trial_event_body(trial: TrialRecord) -> dict:
    """The trial in the session-log record schema."""
    return {
        "trial_index": trial.trial_index,
        "round": trial.round,
        "dataset_id": trial.dataset_id,
        "stimulus_index": trial.stimulus_index,
        "speaker_id": trial.speaker_id,
        "listener_id": trial.listener_id,
        "speaker_sign": trial.speaker_sign,
        "listener_sign": trial.listener_sign,
        "listener_category": trial.listener_category,
        "r_mh": trial.r_mh,
        "numerator": trial.numerator,
        "denominator": trial.denominator,
        "decision": trial.decision,
        "post_edit": trial.post_edit,
    }


def write_history_jsonl(trials: list[TrialRecord], path) -> None:
    """Export a game history as one session-log trial record per line, so
    engine runs and live sessions are interchangeable analysis inputs."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for i, trial in enumerate(trials, start=1):
            record = {"sequence": i, "type": "trial", "body": trial_event_body(trial)}
            fh.write(json.dumps(record) + "\n")


def read_history_jsonl(path) -> list[TrialRecord]:
    """Read a history export back into trial records."""
    trials = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("type") != "trial":
                continue
            body = doc["body"]
            trials.append(
                TrialRecord(
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
            )
    return trials
