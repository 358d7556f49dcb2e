import warnings

import pytest

from namegame.analysis import infer_decisions
from namegame.engine import Constant, GameConfig, MH
from namegame.model import default_hyperparams
from namegame.session import (
    EventLogWriter,
    IncompleteSessionError,
    LocalSession,
    ModelParticipant,
    ReplayError,
    ScriptedPlayer,
    SequenceGapError,
    WireMessage,
    create_session,
    handle_message,
    play_session,
    read_log,
    replay_log,
    session_data,
    state_hash,
)
from namegame.stimulus import dataset_specs, manifest_dict, sample_stimuli


def make_manifests(datasets=("hard", "easy"), n=15, seed=5):
    manifests = {}
    for i, name in enumerate(datasets):
        spec = dataset_specs(name)
        sset = sample_stimuli(spec, n, seed=seed + i, dataset_id=name)
        manifests[name] = manifest_dict(sset, spec)
    return manifests


def make_config(datasets=("hard", "easy"), rounds=3, n=15, seed=0):
    return GameConfig(stimuli_per_dataset=n, rounds=rounds, datasets=datasets, seed=seed)


def scripted_pair(n_decisions, accept_rate=0.7, edit_plan=None):
    a = ScriptedPlayer("A", Constant(accept_rate), seed=1)
    b = ScriptedPlayer("B", Constant(accept_rate), seed=2, edit_plan=edit_plan)
    return [a, b]


class TestCreateSession:
    def test_orders_deterministic(self):
        manifests = make_manifests()
        s1 = create_session("x", make_config(seed=3), manifests)
        s2 = create_session("y", make_config(seed=3), manifests)
        assert s1.orders == s2.orders

    def test_zero_stimuli_rejected(self):
        manifests = make_manifests()
        manifests["hard"] = dict(manifests["hard"], stimuli=[])
        with pytest.raises(ValueError):
            create_session("x", make_config(), manifests)

    def test_count_mismatch_rejected(self):
        manifests = make_manifests(n=10)
        with pytest.raises(ValueError):
            create_session("x", make_config(n=15), manifests)

    def test_missing_manifest_rejected(self):
        manifests = make_manifests(datasets=("hard",))
        with pytest.raises(ValueError):
            create_session("x", make_config(datasets=("hard", "easy")), manifests)

    def test_default_decision_arithmetic(self):
        config = make_config()
        assert config.decisions_per_participant_per_dataset == 45


class TestHandleMessage:
    def _session_in_naming_turn(self):
        manifests = make_manifests(datasets=("hard",))
        state = create_session("s", make_config(datasets=("hard",)), manifests)
        seqs = {"A": 0, "B": 0}

        def send(type_, body, sender):
            seqs[sender] += 1
            msg = WireMessage(type=type_, body=body, sender=sender, session_id="s", sequence=seqs[sender])
            return handle_message(state, msg)

        for pid in ("A", "B"):
            state, out, _ = send("join", {"participant": pid}, pid)
        labels = {str(i): "ABCDE"[i % 5] for i in range(15)}
        for pid in ("A", "B"):
            state, out, _ = send("submit_initial_categorization", {"dataset_id": "hard", "labels": labels}, pid)
        return state, seqs

    def test_propose_from_listener_rejected_state_unchanged(self):
        state, seqs = self._session_in_naming_turn()
        listener = state.current["listener"]
        before = state_hash(state)
        msg = WireMessage(
            type="propose_name", body={"label": "A"}, sender=listener,
            session_id="s", sequence=seqs[listener] + 1,
        )
        new_state, out, events = handle_message(state, msg)
        assert new_state is state
        assert state_hash(new_state) == before
        assert out[0].type == "protocol_error"
        assert events == []

    def test_stale_sequence_rejected(self):
        state, seqs = self._session_in_naming_turn()
        speaker = state.current["speaker"]
        msg = WireMessage(
            type="propose_name", body={"label": "A"}, sender=speaker,
            session_id="s", sequence=0,
        )
        new_state, out, _ = handle_message(state, msg)
        assert new_state is state
        assert out[0].type == "protocol_error"

    def test_incomplete_initial_categorization_rejected(self):
        manifests = make_manifests(datasets=("hard",))
        state = create_session("s", make_config(datasets=("hard",)), manifests)
        for i, pid in enumerate(("A", "B")):
            msg = WireMessage(type="join", body={"participant": pid}, sender=pid, session_id="s", sequence=1)
            state, _, _ = handle_message(state, msg)
        labels = {str(i): "A" for i in range(14)}  # one short
        msg = WireMessage(
            type="submit_initial_categorization",
            body={"dataset_id": "hard", "labels": labels},
            sender="A", session_id="s", sequence=2,
        )
        new_state, out, _ = handle_message(state, msg)
        assert out[0].type == "protocol_error"

    def test_third_join_rejected(self):
        manifests = make_manifests(datasets=("hard",))
        state = create_session("s", make_config(datasets=("hard",)), manifests)
        for pid in ("A", "B"):
            msg = WireMessage(type="join", body={"participant": pid}, sender=pid, session_id="s", sequence=1)
            state, _, _ = handle_message(state, msg)
        msg = WireMessage(type="join", body={"participant": "C"}, sender="C", session_id="s", sequence=1)
        _, out, _ = handle_message(state, msg)
        assert out[0].type == "protocol_error"

    def test_duplicate_join_rejected(self):
        manifests = make_manifests(datasets=("hard",))
        state = create_session("s", make_config(datasets=("hard",)), manifests)
        msg = WireMessage(type="join", body={"participant": "A"}, sender="A", session_id="s", sequence=1)
        state, _, _ = handle_message(state, msg)
        msg = WireMessage(type="join", body={"participant": "A"}, sender="A", session_id="s", sequence=2)
        _, out, _ = handle_message(state, msg)
        assert out[0].type == "protocol_error"

    def test_malformed_bodies_become_protocol_errors(self):
        state, seqs = self._session_in_naming_turn()
        speaker = state.current["speaker"]
        for body in (
            {"dataset_id": "hard", "stimulus_index": "wat", "label": "A"},
            {"dataset_id": "hard", "stimulus_index": None, "label": "A"},
            {"dataset_id": "hard"},
        ):
            msg = WireMessage(
                type="edit_categorization", body=body, sender=speaker,
                session_id="s", sequence=seqs[speaker] + 1,
            )
            new_state, out, _ = handle_message(state, msg)
            assert new_state is state
            assert out[0].type == "protocol_error"


class TestScriptedSession:
    def test_decision_counts_and_completion(self, tmp_path):
        manifests = make_manifests()
        config = make_config()
        state, trials = play_session(
            scripted_pair(90), "full", config, manifests, log_path=tmp_path / "s.jsonl"
        )
        assert state.phase == "complete"
        # 45 decisions per participant per dataset; 90 across both datasets
        for pid in ("A", "B"):
            for ds in ("hard", "easy"):
                assert state.decision_counts[pid][ds] == 45
            assert sum(1 for t in trials if t.listener_id == pid) == 90
        assert len(trials) == 180

    def test_role_alternation_and_coverage(self):
        manifests = make_manifests(datasets=("hard",))
        config = make_config(datasets=("hard",))
        state, trials = play_session(scripted_pair(45), "alt", config, manifests)
        for prev, cur in zip(trials, trials[1:]):
            assert prev.speaker_id != cur.speaker_id
        for round_i in (1, 2, 3):
            for speaker in ("A", "B"):
                named = [t.stimulus_index for t in trials if t.round == round_i and t.speaker_id == speaker]
                assert sorted(named) == list(range(15))

    def test_fixed_script_replayed_in_order(self):
        script = ([1, 0] * 23)[:45]
        a = ScriptedPlayer("A", Constant(0.5), seed=1)
        b = ScriptedPlayer("B", script)
        manifests = make_manifests(datasets=("hard",))
        config = make_config(datasets=("hard",))
        _, trials = play_session([a, b], "script", config, manifests)
        b_decisions = [t.decision for t in trials if t.listener_id == "B"]
        assert b_decisions == script

    def test_post_decision_edit_warning(self, tmp_path):
        # B edits the just-decided stimulus after its first decision
        manifests = make_manifests(datasets=("hard",))
        config = make_config(datasets=("hard",))
        players = scripted_pair(45, edit_plan={0: "E"})
        log = tmp_path / "edit.jsonl"
        state, trials = play_session(players, "edits", config, manifests, log_path=log)
        records = read_log(log)
        warnings_seen = [rec for rec in records if rec["type"] == "edit_warning"]
        assert len(warnings_seen) == 1
        assert warnings_seen[0]["to"] == "B"
        edited = [t for t in trials if t.post_edit is not None]
        assert len(edited) == 1
        assert edited[0].post_edit == 4  # label E

    def test_edit_other_stimulus_no_warning(self):
        manifests = make_manifests(datasets=("hard",))
        state = create_session("w", make_config(datasets=("hard",)), manifests)
        seqs = {"A": 0, "B": 0}

        def send(type_, body, sender):
            seqs[sender] += 1
            msg = WireMessage(type=type_, body=body, sender=sender, session_id="w", sequence=seqs[sender])
            out = handle_message(state, msg)
            assert not (out[1] and out[1][0].type == "protocol_error"), out[1][0].body
            return out

        labels = {str(i): "A" for i in range(15)}
        for pid in ("A", "B"):
            state, _, _ = send("join", {"participant": pid}, pid)
        for pid in ("A", "B"):
            state, _, _ = send("submit_initial_categorization", {"dataset_id": "hard", "labels": labels}, pid)
        speaker = state.current["speaker"]
        listener = state.current["listener"]
        stim = state.current["stimulus_index"]
        state, _, _ = send("propose_name", {"label": "B"}, speaker)
        state, _, _ = send("decision", {"accept": True}, listener)
        other = (stim + 1) % 15
        state, out, _ = send(
            "edit_categorization", {"dataset_id": "hard", "stimulus_index": other, "label": "C"}, listener
        )
        assert all(m.type != "edit_warning" for m in out)
        # editing the decided stimulus does warn
        state, out, _ = send(
            "edit_categorization", {"dataset_id": "hard", "stimulus_index": stim, "label": "D"}, listener
        )
        assert any(m.type == "edit_warning" for m in out)


class TestReplay:
    def _play(self, tmp_path, **kwargs):
        manifests = make_manifests()
        config = make_config()
        log = tmp_path / "session.jsonl"
        state, trials = play_session(scripted_pair(90), "rp", config, manifests, log_path=log, **kwargs)
        return state, trials, log

    def test_round_trip_state_hash(self, tmp_path):
        state, trials, log = self._play(tmp_path)
        result = replay_log(log)
        assert state_hash(result.state) == state_hash(state)
        assert len(result.trials) == len(trials)
        assert result.trials == tuple(trials)

    def test_gap_detection_names_range(self, tmp_path):
        _, _, log = self._play(tmp_path)
        records = read_log(log)
        removed = [rec for rec in records if rec["sequence"] not in (5, 6)]
        with pytest.raises(SequenceGapError) as err:
            replay_log(removed)
        assert err.value.missing == (5, 6)

    def test_truncated_log_incomplete_error(self, tmp_path):
        _, trials, log = self._play(tmp_path)
        records = read_log(log)
        truncated = records[: int(len(records) * 0.6)]
        with pytest.raises(IncompleteSessionError) as err:
            replay_log(truncated)
        partial = err.value.partial
        assert len(partial.trials) < len(trials)
        # only complete trials are yielded
        assert all(t.decision in (0, 1) for t in partial.trials)

    def test_empty_log_rejected(self):
        with pytest.raises(ReplayError):
            replay_log([])

    def test_replayed_trials_flow_through_inference_cleanly(self, tmp_path):
        _, _, log = self._play(tmp_path)
        result = replay_log(log)
        data = session_data(result)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            inferred = infer_decisions(data, default_hyperparams())
        assert inferred.skipped == 0
        assert len(inferred.records) == 180

    def test_model_participant_session_replays(self, tmp_path):
        manifests = make_manifests(datasets=("easy",))
        config = make_config(datasets=("easy",), rounds=2)
        hyper = default_hyperparams()
        players = [
            ModelParticipant("A", MH(), hyper, seed=10),
            ModelParticipant("B", MH(), hyper, seed=11),
        ]
        log = tmp_path / "mh.jsonl"
        state, trials = play_session(players, "mh", config, manifests, log_path=log)
        result = replay_log(log)
        assert state_hash(result.state) == state_hash(state)
        data = session_data(result)
        inferred = infer_decisions(data, hyper)
        # per-trial snapshots make the inferred ratios match the participants' own
        by_key = {(t.listener_id, t.trial_index): t for t in trials}
        for rec in inferred.records:
            t = by_key[(rec.participant_id, rec.trial_index)]
            assert rec.r_mh == pytest.approx(t.r_mh, abs=1e-12)


class TestEventLogWriter:
    def test_sequences_strictly_increasing(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with EventLogWriter(path, "s") as writer:
            writer.append("a", {})
            writer.append("b", {})
        records = read_log(path)
        assert [rec["sequence"] for rec in records] == [1, 2]

    def test_resume_continues_sequence(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with EventLogWriter(path, "s") as writer:
            writer.append("a", {})
        with EventLogWriter(path, "s") as writer:
            writer.append("b", {})
        assert [rec["sequence"] for rec in read_log(path)] == [1, 2]


class TestLocalSessionErrors:
    def test_protocol_error_raises(self):
        manifests = make_manifests(datasets=("hard",))
        session = LocalSession("e", make_config(datasets=("hard",)), manifests)
        session.submit("join", {"participant": "A"}, sender="A")
        with pytest.raises(RuntimeError):
            session.submit("propose_name", {"label": "A"}, sender="A")
