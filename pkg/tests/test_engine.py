import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from namegame.engine import (
    AffineMH,
    Binary,
    Constant,
    GameConfig,
    MH,
    ModelDecisions,
    Numerator,
    ScriptExhausted,
    ScriptedDecisions,
    Subtraction,
    initial_agents,
    mh_acceptance,
    model_acceptance,
    run_naming_game,
    scripted_participant,
    sign_agreement,
    speaker_propose,
)
from namegame.model import AgentState, default_hyperparams
from namegame.stimulus import builtin_dataset_specs, sample_stimuli


def _theta(rows):
    return np.asarray(rows, dtype=float)


class TestMHAcceptance:
    def test_same_sign_is_one(self):
        theta = np.random.default_rng(0).dirichlet(np.ones(5), size=5)
        for s in range(5):
            for c in range(5):
                assert mh_acceptance(c, theta, s, s) == 1.0

    def test_ratio(self):
        theta = _theta([[0.2] * 5, [0.4, 0.15, 0.15, 0.15, 0.15]] + [[0.2] * 5] * 3)
        # numerator 0.2, denominator 0.4
        assert mh_acceptance(0, theta, 0, 1) == pytest.approx(0.5)

    def test_min_clamp(self):
        theta = _theta([[0.4, 0.15, 0.15, 0.15, 0.15], [0.2] * 5] + [[0.2] * 5] * 3)
        # numerator 0.4, denominator 0.2 -> capped at 1
        assert mh_acceptance(0, theta, 0, 1) == 1.0

    def test_zero_denominator_policies(self):
        theta = np.full((5, 5), 0.25)
        theta[1, 0] = 0.0
        theta[0, 0] = 0.5
        assert mh_acceptance(0, theta, 0, 1) == 1.0  # x / 0 -> 1
        theta[0, 0] = 0.0
        assert mh_acceptance(0, theta, 0, 1) == 1.0  # 0 / 0 -> 1

    def test_index_validation(self):
        theta = np.full((5, 5), 0.2)
        with pytest.raises(ValueError):
            mh_acceptance(5, theta, 0, 0)
        with pytest.raises(ValueError):
            mh_acceptance(0, theta, 7, 0)

    @given(
        st.floats(min_value=1e-6, max_value=1.0),
        st.floats(min_value=1e-6, max_value=1.0),
        st.floats(min_value=1e-3, max_value=1e3),
    )
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance(self, num, den, scale):
        theta = np.full((5, 5), 0.1)
        theta[0, 0] = num
        theta[1, 0] = den
        r1 = mh_acceptance(0, theta, 0, 1)
        theta2 = theta.copy()
        theta2[0, 0] = num * scale
        theta2[1, 0] = den * scale
        r2 = mh_acceptance(0, theta2, 0, 1)
        assert r1 == pytest.approx(r2, rel=1e-9)


class TestModelAcceptance:
    def test_constant(self):
        assert model_acceptance(Constant(0.7), 0.3, 0.9, 0.1) == 0.7

    def test_mh_passthrough(self):
        assert model_acceptance(MH(), 0.42, 0.9, 0.1) == 0.42

    def test_numerator(self):
        assert model_acceptance(Numerator(), 0.42, 0.9, 0.1) == 0.9

    def test_subtraction(self):
        assert model_acceptance(Subtraction(), 0.0, 0.8, 0.2) == pytest.approx(0.8)

    def test_subtraction_fixed_point(self):
        assert model_acceptance(Subtraction(), 0.5, 0.33, 0.33) == pytest.approx(0.5)

    def test_binary_thresholds(self):
        assert model_acceptance(Binary(), 0.5, 0, 0) == 0.1
        assert model_acceptance(Binary(), 0.51, 0, 0) == 0.9
        assert model_acceptance(Binary(), 0.0, 0, 0) == 0.1
        assert model_acceptance(Binary(), 1.0, 0, 0) == 0.9

    def test_affine(self):
        assert model_acceptance(AffineMH(0.5, 0.25), 0.5, 0, 0) == pytest.approx(0.5)

    def test_affine_validation(self):
        with pytest.raises(ValueError):
            AffineMH(0.9, 0.5)
        with pytest.raises(ValueError):
            AffineMH(0.5, -0.1)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            model_acceptance(MH(), 1.5, 0.5, 0.5)

    @given(
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=0, max_value=1),
    )
    @settings(max_examples=100, deadline=None)
    def test_all_models_in_unit_interval(self, r, num, den):
        for kind in (Constant(0.3), MH(), Numerator(), Subtraction(), Binary(), AffineMH(0.5, 0.25)):
            assert 0.0 <= model_acceptance(kind, r, num, den) <= 1.0


class TestSpeakerPropose:
    def test_one_hot_posterior(self):
        theta = np.zeros((5, 5))
        theta[3, 0] = 1.0  # only sign 3 explains category 0
        state = AgentState(theta, np.zeros((5, 3)), np.tile(np.eye(3), (5, 1, 1)),
                           np.zeros(1, int), np.zeros(1, int))
        pi = np.full(5, 0.2)
        for seed in range(10):
            assert speaker_propose(0, state, pi, seed=seed) == 3

    def test_uniform_frequencies(self):
        theta = np.full((5, 5), 0.2)
        state = AgentState(theta, np.zeros((5, 3)), np.tile(np.eye(3), (5, 1, 1)),
                           np.zeros(1, int), np.zeros(1, int))
        pi = np.full(5, 0.2)
        rng = np.random.default_rng(0)
        draws = np.array([speaker_propose(0, state, pi, seed=rng) for _ in range(5000)])
        freqs = np.bincount(draws, minlength=5) / 5000
        sigma = np.sqrt(0.2 * 0.8 / 5000)
        assert np.all(np.abs(freqs - 0.2) <= 3 * sigma)

    def test_deterministic(self):
        theta = np.random.default_rng(2).dirichlet(np.ones(5), size=5)
        state = AgentState(theta, np.zeros((5, 3)), np.tile(np.eye(3), (5, 1, 1)),
                           np.zeros(1, int), np.zeros(1, int))
        pi = np.full(5, 0.2)
        assert speaker_propose(1, state, pi, seed=11) == speaker_propose(1, state, pi, seed=11)


@pytest.fixture(scope="module")
def easy_game_setup():
    _, easy = builtin_dataset_specs()
    sset = sample_stimuli(easy, 15, seed=3, dataset_id="easy")
    hyper = default_hyperparams()
    agents = initial_agents(sset.observations(), hyper, seed=1)
    return sset, hyper, agents


class TestRunNamingGame:
    def test_constant_one_accepts_everything(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=1, datasets=("easy",), seed=0)
        history, _ = run_naming_game(agents, sset, config, Constant(1.0), seed=5, hyper=hyper)
        assert all(t.decision == 1 for t in history)

    def test_constant_zero_rejects_everything_and_signs_frozen(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=1, datasets=("easy",), seed=0)
        history, finals = run_naming_game(
            agents, sset, config, Constant(0.0), seed=5, hyper=hyper, refresh_every=None
        )
        assert all(t.decision == 0 for t in history)
        assert len(history) == 30
        # rejection never moves a sign, for either party
        assert np.array_equal(finals[0].signs, agents[0].signs)
        assert np.array_equal(finals[1].signs, agents[1].signs)

    def test_certain_acceptance_adopts_every_proposal(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=1, datasets=("easy",), seed=0)
        history, finals = run_naming_game(
            agents, sset, config, Constant(1.0), seed=5, hyper=hyper, refresh_every=None
        )
        last_proposal = {}
        for t in history:
            last_proposal[t.stimulus_index] = t.speaker_sign
        for stim, sign in last_proposal.items():
            assert finals[0].signs[stim] == sign
            assert finals[1].signs[stim] == sign

    def test_decision_counts_per_participant(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=3, datasets=("easy",), seed=0)
        history, _ = run_naming_game(agents, sset, config, MH(), seed=2, hyper=hyper)
        assert len(history) == 90
        for pid in ("A", "B"):
            assert sum(1 for t in history if t.listener_id == pid) == 45

    def test_role_alternation(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=2, datasets=("easy",), seed=0)
        history, _ = run_naming_game(agents, sset, config, MH(), seed=2, hyper=hyper)
        for prev, cur in zip(history, history[1:]):
            assert prev.speaker_id != cur.speaker_id

    def test_stimulus_coverage_per_round(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=3, datasets=("easy",), seed=0)
        history, _ = run_naming_game(agents, sset, config, MH(), seed=2, hyper=hyper)
        for round_i in (1, 2, 3):
            for speaker in ("A", "B"):
                named = [
                    t.stimulus_index
                    for t in history
                    if t.round == round_i and t.speaker_id == speaker
                ]
                assert sorted(named) == list(range(15))

    def test_pure_function_of_seed(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=1, datasets=("easy",), seed=0)
        h1, f1 = run_naming_game(agents, sset, config, MH(), seed=9, hyper=hyper)
        h2, f2 = run_naming_game(agents, sset, config, MH(), seed=9, hyper=hyper)
        assert h1 == h2
        assert np.allclose(f1[0].theta, f2[0].theta)

    def test_r_mh_in_range_and_recorded(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=1, datasets=("easy",), seed=0)
        history, _ = run_naming_game(agents, sset, config, MH(), seed=4, hyper=hyper)
        for t in history:
            assert 0.0 <= t.r_mh <= 1.0
            assert 0.0 <= t.numerator <= 1.0
            assert 0.0 <= t.denominator <= 1.0

    def test_stimulus_mismatch_rejected(self, easy_game_setup):
        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=10, rounds=1, datasets=("easy",), seed=0)
        with pytest.raises(ValueError):
            run_naming_game(agents, sset, config, MH(), seed=0, hyper=hyper)


class TestSignAgreement:
    def _state_with_signs(self, signs):
        n = len(signs)
        return AgentState(
            np.full((5, 5), 0.2),
            np.zeros((5, 3)),
            np.tile(np.eye(3), (5, 1, 1)),
            np.zeros(n, int),
            np.array(signs),
        )

    def test_identical(self):
        a = self._state_with_signs([1, 2, 3])
        b = self._state_with_signs([1, 2, 3])
        assert sign_agreement(a, b) == 1.0

    def test_disjoint(self):
        a = self._state_with_signs([1, 2, 3])
        b = self._state_with_signs([2, 3, 4])
        assert sign_agreement(a, b) == 0.0

    def test_partial(self):
        a = self._state_with_signs([1, 2, 3])
        b = self._state_with_signs([1, 2, 4])
        assert sign_agreement(a, b) == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        a = self._state_with_signs([1, 2, 3])
        b = self._state_with_signs([1, 2])
        with pytest.raises(ValueError):
            sign_agreement(a, b)


class TestScriptedParticipant:
    def test_affine_accept_all(self):
        source = scripted_participant(AffineMH(0.0, 1.0), seed=0)
        assert all(source.decide(r, r, r) == 1 for r in np.linspace(0, 1, 20))

    def test_fixed_script_in_order(self):
        script = [1, 0, 1, 1, 0] * 9  # 45 decisions
        source = scripted_participant(script)
        replayed = [source.decide(0.5, 0.5, 0.5) for _ in range(45)]
        assert replayed == script

    def test_script_exhaustion(self):
        source = ScriptedDecisions([1])
        source.decide(0.5, 0.5, 0.5)
        with pytest.raises(ScriptExhausted):
            source.decide(0.5, 0.5, 0.5)

    def test_affine_regression_slope(self):
        # empirical acceptance against r_mh recovers the affine slope
        a, b = 0.5105, 0.4842
        source = ModelDecisions(AffineMH(a, b), seed=12)
        rng = np.random.default_rng(0)
        r = rng.random(20000)
        z = np.array([source.decide(ri, ri, ri) for ri in r], dtype=float)
        slope = np.cov(r, z)[0, 1] / np.var(r)
        assert abs(slope - a) < 0.05

    def test_model_decisions_deterministic(self):
        s1 = ModelDecisions(Binary(), seed=4)
        s2 = ModelDecisions(Binary(), seed=4)
        r = np.random.default_rng(1).random(100)
        assert [s1.decide(x, x, x) for x in r] == [s2.decide(x, x, x) for x in r]


class TestHistoryExport:
    def test_jsonl_round_trip(self, tmp_path, easy_game_setup):
        from namegame.engine import read_history_jsonl, write_history_jsonl

        sset, hyper, agents = easy_game_setup
        config = GameConfig(stimuli_per_dataset=15, rounds=1, datasets=("easy",), seed=0)
        history, _ = run_naming_game(agents, sset, config, MH(), seed=3, hyper=hyper)
        path = tmp_path / "history.jsonl"
        write_history_jsonl(history, path)
        assert read_history_jsonl(path) == history
