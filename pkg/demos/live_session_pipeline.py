"""Play a full two-participant session through the wire protocol, then replay
the event log and run the analysis on it end to end.

The participants here are model-driven (MH acceptance); a live deployment
swaps them for humans on the WebSocket endpoint without changing the log
format or the analysis.
"""

from pathlib import Path

import numpy as np

from namegame.analysis import fit_report_rows, infer_decisions
from namegame.engine import GameConfig, MH
from namegame.model import default_hyperparams
from namegame.session import ModelParticipant, play_session, replay_log, session_data, state_hash
from namegame.stimulus import dataset_specs, manifest_dict, sample_stimuli

out = Path(__file__).parent / "output"
out.mkdir(parents=True, exist_ok=True)
log_path = out / "live_session.jsonl"
log_path.unlink(missing_ok=True)

hyper = default_hyperparams()
manifests = {}
for i, name in enumerate(("hard", "easy")):
    spec = dataset_specs(name)
    sset = sample_stimuli(spec, 15, seed=40 + i, dataset_id=name)
    manifests[name] = manifest_dict(sset, spec)

config = GameConfig(stimuli_per_dataset=15, rounds=3, datasets=("hard", "easy"), seed=12)
seeds = np.random.SeedSequence(12).spawn(2)
players = [
    ModelParticipant("alice", MH(), hyper, seed=seeds[0]),
    ModelParticipant("bob", MH(), hyper, seed=seeds[1]),
]
state, trials = play_session(players, "demo-live", config, manifests, log_path=log_path)
print(f"session complete: {len(trials)} trials, log at {log_path}")
for pid in ("alice", "bob"):
    per = state.decision_counts[pid]
    print(f"  {pid}: decisions {dict(per)}")

result = replay_log(log_path)
assert state_hash(result.state) == state_hash(state)
print(f"replay verified: state hash {state_hash(state)[:16]}...")

inferred = infer_decisions(session_data(result), hyper)
print(f"inferred {len(inferred.records)} decision records ({inferred.skipped} skipped)\n")

print("per-participant affine fits with randomization p-values:")
for row in fit_report_rows(inferred.records, replicates=500, seed=5):
    print(
        f"  {row['participant']:>6s}: a={row['a']:+.3f} b={row['b']:.3f} "
        f"P'_a={row['p_a_display']:>8s} reject_a={row['reject_a']}"
    )
