"""Compare five acceptance models by how well they predict recorded decisions.

Synthetic participants follow the MH rule; each comparison model then
simulates 100 pseudo-replicates of their decisions, and one-sided U-tests on
the per-replicate precision decide which model predicts behavior best. The MH
row should dominate.
"""

import numpy as np

from namegame.analysis import MODEL_ORDER, group_by_participant, pairwise_model_tests, records_from_trials
from namegame.engine import GameConfig, MH, initial_agents, run_naming_game
from namegame.model import default_hyperparams
from namegame.stimulus import builtin_dataset_specs, sample_stimuli

hyper = default_hyperparams()
specs = dict(zip(("hard", "easy"), builtin_dataset_specs()))

records = []
for pair in range(10):
    for di, name in enumerate(("hard", "easy")):
        rng = np.random.default_rng(np.random.SeedSequence([7, pair, di]))
        sset = sample_stimuli(specs[name], 15, seed=rng.integers(2**31), dataset_id=name)
        agents = initial_agents(sset.observations(), hyper, seed=rng.integers(2**31))
        config = GameConfig(stimuli_per_dataset=15, rounds=3, datasets=(name,), seed=0)
        history, _ = run_naming_game(
            agents, sset, config, MH(), seed=rng.integers(2**31), hyper=hyper,
            agent_ids=(f"p{2 * pair}", f"p{2 * pair + 1}"),
        )
        records.extend(records_from_trials(history))

report = pairwise_model_tests(group_by_participant(records), seed=3)

print("mean precision per model (pooled over participants):")
for m in MODEL_ORDER:
    pooled = np.concatenate(list(report.precision_samples[m].values()))
    print(f"  {m:12s} {pooled.mean():.3f}")

print("\none-sided U-test p-values, row model beats column model:")
header = "            " + "  ".join(f"{m:>11s}" for m in MODEL_ORDER)
print(header)
for i, m in enumerate(MODEL_ORDER):
    cells = []
    for j in range(len(MODEL_ORDER)):
        if i == j:
            cells.append(f"{'---':>11s}")
        else:
            p = report.pooled_p[i, j]
            cells.append(f"{'<0.001' if p < 0.001 else format(p, '.3f'):>11s}")
    print(f"{m:12s}" + "  ".join(cells))
