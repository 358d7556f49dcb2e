"""Watch two agents converge on a shared vocabulary under MH acceptance.

Two independently initialized agents play the naming game over each built-in
dataset; sign agreement (the fraction of stimuli they currently call by the
same name) is tracked per round. The easy mixture's well-separated colors give
cleaner categories and usually faster convergence than the hard one.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from namegame.engine import GameConfig, MH, initial_agents, run_naming_game, sign_agreement
from namegame.model import default_hyperparams
from namegame.stimulus import builtin_dataset_specs, sample_stimuli

hyper = default_hyperparams()
hard, easy = builtin_dataset_specs()
rounds = 30

curves = {}
for label, spec in (("easy dataset", easy), ("hard dataset", hard)):
    sset = sample_stimuli(spec, 15, seed=3, dataset_id=label.split()[0])
    agents = initial_agents(sset.observations(), hyper, seed=1)
    agreement = [sign_agreement(*agents)]
    for round_i in range(rounds):
        config = GameConfig(stimuli_per_dataset=15, rounds=1, datasets=(sset.id,), seed=round_i)
        _, agents = run_naming_game(agents, sset, config, MH(), seed=round_i, hyper=hyper)
        agreement.append(sign_agreement(*agents))
    curves[label] = agreement
    print(f"{label}: start {agreement[0]:.2f} -> final {agreement[-1]:.2f}")

fig, ax = plt.subplots(figsize=(7, 4))
for label, curve in curves.items():
    ax.plot(range(len(curve)), curve, marker="o", markersize=3, label=label)
ax.set_xlabel("round")
ax.set_ylabel("sign agreement")
ax.set_ylim(0, 1.05)
ax.legend()
ax.grid(alpha=0.3)
out = Path(__file__).parent / "output"
out.mkdir(parents=True, exist_ok=True)
fig.savefig(out / "convergence.png", dpi=120, bbox_inches="tight")
print(f"plot saved to {out / 'convergence.png'}")
