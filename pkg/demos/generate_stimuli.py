"""Generate the two built-in color stimulus datasets and render them to PNGs.

Each dataset draws 15 color patches from a three-component Gaussian mixture in
CIE-L*u*v*: the 'hard' mixture has closely spaced chroma means, the 'easy' one
widely spaced means. Output lands in demos/output/stimuli/.
"""

from pathlib import Path

import numpy as np

from namegame.stimulus import (
    builtin_dataset_specs,
    sample_stimuli,
    write_manifest,
    write_patch_images,
)

out_dir = Path(__file__).parent / "output" / "stimuli"
out_dir.mkdir(parents=True, exist_ok=True)

hard, easy = builtin_dataset_specs()
for name, spec in (("hard", hard), ("easy", easy)):
    sset = sample_stimuli(spec, 15, seed=7, dataset_id=name)
    write_manifest(sset, spec, out_dir / f"{name}_manifest.json")
    paths = write_patch_images(sset, out_dir, size_px=128)
    obs = sset.observations()
    comp = sset.component_indices()
    print(f"{name}: {len(paths)} patches")
    for k, c in enumerate(spec, start=1):
        n_k = int(np.sum(comp == k))
        print(f"  component {k}: mean {c.mean}, drew {n_k} stimuli")
    print(f"  L* range: [{obs[:, 0].min():.1f}, {obs[:, 0].max():.1f}]")

print(f"\nwrote manifests and patches to {out_dir}")
