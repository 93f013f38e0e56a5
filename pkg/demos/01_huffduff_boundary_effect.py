"""How a sparse accelerator's compressed writes give away filter sizes.

A single non-zero input value, convolved with a filter of half-width k,
touches 2k+1 outputs in the interior of the feature map but fewer near the
edge. With output compression on, fewer non-zeros mean a shorter write, so an
attacker sliding the impulse from the edge sees the write size climb for k+1
positions and then flatten. The position of that knee is the filter size.

Run: python3 demos/01_huffduff_boundary_effect.py
"""
import numpy as np

from sparselock import attacks, convnet, experiments

print("Touched outputs per impulse position, n = 12:")
for k in (1, 2, 3):
    print(f"  filter {2 * k + 1}: {convnet.boundary_counts(12, k).tolist()}")

rng = np.random.default_rng(7)
print("\nThe attacker only sees ofmap write sizes on the bus (32 channels, 30% pruned weights):")
for f in experiments.FILTER_SIZES:
    spec, w = experiments.probe_layer(f, rng, sparsity=0.3)
    curve = attacks.huffduff_probe(spec, w, mode="compress", config=experiments.probe_config("compress"))
    guess = attacks.knee_detect(curve)
    print(f"  true filter {f}: first write sizes {list(curve.values[:5])} ... -> knee says {guess}")

trials = experiments.huffduff_ensemble(30, "compress")
hits = sum(t["estimate"] == t["true"] for t in trials)
print(f"\nOver 30 random victims with up to 60% weight sparsity the attack is right {hits}/30 times.")
