"""How close protected bus contents are to random bytes.

Each probe is a random victim layer with a random impulse. We keep what the
bus carries for the ofmap writes: sealed bins under SparseLock, plain
compressed tiles without it, and same-length random bytes as a reference.
Fisher information of the word-popcount law, MI with the filter size, the
runs test and the Cramér-von Mises distance compare the three.

Run: python3 demos/04_leakage_metrics.py [n_probes]
"""
import sys

from sparselock import experiments, leakage

n = int(sys.argv[1]) if len(sys.argv) > 1 else 512
ens = experiments.leakage_ensemble(n, seed=0, workers=4)
reps = experiments.leakage_reports(ens)
print(leakage.reports_csv(reps))

fi_p, fi_r = ens["sparselock"].fi(), ens["random"].fi()
print(f"FI of sealed bins is within {abs(fi_p - fi_r) / fi_r:.2%} of random bytes "
      f"(plain compressed tiles: {ens['compress'].fi():.3f} vs {fi_r:.3f}).")

print("\nWrite sizes carry the HuffDuff signal; their FI per layer of a 4-layer ReLU stack:")
print("  compress   ", [round(v, 3) for v in experiments.depth_size_fi(128, n_layers=4)])
print("  sparselock ", [round(v, 3) for v in experiments.depth_size_fi(16, n_layers=4, mode="sparselock")])
