"""The same probes against binned, sealed traffic.

Under SparseLock, compressed tiles are sealed and packed into fixed 60 kB
bins. The bus only ever carries whole bins, reads come in rounds of three
(padded with fake reads), and the number of rounds is fixed by the worst-case
compressed size. Every impulse position therefore produces the same trace.

Run: python3 demos/02_sparselock_defense.py
"""
import numpy as np

from sparselock import attacks, convnet, experiments, memsim
from sparselock.errors import EstimationFailure

rng = np.random.default_rng(7)
spec, w = experiments.probe_layer(5, rng, sparsity=0.3)
cfg = experiments.probe_config("sparselock")

traces = attacks.probe_traces(spec, w, range(32), "sparselock", cfg)
print("Attacker view of the probe at position 0:")
for ev in traces[0].attacker_view():
    print("  ", ev)
print("Oracle view marks which of those were fakes:", [e.fake for e in traces[0].events])
same = all(t.attacker_view() == traces[0].attacker_view() for t in traces)
print(f"\nAll 32 probe traces identical: {same}")

try:
    attacks.huffduff_attack(spec, w, "sparselock", cfg)
except EstimationFailure as exc:
    print(f"Knee detection on the protected curve: {exc}")

wl = memsim.Workload(convnet.make_impulse(spec.in_shape, (0, 9)), [memsim.Layer(spec, w)])
run = memsim.run_sparselock(wl, cfg)
print(f"\nThe protected run still computes the right answer: "
      f"{np.array_equal(run.outputs[0], wl.forward()[1])}; MACs verify: {run.integrity[0].verify()}")

flagged = sum(experiments.integrity_trial("tamper", s) for s in range(20))
print(f"Flipping one sealed byte is caught in {flagged}/20 trials; "
      f"replaying an old bin in {sum(experiments.integrity_trial('replay', s) for s in range(20))}/20.")
