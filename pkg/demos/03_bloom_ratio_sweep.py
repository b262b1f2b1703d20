"""How the Bloom ratio ||[U1,[b,U2]]|| / ||b||_BMO_prod(nu) moves with shift complexity.

Only trends are reported; no bound is asserted.  Norms are certified at p = 2.
"""
import numpy as np

from bloomlab.experiments import ExperimentConfig, bloom_ratio

base = {"experiment": {"depth": 4, "p": 2.0, "trials": 20, "seed": 3}}
print("complexity  sup ratio  mean ratio")
for k in (0, 1, 2):
    shift = {"kind": "shift", "complexity": [k, k]}
    cfg = ExperimentConfig.from_dict({**base, "operators": {"U1": shift, "U2": shift}})
    rep = bloom_ratio(cfg)
    print(f"  ({k},{k})     {rep['sup_ratio']:9.3f}  {rep['mean_ratio']:9.3f}")

# contrast: b drawn cell by cell instead of from a doubly cancellative spectrum
rep = bloom_ratio(ExperimentConfig.from_dict({**base, "b": {"kind": "little"}}))
r = rep["rows"][0]
print(f"\nb with little-bmo profile: BMO_prod {r['b_bmoprod']:.3f}, bmo {r['b_bmolittle']:.3f}")
print("by A_p bin:")
for key, e in rep["tables"]["by_ap"].items():
    print(f"   {key:28s} n={e['n']:3d} sup={e['sup_ratio']:.3f}")
