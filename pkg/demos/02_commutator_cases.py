"""The nested commutator [U1, [b, U2]] split case by case.

Each case reassembles the commutator exactly from paraproduct brackets,
E-terms (shift/shift), tails (pi/pi) and boundary pieces.  The printed
"details" are side identities that must vanish.
"""
import numpy as np

from bloomlab.commutators import verify_decomposition
from bloomlab.model import random_paraproduct, random_shift

rng = np.random.default_rng(2)
L = 4
b, f = rng.standard_normal((2, 2**L, 2**L))
inputs = {
    "shift_shift": (random_shift(L, 1, 1, 2, seed=rng), random_shift(L, 2, 2, 0, seed=rng)),
    "pi_pi": (random_paraproduct(L, 1, "direct", rng), random_paraproduct(L, 2, "direct", rng)),
    "mixed_shift_pi": (random_shift(L, 1, 0, 1, seed=rng), random_paraproduct(L, 2, "direct", rng)),
    "pi_pi_dual": (random_paraproduct(L, 1, "dual", rng), random_paraproduct(L, 2, "direct", rng)),
}
for case, (U1, U2) in inputs.items():
    rep = verify_decomposition(case, b, U1, U2, f)
    print(f"{case}: residual {rep.residual_sup:.1e}, sup of commutator {np.abs(rep.direct).max():.3f}")
    big = sorted(rep.summary()["parts"].items(), key=lambda kv: -kv[1])[:4]
    print("   largest parts:", ", ".join(f"{k} {v:.3f}" for k, v in big))
    vanishing = [k for k in rep.details if "pair_" not in k]
    if vanishing:
        worst = max(np.abs(rep.details[k]).max() for k in vanishing)
        print(f"   {len(vanishing)} side identities, worst {worst:.1e}")
