"""Attacks on a model small enough to check by hand.

A two-class linear softmax model on a single input feature:

    z0 = 2x,  z1 = -2x + 0.5

At x = 0.5 the logit margin is z0 - z1 = 1.5 and the margin moves by 4 per
unit of x, so any L-infinity step larger than 1.5 / 4 = 0.375 flips the
prediction. We watch FGSM cross that line, let minimal-epsilon FGSM find it,
and compare DeepFool's step with the analytic distance to the boundary.
"""

import numpy as np

from advforensics.attacks import AttackConfig, deepfool_l2, fgsm, pgd
from advforensics.nn import Layer, NeuralModel, Sample, forward

model = NeuralModel("toy", [Layer(np.array([[2.0], [-2.0]]), np.array([0.0, 0.5]), "none")])
s = Sample(np.array([0.5]), label=0)
print("clean probabilities:", forward(model, s.x0).round(4))

print("\nFGSM over epsilon (flip expected above 0.375):")
for eps in (0.1, 0.3, 0.37, 0.38, 0.45):
    res = fgsm(model, s, AttackConfig("FGSM", eps))
    print(f"  eps={eps:<5} x_adv={res.x_adv[0]:.3f}  success={res.success}")

res = fgsm(model, s, AttackConfig("FGSM", 0.45, minimal=True))
print(f"\nminimal FGSM: smallest flipping step ~ {0.5 - res.x_adv[0]:.4f}")

res = pgd(model, s, AttackConfig("LinfPGD", 0.45, steps=10))
print(f"LinfPGD (eps 0.45, 10 steps): x_adv={res.x_adv[0]:.4f}, success={res.success}")

res = deepfool_l2(model, s, AttackConfig.default("L2DeepFool"))
print(f"DeepFool: |delta| = {abs(res.x_adv[0] - 0.5):.4f}, "
      f"analytic 1.02 * 0.375 = {1.02 * 0.375:.4f}, iterations={res.iterations_used}")
