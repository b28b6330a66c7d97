"""Per-step decision accuracy against the closed-form detection probability.

Run: python3 demos/detection_curve.py
"""
import numpy as np

from uikf import harness as hs
from uikf.amm_kf import detection_probability

separation = 2.0
print(" sigma    P_D   measured (1e4 steps)")
for i, sigma in enumerate(np.linspace(0.5, 3.0, 11)):
    acc, _ = hs.decision_trial(separation, sigma, 10_000, seed=i)
    print(f"{sigma:6.2f} {detection_probability(0.0, separation, sigma, sigma):6.3f} {acc:8.3f}")
print("\nP_D never falls below 0.5: with equal variances the likelihood test still beats a coin flip")
