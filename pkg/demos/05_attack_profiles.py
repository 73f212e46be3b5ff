"""
Attack signals and their growth envelope
========================================

Attacks are piecewise: each segment is zero, constant, sinusoid, ramp,
quadratic, exponential or square wave on [t_start, t_end).  Admissible
attacks stay under gamma e^{kappa t}; anything super-exponential does not.
"""

import math

import numpy as np

from arcbf.attacks import check_envelope, eval_attack, profile_d1, profile_d2, robot_attack_suite
from arcbf.resilience import EnvelopeParams

d1, d2 = profile_d1(), profile_d2()
for t in (0.0, 5.0, 9.0, 12.0, 16.0, 20.0):
    print(f"t={t:5.1f}  d1={d1.scalar(t):8.4f}  d2={d2.scalar(t):8.4f}")

grid = np.linspace(0, 25, 25001)
print("d1 under 5 e^{0.2t}:", check_envelope(d1, EnvelopeParams(5.0, 0.2), grid))
print("d2 under 45:        ", check_envelope(d2, EnvelopeParams(45.0, 0.0), grid))
print("e^{t^2} under 45:   ", check_envelope(lambda t: math.exp(t * t), EnvelopeParams(45.0, 0.0), grid[:10001]))

# robot attacks act on the radial force only
for prof in robot_attack_suite():
    print(f"{prof.name:17s} d(10) = {eval_attack(prof, 10.0)}")
