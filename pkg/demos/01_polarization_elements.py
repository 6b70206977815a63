"""Mueller matrices of the optical elements and what they do to light.

Every element is a 4x4 real matrix acting on Stokes vectors
(I, Q, U, V). This script walks the building blocks: polarizers,
wave plates, rotation, composition, and the passivity check.
"""

import numpy as np

from pltt.polarization import (
    apply_mueller,
    compose,
    degree_of_polarization,
    ideal_mirror,
    is_passive,
    linear_polarizer,
    quarter_wave_plate,
    retarder,
    reverse_pass,
    rotation_mueller,
)

np.set_printoptions(precision=3, suppress=True)

# -- a horizontal polarizer on unpolarized light ----------------------------
unpolarized = np.array([1.0, 0.0, 0.0, 0.0])
lp0 = linear_polarizer(0.0)
out = apply_mueller(lp0, unpolarized)
print("LP(0):")
print(lp0)
print("unpolarized -> %s  (half the power, fully polarized: DoP=%.3f)"
      % (out, degree_of_polarization(out)))

# -- Malus's law falls out of two polarizers --------------------------------
print("\nMalus sweep, LP(theta) after LP(0):")
for deg in (0, 30, 45, 60, 90):
    theta = np.radians(deg)
    chain = compose([linear_polarizer(0.0), linear_polarizer(theta)])
    power = apply_mueller(chain, unpolarized)[0]
    print("  theta=%3d deg   power %.4f   cos^2 %.4f" % (deg, power, 0.5 * np.cos(theta) ** 2))

# -- quarter-wave plate at 45 degrees makes circular light ------------------
horizontal = apply_mueller(lp0, unpolarized)
circular = apply_mueller(quarter_wave_plate(np.pi / 4), horizontal)
print("\nQWP(45 deg) on horizontal light: %s  (all power in V)" % circular)

# -- a retarder is the same plate with a free retardance --------------------
print("\nretarder(0, pi/2) == QWP(0): %s"
      % np.allclose(retarder(0.0, np.pi / 2), quarter_wave_plate(0.0)))

# -- rotation conjugation: element at angle theta ---------------------------
theta = 0.7
conjugated = rotation_mueller(theta) @ linear_polarizer(0.0) @ rotation_mueller(-theta)
print("R(t) LP(0) R(-t) == LP(t): %s" % np.allclose(conjugated, linear_polarizer(theta)))

# -- folded paths are not plain products ------------------------------------
# A QWP traversed forward then backward off a mirror extinguishes the
# return beam through the entry polarizer. The plain left-to-right
# product misses this; the fold needs the reverse-traversal matrix.
qwp45 = quarter_wave_plate(np.pi / 4)
folded = compose([lp0, qwp45, ideal_mirror(), reverse_pass(qwp45), reverse_pass(lp0)])
naive = compose([lp0, qwp45, ideal_mirror(), qwp45, lp0])
power_folded = apply_mueller(folded, unpolarized)[0]
power_naive = apply_mueller(naive, unpolarized)[0]
print("\noptical-isolator fold: returned power %.2e (plain product says %.2f)"
      % (power_folded, power_naive))

# -- passivity --------------------------------------------------------------
print("\nis_passive(LP(0)) = %s, is_passive(2 * mirror) = %s"
      % (is_passive(lp0), is_passive(2.0 * ideal_mirror())))
