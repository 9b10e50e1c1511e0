"""
Averages and maxima over the torus
==================================

For a PSH function, averaging over the angles ``y`` leaves a convex
function of the log-radii ``x``.  The maximum over the angles is convex
too, and for functions that extend across ``z_i = 0`` both are
non-decreasing in each radius.
"""

import numpy as np

from tklab import Box, check_convexity, field_catalog, hadamard_max, make_periodic_field
from tklab import monotone_in_radius, torus_average

box = Box.cube(-3, 3, 0.25, 2)
pts = box.grid()

for e in field_catalog(2):
    F = torus_average(e.field, pts)
    M = hadamard_max(e.field, pts)
    print(f"{e.name:28s} average: {check_convexity(F, box).tag:17s} "
          f"maximum: {check_convexity(M, box).tag}")

# %%
# Monotonicity in r_1 for |1 + z_1 + z_2 + z_1 z_2|^2
poly = field_catalog(2)[1].field
rep = monotone_in_radius(poly, 0, x_range=(-10, 2, 0.5))
print("\nnon-decreasing in r_1:", rep.nondecreasing, " limit as r_1 -> 0:", rep.limit_value)

# Re(z_1^2 z_2) averages to zero: constant, and harmonic in z_1
re = field_catalog(2)[5].field
rep = monotone_in_radius(re, 0)
print("Re(z1^2 z2): constant", rep.constant, " harmonic in z_1", rep.separately_harmonic)

# %%
# Circle averages of |1 + z|^2 in closed form: 1 + e^{2x}
x = np.linspace(-2, 2, 5)[:, None]
f = make_periodic_field({"kind": "laurent_abs2", "coeffs": [1.0, 1.0], "exponents": [[0], [1]]})
print("\n", np.column_stack([x[:, 0], torus_average(f, x), 1 + np.exp(2 * x[:, 0])]))
