"""
Ricci curvature and orbit volumes
=================================

An invariant Kahler potential ``phi(x)`` gives the metric ``h = Hess phi / 4``.
The torus over ``x`` has volume ``pi^n sqrt(det Hess phi)``, and the sign of
the Ricci form decides whether ``log Vol`` is convex, concave or linear.
"""

import numpy as np

from tklab import Box, catalog, classify_ricci, consistency_theorem, direct_sum, j_volume
from tklab import make_builtin_potential, ricci_form

fs = make_builtin_potential("fubini_study", 1)
x = np.linspace(-3, 3, 7)[:, None]
print(" x   Vol           pi sech x")
for xi, v in zip(x[:, 0], j_volume(fs, x)):
    print(f"{xi:4.1f} {v:.12f} {np.pi / np.cosh(xi):.12f}")

# the sphere is Einstein: R = 2h
R = ricci_form(fs, x).R[:, 0, 0]
h = 0.25 * fs.hessian(x)[:, 0, 0]
print("\nmax |R - 2h| =", np.abs(R - 2 * h).max())

# %%
# Ricci sign against the shape of log Vol, over the one-variable catalog
box = Box.cube(-3, 3, 0.05, 1)
for e in catalog(1):
    rep = consistency_theorem(e.potential, box)
    print(f"{e.name:14s} Ricci {rep.ricci_tag:9s} log Vol {rep.logvol_tag:17s} ok={rep.passed}")

# a product of the sphere with a negatively curved factor has both signs
mixed = direct_sum(fs, make_builtin_potential("cosh_neg", 1))
print("\nproduct:", classify_ricci(mixed, Box.cube(-2, 2, 0.25, 2)).tag)
