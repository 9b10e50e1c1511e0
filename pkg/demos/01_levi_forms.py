"""
Levi forms in log coordinates
=============================

A function on the punctured plane is written in ``w = x + iy`` with
``z = e^w``.  Its Levi form is a 2n x 2n symmetric matrix; positive
semi-definite everywhere means plurisubharmonic (PSH).
"""

import numpy as np

from tklab import field_catalog, is_psh, levi_form, make_periodic_field, Box

# |z|^2 becomes e^{2x}; the Levi form is a multiple of the identity
f = make_periodic_field({"kind": "laurent_abs2", "coeffs": [1.0], "exponents": [[1]]})
L = levi_form(f, [0.5], [1.0])
print("Levi form of |z|^2 at x=0.5:\n", L.matrix)
print("trace =", L.trace, " (equals the Laplacian, 4 e^{2x} =", 4 * np.exp(1.0), ")")

# Re z^2 is pluriharmonic: its Levi form vanishes
g = make_periodic_field({"kind": "laurent_re", "coeffs": [1.0], "exponents": [[2]]})
print("\nLevi form of Re z^2:\n", levi_form(g, [0.3], [0.7]).matrix)

# adding it to f changes nothing
print("difference after adding Re z^2:",
      np.abs(levi_form(f + g, [0.3], [0.7]).matrix - levi_form(f, [0.3], [0.7]).matrix).max())

# %%
# Sweep the two-variable test catalog; the last two are non-PSH controls.
box = Box.cube(-2, 2, 0.5, 2)
for e in field_catalog(2):
    rep = is_psh(e.field, box)
    print(f"{e.name:28s} psh={rep.holds!s:5s} min eigenvalue {rep.min_eigenvalue: .3e}")
