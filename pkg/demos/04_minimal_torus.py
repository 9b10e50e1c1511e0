"""
The largest torus orbit
=======================

With positive Ricci curvature ``log Vol`` is strictly concave, so the
volume has exactly one critical orbit.  Damped Newton ascent finds it from
any starting point, and the volume dies off toward the boundary.
"""

import numpy as np

from tklab import Box, boundary_decay, find_critical_orbit, make_builtin_potential, moment_map

phi = make_builtin_potential("fubini_study", 2)
region = Box.cube(-3, 3, 0.25, 2)
rng = np.random.default_rng(4)

first = None
for seed in rng.uniform(-3, 3, (5, 2)):
    r = find_critical_orbit(phi, seed, region, certificate=first.certificate if first else None)
    first = first or r
    print(f"seed {np.round(seed, 3)} -> x* = {r.x}, Vol = {r.vol:.12f}, {r.iterations} steps")
print("certificate:", first.certificate, " unique:", first.unique)
print("pi^2 sqrt(16/27) =", np.pi**2 * np.sqrt(16 / 27))

# %%
# The moment map sends the orbit space onto the open triangle
print("\nmoment map at x*:", moment_map(phi, first.x))

# %%
# Decay toward the boundary
s = 1 / np.sqrt(2)
for d, T in (((1.0, 0.0), 20.0), ((s, s), 20.0), ((s, s), 40.0)):
    rep = boundary_decay(phi, d, (0.0, T, 0.25))
    print(f"direction {np.round(d, 3)} T={T:4.0f}: Vol(T d)/Vol(0) = {rep.ratio:.3e}")
