"""
Discrete varifolds on triangulated surfaces
===========================================

Mass, boundary measure and the discrete curvature tensor on a few standard
surfaces, with the first-variation residual as a consistency check.
"""

import math

import numpy as np

from gpcrack.fixtures import flat_disc, icosphere, open_cylinder
from gpcrack.varifold import (PolyBumpTest, boundary_mass, curvature_norms, first_variation_residual,
                              from_triangles, mass)

###############################################################################
# Sphere: area converges to 4 pi, |A| to 2 / R, and the residual decays with
# refinement.

rng = np.random.default_rng(0)
tests = [PolyBumpTest.random(rng, np.array([0.3, 0.2, 0.1]), 1.5) for _ in range(4)]
for level in range(2, 6):
    V = from_triangles(*icosphere(level))
    A = np.average(curvature_norms(V), weights=V.vertex_areas())
    print(f"level {level}: {V.n_triangles:6d} tris  mass err {abs(mass(V) - 4 * math.pi):.2e}"
          f"  mean |A| {A:.4f}  residual {first_variation_residual(V, tests):.2e}")

###############################################################################
# Disc: flat, so A vanishes; the boundary measure recovers the perimeter.

D = from_triangles(*flat_disc(30))
print(f"disc: perimeter {boundary_mass(D):.5f} (2 pi = {2 * math.pi:.5f}), max |A| {curvature_norms(D).max():.1e}")

###############################################################################
# Cylinder of radius R: |A| = sqrt(2) / R away from the rims.

R = 0.8
C = from_triangles(*open_cylinder(48, 12, radius=R))
print(f"cylinder: median |A| {np.median(curvature_norms(C)):.4f}, sqrt(2)/R = {math.sqrt(2) / R:.4f}")
