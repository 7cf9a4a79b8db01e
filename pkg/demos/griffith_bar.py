"""
Crack selection in a stretched bar
==================================

A short bar is clamped at both ends and stretched by ``lam``. Cutting the
mid-plane releases the stored bulk energy at the price of the crack energy
(area plus boundary length). Below a threshold stretch the uncracked state
wins; above it the minimizer selects the full mid-plane.
"""

import numpy as np
from scipy.optimize import brentq

from gpcrack.energy_density import DensitySpec, EnergyParams, stress_free_s
from gpcrack.fixtures import stretched_bar
from gpcrack.minimizer import MinimizerConfig, minimize_total
from gpcrack.varifold import crack_energy, from_mesh_faces

# choose s so that the identity is stress free
s_star = stress_free_s(1.0, 3.0, 2.0, 2.0)
params = EnergyParams(s=s_star)
spec = DensitySpec.from_params(params)

###############################################################################
# One-dimensional prediction: the bulk energy stored by a homogeneous stretch
# equals the energy of the two-triangle mid-plane crack.

mesh = stretched_bar(1.0)
vol = mesh.volumes.sum()
e_crack = crack_energy(from_mesh_faces(mesh, range(len(mesh.cfaces))), params).total


def W(lam):
    return (lam**2 + 2) ** 1.5 + (1 + 2 * lam**2) + lam**2 + lam**-s_star


lam_star = brentq(lambda l: vol * (W(l) - W(1.0)) - e_crack, 1.0 + 1e-9, 3.0)
print(f"volume {vol:.3f}, crack energy {e_crack:.3f}, predicted threshold {lam_star:.4f}")

###############################################################################
# Sweep the stretch and record what the minimizer picks.

cfg = MinimizerConfig(max_candidates=16)
for lam in np.linspace(1.2, 1.8, 7):
    rep = minimize_total(stretched_bar(lam), spec, params, cfg)
    sel = rep.selected_record
    uncracked = rep.candidates[0].total
    print(f"lam={lam:.2f}  selected={sel.face_set_id:>4}  total={sel.total:8.3f}  uncracked={uncracked:8.3f}")
