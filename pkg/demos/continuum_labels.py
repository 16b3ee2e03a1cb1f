"""Continuous labels on [0, 1] by midpoint quadrature.

Agents with low label values switch toward labels that are common in the
population and everyone is attracted to agents with high labels.  Halving
the quadrature step and merging adjacent nodes back shows the label
discretization converging.
"""
import numpy as np

from multipop import EmpiricalMeasure, GameKernelSpec, GameModel, SimConfig, coarsen, simulate
from multipop.continuum import J_separable, V_separable, exponential_label_cells

J = J_separable(1.0, (1.0, -1.0), (0.0, 1.0))
V = V_separable(1.0, (0.5, 0.5), (0.0, 1.0))
x = np.linspace(-1, 1, 101)[:, None]

finals = {}
for H in (8, 16, 32):
    spec = GameKernelSpec(J, V, H)
    P = EmpiricalMeasure(x, exponential_label_cells(x, H, 0.0, 1.5), spec.labels)
    finals[H] = simulate(GameModel(spec), P, SimConfig(0.01, 1.0)).final
    mean_u = float(np.mean(finals[H].labels @ spec.nodes))
    print(f"H = {H:2d}: mean label at T = 1 is {mean_u:.6f}")

for H in (8, 16):
    gap = np.abs(coarsen(finals[2 * H].labels) - finals[H].labels).max()
    print(f"max label-mass change from H = {H} to {2 * H}: {gap:.3e}")
