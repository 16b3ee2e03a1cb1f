"""Leader-follower dynamics on the line: particles against the density solver.

Followers and leaders attract each other through Gaussian kernels and
switch labels at rates that grow with the local density of the other
group.  We run 1000 agents and the two-label density system from the same
initial law, then compare label masses and BL distances at a few times.

Run with ``python3 demos/leader_follower.py``; a plot of the label masses is
written to ``demos/out/leader_follower.svg``.
"""
from pathlib import Path

import numpy as np

from multipop import Grid1D, GriddedDensities, SimConfig, bl_distance, label_marginals, simulate, solve_pde
from multipop.config import init_from_config, load_config, model_from_config
from multipop.io import write_svg_plot
from multipop.pde import spatial_radius_bound

ROOT = Path(__file__).resolve().parents[1]
OUT = Path(__file__).resolve().parent / "out"

cfg = load_config(ROOT / "configs" / "b1.cfg")
model = model_from_config(cfg)
law = init_from_config(cfg, model)
T = 1.0

P0 = law.sample(1000, np.random.default_rng(0))
traj = simulate(model, P0, SimConfig(0.01, T, record_every=10))

half = 1.1 * spatial_radius_bound(model, law.support_radius, T)
grid = Grid1D.symmetric(half, 400)
rho0 = GriddedDensities.from_cell_masses(grid, law.cell_masses(grid.edges), 0.0, law.label_space)
snaps = solve_pde(model, rho0, T, 0.005, record_every=20)

print(" t     particle F  density F   BL(F)     BL(L)")
for P, rho in zip(traj.snapshots, snaps):
    d = [bl_distance(a, b) for a, b in zip(label_marginals(P), rho.marginals())]
    print(f"{rho.time:4.1f}   {P.labels[:, 0].mean():.4f}      {rho.species_mass[0]:.4f}     "
          f"{d[0]:.4f}    {d[1]:.4f}")

OUT.mkdir(exist_ok=True)
times = [rho.time for rho in snaps]
write_svg_plot(
    OUT / "leader_follower.svg",
    {
        "followers, particles": (traj.times, [P.labels[:, 0].mean() for P in traj.snapshots]),
        "followers, density": (times, [rho.species_mass[0] for rho in snaps]),
    },
    xlabel="t", ylabel="mass", title="follower mass",
)
