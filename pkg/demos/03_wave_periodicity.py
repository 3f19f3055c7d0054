"""
Wave equation: periodic extension along the characteristics
============================================================

u_tt = u_xx on [0,2] x [0,2] with a triangular initial profile, zero initial
velocity and fixed ends.  The exact solution is 4-periodic in t and, through
the odd extension, defined for every x.  Traveling sine bases
a_i sin(omega_i (x - t)) + b_i sin(omega_i (x + t)) + d_i can follow it beyond
the box; Gaussian traveling bases decay away from their centres.

Usage: python demos/03_wave_periodicity.py [iterations]   (default 3000)
"""

import sys

import numpy as np

from genpde import make_gen, make_pinn, wave_problem
from genpde.pde import wave_reference
from genpde.training import TrainConfig, extrapolation_report, train

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
problem = wave_problem()
config = TrainConfig(iterations=iters, seed=7)
box = problem.domain.as_tuple()

# the reference itself: periodic in t, odd about x = 0 and x = 2
xs = np.linspace(0, 4, 9)
print("u(x, 0)   ", np.round(wave_reference(xs, 0.0), 3))
print("u(x, 4)   ", np.round(wave_reference(xs, 4.0), 3))
print("u(x, 2)   ", np.round(wave_reference(xs, 2.0), 3))

models = {
    "SineTrav": make_gen("SineTraveling", 25, 0, box, seed=7),
    "GaussTrav": make_gen("GaussTraveling", 25, 0, box, seed=7),
    "PINN": make_pinn(seed=7),
}
for name in models:
    print(f"training {name} for {iters} iterations")
    models[name], rep = train(models[name], problem, config)
    print(f"  final loss {rep.loss[-1]:.3e}")

rep = extrapolation_report(models, problem)
print("\nrel_l2      fit        extrapolation (x or t beyond 2)")
for name, r in rep["regions"].items():
    print(f"{name:10s} {r['fit']['rel_l2']:.3e}  {r['extrapolation']['rel_l2']:.3e}")

for prof in rep["profiles"]:
    cells = "  ".join(f"{k} {prof['metrics'][k]['all']['rel_l2']:.3e}" for k in models)
    print(f"profile x = {prof['locus']}: {cells}")
