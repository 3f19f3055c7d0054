"""
Burgers' equation: two independent reference solutions
=======================================================

u_t + u u_x = (0.01/pi) u_xx with u(x,0) = -sin(pi x) steepens into a thin
layer at x = 0.  The Cole-Hopf transform turns it into a heat equation whose
solution is a Gaussian integral, evaluated here by Gauss-Hermite quadrature.
A finite-difference solve (Crank-Nicolson diffusion, SSP-RK3 convection) gives
an independent check; resolving the layer takes a fine grid.
"""

import time

import numpy as np

from genpde import burgers_problem
from genpde.pde import cole_hopf_reference, fd_reference

problem = burgers_problem()

# the layer: slope at x = 0 grows with t
for t in (0.25, 0.5, 0.75, 1.0):
    h = 1e-4
    slope = (cole_hopf_reference(h, t) - cole_hopf_reference(-h, t)) / (2 * h)
    print(f"t = {t:4.2f}   u_x(0, t) = {slope:10.2f}")

# odd symmetry and the boundary values hold to quadrature accuracy
x = np.linspace(0, 1, 11)
print("max |u(x) + u(-x)| at t = 0.5:", np.max(np.abs(cole_hopf_reference(x, 0.5) + cole_hopf_reference(-x, 0.5))))

# grid refinement of the finite-difference oracle against Cole-Hopf
print("\n   grid        t=0.25      t=0.5     seconds")
for n in (401, 1001, 2001, 4001):
    start = time.perf_counter()
    g = fd_reference(problem, n, n)
    errs = []
    for t in (0.25, 0.5):
        j = int(np.argmin(np.abs(g.t - t)))
        ref = cole_hopf_reference(g.x[1:-1], np.full(n - 2, g.t[j]))
        errs.append(np.max(np.abs(g.u[1:-1, j] - ref)))
    print(f"{n:5d}x{n:<5d} {errs[0]:10.2e} {errs[1]:10.2e} {time.perf_counter() - start:9.1f}")
