"""
Second-order jets and the reverse tape
======================================

Every quantity in the solver is a jet: a value plus its first and second
partial derivatives in x and t.  Arithmetic on jets propagates all six fields
at once, and inside a ``Tape`` each operation is also recorded so gradients
with respect to parameters can be pulled back through the derivative fields.
"""

import numpy as np

from genpde import autodiff as ad
from genpde.autodiff import ParamVector, jet_seed

# seed x and t: dx/dx = 1 and dt/dt = 1, everything else zero
x, t = jet_seed(np.array([0.5, 1.0, 1.5]), np.array([0.0, 0.5, 1.0]))

# the heat closed form, built from primitives
k = np.pi / 2
u = ad.exp(-k * k * t) * ad.sin(k * x)
print("u      ", u.v)
print("u_t    ", u.dt)
print("u_xx   ", u.dxx)
print("residual u_t - u_xx:", np.max(np.abs(u.dt - u.dxx)))

# a tracking mask skips fields nobody reads; a heat residual needs only dt and dxx
with ad.tracking("dt", "dxx"):
    x2, t2 = jet_seed(np.linspace(0, 2, 5), np.linspace(0, 2, 5))
    w = ad.tanh(ad.sin(3 * x2) * ad.exp(-t2))
print("fields kept under the mask:", [f for f in ad.DERIV_FIELDS if getattr(w, f) is not None])

# parameters: a ParamVector flattens named arrays; lift() puts them on the active tape
params = ParamVector.from_arrays({"a": np.array(1.3), "omega": np.array(0.8)})


def loss(p):
    q = p.lift()
    xs, ts = jet_seed(np.linspace(0.1, 1.9, 7), np.linspace(0.1, 1.9, 7))
    v = q["a"] * ad.exp(-q["omega"] * q["omega"] * ts) * ad.sin(q["omega"] * xs)
    residual = ad.take_field(v, "dt") - ad.take_field(v, "dxx")
    return ad.jmean(ad.square(residual)) + ad.jmean(ad.square(ad.take_field(v, "v") - 1.0))


value, grad = ad.value_and_grad(loss, params)
print("loss", value, "grad", grad)
print("gradient vs central differences:", ad.check_gradient(loss, params))
