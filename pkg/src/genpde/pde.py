"""Benchmark problems (heat, wave, viscous Burgers) and their reference solutions."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import roots_hermite

from . import autodiff as ad
from .autodiff import Jet
from ._fastmath import sincos
from .errors import ConfigurationError, NumericalError

BURGERS_NU = 0.01 / np.pi


@dataclass(frozen=True)
class Box:
    x_lo: float
    x_hi: float
    t_lo: float
    t_hi: float

    def __post_init__(self):
        if not (self.x_hi > self.x_lo and self.t_hi > self.t_lo):
            raise ConfigurationError(f"empty domain box {self}")

    def as_tuple(self):
        return (self.x_lo, self.x_hi, self.t_lo, self.t_hi)

    def contains(self, x, t, tol=1e-12):
        return ((x >= self.x_lo - tol) & (x <= self.x_hi + tol)
                & (t >= self.t_lo - tol) & (t <= self.t_hi + tol))


@dataclass
class BoundaryCondition:
    x: float
    target: Callable[[np.ndarray], np.ndarray]  # b(t) on the locus x = const


@dataclass
class PdeProblem:
    name: str
    domain: Box
    residual_fn: Callable[[Jet], Jet] = field(repr=False)
    bc: list[BoundaryCondition] = field(repr=False)
    ic: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    reference: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    extrapolation_domain: Box
    profile_axis: str  # "x": profiles u(x0, t); "t": profiles u(x, t0)
    profile_loci: tuple[float, ...]
    reference_jet: Callable[[Jet, Jet], Jet] | None = field(default=None, repr=False)
    source: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    viscosity: float | None = None
    fields: tuple[str, ...] = ("dx", "dt", "dxx", "dxt", "dtt")  # jet fields the residual reads
    ic_velocity: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)  # u_t(x, 0)

    def residual(self, u: Jet, x=None, t=None) -> Jet:
        """PDE residual as a flat jet; the source hook is subtracted when set."""
        r = self.residual_fn(u)
        if self.source is not None:
            r = r - self.source(np.asarray(x), np.asarray(t))
        return r


def _heat_jet(x: Jet, t: Jet) -> Jet:
    k = (np.pi / 2) ** 2
    return ad.exp(-k * t) * ad.sin((np.pi / 2) * x)


def heat_reference(x, t):
    return np.exp(-(np.pi / 2) ** 2 * np.asarray(t)) * np.sin(np.pi / 2 * np.asarray(x))


def heat_problem() -> PdeProblem:
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    return PdeProblem(
        name="heat",
        domain=Box(0.0, 2.0, 0.0, 2.0),
        residual_fn=lambda u: ad.take_field(u, "dt") - ad.take_field(u, "dxx"),
        bc=[BoundaryCondition(0.0, zero), BoundaryCondition(2.0, zero)],
        ic=lambda x: np.sin(np.pi / 2 * np.asarray(x)),
        reference=heat_reference,
        extrapolation_domain=Box(0.0, 2.0, 0.0, 4.0),
        profile_axis="x",
        profile_loci=(0.5, 1.0),
        reference_jet=_heat_jet,
        fields=("dt", "dxx"),
    )


def wave_initial(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < 1.0, x / 2.0, 1.0 - x / 2.0)


def _wave_extension(s):
    """Odd, 4-periodic extension of the triangular initial profile."""
    r = np.mod(np.asarray(s, dtype=float) + 2.0, 4.0) - 2.0
    return np.sign(r) * wave_initial(np.abs(r))


def wave_reference(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (_wave_extension(x - t) + _wave_extension(x + t))


def wave_problem() -> PdeProblem:
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    return PdeProblem(
        name="wave",
        domain=Box(0.0, 2.0, 0.0, 2.0),
        residual_fn=lambda u: ad.take_field(u, "dtt") - ad.take_field(u, "dxx"),
        bc=[BoundaryCondition(0.0, zero), BoundaryCondition(2.0, zero)],
        ic=wave_initial,
        reference=wave_reference,
        extrapolation_domain=Box(0.0, 4.0, 0.0, 4.0),
        profile_axis="x",
        profile_loci=(0.5, 3.0),
        fields=("dtt", "dxx"),
        ic_velocity=zero,
    )


@functools.lru_cache(maxsize=16)
def _hermite(n: int):
    return roots_hermite(n)


def _cole_hopf_nodes(x, t, nu, n, chunk=1 << 14):
    z, w = _hermite(n)
    out = np.empty(x.shape)
    step = max(1, chunk // n)  # bound the (points, nodes) temporaries
    for s in range(0, x.size, step):
        c = 2.0 * np.sqrt(nu * t[s:s + step])[:, None]
        y = x[s:s + step, None] - c * z
        sin_y, cos_y = sincos(np.pi * y)
        expo = -cos_y / (2.0 * np.pi * nu)
        expo -= expo.max(axis=-1, keepdims=True)
        weight = w * np.exp(expo)
        out[s:s + step] = -(weight * sin_y).sum(axis=-1) / weight.sum(axis=-1)
    return out


def cole_hopf_reference(x, t, viscosity: float = BURGERS_NU, nodes: int = 128, tol: float = 1e-6,
                        max_nodes: int = 2048):
    """Viscous Burgers solution for u(x,0) = -sin(pi x) by Gauss-Hermite quadrature.

    The node count is doubled, point by point, until two successive counts agree within ``tol``.
    """
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    out = np.empty(x.shape)
    now = t <= 0.0
    out[now] = -np.sin(np.pi * x[now])
    later = ~now
    if not later.any():
        return out if out.ndim else float(out)
    xs, ts = x[later], t[later]
    # refine only the points whose last two node counts still disagree
    prev = _cole_hopf_nodes(xs, ts, viscosity, nodes)
    todo = np.arange(xs.size)
    n = nodes
    while todo.size:
        if 2 * n > max_nodes:
            raise NumericalError("Cole-Hopf quadrature did not settle", nodes=n, discrepancy=float(diff.max()),
                                 x=float(xs[todo[0]]), t=float(ts[todo[0]]))
        nxt = _cole_hopf_nodes(xs[todo], ts[todo], viscosity, 2 * n)
        diff = np.abs(nxt - prev[todo])
        prev[todo] = nxt
        keep = ~(diff <= tol)
        todo, diff = todo[keep], diff[keep]
        n *= 2
    if not np.all(np.isfinite(prev)):
        bad = np.flatnonzero(~np.isfinite(prev))[0]
        raise NumericalError("non-finite Cole-Hopf quadrature", x=float(xs[bad]), t=float(ts[bad]), nodes=n)
    out[later] = prev
    return out if out.ndim else float(out)


def burgers_problem(viscosity: float = BURGERS_NU) -> PdeProblem:
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731

    def residual(u: Jet) -> Jet:
        v = ad.take_field(u, "v")
        return ad.take_field(u, "dt") + v * ad.take_field(u, "dx") - viscosity * ad.take_field(u, "dxx")

    return PdeProblem(
        name="burgers",
        domain=Box(-1.0, 1.0, 0.0, 1.0),
        residual_fn=residual,
        bc=[BoundaryCondition(-1.0, zero), BoundaryCondition(1.0, zero)],
        ic=lambda x: -np.sin(np.pi * np.asarray(x, dtype=float)),
        reference=lambda x, t: cole_hopf_reference(x, t, viscosity),
        extrapolation_domain=Box(-1.0, 1.0, 0.0, 1.5),
        profile_axis="t",
        profile_loci=(0.25, 0.5, 0.75),
        viscosity=viscosity,
        fields=("dt", "dx", "dxx"),
    )


PROBLEMS = {"heat": heat_problem, "wave": wave_problem, "burgers": burgers_problem}


def get_problem(name: str) -> PdeProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown problem {name!r}; expected one of {sorted(PROBLEMS)}") from None


# --- grids ------------------------------------------------------------------------

@dataclass
class SolutionGrid:
    x: np.ndarray
    t: np.ndarray
    u: np.ndarray  # (nx, nt)
    reference: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if self.u.shape != (self.x.size, self.t.size):
            raise ValueError(f"grid values {self.u.shape} do not match axes ({self.x.size}, {self.t.size})")
        if self.reference is not None and self.reference.shape != self.u.shape:
            raise ValueError("reference shape differs from values")
        for axis in (self.x, self.t):
            if axis.size > 1 and np.any(np.diff(axis) <= 0):
                raise ValueError("grid axes must be strictly increasing")

    def mesh(self):
        return np.meshgrid(self.x, self.t, indexing="ij")


def uniform_axes(box: Box, nx: int, nt: int):
    if nx < 2 or nt < 2:
        raise ConfigurationError("grids need at least two points per axis")
    return np.linspace(box.x_lo, box.x_hi, nx), np.linspace(box.t_lo, box.t_hi, nt)


# --- finite-difference oracles -------------------------------------------------------

def _cn_matrices(n_inner: int, r: float):
    """Banded (I - r/2 L) and the explicit (I + r/2 L) action for the 1-D Laplacian."""
    ab = np.zeros((3, n_inner))
    ab[0, 1:] = -r / 2
    ab[1, :] = 1 + r
    ab[2, :-1] = -r / 2

    def explicit(u_full):
        return u_full[1:-1] + (r / 2) * (u_full[2:] - 2 * u_full[1:-1] + u_full[:-2])

    return ab, explicit


def _diffuse_cn(u, ab, explicit, r):
    rhs = explicit(u)
    # Dirichlet values enter through both the old and new boundary nodes
    rhs[0] += (r / 2) * u[0]
    rhs[-1] += (r / 2) * u[-1]
    out = u.copy()
    out[1:-1] = solve_banded((1, 1), ab, rhs)
    return out


def _fd_heat(problem, x, t):
    dx, dt = x[1] - x[0], t[1] - t[0]
    r = dt / dx ** 2
    ab, explicit = _cn_matrices(x.size - 2, r)
    u = np.empty((x.size, t.size))
    u[:, 0] = problem.ic(x)
    left, right = problem.bc[0].target, problem.bc[1].target
    for j in range(1, t.size):
        prev = u[:, j - 1].copy()
        rhs = explicit(prev)
        lo, hi = float(left(t[j])), float(right(t[j]))
        rhs[0] += (r / 2) * (prev[0] + lo)
        rhs[-1] += (r / 2) * (prev[-1] + hi)
        u[1:-1, j] = solve_banded((1, 1), ab, rhs)
        u[0, j], u[-1, j] = lo, hi
    return u


def _fd_wave(problem, x, t):
    dx, dt = x[1] - x[0], t[1] - t[0]
    c = dt / dx
    if c > 1.0 + 1e-12:
        need = int(np.ceil((t[-1] - t[0]) / dx)) + 1
        raise ConfigurationError(f"leapfrog CFL {c:.4g} > 1; need dt <= dx = {dx:.6g} (nt >= {need})")
    c2 = c * c
    u = np.zeros((x.size, t.size))
    u[:, 0] = problem.ic(x)
    # zero initial velocity: half-step Taylor start
    u[1:-1, 1] = u[1:-1, 0] + 0.5 * c2 * (u[2:, 0] - 2 * u[1:-1, 0] + u[:-2, 0])
    for j in range(1, t.size - 1):
        u[1:-1, j + 1] = (2 * u[1:-1, j] - u[1:-1, j - 1]
                          + c2 * (u[2:, j] - 2 * u[1:-1, j] + u[:-2, j]))
    return u


def _fd_burgers(problem, x, t):
    nu = problem.viscosity
    dx, dt = x[1] - x[0], t[1] - t[0]
    u0 = problem.ic(x)
    speed = max(float(np.max(np.abs(u0))), 1e-12)
    cfl = speed * dt / dx
    if cfl > 1.0 + 1e-12:
        need = int(np.ceil(speed * (t[-1] - t[0]) / dx)) + 1
        raise ConfigurationError(f"convective CFL {cfl:.4g} > 1; need dt <= {dx / speed:.6g} (nt >= {need})")
    r = 0.5 * dt * nu / dx ** 2
    ab, explicit = _cn_matrices(x.size - 2, r)

    def convect_rate(v):
        f = 0.5 * v * v
        a = np.maximum(np.abs(v[1:]), np.abs(v[:-1]))
        # upwind dissipation only where the cell Peclet number exceeds 2
        blend = np.clip(1.0 - 2.0 * nu / np.maximum(a * dx, 1e-300), 0.0, 1.0)
        flux = 0.5 * (f[1:] + f[:-1]) - 0.5 * blend * a * (v[1:] - v[:-1])
        rate = np.zeros_like(v)
        rate[1:-1] = -(flux[1:] - flux[:-1]) / dx
        return rate

    def convect(v):
        # SSP-RK3
        v1 = v + dt * convect_rate(v)
        v2 = 0.75 * v + 0.25 * (v1 + dt * convect_rate(v1))
        return v / 3.0 + 2.0 / 3.0 * (v2 + dt * convect_rate(v2))

    u = np.empty((x.size, t.size))
    u[:, 0] = u0
    cur = u0.copy()
    for j in range(1, t.size):
        cur = _diffuse_cn(cur, ab, explicit, r)
        cur = convect(cur)
        cur = _diffuse_cn(cur, ab, explicit, r)
        cur[0], cur[-1] = problem.bc[0].target(t[j]), problem.bc[1].target(t[j])
        if not np.all(np.isfinite(cur)):
            raise NumericalError("finite-difference Burgers solve diverged", step=j)
        u[:, j] = cur
    return u


def fd_reference(problem: PdeProblem, nx: int, nt: int, box: Box | None = None) -> SolutionGrid:
    """Finite-difference solution on a uniform grid over the problem's training box.

    Heat uses Crank-Nicolson, wave explicit leapfrog (CFL <= 1), Burgers a
    Strang split of Crank-Nicolson diffusion and SSP-RK3 flux-form convection.
    """
    box = box or problem.domain
    x, t = uniform_axes(box, nx, nt)
    solver = {"heat": _fd_heat, "wave": _fd_wave, "burgers": _fd_burgers}.get(problem.name)
    if solver is None:
        raise ConfigurationError(f"no finite-difference scheme for {problem.name!r}")
    u = solver(problem, x, t)
    return SolutionGrid(x, t, u, meta={"oracle": "finite-difference", "problem": problem.name})


def reference_grid(problem: PdeProblem, x, t) -> SolutionGrid:
    X, T = np.meshgrid(x, t, indexing="ij")
    return SolutionGrid(x, t, np.asarray(problem.reference(X, T), dtype=float),
                        meta={"oracle": "analytic", "problem": problem.name})
