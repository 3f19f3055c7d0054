"""Collocation sampling, physics-informed loss, Adam, training loop and metrics."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import autodiff as ad
from .autodiff import Jet, ParamVector, jet_seed
from .errors import ConfigurationError, NumericalError
from .model import flatten, forward, predict, unflatten
from .pde import Box, PdeProblem, SolutionGrid, uniform_axes

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 100_000
DESK_ITERATIONS = 20_000
DIVERGENCE_LIMIT = 1e6
SAMPLING = ("uniform-random", "grid", "latin-hypercube")


@dataclass
class TrainConfig:
    iterations: int = DEFAULT_ITERATIONS
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_bc: float = 1.0
    gamma_ic: float = 1.0
    n_interior: int = 2000
    n_boundary: int = 200
    n_initial: int = 200
    sampling: str = "latin-hypercube"
    resample_every: int = 0
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        for name in ("n_interior", "n_boundary", "n_initial"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1)")
        if self.sampling not in SAMPLING:
            raise ConfigurationError(f"sampling must be one of {SAMPLING}, got {self.sampling!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# --- collocation --------------------------------------------------------------------

@dataclass
class Collocation:
    x_int: np.ndarray
    t_int: np.ndarray
    x_bc: np.ndarray
    t_bc: np.ndarray
    u_bc: np.ndarray
    x_ic: np.ndarray
    u_ic: np.ndarray
    v_ic: np.ndarray | None = None  # initial velocity targets, second-order-in-time problems only

    def __post_init__(self):
        self._seeds = None

    @property
    def interior_jets(self) -> tuple[Jet, Jet]:
        if self._seeds is None:
            self._seeds = jet_seed(self.x_int, self.t_int)
        return self._seeds

    def subset(self, n: int) -> "Collocation":
        return Collocation(self.x_int[:n], self.t_int[:n], self.x_bc[:n], self.t_bc[:n], self.u_bc[:n],
                           self.x_ic[:n], self.u_ic[:n], None if self.v_ic is None else self.v_ic[:n])


def _open_interval(u: np.ndarray) -> np.ndarray:
    # keep unit-cube samples strictly inside (0, 1)
    return np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def _unit_samples(n: int, dim: int, mode: str, rng: np.random.Generator) -> np.ndarray:
    if mode == "latin-hypercube":
        return _open_interval(qmc.LatinHypercube(d=dim, seed=rng).random(n))
    if mode == "uniform-random":
        return _open_interval(rng.uniform(0.0, 1.0, (n, dim)))
    # cell-centred tensor grid with at least n points, truncated to n
    side = int(np.ceil(n ** (1.0 / dim)))
    axes = [(np.arange(side) + 0.5) / side] * dim
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    return pts[:n]


def sample_collocation(problem: PdeProblem, config: TrainConfig, rng: np.random.Generator | None = None
                       ) -> Collocation:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    box = problem.domain
    span_x, span_t = box.x_hi - box.x_lo, box.t_hi - box.t_lo
    inner = _unit_samples(config.n_interior, 2, config.sampling, rng)
    x_int = box.x_lo + span_x * inner[:, 0]
    t_int = box.t_lo + span_t * inner[:, 1]

    loci = problem.bc
    counts = [config.n_boundary // len(loci) + (i < config.n_boundary % len(loci)) for i in range(len(loci))]
    xb, tb, ub = [], [], []
    for cond, k in zip(loci, counts):
        if k == 0:
            continue
        s = _unit_samples(k, 1, config.sampling, rng)[:, 0]
        t = box.t_lo + span_t * s
        xb.append(np.full(k, cond.x))
        tb.append(t)
        ub.append(np.asarray(cond.target(t), dtype=float))
    s = _unit_samples(config.n_initial, 1, config.sampling, rng)[:, 0]
    x_ic = box.x_lo + span_x * s
    v_ic = None if problem.ic_velocity is None else np.asarray(problem.ic_velocity(x_ic), dtype=float)
    return Collocation(x_int, t_int, np.concatenate(xb), np.concatenate(tb), np.concatenate(ub),
                       x_ic, np.asarray(problem.ic(x_ic), dtype=float), v_ic)


# --- loss ---------------------------------------------------------------------------

def _first_bad(values: np.ndarray, xs: np.ndarray, ts: np.ndarray):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = bad[0]
        return float(xs[i]), float(ts[i])
    return None


def compute_loss(model, problem: PdeProblem, points: Collocation, lambda_bc: float = 1.0,
                 gamma_ic: float = 1.0, params: dict[str, Jet] | None = None) -> tuple[Jet, dict[str, float]]:
    """Residual MSE + lambda * boundary MSE + gamma * initial MSE, as a tape-recorded scalar."""
    xj, tj = points.interior_jets
    with ad.tracking(*problem.fields):
        u = forward(model, xj, tj, params)
        res = problem.residual(u, points.x_int, points.t_int)
    mse_pde = ad.jmean(ad.square(res))

    u_bc = forward(model, Jet(points.x_bc), Jet(points.t_bc), params)
    mse_bc = ad.jmean(ad.square(u_bc - points.u_bc))

    t0 = np.zeros_like(points.x_ic)
    if points.v_ic is None:
        u_ic = forward(model, Jet(points.x_ic), Jet(t0), params)
        mse_ic = ad.jmean(ad.square(u_ic - points.u_ic))
    else:
        # u and u_t both pinned at t = 0
        with ad.tracking("dt"):
            u_ic = forward(model, Jet(points.x_ic), Jet(t0, dt=np.float64(1.0)), params)
        mse_ic = (ad.jmean(ad.square(ad.take_field(u_ic, "v") - points.u_ic))
                  + ad.jmean(ad.square(ad.take_field(u_ic, "dt") - points.v_ic)))

    loss = mse_pde + lambda_bc * mse_bc + gamma_ic * mse_ic
    terms = {"pde": float(mse_pde.v), "bc": float(mse_bc.v), "ic": float(mse_ic.v)}
    if not np.isfinite(loss.v):
        where = (_first_bad(res.v, points.x_int, points.t_int)
                 or _first_bad(u_bc.v, points.x_bc, points.t_bc)
                 or _first_bad(u_ic.v, points.x_ic, np.zeros_like(points.x_ic)))
        raise NumericalError("non-finite loss", point=where, terms=terms)
    return loss, terms


# --- Adam ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> np.ndarray:
    """One bias-corrected Adam update; moments are updated in place."""
    grads = np.asarray(grads, dtype=float)
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(grads)):
        raise NumericalError("non-finite gradient", index=int(np.flatnonzero(~np.isfinite(grads))[0]),
                             step=state.step_count)
    state.step_count += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grads
    state.v *= beta2
    state.v += (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** state.step_count)
    v_hat = state.v / (1.0 - beta2 ** state.step_count)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


# --- training loop -----------------------------------------------------------------------

@dataclass
class TrainReport:
    loss: np.ndarray
    mse_pde: np.ndarray
    mse_bc: np.ndarray
    mse_ic: np.ndarray
    wall_clock: float
    params: ParamVector
    config: dict
    completed: int = 0
    status: str = "ok"
    message: str = ""
    rng_state: dict | None = None  # collocation generator state when the report was taken

    def summary(self) -> dict:
        last = self.completed - 1
        return {
            "iterations": self.completed,
            "final_loss": float(self.loss[last]) if last >= 0 else None,
            "final_terms": {k: float(getattr(self, f"mse_{k}")[last]) for k in ("pde", "bc", "ic")}
            if last >= 0 else None,
            "wall_clock": self.wall_clock,
            "status": self.status,
            "message": self.message,
            "config": self.config,
        }


class TrainingAborted(NumericalError):
    """Numerical failure during training; ``report`` holds the partial history."""

    def __init__(self, message, report: TrainReport, **diagnostics):
        super().__init__(message, **diagnostics)
        self.report = report


def loss_and_grad(model, problem, points, pv: ParamVector, lambda_bc=1.0, gamma_ic=1.0):
    with ad.Tape():
        loss, terms = compute_loss(model, problem, points, lambda_bc, gamma_ic, pv.lift())
        g = ad.grad(loss, pv)
    return float(loss.v), terms, g


def train(model, problem: PdeProblem, config: TrainConfig, progress: Callable[[int, float, dict], None] | None = None,
          points: Collocation | None = None):
    """Full-batch Adam on the physics-informed loss; returns (trained model, report)."""
    rng = np.random.default_rng(config.seed)
    if points is None:
        points = sample_collocation(problem, config, rng)
    pv = flatten(model)
    n_iter = config.iterations
    hist = {k: np.full(n_iter, np.nan) for k in ("loss", "pde", "bc", "ic")}
    state = AdamState.zeros(len(pv))
    values = pv.values.copy()
    start = time.perf_counter()

    def report(done, status="ok", message=""):
        return TrainReport(hist["loss"], hist["pde"], hist["bc"], hist["ic"], time.perf_counter() - start,
                           pv.with_values(values.copy()), config.to_dict(), done, status, message,
                           rng.bit_generator.state)

    for it in range(n_iter):
        if config.resample_every and it and it % config.resample_every == 0:
            points = sample_collocation(problem, config, rng)
        cur = pv.with_values(values)
        try:
            loss, terms, g = loss_and_grad(model, problem, points, cur, config.lambda_bc, config.gamma_ic)
            if loss > DIVERGENCE_LIMIT:
                raise NumericalError(f"loss {loss:.3g} exceeded divergence limit {DIVERGENCE_LIMIT:g}",
                                     iteration=it, terms=terms)
            hist["loss"][it] = loss
            hist["pde"][it], hist["bc"][it], hist["ic"][it] = terms["pde"], terms["bc"], terms["ic"]
            values = adam_step(state, values, g, config.lr, config.beta1, config.beta2, config.adam_eps)
        except NumericalError as exc:
            partial = report(it, "diverged", str(exc))
            raise TrainingAborted(str(exc), partial, **{"iteration": it, **exc.diagnostics}) from exc
        if config.log_every and (it % config.log_every == 0 or it == n_iter - 1):
            log.info("iter %d loss %.4e (pde %.2e bc %.2e ic %.2e)", it, loss, terms["pde"], terms["bc"], terms["ic"])
        if progress is not None:
            progress(it, loss, terms)
    rep = report(n_iter)
    return unflatten(rep.params, model), rep


# --- evaluation ---------------------------------------------------------------------------

def error_metrics(u_model: np.ndarray, u_ref: np.ndarray) -> dict[str, float]:
    """rel_l2 and max_abs over the points where the reference is finite."""
    u_model = np.ravel(u_model)
    u_ref = np.ravel(u_ref)
    ok = np.isfinite(u_ref)
    diff = u_model[ok] - u_ref[ok]
    ref_norm = np.sqrt(np.sum(u_ref[ok] ** 2))
    return {
        "rel_l2": float(np.sqrt(np.sum(diff ** 2)) / ref_norm) if ref_norm > 0 else float("inf"),
        "max_abs": float(np.max(np.abs(diff))) if diff.size else float("nan"),
        "missing": int(np.sum(~ok)),
    }


def _safe_reference(problem: PdeProblem, X, T) -> np.ndarray:
    try:
        return np.asarray(problem.reference(X, T), dtype=float)
    except NumericalError:
        # fall back to point-wise so a single bad point only masks itself
        out = np.empty(np.shape(X))
        for idx in np.ndindex(out.shape):
            try:
                out[idx] = problem.reference(X[idx], T[idx])
            except NumericalError:
                out[idx] = np.nan
        return out


def evaluate(model, problem: PdeProblem, box: Box | None = None, nx: int = 101, nt: int = 101
             ) -> tuple[SolutionGrid, dict[str, float]]:
    box = box or problem.domain
    x, t = uniform_axes(box, nx, nt)
    X, T = np.meshgrid(x, t, indexing="ij")
    u = predict(model, X, T)
    ref = _safe_reference(problem, X, T)
    grid = SolutionGrid(x, t, u, ref, meta={"problem": problem.name, "domain": box.as_tuple()})
    return grid, error_metrics(u, ref)


def _profile(problem: PdeProblem, models: dict, locus: float, n: int):
    ext, fit = problem.extrapolation_domain, problem.domain
    if problem.profile_axis == "x":
        s = np.linspace(ext.t_lo, ext.t_hi, n)
        X, T = np.full_like(s, locus), s
        in_fit = fit.contains(X, T)
    else:
        s = np.linspace(ext.x_lo, ext.x_hi, n)
        X, T = s, np.full_like(s, locus)
        in_fit = fit.contains(X, T)
    ref = _safe_reference(problem, X, T)
    curves = {name: predict(m, X, T) for name, m in models.items()}
    metrics = {}
    for name, u in curves.items():
        metrics[name] = {"all": error_metrics(u, ref)}
        for region, mask in (("fit", in_fit), ("extrapolation", ~in_fit)):
            if mask.any():
                metrics[name][region] = error_metrics(u[mask], ref[mask])
    return {"axis": problem.profile_axis, "locus": locus, "s": s, "reference": ref, "curves": curves,
            "in_fit": in_fit, "metrics": metrics}


def extrapolation_report(models: dict, problem: PdeProblem, nx: int = 101, nt: int = 101,
                         profile_points: int = 201) -> dict:
    """Per-region error of each model on the extrapolation box, plus fixed-locus profiles.

    ``models`` maps a label (e.g. "gen", "pinn") to a model.  The box is split
    into the training region and everything outside it.
    """
    ext, fit = problem.extrapolation_domain, problem.domain
    x, t = uniform_axes(ext, nx, nt)
    X, T = np.meshgrid(x, t, indexing="ij")
    ref = _safe_reference(problem, X, T)
    in_fit = fit.contains(X, T)
    regions = {}
    for name, m in models.items():
        u = predict(m, X, T)
        regions[name] = {"fit": error_metrics(u[in_fit], ref[in_fit]),
                         "extrapolation": error_metrics(u[~in_fit], ref[~in_fit])}
    profiles = [_profile(problem, models, locus, profile_points) for locus in problem.profile_loci]
    return {"problem": problem.name, "fit_box": fit.as_tuple(), "extrapolation_box": ext.as_tuple(),
            "regions": regions, "profiles": profiles}
