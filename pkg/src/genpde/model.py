"""Synthesis network, GEN model and the plain-MLP PINN baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Jet, ParamVector, TapeStructureError
from .basis import BasisSet, basis_values, eval_basis, init_basis

HIDDEN = 20


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (fan_out, fan_in))


@dataclass
class SynthesisNet:
    """One tanh hidden layer of width 20 followed by an affine read-out."""

    w1: np.ndarray  # (20, K)
    b1: np.ndarray  # (20,)
    w2: np.ndarray  # (20,)
    b2: np.ndarray  # ()

    @property
    def input_width(self) -> int:
        return self.w1.shape[1]

    def param_arrays(self, prefix="net"):
        return [(f"{prefix}.w1", self.w1), (f"{prefix}.b1", self.b1), (f"{prefix}.w2", self.w2),
                (f"{prefix}.b2", self.b2)]


def init_net(input_width: int, rng=None) -> SynthesisNet:
    if input_width < 1:
        raise ValueError("input_width must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    w1 = _glorot(rng, HIDDEN, input_width)
    w2 = _glorot(rng, 1, HIDDEN)[0]
    return SynthesisNet(w1, np.zeros(HIDDEN), w2, np.zeros(()))


@dataclass
class GenModel:
    basis: BasisSet
    net: SynthesisNet

    def __post_init__(self):
        if self.net.input_width != self.basis.output_count:
            raise ValueError(f"net input width {self.net.input_width} != basis outputs {self.basis.output_count}")

    kind = "gen"

    def param_arrays(self):
        return self.basis.param_arrays() + self.net.param_arrays()


@dataclass
class PinnModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    w_out: np.ndarray
    b_out: np.ndarray

    kind = "pinn"

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights)

    def param_arrays(self):
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out += [(f"pinn.W{i}", w), (f"pinn.b{i}", b)]
        return out + [("pinn.w_out", self.w_out), ("pinn.b_out", self.b_out)]


@dataclass
class ExactModel:
    """A parameter-free model wrapping a jet-valued closed-form solution."""

    name: str
    solution: Callable[[Jet, Jet], Jet] = field(repr=False)

    kind = "exact"

    def param_arrays(self):
        return []


def make_gen(family, count_m: int, count_n: int = 0, domain=(0.0, 1.0, 0.0, 1.0), seed=None,
             combine: str = "product") -> GenModel:
    rng = np.random.default_rng(seed)
    basis = init_basis(family, count_m, count_n, domain, rng, combine=combine)
    return GenModel(basis, init_net(basis.output_count, rng))


def make_pinn(hidden=(HIDDEN,) * 4, seed=None) -> PinnModel:
    rng = np.random.default_rng(seed)
    widths = (2,) + tuple(hidden)
    weights = [_glorot(rng, widths[i + 1], widths[i]) for i in range(len(hidden))]
    biases = [np.zeros(h) for h in hidden]
    w_out = _glorot(rng, 1, widths[-1])[0]
    return PinnModel(weights, biases, w_out, np.zeros(()))


# --- forward passes -------------------------------------------------------------

def _params(model, params):
    if params is not None:
        return params
    return ParamVector.from_arrays(model.param_arrays()).lift()


def _finish(u: Jet, x: Jet) -> Jet:
    return ad.reshape(u, x.v.shape) if u.v.shape != x.v.shape else u


def forward_gen(model: GenModel, x: Jet, t: Jet, params: dict[str, Jet] | None = None) -> Jet:
    p = _params(model, params)
    feats = eval_basis(model.basis, x, t, p)
    hidden = ad.tanh(ad.linear(feats, p["net.w1"], p["net.b1"]))
    return _finish(ad.linear(hidden, p["net.w2"], p["net.b2"]), x)


def forward_pinn(model: PinnModel, x: Jet, t: Jet, params: dict[str, Jet] | None = None) -> Jet:
    p = _params(model, params)
    n = x.v.size
    h = ad.concat([ad.reshape(x, (n, 1)), ad.reshape(t, (n, 1))], axis=-1)
    for i in range(len(model.weights)):
        h = ad.tanh(ad.linear(h, p[f"pinn.W{i}"], p[f"pinn.b{i}"]))
    return _finish(ad.linear(h, p["pinn.w_out"], p["pinn.b_out"]), x)


def forward(model, x: Jet, t: Jet, params: dict[str, Jet] | None = None) -> Jet:
    if isinstance(model, GenModel):
        return forward_gen(model, x, t, params)
    if isinstance(model, PinnModel):
        return forward_pinn(model, x, t, params)
    if isinstance(model, ExactModel):
        return model.solution(x, t)
    raise TypeError(f"not a model: {type(model).__name__}")


def predict(model, x, t, chunk: int = 20000) -> np.ndarray:
    """Plain values u(x, t) at broadcast points, no derivatives, no tape."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    flat_x, flat_t = x.ravel(), t.ravel()
    out = np.empty(flat_x.size)
    with ad.Tape.suspended():
        for s in range(0, flat_x.size, chunk):
            sl = slice(s, s + chunk)
            out[sl] = forward(model, Jet(flat_x[sl]), Jet(flat_t[sl])).v
    return out.reshape(x.shape)


def basis_influence(model: GenModel, x, t) -> np.ndarray:
    """RMS over the points of each basis output's linearised contribution to u.

    Contribution k at a point is (du/dphi_k) * (phi_k - mean phi_k), so a basis
    that is large but constant, or that the network ignores, scores low.
    """
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    phi = basis_values(model.basis, x.ravel(), t.ravel())
    net = model.net
    h = np.tanh(phi @ net.w1.T + net.b1)
    du_dphi = ((1.0 - h * h) * net.w2) @ net.w1
    return np.sqrt(np.mean((du_dphi * (phi - phi.mean(axis=0))) ** 2, axis=0))


# --- flatten / unflatten -----------------------------------------------------------

def flatten(model) -> ParamVector:
    return ParamVector.from_arrays(model.param_arrays())


def unflatten(params: ParamVector, like):
    """Rebuild a model shaped like ``like`` from ``params`` (copies the values)."""
    expected = flatten(like)
    if len(params) != len(expected):
        raise TapeStructureError(f"parameter length {len(params)} != {len(expected)} expected")
    if params.names() != expected.names():
        raise TapeStructureError("parameter names do not match the model layout")
    get = lambda name: np.array(params[name], dtype=float)  # noqa: E731
    if isinstance(like, GenModel):
        b = like.basis
        tables = {name.split(".", 1)[1]: get(name) for name, _ in b.param_arrays()}
        basis = BasisSet(b.family, b.count_m, b.count_n, tables, b.domain, combine=b.combine, prefix=b.prefix)
        net = SynthesisNet(get("net.w1"), get("net.b1"), get("net.w2"), get("net.b2"))
        return GenModel(basis, net)
    if isinstance(like, PinnModel):
        k = len(like.weights)
        return PinnModel([get(f"pinn.W{i}") for i in range(k)], [get(f"pinn.b{i}") for i in range(k)],
                         get("pinn.w_out"), get("pinn.b_out"))
    if isinstance(like, ExactModel):
        return like
    raise TypeError(f"not a model: {type(like).__name__}")
