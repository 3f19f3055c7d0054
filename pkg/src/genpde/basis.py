"""Learnable basis-function families feeding the synthesis network.

Each family fixes a parameter layout (one table per group, one row per basis)
and an evaluation formula.  Evaluation is written with jet primitives so the
outputs carry exact input partials and, under an active tape, every table
entry receives a gradient.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from ._fastmath import sincos
from .autodiff import Jet, ParamVector, _add, _mul, _sub
from .errors import ConfigurationError

SIGMA_FLOOR = 1e-6


class BasisFamily(str, enum.Enum):
    SINE_HEAT = "SineHeat"
    GAUSS_HEAT_PRODUCT = "GaussHeatProduct"
    SINE_TRAVELING = "SineTraveling"
    GAUSS_TRAVELING = "GaussTraveling"
    SINE_SPATIAL = "SineSpatial"
    GAUSS_TEMPORAL = "GaussTemporal"

    @classmethod
    def parse(cls, tag) -> "BasisFamily":
        if isinstance(tag, cls):
            return tag
        for fam in cls:
            if tag in (fam.value, fam.name, fam.name.lower()):
                return fam
        raise ConfigurationError(f"unknown basis family {tag!r}; expected one of {[f.value for f in cls]}")


SPATIAL_SINE = ("a", "omega", "phi", "b")
TEMPORAL_GAUSS = ("alpha", "mu", "sigma")

# group name -> column names, plus which count sizes the group ("m" or "n")
LAYOUTS: dict[BasisFamily, tuple[tuple[str, tuple[str, ...], str], ...]] = {
    BasisFamily.SINE_HEAT: (("table", ("a", "omega", "b"), "m"),),
    BasisFamily.GAUSS_HEAT_PRODUCT: (("spatial", ("a", "mu_x", "sigma"), "m"), ("temporal", ("mu_t",), "n")),
    BasisFamily.SINE_TRAVELING: (("table", ("a", "b", "omega", "d"), "m"),),
    BasisFamily.GAUSS_TRAVELING: (("table", ("a", "b", "mu", "nu", "sigma", "tau", "d"), "m"),),
    BasisFamily.SINE_SPATIAL: (("spatial", SPATIAL_SINE, "m"), ("temporal", TEMPORAL_GAUSS, "n")),
    BasisFamily.GAUSS_TEMPORAL: (("temporal", TEMPORAL_GAUSS, "m"),),
}


@dataclass
class BasisSet:
    family: BasisFamily
    count_m: int
    count_n: int
    tables: dict[str, np.ndarray]
    domain: tuple[float, float, float, float]  # x_lo, x_hi, t_lo, t_hi
    combine: str = "product"  # GaussHeatProduct only: "product" (m*n) or "factors" (m+n)
    prefix: str = field(default="basis", repr=False)

    def __post_init__(self):
        self.family = BasisFamily.parse(self.family)
        for group, cols, which in LAYOUTS[self.family]:
            rows = self.count_m if which == "m" else self.count_n
            tab = self.tables.get(group)
            if tab is None or np.shape(tab) != (rows, len(cols)):
                raise ConfigurationError(
                    f"{self.family.value} table {group!r} must have shape {(rows, len(cols))}, got {np.shape(tab)}")

    @property
    def output_count(self) -> int:
        fam = self.family
        if fam is BasisFamily.GAUSS_HEAT_PRODUCT:
            return self.count_m * self.count_n if self.combine == "product" else self.count_m + self.count_n
        if fam is BasisFamily.SINE_SPATIAL:
            return self.count_m + self.count_n
        return self.count_m

    def param_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{self.prefix}.{group}", self.tables[group]) for group, _, _ in LAYOUTS[self.family]]

    def param_count(self) -> int:
        return sum(a.size for _, a in self.param_arrays())


def check_counts(family: BasisFamily, count_m: int, count_n: int):
    if count_m < 1:
        raise ConfigurationError(f"{family.value} needs count_m >= 1, got {count_m}")
    needs_n = family is BasisFamily.GAUSS_HEAT_PRODUCT
    if needs_n and count_n < 1:
        raise ConfigurationError(f"{family.value} needs count_n >= 1, got {count_n}")
    uses_n = any(which == "n" for _, _, which in LAYOUTS[family])
    if not uses_n and count_n != 0:
        raise ConfigurationError(f"{family.value} takes no temporal count; got count_n={count_n}")
    if count_n < 0:
        raise ConfigurationError("count_n must be >= 0")


def _box(domain) -> tuple[float, float, float, float]:
    x_lo, x_hi, t_lo, t_hi = (float(v) for v in domain)
    if not (x_hi > x_lo and t_hi > t_lo):
        raise ConfigurationError(f"empty domain box {domain!r}")
    return x_lo, x_hi, t_lo, t_hi


def _frequencies(rng: np.random.Generator, count: int) -> np.ndarray:
    # basis i (1-based) draws its frequency from [0, i*pi]
    return np.arange(1, count + 1) * np.pi * rng.uniform(0.0, 1.0, count)


def _centers(rng, count, lo, hi):
    return lo + (hi - lo) * rng.uniform(0.0, 1.0, count)


def init_basis(family, count_m: int, count_n: int = 0, domain=(0.0, 1.0, 0.0, 1.0),
               rng: np.random.Generator | int | None = None, combine: str = "product") -> BasisSet:
    """Draw a fresh basis set with the trigonometric/Gaussian initialization rules."""
    family = BasisFamily.parse(family)
    check_counts(family, count_m, count_n)
    x_lo, x_hi, t_lo, t_hi = _box(domain)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    u = lambda k: rng.uniform(0.0, 1.0, k)  # noqa: E731
    zeros = np.zeros
    m, n = count_m, count_n

    def temporal_gauss(k):
        return np.column_stack([u(k), _centers(rng, k, t_lo, t_hi), u(k)])

    if family is BasisFamily.SINE_HEAT:
        tables = {"table": np.column_stack([u(m), _frequencies(rng, m), zeros(m)])}
    elif family is BasisFamily.GAUSS_HEAT_PRODUCT:
        spatial = np.column_stack([u(m), _centers(rng, m, x_lo, x_hi), u(m)])
        temporal = _centers(rng, n, t_lo, t_hi)[:, None]
        tables = {"spatial": spatial, "temporal": temporal}
    elif family is BasisFamily.SINE_TRAVELING:
        tables = {"table": np.column_stack([u(m), u(m), _frequencies(rng, m), zeros(m)])}
    elif family is BasisFamily.GAUSS_TRAVELING:
        # right-moving bumps live on x - t, left-moving on x + t
        tables = {"table": np.column_stack([
            u(m), u(m),
            _centers(rng, m, x_lo - t_hi, x_hi - t_lo),
            _centers(rng, m, x_lo + t_lo, x_hi + t_hi),
            u(m), u(m), zeros(m),
        ])}
    elif family is BasisFamily.SINE_SPATIAL:
        spatial = np.column_stack([u(m), _frequencies(rng, m), zeros(m), zeros(m)])
        tables = {"spatial": spatial, "temporal": temporal_gauss(n).reshape(n, 3)}
    else:
        tables = {"temporal": temporal_gauss(m)}
    return BasisSet(family, m, n, tables, (x_lo, x_hi, t_lo, t_hi), combine=combine)


def _positive(width: Jet) -> Jet:
    return ad.jabs(width) + SIGMA_FLOOR


def _gauss(z: Jet) -> Jet:
    return ad.exp(-(z * z))


# --- fused kernels ---------------------------------------------------------------
# Hand-differentiated forward jets and parameter adjoints for the hot families.
# They apply only when x and t are plain seeds (or flat), which is always the
# case for collocation points; anything else takes the composed-jet route.

def _is_seed(j: Jet, own: str) -> bool:
    if j.tape is not None:
        return False
    for f in ad.DERIV_FIELDS:
        val = getattr(j, f)
        if val is None:
            continue
        if f != own or not np.all(np.asarray(val) == 1.0):
            return False
    return True


def _seeded(x: Jet, t: Jet):
    if not (_is_seed(x, "dx") and _is_seed(t, "dt")):
        return None
    sx = x.dx is not None and ad.tracked("dx")
    st = t.dt is not None and ad.tracked("dt")
    return {
        "dx": sx, "dt": st,
        "dxx": sx and ad.tracked("dxx"),
        "dtt": st and ad.tracked("dtt"),
        "dxt": sx and st and ad.tracked("dxt"),
    }


def _colsum(term):
    return None if term is None else np.sum(term, axis=0)


def _grads(g):
    return dict(zip(ad.FIELDS, g))


def _table_adjoint(cols, shape):
    out = np.zeros(shape)
    for j, c in enumerate(cols):
        if c is not None:
            out[:, j] = c
    return ((out, None, None, None, None, None), (None,) * 6, (None,) * 6)


def _exp_clamped(arg):
    if np.any(arg > ad.EXP_CLAMP):
        import warnings
        warnings.warn(f"exp argument {np.max(arg):.6g} clamped at {ad.EXP_CLAMP}", RuntimeWarning, stacklevel=3)
        arg = np.minimum(arg, ad.EXP_CLAMP)
    return np.exp(arg)


def _sine_heat_kernel(table: Jet, x: Jet, t: Jet, want: dict):
    a, w, b = table.v.T
    xv, tv = x.v.reshape(-1, 1), t.v.reshape(-1, 1)
    E = _exp_clamped(-(w * w) * tv)
    S, C = sincos(w * xv)
    ES = E * S
    EC = E * C if (want["dx"] or want["dxt"]) else None
    Q = a * ES
    R = None if EC is None else a * EC
    w2 = w * w
    out = Jet(
        Q + b,
        w * R if want["dx"] else None,
        -w2 * Q if want["dt"] else None,
        -w2 * Q if want["dxx"] else None,
        -w2 * w * R if want["dxt"] else None,
        w2 * w2 * Q if want["dtt"] else None,
    )

    def vjp(g):
        G = _grads(g)
        need_r = G["dx"] is not None or G["dxt"] is not None
        ec = (E * C) if need_r else None
        r = None if ec is None else a * ec
        # coefficient of E*S and E*C in each field, per unit a
        cs = _sum3(G["v"], _mul(_add(G["dt"], G["dxx"]), -w2), _mul(G["dtt"], w2 * w2))
        cc = _add(_mul(G["dx"], w), _mul(G["dxt"], -w2 * w))
        a_bar = _add(_colsum(_mul(cs, ES)), _colsum(_mul(cc, ec)))
        b_bar = _colsum(G["v"])
        # d/dw of Q = a E S and R = a E C
        dQ = -2.0 * w * tv * Q + (xv * r if r is not None else a * E * C * xv)
        dR = None if r is None else -2.0 * w * tv * r - xv * Q
        terms = _sum3(
            _mul(G["v"], dQ),
            _mul(G["dx"], None if r is None else r + w * dR),
            _mul(_add(G["dt"], G["dxx"]), -2.0 * w * Q - w2 * dQ),
        )
        terms = _sum3(
            terms,
            _mul(G["dtt"], 4.0 * w2 * w * Q + w2 * w2 * dQ),
            _mul(G["dxt"], None if r is None else -3.0 * w2 * r - w2 * w * dR),
        )
        return _table_adjoint((a_bar, _colsum(terms), b_bar), table.v.shape)

    return out, vjp


def _sum3(a, b, c):
    return _add(_add(a, b), c)


def _sine_traveling_kernel(table: Jet, x: Jet, t: Jet, want: dict):
    a, b, w, d = table.v.T
    xv, tv = x.v.reshape(-1, 1), t.v.reshape(-1, 1)
    xi1, xi2 = xv - tv, xv + tv
    th1, th2 = w * xi1, w * xi2
    (s1, c1), (s2, c2) = sincos(th1), sincos(th2)
    A, Bs = a * s1, b * s2
    Ac, Bc = a * c1, b * c2
    w2 = w * w
    S = A + Bs
    out = Jet(
        S + d,
        w * (Ac + Bc) if want["dx"] else None,
        w * (Bc - Ac) if want["dt"] else None,
        -w2 * S if want["dxx"] else None,
        w2 * (A - Bs) if want["dxt"] else None,
        -w2 * S if want["dtt"] else None,
    )

    def vjp(g):
        G = _grads(g)
        Gss = _add(G["dxx"], G["dtt"])
        p1, p2 = _sub(G["dx"], G["dt"]), _sub(G["dxt"], Gss)
        q1, q2 = _add(G["dx"], G["dt"]), _neg_add(Gss, G["dxt"])
        a_bar = _colsum(_sum3(_mul(G["v"], s1), _mul(p1, w * c1), _mul(p2, w2 * s1)))
        b_bar = _colsum(_sum3(_mul(G["v"], s2), _mul(q1, w * c2), _mul(q2, w2 * s2)))
        d_bar = _colsum(G["v"])
        U1, U2 = Ac * xi1, Bc * xi2
        V1, V2 = A * xi1, Bs * xi2
        w_terms = _sum3(
            _mul(G["v"], U1 + U2),
            _mul(G["dx"], (Ac + Bc) - w * (V1 + V2)),
            _mul(G["dt"], (Bc - Ac) + w * (V1 - V2)),
        )
        w_terms = _sum3(
            w_terms,
            _mul(Gss, -2.0 * w * S - w2 * (U1 + U2)),
            _mul(G["dxt"], 2.0 * w * (A - Bs) + w2 * (U1 - U2)),
        )
        return _table_adjoint((a_bar, b_bar, _colsum(w_terms), d_bar), table.v.shape)

    return out, vjp


def _neg_add(a, b):
    """-(a + b) with zero-awareness."""
    s = _add(a, b)
    return None if s is None else -s


def _gauss_ladder(xi, center, width):
    """exp(-z^2) and its first three derivatives along xi, z = (xi - center) / width."""
    z = (xi - center) / width
    e = np.exp(-z * z)
    g1 = -2.0 * z * e / width
    g2 = (4.0 * z * z - 2.0) * e / width ** 2
    g3 = (12.0 * z - 8.0 * z ** 3) * e / width ** 3
    return z, e, g1, g2, g3


def _gauss_traveling_kernel(table: Jet, x: Jet, t: Jet, want: dict):
    a, b, mu, nu, sig, tau, d = table.v.T
    xv, tv = x.v.reshape(-1, 1), t.v.reshape(-1, 1)
    s1, s2 = np.abs(sig) + SIGMA_FLOOR, np.abs(tau) + SIGMA_FLOOR
    z1, g0, g1, g2, g3 = _gauss_ladder(xv - tv, mu, s1)
    z2, h0, h1, h2, h3 = _gauss_ladder(xv + tv, nu, s2)
    ag1, bh1, ag2, bh2 = a * g1, b * h1, a * g2, b * h2
    out = Jet(
        a * g0 + b * h0 + d,
        ag1 + bh1 if want["dx"] else None,
        bh1 - ag1 if want["dt"] else None,
        ag2 + bh2 if want["dxx"] else None,
        bh2 - ag2 if want["dxt"] else None,
        ag2 + bh2 if want["dtt"] else None,
    )

    def vjp(g):
        G = _grads(g)
        Gss = _add(G["dxx"], G["dtt"])
        L1, M1 = _sub(G["dx"], G["dt"]), _sub(Gss, G["dxt"])
        L2, M2 = _add(G["dx"], G["dt"]), _add(Gss, G["dxt"])

        def ladder_sums(L, M, k0, k1, k2, k3, z, s):
            amp = _colsum(_sum3(_mul(G["v"], k0), _mul(L, k1), _mul(M, k2)))
            shift = _colsum(_sum3(_mul(G["v"], k1), _mul(L, k2), _mul(M, k3)))
            width = _colsum(_sum3(_mul(G["v"], -z * k1), _mul(L, -z * k2 - k1 / s), _mul(M, -z * k3 - 2.0 * k2 / s)))
            return amp, shift, width

        a_bar, mu_s, sig_s = ladder_sums(L1, M1, g0, g1, g2, g3, z1, s1)
        b_bar, nu_s, tau_s = ladder_sums(L2, M2, h0, h1, h2, h3, z2, s2)
        cols = (
            a_bar, b_bar,
            None if mu_s is None else -a * mu_s,
            None if nu_s is None else -b * nu_s,
            None if sig_s is None else a * np.sign(sig) * sig_s,
            None if tau_s is None else b * np.sign(tau) * tau_s,
            _colsum(G["v"]),
        )
        return _table_adjoint(cols, table.v.shape)

    return out, vjp


_KERNELS = {
    BasisFamily.SINE_HEAT: _sine_heat_kernel,
    BasisFamily.SINE_TRAVELING: _sine_traveling_kernel,
    BasisFamily.GAUSS_TRAVELING: _gauss_traveling_kernel,
}


def _fused(bset: BasisSet, x: Jet, t: Jet, p: dict[str, Jet]) -> Jet | None:
    kernel = _KERNELS.get(bset.family)
    if kernel is None:
        return None
    want = _seeded(x, t)
    if want is None:
        return None
    return ad.custom(f"basis:{bset.family.value}", kernel, (p["table"], x, t), want=want)


def eval_basis(bset: BasisSet, x: Jet, t: Jet, params: dict[str, Jet] | None = None, fused: bool = True) -> Jet:
    """Evaluate every basis output at the points; returns a jet of shape (P, K).

    ``params`` maps the set's parameter names to jets (tape variables during
    training); when omitted the stored tables are used as constants, or as
    tape variables if a tape is active.  ``fused=False`` forces the
    composed-primitive route even where a hand-differentiated kernel exists.
    """
    if params is None:
        params = ParamVector.from_arrays(bset.param_arrays()).lift()
    p = {name.split(".", 1)[1]: jet for name, jet in params.items() if name.startswith(bset.prefix + ".")}
    if fused:
        out = _fused(bset, x, t, p)
        if out is not None:
            return out
    npts = x.v.size
    X = ad.reshape(x, (npts, 1))
    T = ad.reshape(t, (npts, 1))
    fam = bset.family

    def col(group, name):
        cols = dict((g, c) for g, c, _ in LAYOUTS[fam])[group]
        return p[group][:, cols.index(name)]

    if fam is BasisFamily.SINE_HEAT:
        a, w, b = (col("table", c) for c in ("a", "omega", "b"))
        return a * ad.exp(-(w * w) * T) * ad.sin(w * X) + b

    if fam is BasisFamily.GAUSS_HEAT_PRODUCT:
        a, mu, sig = (col("spatial", c) for c in ("a", "mu_x", "sigma"))
        spatial = a * _gauss((X - mu) / _positive(sig))  # (P, m)
        temporal = ad.exp(-(col("temporal", "mu_t") * T))  # (P, n)
        if bset.combine == "factors":
            return ad.concat([spatial, temporal], axis=-1)
        prod = ad.reshape(spatial, (npts, bset.count_m, 1)) * ad.reshape(temporal, (npts, 1, bset.count_n))
        return ad.reshape(prod, (npts, bset.count_m * bset.count_n))

    if fam is BasisFamily.SINE_TRAVELING:
        a, b, w, d = (col("table", c) for c in ("a", "b", "omega", "d"))
        return a * ad.sin(w * (X - T)) + b * ad.sin(w * (X + T)) + d

    if fam is BasisFamily.GAUSS_TRAVELING:
        a, b, mu, nu, sig, tau, d = (col("table", c) for c in LAYOUTS[fam][0][1])
        right = _gauss((X - T - mu) / _positive(sig))
        left = _gauss((X + T - nu) / _positive(tau))
        return a * right + b * left + d

    def temporal_gauss(group):
        alpha, mu, sig = (col(group, c) for c in TEMPORAL_GAUSS)
        s = _positive(sig)
        z = (T - mu) / s
        return alpha * ad.exp(-0.5 * (z * z))

    if fam is BasisFamily.SINE_SPATIAL:
        a, w, phi, b = (col("spatial", c) for c in SPATIAL_SINE)
        f = a * ad.sin(w * X + phi) + b
        if bset.count_n == 0:
            return f
        return ad.concat([f, temporal_gauss("temporal")], axis=-1)

    return temporal_gauss("temporal")


def basis_values(bset: BasisSet, x, t) -> np.ndarray:
    """Plain values of every basis output at points (x, t); shape (P, K)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
    params = {name: Jet(arr) for name, arr in bset.param_arrays()}
    return eval_basis(bset, Jet(x), Jet(t), params).v


def export_basis(bset: BasisSet, x=None, t=None) -> dict:
    """Parameter tables plus, when a grid is given, sampled curves per basis output."""
    desc = {
        "family": bset.family.value,
        "count_m": bset.count_m,
        "count_n": bset.count_n,
        "combine": bset.combine,
        "domain": list(bset.domain),
        "tables": {
            group: {"columns": list(cols), "rows": bset.tables[group].tolist()}
            for group, cols, _ in LAYOUTS[bset.family]
        },
    }
    if x is not None:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = np.zeros_like(x) if t is None else np.broadcast_to(np.asarray(t, dtype=float), x.shape)
        desc["curves"] = {"x": x.tolist(), "t": np.asarray(t).tolist(), "values": basis_values(bset, x, t).tolist()}
    return desc


def import_basis(desc: dict) -> BasisSet:
    tables = {g: np.asarray(spec["rows"], dtype=float).reshape(len(spec["rows"]), len(spec["columns"]))
              for g, spec in desc["tables"].items()}
    return BasisSet(BasisFamily.parse(desc["family"]), int(desc["count_m"]), int(desc["count_n"]), tables,
                    tuple(desc["domain"]), combine=desc.get("combine", "product"))
