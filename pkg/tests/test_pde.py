import numpy as np
import pytest

from genpde.autodiff import Jet, jet_seed
from genpde.errors import ConfigurationError
from genpde.pde import (BURGERS_NU, Box, SolutionGrid, burgers_problem, cole_hopf_reference, fd_reference,
                        get_problem, heat_problem, heat_reference, reference_grid, wave_problem, wave_reference)

from conftest import fd_partials


def test_heat_examples():
    p = heat_problem()
    assert p.reference(1.0, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert np.all(p.reference(0.0, np.linspace(0, 4, 9)) == 0.0)
    # exp(-pi^2/4), frozen from an independent evaluation
    assert p.reference(1.0, 1.0) == pytest.approx(0.0848049724711138, abs=1e-15)
    assert p.reference(1.0, 1.0) == pytest.approx(np.exp(-np.pi ** 2 / 4), rel=1e-15)


def test_wave_examples():
    p = wave_problem()
    assert p.reference(1.0, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert p.reference(1.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert p.reference(1.0, 2.0) == pytest.approx(-0.5, abs=1e-15)


def test_burgers_examples():
    p = burgers_problem()
    assert p.reference(0.5, 0.0) == pytest.approx(-1.0, abs=1e-15)
    assert p.viscosity == pytest.approx(0.01 / np.pi)
    ts = np.linspace(0.05, 1.0, 7)
    assert np.all(np.abs(p.reference(np.zeros(7), ts)) < 1e-12)
    assert np.all(np.abs(p.reference(np.ones(7), ts)) < 1e-8)
    assert np.all(np.abs(p.reference(-np.ones(7), ts)) < 1e-8)


def test_cole_hopf_examples():
    assert cole_hopf_reference(0.5, 0.0) == -1.0
    assert abs(cole_hopf_reference(0.0, 0.75)) < 1e-12


def test_cole_hopf_node_doubling_settles():
    x, t = np.linspace(-0.9, 0.9, 19), np.full(19, 0.6)
    a = cole_hopf_reference(x, t, nodes=128)
    b = cole_hopf_reference(x, t, nodes=1024)
    assert np.max(np.abs(a - b)) < 1e-6


@pytest.mark.parametrize("name", ["heat", "wave", "burgers"])
def test_bc_ic_agree_with_reference(name):
    p = get_problem(name)
    d = p.domain
    xs = np.linspace(d.x_lo, d.x_hi, 41)
    ts = np.linspace(d.t_lo, d.t_hi, 41)[1:]
    np.testing.assert_allclose(p.ic(xs), p.reference(xs, np.zeros_like(xs)), rtol=0, atol=1e-12)
    for bc in p.bc:
        np.testing.assert_allclose(bc.target(ts), p.reference(np.full_like(ts, bc.x), ts), rtol=0, atol=1e-12)


def test_extrapolation_boxes_contain_domains():
    for name in ("heat", "wave", "burgers"):
        p = get_problem(name)
        d, e = p.domain, p.extrapolation_domain
        assert e.x_lo <= d.x_lo and e.x_hi >= d.x_hi and e.t_lo <= d.t_lo and e.t_hi >= d.t_hi
        assert e != d


def test_heat_self_consistency_through_jets():
    p = heat_problem()
    rng = np.random.default_rng(0)
    x, t = jet_seed(rng.uniform(0, 2, 500), rng.uniform(0, 2, 500))
    u = p.reference_jet(x, t)
    assert np.max(np.abs(p.residual(u).v)) < 1e-8
    np.testing.assert_allclose(u.v, heat_reference(x.v, t.v), rtol=0, atol=1e-15)


def test_wave_self_consistency_off_kinks():
    # d'Alembert is piecewise linear in x +- t; difference away from the kink lines
    rng = np.random.default_rng(1)
    xs, ts = rng.uniform(0.05, 1.95, 400), rng.uniform(0.05, 1.95, 400)
    s1, s2 = np.mod(xs - ts, 1.0), np.mod(xs + ts, 1.0)
    keep = (np.minimum(s1, 1 - s1) > 0.02) & (np.minimum(s2, 1 - s2) > 0.02)
    xs, ts = xs[keep], ts[keep]
    d = fd_partials(wave_reference, xs, ts, h=2e-3)
    assert np.max(np.abs(d["dtt"] - d["dxx"])) < 1e-8


def test_burgers_self_consistency_by_fd():
    p = burgers_problem()
    rng = np.random.default_rng(2)
    xs, ts = rng.uniform(0.3, 0.9, 40) * rng.choice([-1, 1], 40), rng.uniform(0.1, 0.6, 40)
    d = fd_partials(p.reference, xs, ts, h=1e-2, levels=2)
    u = p.reference(xs, ts)
    r = d["dt"] + u * d["dx"] - BURGERS_NU * d["dxx"]
    assert np.max(np.abs(r)) < 1e-4


def test_burgers_residual_through_jets():
    p = burgers_problem()
    u = Jet(np.array(2.0), dx=np.array(3.0), dt=np.array(-1.0), dxx=np.array(5.0))
    assert float(p.residual(u).v) == pytest.approx(-1.0 + 6.0 - BURGERS_NU * 5.0)


def test_residual_source_hook():
    p = heat_problem()
    p.source = lambda x, t: x + t
    u = Jet(np.array(0.0), dt=np.array(1.0), dxx=np.array(0.25))
    assert float(p.residual(u, 1.0, 2.0).v) == pytest.approx(0.75 - 3.0)


def test_heat_decays_monotonically():
    ts = np.linspace(0, 4, 401)
    for x in np.linspace(0.05, 1.95, 12):
        assert np.all(np.diff(heat_reference(np.full_like(ts, x), ts)) < 0)


def test_wave_is_four_periodic():
    rng = np.random.default_rng(3)
    xs, ts = rng.uniform(0, 4, 1000), rng.uniform(0, 4, 1000)
    assert np.max(np.abs(wave_reference(xs, ts) - wave_reference(xs, ts + 4.0))) < 1e-12


def test_burgers_is_odd():
    rng = np.random.default_rng(4)
    xs, ts = rng.uniform(0, 1, 300), rng.uniform(0, 1, 300)
    p = burgers_problem()
    assert np.max(np.abs(p.reference(xs, ts) + p.reference(-xs, ts))) < 1e-8


def test_fd_heat_matches_closed_form():
    g = fd_reference(heat_problem(), 201, 201)
    X, T = g.mesh()
    assert np.max(np.abs(g.u - heat_reference(X, T))) < 1e-3


def test_fd_heat_converges_second_order():
    errs = []
    for n in (51, 101, 201):
        g = fd_reference(heat_problem(), n, n)
        X, T = g.mesh()
        errs.append(np.max(np.abs(g.u - heat_reference(X, T))))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_fd_wave_exact_at_cfl_one():
    g = fd_reference(wave_problem(), 101, 101)
    X, T = g.mesh()
    assert np.max(np.abs(g.u - wave_reference(X, T))) < 1e-6


def test_fd_wave_cfl_violation():
    with pytest.raises(ConfigurationError, match="dt <= dx"):
        fd_reference(wave_problem(), 101, 51)


def test_fd_burgers_matches_cole_hopf_away_from_shock():
    g = fd_reference(burgers_problem(), 401, 2001)
    j = int(np.argmin(np.abs(g.t - 0.5)))
    keep = (np.abs(g.x) >= 0.1) & (np.abs(g.x) < 1.0)
    ref = cole_hopf_reference(g.x[keep], np.full(keep.sum(), g.t[j]))
    assert np.max(np.abs(g.u[keep, j] - ref)) < 1e-3


def test_fd_unknown_problem():
    p = heat_problem()
    p.name = "poisson"
    with pytest.raises(ConfigurationError):
        fd_reference(p, 11, 11)


def test_unknown_problem_name():
    with pytest.raises(ConfigurationError, match="unknown problem"):
        get_problem("poisson")


def test_empty_box():
    with pytest.raises(ConfigurationError):
        Box(1.0, 1.0, 0.0, 1.0)


def test_solution_grid_validation():
    with pytest.raises(ValueError):
        SolutionGrid(np.arange(3.0), np.arange(4.0), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        SolutionGrid(np.array([0.0, 2.0, 1.0]), np.arange(2.0), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        SolutionGrid(np.arange(3.0), np.arange(2.0), np.zeros((3, 2)), reference=np.zeros((2, 3)))


def test_reference_grid_layout():
    x, t = np.linspace(0, 2, 5), np.linspace(0, 2, 3)
    g = reference_grid(heat_problem(), x, t)
    assert g.u.shape == (5, 3)
    assert g.u[2, 0] == pytest.approx(1.0)
    assert g.meta["problem"] == "heat"
