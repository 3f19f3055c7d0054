import numpy as np
import pytest

from genpde import autodiff as ad
from genpde import training
from genpde.errors import ConfigurationError, NumericalError
from genpde.model import ExactModel, flatten, make_gen, make_pinn, predict, unflatten
from genpde.pde import burgers_problem, get_problem, heat_problem, wave_problem
from genpde.training import (AdamState, TrainConfig, TrainingAborted, adam_step, compute_loss,
                             error_metrics, evaluate, extrapolation_report, loss_and_grad, sample_collocation,
                             train)

BENCHMARKS = {
    "heat": ("SineHeat", 5, 0),
    "wave": ("SineTraveling", 5, 0),
    "burgers": ("SineTraveling", 5, 0),
}


def small_config(**kw):
    base = dict(iterations=5, n_interior=64, n_boundary=16, n_initial=16, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def zero_pinn():
    m = make_pinn(seed=0)
    pv = flatten(m)
    return unflatten(pv.with_values(np.zeros(len(pv))), m)


def exact_heat():
    return ExactModel("heat", heat_problem().reference_jet)


# --- config ---------------------------------------------------------------------------

def test_config_defaults():
    c = TrainConfig()
    assert (c.iterations, c.lr, c.beta1, c.beta2, c.adam_eps) == (100_000, 1e-3, 0.9, 0.999, 1e-8)
    assert (c.lambda_bc, c.gamma_ic) == (1.0, 1.0)
    assert (c.n_interior, c.n_boundary, c.n_initial) == (2000, 200, 200)
    assert c.sampling == "latin-hypercube" and c.resample_every == 0


@pytest.mark.parametrize("kw", [dict(n_interior=0), dict(lr=0.0), dict(beta1=1.0), dict(beta2=0.0),
                                dict(iterations=-1), dict(sampling="sobol")])
def test_config_rejects(kw):
    with pytest.raises(ConfigurationError):
        TrainConfig(**kw)


# --- sampling -------------------------------------------------------------------------------

@pytest.mark.parametrize("mode", training.SAMPLING)
def test_interior_points_strictly_inside(mode):
    pts = sample_collocation(heat_problem(), TrainConfig(n_interior=100, sampling=mode, seed=1))
    assert pts.x_int.size == 100
    assert np.all((pts.x_int > 0) & (pts.x_int < 2) & (pts.t_int > 0) & (pts.t_int < 2))


def test_boundary_and_initial_loci():
    p = heat_problem()
    pts = sample_collocation(p, TrainConfig(n_boundary=51, n_initial=30, seed=1))
    assert set(np.unique(pts.x_bc)) == {0.0, 2.0}
    assert pts.x_bc.size == 51 and np.sum(pts.x_bc == 0.0) == 26
    np.testing.assert_array_equal(pts.u_bc, 0.0)
    assert pts.x_ic.size == 30
    np.testing.assert_allclose(pts.u_ic, np.sin(np.pi * pts.x_ic / 2), rtol=0, atol=1e-15)
    assert pts.v_ic is None


def test_wave_has_velocity_targets():
    pts = sample_collocation(wave_problem(), TrainConfig(n_initial=20, seed=0))
    np.testing.assert_array_equal(pts.v_ic, np.zeros(20))


def test_sampling_deterministic():
    a = sample_collocation(burgers_problem(), TrainConfig(seed=9))
    b = sample_collocation(burgers_problem(), TrainConfig(seed=9))
    for f in ("x_int", "t_int", "x_bc", "t_bc", "x_ic"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = sample_collocation(burgers_problem(), TrainConfig(seed=10))
    assert not np.array_equal(a.x_int, c.x_int)


# --- loss -------------------------------------------------------------------------------------

def test_exact_solution_loss_vanishes():
    p = heat_problem()
    pts = sample_collocation(p, TrainConfig(seed=0))
    loss, terms = compute_loss(exact_heat(), p, pts)
    assert float(loss.v) < 1e-12
    assert all(v < 1e-12 for v in terms.values())


def test_zero_model_terms():
    p = heat_problem()
    pts = sample_collocation(p, TrainConfig(n_initial=4000, sampling="uniform-random", seed=0))
    _, terms = compute_loss(zero_pinn(), p, pts)
    assert terms["pde"] == 0.0 and terms["bc"] == 0.0
    # mean of sin^2 over [0, 2] is 1/2; Monte Carlo std of the mean is ~0.0056 here
    assert terms["ic"] == pytest.approx(0.5, abs=0.03)
    pts = sample_collocation(p, TrainConfig(n_initial=1000, sampling="grid", seed=0))
    _, terms = compute_loss(zero_pinn(), p, pts)
    assert terms["ic"] == pytest.approx(0.5, abs=1e-12)


def test_weights_zero_leaves_pde_term():
    p = burgers_problem()
    m = make_gen("SineTraveling", 4, 0, p.domain.as_tuple(), seed=1)
    pts = sample_collocation(p, small_config())
    loss, terms = compute_loss(m, p, pts, lambda_bc=0.0, gamma_ic=0.0)
    assert float(loss.v) == terms["pde"]
    loss, terms = compute_loss(m, p, pts, lambda_bc=2.0, gamma_ic=3.0)
    assert float(loss.v) == pytest.approx(terms["pde"] + 2 * terms["bc"] + 3 * terms["ic"], rel=1e-14)


def test_wave_initial_velocity_term():
    p = wave_problem()
    pts = sample_collocation(p, small_config())
    model = ExactModel("xt", lambda x, t: x * t)
    _, terms = compute_loss(model, p, pts)
    # u(x, 0) = 0 and u_t(x, 0) = x
    assert terms["ic"] == pytest.approx(np.mean(pts.u_ic ** 2) + np.mean(pts.x_ic ** 2), rel=1e-14)


def test_non_finite_loss_reports_point():
    p = heat_problem()
    pts = sample_collocation(p, small_config())
    pts.u_bc = pts.u_bc.copy()
    pts.u_bc[3] = np.nan
    with pytest.raises(NumericalError) as err:
        compute_loss(zero_pinn(), p, pts)
    assert "point" in err.value.diagnostics


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
@pytest.mark.parametrize("kind", ["gen", "pinn"])
def test_gradient_matches_fd_on_ten_points(name, kind):
    p = get_problem(name)
    pts = sample_collocation(p, TrainConfig(seed=7)).subset(10)
    if kind == "gen":
        family, m, n = BENCHMARKS[name]
        model = make_gen(family, m, n, p.domain.as_tuple(), seed=7)
    else:
        model = make_pinn(seed=7)
    pv = flatten(model)
    err = ad.check_gradient(lambda q: compute_loss(model, p, pts, params=q.lift())[0], pv, step=1e-5)
    assert err <= 1e-5


# --- Adam -----------------------------------------------------------------------------------------

def test_adam_zero_gradient():
    st = AdamState(np.full(3, 0.5), np.full(3, 0.25), 4)
    p = np.array([1.0, -2.0, 3.0])
    out = adam_step(st, p, np.zeros(3))
    # update is lr * m_hat / (sqrt(v_hat) + eps) with decayed moments; no gradient signal
    assert st.step_count == 5
    np.testing.assert_allclose(st.m, 0.45)
    np.testing.assert_allclose(st.v, 0.25 * 0.999)
    p2 = adam_step(AdamState.zeros(3), p, np.zeros(3))
    assert np.array_equal(p2, p)
    assert out.shape == p.shape


def test_adam_first_step_magnitude():
    g = np.array([1e-3, -5.0, 2e4])
    p = np.zeros(3)
    out = adam_step(AdamState.zeros(3), p, g, lr=1e-3)
    np.testing.assert_allclose(out, -1e-3 * np.sign(g), rtol=1e-4)


def test_adam_matches_textbook():
    rng = np.random.default_rng(0)
    p = rng.normal(size=4)
    st = AdamState.zeros(4)
    m = v = np.zeros(4)
    q = p.copy()
    for k in range(1, 6):
        g = rng.normal(size=4)
        p = adam_step(st, p, g)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        q = q - 1e-3 * (m / (1 - 0.9 ** k)) / (np.sqrt(v / (1 - 0.999 ** k)) + 1e-8)
    np.testing.assert_allclose(p, q, rtol=1e-14, atol=1e-16)


def test_adam_rejects_non_finite():
    with pytest.raises(NumericalError):
        adam_step(AdamState.zeros(2), np.zeros(2), np.array([0.0, np.inf]))


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros(2), np.zeros(3), np.zeros(3))


# --- training loop ----------------------------------------------------------------------------

def test_zero_iterations_returns_model_unchanged():
    p = heat_problem()
    m = make_gen("SineHeat", 4, 0, p.domain.as_tuple(), seed=0)
    out, rep = train(m, p, small_config(iterations=0))
    assert np.array_equal(flatten(out).values, flatten(m).values)
    assert rep.completed == 0 and rep.loss.size == 0


def test_train_reduces_loss_and_is_reproducible():
    p = heat_problem()
    m = make_gen("SineHeat", 4, 0, p.domain.as_tuple(), seed=0)
    cfg = small_config(iterations=40)
    out1, r1 = train(m, p, cfg)
    out2, r2 = train(m, p, cfg)
    assert r1.loss.size == 40 and np.all(np.isfinite(r1.loss))
    assert r1.loss[-1] < r1.loss[0]
    assert np.array_equal(r1.loss, r2.loss)
    assert np.array_equal(flatten(out1).values, flatten(out2).values)
    # the input model is not mutated
    assert not np.array_equal(flatten(out1).values, flatten(m).values)


def test_progress_called_every_iteration():
    p = burgers_problem()
    m = make_gen("SineTraveling", 3, 0, p.domain.as_tuple(), seed=0)
    seen = []
    train(m, p, small_config(iterations=4), progress=lambda it, loss, terms: seen.append(it))
    assert seen == [0, 1, 2, 3]


def test_resampling_changes_points():
    p = heat_problem()
    m = make_gen("SineHeat", 3, 0, p.domain.as_tuple(), seed=0)
    _, fixed = train(m, p, small_config(iterations=6))
    _, moving = train(m, p, small_config(iterations=6, resample_every=3))
    assert np.array_equal(fixed.loss[:3], moving.loss[:3])
    assert not np.array_equal(fixed.loss[3:], moving.loss[3:])


def test_divergence_guard(monkeypatch):
    monkeypatch.setattr(training, "DIVERGENCE_LIMIT", 1e-12)
    p = heat_problem()
    m = make_gen("SineHeat", 3, 0, p.domain.as_tuple(), seed=0)
    with pytest.raises(TrainingAborted) as err:
        train(m, p, small_config(iterations=10))
    rep = err.value.report
    assert rep.status == "diverged" and rep.completed == 0
    assert err.value.diagnostics["iteration"] == 0


def test_non_finite_gradient_aborts(monkeypatch):
    p = heat_problem()
    m = make_gen("SineHeat", 3, 0, p.domain.as_tuple(), seed=0)
    real = training.loss_and_grad
    calls = []

    def poisoned(*a, **kw):
        loss, terms, g = real(*a, **kw)
        calls.append(1)
        if len(calls) == 3:
            g = g.copy()
            g[0] = np.nan
        return loss, terms, g

    monkeypatch.setattr(training, "loss_and_grad", poisoned)
    with pytest.raises(TrainingAborted) as err:
        train(m, p, small_config(iterations=10))
    assert err.value.report.completed == 2


def test_report_summary():
    p = heat_problem()
    m = make_gen("SineHeat", 3, 0, p.domain.as_tuple(), seed=0)
    _, rep = train(m, p, small_config(iterations=3))
    s = rep.summary()
    assert s["iterations"] == 3 and s["final_loss"] == rep.loss[-1] and s["status"] == "ok"
    assert s["config"]["seed"] == 3


def test_loss_and_grad_matches_compute_loss():
    p = wave_problem()
    m = make_gen("SineTraveling", 3, 0, p.domain.as_tuple(), seed=0)
    pts = sample_collocation(p, small_config())
    loss, terms, g = loss_and_grad(m, p, pts, flatten(m))
    ref, ref_terms = compute_loss(m, p, pts)
    assert loss == float(ref.v) and terms == ref_terms and g.shape == (len(flatten(m)),)


# --- evaluation ------------------------------------------------------------------------------------

def test_evaluate_exact_model():
    grid, metrics = evaluate(exact_heat(), heat_problem())
    assert metrics["rel_l2"] < 1e-10 and metrics["missing"] == 0
    assert grid.u.shape == (101, 101)


def test_evaluate_zero_model_is_one():
    _, metrics = evaluate(zero_pinn(), heat_problem())
    assert metrics["rel_l2"] == 1.0


def test_metrics_invariant_to_ordering():
    rng = np.random.default_rng(0)
    u, ref = rng.normal(size=500), rng.normal(size=500)
    perm = rng.permutation(500)
    a, b = error_metrics(u, ref), error_metrics(u[perm], ref[perm])
    assert a["max_abs"] == b["max_abs"]
    assert a["rel_l2"] == pytest.approx(b["rel_l2"], rel=1e-14)
    c = error_metrics(u.reshape(20, 25), ref.reshape(20, 25))
    assert c["rel_l2"] == pytest.approx(a["rel_l2"], rel=1e-14)


def test_metrics_skip_missing_reference():
    m = error_metrics(np.array([1.0, 2.0, 3.0]), np.array([1.0, np.nan, 4.0]))
    assert m["missing"] == 1
    assert m["max_abs"] == 1.0
    assert m["rel_l2"] == pytest.approx(1 / np.sqrt(17))


def test_identical_models_identical_report():
    p = heat_problem()
    m = make_gen("SineHeat", 4, 0, p.domain.as_tuple(), seed=0)
    rep = extrapolation_report({"a": m, "b": m}, p, nx=21, nt=41, profile_points=31)
    assert rep["regions"]["a"] == rep["regions"]["b"]
    for prof in rep["profiles"]:
        assert np.array_equal(prof["curves"]["a"], prof["curves"]["b"])
        assert prof["metrics"]["a"] == prof["metrics"]["b"]


def test_extrapolation_regions_and_profiles():
    p = heat_problem()
    rep = extrapolation_report({"exact": exact_heat()}, p, nx=21, nt=41, profile_points=41)
    assert rep["extrapolation_box"] == (0.0, 2.0, 0.0, 4.0)
    assert rep["regions"]["exact"]["extrapolation"]["rel_l2"] < 1e-10
    assert [pr["locus"] for pr in rep["profiles"]] == [0.5, 1.0]
    prof = rep["profiles"][0]
    assert prof["axis"] == "x" and prof["s"][-1] == 4.0
    assert np.array_equal(prof["in_fit"], prof["s"] <= 2.0)
    np.testing.assert_allclose(prof["curves"]["exact"], predict(exact_heat(), np.full(41, 0.5), prof["s"]))
