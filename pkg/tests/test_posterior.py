import numpy as np
import pytest

from conftest import build, gamma_toy, sine_toy
from smoothforge.assemble import penalty_matrix
from smoothforge.errors import DataError, SchemaError
from smoothforge.posterior import (
    EdfMethod,
    PosteriorSummary,
    edf_penalty,
    edf_vbeta,
    plot_data,
    predict,
    predict_lp_matrix,
    summarize,
    thinned_indices,
)
from smoothforge.sampler import SampleStore, gibbs_run


def fake_store(B, rho=None, scale=None, mu=None):
    draws = {"b": np.asarray(B, float)}
    names = ["b"]
    if rho is not None:
        draws["rho"] = np.asarray(rho, float)
        names.append("rho")
    if scale is not None:
        draws["scale"] = np.asarray(scale, float).reshape(-1, 1)
        names.append("scale")
    if mu is not None:
        draws["mu"] = np.asarray(mu, float)
        names.append("mu")
    n = len(B)
    return SampleStore(names, draws, np.zeros(n, np.int64), np.arange(1, n + 1))


@pytest.fixture(scope="module")
def sine_run(sine_prefit):
    return gibbs_run(sine_prefit, 10_000, thin=10, seed=2, monitors=("b", "rho", "scale", "mu"))


def dense_edf(X, P, W):
    XWX = X.T @ np.diag(W) @ X
    return np.trace(np.linalg.inv(XWX + P) @ XWX)


# ---------------------------------------------------------------------------
# summaries


def test_constant_chain(sine_prefit):
    b0 = sine_prefit.b_init
    st = fake_store(np.tile(b0, (50, 1)), rho=np.zeros((50, 2)), scale=np.full(50, 0.04))
    s = summarize(st, sine_prefit)
    assert np.array_equal(s.b_hat, b0)
    assert not np.any(s.V_beta)
    res = predict(sine_prefit, s, {"x": np.linspace(0, 1, 11)})
    assert np.array_equal(res.column("lo"), res.column("hi"))


def test_single_draw(sine_prefit):
    st = fake_store(sine_prefit.b_init[None, :], rho=np.zeros((1, 2)))
    s = summarize(st, sine_prefit)
    assert not np.any(s.V_beta)


def test_summary_fields(sine_prefit, sine_run):
    s = summarize(sine_run, sine_prefit)
    assert s.n_draws == 1000
    assert np.allclose(s.V_beta, s.V_beta.T)
    assert np.linalg.eigvalsh(s.V_beta).min() > -1e-10
    assert np.allclose(s.lambda_bar, np.exp(sine_run.draws["rho"].mean(axis=0)))
    assert s.rho_stats["q2.5"].shape == (2,)
    assert np.all(s.rho_stats["q2.5"] <= s.rho_stats["q50"])
    assert 0 < s.edf_total <= sine_prefit.p
    back = PosteriorSummary.from_dict(s.to_dict())
    assert np.array_equal(back.V_beta, s.V_beta) and back.edf_term == s.edf_term


def test_schema_mismatch(sine_prefit, gamma_prefit):
    with pytest.raises(SchemaError, match="19 b columns but the prefit has p=20"):
        summarize(fake_store(np.zeros((5, 19))), sine_prefit)
    with pytest.raises(SchemaError, match="needs monitored mu"):
        summarize(fake_store(np.zeros((5, 43)), rho=np.zeros((5, 7))), gamma_prefit, EdfMethod.VBETA)
    with pytest.raises(SchemaError, match="rho"):
        summarize(fake_store(np.zeros((5, 20))), sine_prefit)
    with pytest.raises(SchemaError, match="no draws"):
        summarize(fake_store(np.zeros((0, 20))), sine_prefit)


# ---------------------------------------------------------------------------
# EDF


def test_edf_small_lambda_gives_p(sine_prefit):
    total, _ = edf_penalty(sine_prefit, np.full(2, 1e-12))
    assert abs(total - sine_prefit.p) < 1e-6


def test_edf_no_smooths():
    pf = build("y ~ x", sine_toy())
    total, per = edf_penalty(pf, np.empty(0))
    assert total == pytest.approx(2.0, abs=1e-12) and per == {}


def test_edf_large_lambda_gives_null_dim():
    pf = build("y ~ s(x)", sine_toy())
    t = pf.terms[0]
    _, per = edf_penalty(pf, np.array([1e8, 1e-8]))
    assert abs(per["s(x)"] - t.null_dim) < 0.05


def test_edf_matches_dense_oracle():
    d = sine_toy(n=50, seed=7)
    pf = build("y ~ s(x, k=8)", d)
    lam = np.array([0.3, 2.0])
    total, per = edf_penalty(pf, lam)
    assert abs(total - dense_edf(pf.X, penalty_matrix(pf, lam), np.ones(50))) < 1e-8


def test_edf_weighted_oracle():
    pf = build("y ~ s(x0) + x1", gamma_toy(n=150), "gamma")
    lam = np.exp(np.linspace(-1, 1, pf.sp_count))
    W = np.random.default_rng(0).uniform(0.2, 3.0, pf.n)
    total, _ = edf_penalty(pf, lam, W)
    assert abs(total - dense_edf(pf.X, penalty_matrix(pf, lam), W)) < 1e-8


def test_edf_partition(gamma_prefit):
    lam = np.ones(gamma_prefit.sp_count)
    XWX = gamma_prefit.X.T @ gamma_prefit.X
    F = np.linalg.solve(XWX + penalty_matrix(gamma_prefit, lam), XWX)
    total, per = edf_penalty(gamma_prefit, lam)
    parametric = np.diag(F)[gamma_prefit.parametric_idx].sum()
    assert sum(per.values()) == pytest.approx(total - parametric, abs=1e-10)


def test_edf_monotone_in_each_lambda():
    rng = np.random.default_rng(31)
    formulas = ["y ~ s(x0)", "y ~ s(x0) + s(x3)", "y ~ te(x1,x2)", "y ~ s(x0) + te(x1,x2, k=4)", "y ~ s(x0, k=6) + x3"]
    for i in range(10):
        pf = build(formulas[i % len(formulas)], gamma_toy(n=120, seed=40 + i), "gamma")
        lam = np.exp(rng.uniform(-3, 3, pf.sp_count))
        base, _ = edf_penalty(pf, lam)
        for j in range(pf.sp_count):
            up = lam.copy()
            up[j] *= 10
            assert edf_penalty(pf, up)[0] <= base + 1e-10


def test_edf_vbeta_identities(sine_prefit):
    XtX = sine_prefit.X.T @ sine_prefit.X
    phi = 0.3
    total, _ = edf_vbeta(sine_prefit, phi * np.linalg.inv(XtX), phi=phi)
    assert total == pytest.approx(sine_prefit.p, abs=1e-8)
    assert edf_vbeta(sine_prefit, np.zeros((20, 20)))[0] == 0.0
    with pytest.raises(ValueError):
        edf_vbeta(sine_prefit, np.zeros((20, 20)), phi=0.0)
    with pytest.raises(ValueError):
        edf_penalty(sine_prefit, np.array([1.0, 0.0]))


def test_vbeta_not_far_below_penalty(sine_prefit, sine_run):
    pen = summarize(sine_run, sine_prefit, EdfMethod.PENALTY)
    vb = summarize(sine_run, sine_prefit, EdfMethod.VBETA)
    assert vb.edf_total >= pen.edf_total - 0.5


def test_vbeta_gamma_uses_mu_and_scale(gamma_prefit):
    rng = np.random.default_rng(2)
    B = gamma_prefit.b_init + 0.01 * rng.normal(size=(200, 43))
    mu = np.exp(B @ gamma_prefit.X.T)
    st = fake_store(B, rho=np.zeros((200, 7)), scale=np.full(200, 0.5), mu=mu)
    s = summarize(st, gamma_prefit, EdfMethod.VBETA)
    W = np.ones(gamma_prefit.n)  # gamma/log IRLS weights are prior weights
    ref = np.trace(s.V_beta @ (gamma_prefit.X.T @ (W[:, None] * gamma_prefit.X))) / 0.5
    assert s.edf_total == pytest.approx(ref, rel=1e-10)


# ---------------------------------------------------------------------------
# prediction


def test_lp_matrix_training_data(gamma_prefit):
    d = gamma_toy()
    Xp = predict_lp_matrix(gamma_prefit, d)
    assert np.allclose(Xp, gamma_prefit.X, atol=1e-12)


def test_lp_matrix_grid_not_centred(sine_prefit):
    Xp = predict_lp_matrix(sine_prefit, {"x": np.linspace(0, 1, 301)})
    assert Xp.shape == (301, 20)
    assert np.abs(Xp[:, 1:].sum(axis=0)).max() > 1e-6
    assert np.abs(sine_prefit.X[:, 1:].sum(axis=0)).max() < 1e-10 * sine_prefit.n


def test_union_grid(union_prefit):
    Xp = predict_lp_matrix(union_prefit, {"wage": np.arange(301) / 10})
    assert Xp.shape == (301, 20)


def test_predict_on_training(sine_prefit, sine_run):
    s = summarize(sine_run, sine_prefit)
    d = sine_toy()
    res = predict(sine_prefit, s, d)
    assert np.allclose(res.column("fit"), sine_prefit.X @ s.b_hat, atol=1e-12)
    se = res.column("se")
    assert np.all(se >= 0)
    assert np.all(res.column("lo") <= res.column("fit")) and np.all(res.column("fit") <= res.column("hi"))
    assert np.allclose(res.column("hi") - res.column("lo"), 4 * se)


def test_predict_se_scalar_identity():
    pf = build("y ~ x", sine_toy())
    rng = np.random.default_rng(3)
    B = rng.normal(size=(400, 2)) * [0.3, 2.0] + [1.0, -1.0]
    s = summarize(fake_store(B), pf)
    res = predict(pf, s, {"x": np.zeros(1)})
    assert res.column("se")[0] == pytest.approx(B[:, 0].std(ddof=1), rel=1e-10)


def test_curve_draws(sine_prefit, sine_run):
    s = summarize(sine_run, sine_prefit)
    grid = {"x": np.linspace(0, 1, 31)}
    res = predict(sine_prefit, s, grid, store=sine_run, n_draws=20)
    assert res.header[-20:] == [f"draw_{i}" for i in range(1, 21)]
    Xp = predict_lp_matrix(sine_prefit, grid)
    assert np.allclose(res.column("draw_1"), Xp @ sine_run.draws["b"][49])
    assert np.allclose(res.column("draw_20"), Xp @ sine_run.draws["b"][999])
    with pytest.raises(DataError):
        predict(sine_prefit, s, grid, store=sine_run, n_draws=1001)


def test_thinned_indices():
    assert np.array_equal(thinned_indices(1000, 20), np.arange(1, 21) * 50 - 1)
    assert np.array_equal(thinned_indices(7, 7), np.arange(7))
    assert np.array_equal(thinned_indices(10, 3), [2, 5, 9])
    with pytest.raises(DataError):
        thinned_indices(5, 6)


def test_response_scale(union_prefit):
    rng = np.random.default_rng(5)
    B = union_prefit.b_init + 0.05 * rng.normal(size=(100, 20))
    s = summarize(fake_store(B, rho=np.zeros((100, 2))), union_prefit)
    grid = {"wage": np.linspace(1, 30, 12)}
    lin = predict(union_prefit, s, grid)
    resp = predict(union_prefit, s, grid, link_scale=False)
    for c in ("fit", "lo", "hi"):
        assert np.allclose(resp.column(c), 1 / (1 + np.exp(-lin.column(c))))
    assert np.array_equal(resp.column("se"), lin.column("se"))


def test_missing_newdata_variable(gamma_prefit):
    with pytest.raises(DataError, match="x3"):
        predict_lp_matrix(gamma_prefit, {k: v for k, v in gamma_toy().items() if k != "x3"})


def test_no_clamp(sine_prefit):
    with pytest.raises(DataError):
        predict_lp_matrix(sine_prefit, {"x": np.array([2.0])}, clamp=False)


def test_band_coverage(sine_prefit, sine_run):
    s = summarize(sine_run, sine_prefit)
    d = sine_toy()
    t = sine_prefit.terms[0]
    truth = np.sin(2 * np.pi * d["x"])
    truth = truth - truth.mean()
    Xt = t.predict_matrix([d["x"]])
    sl = sine_prefit.term_slice(t)
    fit = Xt @ s.b_hat[sl]
    se = np.sqrt(np.einsum("ij,jk,ik->i", Xt, s.V_beta[sl, sl], Xt))
    coverage = np.mean(np.abs(fit - truth) <= 2 * se)
    assert coverage >= 0.85


# ---------------------------------------------------------------------------
# plot data


def test_plot_data_univariate(sine_prefit, sine_run):
    s = summarize(sine_run, sine_prefit)
    res = plot_data(sine_prefit, s, "s(x)", 100)
    assert res.header == ["x", "fit", "lo", "hi", "se"]
    assert len(res.column("x")) == 100
    x = res.column("x")
    assert x[0] == sine_prefit.terms[0].knots[0].data_range[0]
    assert x[-1] == sine_prefit.terms[0].knots[0].data_range[1]
    t = sine_prefit.terms[0]
    at_train = t.X @ s.b_hat[sine_prefit.term_slice(t)]
    assert abs(at_train.mean()) < 1e-12


def test_plot_data_tensor(gamma_prefit):
    rng = np.random.default_rng(8)
    B = gamma_prefit.b_init + 0.01 * rng.normal(size=(50, 43))
    s = summarize(fake_store(B, rho=np.zeros((50, 7))), gamma_prefit)
    res = plot_data(gamma_prefit, s, "te(x1, x2)", 20)
    assert res.header[:2] == ["x1", "x2"]
    assert len(res.column("fit")) == 400
    with pytest.raises(DataError, match="unknown term"):
        plot_data(gamma_prefit, s, "s(x9)")
