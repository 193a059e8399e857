import json

import numpy as np
import pytest

import drmkit

SIGMA = [[3.0, 1.0], [1.0, 2.0]]
ALPHA_TRUE = 0.3
BETA_TRUE = np.array([-0.2, -0.4])


@pytest.fixture(scope="module")
def groups():
    case = drmkit.sample_mvn([0.0, 0.0], SIGMA, 1500, 11, 0, 0)
    control = drmkit.sample_mvn([1.0, 1.0], SIGMA, 1500, 11, 0, 1)
    return [case, control]


@pytest.fixture(scope="module")
def model(groups):
    return drmkit.fit(groups, labels=["case", "control"])


def test_fit_converges_and_recovers(model):
    assert model.converged
    assert model.grad_norm <= 1e-8
    assert model.num_groups == 2
    assert model.dimension == 2
    assert model.n == 3000
    assert model.labels == ["case", "control"]
    assert model.reference == 1
    assert abs(model.alpha[0] - ALPHA_TRUE) < 0.2
    assert np.max(np.abs(model.beta[0] - BETA_TRUE)) < 0.15


def test_probability_constraints(model):
    p = np.asarray(model.p_hat)
    assert p.shape == (3000,)
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) <= 1e-8
    w = np.asarray(model.tilts())
    assert w.shape == (3000, 1)
    assert np.max(np.abs(w.T @ p - 1.0)) <= 1e-6


def test_group_bookkeeping(model, groups):
    assert model.combined.shape == (3000, 2)
    assert len(model.group_of_row) == 3000
    np.testing.assert_allclose(model.group_points("case"), groups[0])
    np.testing.assert_allclose(model.group_points(1), groups[1])
    assert float(np.asarray(model.rho)[0]) == pytest.approx(1.0)


def test_save_load_roundtrip(model, tmp_path):
    path = str(tmp_path / "model.json")
    model.save(path)
    loaded = drmkit.load(path)
    np.testing.assert_allclose(loaded.alpha, model.alpha, atol=1e-12)
    np.testing.assert_allclose(loaded.beta, model.beta, atol=1e-12)
    np.testing.assert_allclose(loaded.p_hat, model.p_hat, atol=1e-12)
    assert loaded.labels == model.labels
    assert loaded.reference == model.reference
    doc = json.loads(model.to_json())
    assert doc["schema_version"] == 1
    assert len(doc["groups"]) == 2
    assert "converged" in repr(model)


def test_predict_agrees_with_detail(model):
    x = np.array([0.5])
    y = drmkit.predict(model, x, "case", bandwidth=0.3)
    detail = drmkit.predict_detail(model, x, "case", bandwidth=0.3)
    weights = np.asarray(detail["weights"])
    candidates = np.asarray(detail["candidates"])
    assert weights.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(weights >= 0)
    assert detail["y_hat"] == pytest.approx(float(weights @ candidates))
    assert y == pytest.approx(detail["y_hat"])
    assert candidates.min() <= y <= candidates.max()

    queries = np.array([[0.5], [-0.5], [1.0]])
    batch = np.asarray(drmkit.predict_batch(model, queries, "case", bandwidth=0.3))
    assert batch.shape == (3,)
    assert batch[0] == pytest.approx(y)
    by_index = np.asarray(drmkit.predict_batch(model, queries, 0, bandwidth=0.3))
    np.testing.assert_allclose(batch, by_index)


def test_tilted_cdf_mass(model):
    for g in range(2):
        cdf = drmkit.tilted_cdf(model, g)
        assert cdf.total_mass() == pytest.approx(1.0, abs=1e-8)
        assert np.all(np.asarray(cdf.masses) > 0)
        assert cdf(np.array([50.0, 50.0])) == pytest.approx(1.0, abs=1e-8)
        assert cdf(np.array([-50.0, -50.0])) == 0.0
    ref = drmkit.reference_cdf(model)
    tilted_ref = drmkit.tilted_cdf(model, 1)
    np.testing.assert_allclose(ref.masses, tilted_ref.masses, atol=1e-12)


def test_tilted_kde_density(model):
    kde = drmkit.tilted_kde(model, "case", bandwidth=0.4)
    assert kde.bandwidth == pytest.approx(0.4)
    center = kde(np.array([0.0, 0.0]))
    tail = kde(np.array([8.0, 8.0]))
    assert center > 0
    assert tail < center


def test_nadaraya_watson_matches_numpy():
    rng = np.random.default_rng(3)
    sample = np.column_stack([rng.normal(size=40), rng.normal(size=40)])
    h = np.asarray(drmkit.nw_default_bandwidths(sample))
    assert h.shape == (1,)
    assert h[0] > 0
    x = np.array([0.3])
    got = drmkit.nadaraya_watson(sample, x, h)
    weights = np.exp(-0.5 * ((sample[:, 0] - x[0]) / h[0]) ** 2)
    expected = weights @ sample[:, 1] / weights.sum()
    assert got == pytest.approx(expected, rel=1e-10)


def test_ols_matches_lstsq():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 2))
    y = 1.0 + 0.5 * X[:, 0] - 0.3 * X[:, 1] + 0.1 * rng.normal(size=60)
    sample = np.column_stack([X, y])
    fit = drmkit.ols_fit(sample)
    design = np.column_stack([np.ones(60), X])
    expected, *_ = np.linalg.lstsq(design, y, rcond=None)
    np.testing.assert_allclose(fit["coef"], expected, atol=1e-10)
    np.testing.assert_allclose(fit["fitted"], design @ expected, atol=1e-10)
    np.testing.assert_allclose(fit["residuals"], y - design @ expected, atol=1e-10)


def test_gof_report_shape():
    groups = [drmkit.sample_mvn([0.0, 0.0], SIGMA, 150, 22, 0, 0),
              drmkit.sample_mvn([1.0, 1.0], SIGMA, 150, 22, 0, 1)]
    model = drmkit.fit(groups, labels=["case", "control"])
    report = drmkit.gof_report(model, groups, labels=["case", "control"],
                               bandwidth=0.3, candidates="group")
    assert report["alpha"] == pytest.approx(0.10)
    assert report["k"] == pytest.approx(2.0)
    assert len(report["groups"]) == 2
    for g in report["groups"]:
        for key in ("label", "size", "x_count", "r2_alpha_k", "r2_1", "r2_2",
                    "r2_3", "r2_3_median", "r2_3_meansq", "max_abs_gap",
                    "mse", "mae", "predictions", "residuals", "plot_pairs"):
            assert key in g
        assert 0.0 <= g["r2_alpha_k"] <= 1.0
        assert 0 <= g["x_count"] <= g["size"]
        assert g["mse"]["semiparametric"] > 0
        assert g["mse"]["ols"] > 0
        assert len(g["predictions"]) == g["size"]


def test_gof_identical_groups_fit_well():
    a = drmkit.sample_mvn([0.0, 0.0], SIGMA, 120, 21, 0, 0)
    b = drmkit.sample_mvn([0.0, 0.0], SIGMA, 120, 21, 0, 1)
    m = drmkit.fit([a, b])
    report = drmkit.gof_report(m, [a, b], regression=False, nw=False)
    for g in report["groups"]:
        assert g["r2_alpha_k"] >= 0.9


def test_wald_tests(model):
    tests = drmkit.wald_tests(model)
    assert len(tests["per_group"]) == 1
    per = tests["per_group"][0]
    assert per["group"] == "case"
    assert per["dof"] == 2
    assert per["statistic"] > 0
    assert per["p_value"] < 1e-6
    joint = tests["joint"]
    assert joint["dof"] == 2
    assert joint["p_value"] < 1e-6


def test_asymptotic_covariance(model):
    cov = drmkit.asymptotic_covariance(model)
    sigma = np.asarray(cov["sigma"])
    assert sigma.shape == (3, 3)
    np.testing.assert_allclose(sigma, sigma.T, atol=1e-10)
    assert np.all(np.diag(sigma) > 0)
    se = np.asarray(cov["se"])
    assert se.shape == (3,)
    assert np.all(se > 0)
    np.testing.assert_allclose(se, np.sqrt(np.diag(sigma) / cov["n"]))
    alt = drmkit.asymptotic_covariance(model, form="alternative")
    np.testing.assert_allclose(np.asarray(alt["sigma"]),
                               np.asarray(cov["sigma_alt"]), atol=1e-10)


def test_sampler_determinism_and_moments():
    a = drmkit.sample_mvn([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]], 4000, 5, 0, 0)
    b = drmkit.sample_mvn([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]], 4000, 5, 0, 0)
    c = drmkit.sample_mvn([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]], 4000, 5, 0, 1)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    np.testing.assert_allclose(a.mean(axis=0), [1.0, -1.0], atol=0.12)
    np.testing.assert_allclose(np.cov(a.T), [[2.0, 0.5], [0.5, 1.0]], atol=0.2)

    t = drmkit.sample_mvcauchy([0.0], [[1.0]], 500, 6)
    assert t.shape == (500, 1)
    assert np.median(np.abs(t)) < 5.0

    v1, v2, v3 = [0.0, 0.0], [6.0, 0.0], [-3.0, 4.0]
    tri = drmkit.sample_triangle_uniform(v1, v2, v3, 300, 7)
    assert tri.shape == (300, 2)
    T = np.column_stack([np.subtract(v2, v1), np.subtract(v3, v1)])
    bary = np.linalg.solve(T, (tri - np.asarray(v1)).T).T
    assert np.all(bary >= -1e-9)
    assert np.all(bary.sum(axis=1) <= 1 + 1e-9)


SCENARIO = """
replications = 4
seed = 97
bandwidth = 0.3
gof = on
regression = off
nw = off

[group case]
family = mvn
mean = 0 0
cov = 3 1; 1 2
n = 80

[group control]
family = mvn
mean = 1 1
cov = 3 1; 1 2
n = 80
reference = on
"""


def test_run_study_deterministic():
    one = drmkit.run_study(SCENARIO)
    again = drmkit.run_study(SCENARIO)
    threaded = drmkit.run_study(SCENARIO, threads=2)
    assert one == again
    assert one == threaded
    lines = one.strip().splitlines()
    assert lines[0].startswith("replication,group,fit_ok,converged")
    assert "r2_alpha_k" in lines[0]
    # 4 replications x 2 groups plus mean and median rows per group.
    assert len(lines) == 1 + 4 * 2 + 4
    reseeded = drmkit.run_study(SCENARIO, seed=98)
    assert reseeded != one


def test_input_errors():
    data = drmkit.sample_mvn([0.0, 0.0], SIGMA, 50, 8)
    with pytest.raises(ValueError):
        drmkit.fit([data])
    with pytest.raises(ValueError):
        drmkit.fit([data, data], labels=["only-one"])
    m = drmkit.fit([data, drmkit.sample_mvn([1.0, 1.0], SIGMA, 50, 8, 0, 1)])
    with pytest.raises(ValueError):
        drmkit.predict(m, np.array([0.0]), "no-such-group")
    with pytest.raises(ValueError):
        drmkit.predict(m, np.array([0.0]), 0, bandwidth=-1.0)
    with pytest.raises(ValueError):
        drmkit.tilted_kde(m, 0, bandwidth=0.0)
