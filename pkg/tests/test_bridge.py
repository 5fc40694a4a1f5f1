import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize

import proxidose as px
from proxidose.bridge import (
    block_gram,
    mmr_objective,
    penalty_weight,
    resolve_lengthscales,
)
from proxidose.errors import ConfigError, DegenerateInputError

RNG = np.random.default_rng(42)


def toy_assignment():
    return px.ProxyAssignment(("A",), "Y", "Z", "W", "given")


def toy_dataset(n, seed=0, noise=0.3):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n)
    a = 0.7 * u + rng.standard_normal(n)
    w = u + rng.standard_normal(n)
    z = u + rng.standard_normal(n)
    y = np.sin(a) + 0.5 * w + noise * rng.standard_normal(n)
    return px.Dataset.from_columns(
        [("A", "a", a), ("W", "a", w), ("Z", "a", z), ("Y", "y", y)]
    )


def fit_kernels(dataset, config, assignment):
    config = px.bridge.with_lengthscales(config, dataset, assignment)
    x_aw = np.column_stack([dataset.column("A"), dataset.column("W")])
    x_az = np.column_stack([dataset.column("A"), dataset.column("Z")])
    k_m = block_gram(x_aw, x_aw, 1, config.lengthscale_dose, config.lengthscale_w)
    k_g = block_gram(x_az, x_az, 1, config.lengthscale_dose, config.lengthscale_z)
    return config, k_m, k_g


# ------------------------------------------------------------- median trick


def test_median_trick_three_scalars():
    # pairwise squared distances of {0,1,2} are {1, 4, 1}
    assert px.median_trick(np.array([0.0, 1.0, 2.0])) == pytest.approx(1.0)


def test_median_trick_single_pair():
    assert px.median_trick(np.array([0.0, 3.0])) == pytest.approx(9.0)


def test_median_trick_identical_points_error():
    with pytest.raises(DegenerateInputError):
        px.median_trick(np.ones(10))


def test_median_trick_subsample_cap():
    values = np.concatenate([np.zeros(3000), np.ones(3000)])
    assert px.median_trick(values) == pytest.approx(1.0)


# -------------------------------------------------------------------- gram


def test_gram_unit_diagonal():
    x = RNG.standard_normal((20, 2))
    k = px.gram(x, x, 1.7)
    assert np.allclose(np.diag(k), 1.0)
    assert np.allclose(k, k.T)


def test_gram_closed_form_half():
    ls = 2.5
    x = np.array([[0.0], [math.sqrt(ls * math.log(2.0))]])
    k = px.gram(x, x, ls)
    assert k[0, 1] == pytest.approx(0.5)


def test_gram_positive_semidefinite():
    x = RNG.standard_normal((50, 3))
    k = px.gram(x, x, px.median_trick(x))
    assert np.linalg.eigvalsh(k).min() >= -1e-10


# -------------------------------------------------------------- bridge fits


def test_outcome_bridge_huge_penalty_shrinks_to_zero():
    ds = toy_dataset(60)
    h = px.fit_outcome_bridge(ds, toy_assignment(), px.KernelConfig(reg_h=1e6))
    assert np.linalg.norm(h.alpha) < 1e-4
    assert np.max(np.abs(h.at_dose([0.0], ds.column("W")))) < 1e-2


def test_outcome_bridge_zero_target_gives_zero_alpha():
    ds = toy_dataset(40)
    zeroed = px.Dataset.from_columns(
        [
            ("A", "a", ds.column("A")),
            ("W", "a", ds.column("W")),
            ("Z", "a", ds.column("Z")),
            ("Y", "y", np.zeros(ds.n)),
        ]
    )
    h = px.fit_outcome_bridge(zeroed, toy_assignment(), px.KernelConfig())
    assert np.allclose(h.alpha, 0.0)


def _iterative_minimizer(k_resid, k_repr, target, ridge):
    n = len(target)

    def objective(alpha):
        return mmr_objective(k_resid, k_repr, target, ridge, alpha)

    def grad(alpha):
        return (2.0 / n**2) * (
            k_repr @ (k_resid @ (k_repr @ alpha - target))
            + ridge * (k_repr @ alpha)
        )

    result = minimize(
        objective,
        np.zeros(n),
        jac=grad,
        method="L-BFGS-B",
        options={"maxiter": 20_000, "ftol": 1e-18, "gtol": 1e-14},
    )
    return result.x


def test_closed_form_matches_iterative_minimizer():
    ds = toy_dataset(40, seed=3)
    config, k_m, k_g = fit_kernels(ds, px.KernelConfig(reg_h=0.1), toy_assignment())
    h = px.fit_outcome_bridge(ds, toy_assignment(), config)
    ridge = penalty_weight(config.reg_h, ds.n)
    alpha_it = _iterative_minimizer(k_g, k_m, ds.column("Y"), ridge)
    assert np.max(np.abs(k_m @ h.alpha - k_m @ alpha_it)) < 1e-4
    assert mmr_objective(k_g, k_m, ds.column("Y"), ridge, h.alpha) <= (
        mmr_objective(k_g, k_m, ds.column("Y"), ridge, alpha_it) + 1e-8
    )


def test_gradient_matches_finite_differences():
    ds = toy_dataset(30, seed=5)
    config, k_m, k_g = fit_kernels(ds, px.KernelConfig(reg_h=0.2), toy_assignment())
    y = ds.column("Y")
    ridge = penalty_weight(config.reg_h, ds.n)
    h = px.fit_outcome_bridge(ds, toy_assignment(), config)
    rng = np.random.default_rng(0)
    alpha = h.alpha + 0.05 * rng.standard_normal(ds.n)
    n = ds.n
    analytic = (2.0 / n**2) * (
        k_m @ (k_g @ (k_m @ alpha - y)) + ridge * (k_m @ alpha)
    )
    eps = 1e-6
    for idx in rng.choice(n, size=5, replace=False):
        bumped_up, bumped_dn = alpha.copy(), alpha.copy()
        bumped_up[idx] += eps
        bumped_dn[idx] -= eps
        fd = (
            mmr_objective(k_g, k_m, y, ridge, bumped_up)
            - mmr_objective(k_g, k_m, y, ridge, bumped_dn)
        ) / (2 * eps)
        assert analytic[idx] == pytest.approx(fd, rel=1e-4, abs=1e-12)


def test_stationarity_residual_is_tiny():
    ds = toy_dataset(80, seed=9)
    config, k_m, k_g = fit_kernels(ds, px.KernelConfig(), toy_assignment())
    h = px.fit_outcome_bridge(ds, toy_assignment(), config)
    y = ds.column("Y")
    n = ds.n
    ridge = penalty_weight(config.reg_h, n)
    grad = (2.0 / n**2) * (
        k_m @ (k_g @ (k_m @ h.alpha - y)) + ridge * (k_m @ h.alpha)
    )
    assert np.linalg.norm(grad) <= 1e-6 * np.linalg.norm(y)


def test_treatment_bridge_constant_target():
    ds = toy_dataset(50, seed=7)
    prop = px.PropensityEstimate(
        values=np.ones(ds.n),
        bandwidth_a=1.0,
        bandwidth_w=1.0,
        floored=np.zeros(ds.n, dtype=bool),
    )
    q = px.fit_treatment_bridge(
        ds, toy_assignment(), px.KernelConfig(reg_q=1e-8), prop
    )
    x_az = np.column_stack([ds.column("A"), ds.column("Z")])
    fitted = q.alpha @ block_gram(
        x_az, x_az, 1, q.lengthscale_dose, q.lengthscale_proxy
    )
    assert np.max(np.abs(fitted - 1.0)) < 1e-2


def test_treatment_bridge_huge_penalty():
    ds = toy_dataset(50, seed=8)
    prop = px.estimate_propensity(ds, ("A",), "W")
    q = px.fit_treatment_bridge(
        ds, toy_assignment(), px.KernelConfig(reg_q=1e6), prop
    )
    assert np.max(np.abs(q.at_dose([0.5], ds.column("Z")))) < 1e-2


def test_treatment_bridge_matches_iterative_minimizer():
    ds = toy_dataset(40, seed=11)
    config, k_m, k_g = fit_kernels(ds, px.KernelConfig(reg_q=0.3), toy_assignment())
    prop = px.estimate_propensity(ds, ("A",), "W")
    q = px.fit_treatment_bridge(ds, toy_assignment(), config, prop)
    target = 1.0 / prop.values
    ridge = penalty_weight(config.reg_q, ds.n)
    alpha_it = _iterative_minimizer(k_m, k_g, target, ridge)
    assert np.max(np.abs(k_g @ q.alpha - k_g @ alpha_it)) < 1e-4


# -------------------------------------------------------------- propensity


def test_propensity_matches_marginal_when_independent():
    rng = np.random.default_rng(1)
    n = 5000
    ds = px.Dataset.from_columns(
        [
            ("A", "a", rng.standard_normal(n)),
            ("W", "a", rng.standard_normal(n)),
        ]
    )
    prop = px.estimate_propensity(ds, ("A",), "W")
    # independent a and w: the conditional density at 0 is the N(0,1) height
    a_near_zero = np.argsort(np.abs(ds.column("A")))[:200]
    est = prop.values[a_near_zero].mean()
    assert est == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=0.05)


def test_propensity_floor_and_finiteness():
    rng = np.random.default_rng(2)
    n = 100
    ds = px.Dataset.from_columns(
        [
            ("A", "a", np.zeros(n)),
            ("W", "a", rng.standard_normal(n)),
        ]
    )
    prop = px.estimate_propensity(ds, ("A",), "W")
    assert np.all(np.isfinite(prop.values))
    assert np.all(prop.values >= prop.floor)


def test_propensity_deterministic_bandwidths():
    ds = toy_dataset(200, seed=13)
    p1 = px.estimate_propensity(ds, ("A",), "W")
    p2 = px.estimate_propensity(ds, ("A",), "W")
    assert (p1.bandwidth_a, p1.bandwidth_w) == (p2.bandwidth_a, p2.bandwidth_w)
    assert np.array_equal(p1.values, p2.values)


def test_propensity_degenerate_w_errors():
    ds = px.Dataset.from_columns(
        [("A", "a", np.arange(40.0)), ("W", "a", np.ones(40))]
    )
    with pytest.raises(DegenerateInputError):
        px.estimate_propensity(ds, ("A",), "W")


def test_propensity_needs_samples():
    ds = toy_dataset(20)
    with pytest.raises(ConfigError):
        px.estimate_propensity(ds, ("A",), "W")


# ----------------------------------------------------------------- predict


def test_predict_zero_alpha():
    ds = toy_dataset(30)
    h = px.fit_outcome_bridge(ds, toy_assignment(), px.KernelConfig())
    zeroed = px.BridgeModel(
        kind=h.kind,
        anchors=h.anchors,
        alpha=np.zeros(ds.n),
        lengthscale_dose=h.lengthscale_dose,
        lengthscale_proxy=h.lengthscale_proxy,
        dose_names=h.dose_names,
        proxy_name=h.proxy_name,
        target_name=h.target_name,
    )
    assert px.predict(zeroed, [0.3], 0.7) == 0.0


def test_predict_unit_vector_at_anchor():
    ds = toy_dataset(30)
    h = px.fit_outcome_bridge(ds, toy_assignment(), px.KernelConfig())
    alpha = np.zeros(ds.n)
    alpha[0] = 1.0
    unit = px.BridgeModel(
        kind=h.kind,
        anchors=h.anchors,
        alpha=alpha,
        lengthscale_dose=h.lengthscale_dose,
        lengthscale_proxy=h.lengthscale_proxy,
        dose_names=h.dose_names,
        proxy_name=h.proxy_name,
    )
    a0, w0 = h.anchors[0]
    assert px.predict(unit, [a0], w0) >= 1.0  # self kernel is exactly 1
    others = px.gram(h.anchors, h.anchors[:1], 1.0)
    assert px.predict(unit, [a0], w0) == pytest.approx(1.0, abs=1e-12)


def test_predict_linear_in_alpha():
    ds = toy_dataset(25, seed=21)
    h = px.fit_outcome_bridge(ds, toy_assignment(), px.KernelConfig())
    rng = np.random.default_rng(3)
    other = rng.standard_normal(ds.n)
    combo = px.BridgeModel(
        kind=h.kind, anchors=h.anchors, alpha=h.alpha + other,
        lengthscale_dose=h.lengthscale_dose,
        lengthscale_proxy=h.lengthscale_proxy,
        dose_names=h.dose_names, proxy_name=h.proxy_name,
    )
    only_other = px.BridgeModel(
        kind=h.kind, anchors=h.anchors, alpha=other,
        lengthscale_dose=h.lengthscale_dose,
        lengthscale_proxy=h.lengthscale_proxy,
        dose_names=h.dose_names, proxy_name=h.proxy_name,
    )
    lhs = px.predict(combo, [0.2], -0.4)
    rhs = px.predict(h, [0.2], -0.4) + px.predict(only_other, [0.2], -0.4)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


# --------------------------------------------------------------- semantics


def test_bridge_matches_kernel_ridge_without_confounding():
    # no latent confounder and a pure-noise Z: the outcome bridge estimates
    # the regression function of Y on (A, W), so it should agree with a
    # direct kernel ridge regression fitted independently here
    rng = np.random.default_rng(17)
    n = 400
    a = rng.uniform(-2, 2, n)
    w = rng.uniform(-2, 2, n)
    z = rng.standard_normal(n)
    y = np.sin(a) + 0.5 * w + 0.1 * rng.standard_normal(n)
    ds = px.Dataset.from_columns(
        [("A", "a", a), ("W", "a", w), ("Z", "a", z), ("Y", "y", y)]
    )
    h = px.fit_outcome_bridge(ds, toy_assignment(), px.KernelConfig(reg_h=0.05))

    x = np.column_stack([a, w])
    k = block_gram(x, x, 1, h.lengthscale_dose, h.lengthscale_proxy)
    beta = np.linalg.solve(k + 1e-3 * n * np.eye(n), y)

    grid_a = np.linspace(-1, 1, 5)
    grid_w = np.linspace(-1, 1, 5)
    diffs = []
    for ga in grid_a:
        queries = np.column_stack([np.full(5, ga), grid_w])
        krr = beta @ block_gram(x, queries, 1, h.lengthscale_dose, h.lengthscale_proxy)
        bridge_vals = h.at_dose([ga], grid_w)
        diffs.append(np.abs(krr - bridge_vals))
    assert np.mean(diffs) < 0.1


def test_bridge_model_json_roundtrip(tmp_path):
    ds = toy_dataset(35)
    h = px.fit_outcome_bridge(ds, toy_assignment(), px.KernelConfig())
    path = tmp_path / "model.json"
    h.save(path)
    back = px.BridgeModel.load(path)
    assert back.kind == h.kind
    assert back.dose_names == h.dose_names
    assert np.array_equal(back.alpha, h.alpha)
    assert np.array_equal(back.anchors, h.anchors)
    w = ds.column("W")
    assert np.allclose(back.at_dose([0.1], w), h.at_dose([0.1], w))
    doc = json.loads(h.to_json())
    assert doc["proxy_name"] == "W" and doc["target_name"] == "Y"


def test_default_regularizers_table():
    assert px.default_regularizers(("A_3",), "Y_1") == (0.05, 0.20)
    assert px.default_regularizers("A_2", "Y_2") == (0.20, 1.00)
    assert px.default_regularizers(("A_1", "A_3"), "Y_1") == (0.20, 1.00)
    assert px.default_regularizers(("A_9",), "Y_9") == (0.2, 0.2)


def test_kernel_config_validation():
    with pytest.raises(ConfigError):
        px.KernelConfig(reg_h=0.0)
    with pytest.raises(ConfigError):
        px.KernelConfig(lengthscale_dose=-1.0)


def test_resolve_lengthscales_doubles_median():
    rng = np.random.default_rng(4)
    dose = rng.standard_normal((100, 1))
    w = rng.standard_normal(100)
    z = rng.standard_normal(100)
    config = resolve_lengthscales(px.KernelConfig(), dose, w, z)
    assert config.lengthscale_dose == pytest.approx(2 * px.median_trick(dose))
    assert config.lengthscale_w == pytest.approx(2 * px.median_trick(w))
