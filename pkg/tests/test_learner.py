import json

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from sklearn.svm import SVC

from popforge.errors import DegenerateData, SingleClass, TooFewMinoritySamples, UntrainedModel
from popforge.gfcc import FeatureVector
from popforge.learner import (
    GridSpec,
    fit_platt,
    fit_svc,
    load_model,
    platt_proba,
    predict_proba,
    rbf_kernel,
    save_model,
    smo_solve,
    smote,
    stratified_folds,
    train,
)

SMALL_GRID = GridSpec(C_values=(0.1, 1.0, 10.0), gamma_values=(0.1, "1/d", 1.0), folds=5, seed=0)


def toy_set(rng, n=40, margin=2.0):
    """Two 2-D classes separated by a gap of ``margin`` along the first axis."""
    half = n // 2
    pos = np.column_stack([rng.uniform(margin / 2, margin / 2 + 3, half), rng.uniform(-3, 3, half)])
    neg = np.column_stack([rng.uniform(-margin / 2 - 3, -margin / 2, half), rng.uniform(-3, 3, half)])
    X = np.vstack([pos, neg])
    y = np.r_[np.ones(half, dtype=int), np.zeros(half, dtype=int)]
    return X, y


def point_segment_distance(p, a, b):
    ab = b - a
    denom = ab @ ab
    u = 0.0 if denom == 0 else np.clip((p - a) @ ab / denom, 0, 1)
    return np.linalg.norm(p - (a + u * ab))


# ---------------------------------------------------------------- SMOTE


def test_smote_parity_and_originals(rng):
    X = rng.normal(size=(50, 3))
    y = np.r_[np.ones(10, dtype=int), np.zeros(40, dtype=int)]
    X_before = X.copy()
    Xr, yr = smote(X, y, k=5, seed=1)
    assert np.sum(yr == 1) == 40 and np.sum(yr == 0) == 40
    np.testing.assert_array_equal(Xr[:50], X_before)
    np.testing.assert_array_equal(yr[:50], y)
    np.testing.assert_array_equal(X, X_before)


@settings(max_examples=30, deadline=None)
@given(st.integers(6, 25), st.integers(0, 2**31 - 1), st.integers(1, 5))
def test_smote_convexity(n_min, seed, k):
    rng = np.random.default_rng(seed)
    Xm = rng.normal(size=(n_min, 4))
    X = np.vstack([Xm, rng.normal(size=(n_min + 17, 4))])
    y = np.r_[np.ones(n_min, dtype=int), np.zeros(n_min + 17, dtype=int)]
    Xr, _ = smote(X, y, k=k, seed=seed)
    # recompute neighbour sets by brute force
    D = cdist(Xm, Xm)
    np.fill_diagonal(D, np.inf)
    neigh = np.argsort(D, axis=1, kind="stable")[:, :k]
    for row in Xr[X.shape[0]:]:
        best = min(
            point_segment_distance(row, Xm[i], Xm[j]) for i in range(n_min) for j in neigh[i]
        )
        assert best < 1e-9


def test_smote_balanced_noop_and_determinism(rng):
    X = rng.normal(size=(20, 2))
    y = np.r_[np.ones(10, dtype=int), np.zeros(10, dtype=int)]
    Xr, yr = smote(X, y)
    np.testing.assert_array_equal(Xr, X)
    np.testing.assert_array_equal(yr, y)
    y2 = np.r_[np.ones(7, dtype=int), np.zeros(13, dtype=int)]
    a, b = smote(X, y2, seed=3), smote(X, y2, seed=3)
    np.testing.assert_array_equal(a[0], b[0])


def test_smote_errors(rng):
    X = rng.normal(size=(10, 2))
    with pytest.raises(SingleClass):
        smote(X, np.ones(10, dtype=int))
    with pytest.raises(TooFewMinoritySamples):
        smote(X, np.r_[np.ones(3, dtype=int), np.zeros(7, dtype=int)], k=5)


# ---------------------------------------------------------------- SVM solver


def dual_qp_oracle(X, y, C, gamma):
    """Solve the SVM dual with a generic convex solver."""
    K = rbf_kernel(X, X, gamma)
    Q = (y[:, None] * y[None, :]) * K
    L = np.linalg.cholesky(Q + 1e-10 * np.eye(len(y)))
    a = cp.Variable(len(y))
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(L.T @ a) - cp.sum(a)), [a >= 0, a <= C, y @ a == 0])
    prob.solve()
    return prob.value


def test_smo_objective_matches_qp_oracle(rng):
    X = rng.normal(size=(60, 2))
    y = np.where(X[:, 0] + 0.5 * rng.normal(size=60) > 0, 1.0, -1.0)
    for C, gamma in ((1.0, 0.5), (10.0, 2.0)):
        res = smo_solve(X, y, C, gamma, eps=1e-6)
        assert res.converged
        assert res.objective == pytest.approx(dual_qp_oracle(X, y, C, gamma), rel=1e-4, abs=1e-4)


def test_svc_matches_sklearn(rng):
    X = rng.normal(size=(150, 3))
    y = np.where(np.sum(X**2, axis=1) + 0.3 * rng.normal(size=150) > 3, 1.0, -1.0)
    w = np.where(y > 0, 2.0, 0.7)
    ours = fit_svc(X, y, 3.0, 0.4, sample_weight=w, eps=1e-6)
    ref = SVC(C=3.0, gamma=0.4, tol=1e-6).fit(X, y, sample_weight=w)
    Xt = rng.normal(size=(300, 3))
    d_ours, d_ref = ours.decision_function(Xt), ref.decision_function(Xt)
    assert np.max(np.abs(d_ours - d_ref)) < 1e-3
    assert np.all(np.sign(d_ours) == np.sign(d_ref))


def test_separable_toy_training_accuracy(rng):
    X, y = toy_set(rng)
    model = train(X, y, SMALL_GRID)
    assert np.all(model.predict(X) == y)


# ---------------------------------------------------------------- Platt


def test_platt_matches_scipy_oracle(rng):
    d = np.r_[rng.normal(1.0, 1.0, 80), rng.normal(-1.0, 1.0, 120)]
    lab = np.r_[np.ones(80), np.zeros(120)]
    A, B = fit_platt(d, lab)
    t = np.where(lab > 0, 81 / 82, 1 / 122)

    def nll(v):
        p = 1 / (1 + np.exp(v[0] * d + v[1]))
        return -np.sum(t * np.log(p) + (1 - t) * np.log1p(-p))

    ref = minimize(nll, [0.0, 0.0], method="BFGS", options={"gtol": 1e-10}).x
    assert A == pytest.approx(ref[0], abs=1e-4) and B == pytest.approx(ref[1], abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=50))
def test_platt_range_and_monotone(values):
    d = np.sort(np.array(values))
    lab = (np.arange(d.size) >= d.size // 2).astype(int)
    A, B = fit_platt(d, lab)
    assert A < 0
    p = platt_proba(d, A, B)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.diff(p) >= 0)
    grid = np.linspace(-5, 5, 101)
    assert np.all(np.diff(platt_proba(grid, A, B)) > 0)


def test_platt_extreme_decisions_no_overflow():
    p = platt_proba(np.array([-1e6, 0.0, 1e6]), -2.0, 0.1)
    assert np.all(np.isfinite(p)) and p[0] == 0.0 and p[2] == 1.0


# ---------------------------------------------------------------- trained detector


@pytest.fixture(scope="module")
def toy_model():
    X, y = toy_set(np.random.default_rng(7))
    return train(X, y, SMALL_GRID), X, y


def test_heldout_toy_points(toy_model):
    model, _, _ = toy_model
    Xh, yh = toy_set(np.random.default_rng(99), n=60)
    p = model.predict_proba(Xh)
    assert np.all(p[yh == 1] > 0.5) and np.all(p[yh == 0] < 0.5)


def test_threshold_half_agrees_with_decision_sign(toy_model, rng):
    model, _, _ = toy_model
    Xq = rng.uniform(-6, 6, size=(500, 2))
    d = model.decision_function(Xq)
    p = model.predict_proba(Xq)
    # Platt intercept shifts the 0.5 crossing to d = -B/A
    assert np.all((p >= 0.5) == (d >= -model.platt_b / model.platt_a))
    assert np.all(np.diff(p[np.argsort(d)]) >= 0)


def test_train_deterministic(toy_model):
    model, X, y = toy_model
    again = train(X, y, SMALL_GRID)
    assert json.dumps(again.to_dict(), sort_keys=True) == json.dumps(model.to_dict(), sort_keys=True)


def test_duplicated_rows_same_cell(rng):
    X = rng.normal(size=(80, 3))
    y = (X[:, 0] + X[:, 1] ** 2 + 0.7 * rng.normal(size=80) > 1).astype(int)
    a = train(X, y, SMALL_GRID)
    b = train(np.vstack([X, X]), np.r_[y, y], SMALL_GRID)
    assert (a.C, a.gamma) == (b.C, b.gamma)


def test_model_roundtrip(toy_model, tmp_path, rng):
    model, _, _ = toy_model
    back = load_model(save_model(model, tmp_path / "m.json"))
    Xq = rng.normal(size=(20, 2))
    np.testing.assert_array_equal(back.predict_proba(Xq), model.predict_proba(Xq))


def test_predict_proba_api(toy_model):
    model, X, _ = toy_model
    p = predict_proba(model, X[0])
    assert isinstance(p, float) and 0 <= p <= 1
    with pytest.raises(UntrainedModel):
        predict_proba(None, X[0])
    m3 = train(np.c_[X, X[:, 0] * 0.5 + 1], np.r_[np.ones(20), np.zeros(20)].astype(int), SMALL_GRID)
    assert 0 <= predict_proba(m3, FeatureVector(1.0, 0.0, 0.5)) <= 1


def test_zero_variance_feature_dropped(rng):
    X, y = toy_set(rng)
    Xc = np.c_[X, np.full(len(y), 3.0)]
    model = train(Xc, y, SMALL_GRID)
    assert model.feature_mask.tolist() == [True, True, False]
    assert np.all(model.predict(Xc) == y)


def test_train_errors(rng):
    X = rng.normal(size=(20, 2))
    with pytest.raises(DegenerateData):
        train(X, np.ones(20, dtype=int))
    with pytest.raises(DegenerateData):
        train(np.full((20, 2), 1.0), np.r_[np.ones(10), np.zeros(10)].astype(int))
    with pytest.raises(DegenerateData):
        train(X[:6], np.r_[np.ones(3), np.zeros(3)].astype(int))


def test_stratified_folds_balanced():
    y = np.r_[np.ones(23), np.zeros(57)].astype(int)
    f = stratified_folds(y, 5, seed=1)
    for k in range(5):
        assert abs(np.sum(y[f == k]) - 23 / 5) < 1
    assert np.array_equal(f, stratified_folds(y, 5, seed=1))


def test_grouped_folds_keep_duplicates_together():
    y = np.r_[np.ones(20), np.zeros(30)].astype(int)
    groups = np.r_[np.arange(50), np.arange(50)]
    f = stratified_folds(np.r_[y, y], 5, seed=2, groups=groups)
    assert np.array_equal(f[:50], f[50:])
    assert np.array_equal(f[:50], stratified_folds(y, 5, seed=2, groups=np.arange(50)))
