"""Ridge solver tests: closed-form oracles, primal/dual identities, and
selection/persistence behavior."""

import numpy as np
import pytest

from brainrecon import dataio
from brainrecon.errors import CapacityError, DataError, RankDeficiencyError
from brainrecon.ridge import (
    FitConfig,
    RidgeModel,
    Standardizer,
    fit,
    load_model,
    predict,
    save_model,
    select_lambda,
    weight_l1_per_voxel,
)


def _standardize_oracle(X, Y, scale_y=True):
    mx, sx = X.mean(0), np.maximum(X.std(0), 1e-8)
    my = Y.mean(0)
    sy = np.maximum(Y.std(0), 1e-8) if scale_y else np.ones(Y.shape[1])
    return (X - mx) / sx, (Y - my) / sy, (mx, sx, my, sy)


def test_orthonormal_interpolation():
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.normal(size=(12, 4)))
    C = rng.normal(size=(4, 3))
    Y = Q @ C
    model = fit(Q, Y, FitConfig(lambda_grid=(0.0,)))
    pred = predict(model, Q)
    assert np.abs(pred - Y).max() < 1e-9


def test_hand_solved_2x2_normal_equations():
    X = np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [3.0, 0.0]])
    Y = np.array([[1.0], [2.0], [2.0], [4.0]])
    model = fit(X, Y, FitConfig(lambda_grid=(0.0,)))

    Xs, Yc, (mx, sx, my, sy) = _standardize_oracle(X, Y)
    G = Xs.T @ Xs
    a, b, c, d = G[0, 0], G[0, 1], G[1, 0], G[1, 1]
    G_inv = np.array([[d, -b], [-c, a]]) / (a * d - b * c)
    W = G_inv @ (Xs.T @ Yc)

    X_new = np.array([[1.5, 1.0], [0.5, 2.5], [3.0, 3.0]])
    expected = ((X_new - mx) / sx) @ W * sy + my
    assert np.allclose(predict(model, X_new), expected, rtol=0, atol=1e-10)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_primal_dual_equivalence(lam):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 60))
    Y = rng.normal(size=(40, 8))
    X_new = rng.normal(size=(7, 60))
    primal = fit(X, Y, FitConfig(lambda_grid=(lam,), form="primal"))
    dual = fit(X, Y, FitConfig(lambda_grid=(lam,), form="dual"))
    assert primal.form == "primal" and dual.form == "dual"
    diff = np.abs(predict(primal, X_new) - predict(dual, X_new)).max()
    assert diff < 1e-8


def test_auto_form_selection():
    rng = np.random.default_rng(2)
    tall = fit(
        rng.normal(size=(30, 5)), rng.normal(size=(30, 2)), FitConfig((1.0,))
    )
    wide = fit(
        rng.normal(size=(5, 30)), rng.normal(size=(5, 2)), FitConfig((1.0,))
    )
    assert tall.form == "primal"
    assert wide.form == "dual"


def test_training_row_recovery_at_small_lambda():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(8, 12))
    Y = rng.normal(size=(8, 3))
    model = fit(X, Y, FitConfig(lambda_grid=(1e-10,)))
    pred = predict(model, X)
    assert np.abs(pred - Y).max() < 1e-6


def test_shrinkage_limit_equals_column_means():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 10))
    Y = rng.normal(size=(50, 6)) + 5.0
    model = fit(X, Y, FitConfig(lambda_grid=(1e12,)))
    means = Y.mean(axis=0)
    for pred in (predict(model, X), predict(model, rng.normal(size=(20, 10)))):
        rel = np.abs(pred - means) / np.abs(means)
        assert rel.max() < 1e-4


def test_predict_empty_input():
    rng = np.random.default_rng(5)
    model = fit(
        rng.normal(size=(10, 4)), rng.normal(size=(10, 3)), FitConfig((1.0,))
    )
    out = predict(model, np.empty((0, 4)))
    assert out.shape == (0, 3)


def test_predict_dimension_mismatch():
    rng = np.random.default_rng(6)
    model = fit(
        rng.normal(size=(10, 4)), rng.normal(size=(10, 3)), FitConfig((1.0,))
    )
    with pytest.raises(ValueError, match="feature mismatch"):
        predict(model, np.zeros((2, 5)))


def test_nan_and_inf_inputs_rejected():
    X = np.zeros((4, 2))
    Y = np.zeros((4, 2))
    X_bad = X.copy()
    X_bad[1, 0] = np.nan
    with pytest.raises(DataError):
        fit(X_bad, Y, FitConfig((1.0,)))
    Y_bad = Y.copy()
    Y_bad[0, 1] = np.inf
    with pytest.raises(DataError):
        fit(X, Y_bad, FitConfig((1.0,)))


def test_too_few_rows_rejected():
    with pytest.raises(ValueError, match="2 training rows"):
        fit(np.ones((1, 3)), np.ones((1, 2)), FitConfig((1.0,)))


def test_rank_deficiency_at_lambda_zero():
    rng = np.random.default_rng(7)
    col = rng.normal(size=(10, 1))
    X = np.hstack([col, col, rng.normal(size=(10, 1))])
    Y = rng.normal(size=(10, 2))
    with pytest.raises(RankDeficiencyError, match="lambda > 0"):
        fit(X, Y, FitConfig(lambda_grid=(0.0,)))


def test_monotone_shrinkage():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(30, 6))
    Y = rng.normal(size=(30, 4))
    norms = []
    for lam in (0.1, 1.0, 10.0, 100.0):
        model = fit(X, Y, FitConfig(lambda_grid=(lam,), form="primal"))
        norms.append(np.linalg.norm(model.weights))
    for smaller, larger in zip(norms, norms[1:]):
        assert smaller >= larger


def test_y_standardization_affine_equivariance():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(30, 5))
    Y = rng.normal(size=(30, 4)) * np.array([1.0, 10.0, 0.1, 100.0]) + 3.0
    X_new = rng.normal(size=(12, 5))
    on = fit(X, Y, FitConfig(lambda_grid=(5.0,), standardize_y=True))
    off = fit(X, Y, FitConfig(lambda_grid=(5.0,), standardize_y=False))
    diff = np.abs(predict(on, X_new) - predict(off, X_new)).max()
    assert diff < 1e-8


def test_target_chunking_matches_unchunked():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(25, 8))
    Y = rng.normal(size=(25, 17))
    X_new = rng.normal(size=(5, 8))
    whole = fit(X, Y, FitConfig(lambda_grid=(2.0,), target_chunk=4096))
    chunked = fit(X, Y, FitConfig(lambda_grid=(2.0,), target_chunk=3))
    assert np.allclose(
        predict(whole, X_new), predict(chunked, X_new), rtol=0, atol=1e-12
    )


# --- lambda selection ---


def test_select_single_grid_value():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(30, 4))
    Y = rng.normal(size=(30, 2))
    assert select_lambda(X, Y, FitConfig(lambda_grid=(3.5,))) == 3.5


def test_select_recovers_signal():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(500, 100))
    W_true = rng.normal(size=(100, 50))
    Y = X @ W_true + 0.1 * rng.normal(size=(500, 50))
    cfg = FitConfig(lambda_grid=(1e-2, 1.0, 1e2, 1e4, 1e6), seed=0)
    model = fit(X, Y, cfg)

    X_eval = rng.normal(size=(200, 100))
    Y_eval = X_eval @ W_true + 0.1 * rng.normal(size=(200, 50))
    pred = predict(model, X_eval)
    pc = pred - pred.mean(0)
    yc = Y_eval - Y_eval.mean(0)
    r = (pc * yc).sum(0) / (
        np.linalg.norm(pc, axis=0) * np.linalg.norm(yc, axis=0)
    )
    assert r.mean() > 0.95


def test_select_tie_breaks_to_largest():
    # Constant targets make every holdout column unscorable, so all grid
    # entries tie at score 0 and the tie rule must pick the largest lambda.
    rng = np.random.default_rng(13)
    X = rng.normal(size=(40, 3))
    Y = np.full((40, 2), 7.0)
    cfg = FitConfig(lambda_grid=(0.1, 1.0, 10.0), seed=1)
    with pytest.warns(UserWarning, match="constant holdout"):
        lam = select_lambda(X, Y, cfg)
    assert lam == 10.0


def test_select_constant_column_excluded_with_warning():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(40, 3))
    Y = np.column_stack([X @ rng.normal(size=3), np.full(40, 2.0)])
    cfg = FitConfig(lambda_grid=(0.01, 1.0), seed=2)
    with pytest.warns(UserWarning, match="constant holdout"):
        select_lambda(X, Y, cfg)


def test_select_split_too_small():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(10, 2))
    Y = rng.normal(size=(10, 2))
    with pytest.raises(ValueError, match="fewer than"):
        select_lambda(X, Y, FitConfig(lambda_grid=(0.1, 1.0), holdout_fraction=0.05))


def test_select_deterministic_per_seed():
    rng = np.random.default_rng(16)
    X = rng.normal(size=(60, 5))
    Y = X @ rng.normal(size=(5, 3)) + 0.5 * rng.normal(size=(60, 3))
    cfg = FitConfig(lambda_grid=(0.01, 1.0, 100.0), seed=9)
    assert select_lambda(X, Y, cfg) == select_lambda(X, Y, cfg)


# --- weight norms ---


def _primal_model(weights, p):
    q = weights.shape[0]
    stats = Standardizer(np.zeros(p), np.ones(p))
    y_stats = Standardizer(np.zeros(q), np.ones(q))
    return RidgeModel(
        lam=1.0, x_stats=stats, y_stats=y_stats, form="primal", weights=weights
    )


def test_weight_l1_zero_weights():
    model = _primal_model(np.zeros((4, 6)), 6)
    assert np.array_equal(weight_l1_per_voxel(model), np.zeros(6))


def test_weight_l1_single_entry():
    W = np.zeros((5, 7))
    W[3, 5] = -2.0
    out = weight_l1_per_voxel(_primal_model(W, 7))
    expected = np.zeros(7)
    expected[5] = 2.0
    assert np.array_equal(out, expected)


def test_weight_l1_brute_force():
    rng = np.random.default_rng(17)
    W = rng.normal(size=(7, 4))
    out = weight_l1_per_voxel(_primal_model(W, 4))
    for j in range(4):
        assert out[j] == sum(abs(W[t, j]) for t in range(7))


def test_weight_l1_dual_matches_primal():
    rng = np.random.default_rng(18)
    X = rng.normal(size=(20, 9))
    Y = rng.normal(size=(20, 5))
    primal = fit(X, Y, FitConfig(lambda_grid=(2.0,), form="primal"))
    dual = fit(X, Y, FitConfig(lambda_grid=(2.0,), form="dual"))
    assert np.allclose(
        weight_l1_per_voxel(primal), weight_l1_per_voxel(dual), rtol=0, atol=1e-9
    )


def test_weight_l1_capacity_budget():
    rng = np.random.default_rng(19)
    X = rng.normal(size=(10, 40))
    Y = rng.normal(size=(10, 30))
    model = fit(X, Y, FitConfig(lambda_grid=(1.0,)))  # dual: p > n
    assert model.form == "dual"
    with pytest.raises(CapacityError, match="target_chunk"):
        weight_l1_per_voxel(model, budget=64)
    chunked = weight_l1_per_voxel(model, budget=64, target_chunk=7)
    full = weight_l1_per_voxel(model)
    assert np.allclose(chunked, full, rtol=0, atol=1e-10)


def test_weight_l1_raw_space():
    rng = np.random.default_rng(20)
    X = rng.normal(size=(15, 4)) * np.array([1.0, 2.0, 4.0, 8.0])
    Y = rng.normal(size=(15, 3))
    model = fit(X, Y, FitConfig(lambda_grid=(1.0,)))
    std_space = weight_l1_per_voxel(model)
    raw_space = weight_l1_per_voxel(model, raw_space=True)
    assert np.allclose(raw_space, std_space / model.x_stats.std, rtol=0, atol=0)


# --- configuration and persistence ---


def test_fit_config_validation():
    with pytest.raises(ValueError, match="non-empty"):
        FitConfig(lambda_grid=())
    with pytest.raises(ValueError, match="strictly increasing"):
        FitConfig(lambda_grid=(1.0, 1.0))
    with pytest.raises(ValueError, match="strictly increasing"):
        FitConfig(lambda_grid=(2.0, 1.0))
    with pytest.raises(ValueError, match="holdout_fraction"):
        FitConfig(lambda_grid=(1.0,), holdout_fraction=1.0)
    with pytest.raises(ValueError, match="form"):
        FitConfig(lambda_grid=(1.0,), form="banana")
    with pytest.raises(ValueError, match=">= 1"):
        FitConfig(lambda_grid=(1.0,), target_chunk=0)


def test_standardizer_floor():
    X = np.column_stack([np.ones(10), np.arange(10.0)])
    stats = Standardizer.fit(X)
    assert stats.std[0] == 1e-8
    assert stats.std[1] > 1.0


@pytest.mark.parametrize("form", ["primal", "dual"])
def test_save_load_roundtrip(tmp_path, form):
    rng = np.random.default_rng(21)
    X = rng.normal(size=(12, 6)).astype(np.float32)
    Y = rng.normal(size=(12, 4)).astype(np.float32)
    model = fit(X, Y, FitConfig(lambda_grid=(3.0,), form=form))
    model.meta = {"family": "clip_text", "subject": "sub1",
                  "train_mean_row_norm": 2.5}
    save_model(model, tmp_path / form)
    loaded = load_model(tmp_path / form)
    assert loaded.form == form
    assert loaded.lam == model.lam
    assert loaded.meta == model.meta
    X_new = rng.normal(size=(5, 6)).astype(np.float32)
    assert np.array_equal(predict(loaded, X_new), predict(model, X_new))
