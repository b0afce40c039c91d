import json

import numpy as np
import pytest

import qp_oracle
from msdclass.config import SvmConfig
from msdclass.errors import ChecksumError, ConvergenceError, DataError, ModelFormatError, SchemaVersionError
from msdclass.selection import select_top
from msdclass.svm import (HyperParams, balanced_weights, dual_objective, fit_scaler, load_model, rbf_kernel,
                          save_model, solve_dual, train_svm)


def blobs(seed=0, n=10, d=3, gap=4.0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.standard_normal((n, d)) - gap / 2, rng.standard_normal((n, d)) + gap / 2])
    return X, np.r_[-np.ones(n), np.ones(n)].astype(int)


def full_alpha(m, X, y):
    """Recover the multiplier of every training row from the stored support vectors."""
    Z = m.scaler.transform(X[:, list(m.feature_indices)])
    alpha = np.zeros(len(y))
    for sv, coef in zip(m.support_vectors, m.dual_coefs):
        i = int(np.argmin(np.sum((Z - sv) ** 2, axis=1)))
        alpha[i] = coef * y[i]
    return alpha, Z


def test_two_point_hand_qp():
    X = np.array([[-1.0], [1.0]])
    y = np.array([-1, 1])
    m = train_svm(X, y, HyperParams(1e4, 0.5))
    assert abs(m.decision_value([0.0])) < 1e-6
    assert m.predict([[1.0]])[0] == 1 and m.predict([[-1.0]])[0] == -1
    # hand solution: a1 = a2 = a, maximise 2a - a^2 (1 - k) => a = 1 / (1 - k)
    k = np.exp(-0.5 * 4)  # scaled points are +-1, squared distance 4
    np.testing.assert_allclose(np.abs(m.dual_coefs), 1 / (1 - k), rtol=1e-6)


def test_separable_blobs_perfect_training_accuracy():
    X, y = blobs(1)
    m = train_svm(X, y, HyperParams(1e4, 0.1))
    assert np.all(m.predict(X) == y)


def test_single_class_rejected():
    X, _ = blobs(2)
    with pytest.raises(DataError, match="single class"):
        train_svm(X, np.ones(len(X), dtype=int), HyperParams(1.0, 1.0))


def test_dual_feasibility_and_margin_kkt():
    X, y = blobs(3, n=15, gap=1.5)
    hp = HyperParams(2.0, 0.3)
    m = train_svm(X, y, hp)
    alpha, Z = full_alpha(m, X, y)
    w = balanced_weights(y)
    ub = hp.C * np.where(y > 0, w[1], w[-1])
    assert abs(np.sum(alpha * y)) < 1e-6
    assert np.all(alpha >= 0) and np.all(alpha <= ub * (1 + 1e-12))
    assert np.all(m.dual_coefs != 0)
    assert {1, -1} <= set(np.sign(m.dual_coefs).astype(int))
    dec = m.decision_function(X)
    free = (alpha > 0) & (alpha < ub)
    assert free.any()
    assert np.all(np.abs(dec[free] - y[free]) <= 1e-2)
    assert qp_oracle.kkt_residuals(alpha, dec, y, ub).max() <= 1e-3


@pytest.mark.parametrize("seed", range(6))
def test_matches_projected_gradient_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(4, 13))
    X = rng.standard_normal((n, 3))
    y = np.where(rng.random(n) < 0.5, 1, -1)
    y[:2] = (1, -1)
    C, gamma = 10 ** rng.uniform(-2, 3), 10 ** rng.uniform(-2, 1)
    m = train_svm(X, y, HyperParams(C, gamma))
    alpha, Z = full_alpha(m, X, y)
    K = rbf_kernel(Z, Z, gamma)
    w = balanced_weights(y)
    ub = C * np.where(y > 0, w[1], w[-1])
    ref = qp_oracle.dual_value(qp_oracle.solve(K, y, ub), y, K)
    assert dual_objective(alpha, y, K) == pytest.approx(ref, rel=1e-4)
    assert qp_oracle.kkt_residuals(alpha, m.decision_function(X), y, ub).max() <= 1e-3


def test_prediction_invariant_to_row_order():
    X, y = blobs(4, n=12, gap=1.0)
    probes = np.random.default_rng(5).standard_normal((50, 3))
    hp = HyperParams(5.0, 0.5)
    perm = np.random.default_rng(6).permutation(len(y))
    a = train_svm(X, y, hp).predict(probes)
    b = train_svm(X[perm], y[perm], hp).predict(probes)
    np.testing.assert_array_equal(a, b)


def test_decision_value_is_continuous():
    X, y = blobs(7)
    m = train_svm(X, y, HyperParams(10.0, 0.2))
    x = np.array([0.3, -0.2, 0.1])
    assert abs(m.decision_value(x + 1e-9) - m.decision_value(x)) < 1e-6


def test_convergence_failure_is_raised():
    X, y = blobs(8, n=20, gap=0.2)
    with pytest.raises(ConvergenceError, match="stalled|cap"):
        train_svm(X, y, HyperParams(1e3, 1.0), SvmConfig(tol=0.0, no_progress_epochs=1))


def test_scaler_drops_constant_columns_and_uses_training_rows():
    X, y = blobs(9)
    X[:, 1] = 3.0
    scaler, keep = fit_scaler(X)
    assert list(keep) == [0, 2]
    np.testing.assert_allclose(scaler.mean, X[:, [0, 2]].mean(axis=0))
    m = train_svm(X, y, HyperParams(1.0, 0.5))
    assert m.feature_indices == (0, 2)


def test_mask_restricts_features():
    X, y = blobs(10, d=6)
    mask = select_top(X, y > 0, 2)
    m = train_svm(X, y, HyperParams(1.0, 0.5), mask=mask)
    assert m.feature_indices == mask.indices
    Xp = X.copy()
    Xp[:, [i for i in range(6) if i not in mask.indices]] = 1e6
    np.testing.assert_array_equal(m.decision_function(X), m.decision_function(Xp))


def test_balanced_weights_inverse_frequency():
    w = balanced_weights(np.r_[np.ones(10), -np.ones(5)])
    assert w[1] == pytest.approx(0.75) and w[-1] == pytest.approx(1.5)
    assert 10 * w[1] == 5 * w[-1]


def test_unweighted_option():
    X, y = blobs(11, n=8)
    m = train_svm(X, y[:], HyperParams(1.0, 0.5), SvmConfig(class_weighting="none"))
    assert m.class_weights == {"+1": 1.0, "-1": 1.0}


def test_solve_dual_direct():
    X, y = blobs(12, n=6)
    K = rbf_kernel(X, X, 0.2)
    alpha, bias, it = solve_dual(K, y, 1.0, {1: 1.0, -1: 1.0})
    assert it > 0 and np.isfinite(bias) and abs(alpha @ y) < 1e-9


def test_hyperparams_validation():
    for bad in ((0, 1), (1, -1)):
        with pytest.raises(ValueError):
            HyperParams(*bad)
    with pytest.raises(ValueError):
        HyperParams(1, 1, 0)


# --- persistence ---------------------------------------------------------------

@pytest.fixture
def model():
    X, y = blobs(13, d=5, gap=1.0)
    mask = select_top(X, y > 0, 3)
    return train_svm(X, y, HyperParams(3.0, 0.25, 3), mask=mask, class_map={"+1": "aos", "-1": "dysarthria"},
                     feature_names=[f"f{i}" for i in range(5)])


def test_round_trip_bit_exact(model):
    back = load_model(save_model(model))
    probes = np.random.default_rng(14).standard_normal((100, 5)) * 3
    np.testing.assert_array_equal(back.decision_function(probes), model.decision_function(probes))
    assert back.mask == model.mask and back.class_map == model.class_map
    assert back.params == model.params and back.bias == model.bias
    assert save_model(back) == save_model(model)


def test_artifact_is_readable_text(model):
    data = save_model(model)
    header, body = data.split(b"\n", 1)
    assert header.startswith(b"msdclass-model schema=1.0 sha256=")
    d = json.loads(body)
    assert d["mask"]["names"] == [f"f{i}" for i in model.mask.indices]


def test_corrupted_byte_fails_checksum(model):
    data = bytearray(save_model(model))
    i = data.index(b'"bias"') + 10
    data[i] = ord("7") if data[i] != ord("7") else ord("8")
    with pytest.raises(ChecksumError):
        load_model(bytes(data))


def test_newer_schema_rejected(model):
    data = save_model(model).replace(b"schema=1.0", b"schema=2.0", 1)
    with pytest.raises(SchemaVersionError):
        load_model(data)


def test_garbage_rejected():
    with pytest.raises(ModelFormatError):
        load_model(b"hello\nworld")
