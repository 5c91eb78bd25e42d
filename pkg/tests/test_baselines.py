import numpy as np
import pytest

import oracles
from conftest import skewed_dataset
from matrec import baselines as bl
from matrec import kernels
from matrec.dataio import RatingDataset
from matrec.errors import ColdStartError, InvalidStateError, NumericalError


def dense_dataset(R, mask=None):
    n, m = R.shape
    users, items, vals = [], [], []
    for i in range(n):
        for j in range(m):
            if mask is None or mask[i, j]:
                users.append(i)
                items.append(j)
                vals.append(R[i, j])
    return RatingDataset.from_arrays(users, items, vals, vals, scheme="given")


# --- ALS -----------------------------------------------------------------------


def test_als_exact_rank_one():
    rng = np.random.default_rng(0)
    R = np.outer(rng.uniform(0, 1, 6), rng.uniform(0, 1, 5))
    model = bl.train_als(dense_dataset(R), rank=1, iterations=10, reg=0.0, seed=1)
    recon = model.user_factors @ model.item_factors.T
    assert np.mean(np.abs(recon - R)) < 1e-6


def test_als_single_equation():
    ds = RatingDataset.from_arrays([5], [7], [0.8], [0.8], scheme="given")
    model = bl.train_als(ds, rank=1, iterations=3, reg=0.0, seed=0)
    assert bl.predict_als(model, 5, 7) == pytest.approx(0.8, abs=1e-12)


def test_als_rows_match_normal_equation_oracle():
    rng = np.random.default_rng(4)
    R = rng.uniform(0, 1, (4, 4))
    mask = rng.uniform(size=(4, 4)) < 0.8
    mask[np.arange(4), np.arange(4)] = True
    ds = dense_dataset(R, mask)
    reg = 0.1
    checks = []

    def check(model):
        P, Q = model.user_factors, model.item_factors
        half = len(checks) % 2
        for row in range(4):
            if half == 0:
                cols = [j for j in range(4) if mask[row, j]]
                expect = oracles.ridge_row([Q[j].tolist() for j in cols], [R[row, j] for j in cols], reg)
                np.testing.assert_allclose(P[row], expect, rtol=0, atol=1e-8)
            else:
                rows = [i for i in range(4) if mask[i, row]]
                expect = oracles.ridge_row([P[i].tolist() for i in rows], [R[i, row] for i in rows], reg)
                np.testing.assert_allclose(Q[row], expect, rtol=0, atol=1e-8)
        checks.append(True)

    bl.train_als(ds, rank=2, iterations=3, reg=reg, seed=2, callback=check)
    assert len(checks) == 6


def test_als_objective_non_increasing():
    ds = skewed_dataset(seed=8)
    values = []
    bl.train_als(ds, rank=5, iterations=6, reg=0.1, seed=3, callback=lambda m: values.append(bl.als_objective(m, ds)))
    assert all(b <= a + 1e-9 * abs(a) for a, b in zip(values, values[1:]))


def test_als_singular_with_zero_reg_names_row():
    ds = RatingDataset.from_arrays([0, 0, 1], [0, 1, 0], [1.0, 0.5, 0.2], [1.0, 0.5, 0.2], scheme="given")
    with pytest.raises(NumericalError, match="user row 1"):
        bl.train_als(ds, rank=2, iterations=1, reg=0.0, seed=0)


def test_als_deterministic():
    ds = skewed_dataset(seed=2)
    a = bl.train_als(ds, rank=4, iterations=3, seed=11)
    b = bl.train_als(ds, rank=4, iterations=3, seed=11)
    assert np.array_equal(a.user_factors, b.user_factors) and np.array_equal(a.item_factors, b.item_factors)


def test_predict_als_examples():
    ids = np.array([0, 1, 2])
    z = bl.AlsModel(np.zeros((3, 2)), np.zeros((3, 2)), ids, ids, 0.1)
    assert bl.predict_als(z, 1, 2) == 0.0
    e = bl.AlsModel(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]), ids[:1], ids[:1], 0.1)
    assert bl.predict_als(e, 0, 0) == 1.0
    rng = np.random.default_rng(3)
    P, Q = rng.uniform(0, 0.7, (3, 2)), rng.uniform(0, 0.7, (3, 2))
    planted = bl.AlsModel(P, Q, ids, ids, 0.1)
    for i in range(3):
        for j in range(3):
            hand = sum(P[i, f] * Q[j, f] for f in range(2))
            assert bl.predict_als(planted, i, j) == pytest.approx(min(1.0, hand), abs=1e-15)
    with pytest.raises(ColdStartError):
        bl.predict_als(planted, 5, 0)


def test_als_dump_round_trip():
    model = bl.train_als(skewed_dataset(seed=2), rank=3, iterations=2, seed=1)
    back = bl.parse_als(bl.dump_als(model))
    assert np.array_equal(back.user_factors, model.user_factors)
    assert np.array_equal(back.item_factors, model.item_factors)
    assert back.train_mean == model.train_mean


# --- BPR -------------------------------------------------------------------------


def test_bpr_zero_learning_rate_keeps_init(backend):
    ds = skewed_dataset(seed=1)
    model = bl.train_bpr(ds, dim=5, iterations=2, learning_rate=0.0, reg=0.01, seed=4, backend=backend)
    init = bl.init_bpr(ds, 5, 4)
    assert np.array_equal(model.user_factors, init.user_factors)
    assert np.array_equal(model.item_factors, init.item_factors)
    assert np.array_equal(model.item_bias, init.item_bias)


def test_bpr_step_matches_finite_differences(backend):
    rng = np.random.default_rng(7)
    d, reg, eta, h = 4, 0.05, 1e-3, 1e-6
    P = rng.normal(0, 0.5, (2, d))
    Q = rng.normal(0, 0.5, (3, d))
    bias = rng.normal(0, 0.2, 3)
    u, i, j = 1, 0, 2

    def loss(vec):
        pu, qi, qj = vec[:d], vec[d:2 * d], vec[2 * d:3 * d]
        return oracles.bpr_triple_loss(list(pu), list(qi), list(qj), vec[3 * d], vec[3 * d + 1], reg)

    theta = np.concatenate([P[u], Q[i], Q[j], [bias[i], bias[j]]])
    grad = np.array([
        (loss(theta + h * e) - loss(theta - h * e)) / (2 * h) for e in np.eye(len(theta))
    ])
    P2, Q2, b2 = P.copy(), Q.copy(), bias.copy()
    kernels.get_backend(backend).bpr_epoch(P2, Q2, b2, np.array([u]), np.array([i]), np.array([j]), eta, reg)
    new = np.concatenate([P2[u], Q2[i], Q2[j], [b2[i], b2[j]]])
    np.testing.assert_allclose(new, theta - eta * grad, rtol=0, atol=1e-5)
    np.testing.assert_allclose((theta - new) / eta, grad, rtol=0, atol=1e-5)


def test_bpr_triple_loss_helper_agrees_with_oracle():
    rng = np.random.default_rng(1)
    m = bl.BprModel(rng.normal(size=(2, 3)), rng.normal(size=(3, 3)), rng.normal(size=3), np.arange(2), np.arange(3))
    got = bl.bpr_triple_loss(m, 0, 1, 2, 0.1)
    want = oracles.bpr_triple_loss(*(list(v) for v in (m.user_factors[0], m.item_factors[1], m.item_factors[2])),
                                   m.item_bias[1], m.item_bias[2], 0.1)
    assert got == pytest.approx(want, abs=1e-12)


def preference_dataset():
    # four users share taste: items 1, 2 liked; 3, 4 never seen; filler items 5..9 for sampling room
    users, items = [], []
    for u in range(4):
        for it in (1, 2, 5 + u):
            users.append(u)
            items.append(it)
    users += [9, 9]
    items += [9, 5]
    vals = [1.0] * len(users)
    ds = RatingDataset.from_arrays(users, items, vals, vals, scheme="given",
                                   items=np.arange(1, 10))
    return ds


def test_bpr_ranking_separation_over_seeds():
    ds = preference_dataset()
    ok = 0
    for seed in range(20):
        model = bl.train_bpr(ds, dim=4, iterations=60, learning_rate=0.1, reg=0.01, seed=seed)
        liked = min(model.score(0, 1), model.score(0, 2))
        unseen = max(model.score(0, 3), model.score(0, 4))
        ok += liked > unseen
    assert ok / 20 >= 0.95


def test_bpr_user_with_every_item_is_skipped():
    ds = RatingDataset.from_arrays([0, 0, 1], [0, 1, 0], [1.0] * 3, [1.0] * 3, scheme="given")
    model = bl.train_bpr(ds, dim=2, iterations=3, seed=0)
    assert model.skipped_users == 1
    u, i, j, dropped = bl.sample_triples(ds, 0, 0)
    assert 0 not in u.tolist()
    assert dropped > 0
    assert all(j_ != i_ for i_, j_ in zip(i, j))


def test_negative_samples_are_unobserved():
    ds = skewed_dataset(seed=6)
    u, i, j, _ = bl.sample_triples(ds, 3, 1)
    observed = set(zip(ds.user_idx(ds.user_ids).tolist(), ds.item_idx(ds.item_ids).tolist()))
    assert all((a, b) in observed for a, b in zip(u.tolist(), i.tolist()))
    assert not any((a, c) in observed for a, c in zip(u.tolist(), j.tolist()))


def test_bpr_deterministic(backend):
    ds = skewed_dataset(seed=3)
    a = bl.train_bpr(ds, dim=4, iterations=3, seed=5, backend=backend)
    b = bl.train_bpr(ds, dim=4, iterations=3, seed=5, backend=backend)
    assert np.array_equal(a.user_factors, b.user_factors) and np.array_equal(a.item_bias, b.item_bias)


# --- calibration --------------------------------------------------------------------


def test_calibration_constant_scores_gives_mean():
    ratings = np.array([0.2, 0.4, 0.9, 0.5])
    cal = bl.fit_calibration(np.full(4, 3.0), ratings)
    np.testing.assert_allclose(cal(np.full(4, 3.0)), ratings.mean(), atol=1e-12)


def test_calibration_asymptote():
    cal = bl.Calibration(2.0, -1.0)
    assert cal(np.array([1e6]))[0] == 1.0
    assert cal(np.array([-1e6]))[0] == 0.0


def test_calibration_matches_grid_oracle():
    rng = np.random.default_rng(10)
    scores = rng.normal(0, 2, 10)
    ratings = np.clip(1 / (1 + np.exp(-(0.8 * scores - 0.3))) + rng.normal(0, 0.05, 10), 0, 1)
    cal = bl.fit_calibration(scores, ratings)
    a, b = oracles.grid_fit_logistic(scores.tolist(), ratings.tolist(), (0.0, 0.0), (5.0, 5.0), 40)
    assert cal.alpha == pytest.approx(a, abs=1e-3)
    assert cal.beta == pytest.approx(b, abs=1e-3)


def test_unfitted_calibration_is_state_error():
    m = bl.BprModel(np.ones((1, 2)), np.ones((1, 2)), np.zeros(1), np.array([0]), np.array([0]))
    with pytest.raises(InvalidStateError):
        bl.predict_bpr_rating(m, 0, 0, None)


def test_calibrated_bpr_outputs_in_unit_interval_and_round_trip():
    ds = skewed_dataset(seed=9)
    cb = bl.CalibratedBpr.fit(bl.train_bpr(ds, dim=4, iterations=2, seed=1), ds)
    out, fb = cb.predict_batch(ds.user_ids, ds.item_ids)
    assert not fb.any() and np.all((out >= 0) & (out <= 1))
    back = bl.parse_bpr(bl.dump_bpr(cb))
    out2, _ = back.predict_batch(ds.user_ids, ds.item_ids)
    assert np.array_equal(out, out2)
    assert cb.predict(int(ds.user_ids[0]), int(ds.item_ids[0])) == pytest.approx(out[0])
