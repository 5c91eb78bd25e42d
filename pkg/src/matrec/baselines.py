"""Comparison models: explicit ALS and BPR with a logistic rating link."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from . import _seeding, kernels
from .dataio import RatingDataset
from .errors import ColdStartError, InvalidArgumentError, InvalidStateError, NumericalError

_log = logging.getLogger(__name__)

NEG_SAMPLE_TRIES = 100


@dataclass(frozen=True)
class AlsConfig:
    rank: int = 10
    iterations: int = 10
    reg: float = 0.1


@dataclass(frozen=True)
class BprConfig:
    dim: int = 20
    iterations: int = 20
    learning_rate: float = 0.05
    reg: float = 0.01


def _check_train(train: RatingDataset):
    if len(train) == 0:
        raise InvalidArgumentError("training set is empty")
    train.require_normalized()


def _lookup(ids: np.ndarray, key, kind: str) -> int:
    pos = int(np.searchsorted(ids, key))
    if pos >= len(ids) or ids[pos] != key:
        raise ColdStartError(f"{kind} {key} has no trained factors")
    return pos


def _positions(ids, keys):
    keys = np.asarray(keys, dtype=np.int64)
    pos = np.minimum(np.searchsorted(ids, keys), len(ids) - 1)
    return pos, ids[pos] == keys


# --- ALS -------------------------------------------------------------------


@dataclass(eq=False)
class AlsModel:
    user_factors: np.ndarray
    item_factors: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray
    reg: float
    train_mean: float = float("nan")

    algorithm = "als"

    @property
    def rank(self) -> int:
        return self.user_factors.shape[1]

    def predict(self, user_id, item_id) -> float:
        return predict_als(self, user_id, item_id)

    def predict_batch(self, user_ids, item_ids):
        ui, ku = _positions(self.user_ids, user_ids)
        ij, ki = _positions(self.item_ids, item_ids)
        scores = np.einsum("ij,ij->i", self.user_factors[ui], self.item_factors[ij])
        fallback = ~(ku & ki)
        scores[fallback] = np.nan
        return scores, fallback


def _solve_rows(target, other, rows_csr, reg, kind):
    """Ridge solve of every row of ``target`` against fixed ``other`` factors."""
    r = other.shape[1]
    reg_eye = reg * np.eye(r)
    for row in range(target.shape[0]):
        lo, hi = rows_csr.indptr[row], rows_csr.indptr[row + 1]
        if lo == hi:
            if reg == 0:
                raise NumericalError(f"singular normal matrix for {kind} row {row}: no observations")
            target[row] = 0.0
            continue
        cols = rows_csr.indices[lo:hi]
        vals = rows_csr.data[lo:hi]
        M = other[cols]
        if reg > 0:
            target[row] = np.linalg.solve(M.T @ M + reg_eye, M.T @ vals)
        else:
            if hi - lo < r:
                raise NumericalError(
                    f"singular normal matrix for {kind} row {row}: {hi - lo} observations for rank {r}"
                )
            # minimum-norm least squares keeps exact fits when the factors are rank deficient
            sol, *_ = np.linalg.lstsq(M, vals, rcond=None)
            target[row] = sol
        if not np.all(np.isfinite(target[row])):
            raise NumericalError(f"non-finite solution for {kind} row {row}")


def als_objective(model: AlsModel, train: RatingDataset) -> float:
    """Observed squared error plus ``reg`` times the squared factor norms."""
    scores, _ = model.predict_batch(train.user_ids, train.item_ids)
    err = float(np.sum((train.ratings - scores) ** 2))
    return err + model.reg * float(np.sum(model.user_factors**2) + np.sum(model.item_factors**2))


def train_als(
    train: RatingDataset,
    rank: int = 10,
    iterations: int = 10,
    reg: float = 0.1,
    seed: int = 42,
    callback=None,
) -> AlsModel:
    """Alternate exact ridge solves for user rows and item rows on observed entries.

    Item factors start Uniform[0, 1] / sqrt(rank); each iteration solves all
    users, then all items. ``callback(model)`` fires after every half-step.
    """
    _check_train(train)
    if rank < 1:
        raise InvalidArgumentError(f"rank must be >= 1, got {rank}")
    if reg < 0:
        raise InvalidArgumentError(f"reg must be >= 0, got {reg}")
    ui = train.user_idx(train.user_ids)
    ij = train.item_idx(train.item_ids)
    shape = (train.n_users, train.n_items)
    by_user = sparse.csr_matrix((train.ratings, (ui, ij)), shape=shape)
    by_item = by_user.T.tocsr()
    by_user.sort_indices()
    by_item.sort_indices()

    gen = _seeding.rng(seed, "als-init")
    Q = gen.uniform(0.0, 1.0, size=(train.n_items, rank)) / np.sqrt(rank)
    P = np.zeros((train.n_users, rank))
    model = AlsModel(P, Q, train.users, train.items, reg, float(np.mean(train.ratings)))
    for _ in range(iterations):
        _solve_rows(P, Q, by_user, reg, "user")
        if callback is not None:
            callback(model)
        _solve_rows(Q, P, by_item, reg, "item")
        if callback is not None:
            callback(model)
    return model


def predict_als(model: AlsModel, user_id, item_id) -> float:
    """Inner product of the factor rows, clamped to [0, 1]."""
    i = _lookup(model.user_ids, user_id, "user")
    j = _lookup(model.item_ids, item_id, "item")
    return float(np.clip(model.user_factors[i] @ model.item_factors[j], 0.0, 1.0))


# --- BPR -------------------------------------------------------------------


@dataclass(eq=False)
class BprModel:
    user_factors: np.ndarray
    item_factors: np.ndarray
    item_bias: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray
    skipped_users: int = 0
    skipped_steps: int = 0

    @property
    def dim(self) -> int:
        return self.user_factors.shape[1]

    def score(self, user_id, item_id) -> float:
        i = _lookup(self.user_ids, user_id, "user")
        j = _lookup(self.item_ids, item_id, "item")
        return float(self.user_factors[i] @ self.item_factors[j] + self.item_bias[j])

    def score_batch(self, user_ids, item_ids):
        ui, ku = _positions(self.user_ids, user_ids)
        ij, ki = _positions(self.item_ids, item_ids)
        s = np.einsum("ij,ij->i", self.user_factors[ui], self.item_factors[ij]) + self.item_bias[ij]
        return s, ~(ku & ki)


def bpr_triple_loss(model: BprModel, u: int, i: int, j: int, reg: float) -> float:
    """``-log sigmoid(x_uij)`` plus L2 on the touched parameters (row indices)."""
    pu, qi, qj = model.user_factors[u], model.item_factors[i], model.item_factors[j]
    bi, bj = model.item_bias[i], model.item_bias[j]
    x = bi - bj + pu @ (qi - qj)
    return float(np.logaddexp(0.0, -x) + 0.5 * reg * (pu @ pu + qi @ qi + qj @ qj + bi * bi + bj * bj))


def sample_triples(train: RatingDataset, seed: int, epoch: int, n_steps: int | None = None):
    """Draw ``(user, positive, negative)`` row indices for one BPR epoch.

    Positives are uniform over training pairs. Negatives are uniform over
    items, rejection-sampled against the user's observed items with at most
    ``NEG_SAMPLE_TRIES`` draws. Users that interacted with every item, and
    draws that exhaust the cap, are dropped. Returns ``(u, i, j, n_dropped)``.
    """
    ui = train.user_idx(train.user_ids)
    ij = train.item_idx(train.item_ids)
    m = train.n_items
    n_steps = len(train) if n_steps is None else n_steps
    gen = _seeding.rng(seed, "bpr-sample", epoch)
    pick = gen.integers(0, len(train), size=n_steps)
    users = ui[pick]
    pos = ij[pick]

    observed = np.unique(ui.astype(np.int64) * m + ij)
    per_user = np.bincount(ui, minlength=train.n_users)
    ok = per_user[users] < m

    neg = np.full(n_steps, -1, dtype=np.int64)
    pending = np.flatnonzero(ok)
    for _ in range(NEG_SAMPLE_TRIES):
        if len(pending) == 0:
            break
        cand = gen.integers(0, m, size=len(pending))
        key = users[pending] * m + cand
        hit = np.searchsorted(observed, key)
        hit = np.minimum(hit, len(observed) - 1)
        clash = observed[hit] == key
        neg[pending[~clash]] = cand[~clash]
        pending = pending[clash]
    keep = neg >= 0
    return (
        np.ascontiguousarray(users[keep], dtype=np.int64),
        np.ascontiguousarray(pos[keep], dtype=np.int64),
        np.ascontiguousarray(neg[keep], dtype=np.int64),
        int(n_steps - keep.sum()),
    )


def init_bpr(train: RatingDataset, dim: int, seed: int) -> BprModel:
    gen = _seeding.rng(seed, "bpr-init")
    P = gen.normal(0.0, 0.1, size=(train.n_users, dim))
    Q = gen.normal(0.0, 0.1, size=(train.n_items, dim))
    return BprModel(P, Q, np.zeros(train.n_items), train.users, train.items)


def train_bpr(
    train: RatingDataset,
    dim: int = 20,
    iterations: int = 20,
    learning_rate: float = 0.05,
    reg: float = 0.01,
    seed: int = 42,
    backend: str | None = None,
) -> BprModel:
    """SGD on BPR-Opt over sampled triples, ``iterations`` epochs of ``len(train)`` steps."""
    _check_train(train)
    if dim < 1:
        raise InvalidArgumentError(f"dim must be >= 1, got {dim}")
    if learning_rate < 0 or reg < 0:
        raise InvalidArgumentError("learning_rate and reg must be >= 0")
    model = init_bpr(train, dim, seed)
    ui = train.user_idx(train.user_ids)
    model.skipped_users = int(np.sum(np.bincount(ui, minlength=train.n_users) >= train.n_items))
    kern = kernels.get_backend(backend)
    for epoch in range(iterations):
        u, i, j, dropped = sample_triples(train, seed, epoch)
        model.skipped_steps += dropped
        kern.bpr_epoch(model.user_factors, model.item_factors, model.item_bias, u, i, j,
                       float(learning_rate), float(reg))
    if model.skipped_users:
        _log.info("BPR: %d users interacted with every item and were skipped", model.skipped_users)
    if not (np.all(np.isfinite(model.user_factors)) and np.all(np.isfinite(model.item_factors))):
        raise NumericalError("BPR training diverged; lower the learning rate")
    return model


# --- score -> rating calibration --------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class Calibration:
    """Logistic link ``rating = sigmoid(alpha * score + beta)``."""

    alpha: float
    beta: float

    def __call__(self, scores):
        return _sigmoid(self.alpha * np.asarray(scores, dtype=np.float64) + self.beta)


def calibration_sse(alpha: float, beta: float, scores, ratings) -> float:
    return float(np.sum((_sigmoid(alpha * scores + beta) - ratings) ** 2))


def fit_calibration(scores, ratings) -> Calibration:
    """Least-squares fit of ``(alpha, beta)`` against observed ratings."""
    scores = np.asarray(scores, dtype=np.float64)
    ratings = np.asarray(ratings, dtype=np.float64)
    if len(scores) == 0 or len(scores) != len(ratings):
        raise InvalidArgumentError("need equally many scores and ratings, at least one")
    mean = float(np.clip(ratings.mean(), 1e-9, 1 - 1e-9))
    beta0 = float(np.log(mean / (1 - mean)))
    if np.ptp(scores) <= 1e-12 * max(1.0, float(np.abs(scores).max())):
        # constant scores: the best constant output is the mean rating
        return Calibration(0.0, beta0)
    center = float(scores.mean())
    spread = float(scores.std())
    z = (scores - center) / spread

    def fun(theta):
        s = _sigmoid(theta[0] * z + theta[1])
        r = s - ratings
        ds = s * (1 - s)
        return float(r @ r), np.array([2 * float(np.sum(r * ds * z)), 2 * float(np.sum(r * ds))])

    res = optimize.minimize(fun, np.array([0.0, beta0]), jac=True, method="BFGS",
                            options={"gtol": 1e-10, "maxiter": 500})
    a, b = res.x
    # undo the standardization of the scores
    return Calibration(float(a / spread), float(b - a * center / spread))


class CalibratedBpr:
    """BPR scores pushed through a calibration fitted on the training ratings."""

    algorithm = "bpr"

    def __init__(self, model: BprModel, calibration: Calibration, train_mean: float):
        self.model = model
        self.calibration = calibration
        self.train_mean = float(train_mean)

    @classmethod
    def fit(cls, model: BprModel, train: RatingDataset) -> CalibratedBpr:
        scores, _ = model.score_batch(train.user_ids, train.item_ids)
        return cls(model, fit_calibration(scores, train.ratings), float(np.mean(train.ratings)))

    def predict(self, user_id, item_id) -> float:
        return predict_bpr_rating(self.model, user_id, item_id, self.calibration)

    def predict_batch(self, user_ids, item_ids):
        scores, fallback = self.model.score_batch(user_ids, item_ids)
        out = self.calibration(scores)
        out[fallback] = np.nan
        return out, fallback


def predict_bpr_rating(model: BprModel, user_id, item_id, calibration: Calibration | None) -> float:
    if calibration is None:
        raise InvalidStateError("BPR calibration has not been fitted")
    return float(calibration(model.score(user_id, item_id)))


# --- factor dumps -------------------------------------------------------------


def _write_block(out, name, arr):
    out.write(f"{name}\n")
    for row in np.atleast_2d(arr):
        out.write(" ".join(repr(float(v)) for v in row) + "\n")


def dump_als(model: AlsModel) -> str:
    out = io.StringIO()
    out.write(f"als {len(model.user_ids)} {len(model.item_ids)} {model.rank}\n")
    out.write("users " + " ".join(map(str, model.user_ids.tolist())) + "\n")
    out.write("items " + " ".join(map(str, model.item_ids.tolist())) + "\n")
    out.write(f"reg {model.reg!r} train_mean {model.train_mean!r}\n")
    _write_block(out, "P", model.user_factors)
    _write_block(out, "Q", model.item_factors)
    return out.getvalue()


def dump_bpr(model: CalibratedBpr) -> str:
    m = model.model
    out = io.StringIO()
    out.write(f"bpr {len(m.user_ids)} {len(m.item_ids)} {m.dim}\n")
    out.write("users " + " ".join(map(str, m.user_ids.tolist())) + "\n")
    out.write("items " + " ".join(map(str, m.item_ids.tolist())) + "\n")
    out.write(
        f"alpha {model.calibration.alpha!r} beta {model.calibration.beta!r} train_mean {model.train_mean!r}\n"
    )
    _write_block(out, "P", m.user_factors)
    _write_block(out, "Q", m.item_factors)
    _write_block(out, "bias", m.item_bias[None, :])
    return out.getvalue()


def _read_block(lines, pos, name, rows):
    if lines[pos] != name:
        raise InvalidArgumentError(f"expected block {name!r}, got {lines[pos]!r}")
    arr = np.array([[float(v) for v in ln.split()] for ln in lines[pos + 1 : pos + 1 + rows]])
    return arr, pos + 1 + rows


def parse_als(text: str) -> AlsModel:
    lines = text.splitlines()
    _, n, m, r = lines[0].split()
    n, m, r = int(n), int(m), int(r)
    users = np.array(lines[1].split()[1:], dtype=np.int64)
    items = np.array(lines[2].split()[1:], dtype=np.int64)
    meta = lines[3].split()
    P, pos = _read_block(lines, 4, "P", n)
    Q, _ = _read_block(lines, pos, "Q", m)
    return AlsModel(P.reshape(n, r), Q.reshape(m, r), users, items, float(meta[1]), float(meta[3]))


def parse_bpr(text: str) -> CalibratedBpr:
    lines = text.splitlines()
    _, n, m, d = lines[0].split()
    n, m, d = int(n), int(m), int(d)
    users = np.array(lines[1].split()[1:], dtype=np.int64)
    items = np.array(lines[2].split()[1:], dtype=np.int64)
    meta = lines[3].split()
    P, pos = _read_block(lines, 4, "P", n)
    Q, pos = _read_block(lines, pos, "Q", m)
    bias, _ = _read_block(lines, pos, "bias", 1)
    model = BprModel(P.reshape(n, d), Q.reshape(m, d), bias.reshape(m), users, items)
    return CalibratedBpr(model, Calibration(float(meta[1]), float(meta[3])), float(meta[5]))
