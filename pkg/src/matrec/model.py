"""Rank-aware cosine matrix factorization.

For a pair (user i, item j) with normalized popularity ranks x and y, the
features are built from six per-entity vectors::

    t0 = u_i + x * a_i + y * b_i        (user side)
    t1 = v_j + x * c_j + y * d_j        (item side)

The prediction is the cosine ``t0.t1 / (|t0| |t1|)`` and each SGD step
descends the squared residual ``(R - cos)**2``. Without the normalization
the dot product grows unboundedly under SGD; with it, predictions stay in
[-1, 1] and steps stay finite.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _seeding, kernels
from .dataio import RatingDataset, RatingTriple
from .errors import (
    ColdStartError,
    DegenerateFeatureError,
    InvalidArgumentError,
    InvalidStateError,
)
from .ranking import RankTable

PARAM_NAMES = ("a", "b", "u", "c", "d", "v")
INIT_LOW = 0.01
INIT_HIGH = 0.1


@dataclass(frozen=True)
class Hyperparams:
    latent_dim: int = 20
    learning_rate: float = 3e-4
    epochs: int = 300
    seed: int = 42
    norm_epsilon: float = 1e-12

    def __post_init__(self):
        if int(self.latent_dim) != self.latent_dim or self.latent_dim < 1:
            raise InvalidArgumentError(f"latent_dim must be a positive integer, got {self.latent_dim}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InvalidArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise InvalidArgumentError(f"epochs must be a non-negative integer, got {self.epochs}")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.norm_epsilon > 0:
            raise InvalidArgumentError(f"norm_epsilon must be > 0, got {self.norm_epsilon}")


@dataclass(eq=False)
class MatRecParams:
    """Factor arrays: ``a, b, u`` are ``n x k`` (users), ``c, d, v`` are ``m x k`` (items).

    ``user_ids``/``item_ids`` give the raw id of each row.
    """

    a: np.ndarray
    b: np.ndarray
    u: np.ndarray
    c: np.ndarray
    d: np.ndarray
    v: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray
    degenerate_steps: int = 0

    @property
    def k(self) -> int:
        return self.a.shape[1]

    @property
    def n_users(self) -> int:
        return self.a.shape[0]

    @property
    def n_items(self) -> int:
        return self.c.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.a, self.b, self.u, self.c, self.d, self.v)

    def copy(self) -> MatRecParams:
        return MatRecParams(
            *(x.copy() for x in self.arrays()),
            user_ids=self.user_ids.copy(),
            item_ids=self.item_ids.copy(),
            degenerate_steps=self.degenerate_steps,
        )

    def identical(self, other: MatRecParams) -> bool:
        """Bitwise equality of every factor array and id map."""
        return (
            all(x.tobytes() == y.tobytes() for x, y in zip(self.arrays(), other.arrays()))
            and np.array_equal(self.user_ids, other.user_ids)
            and np.array_equal(self.item_ids, other.item_ids)
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(x)) for x in self.arrays())

    def user_pos(self, user_id) -> int:
        return _find(self.user_ids, user_id, "user")

    def item_pos(self, item_id) -> int:
        return _find(self.item_ids, item_id, "item")


def _find(ids: np.ndarray, key, kind: str) -> int:
    pos = int(np.searchsorted(ids, key))
    if pos >= len(ids) or ids[pos] != key:
        raise ColdStartError(f"{kind} {key} has no trained factors")
    return pos


@dataclass
class PairIntermediates:
    t0: np.ndarray
    t1: np.ndarray
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    x: float
    y: float


@dataclass
class TrainTrace:
    """Summed pre-step squared residual per epoch, plus skipped-step count."""

    epoch_losses: list[float] = field(default_factory=list)
    degenerate_steps: int = 0

    def to_table(self) -> str:
        rows = ["epoch,total_loss"]
        rows.extend(f"{e},{loss!r}" for e, loss in enumerate(self.epoch_losses, start=1))
        return "\n".join(rows) + "\n"


def init_params(n: int, m: int, hyper: Hyperparams, user_ids=None, item_ids=None) -> MatRecParams:
    """Uniform[0.01, 0.1] factors from the seeded ``matrec-init`` stream."""
    if n < 1 or m < 1:
        raise InvalidArgumentError(f"need at least one user and one item, got n={n}, m={m}")
    k = hyper.latent_dim
    gen = _seeding.rng(hyper.seed, "matrec-init")
    user_side = [gen.uniform(INIT_LOW, INIT_HIGH, size=(n, k)) for _ in range(3)]
    item_side = [gen.uniform(INIT_LOW, INIT_HIGH, size=(m, k)) for _ in range(3)]
    user_ids = np.arange(n, dtype=np.int64) if user_ids is None else np.asarray(user_ids, dtype=np.int64)
    item_ids = np.arange(m, dtype=np.int64) if item_ids is None else np.asarray(item_ids, dtype=np.int64)
    if len(user_ids) != n or len(item_ids) != m:
        raise InvalidArgumentError("id maps must have n and m entries")
    return MatRecParams(*user_side, *item_side, user_ids=user_ids, item_ids=item_ids)


def build_features(params: MatRecParams, user_index: int, item_index: int, x: float, y: float) -> PairIntermediates:
    """Pair features and their norms/inner product. ``t6`` is left at 0."""
    if not (0 <= user_index < params.n_users):
        raise InvalidArgumentError(f"user index {user_index} out of range [0, {params.n_users})")
    if not (0 <= item_index < params.n_items):
        raise InvalidArgumentError(f"item index {item_index} out of range [0, {params.n_items})")
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidArgumentError("normalized ranks must be finite")
    i, j = user_index, item_index
    t0 = params.u[i] + x * params.a[i] + y * params.b[i]
    t1 = params.v[j] + x * params.c[j] + y * params.d[j]
    t2 = float(np.linalg.norm(t0))
    t3 = float(np.linalg.norm(t1))
    return PairIntermediates(t0, t1, t2, t3, t2 * t3, float(t0 @ t1), 0.0, x, y)


def predict_pair(
    params: MatRecParams, user_id, item_id, ranks: RankTable, eps: float = 1e-12, backend: str | None = None
) -> float:
    """Cosine of the pair features; raises :class:`DegenerateFeatureError` on a vanishing norm.

    Uses the same arithmetic as the SGD kernel, so a sample whose rating
    equals this value has a residual of exactly zero.
    """
    i = params.user_pos(user_id)
    j = params.item_pos(item_id)
    scores, degenerate = kernels.get_backend(backend).matrec_scores(
        *params.arrays(),
        np.array([i], dtype=np.int64),
        np.array([j], dtype=np.int64),
        np.array([ranks.x(user_id)]),
        np.array([ranks.y(item_id)]),
        float(eps),
    )
    if degenerate[0]:
        raise DegenerateFeatureError(f"feature norm below {eps} for user {user_id}, item {item_id}")
    return float(scores[0])


def pair_loss(
    params: MatRecParams, sample: RatingTriple, ranks: RankTable, eps: float = 1e-12, backend: str | None = None
) -> float:
    """Squared cosine residual ``(R - t5/t4)**2`` of one sample."""
    resid = sample.rating - predict_pair(params, sample.user_id, sample.item_id, ranks, eps, backend)
    return resid * resid


def sgd_step(
    params: MatRecParams,
    sample: RatingTriple,
    ranks: RankTable,
    eta: float,
    eps: float = 1e-12,
    backend: str | None = None,
) -> MatRecParams:
    """Apply one simultaneous update of all six factor vectors in place.

    All updates use the features computed before the step. A pair whose
    feature norm is below ``eps`` leaves the factors untouched and bumps
    ``params.degenerate_steps``.
    """
    if not (0.0 <= sample.rating <= 1.0):
        raise InvalidArgumentError(f"rating must be in [0, 1], got {sample.rating}")
    i = params.user_pos(sample.user_id)
    j = params.item_pos(sample.item_id)
    kern = kernels.get_backend(backend)
    _, degenerate = kern.matrec_epoch(
        *params.arrays(),
        np.array([i], dtype=np.int64),
        np.array([j], dtype=np.int64),
        np.array([ranks.x(sample.user_id)]),
        np.array([ranks.y(sample.item_id)]),
        np.array([float(sample.rating)]),
        np.zeros(1, dtype=np.int64),
        float(eta),
        float(eps),
    )
    params.degenerate_steps += int(degenerate)
    return params


def _as_dataset(train_set) -> RatingDataset:
    if isinstance(train_set, RatingDataset):
        return train_set
    triples: Sequence[RatingTriple] = list(train_set)
    if not triples:
        raise InvalidArgumentError("training set is empty")
    return RatingDataset.from_arrays(
        [t.user_id for t in triples],
        [t.item_id for t in triples],
        [t.raw_rating for t in triples],
        [t.rating for t in triples],
        scheme="given",
    )


def train(
    train_set,
    ranks: RankTable,
    hyper: Hyperparams,
    backend: str | None = None,
    callback=None,
) -> tuple[MatRecParams, TrainTrace]:
    """Run ``hyper.epochs`` shuffled single-sample passes over ``train_set``.

    Epoch ``e`` visits samples in the order of the ``("matrec-shuffle", e)``
    stream, so the result depends only on data, ranks and ``hyper``.
    ``callback(epoch, loss)`` is invoked after every pass if given.
    """
    ds = _as_dataset(train_set)
    if len(ds) == 0:
        raise InvalidArgumentError("training set is empty")
    ratings = np.ascontiguousarray(ds.ratings, dtype=np.float64)
    if not np.all((ratings >= 0.0) & (ratings <= 1.0)):
        raise InvalidArgumentError("training ratings must be normalized into [0, 1]")

    params = init_params(ds.n_users, ds.n_items, hyper, ds.users, ds.items)
    users = np.ascontiguousarray(ds.user_idx(ds.user_ids), dtype=np.int64)
    items = np.ascontiguousarray(ds.item_idx(ds.item_ids), dtype=np.int64)
    xs = np.ascontiguousarray(ranks.xs(ds.user_ids))
    ys = np.ascontiguousarray(ranks.ys(ds.item_ids))
    kern = kernels.get_backend(backend)

    trace = TrainTrace()
    for epoch in range(hyper.epochs):
        order = _seeding.rng(hyper.seed, "matrec-shuffle", epoch).permutation(len(ds)).astype(np.int64)
        loss, degenerate = kern.matrec_epoch(
            *params.arrays(), users, items, xs, ys, ratings, order,
            float(hyper.learning_rate), float(hyper.norm_epsilon),
        )
        trace.epoch_losses.append(float(loss))
        trace.degenerate_steps += int(degenerate)
        if callback is not None:
            callback(epoch, float(loss))
    params.degenerate_steps = trace.degenerate_steps
    if not params.all_finite():
        raise InvalidStateError("training produced non-finite factors")
    return params, trace


class MatRecModel:
    """Trained factors bundled with the rank table and training mean for scoring."""

    algorithm = "matrec"

    def __init__(self, params: MatRecParams, ranks: RankTable, train_mean: float, eps: float = 1e-12,
                 backend: str | None = None):
        self.params = params
        self.ranks = ranks
        self.train_mean = float(train_mean)
        self.eps = eps
        self.backend = backend

    def predict(self, user_id, item_id) -> float:
        return predict_pair(self.params, user_id, item_id, self.ranks, self.eps, self.backend)

    def predict_batch(self, user_ids, item_ids) -> tuple[np.ndarray, np.ndarray]:
        """Raw cosine scores and a mask of pairs that need the fallback.

        Missing ranks raise :class:`InvalidStateError`; unknown ids and
        degenerate norms are flagged in the mask instead.
        """
        user_ids = np.asarray(user_ids, dtype=np.int64)
        item_ids = np.asarray(item_ids, dtype=np.int64)
        xs = np.ascontiguousarray(self.ranks.xs(user_ids))
        ys = np.ascontiguousarray(self.ranks.ys(item_ids))
        p = self.params
        ui, known_u = _positions(p.user_ids, user_ids)
        ij, known_i = _positions(p.item_ids, item_ids)
        scores, degenerate = kernels.get_backend(self.backend).matrec_scores(
            *p.arrays(), ui.astype(np.int64), ij.astype(np.int64), xs, ys, float(self.eps)
        )
        fallback = ~(known_u & known_i) | degenerate
        scores[fallback] = np.nan
        return scores, fallback


def _positions(ids: np.ndarray, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pos = np.minimum(np.searchsorted(ids, keys), len(ids) - 1)
    known = ids[pos] == keys
    return pos, known


def dump_params(params: MatRecParams) -> str:
    """Text factor dump: ``matrec n m k`` header, id lines, then row-major blocks."""
    out = io.StringIO()
    out.write(f"matrec {params.n_users} {params.n_items} {params.k}\n")
    out.write("users " + " ".join(str(int(v)) for v in params.user_ids) + "\n")
    out.write("items " + " ".join(str(int(v)) for v in params.item_ids) + "\n")
    for name, arr in zip(PARAM_NAMES, params.arrays()):
        out.write(f"{name}\n")
        for row in arr:
            out.write(" ".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def parse_params(text: str) -> MatRecParams:
    lines = text.splitlines()
    head = lines[0].split()
    if len(head) != 4 or head[0] != "matrec":
        raise InvalidArgumentError("not a matrec factor dump")
    n, m, k = (int(v) for v in head[1:])
    user_ids = np.array([int(v) for v in lines[1].split()[1:]], dtype=np.int64)
    item_ids = np.array([int(v) for v in lines[2].split()[1:]], dtype=np.int64)
    arrays = []
    pos = 3
    for name in PARAM_NAMES:
        if lines[pos] != name:
            raise InvalidArgumentError(f"expected block {name!r}, got {lines[pos]!r}")
        rows = n if name in ("a", "b", "u") else m
        block = np.array([[float(v) for v in ln.split()] for ln in lines[pos + 1 : pos + 1 + rows]])
        arrays.append(block.reshape(rows, k))
        pos += 1 + rows
    return MatRecParams(*arrays, user_ids=user_ids, item_ids=item_ids)
