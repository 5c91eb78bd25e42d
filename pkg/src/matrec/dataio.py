"""Loading, normalizing and splitting rating data.

Supported inputs:

* HetRec-2011 lastFM ``user_artists.dat`` (tab-separated, header
  ``userID\\tartistID\\tweight``); the listening weight is the raw rating.
* MovieLens ``ratings.csv`` (header ``userId,movieId,rating,timestamp``) or
  the tab-separated, headerless ``u.data``; picked by delimiter.
* The canonical CSV written by ``matrec ingest``:
  ``user,item,rating_normalized,rating_raw``.

Loaders return raw ratings only; :func:`normalize_ratings` maps them into
[0, 1] before anything is trained.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np

from . import _seeding
from .errors import IngestionError, InvalidArgumentError, InvalidDataError, InvalidStateError

Scheme = Literal["per-user-max", "global-max"]

LASTFM_HEADER = ["userID", "artistID", "weight"]
MOVIELENS_HEADER = ["userId", "movieId", "rating", "timestamp"]
CANONICAL_HEADER = ["user", "item", "rating_normalized", "rating_raw"]


@dataclass(frozen=True)
class RatingTriple:
    user_id: int
    item_id: int
    rating: float
    raw_rating: float


@dataclass(frozen=True, eq=False)
class RatingDataset:
    """Column-oriented set of unique ``(user, item)`` ratings.

    ``users`` and ``items`` are the sorted id universes that define the
    contiguous index maps (``user_index``/``item_index``). Splits share the
    universes of their parent, so indices agree across train and test.
    ``ratings`` is NaN until :func:`normalize_ratings` has run.
    """

    user_ids: np.ndarray
    item_ids: np.ndarray
    ratings: np.ndarray
    raw_ratings: np.ndarray
    users: np.ndarray
    items: np.ndarray
    name: str = "dataset"
    scheme: str | None = None
    rating_scale: float | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, user_ids, item_ids, raw_ratings, ratings=None, **kwargs) -> RatingDataset:
        user_ids = np.asarray(user_ids, dtype=np.int64)
        item_ids = np.asarray(item_ids, dtype=np.int64)
        raw = np.asarray(raw_ratings, dtype=np.float64)
        if ratings is None:
            ratings = np.full(len(raw), np.nan)
        ratings = np.asarray(ratings, dtype=np.float64)
        if not (len(user_ids) == len(item_ids) == len(raw) == len(ratings)):
            raise InvalidArgumentError("column lengths differ")
        if len(raw) and (not np.all(np.isfinite(raw)) or raw.min() < 0):
            raise InvalidDataError("raw ratings must be finite and non-negative")
        if len(raw) and len(np.unique(np.stack([user_ids, item_ids], axis=1), axis=0)) != len(raw):
            raise InvalidDataError("duplicate (user, item) pairs")
        users = kwargs.pop("users", None)
        items = kwargs.pop("items", None)
        users = np.unique(user_ids) if users is None else np.asarray(users, dtype=np.int64)
        items = np.unique(item_ids) if items is None else np.asarray(items, dtype=np.int64)
        return cls(user_ids, item_ids, ratings, raw, users, items, **kwargs)

    def __len__(self) -> int:
        return len(self.user_ids)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def is_normalized(self) -> bool:
        return self.scheme is not None

    @property
    def user_index(self) -> dict[int, int]:
        return {int(u): k for k, u in enumerate(self.users)}

    @property
    def item_index(self) -> dict[int, int]:
        return {int(i): k for k, i in enumerate(self.items)}

    def user_idx(self, user_ids) -> np.ndarray:
        return _lookup(self.users, user_ids, "user")

    def item_idx(self, item_ids) -> np.ndarray:
        return _lookup(self.items, item_ids, "item")

    @property
    def triples(self) -> list[RatingTriple]:
        return [
            RatingTriple(int(u), int(i), float(r), float(w))
            for u, i, r, w in zip(self.user_ids, self.item_ids, self.ratings, self.raw_ratings)
        ]

    def require_normalized(self):
        if not self.is_normalized:
            raise InvalidStateError(f"{self.name}: ratings are not normalized yet")

    def subset(self, mask_or_index) -> RatingDataset:
        """Rows selected by a boolean mask or index array, same id universes."""
        sel = np.asarray(mask_or_index)
        return replace(
            self,
            user_ids=self.user_ids[sel],
            item_ids=self.item_ids[sel],
            ratings=self.ratings[sel],
            raw_ratings=self.raw_ratings[sel],
        )

    def same_as(self, other: RatingDataset) -> bool:
        return (
            np.array_equal(self.user_ids, other.user_ids)
            and np.array_equal(self.item_ids, other.item_ids)
            and np.array_equal(self.ratings, other.ratings, equal_nan=True)
            and np.array_equal(self.raw_ratings, other.raw_ratings)
        )


def _lookup(universe: np.ndarray, keys, kind: str) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    pos = np.searchsorted(universe, keys)
    pos_c = np.minimum(pos, max(len(universe) - 1, 0))
    if len(universe) == 0 or np.any(universe[pos_c] != keys):
        raise InvalidArgumentError(f"unknown {kind} id in lookup")
    return pos_c


def _open_text(path):
    path = Path(path)
    if not path.is_file():
        raise IngestionError("no such file", path=path)
    return path.open("r", encoding="utf-8", newline="")


def _parse_rows(path, reader, header, n_fields, first_line):
    """Yield ``(line_no, user, item, rating)`` from a csv reader."""
    for line_no, row in enumerate(reader, start=first_line):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < n_fields:
            raise IngestionError(f"expected {n_fields} fields, got {len(row)}", path, line_no)
        try:
            user = int(row[0])
            item = int(row[1])
        except ValueError:
            raise IngestionError(f"non-integer id in {row[:2]!r}", path, line_no) from None
        try:
            rating = float(row[2])
        except ValueError:
            raise IngestionError(f"non-numeric {header[2]} {row[2]!r}", path, line_no) from None
        if not math.isfinite(rating) or rating < 0:
            raise IngestionError(f"{header[2]} must be finite and >= 0, got {row[2]!r}", path, line_no)
        yield line_no, user, item, rating


def _collect(path, rows, name) -> RatingDataset:
    best: dict[tuple[int, int], float] = {}
    for _, user, item, rating in rows:
        key = (user, item)
        prev = best.get(key)
        if prev is None or rating > prev:
            best[key] = rating
    if not best:
        raise IngestionError("no rating rows", path=path)
    keys = sorted(best)
    users = np.fromiter((k[0] for k in keys), dtype=np.int64, count=len(keys))
    items = np.fromiter((k[1] for k in keys), dtype=np.int64, count=len(keys))
    raw = np.fromiter((best[k] for k in keys), dtype=np.float64, count=len(keys))
    return RatingDataset.from_arrays(users, items, raw, name=name)


def load_lastfm(path) -> RatingDataset:
    """Parse a HetRec lastFM ``user_artists.dat``; duplicate pairs keep the max weight."""
    with _open_text(path) as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != LASTFM_HEADER:
            raise IngestionError("expected header 'userID<TAB>artistID<TAB>weight'", path, 1)
        return _collect(path, _parse_rows(path, reader, LASTFM_HEADER, 3, 2), "lastfm")


def load_movielens(path) -> RatingDataset:
    """Parse MovieLens ``ratings.csv`` or ``u.data``; timestamps are dropped."""
    with _open_text(path) as fh:
        first = fh.readline()
        fh.seek(0)
        if "\t" in first:
            reader = csv.reader(fh, delimiter="\t")
            rows = _parse_rows(path, reader, MOVIELENS_HEADER, 3, 1)
        else:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:4]] != MOVIELENS_HEADER:
                raise IngestionError(f"expected header {','.join(MOVIELENS_HEADER)!r}", path, 1)
            rows = _parse_rows(path, reader, MOVIELENS_HEADER, 3, 2)
        ds = _collect(path, rows, "movielens")
    return ds


def normalize_ratings(dataset: RatingDataset, scheme: Scheme = "per-user-max") -> RatingDataset:
    """Map raw ratings into [0, 1].

    ``per-user-max`` divides by each user's largest raw rating (lastFM
    default); ``global-max`` divides by the largest raw rating in the data
    (MovieLens default, 5.0 on the standard files).
    """
    raw = dataset.raw_ratings
    if len(raw) == 0:
        raise InvalidArgumentError("cannot normalize an empty dataset")
    if scheme == "per-user-max":
        uidx = dataset.user_idx(dataset.user_ids)
        user_max = np.zeros(dataset.n_users)
        np.maximum.at(user_max, uidx, raw)
        denom = user_max[uidx]
        if np.any(denom <= 0):
            bad = dataset.user_ids[np.argmax(denom <= 0)]
            raise InvalidDataError(f"user {int(bad)} has only zero raw ratings")
        return replace(dataset, ratings=raw / denom, scheme=scheme, rating_scale=None)
    if scheme == "global-max":
        scale = float(raw.max())
        if scale <= 0:
            raise InvalidDataError("all raw ratings are zero")
        return replace(dataset, ratings=raw / scale, scheme=scheme, rating_scale=scale)
    raise InvalidArgumentError(f"unknown normalization scheme {scheme!r}")


def split(dataset: RatingDataset, test_fraction: float = 0.2, seed: int = 42):
    """Random train/test partition with cold-start rows moved back to train.

    ``floor(test_fraction * len(dataset))`` rows are drawn for test; any of
    them whose user or item does not occur in the remaining train rows is
    returned to train, so every test pair has trained factors.
    """
    if len(dataset) == 0:
        raise InvalidArgumentError("cannot split an empty dataset")
    if not (0.0 <= test_fraction < 1.0):
        raise InvalidArgumentError(f"test_fraction must be in [0, 1), got {test_fraction}")
    n = len(dataset)
    n_test = int(math.floor(test_fraction * n))
    perm = _seeding.rng(seed, "split").permutation(n)
    in_test = np.zeros(n, dtype=bool)
    in_test[perm[:n_test]] = True

    uidx = dataset.user_idx(dataset.user_ids)
    iidx = dataset.item_idx(dataset.item_ids)
    train_users = np.zeros(dataset.n_users, dtype=bool)
    train_items = np.zeros(dataset.n_items, dtype=bool)
    train_users[uidx[~in_test]] = True
    train_items[iidx[~in_test]] = True
    cold = in_test & ~(train_users[uidx] & train_items[iidx])
    in_test &= ~cold

    train = dataset.subset(~in_test)
    test = dataset.subset(in_test)
    meta = {"split_seed": seed, "test_fraction": test_fraction, "moved_cold_start": int(cold.sum())}
    return replace(train, meta={**dataset.meta, **meta}), replace(test, meta={**dataset.meta, **meta})


def _fmt(v: float) -> str:
    return repr(float(v))


def write_canonical(dataset: RatingDataset, path) -> None:
    """Write the canonical CSV (``user,item,rating_normalized,rating_raw``) atomically."""
    dataset.require_normalized()
    lines = [",".join(CANONICAL_HEADER)]
    lines.extend(
        f"{int(u)},{int(i)},{_fmt(r)},{_fmt(w)}"
        for u, i, r, w in zip(dataset.user_ids, dataset.item_ids, dataset.ratings, dataset.raw_ratings)
    )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_canonical(path, name: str = "canonical") -> RatingDataset:
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CANONICAL_HEADER:
            raise IngestionError(f"expected header {','.join(CANONICAL_HEADER)!r}", path, 1)
        users, items, norm, raw = [], [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise IngestionError(f"expected 4 fields, got {len(row)}", path, line_no)
            try:
                users.append(int(row[0]))
                items.append(int(row[1]))
                norm.append(float(row[2]))
                raw.append(float(row[3]))
            except ValueError:
                raise IngestionError(f"malformed row {row!r}", path, line_no) from None
            if not (0.0 <= norm[-1] <= 1.0):
                raise IngestionError(f"normalized rating {row[2]!r} outside [0, 1]", path, line_no)
    if not users:
        raise IngestionError("no rating rows", path=path)
    raw_a = np.asarray(raw)
    norm_a = np.asarray(norm)
    # global-max data is recognizable by a single shared divisor
    scale = float(raw_a.max())
    if scale > 0 and np.allclose(norm_a, raw_a / scale, rtol=0, atol=1e-12):
        scheme, rating_scale = "global-max", scale
    else:
        scheme, rating_scale = "per-user-max", None
    try:
        return RatingDataset.from_arrays(
            users, items, raw_a, norm_a, name=name, scheme=scheme, rating_scale=rating_scale
        )
    except InvalidDataError as exc:
        raise IngestionError(str(exc), path=path) from None


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with tmp.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load(kind: str, path, scheme: Scheme | None = None) -> RatingDataset:
    """Load and normalize a dataset by kind (``lastfm``, ``movielens``, ``canonical``)."""
    if kind == "canonical":
        return read_canonical(path)
    if kind == "lastfm":
        return normalize_ratings(load_lastfm(path), scheme or "per-user-max")
    if kind == "movielens":
        return normalize_ratings(load_movielens(path), scheme or "global-max")
    raise InvalidArgumentError(f"unknown dataset kind {kind!r}")
