"""Popularity ranks of users and items.

Popularity is the number of distinct counterparties: items a user touched,
users who touched an item. Rank 1 is the most popular entity; ties go to
the smaller raw id. The model consumes ranks normalized by the population
size, ``x = user_rank / n`` and ``y = item_rank / m``, which lie in (0, 1].
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError


@dataclass(frozen=True)
class _Ranking:
    ids: np.ndarray      # sorted ascending, for lookups
    counts: np.ndarray   # aligned with ids
    ranks: np.ndarray    # aligned with ids, a permutation of 1..len(ids)

    def __len__(self):
        return len(self.ids)

    def positions(self, keys, kind: str) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self.ids, keys)
        pos_c = np.minimum(pos, len(self.ids) - 1)
        missing = self.ids[pos_c] != keys
        if np.any(missing):
            bad = keys[np.argmax(missing)]
            raise InvalidStateError(f"{kind} {int(bad)} has no popularity rank")
        return pos_c


def _rank(ids: np.ndarray, counts: np.ndarray) -> _Ranking:
    # ids arrive sorted ascending, so a stable sort on -count breaks ties by id
    order = np.argsort(-counts, kind="stable")
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[order] = np.arange(1, len(ids) + 1)
    return _Ranking(ids, counts, ranks)


class RankTable:
    """Popularity ranks for every user and item seen in the interactions."""

    def __init__(self, users: _Ranking, items: _Ranking):
        self._users = users
        self._items = items

    @property
    def n_users(self) -> int:
        return len(self._users)

    @property
    def n_items(self) -> int:
        return len(self._items)

    @property
    def user_rank(self) -> dict[int, int]:
        return dict(zip(self._users.ids.tolist(), self._users.ranks.tolist()))

    @property
    def item_rank(self) -> dict[int, int]:
        return dict(zip(self._items.ids.tolist(), self._items.ranks.tolist()))

    def has_user(self, user) -> bool:
        pos = np.searchsorted(self._users.ids, user)
        return pos < len(self._users) and self._users.ids[pos] == user

    def has_item(self, item) -> bool:
        pos = np.searchsorted(self._items.ids, item)
        return pos < len(self._items) and self._items.ids[pos] == item

    def x(self, user) -> float:
        """Normalized rank of one user."""
        return float(self.xs([user])[0])

    def y(self, item) -> float:
        """Normalized rank of one item."""
        return float(self.ys([item])[0])

    def xs(self, users) -> np.ndarray:
        pos = self._users.positions(users, "user")
        return self._users.ranks[pos] / self.n_users

    def ys(self, items) -> np.ndarray:
        pos = self._items.positions(items, "item")
        return self._items.ranks[pos] / self.n_items

    def to_table(self) -> str:
        """Tab-separated dump: ``kind, id, count, rank, normalized_rank``, by rank."""
        out = io.StringIO()
        out.write("kind\tid\tcount\trank\tnormalized_rank\n")
        for kind, r in (("user", self._users), ("item", self._items)):
            for p in np.argsort(r.ranks, kind="stable"):
                rank = int(r.ranks[p])
                out.write(f"{kind}\t{int(r.ids[p])}\t{int(r.counts[p])}\t{rank}\t{rank / len(r)!r}\n")
        return out.getvalue()


def compute_ranks(interactions) -> RankTable:
    """Rank users and items by descending distinct-counterparty count.

    ``interactions`` is a :class:`~matrec.dataio.RatingDataset` or any
    sequence of objects with ``user_id`` and ``item_id`` attributes.
    """
    if hasattr(interactions, "user_ids") and hasattr(interactions, "item_ids"):
        users = np.asarray(interactions.user_ids, dtype=np.int64)
        items = np.asarray(interactions.item_ids, dtype=np.int64)
    else:
        seq = list(interactions)
        users = np.fromiter((t.user_id for t in seq), dtype=np.int64, count=len(seq))
        items = np.fromiter((t.item_id for t in seq), dtype=np.int64, count=len(seq))
    if len(users) == 0:
        raise InvalidArgumentError("cannot rank an empty interaction set")

    pairs = np.unique(np.stack([users, items], axis=1), axis=0)
    user_ids, user_counts = np.unique(pairs[:, 0], return_counts=True)
    item_ids, item_counts = np.unique(pairs[:, 1], return_counts=True)
    return RankTable(_rank(user_ids, user_counts), _rank(item_ids, item_counts))
