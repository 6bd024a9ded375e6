"""Domain types shared by the metrics, strategies and the simulator.

Everything here is immutable after construction except :class:`FairnessLedger`,
which the simulator mutates between rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class ModelError(ValueError):
    """Raised when input data violates a domain invariant."""


@dataclass(frozen=True)
class ServiceCatalog:
    services: tuple[tuple[str, int], ...]

    def __post_init__(self):
        seen = set()
        for sid, cap in self.services:
            if sid in seen:
                raise ModelError(f"duplicate service id {sid!r}")
            seen.add(sid)
            if int(cap) != cap or cap < 1:
                raise ModelError(f"service {sid!r}: capacity must be a positive integer, got {cap!r}")

    @classmethod
    def from_mapping(cls, capacities: Mapping[str, int]) -> "ServiceCatalog":
        return cls(tuple((sid, int(c)) for sid, c in capacities.items()))

    @cached_property
    def capacity(self) -> dict[str, int]:
        return dict(self.services)

    @property
    def ids(self) -> list[str]:
        return [sid for sid, _ in self.services]

    def __len__(self):
        return len(self.services)

    def __contains__(self, sid):
        return sid in self.capacity


@dataclass(frozen=True)
class RatingMatrix:
    """Sparse (user, service) -> rating map; ratings are strictly positive."""

    ratings: Mapping[tuple[str, str], float]

    def __post_init__(self):
        for (u, s), r in self.ratings.items():
            if not (r > 0) or not math.isfinite(r):
                raise ModelError(f"rating for ({u!r}, {s!r}) must be positive and finite, got {r!r}")

    @cached_property
    def by_user(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for (u, s), r in self.ratings.items():
            out.setdefault(u, {})[s] = r
        return out

    @property
    def users(self) -> list[str]:
        return sorted(self.by_user)

    def __getitem__(self, key: tuple[str, str]) -> float:
        return self.ratings[key]

    def __len__(self):
        return len(self.ratings)


@dataclass(frozen=True)
class OriginalLists:
    full_lists: Mapping[str, tuple[str, ...]]
    topn: int
    topn_lists: Mapping[str, tuple[str, ...]]
    demand_sets: Mapping[str, frozenset[str]]
    positions: Mapping[str, Mapping[str, int]]

    @property
    def users(self) -> list[str]:
        return sorted(self.full_lists)


def rank_services(user_ratings: Mapping[str, float]) -> tuple[str, ...]:
    # descending rating, ascending service id on ties
    return tuple(sorted(user_ratings, key=lambda s: (-user_ratings[s], s)))


def build_original_lists(ratings: RatingMatrix, n: int, users: Iterable[str] | None = None) -> OriginalLists:
    """Rank every user's rated services and cut the top-``n`` window.

    ``users`` lets callers demand lists for users that may have no ratings at
    all; such users are reported together in one error.
    """
    if n < 1:
        raise ModelError(f"top-N must be >= 1, got {n}")
    by_user = ratings.by_user
    wanted = sorted(set(users) | set(by_user)) if users is not None else sorted(by_user)
    empty = [u for u in wanted if not by_user.get(u)]
    if empty:
        raise ModelError("users with zero rated services: " + ", ".join(map(str, empty)))

    full, top, pos = {}, {}, {}
    demand: dict[str, set[str]] = {}
    for u in wanted:
        ranked = rank_services(by_user[u])
        full[u] = ranked
        top[u] = ranked[:n]
        pos[u] = {s: k + 1 for k, s in enumerate(top[u])}
        for s in top[u]:
            demand.setdefault(s, set()).add(u)
    return OriginalLists(
        full_lists=full,
        topn=n,
        topn_lists=top,
        demand_sets={s: frozenset(us) for s, us in sorted(demand.items())},
        positions=pos,
    )


def demand_from_topn(topn_lists: Mapping[str, Sequence[str]]) -> dict[str, frozenset[str]]:
    out: dict[str, set[str]] = {}
    for u, lst in topn_lists.items():
        for s in lst:
            out.setdefault(s, set()).add(u)
    return {s: frozenset(us) for s, us in out.items()}


class Instance:
    """Catalog, ratings and original lists plus the dense index arrays the
    strategies and vectorised metrics work on.

    Users are indexed in insertion order (sorted ids at construction, new users
    appended). Tie-breaks always go through the user id, never the index.
    """

    def __init__(self, catalog: ServiceCatalog, ratings: RatingMatrix, lists: OriginalLists):
        unknown = sorted({s for lst in lists.full_lists.values() for s in lst} - set(catalog.capacity))
        if unknown:
            raise ModelError("services missing from the catalog: " + ", ".join(unknown))
        self.catalog = catalog
        self.ratings = ratings
        self.lists = lists
        self.topn = lists.topn
        self.service_ids = catalog.ids
        self.service_index = {s: j for j, s in enumerate(self.service_ids)}
        self.capacity = np.array([c for _, c in catalog.services], dtype=np.int64)
        self.user_ids: list[str] = []
        self.user_index: dict[str, int] = {}
        self._top_rows: list[list[int]] = []
        self._contrib_rows: list[list[float]] = []
        self.fillers: list[tuple[str, ...]] = []
        for u in lists.users:
            self._append_user(u)
        self._freeze()

    def _append_user(self, u: str):
        top = self.lists.topn_lists[u]
        r = self.ratings.by_user[u]
        if not top:
            raise ModelError(f"user {u!r} has an empty top-N list")
        r0 = r[top[0]]
        self.user_index[u] = len(self.user_ids)
        self.user_ids.append(u)
        self._top_rows.append([self.service_index[s] for s in top])
        self._contrib_rows.append([quality_contribution(r[s], k + 1, r0) for k, s in enumerate(top)])
        self.fillers.append(tuple(self.lists.full_lists[u][self.topn:]))

    def _freeze(self):
        n, N = len(self.user_ids), self.topn
        self.top = np.full((n, N), -1, dtype=np.int64)
        self.contrib = np.zeros((n, N))
        self.length = np.zeros(n, dtype=np.int64)
        for i, (row, crow) in enumerate(zip(self._top_rows, self._contrib_rows)):
            self.top[i, : len(row)] = row
            self.contrib[i, : len(crow)] = crow
            self.length[i] = len(row)
        self.mask = self.top >= 0
        self.uid_rank = np.argsort(np.argsort(np.array(self.user_ids, dtype=object)))
        demand: list[list[int]] = [[] for _ in self.service_ids]
        for i in sorted(range(n), key=lambda i: self.user_ids[i]):
            for j in self._top_rows[i]:
                demand[j].append(i)
        self.demand = [np.array(d, dtype=np.int64) for d in demand]

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_services(self) -> int:
        return len(self.service_ids)

    def with_user(self, user_id: str, user_ratings: Mapping[str, float]) -> "Instance":
        """Return a new instance with one extra user appended at the end."""
        if user_id in self.user_index:
            raise ModelError(f"user id {user_id!r} already exists")
        if not user_ratings:
            raise ModelError(f"new user {user_id!r} has no rated services")
        merged = dict(self.ratings.ratings)
        merged.update({(user_id, s): float(v) for s, v in user_ratings.items()})
        ratings = RatingMatrix(merged)
        ranked = rank_services(ratings.by_user[user_id])
        full = dict(self.lists.full_lists)
        full[user_id] = ranked
        top = dict(self.lists.topn_lists)
        top[user_id] = ranked[: self.topn]
        pos = dict(self.lists.positions)
        pos[user_id] = {s: k + 1 for k, s in enumerate(top[user_id])}
        lists = OriginalLists(full, self.topn, top, demand_from_topn(top), pos)
        new = Instance.__new__(Instance)
        new.__dict__.update(self.__dict__)
        new.ratings, new.lists = ratings, lists
        new.user_ids = list(self.user_ids)
        new.user_index = dict(self.user_index)
        new._top_rows = list(self._top_rows)
        new._contrib_rows = list(self._contrib_rows)
        new.fillers = list(self.fillers)
        unknown = sorted(set(ranked) - set(self.service_index))
        if unknown:
            raise ModelError("services missing from the catalog: " + ", ".join(unknown))
        new._append_user(user_id)
        new._freeze()
        return new


def quality_contribution(rating: float, position: int, top_rating: float) -> float:
    """Discounted, top-rating-normalised gain of keeping one original top-N service."""
    return rating / math.log2(position + 1) / top_rating


@dataclass
class FairnessLedger:
    """Per-user appearance and participation counters.

    ``appearances[i, k]`` counts rounds in which the k-th service of user i's
    top-N window appeared in the top N of the user's output list.
    """

    user_ids: list[str]
    topn_lists: list[tuple[str, ...]]
    appearances: np.ndarray
    participation: np.ndarray
    round_index: int = 0
    # D-FAST baseline: average fairness recorded at each user's last round.
    last_average: np.ndarray = field(default=None)
    average_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.last_average is None:
            self.last_average = np.zeros(len(self.user_ids))
        self._index = {u: i for i, u in enumerate(self.user_ids)}

    @classmethod
    def empty(cls, instance: Instance) -> "FairnessLedger":
        n, N = instance.n_users, instance.topn
        return cls(
            user_ids=list(instance.user_ids),
            topn_lists=[instance.lists.topn_lists[u] for u in instance.user_ids],
            appearances=np.zeros((n, N), dtype=np.int64),
            participation=np.zeros(n, dtype=np.int64),
        )

    def add_user(self, user_id: str, topn_list: Sequence[str]):
        if user_id in self._index:
            raise ModelError(f"user id {user_id!r} already in the ledger")
        N = self.appearances.shape[1]
        self._index[user_id] = len(self.user_ids)
        self.user_ids.append(user_id)
        self.topn_lists.append(tuple(topn_list))
        self.appearances = np.vstack([self.appearances, np.zeros((1, N), dtype=np.int64)])
        self.participation = np.append(self.participation, 0)
        self.last_average = np.append(self.last_average, 0.0)

    def index(self, user_id: str) -> int:
        return self._index[user_id]

    def appearance_count(self, user_id: str, service_id: str) -> int:
        i = self._index[user_id]
        k = self.topn_lists[i].index(service_id)
        return int(self.appearances[i, k])

    def participation_count(self, user_id: str) -> int:
        return int(self.participation[self._index[user_id]])

    def commit(self, participants: Iterable[int], output_lists: Mapping[str, Sequence[str]], topn: int):
        """Record one finished round: every participant's count goes up, and
        every top-N output entry that belongs to the user's window is counted."""
        for i in participants:
            u = self.user_ids[i]
            self.participation[i] += 1
            window = self.topn_lists[i]
            for s in output_lists.get(u, ())[:topn]:
                if s in window:
                    self.appearances[i, window.index(s)] += 1
        self.round_index += 1

    def check(self):
        if (self.appearances < 0).any() or (self.appearances > self.participation[:, None]).any():
            raise ModelError("appearance counts out of [0, participation]")
        if (self.participation > self.round_index).any():
            raise ModelError("participation exceeds the round index")


@dataclass(frozen=True)
class MetricsSnapshot:
    top_n_fairness: dict[str, float]
    fairness_variance: float
    quality: dict[str, float]
    total_quality: float


@dataclass(frozen=True)
class RoundOutcome:
    output_lists: dict[str, tuple[str, ...]]
    consumed_capacity: dict[str, int]
    metrics: MetricsSnapshot | None = None


@dataclass(frozen=True)
class ParticipationTrace:
    rounds: dict[int, frozenset[str]]

    def users(self) -> set[str]:
        return set().union(*self.rounds.values()) if self.rounds else set()
