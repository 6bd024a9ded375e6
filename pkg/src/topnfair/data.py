"""Synthetic dataset generation and the comma-separated file formats.

Files (all with a header row):

* ratings       ``user_id,service_id,rating``
* services      ``service_id,capacity``
* participation ``round,user_id``
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .model import (
    Instance,
    ModelError,
    OriginalLists,
    ParticipationTrace,
    RatingMatrix,
    ServiceCatalog,
    build_original_lists,
)

REGIMES = ("very-popular", "popular", "ordinary", "unpopular")

# Capacity ranges that keep each demand band satisfiable with 800 users,
# 50 services and N=5 (4000 demand slots in total).
DEFAULT_CAPACITY = {
    "very-popular": (20, 40),
    "popular": (50, 100),
    "ordinary": (80, 90),
    "unpopular": (100, 150),
}
RATING_LOW, RATING_HIGH = 1.0, 5.0


class DataError(ValueError):
    """Malformed or invariant-violating input file."""


class InfeasibleSpecError(ValueError):
    """No dataset can satisfy the requested regime band."""


@dataclass(frozen=True)
class Dataset:
    catalog: ServiceCatalog
    ratings: RatingMatrix
    lists: OriginalLists

    def instance(self) -> Instance:
        return Instance(self.catalog, self.ratings, self.lists)

    def with_topn(self, n: int) -> "Dataset":
        return Dataset(self.catalog, self.ratings, build_original_lists(self.ratings, n))


@dataclass(frozen=True)
class SyntheticSpec:
    regime: str = "popular"
    n_users: int = 800
    n_services: int = 50
    capacity_range: tuple[int, int] | None = None
    topn: int = 5
    seed: int = 0
    # services each user rates; None rates the whole catalog
    ratings_per_user: int | None = None
    capacity_attempts: int = 1000

    def resolved_capacity(self) -> tuple[int, int]:
        return self.capacity_range or DEFAULT_CAPACITY[self.regime]


def demand_band(regime: str, capacity: int, n_users: int) -> tuple[int, int]:
    """Inclusive integer bounds on |U_j| for one service."""
    c = capacity
    if regime == "very-popular":
        lo, hi = 2 * c + 1, n_users
    elif regime == "popular":
        lo, hi = c + 1, 2 * c
    elif regime == "ordinary":
        lo, hi = -(-9 * c // 10), c - 1
    elif regime == "unpopular":
        lo, hi = 1, -(-9 * c // 10) - 1
    else:
        raise InfeasibleSpecError(f"unknown regime {regime!r}; choose from {', '.join(REGIMES)}")
    return lo, min(hi, n_users)


def band_label(regime: str) -> str:
    return {
        "very-popular": "|U_j| > 2 c_j",
        "popular": "c_j < |U_j| <= 2 c_j",
        "ordinary": "0.9 c_j <= |U_j| < c_j",
        "unpopular": "|U_j| < 0.9 c_j",
    }[regime]


def regime_of(size: int, capacity: int) -> str | None:
    # demand exactly equal to capacity sits between the ordinary and popular bands
    if size == capacity:
        return None
    if size > 2 * capacity:
        return "very-popular"
    if size > capacity:
        return "popular"
    if 10 * size >= 9 * capacity:
        return "ordinary"
    return "unpopular"


def _check_spec(spec: SyntheticSpec):
    problems = []
    if spec.regime not in REGIMES:
        raise InfeasibleSpecError(f"unknown regime {spec.regime!r}; choose from {', '.join(REGIMES)}")
    if spec.n_users < 1 or spec.n_services < 1:
        problems.append("need at least one user and one service")
    if spec.topn < 1 or spec.topn > spec.n_services:
        problems.append(f"top-N {spec.topn} must lie in [1, n_services={spec.n_services}]")
    lo, hi = spec.resolved_capacity()
    if lo < 1 or hi < lo:
        problems.append(f"capacity range {lo}-{hi} is not a positive interval")
    k = spec.ratings_per_user
    if k is not None and not (spec.topn <= k <= spec.n_services):
        problems.append(f"ratings_per_user {k} must lie in [topn, n_services]")
    if problems:
        raise InfeasibleSpecError("; ".join(problems))


def _draw_capacities(spec: SyntheticSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo, hi = spec.resolved_capacity()
    slots = spec.n_users * spec.topn
    last = None
    for _ in range(spec.capacity_attempts):
        cap = rng.integers(lo, hi + 1, size=spec.n_services)
        bands = np.array([demand_band(spec.regime, int(c), spec.n_users) for c in cap])
        low, high = bands[:, 0], bands[:, 1]
        if (low <= high).all() and low.sum() <= slots <= high.sum():
            return cap, low, high
        last = (int(low.sum()), int(high.sum()), bool((low <= high).all()))
    sum_lo, sum_hi, nonempty = last
    detail = f"band {band_label(spec.regime)} needs total demand in [{sum_lo}, {sum_hi}]"
    if not nonempty:
        detail += " and some capacities leave the band empty"
    raise InfeasibleSpecError(
        f"regime {spec.regime!r} infeasible: {spec.n_users} users x N={spec.topn} = {slots} demand slots; "
        f"{detail} (capacities {lo}-{hi}, {spec.capacity_attempts} draws tried)"
    )


def _draw_demand(low, high, slots, rng) -> np.ndarray:
    size = low.copy()
    extra = slots - int(size.sum())
    while extra > 0:
        open_ = np.flatnonzero(size < high)
        add = rng.multinomial(extra, np.full(open_.size, 1 / open_.size))
        add = np.minimum(add, high[open_] - size[open_])
        size[open_] += add
        extra -= int(add.sum())
    return size


def _assign_users(sizes: np.ndarray, n_users: int, topn: int, rng) -> list[list[int]]:
    """Realise the bipartite degree sequence: every user gets exactly ``topn``
    services, service j gets ``sizes[j]`` users. Largest services first, each
    taking the users with the most free slots (random tie-break)."""
    free = np.full(n_users, topn)
    plan: list[list[int]] = [[] for _ in range(n_users)]
    for j in sorted(range(sizes.size), key=lambda j: (-sizes[j], j)):
        d = int(sizes[j])
        key = free + rng.random(n_users)
        pick = np.argsort(-key, kind="stable")[:d]
        if (free[pick] <= 0).any():
            raise InfeasibleSpecError("demand sizes cannot be realised with distinct services per user")
        free[pick] -= 1
        for u in pick:
            plan[u].append(j)
    return plan


def _draw_ratings(rng: np.random.Generator, topn: int, k: int) -> np.ndarray:
    """Descending ratings: ``topn`` planned values uniform on the rating scale,
    then ``k - topn`` values strictly below the smallest planned one."""
    while True:
        top = np.sort(rng.uniform(RATING_LOW, RATING_HIGH, size=topn))[::-1]
        rest = np.sort(rng.uniform(RATING_LOW, top[-1], size=k - topn))[::-1]
        vals = np.concatenate([top, rest])
        if np.unique(vals).size == k and (k == topn or rest[0] < top[-1]):
            return vals


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw capacities, per-service demand sizes inside the regime band,
    a user-to-service plan and ratings that reproduce the plan as top-N.
    """
    _check_spec(spec)
    rng = np.random.default_rng(spec.seed)
    cap, low, high = _draw_capacities(spec, rng)
    sizes = _draw_demand(low, high, spec.n_users * spec.topn, rng)
    plan = _assign_users(sizes, spec.n_users, spec.topn, rng)

    uw, sw = len(str(spec.n_users - 1)), len(str(spec.n_services - 1))
    users = [f"u{i:0{uw}d}" for i in range(spec.n_users)]
    services = [f"s{j:0{sw}d}" for j in range(spec.n_services)]
    k = spec.ratings_per_user or spec.n_services

    ratings = {}
    for u, mine in zip(users, plan):
        others = np.setdiff1d(np.arange(spec.n_services), mine)
        others = rng.permutation(others)[: k - spec.topn]
        vals = _draw_ratings(rng, spec.topn, k)
        order = rng.permutation(spec.topn)
        for slot, j in zip(order, mine):
            ratings[u, services[j]] = float(vals[slot])
        for v, j in zip(vals[spec.topn :], others):
            ratings[u, services[int(j)]] = float(v)

    catalog = ServiceCatalog(tuple((s, int(c)) for s, c in zip(services, cap)))
    matrix = RatingMatrix(ratings)
    lists = build_original_lists(matrix, spec.topn)
    for s, c in catalog.services:
        got = len(lists.demand_sets.get(s, ()))
        lo, hi = demand_band(spec.regime, c, spec.n_users)
        if not lo <= got <= hi:
            raise InfeasibleSpecError(f"service {s}: |U_j|={got} outside {band_label(spec.regime)} for c_j={c}")
    return Dataset(catalog, matrix, lists)


def new_user_ratings(dataset: Dataset, seed: int) -> dict[str, float]:
    """Ratings for one extra user drawn like the synthetic users: a random
    top-N plan over the catalog, the rest of the catalog below it."""
    rng = np.random.default_rng(seed)
    services = dataset.catalog.ids
    order = rng.permutation(len(services))
    vals = _draw_ratings(rng, dataset.lists.topn, len(services))
    return {services[j]: float(v) for j, v in zip(order, vals)}


def apply_conversion_rate(raw_capacity: int, conversion_rate: float) -> int:
    """Recommendation capacity that yields ``raw_capacity`` actual uses."""
    if not (0 < conversion_rate <= 1):
        raise ValueError(f"conversion rate must lie in (0, 1], got {conversion_rate!r}")
    q = raw_capacity / conversion_rate
    # guard ceil against representation error such as 50 / 0.5000000000000001
    r = round(q)
    return int(r) if math.isclose(q, r, rel_tol=1e-12) else math.ceil(q)


# file formats ------------------------------------------------------------


def _rows(path: Path, header: tuple[str, ...]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected header {','.join(header)}") from None
        if tuple(c.strip() for c in first) != header:
            raise DataError(f"{path}:1: expected header {','.join(header)}, got {','.join(first)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [c.strip() for c in row]


def load_services(path, conversion_rate: float = 1.0) -> ServiceCatalog:
    """Read a services file; capacities may be converted from actual-use
    capacity to recommendation capacity with ``conversion_rate``."""
    path = Path(path)
    out: dict[str, int] = {}
    for line, (sid, cap) in _rows(path, ("service_id", "capacity")):
        try:
            c = int(cap)
        except ValueError:
            raise DataError(f"{path}:{line}: capacity {cap!r} is not an integer") from None
        if c < 1:
            raise DataError(f"{path}:{line}: capacity must be >= 1, got {c}")
        if sid in out:
            raise DataError(f"{path}:{line}: duplicate service {sid!r}")
        out[sid] = apply_conversion_rate(c, conversion_rate) if conversion_rate != 1.0 else c
    return ServiceCatalog.from_mapping(out)


def load_ratings(path, catalog: ServiceCatalog | None = None) -> RatingMatrix:
    path = Path(path)
    out: dict[tuple[str, str], float] = {}
    for line, (u, s, r) in _rows(path, ("user_id", "service_id", "rating")):
        try:
            v = float(r)
        except ValueError:
            raise DataError(f"{path}:{line}: rating {r!r} is not a number") from None
        if not (v > 0) or not math.isfinite(v):
            raise DataError(f"{path}:{line}: rating must be positive, got {r}")
        if (u, s) in out:
            raise DataError(f"{path}:{line}: duplicate rating for ({u}, {s})")
        out[u, s] = v
    if catalog is not None:
        unknown = sorted({s for _, s in out} - set(catalog.capacity))
        if unknown:
            raise DataError(f"{path}: unknown service ids: {', '.join(unknown)}")
    return RatingMatrix(out)


def load_trace(path) -> ParticipationTrace:
    path = Path(path)
    rounds: dict[int, set[str]] = {}
    for line, (t, u) in _rows(path, ("round", "user_id")):
        try:
            r = int(t)
        except ValueError:
            raise DataError(f"{path}:{line}: round {t!r} is not an integer") from None
        if r < 1:
            raise DataError(f"{path}:{line}: rounds start at 1, got {r}")
        rounds.setdefault(r, set()).add(u)
    return ParticipationTrace({r: frozenset(us) for r, us in sorted(rounds.items())})


def load_dataset(directory, topn: int, conversion_rate: float = 1.0) -> Dataset:
    directory = Path(directory)
    catalog = load_services(directory / "services.csv", conversion_rate)
    ratings = load_ratings(directory / "ratings.csv", catalog)
    try:
        lists = build_original_lists(ratings, topn)
    except ModelError as exc:
        raise DataError(str(exc)) from None
    return Dataset(catalog, ratings, lists)


def _write(path: Path, header: Iterable[str], rows: Iterable[Iterable]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def write_services(path, catalog: ServiceCatalog):
    _write(Path(path), ("service_id", "capacity"), catalog.services)


def write_ratings(path, ratings: RatingMatrix):
    rows = ((u, s, repr(r)) for (u, s), r in sorted(ratings.ratings.items()))
    _write(Path(path), ("user_id", "service_id", "rating"), rows)


def write_trace(path, trace: ParticipationTrace):
    rows = ((r, u) for r, us in sorted(trace.rounds.items()) for u in sorted(us))
    _write(Path(path), ("round", "user_id"), rows)
