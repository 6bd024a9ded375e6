"""Multi-round experiment runner."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import strategies as st
from .data import Dataset, DataError, load_trace
from .metrics import snapshot, top_n_fairness_all
from .model import FairnessLedger, Instance, ParticipationTrace, RoundOutcome

LOG_HEADER = ("round", "strategy", "variance", "total_quality", "mean_quality")


@dataclass(frozen=True)
class NewUser:
    user_id: str
    ratings: Mapping[str, float]
    at_round: int


@dataclass(frozen=True)
class ScenarioConfig:
    strategy: str = "f-fast"
    rounds: int = 100
    # "fixed", "bernoulli:<p>" or "trace:<path>"
    participation: str = "fixed"
    new_user: NewUser | None = None
    track_users: tuple[str, ...] = ()
    metric_every: int = 1
    seed: int = 0
    exact_guard: int = st.DEFAULT_EXACT_GUARD

    def __post_init__(self):
        if self.strategy not in st.STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {', '.join(st.STRATEGIES)}")
        if self.rounds < 1 or self.metric_every < 1:
            raise ValueError("rounds and metric_every must be >= 1")
        kind, _, arg = self.participation.partition(":")
        if kind == "bernoulli":
            p = float(arg)
            if not 0 < p <= 1:
                raise ValueError(f"participation fraction must lie in (0, 1], got {p}")
        elif kind == "trace":
            if not arg:
                raise ValueError("trace participation needs a path: trace:<file>")
        elif kind != "fixed" or arg:
            raise ValueError(f"participation must be fixed, bernoulli:<p> or trace:<path>, got {self.participation!r}")
        if self.new_user is not None and not 0 <= self.new_user.at_round < self.rounds:
            raise ValueError("new-user injection round must be in [0, rounds)")

    @property
    def tracked(self) -> tuple[str, ...]:
        extra = (self.new_user.user_id,) if self.new_user and self.new_user.user_id not in self.track_users else ()
        return tuple(self.track_users) + extra


@dataclass
class LogRow:
    round: int
    strategy: str
    variance: float
    total_quality: float
    mean_quality: float
    tracked: dict[str, float] = field(default_factory=dict)
    # kept in memory only; not part of the file format
    fairness_sum: float = 0.0
    max_abs_fairness: float = 0.0
    consumed_ok: bool = True


@dataclass
class MetricsLog:
    strategy: str
    tracked: tuple[str, ...] = ()
    rows: list[LogRow] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def tracked_series(self, user: str) -> np.ndarray:
        return np.array([r.tracked.get(user, math.nan) for r in self.rows])

    def row(self, t: int) -> LogRow:
        for r in self.rows:
            if r.round == t:
                return r
        raise KeyError(t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_HEADER + tuple(f"F_{u}" for u in self.tracked))
        for r in self.rows:
            w.writerow(
                [r.round, r.strategy, repr(r.variance), repr(r.total_quality), repr(r.mean_quality)]
                + [repr(r.tracked.get(u, math.nan)) for u in self.tracked]
            )
        return buf.getvalue()

    def write(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def read(cls, path) -> "MetricsLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header[:5]) != LOG_HEADER:
                raise DataError(f"{path}: not a metrics log (header {','.join(header)})")
            tracked = tuple(h[2:] for h in header[5:])
            log = None
            for row in reader:
                if log is None:
                    log = cls(strategy=row[1], tracked=tracked)
                log.rows.append(
                    LogRow(
                        round=int(row[0]),
                        strategy=row[1],
                        variance=float(row[2]),
                        total_quality=float(row[3]),
                        mean_quality=float(row[4]),
                        tracked={u: float(v) for u, v in zip(tracked, row[5:])},
                    )
                )
        return log or cls(strategy="", tracked=tracked)


class Participation:
    """Draws the participating users of each round."""

    def __init__(self, spec: str, rng: np.random.Generator):
        kind, _, arg = spec.partition(":")
        self.kind = kind
        self.rng = rng
        self.p = float(arg) if kind == "bernoulli" else 1.0
        self.trace: ParticipationTrace | None = load_trace(arg) if kind == "trace" else None

    def draw(self, t: int, users: Sequence[str]) -> list[str]:
        if self.kind == "fixed":
            return list(users)
        if self.kind == "bernoulli":
            keep = self.rng.random(len(users)) < self.p
            return [u for u, k in zip(users, keep) if k]
        return sorted(self.trace.rounds.get(t, ()))


def inject_new_user(instance: Instance, ledger: FairnessLedger, user_id: str, ratings: Mapping[str, float]) -> Instance:
    """Add a user with zero counters; the D-FAST baseline starts at 0."""
    new = instance.with_user(user_id, ratings)
    ledger.add_user(user_id, new.lists.topn_lists[user_id])
    return new


def play_round(
    strategy: str,
    instance: Instance,
    ledger: FairnessLedger,
    participants: Sequence[str],
    rng: np.random.Generator | None = None,
    exact_guard: int = st.DEFAULT_EXACT_GUARD,
) -> RoundOutcome:
    """Run one strategy round, commit it to the ledger and attach metrics."""
    if strategy == "random":
        out = st.random_round(participants, instance, ledger, rng=rng)
    elif strategy == "exact":
        out = st.exhaustive_opt_round(participants, instance, ledger, guard=exact_guard)
    else:
        out = st.get_strategy(strategy)(participants, instance, ledger)
    ledger.commit([instance.user_index[u] for u in participants], out.output_lists, instance.topn)
    if strategy == "d-fast":
        st.d_fast_record(instance, ledger, participants)
    return replace(out, metrics=snapshot(instance, ledger, out.output_lists))


def run_scenario(config: ScenarioConfig, dataset: Dataset | Instance) -> MetricsLog:
    instance = dataset if isinstance(dataset, Instance) else dataset.instance()
    ledger = FairnessLedger.empty(instance)
    part_rng, strat_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    participation = Participation(config.participation, part_rng)
    if participation.trace is not None:
        unknown = participation.trace.users() - set(instance.user_ids)
        if config.new_user is not None:
            unknown.discard(config.new_user.user_id)
        if unknown:
            raise DataError("trace references unknown users: " + ", ".join(sorted(unknown)[:20]))
    missing = set(config.track_users) - set(instance.user_ids) - ({config.new_user.user_id} if config.new_user else set())
    if missing:
        raise DataError("tracked users not in the dataset: " + ", ".join(sorted(missing)))

    log = MetricsLog(strategy=config.strategy, tracked=config.tracked)
    for t in range(1, config.rounds + 1):
        if config.new_user is not None and t == config.new_user.at_round + 1:
            nu = config.new_user
            instance = inject_new_user(instance, ledger, nu.user_id, nu.ratings)
        users = participation.draw(t, instance.user_ids)
        absent = [u for u in users if u not in instance.user_index]
        if absent:
            raise DataError(f"round {t}: participants not (yet) in the dataset: {', '.join(absent[:20])}")
        out = play_round(config.strategy, instance, ledger, users, strat_rng, config.exact_guard)
        if t % config.metric_every and t != config.rounds:
            continue
        m = out.metrics
        f = top_n_fairness_all(instance, ledger)
        defined = f[~np.isnan(f)]
        consumed_ok = all(out.consumed_capacity[s] <= c for s, c in instance.catalog.services)
        log.rows.append(
            LogRow(
                round=t,
                strategy=config.strategy,
                variance=m.fairness_variance,
                total_quality=m.total_quality,
                mean_quality=m.total_quality / len(users) if users else 0.0,
                tracked={u: m.top_n_fairness.get(u, math.nan) for u in log.tracked},
                fairness_sum=float(defined.sum()),
                max_abs_fairness=float(np.abs(defined).max()) if defined.size else 0.0,
                consumed_ok=consumed_ok,
            )
        )
    return log
