"""Fairness and quality measurements.

Scalar functions mirror the definitions one quantity at a time; the
``*_all`` helpers compute the same numbers for every user at once with numpy
and are what the simulator uses each round.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import FairnessLedger, Instance, MetricsSnapshot, OriginalLists, RatingMatrix


class UndefinedMetric(ValueError):
    """A probability or fairness value with a zero denominator."""


def in_tn(service: str, output_list: Sequence[str], n: int) -> int:
    return int(service in output_list[:n])


def overall_appearance_probability(ledger: FairnessLedger, demand_set: Iterable[str], service: str) -> float:
    num = den = 0
    for u in demand_set:
        num += ledger.appearance_count(u, service)
        den += ledger.participation_count(u)
    if den == 0:
        raise UndefinedMetric(f"no participation recorded for the demand set of {service!r}")
    return num / den


def actual_appearance_probability(ledger: FairnessLedger, user: str, service: str) -> float:
    t = ledger.participation_count(user)
    if t == 0:
        raise UndefinedMetric(f"user {user!r} has not participated yet")
    return ledger.appearance_count(user, service) / t


def service_fairness_degree(p_ij: float, p_j: float) -> float:
    # a service nobody in its demand set has seen yet carries no evidence
    if p_j == 0:
        return 0.0
    return (p_ij - p_j) / p_j


def top_n_fairness(ledger: FairnessLedger, user: str, original: OriginalLists) -> float:
    total = 0.0
    t = ledger.participation_count(user)
    if t == 0:
        raise UndefinedMetric(f"user {user!r} has not participated yet")
    for s in original.topn_lists[user]:
        try:
            p_j = overall_appearance_probability(ledger, original.demand_sets[s], s)
        except UndefinedMetric:
            continue
        total += service_fairness_degree(actual_appearance_probability(ledger, user, s), p_j)
    return total


def fairness_variance(values: Iterable[float]) -> float:
    """Population variance of Top-N Fairness over users with a defined value."""
    arr = np.fromiter((v for v in values if v == v), dtype=float)
    if arr.size == 0:
        raise UndefinedMetric("no user has a defined Top-N Fairness")
    return float(np.mean((arr - arr.mean()) ** 2))


def list_quality(user: str, output_list: Sequence[str], original: OriginalLists, ratings: RatingMatrix) -> float:
    top = original.topn_lists[user]
    r0 = ratings[user, top[0]]
    kept = set(output_list[: original.topn]) & set(top)
    pos = original.positions[user]
    return math.fsum(ratings[user, s] / math.log2(pos[s] + 1) for s in kept) / r0


# vectorised forms --------------------------------------------------------


def service_probabilities(instance: Instance, ledger: FairnessLedger) -> np.ndarray:
    """Overall appearance probability per service; 0 where undefined."""
    m = instance.n_services
    top, mask = instance.top, instance.mask
    idx = top[mask]
    num = np.bincount(idx, weights=ledger.appearances[mask].astype(float), minlength=m)
    part = np.broadcast_to(ledger.participation[:, None], top.shape)
    den = np.bincount(idx, weights=part[mask].astype(float), minlength=m)
    out = np.zeros(m)
    np.divide(num, den, out=out, where=den > 0)
    return out


def top_n_fairness_all(instance: Instance, ledger: FairnessLedger, p: np.ndarray | None = None) -> np.ndarray:
    """Top-N Fairness of every user; NaN for users who never participated."""
    if p is None:
        p = service_probabilities(instance, ledger)
    part = ledger.participation.astype(float)
    seen = part > 0
    p_ij = np.zeros(instance.top.shape)
    np.divide(ledger.appearances, part[:, None], out=p_ij, where=seen[:, None])
    p_j = np.where(instance.mask, p[instance.top], 0.0)
    live = p_j > 0
    terms = np.zeros_like(p_ij)
    np.divide(p_ij - p_j, p_j, out=terms, where=live)
    f = terms.sum(axis=1)
    f[~seen] = np.nan
    return f


def quality_all(instance: Instance, output_lists: Mapping[str, Sequence[str]]) -> dict[str, float]:
    out = {}
    for u, lst in output_lists.items():
        i = instance.user_index[u]
        window = instance.lists.positions[u]
        out[u] = math.fsum(instance.contrib[i, window[s] - 1] for s in lst[: instance.topn] if s in window)
    return out


def total_quality(instance: Instance, output_lists: Mapping[str, Sequence[str]]) -> float:
    # fsum over individual contributions so equal allocations give equal totals
    parts = []
    for u, lst in output_lists.items():
        i = instance.user_index[u]
        window = instance.lists.positions[u]
        parts.extend(instance.contrib[i, window[s] - 1] for s in lst[: instance.topn] if s in window)
    return math.fsum(parts)


def snapshot(instance: Instance, ledger: FairnessLedger, output_lists: Mapping[str, Sequence[str]]) -> MetricsSnapshot:
    f = top_n_fairness_all(instance, ledger)
    defined = ~np.isnan(f)
    fair = {instance.user_ids[i]: float(f[i]) for i in np.flatnonzero(defined)}
    var = float(np.mean((f[defined] - f[defined].mean()) ** 2)) if defined.any() else math.nan
    return MetricsSnapshot(
        top_n_fairness=fair,
        fairness_variance=var,
        quality=quality_all(instance, output_lists),
        total_quality=total_quality(instance, output_lists),
    )
