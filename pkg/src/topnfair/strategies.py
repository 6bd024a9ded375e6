"""Per-round list generation strategies.

Every strategy takes the round's participants (user ids), the problem
instance and the ledger, and returns a :class:`RoundOutcome`. Only placements
inside a user's original top-N window consume capacity; the remaining slots
of the output window are padded from lower positions of the original list.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .metrics import service_probabilities, top_n_fairness_all
from .model import FairnessLedger, Instance, RoundOutcome

STRATEGIES = ("f-fast", "d-fast", "quality-max", "exact", "random")
DEFAULT_EXACT_GUARD = 20


class SizeGuardError(RuntimeError):
    """The exact optimiser refuses instances above its variable budget."""


@dataclass
class InRoundState:
    """Mutable bookkeeping for one F-FAST round (indices, not ids)."""

    remaining: np.ndarray
    working: dict[int, float] = field(default_factory=dict)
    attempted: dict[int, int] = field(default_factory=dict)
    placed: dict[int, list[int]] = field(default_factory=dict)


def _indices(instance: Instance, participants: Sequence[str]) -> list[int]:
    return [instance.user_index[u] for u in participants]


def assemble_outcome(instance: Instance, kept: dict[int, list[int]]) -> RoundOutcome:
    """Build output lists from retained top-N positions (0-based, ascending)
    and pad each window with lower-ranked services of the original list."""
    out = {}
    consumed = np.zeros(instance.n_services, dtype=np.int64)
    for i, ks in kept.items():
        u = instance.user_ids[i]
        top = instance.lists.topn_lists[u]
        lst = [top[k] for k in sorted(ks)]
        for k in ks:
            consumed[instance.top[i, k]] += 1
        need = len(top) - len(lst)
        lst.extend(instance.fillers[i][:need])
        out[u] = tuple(lst)
    return RoundOutcome(
        output_lists=out,
        consumed_capacity={s: int(c) for s, c in zip(instance.service_ids, consumed)},
    )


# fairness-driven greedy ----------------------------------------------------


def update_working_fairness(
    instance: Instance,
    ledger: FairnessLedger,
    i: int,
    p_prev: np.ndarray,
    attempted: int,
    placed: Sequence[int],
    shift: float = 0.0,
) -> float:
    """Re-evaluate user ``i``'s fairness partway through a round.

    Window slots already attempted this round use interim counts (this round
    counted as participated, placements so far counted as appearances); slots
    not yet attempted keep their stored probability. Terms whose service has
    a zero previous overall probability are neutral.
    """
    t = int(ledger.participation[i])
    total = 0.0
    placed = set(placed)
    for k in range(int(instance.length[i])):
        p_j = p_prev[instance.top[i, k]]
        if p_j <= 0:
            continue
        a = int(ledger.appearances[i, k])
        if k < attempted:
            p_ij = (a + (k in placed)) / (t + 1)
        elif t > 0:
            p_ij = a / t
        else:
            continue
        total += (p_ij - p_j) / p_j
    return total + shift


def f_fast_round(
    participants: Sequence[str],
    instance: Instance,
    ledger: FairnessLedger,
    shifts: dict[int, float] | None = None,
) -> RoundOutcome:
    """Lowest-fairness-first allocation.

    Equivalent to re-sorting all users before every step: only the user just
    served changes fairness, so it is popped and re-pushed with its new key.
    Ties go to the smaller user id.
    """
    idx = _indices(instance, participants)
    if not idx:
        return assemble_outcome(instance, {})
    shifts = shifts or {}
    p_prev = service_probabilities(instance, ledger)
    stored = np.nan_to_num(top_n_fairness_all(instance, ledger, p_prev), nan=0.0)
    state = InRoundState(remaining=instance.capacity.copy())
    heap = []
    for i in idx:
        state.working[i] = float(stored[i]) + shifts.get(i, 0.0)
        state.attempted[i] = 0
        state.placed[i] = []
        heap.append((state.working[i], instance.user_ids[i], i))
    heapq.heapify(heap)
    left = int(state.remaining.sum())
    steps, bound = 0, len(idx) * instance.topn
    while heap and left > 0 and steps < bound:
        _, uid, i = heapq.heappop(heap)
        k = state.attempted[i]
        j = instance.top[i, k]
        state.attempted[i] = k + 1
        steps += 1
        if state.remaining[j] > 0:
            state.remaining[j] -= 1
            left -= 1
            state.placed[i].append(k)
            state.working[i] = update_working_fairness(
                instance, ledger, i, p_prev, k + 1, state.placed[i], shifts.get(i, 0.0)
            )
        if state.attempted[i] < instance.length[i]:
            heapq.heappush(heap, (state.working[i], uid, i))
    return assemble_outcome(instance, state.placed)


def d_fast_prepare(instance: Instance, ledger: FairnessLedger, participants: Sequence[str]) -> dict[int, float]:
    """Baseline shift per participant: average fairness at the user's last
    round minus the current average over this round's participants.

    Users who never participated count as fairness 0 with a recorded average
    of 0.
    """
    idx = _indices(instance, participants)
    if not idx:
        return {}
    stored = np.nan_to_num(top_n_fairness_all(instance, ledger), nan=0.0)
    avg_now = float(np.mean(stored[idx]))
    return {i: float(ledger.last_average[i]) - avg_now for i in idx}


def d_fast_record(instance: Instance, ledger: FairnessLedger, participants: Sequence[str]):
    """After commit: store this round's participant average for each participant."""
    idx = _indices(instance, participants)
    if not idx:
        ledger.average_history.append(math.nan)
        return
    f = np.nan_to_num(top_n_fairness_all(instance, ledger), nan=0.0)
    avg = float(np.mean(f[idx]))
    ledger.last_average[idx] = avg
    ledger.average_history.append(avg)


def d_fast_round(participants, instance, ledger) -> RoundOutcome:
    return f_fast_round(participants, instance, ledger, shifts=d_fast_prepare(instance, ledger, participants))


# quality baselines ---------------------------------------------------------


def _demanders(instance: Instance, idx: Sequence[int]) -> dict[int, list[tuple[int, int]]]:
    """service -> [(user index, window slot)] for participating demanders, by user id."""
    by_service: dict[int, list[tuple[int, int]]] = {}
    for i in sorted(idx, key=lambda i: instance.user_ids[i]):
        for k in range(int(instance.length[i])):
            by_service.setdefault(int(instance.top[i, k]), []).append((i, k))
    return by_service


def quality_max_round(participants, instance: Instance, ledger: FairnessLedger | None = None) -> RoundOutcome:
    """Per service, keep the demanders with the largest quality contribution."""
    idx = _indices(instance, participants)
    kept: dict[int, list[int]] = {i: [] for i in idx}
    for j, cand in _demanders(instance, idx).items():
        cap = int(instance.capacity[j])
        # stable sort keeps ascending user id among equal contributions
        best = sorted(cand, key=lambda ik: -instance.contrib[ik])[:cap]
        for i, k in best:
            kept[i].append(k)
    return assemble_outcome(instance, kept)


def exhaustive_opt_round(
    participants,
    instance: Instance,
    ledger: FairnessLedger | None = None,
    guard: int = DEFAULT_EXACT_GUARD,
) -> RoundOutcome:
    """Exact quality maximisation by depth-first enumeration.

    Variables are the (user, window slot) pairs in user-id order. Inclusion is
    explored before exclusion and only strict improvements replace the
    incumbent, so among optimal selections the lexicographically largest
    vector wins. An optimistic remaining-sum bound prunes the search.
    """
    idx = sorted(_indices(instance, participants), key=lambda i: instance.user_ids[i])
    size = len(idx) * instance.topn
    if size > guard:
        raise SizeGuardError(
            f"exact search needs {len(idx)} users x N={instance.topn} = {size} placement variables; "
            f"the size guard allows at most {guard}"
        )
    pairs = [(i, k) for i in idx for k in range(int(instance.length[i]))]
    # exact rationals: ties between equal float gains must stay ties
    gain = [Fraction(float(instance.contrib[i, k])) for i, k in pairs]
    svc = [int(instance.top[i, k]) for i, k in pairs]
    suffix = [Fraction(0)] * (len(pairs) + 1)
    for pos in range(len(pairs) - 1, -1, -1):
        suffix[pos] = suffix[pos + 1] + gain[pos]
    remaining = instance.capacity.copy()
    chosen = [False] * len(pairs)
    best_val, best_vec = Fraction(-1), [False] * len(pairs)

    def visit(pos: int, val: float):
        nonlocal best_val, best_vec
        if val + suffix[pos] <= best_val:
            return
        if pos == len(pairs):
            best_val, best_vec = val, chosen.copy()
            return
        j = svc[pos]
        if remaining[j] > 0:
            remaining[j] -= 1
            chosen[pos] = True
            visit(pos + 1, val + gain[pos])
            chosen[pos] = False
            remaining[j] += 1
        visit(pos + 1, val)

    visit(0, Fraction(0))
    kept: dict[int, list[int]] = {i: [] for i in idx}
    for (i, k), on in zip(pairs, best_vec):
        if on:
            kept[i].append(k)
    return assemble_outcome(instance, kept)


def random_round(participants, instance: Instance, ledger=None, rng: np.random.Generator | int | None = None) -> RoundOutcome:
    """Per service, a uniform random subset of demanders up to capacity."""
    rng = np.random.default_rng(rng)
    idx = _indices(instance, participants)
    kept: dict[int, list[int]] = {i: [] for i in idx}
    for j, cand in sorted(_demanders(instance, idx).items()):
        cap = int(instance.capacity[j])
        if cap >= len(cand):
            chosen = cand
        else:
            chosen = [cand[c] for c in rng.choice(len(cand), size=cap, replace=False)]
        for i, k in chosen:
            kept[i].append(k)
    return assemble_outcome(instance, kept)


def get_strategy(name: str) -> Callable[..., RoundOutcome]:
    table = {
        "f-fast": f_fast_round,
        "d-fast": d_fast_round,
        "quality-max": quality_max_round,
        "exact": exhaustive_opt_round,
        "random": random_round,
    }
    try:
        return table[name]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}") from None
