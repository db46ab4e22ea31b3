"""Comparison re-rankers: original ranking (OR), greedy calibration (CL) and
continent-visibility provider fairness (PF)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

from moregin.data import Catalog, RecLists, RerankParams, ScoredRec
from moregin.reranker import QUOTA_EPS, largest_remainder
from moregin.stats import GroupStats, PropensityTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationParams:
    lam: float = 0.99
    topk: int = 10
    topn: int = 1000
    epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.topk < 1:
            raise ValueError("topk must be positive")


def or_rerank(recs_topn: RecLists, params: RerankParams = RerankParams()) -> RecLists:
    """The original ranking cut to the first ``topk`` items."""
    return recs_topn.truncate(params.topk)


def _by_score(user: str, recs: list[ScoredRec]) -> tuple:
    # re-ranked output must satisfy the non-increasing score invariant
    ordered = sorted(recs, key=lambda r: (-r.score, r.rank))
    return tuple(ScoredRec(user, r.item, r.score, pos) for pos, r in enumerate(ordered, start=1))


def smoothed_kl(target: Mapping[str, float], dist: Mapping[str, float], epsilon: float) -> float:
    """KL(target || dist) with ``dist`` smoothed by ``epsilon`` and renormalized.

    Smoothing runs over the union of both supports so the divergence stays
    finite when the list misses a genre the user likes.
    """
    if not target:
        return 0.0
    support = set(target) | set(dist)
    norm = sum(dist.values()) + epsilon * len(support)
    kl = 0.0
    for g, p in target.items():
        if p > 0.0:
            q = (dist.get(g, 0.0) + epsilon) / norm
            kl += p * math.log(p / q)
    return kl


def calibration_objective(
    scores: list[float], mass: Mapping[str, float], n: int, target: Mapping[str, float], params: CalibrationParams
) -> float:
    """``(1 - lam) * sum(scores) - lam * KL(target || genre distribution)``.

    ``mass`` holds the fractional genre mass of the ``n`` listed items.
    """
    dist = {g: m / n for g, m in mass.items()} if n else {}
    return (1.0 - params.lam) * math.fsum(scores) - params.lam * smoothed_kl(target, dist, params.epsilon)


def _calibrate_user(
    user: str, cands: tuple[ScoredRec, ...], catalog: Catalog, target: Mapping[str, float], params: CalibrationParams
) -> list[ScoredRec]:
    remaining = list(cands)
    chosen: list[ScoredRec] = []
    mass: dict[str, float] = {}
    scores: list[float] = []
    while remaining and len(chosen) < params.topk:
        best, best_val = None, -math.inf
        for pos, rec in enumerate(remaining):
            meta = catalog[rec.item]
            trial = dict(mass)
            for g in meta.genres:
                trial[g] = trial.get(g, 0.0) + 1.0 / len(meta.genres)
            val = calibration_objective(scores + [rec.score], trial, len(chosen) + 1, target, params)
            # strict '>' keeps the better-ranked candidate on ties
            if val > best_val:
                best, best_val = pos, val
        rec = remaining.pop(best)
        meta = catalog[rec.item]
        for g in meta.genres:
            mass[g] = mass.get(g, 0.0) + 1.0 / len(meta.genres)
        scores.append(rec.score)
        chosen.append(rec)
    return chosen


def cl_rerank(
    recs_topn: RecLists,
    catalog: Catalog,
    prop: PropensityTable,
    params: CalibrationParams = CalibrationParams(),
    keep_selection_order: bool = False,
) -> RecLists:
    """Greedy calibration.

    For each user the list grows one item at a time, picking the candidate
    that maximizes :func:`calibration_objective` of the enlarged list. Users
    without a propensity row get a zero divergence term, i.e. pure relevance.

    The output is re-sorted by score so it obeys the ranked-list invariants;
    with ``keep_selection_order`` the greedy order is kept instead and the
    returned lists skip the score-monotonicity check.
    """
    out = {}
    empty = cold = 0
    for user, lst in recs_topn:
        cands = lst[: params.topn]
        if not cands:
            empty += 1
            out[user] = ()
            continue
        if user not in prop:
            cold += 1
        chosen = _calibrate_user(user, cands, catalog, prop.row(user), params)
        if keep_selection_order:
            out[user] = tuple(ScoredRec(user, r.item, r.score, pos) for pos, r in enumerate(chosen, start=1))
        else:
            out[user] = _by_score(user, chosen)
    if empty:
        log.warning("%d users with empty candidate lists", empty)
    if cold:
        log.warning("%d users without propensity ranked by relevance only", cold)
    return RecLists(out, params.topk, check=not keep_selection_order)


def pf_rerank(
    recs_topn: RecLists, catalog: Catalog, stats: GroupStats, params: RerankParams = RerankParams()
) -> RecLists:
    """Visibility-quota re-ranking.

    Continent quotas are the same largest-remainder split used by the
    bucket re-ranker. All (user, candidate) pairs are scanned by descending
    score; a candidate is taken when the user's list has room and every one
    of its continents can absorb its fractional share. A final relevance pass
    fills lists left short.
    """
    users = [u for u, lst in recs_topn if lst]
    expected = largest_remainder(dict(stats.representation), len(users) * params.topk)
    used = dict.fromkeys(set(expected) | set(catalog.continents), 0.0)
    picked: dict[str, list[ScoredRec]] = {u: [] for u, _ in recs_topn}
    taken: set[tuple[str, str]] = set()

    pool = [rec for _, lst in recs_topn for rec in lst[: params.topn]]
    pool.sort(key=lambda r: (-r.score, r.user, r.rank))
    for rec in pool:
        if len(picked[rec.user]) >= params.topk:
            continue
        meta = catalog[rec.item]
        w = 1.0 / len(meta.continents)
        if all(used[c] + w <= expected.get(c, 0) + QUOTA_EPS for c in meta.continents):
            for c in meta.continents:
                used[c] += w
            picked[rec.user].append(rec)
            taken.add((rec.user, rec.item))

    short = 0
    for user, lst in recs_topn:
        if len(picked[user]) >= params.topk:
            continue
        short += 1
        for rec in lst[: params.topn]:
            if len(picked[user]) >= params.topk:
                break
            if (user, rec.item) not in taken:
                picked[user].append(rec)
                taken.add((user, rec.item))
    if short:
        log.debug("%d lists completed by the relevance fill pass", short)
    return RecLists({u: _by_score(u, recs) for u, recs in picked.items()}, params.topk)
