"""Evaluation metrics: disparate visibility, miscalibration and NDCG@k."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

from moregin.data import Catalog, Interactions, RecLists
from moregin.stats import GroupStats, PropensityTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VisibilityReport:
    per_continent: Mapping[str, float]
    delta_total: float
    n_users: int


@dataclass(frozen=True)
class CalibrationReport:
    per_user_genre: Mapping[str, Mapping[str, float]]
    delta_genre: float
    delta_genre_sum: float
    n_users: int

    @property
    def delta_genre_mean(self) -> float:
        return self.delta_genre


@dataclass(frozen=True)
class AccuracyReport:
    ndcg_at_k: float
    per_user: Mapping[str, float]
    k: int


def continent_shares(items: list[str], catalog: Catalog) -> dict[str, float]:
    """Fractional continent mass of a list divided by its length."""
    mass: dict[str, float] = {}
    for item in items:
        meta = catalog[item]
        w = 1.0 / len(meta.continents)
        for c in meta.continents:
            mass[c] = mass.get(c, 0.0) + w
    return {c: m / len(items) for c, m in mass.items()}


def genre_shares(items: list[str], catalog: Catalog) -> dict[str, float]:
    mass: dict[str, float] = {}
    for item in items:
        meta = catalog[item]
        w = 1.0 / len(meta.genres)
        for g in meta.genres:
            mass[g] = mass.get(g, 0.0) + w
    return {g: m / len(items) for g, m in mass.items()}


def _nonempty(recs: RecLists) -> list[str]:
    users = [u for u, lst in recs if lst]
    skipped = len(recs) - len(users)
    if skipped:
        log.warning("%d users with empty lists excluded", skipped)
    return users


def disparate_visibility(recs_at_k: RecLists, catalog: Catalog, stats: GroupStats) -> VisibilityReport:
    """Average recommended share of each continent minus its representation.

    ``delta_total`` is the sum of absolute per-continent disparities.
    """
    users = _nonempty(recs_at_k)
    continents = sorted(set(stats.continents) | set(catalog.continents))
    share_sum = dict.fromkeys(continents, 0.0)
    for user in users:
        for c, s in continent_shares(recs_at_k.items_of(user), catalog).items():
            share_sum[c] += s
    n = len(users)
    per = {c: (share_sum[c] / n if n else 0.0) - stats.get(c) for c in continents}
    return VisibilityReport(per, math.fsum(abs(v) for v in per.values()), n)


def miscalibration(recs_at_k: RecLists, catalog: Catalog, prop: PropensityTable) -> CalibrationReport:
    """Per-user genre share of the list minus the user's propensity.

    Only users with a propensity row and a non-empty list are scored. Each
    user's row covers the genres present in either distribution.
    """
    users = [u for u in _nonempty(recs_at_k) if u in prop]
    missing = sum(1 for u, lst in recs_at_k if lst and u not in prop)
    if missing:
        log.warning("%d users without propensity excluded from miscalibration", missing)
    per_user: dict[str, dict[str, float]] = {}
    totals = []
    for user in users:
        shares = genre_shares(recs_at_k.items_of(user), catalog)
        row = prop.row(user)
        genres = sorted(set(shares) | set(row))
        per_user[user] = {g: shares.get(g, 0.0) - row.get(g, 0.0) for g in genres}
        totals.append(math.fsum(abs(v) for v in per_user[user].values()))
    total = math.fsum(totals)
    mean = total / len(users) if users else 0.0
    return CalibrationReport(per_user, mean, total, len(users))


def ndcg(recs_at_k: RecLists, test: Interactions, k: int) -> AccuracyReport:
    """Binary-relevance NDCG@k with a ``1/log2(rank + 1)`` discount.

    An item is relevant for a user when it appears among the user's test
    ratings. Only users that have a list and at least one test item are
    scored; the mean is taken over them.
    """
    if k < 1:
        raise ValueError("k must be positive")
    relevant: dict[str, set[str]] = {}
    for r in test:
        relevant.setdefault(r.user, set()).add(r.item)
    per_user = {}
    for user, lst in recs_at_k:
        hits = relevant.get(user)
        if not hits:
            continue
        dcg = 0.0
        for pos, rec in enumerate(lst[:k], start=1):
            if rec.item in hits:
                dcg += 1.0 / math.log2(pos + 1)
        idcg = sum(1.0 / math.log2(pos + 1) for pos in range(1, min(k, len(hits)) + 1))
        per_user[user] = dcg / idcg
    mean = math.fsum(per_user.values()) / len(per_user) if per_user else 0.0
    return AccuracyReport(mean, per_user, k)
