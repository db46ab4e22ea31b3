"""Bucket-based re-ranking that balances continent visibility across the user
base with per-user genre calibration.

Every candidate is expanded into one record per (genre, continent) pair of
the item. Records are ordered by continent representation and user genre
propensity (both ascending), then by score (descending), and consumed in
three passes:

1. hard: continent quota, user genre quota and list length all respected;
2. soft: the genre quota is dropped;
3. fill: per user, best remaining score until the list is full.

An item is recommended at most once per user no matter how many records it
expands into.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from moregin.data import Catalog, RecLists, RerankParams
from moregin.stats import GroupStats, PropensityTable

log = logging.getLogger(__name__)

# slack for float quotas such as 0.3 * 10 evaluating to 2.9999999999999996
QUOTA_EPS = 1e-9


@dataclass
class BucketRecord:
    user: str
    item: str
    score: float
    genre: str
    continent: str
    rep: float
    prop: float
    rank: int
    phase: int | None = None

    def sort_key(self):
        return (self.rep, self.prop, -self.score, self.user, self.item, self.genre, self.continent)


@dataclass
class JoinBucket:
    records: list[BucketRecord]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def selected(self) -> list[BucketRecord]:
        return [r for r in self.records if r.phase is not None]


@dataclass
class QuotaState:
    expected_cont: dict[str, int]
    expected_user_gen: dict[tuple[str, str], float]
    topk: int
    user_counts: Counter = field(default_factory=Counter)
    user_gen_counts: Counter = field(default_factory=Counter)
    cont_counts: Counter = field(default_factory=Counter)
    # (user, item) pairs already placed, shared across aliases of an item
    chosen: set = field(default_factory=set)

    def genre_cap(self, user: str, genre: str) -> int:
        return math.floor(self.expected_user_gen.get((user, genre), 0.0) + QUOTA_EPS)

    def continent_open(self, continent: str) -> bool:
        return self.cont_counts[continent] < self.expected_cont.get(continent, 0)

    def user_open(self, user: str) -> bool:
        return self.user_counts[user] < self.topk

    def take(self, rec: BucketRecord, phase: int, count_genre: bool) -> None:
        rec.phase = phase
        self.chosen.add((rec.user, rec.item))
        self.user_counts[rec.user] += 1
        self.cont_counts[rec.continent] += 1
        if count_genre:
            self.user_gen_counts[rec.user, rec.genre] += 1


def largest_remainder(shares: dict[str, float], total: int) -> dict[str, int]:
    """Apportion ``total`` integer units proportionally to ``shares``.

    Each key gets ``floor(share * total)``; leftover units go to the largest
    fractional parts (ties by key). Shares are expected to sum to ~1.
    """
    exact = {k: v * total for k, v in shares.items()}
    alloc = {k: math.floor(x) for k, x in exact.items()}
    extra = total - sum(alloc.values())
    order = sorted(exact, key=lambda k: (-(exact[k] - alloc[k]), k))
    for k in order[: max(extra, 0)]:
        alloc[k] += 1
    return alloc


def build_buckets(
    recs_topn: RecLists,
    catalog: Catalog,
    stats: GroupStats,
    prop: PropensityTable,
    topn: int | None = None,
) -> JoinBucket:
    """Expand each candidate into annotated (genre, continent) records, sorted."""
    records = []
    cold = 0
    for user, lst in recs_topn:
        if user not in prop:
            cold += 1
        for rec in lst[:topn]:
            meta = catalog[rec.item]
            for g in meta.genres:
                p = prop.get(user, g)
                for c in meta.continents:
                    records.append(BucketRecord(user, rec.item, rec.score, g, c, stats.get(c), p, rec.rank))
    if cold:
        log.warning("%d users without propensity; their picks fall to the relaxed phases", cold)
    records.sort(key=BucketRecord.sort_key)
    return JoinBucket(records)


def compute_quotas(
    stats: GroupStats, prop: PropensityTable, users: Iterable[str], params: RerankParams
) -> QuotaState:
    """Global continent quotas and per-user genre quotas.

    Continent quotas split ``|users| * topk`` slots by representation with
    largest-remainder rounding. Genre quotas stay real (``P_ug * topk``).
    """
    users = sorted(set(users))
    expected_cont = largest_remainder(dict(stats.representation), len(users) * params.topk)
    expected_user_gen = {
        (u, g): p * params.topk for u in users for g, p in prop.row(u).items()
    }
    return QuotaState(expected_cont, expected_user_gen, params.topk)


def select_hard(bucket: JoinBucket, quotas: QuotaState, params: RerankParams) -> tuple[JoinBucket, QuotaState]:
    for rec in bucket:
        if rec.phase is not None or (rec.user, rec.item) in quotas.chosen:
            continue
        if (
            quotas.continent_open(rec.continent)
            and quotas.user_gen_counts[rec.user, rec.genre] + 1 <= quotas.genre_cap(rec.user, rec.genre)
            and quotas.user_open(rec.user)
        ):
            quotas.take(rec, 1, count_genre=True)
    return bucket, quotas


def select_soft(
    bucket: JoinBucket, quotas: QuotaState, phase: int, params: RerankParams
) -> tuple[JoinBucket, QuotaState]:
    """Relaxed passes.

    Phase 2 walks the bucket order keeping only the continent quota and the
    list length. Phase 3 walks each user's records by descending score and
    fills the list regardless of quotas.
    """
    if phase == 2:
        for rec in bucket:
            if rec.phase is not None or (rec.user, rec.item) in quotas.chosen:
                continue
            if quotas.continent_open(rec.continent) and quotas.user_open(rec.user):
                quotas.take(rec, 2, count_genre=False)
    elif phase == 3:
        per_user: dict[str, list[BucketRecord]] = {}
        for rec in bucket:
            per_user.setdefault(rec.user, []).append(rec)
        for user in sorted(per_user):
            # stable sort keeps bucket order among equal scores
            for rec in sorted(per_user[user], key=lambda r: -r.score):
                if not quotas.user_open(user):
                    break
                if rec.phase is None and (user, rec.item) not in quotas.chosen:
                    quotas.take(rec, 3, count_genre=False)
    else:
        raise ValueError(f"soft selection phase must be 2 or 3, got {phase}")
    return bucket, quotas


def choose_selected(bucket: JoinBucket, topk: int) -> RecLists:
    picked: dict[str, list[BucketRecord]] = {}
    for rec in bucket.selected():
        picked.setdefault(rec.user, []).append(rec)
    ranked = {}
    for user, recs in picked.items():
        recs.sort(key=lambda r: (-r.score, r.rank))
        ranked[user] = [(r.item, r.score) for r in recs]
    return RecLists.from_ranked(ranked, topk)


def rerank(
    recs_topn: RecLists,
    catalog: Catalog,
    stats: GroupStats,
    prop: PropensityTable,
    params: RerankParams = RerankParams(),
    return_bucket: bool = False,
):
    """Re-rank top-n candidate lists into top-k lists.

    Args:
        recs_topn: candidate lists; only the first ``params.topn`` of each are used.
        catalog: item genres and continents.
        stats: continent representation from the training split.
        prop: user genre propensity from the training split.
        params: list sizes.
        return_bucket: also return the annotated bucket (for auditing).

    Returns:
        Top-k lists sorted by score, or ``(lists, bucket)`` with ``return_bucket``.
    """
    bucket = build_buckets(recs_topn, catalog, stats, prop, params.topn)
    users = [u for u, lst in recs_topn if lst]
    quotas = compute_quotas(stats, prop, users, params)
    select_hard(bucket, quotas, params)
    select_soft(bucket, quotas, 2, params)
    select_soft(bucket, quotas, 3, params)
    short = sum(1 for u in users if quotas.user_counts[u] < params.topk)
    if short:
        log.warning("%d users have fewer than %d distinct candidates", short, params.topk)
    out = choose_selected(bucket, params.topk)
    # keep users whose candidate list was empty
    lists = dict(out.lists)
    for u, _ in recs_topn:
        lists.setdefault(u, ())
    out = RecLists(lists, params.topk)
    return (out, bucket) if return_bucket else out


AUDIT_COLUMNS = ("user", "item", "rank", "score", "genre", "continent", "phase")


def audit_rows(out: RecLists, bucket: JoinBucket):
    """One row per selected record, in output rank order."""
    ranks = {(r.user, r.item): r.rank for _, lst in out for r in lst}
    rows = [
        (r.user, r.item, ranks[r.user, r.item], r.score, r.genre, r.continent, r.phase)
        for r in bucket.selected()
    ]
    rows.sort(key=lambda row: (row[0], row[2]))
    return rows
