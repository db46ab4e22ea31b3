"""Shared domain types: ratings, item metadata, candidate lists.

All containers are immutable once built. Identifiers (users, items, genres,
continents) are opaque strings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

DEFAULT_RATING_DOMAIN = (1.0, 5.0)


@dataclass(frozen=True)
class Rating:
    user: str
    item: str
    value: float
    timestamp: int


@dataclass(frozen=True)
class ItemMeta:
    """Genre and continent labels of one item.

    Labels are stored as sorted tuples; repeated labels collapse, so a
    continent shared by two providers of the same item counts once.
    """

    item: str
    genres: tuple[str, ...]
    continents: tuple[str, ...]

    def __post_init__(self):
        genres = tuple(sorted(set(self.genres)))
        continents = tuple(sorted(set(self.continents)))
        if not genres:
            raise ValueError(f"item {self.item}: empty genre set")
        if not continents:
            raise ValueError(f"item {self.item}: empty continent set")
        object.__setattr__(self, "genres", genres)
        object.__setattr__(self, "continents", continents)

    def genre_weight(self, genre: str) -> float:
        return 1.0 / len(self.genres) if genre in self.genres else 0.0

    def continent_weight(self, continent: str) -> float:
        return 1.0 / len(self.continents) if continent in self.continents else 0.0


@dataclass(frozen=True)
class Catalog:
    items: Mapping[str, ItemMeta]
    continents: tuple[str, ...]
    genres: tuple[str, ...]

    @classmethod
    def from_items(cls, metas: Iterable[ItemMeta]) -> Catalog:
        items: dict[str, ItemMeta] = {}
        for meta in metas:
            if meta.item in items:
                raise ValueError(f"duplicate item {meta.item} in catalog")
            items[meta.item] = meta
        continents = sorted({c for m in items.values() for c in m.continents})
        genres = sorted({g for m in items.values() for g in m.genres})
        ordered = {k: items[k] for k in sorted(items)}
        return cls(MappingProxyType(ordered), tuple(continents), tuple(genres))

    def __post_init__(self):
        if list(self.continents) != sorted(self.continents) or list(self.genres) != sorted(self.genres):
            raise ValueError("label universes must be sorted")
        cset, gset = set(self.continents), set(self.genres)
        for meta in self.items.values():
            if not set(meta.continents) <= cset or not set(meta.genres) <= gset:
                raise ValueError(f"item {meta.item} has labels outside the catalog universes")

    def __contains__(self, item: str) -> bool:
        return item in self.items

    def __getitem__(self, item: str) -> ItemMeta:
        return self.items[item]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class Interactions:
    """A set of ratings with at most one rating per (user, item) pair.

    ``dropped_duplicates`` records how many rows were discarded by the
    parser's keep-latest rule; it does not take part in equality.
    """

    ratings: tuple[Rating, ...]
    dropped_duplicates: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ratings", tuple(self.ratings))
        seen = set()
        for r in self.ratings:
            key = (r.user, r.item)
            if key in seen:
                raise ValueError(f"duplicate rating for user {r.user}, item {r.item}")
            seen.add(key)

    @property
    def users(self) -> frozenset[str]:
        return frozenset(r.user for r in self.ratings)

    @property
    def items(self) -> frozenset[str]:
        return frozenset(r.item for r in self.ratings)

    def by_user(self) -> dict[str, list[Rating]]:
        """Group ratings per user; keys in sorted order, ratings in stored order."""
        grouped: dict[str, list[Rating]] = {}
        for r in self.ratings:
            grouped.setdefault(r.user, []).append(r)
        return {u: grouped[u] for u in sorted(grouped)}

    def __len__(self) -> int:
        return len(self.ratings)

    def __iter__(self) -> Iterator[Rating]:
        return iter(self.ratings)


@dataclass(frozen=True)
class ScoredRec:
    user: str
    item: str
    score: float
    rank: int


def list_violations(user: str, recs: Iterable[ScoredRec]) -> list[str]:
    """Describe every ordering problem in one user's list (empty when valid)."""
    problems = []
    seen = set()
    prev = None
    for pos, rec in enumerate(recs, start=1):
        if rec.user != user:
            problems.append(f"user {user}: record for user {rec.user} in list")
        if rec.rank != pos:
            problems.append(f"user {user}: gap at rank {pos}")
            break
        if rec.item in seen:
            problems.append(f"user {user}: duplicate item {rec.item}")
        seen.add(rec.item)
        if prev is not None and rec.score > prev.score:
            problems.append(f"user {user}: non-monotone scores at rank {pos}")
        prev = rec
    return problems


@dataclass(frozen=True)
class RecLists:
    """Per-user ranked candidate lists.

    Construction checks ranks are contiguous from 1, scores non-increasing
    and items unique per user. Pass ``check=False`` only to hold data that
    is about to be diagnosed (see :func:`validate_join`).
    """

    lists: Mapping[str, tuple[ScoredRec, ...]]
    bound: int | None = None
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        ordered = {u: tuple(self.lists[u]) for u in sorted(self.lists)}
        object.__setattr__(self, "lists", MappingProxyType(ordered))
        if not self.check:
            return
        for user, recs in ordered.items():
            problems = list_violations(user, recs)
            if problems:
                raise ValueError(problems[0])
            if self.bound is not None and len(recs) > self.bound:
                raise ValueError(f"user {user}: list length {len(recs)} exceeds bound {self.bound}")

    @classmethod
    def from_ranked(cls, ranked: Mapping[str, Iterable[tuple[str, float]]], bound: int | None = None) -> RecLists:
        """Build lists from per-user ``(item, score)`` sequences already in rank order."""
        lists = {
            user: tuple(ScoredRec(user, item, float(score), pos) for pos, (item, score) in enumerate(pairs, start=1))
            for user, pairs in ranked.items()
        }
        return cls(lists, bound)

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(self.lists)

    def items_of(self, user: str) -> list[str]:
        return [r.item for r in self.lists.get(user, ())]

    def truncate(self, k: int) -> RecLists:
        return RecLists({u: recs[:k] for u, recs in self.lists.items()}, k)

    def __len__(self) -> int:
        return len(self.lists)

    def __iter__(self):
        return iter(self.lists.items())


@dataclass(frozen=True)
class RerankParams:
    topk: int = 10
    topn: int = 1000

    def __post_init__(self):
        if self.topk < 1 or self.topn < 1:
            raise ValueError("topk and topn must be positive")
        if self.topk > self.topn:
            raise ValueError(f"topk ({self.topk}) must not exceed topn ({self.topn})")


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return not self.violations


def validate_join(catalog: Catalog, interactions: Interactions, recs: RecLists) -> ValidationReport:
    """Cross-check ratings and candidate lists against the catalog.

    Reports unknown items, empty user lists and ordering violations. Never
    raises; ``recs`` may be built with ``check=False``.
    """
    report = ValidationReport()
    unknown = sorted(interactions.items - set(catalog.items))
    for item in unknown:
        report.violations.append(f"unknown item {item} in ratings")
    for user, lst in recs.lists.items():
        if not lst:
            report.violations.append(f"user {user}: empty list")
            continue
        for rec in lst:
            if rec.item not in catalog:
                report.violations.append(f"unknown item {rec.item} in list of user {user}")
        report.violations.extend(list_violations(user, lst))
    return report
