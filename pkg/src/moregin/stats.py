"""Training-set statistics: continent representation, per-user genre propensity,
and the genre x continent characterization matrix.

Multi-label items are attributed fractionally: an item with continents
``C_i`` contributes ``1/|C_i|`` of a rating to each, and likewise for genres.
This keeps every distribution summing to one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

from moregin.data import Catalog, Interactions
from moregin.ingest import Source, write_rows, fmt_number

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupStats:
    representation: Mapping[str, float]

    def get(self, continent: str) -> float:
        return self.representation.get(continent, 0.0)

    @property
    def continents(self) -> tuple[str, ...]:
        return tuple(self.representation)


@dataclass(frozen=True)
class PropensityTable:
    """Per-user genre distribution; absent (user, genre) pairs are zero."""

    propensity: Mapping[str, Mapping[str, float]]

    def get(self, user: str, genre: str) -> float:
        row = self.propensity.get(user)
        return row.get(genre, 0.0) if row else 0.0

    def row(self, user: str) -> Mapping[str, float]:
        return self.propensity.get(user, {})

    def __contains__(self, user: str) -> bool:
        return user in self.propensity

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(self.propensity)


@dataclass(frozen=True)
class GenreContinentMatrix:
    cell: Mapping[tuple[str, str], float]

    def get(self, genre: str, continent: str) -> float:
        return self.cell.get((genre, continent), 0.0)


def _check_items(train: Interactions, catalog: Catalog) -> None:
    missing = sorted(train.items - set(catalog.items))
    if missing:
        raise KeyError(f"{len(missing)} training items missing from catalog, e.g. {missing[0]}")


def representation(train: Interactions, catalog: Catalog) -> GroupStats:
    """Share of training ratings attributable to each continent.

    Every continent of the catalog gets an entry, zero when untouched.
    """
    if not len(train):
        raise ValueError("undefined representation: empty training set")
    _check_items(train, catalog)
    mass = dict.fromkeys(catalog.continents, 0.0)
    for r in sorted(train, key=lambda r: (r.user, r.item)):
        meta = catalog[r.item]
        w = 1.0 / len(meta.continents)
        for c in meta.continents:
            mass[c] += w
    n = len(train)
    return GroupStats({c: m / n for c, m in mass.items()})


def propensity(
    train: Interactions, catalog: Catalog, users: Iterable[str] | None = None
) -> PropensityTable:
    """Per-user share of training ratings attributable to each genre.

    Only genres the user touched appear in their row. Users requested via
    ``users`` but without training history are left out with a warning.
    """
    _check_items(train, catalog)
    table: dict[str, dict[str, float]] = {}
    for user, ratings in train.by_user().items():
        row: dict[str, float] = {}
        for r in sorted(ratings, key=lambda r: r.item):
            meta = catalog[r.item]
            w = 1.0 / len(meta.genres)
            for g in meta.genres:
                row[g] = row.get(g, 0.0) + w
        n = len(ratings)
        table[user] = {g: row[g] / n for g in sorted(row)}
    if users is not None:
        cold = sorted(set(users) - set(table))
        if cold:
            log.warning("%d users without training history have no propensity row", len(cold))
    return PropensityTable(table)


def genre_continent_matrix(
    prop: PropensityTable, train: Interactions, catalog: Catalog
) -> GenreContinentMatrix:
    """Sum over users of propensity mass split by continent of the rated items.

    Cell (g, c) adds, for each rating of user u on item i,
    ``w(i, g) * w(i, c) / |R_u|``. Summing a genre's row over continents gives
    the aggregate propensity of that genre, ``sum_u P_ug``.
    """
    _check_items(train, catalog)
    cell = {(g, c): 0.0 for g in catalog.genres for c in catalog.continents}
    for user, ratings in train.by_user().items():
        if user not in prop:
            continue
        n = len(ratings)
        for r in sorted(ratings, key=lambda r: r.item):
            meta = catalog[r.item]
            w = 1.0 / (len(meta.genres) * len(meta.continents) * n)
            for g in meta.genres:
                for c in meta.continents:
                    cell[g, c] += w
    return GenreContinentMatrix(cell)


def write_representation(dest: Source, stats: GroupStats) -> None:
    write_rows(dest, ("continent", "representation"),
                ((c, fmt_number(v)) for c, v in stats.representation.items()))


def write_propensity(dest: Source, prop: PropensityTable) -> None:
    rows = ((u, g, fmt_number(v)) for u, row in prop.propensity.items() for g, v in row.items())
    write_rows(dest, ("user", "genre", "propensity"), rows)


def write_matrix(dest: Source, matrix: GenreContinentMatrix) -> None:
    rows = ((g, c, fmt_number(v)) for (g, c), v in sorted(matrix.cell.items()))
    write_rows(dest, ("genre", "continent", "mass"), rows)
