"""Readers and writers for the delimited dataset formats, plus the temporal split.

Formats (UTF-8, comma-delimited, header row, ``|`` separates multi-values):

* ratings: ``user,item,rating,timestamp``
* item metadata: ``item,genres,continents``
* candidate / re-ranked lists: ``user,item,score,rank``
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Union

from moregin.data import (
    DEFAULT_RATING_DOMAIN,
    Catalog,
    Interactions,
    ItemMeta,
    Rating,
    RecLists,
    ScoredRec,
)

log = logging.getLogger(__name__)

Source = Union[str, os.PathLike, IO[bytes], IO[str]]

RATING_COLUMNS = ("user", "item", "rating", "timestamp")
ITEM_COLUMNS = ("item", "genres", "continents")
RECLIST_COLUMNS = ("user", "item", "score", "rank")
MULTI_SEP = "|"


class ParseError(ValueError):
    """Malformed input; ``line`` is the 1-based physical line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _read_text(source: Source) -> str:
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_text(encoding="utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def _rows(source: Source, required: Iterable[str], schema: Mapping[str, str] | None = None):
    """Yield ``(line_number, row_dict)`` keyed by canonical column names.

    ``schema`` maps canonical names to the header names used in the file.
    """
    text = _read_text(source)
    if not text.strip():
        return
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    header = [h.strip() for h in header]
    schema = dict(schema or {})
    index = {}
    for col in required:
        name = schema.get(col, col)
        if name not in header:
            raise ParseError(f"missing column {name!r}", 1)
        index[col] = header.index(name)
    width = len(header)
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", line)
        yield line, {col: row[i].strip() for col, i in index.items()}


def _split_multi(cell: str) -> list[str]:
    return [part.strip() for part in cell.split(MULTI_SEP) if part.strip()]


def parse_ratings(
    source: Source,
    schema: Mapping[str, str] | None = None,
    domain: tuple[float, float] = DEFAULT_RATING_DOMAIN,
) -> Interactions:
    """Parse a ratings file.

    Duplicate (user, item) rows keep the one with the latest timestamp (the
    later row wins on equal timestamps); the number dropped is stored on the
    result and logged.

    Raises:
        ParseError: on a malformed row or a rating outside ``domain``.
    """
    lo, hi = domain
    latest: dict[tuple[str, str], Rating] = {}
    dropped = 0
    for line, row in _rows(source, RATING_COLUMNS, schema):
        try:
            value = float(row["rating"])
            timestamp = int(row["timestamp"])
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        if not row["user"] or not row["item"]:
            raise ParseError("empty user or item id", line)
        if not lo <= value <= hi or math.isnan(value):
            raise ParseError(f"rating {row['rating']} outside domain [{lo:g}, {hi:g}]", line)
        rating = Rating(row["user"], row["item"], value, timestamp)
        key = (rating.user, rating.item)
        if key in latest:
            dropped += 1
            if rating.timestamp < latest[key].timestamp:
                continue
        latest[key] = rating
    if dropped:
        log.warning("dropped %d duplicate (user, item) ratings, kept the latest", dropped)
    return Interactions(tuple(latest.values()), dropped_duplicates=dropped)


def parse_item_meta(source: Source, schema: Mapping[str, str] | None = None) -> Catalog:
    metas = []
    for line, row in _rows(source, ITEM_COLUMNS, schema):
        genres = _split_multi(row["genres"])
        continents = _split_multi(row["continents"])
        if not genres:
            raise ParseError(f"item {row['item']}: empty genre set", line)
        if not continents:
            raise ParseError(f"item {row['item']}: empty continent set", line)
        metas.append(ItemMeta(row["item"], tuple(genres), tuple(continents)))
    try:
        return Catalog.from_items(metas)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def parse_reclists(
    source: Source,
    schema: Mapping[str, str] | None = None,
    bound: int | None = None,
    check: bool = True,
) -> RecLists:
    """Parse ranked lists; rows may come in any order and are grouped by user.

    Raises:
        ParseError: on malformed rows, or (with ``check``) rank gaps,
            non-monotone scores or repeated items, naming the user.
    """
    grouped: dict[str, list[ScoredRec]] = {}
    for line, row in _rows(source, RECLIST_COLUMNS, schema):
        try:
            rec = ScoredRec(row["user"], row["item"], float(row["score"]), int(row["rank"]))
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        grouped.setdefault(rec.user, []).append(rec)
    lists = {u: tuple(sorted(recs, key=lambda r: r.rank)) for u, recs in grouped.items()}
    try:
        return RecLists(lists, bound, check=check)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def fmt_number(value: float) -> str:
    """Shortest round-tripping text for a float; integral values print without '.0'."""
    value = float(value)
    if value.is_integer() and abs(value) < 2**53:
        return str(int(value))
    return repr(value)


def write_rows(dest: Source, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if isinstance(dest, (str, os.PathLike)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        try:
            dest.write(text)
        except TypeError:
            dest.write(text.encode("utf-8"))


def write_ratings(dest: Source, interactions: Interactions) -> None:
    """Write ratings sorted by (user, timestamp, item)."""
    ordered = sorted(interactions, key=lambda r: (r.user, r.timestamp, r.item))
    write_rows(
        dest, RATING_COLUMNS, ((r.user, r.item, fmt_number(r.value), r.timestamp) for r in ordered)
    )


def write_item_meta(dest: Source, catalog: Catalog) -> None:
    rows = (
        (m.item, MULTI_SEP.join(m.genres), MULTI_SEP.join(m.continents)) for m in catalog.items.values()
    )
    write_rows(dest, ITEM_COLUMNS, rows)


def write_reclists(dest: Source, recs: RecLists) -> None:
    """Write lists sorted by (user, rank)."""
    rows = (
        (r.user, r.item, fmt_number(r.score), r.rank) for _, lst in recs for r in lst
    )
    write_rows(dest, RECLIST_COLUMNS, rows)


def _train_size(n: int, fraction: float) -> int:
    # round() guards against products like 0.7 * 10 == 7.000000000000001
    return math.ceil(round(fraction * n, 9))


def temporal_split(
    interactions: Interactions, cfg: SplitConfig = SplitConfig()
) -> tuple[Interactions, Interactions]:
    """Per-user temporal split.

    Each user's ratings are ordered by timestamp (ties by item id); the first
    ``ceil(train_fraction * n)`` go to train and the rest to test. Users with
    fewer than two ratings keep their whole history in train.
    """
    train: list[Rating] = []
    test: list[Rating] = []
    short = 0
    for user, ratings in interactions.by_user().items():
        ordered = sorted(ratings, key=lambda r: (r.timestamp, r.item))
        if len(ordered) < 2:
            short += 1
            train.extend(ordered)
            continue
        cut = _train_size(len(ordered), cfg.train_fraction)
        train.extend(ordered[:cut])
        test.extend(ordered[cut:])
    if short:
        log.warning("%d users with fewer than 2 ratings kept entirely in train", short)
    return Interactions(tuple(train)), Interactions(tuple(test))
