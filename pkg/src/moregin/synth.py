"""Synthetic datasets with controllable continent skew and genre/continent coupling.

Randomness comes from numpy's PCG64 bit generator seeded with the config
seed, consumed in a fixed order, so a seed reproduces a dataset exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from moregin.data import Catalog, Interactions, ItemMeta, Rating, RecLists, RerankParams
from moregin.reranker import largest_remainder
from moregin.stats import GroupStats


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 50
    n_items: int = 300
    continent_weights: Mapping[str, float] = field(default_factory=lambda: {"NA": 6.0, "EU": 3.0, "AS": 1.0})
    genre_weights_per_continent: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: {
            "NA": {"Action": 5.0, "Comedy": 2.0, "Drama": 2.0},
            "EU": {"Action": 1.0, "Comedy": 4.0, "Drama": 3.0},
            "AS": {"Action": 2.0, "Drama": 3.0},
        }
    )
    ratings_per_user: int = 30
    multi_label_prob: float = 0.1
    score_noise: float = 0.3
    # fraction of each history (earliest first) excluded from the candidate lists
    train_fraction: float = 0.8
    # user genre taste concentration; smaller means more idiosyncratic users
    taste_concentration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1 or self.ratings_per_user < 1:
            raise ValueError("n_users, n_items and ratings_per_user must be positive")
        if not self.continent_weights:
            raise ValueError("continent_weights must not be empty")
        if any(w <= 0 for w in self.continent_weights.values()):
            raise ValueError("continent weights must be positive")
        for c in self.continent_weights:
            gw = self.genre_weights_per_continent.get(c)
            if not gw or any(w <= 0 for w in gw.values()):
                raise ValueError(f"continent {c} needs positive genre weights")
        if not 0.0 <= self.multi_label_prob <= 1.0:
            raise ValueError("multi_label_prob must lie in [0, 1]")
        if self.score_noise < 0:
            raise ValueError("score_noise must be non-negative")
        if self.n_items < len(self.continent_weights):
            raise ValueError(
                f"n_items ({self.n_items}) is smaller than the number of continents ({len(self.continent_weights)})"
            )
        if self.ratings_per_user > self.n_items:
            raise ValueError("ratings_per_user exceeds n_items")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["continent_weights"] = dict(self.continent_weights)
        d["genre_weights_per_continent"] = {c: dict(g) for c, g in self.genre_weights_per_continent.items()}
        return d


def _normalize(weights: Mapping[str, float]) -> tuple[list[str], np.ndarray]:
    keys = sorted(weights)
    p = np.array([weights[k] for k in keys], dtype=float)
    return keys, p / p.sum()


def generate(config: SynthConfig) -> tuple[Catalog, Interactions, RecLists]:
    """Draw a catalog, user histories and full-catalog candidate lists.

    Items: continent counts follow the continent weights (largest remainder,
    at least one item per continent); each item's genre is drawn from its
    continent's genre weights. A second genre and a second continent are
    each added with probability ``multi_label_prob``.

    Ratings: each draw picks a continent by the global weights, a genre by
    the continent's weights tilted by the user's taste, then an item of that
    pair proportionally to a latent popularity. Timestamps run 1..n per user.

    Candidates: every item outside the earliest ``train_fraction`` of the
    user's history, scored ``1 - popularity_rank / n_items + U(0, noise)``.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    continents, cont_p = _normalize(config.continent_weights)
    all_genres = sorted({g for gw in config.genre_weights_per_continent.values() for g in gw})

    counts = largest_remainder(dict(zip(continents, cont_p)), config.n_items)
    deficit = [c for c in continents if counts[c] == 0]
    for c in deficit:
        donor = max(continents, key=lambda k: (counts[k], k))
        counts[donor] -= 1
        counts[c] = 1

    width = len(str(config.n_items - 1))
    metas = []
    primary = []
    idx = 0
    for c in continents:
        genres, genre_p = _normalize(config.genre_weights_per_continent[c])
        for _ in range(counts[c]):
            g = genres[rng.choice(len(genres), p=genre_p)]
            item_genres = [g]
            item_conts = [c]
            if rng.random() < config.multi_label_prob and len(genres) > 1:
                item_genres.append(genres[rng.choice(len(genres), p=genre_p)])
            if rng.random() < config.multi_label_prob and len(continents) > 1:
                item_conts.append(continents[rng.choice(len(continents), p=cont_p)])
            item = f"i{idx:0{width}d}"
            metas.append(ItemMeta(item, tuple(item_genres), tuple(item_conts)))
            primary.append((c, g))
            idx += 1
    catalog = Catalog.from_items(metas)
    item_ids = [m.item for m in metas]

    popularity = rng.pareto(1.5, size=len(item_ids)) + 1.0
    pool: dict[tuple[str, str], list[int]] = {}
    for pos, key in enumerate(primary):
        pool.setdefault(key, []).append(pos)

    ratings = []
    ranked: dict[str, list[tuple[str, float]]] = {}
    pop_order = sorted(range(len(item_ids)), key=lambda i: (-popularity[i], item_ids[i]))
    pop_score = np.empty(len(item_ids))
    for r, i in enumerate(pop_order):
        pop_score[i] = 1.0 - r / len(item_ids)

    uwidth = len(str(config.n_users - 1))
    for u in range(config.n_users):
        user = f"u{u:0{uwidth}d}"
        taste = rng.dirichlet(np.full(len(all_genres), config.taste_concentration))
        taste_of = dict(zip(all_genres, taste))
        rated: list[int] = []
        seen: set[int] = set()
        attempts = 0
        while len(rated) < config.ratings_per_user:
            attempts += 1
            if attempts > 50 * config.ratings_per_user:
                # pairs exhausted for this user: take the most popular unseen items
                rest = [i for i in pop_order if i not in seen]
                rated.extend(rest[: config.ratings_per_user - len(rated)])
                break
            c = continents[rng.choice(len(continents), p=cont_p)]
            genres, genre_p = _normalize(config.genre_weights_per_continent[c])
            tilted = np.array([genre_p[j] * (taste_of[g] + 1e-3) for j, g in enumerate(genres)])
            g = genres[rng.choice(len(genres), p=tilted / tilted.sum())]
            cands = [i for i in pool.get((c, g), ()) if i not in seen]
            if not cands:
                continue
            w = popularity[cands]
            i = cands[rng.choice(len(cands), p=w / w.sum())]
            seen.add(i)
            rated.append(i)
        values = rng.integers(1, 6, size=len(rated))
        for t, (i, v) in enumerate(zip(rated, values), start=1):
            ratings.append(Rating(user, item_ids[i], float(v), t))

        n_train = math.ceil(round(config.train_fraction * len(rated), 9))
        excluded = set(rated[:n_train])
        noise = rng.random(len(item_ids)) * config.score_noise
        scored = [
            (item_ids[i], float(pop_score[i] + noise[i])) for i in range(len(item_ids)) if i not in excluded
        ]
        scored.sort(key=lambda p: (-p[1], p[0]))
        ranked[user] = scored

    return catalog, Interactions(tuple(ratings)), RecLists.from_ranked(ranked)


def _as_fraction(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**6)


def make_feasible_instance(
    params: RerankParams,
    stats_target: GroupStats,
    genre_shares: Mapping[str, float] | None = None,
    n_users: int = 4,
    candidates_per_pair: int | None = None,
    seed: int = 0,
) -> tuple[Catalog, Interactions, RecLists]:
    """Instance on which the hard selection phase can fill every list.

    Every user gets the same training profile: continent shares equal to
    ``stats_target`` and genre shares equal to ``genre_shares`` (uniform over
    two genres by default). Items carry a single genre and continent. Each
    (continent, genre) pair offers ``candidates_per_pair`` (default ``topk``)
    candidates to every user, scored at random.

    The returned interactions are the training set itself.

    Raises:
        ValueError: when ``R_c * n_users * topk`` or ``share_g * topk`` is not
            integral, or shares do not sum to one.
    """
    k = params.topk
    if genre_shares is None:
        genre_shares = {"G0": 0.5, "G1": 0.5}
    rep = {c: _as_fraction(v) for c, v in stats_target.representation.items() if v > 0}
    gen = {g: _as_fraction(v) for g, v in genre_shares.items() if v > 0}
    if sum(rep.values()) != 1 or sum(gen.values()) != 1:
        raise ValueError("target shares must sum to 1")
    for c, r in rep.items():
        if (r * n_users * k).denominator != 1:
            raise ValueError(f"non-integral continent quota for {c}: {float(r * n_users * k)}")
    for g, s in gen.items():
        if (s * k).denominator != 1:
            raise ValueError(f"non-integral genre quota for {g}: {float(s * k)}")

    cells = {(c, g): rep[c] * gen[g] for c in sorted(rep) for g in sorted(gen)}
    history = math.lcm(*(f.denominator for f in cells.values()))
    per_cell = {key: int(f * history) for key, f in cells.items()}

    rng = np.random.Generator(np.random.PCG64(seed))
    metas = []
    train_items: dict[tuple[str, str], list[str]] = {}
    cand_items: dict[tuple[str, str], list[str]] = {}
    depth = candidates_per_pair or k
    for c, g in cells:
        tr = [f"t_{c}_{g}_{j}" for j in range(per_cell[c, g])]
        ca = [f"r_{c}_{g}_{j}" for j in range(depth)]
        train_items[c, g] = tr
        cand_items[c, g] = ca
        metas.extend(ItemMeta(i, (g,), (c,)) for i in tr + ca)
    catalog = Catalog.from_items(metas)

    ratings = []
    ranked = {}
    uwidth = len(str(n_users - 1))
    for u in range(n_users):
        user = f"u{u:0{uwidth}d}"
        t = 0
        for key in cells:
            for item in train_items[key]:
                t += 1
                ratings.append(Rating(user, item, float(rng.integers(1, 6)), t))
        pairs = [(item, float(rng.random())) for key in cells for item in cand_items[key]]
        pairs.sort(key=lambda p: (-p[1], p[0]))
        ranked[user] = pairs[: params.topn]
    return catalog, Interactions(tuple(ratings)), RecLists.from_ranked(ranked)
