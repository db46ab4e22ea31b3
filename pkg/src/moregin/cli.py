"""Command-line entry point: ``moregin <command> [options]``.

Commands: split, stats, rerank, evaluate, synth, report. Every run writes a
manifest JSON next to its outputs. Set ``MOREGIN_LOG`` (DEBUG, INFO, ...) to
change verbosity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from moregin import __version__
from moregin.baselines import CalibrationParams, cl_rerank, or_rerank, pf_rerank
from moregin.data import RecLists, RerankParams, validate_join
from moregin.ingest import (
    ParseError,
    SplitConfig,
    parse_item_meta,
    parse_ratings,
    parse_reclists,
    temporal_split,
    write_item_meta,
    write_ratings,
    write_reclists,
    write_rows,
    fmt_number,
)
from moregin.metrics import disparate_visibility, miscalibration, ndcg
from moregin.reranker import AUDIT_COLUMNS, audit_rows, rerank
from moregin.stats import (
    genre_continent_matrix,
    propensity,
    representation,
    write_matrix,
    write_propensity,
    write_representation,
)
from moregin.synth import SynthConfig, generate

log = logging.getLogger("moregin")

APPROACHES = ("or", "cl", "pf", "moregin")
# report row order, as in the comparison tables
APPROACH_ORDER = {"OR": 0, "CL": 1, "PF": 2, "MOREGIN": 3}
DISPLAY = {"or": "OR", "cl": "CL", "pf": "PF", "moregin": "MOReGIn"}


class CommandError(Exception):
    pass


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.written.append(p)
        return p

    def cleanup(self):
        for p in self.written:
            p.unlink(missing_ok=True)


@contextmanager
def _run(args, command: str, manifest_name: str, inputs: dict, params: dict):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = Outputs(out_dir)
    start = time.perf_counter()
    try:
        yield outputs
        manifest = {
            "command": command,
            "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
            "parameters": params,
            "dataset_hashes": {k: _sha256(Path(v)) for k, v in inputs.items() if v is not None},
            "outputs": sorted(p.name for p in outputs.written),
            "version": __version__,
            "duration_seconds": round(time.perf_counter() - start, 6),
        }
        path = outputs.path(manifest_name)
        path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except BaseException:
        outputs.cleanup()
        raise


def _load_train_items(args):
    catalog = parse_item_meta(args.items)
    train = parse_ratings(args.train)
    return catalog, train


def cmd_split(args) -> int:
    cfg = SplitConfig(args.fraction)
    interactions = parse_ratings(args.ratings)
    train, test = temporal_split(interactions, cfg)
    params = {"fraction": cfg.train_fraction}
    with _run(args, "split", "manifest-split.json", {"ratings": args.ratings}, params) as out:
        write_ratings(out.path("train.csv"), train)
        write_ratings(out.path("test.csv"), test)
    log.info("split %d ratings into %d train / %d test", len(interactions), len(train), len(test))
    return 0


def cmd_stats(args) -> int:
    catalog, train = _load_train_items(args)
    stats = representation(train, catalog)
    prop = propensity(train, catalog)
    matrix = genre_continent_matrix(prop, train, catalog)
    inputs = {"train": args.train, "items": args.items}
    with _run(args, "stats", "manifest-stats.json", inputs, {}) as out:
        write_representation(out.path("representation.csv"), stats)
        write_propensity(out.path("propensity.csv"), prop)
        write_matrix(out.path("genre_continent.csv"), matrix)
    return 0


def cmd_rerank(args) -> int:
    catalog, train = _load_train_items(args)
    recs = parse_reclists(args.reclists)
    report = validate_join(catalog, train, recs)
    unknown = [v for v in report.violations if v.startswith("unknown item")]
    if unknown:
        raise CommandError(f"{len(unknown)} items missing from catalog, e.g. {unknown[0]}")
    params = RerankParams(args.topk, args.topn)
    run_params = {"approach": args.approach, "topk": args.topk, "topn": args.topn}
    audit = None
    if args.approach == "or":
        result = or_rerank(recs, params)
    else:
        prop = propensity(train, catalog, users=recs.users)
        if args.approach == "cl":
            result = cl_rerank(recs, catalog, prop, CalibrationParams(args.lam, args.topk, args.topn))
            run_params["lambda"] = args.lam
        else:
            stats = representation(train, catalog)
            if args.approach == "pf":
                result = pf_rerank(recs, catalog, stats, params)
            else:
                result, bucket = rerank(recs, catalog, stats, prop, params, return_bucket=True)
                audit = audit_rows(result, bucket)
    inputs = {"train": args.train, "items": args.items, "reclists": args.reclists}
    with _run(args, "rerank", f"manifest-rerank-{args.approach}.json", inputs, run_params) as out:
        write_reclists(out.path(f"{args.approach}.csv"), result)
        if audit is not None:
            rows = [(u, i, r, fmt_number(s), g, c, p) for u, i, r, s, g, c, p in audit]
            write_rows(out.path(f"{args.approach}_audit.csv"), AUDIT_COLUMNS, rows)
    return 0


def _parse_named(entry: str) -> tuple[str, str]:
    if "=" in entry:
        name, path = entry.split("=", 1)
    else:
        name, path = Path(entry).stem, entry
    return DISPLAY.get(name.lower(), name), path


def evaluate_lists(named: dict[str, RecLists], catalog, train, test, k: int) -> dict:
    """Metric report per approach, rows ordered OR, CL, PF, MOReGIn, then others."""
    stats = representation(train, catalog)
    prop = propensity(train, catalog)
    rows = []
    for name in sorted(named, key=lambda n: (APPROACH_ORDER.get(n.upper(), len(APPROACH_ORDER)), n)):
        recs = named[name].truncate(k)
        users = set(recs.users)
        vis = disparate_visibility(recs, catalog, stats)
        cal = miscalibration(recs, catalog, prop)
        row = {
            "approach": name,
            "n_users": len(users),
            "users_without_train": len(users - set(prop.users)),
            "delta_total": vis.delta_total,
            "delta_v": dict(vis.per_continent),
            "delta_genre_mean": cal.delta_genre,
            "delta_genre_sum": cal.delta_genre_sum,
        }
        if len(test):
            row["users_without_test"] = len(users - test.users)
            row["ndcg"] = ndcg(recs, test, k).ndcg_at_k
        rows.append(row)
    return {"k": k, "representation": dict(stats.representation), "approaches": rows}


def cmd_evaluate(args) -> int:
    catalog, train = _load_train_items(args)
    test = parse_ratings(args.test)
    if not len(test):
        log.warning("empty test set: NDCG omitted")
    named: dict[str, RecLists] = {}
    paths = {}
    for entry in args.reclists:
        name, path = _parse_named(entry)
        named[name] = parse_reclists(path)
        paths[f"reclists:{name}"] = path
    train_users = train.users
    for name, recs in named.items():
        if not set(recs.users) & train_users:
            raise CommandError(f"approach {name}: no users in common with the training set")
    report = evaluate_lists(named, catalog, train, test, args.topk)
    continents = list(report["representation"])
    header = ["approach", "delta_total", "delta_genre_mean", "delta_genre_sum"]
    if len(test):
        header.append("ndcg")
    header += [f"delta_v_{c}" for c in continents]
    csv_rows = []
    for row in report["approaches"]:
        vals = [row["approach"]] + [fmt_number(row[h]) for h in header[1:4]]
        if len(test):
            vals.append(fmt_number(row["ndcg"]))
        vals += [fmt_number(row["delta_v"][c]) for c in continents]
        csv_rows.append(vals)
    inputs = {"train": args.train, "test": args.test, "items": args.items, **paths}
    with _run(args, "evaluate", "manifest-evaluate.json", inputs, {"topk": args.topk}) as out:
        out.path("report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        write_rows(out.path("report.csv"), header, csv_rows)
    return 0


def cmd_synth(args) -> int:
    kwargs = {"seed": args.seed}
    if args.config:
        kwargs.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        kwargs.setdefault("seed", args.seed)
    for name in ("n_users", "n_items", "ratings_per_user", "multi_label_prob", "score_noise"):
        value = getattr(args, name)
        if value is not None:
            kwargs[name] = value
    cfg = SynthConfig(**kwargs)
    catalog, interactions, recs = generate(cfg)
    if args.topn:
        recs = recs.truncate(args.topn)
    inputs = {"config": args.config}
    with _run(args, "synth", "manifest.json", inputs, {"config": cfg.to_dict(), "topn": args.topn}) as out:
        write_item_meta(out.path("items.csv"), catalog)
        write_ratings(out.path("ratings.csv"), interactions)
        write_reclists(out.path("reclists.csv"), recs)
    return 0


def format_report(report: dict) -> str:
    rows = report["approaches"]
    has_ndcg = any("ndcg" in r for r in rows)
    cols = ["delta_total", "delta_genre_mean", "delta_genre_sum"] + (["ndcg"] if has_ndcg else [])
    lines = ["approach".ljust(10) + "".join(c.rjust(18) for c in cols)]
    for r in rows:
        lines.append(r["approach"].ljust(10) + "".join(f"{r[c]:18.4f}" for c in cols))
    lines.append("")
    continents = list(report["representation"])
    lines.append("delta_v".ljust(10) + "".join(c.rjust(10) for c in continents))
    for r in rows:
        lines.append(r["approach"].ljust(10) + "".join(f"{r['delta_v'][c]:10.4f}" for c in continents))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    report = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
    text = format_report(report)
    with _run(args, "report", "manifest-report.json", {"metrics": args.metrics}, {}) as out:
        out.path("report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _fraction(value: str) -> float:
    f = float(value)
    if not 0.0 < f < 1.0:
        raise argparse.ArgumentTypeError(f"fraction must lie in (0, 1), got {value}")
    return f


def _lambda(value: str) -> float:
    f = float(value)
    if not 0.0 <= f <= 1.0:
        raise argparse.ArgumentTypeError(f"lambda must lie in [0, 1], got {value}")
    return f


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moregin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="temporal train/test split")
    p.add_argument("--ratings", required=True)
    p.add_argument("--fraction", type=_fraction, default=0.8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("stats", help="representation, propensity and genre x continent matrix")
    p.add_argument("--train", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("rerank", help="re-rank candidate lists")
    p.add_argument("--train", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--reclists", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--approach", choices=APPROACHES, default="moregin")
    p.add_argument("--topk", type=_positive, default=10)
    p.add_argument("--topn", type=_positive, default=1000)
    p.add_argument("--lambda", dest="lam", type=_lambda, default=0.99)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("evaluate", help="visibility, calibration and NDCG report")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--reclists", required=True, nargs="+", metavar="[NAME=]PATH")
    p.add_argument("--topk", type=_positive, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file with SynthConfig fields")
    p.add_argument("--n-users", type=_positive)
    p.add_argument("--n-items", type=_positive)
    p.add_argument("--ratings-per-user", type=_positive)
    p.add_argument("--multi-label-prob", type=float)
    p.add_argument("--score-noise", type=float)
    p.add_argument("--topn", type=_positive, help="truncate candidate lists")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="format an evaluation report.json as tables")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MOREGIN_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CommandError, ParseError, ValueError, KeyError, OSError) as exc:
        print(f"moregin {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
