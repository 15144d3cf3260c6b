"""Command-line entry point: ``geodiverse <subcommand> ...``.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal error. Errors are
written to stderr as a single JSON line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from datetime import timedelta
from pathlib import Path
from typing import Optional, Sequence

from geodiverse import analytics
from geodiverse.classify import (
    ClassifierSpec,
    ModelFormatError,
    TrainingError,
    Variant,
    load_index,
    predict,
    predict_many,
    save_index,
    timeline_order,
    train,
)
from geodiverse.corpus import GroupingError, IngestError, attach_locations, filter_for_training, ingest
from geodiverse.evaluation import EvalError, FoldError, cross_validate
from geodiverse.gazetteer import HierarchyError, Level, NameIndex, load_aliases, load_hierarchy, resolve
from geodiverse.lsi import LsiError
from geodiverse.synth import SynthConfig, generate

DATA_DIR_ENV = "GEODIVERSE_DATA_DIR"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

DATA_ERRORS = (
    IngestError, HierarchyError, GroupingError, TrainingError, ModelFormatError,
    FoldError, EvalError, LsiError, FileNotFoundError, json.JSONDecodeError,
)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _input_path(value: str) -> Path:
    path = Path(value)
    if not path.is_absolute() and not path.exists() and os.environ.get(DATA_DIR_ENV):
        candidate = Path(os.environ[DATA_DIR_ENV]) / path
        if candidate.exists():
            return candidate
    return path


def _check_inputs(args) -> None:
    for attr in ("posts", "hierarchy", "aliases", "census", "model"):
        if attr == "model" and args.command == "train":
            continue
        value = getattr(args, attr, None)
        if value is None:
            continue
        path = _input_path(value)
        if not path.is_file():
            raise DataError(f"missing input file: {value}")
        setattr(args, attr, str(path))


def _bounded(lo: float, hi: float, kind=float):
    def parse(text: str):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} {text!r}") from None
        if not lo <= value <= hi:
            raise argparse.ArgumentTypeError(f"{value} outside [{lo}, {hi}]")
        return value
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every stochastic step")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--jobs", type=_bounded(1, 256, int), default=1, help="worker cap")
    common.add_argument("--log-level", default="WARNING")

    corpus = _Parser(add_help=False)
    corpus.add_argument("--posts", required=True, help="posts JSON-lines")
    corpus.add_argument("--hierarchy", required=True, help="hierarchy CSV")
    corpus.add_argument("--aliases", help="manual alias CSV (surface,unit_id)")

    spec = _Parser(add_help=False)
    spec.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.TFIDF_L.value)
    spec.add_argument("--level", choices=("province", "region"), default="region")
    spec.add_argument("--k", type=_bounded(1, 100000, int), default=200, help="LSI latent dimensions")
    spec.add_argument("--top-fraction", type=_bounded(1e-9, 1.0), default=0.01)
    spec.add_argument("--skip", type=_bounded(0, 1000, int), default=1)

    parser = _Parser(prog="geodiverse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("resolve", parents=[common], help="resolve profile locations")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--aliases")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--posts")

    p = sub.add_parser("train", parents=[common, corpus, spec], help="train and save a location index")
    p.add_argument("--model", required=True, help="output index path")

    p = sub.add_parser("predict", parents=[common], help="predict locations with a saved index")
    p.add_argument("--model", required=True)
    p.add_argument("--level", choices=("province", "region"), help="expected model level")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--posts")

    p = sub.add_parser("evaluate", parents=[common, corpus, spec], help="stratified cross-validation")
    p.add_argument("--folds", type=_bounded(2, 1000, int), default=10)

    p = sub.add_parser("report", help="corpus reports")
    reports = p.add_subparsers(dest="report", required=True, parser_class=_Parser)
    r = reports.add_parser("hashtags", parents=[common, corpus])
    r.add_argument("--level", choices=("province", "region"), default="region")
    r.add_argument("--top-k", type=_bounded(1, 10000, int), default=3)
    r.add_argument("--min-df", type=_bounded(1, 10**9, int), default=5, help="minimum distinct posts")
    r = reports.add_parser("population", parents=[common, corpus])
    r.add_argument("--level", choices=("province", "region"), default="region")
    r.add_argument("--census", required=True)
    r = reports.add_parser("activity", parents=[common, corpus])
    r.add_argument("--level", choices=("province", "region"), default="region")
    r = reports.add_parser("timeseries", parents=[common, corpus])
    r.add_argument("--level", choices=("province", "region"), default="region")
    r.add_argument("--bin-minutes", type=_bounded(1, 10**6, int), default=10)
    r.add_argument("--svg", help="also write an SVG heat map here")
    reports.add_parser("coverage", parents=[common, corpus])

    p = sub.add_parser("timeline", parents=[common], help="geographically diverse ordering of posts")
    p.add_argument("--model", required=True)
    p.add_argument("--posts", required=True)
    p.add_argument("--quota", type=_bounded(1, 10**6, int), default=1)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    defaults = SynthConfig()
    p.add_argument("--locations", type=_bounded(1, 10000, int), default=defaults.n_locations)
    p.add_argument("--provinces", type=_bounded(1, 1000, int), default=defaults.provinces_per_location)
    p.add_argument("--municipalities", type=_bounded(1, 1000, int), default=defaults.municipalities_per_province)
    p.add_argument("--users", type=_bounded(1, 10**7, int), default=defaults.n_users)
    p.add_argument("--posts-per-user", type=_bounded(1, 1e6), default=defaults.mean_posts_per_user)
    p.add_argument("--zipf", type=_bounded(0, 100), default=defaults.zipf_s)
    p.add_argument("--mixing", type=_bounded(0, 1), default=defaults.mixing)
    p.add_argument("--shared-vocab", type=_bounded(1, 10**7, int), default=defaults.shared_vocab_size)
    p.add_argument("--local-vocab", type=_bounded(1, 10**7, int), default=defaults.local_vocab_size)
    p.add_argument("--hashtag-fraction", type=_bounded(0, 1), default=defaults.hashtag_fraction)
    p.add_argument("--repost-fraction", type=_bounded(0, 1), default=defaults.repost_fraction)
    p.add_argument("--reply-fraction", type=_bounded(0, 1), default=defaults.reply_fraction)
    p.add_argument("--empty-profile-fraction", type=_bounded(0, 1), default=defaults.empty_profile_fraction)
    p.add_argument("--foreign-profile-fraction", type=_bounded(0, 1), default=defaults.foreign_profile_fraction)
    return parser


def _emit(args, payload, rows: Optional[list[dict]] = None) -> None:
    if args.format == "csv":
        if rows is None:
            raise UsageError(f"{args.command} has no CSV output")
        buf = io.StringIO()
        if rows:
            writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _names(args):
    h = load_hierarchy(args.hierarchy)
    aliases = load_aliases(args.aliases, h) if getattr(args, "aliases", None) else None
    return h, NameIndex.build(h, aliases)


def _located_posts(args):
    h, names = _names(args)
    return attach_locations(ingest(args.posts), names), h, names


def _spec(args) -> ClassifierSpec:
    return ClassifierSpec(Variant(args.variant), Level.parse(args.level), args.k, args.top_fraction, args.skip)


def cmd_resolve(args) -> None:
    h, names = _names(args)

    def describe(text):
        loc = resolve(text, names)
        return {
            "text": text,
            "unit_id": loc.unit_id if loc else None,
            "level": loc.level.value if loc else None,
            "name": h[loc.unit_id].name if loc else None,
        }

    if args.text is not None:
        row = describe(args.text)
        _emit(args, row, [row])
        return
    profiles = {}
    for post in ingest(args.posts):
        profiles.setdefault(post.author_id, post.profile_location)
    rows = [{"author_id": a, **describe(t)} for a, t in sorted(profiles.items())]
    _emit(args, rows, rows)


def cmd_train(args) -> None:
    posts, h, _ = _located_posts(args)
    spec = _spec(args)
    index = train(filter_for_training(posts), spec, h, seed=args.seed)
    save_index(index, args.model)
    summary = {
        "model": args.model,
        "spec": spec.to_dict(),
        "locations": index.counts_by_location(),
        "model_documents": index.n_model_docs,
        "vocabulary": len(index.tfidf.vocabulary) if index.tfidf is not None else 0,
        "latent_dimensions": index.lsi.k if index.lsi is not None else None,
    }
    _emit(args, summary, [{"location": k, "tweets": v} for k, v in summary["locations"].items()])


def _load_model(args):
    index = load_index(args.model)
    if getattr(args, "level", None) and Level.parse(args.level) is not index.spec.level:
        raise DataError(f"model/level mismatch: model is {index.spec.level.value}, requested {args.level}")
    return index


def cmd_predict(args) -> None:
    index = _load_model(args)
    if args.text is not None:
        pred = predict(index, args.text)
        _emit(args, pred.to_dict(), [{"location": loc, "score": s} for loc, s in pred.ranked])
        return
    posts = ingest(args.posts)
    chosen = predict_many(index, [p.text for p in posts])
    rows = [{"id": p.id, "location": c} for p, c in zip(posts, chosen)]
    _emit(args, rows, rows)


def cmd_evaluate(args) -> None:
    posts, h, _ = _located_posts(args)
    report = cross_validate(filter_for_training(posts), _spec(args), h, k=args.folds, seed=args.seed, jobs=args.jobs)
    if args.format == "csv":
        text = report.to_csv()
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return
    _emit(args, report.to_dict())


def cmd_report(args) -> None:
    posts, h, names = _located_posts(args)
    kind = args.report
    if kind == "hashtags":
        rep = analytics.discriminative_hashtags(posts, args.level, h, args.top_k, args.min_df)
        _emit(args, rep.to_dict(), rep.rows())
    elif kind == "population":
        census = analytics.read_census(args.census)
        rep = analytics.population_correlation(analytics.account_locations(posts, args.level, h), census)
        _emit(args, rep.to_dict(), rep.rows)
    elif kind == "activity":
        rep = analytics.activity_stats(posts, args.level, h)
        _emit(args, rep.to_dict(), rep.rows())
    elif kind == "timeseries":
        ts = analytics.time_series(posts, args.level, h, timedelta(minutes=args.bin_minutes))
        if args.svg:
            Path(args.svg).write_text(ts.to_svg(), encoding="utf-8")
        _emit(args, ts.to_dict(), ts.rows())
    else:
        rep = analytics.coverage(posts, names)
        _emit(args, rep.to_dict(), rep.rows())


def cmd_timeline(args) -> None:
    index = _load_model(args)
    posts = ingest(args.posts)
    labels = predict_many(index, [p.text for p in posts])
    rows = [{"id": posts[i].id, "location": labels[i]} for i in timeline_order(labels, args.quota)]
    _emit(args, rows, rows)


def cmd_synth(args) -> None:
    if not args.out:
        raise UsageError("synth needs --out DIR")
    try:
        cfg = SynthConfig(
            n_locations=args.locations,
            provinces_per_location=args.provinces,
            municipalities_per_province=args.municipalities,
            zipf_s=args.zipf,
            n_users=args.users,
            mean_posts_per_user=args.posts_per_user,
            shared_vocab_size=args.shared_vocab,
            local_vocab_size=args.local_vocab,
            mixing=args.mixing,
            hashtag_fraction=args.hashtag_fraction,
            repost_fraction=args.repost_fraction,
            reply_fraction=args.reply_fraction,
            empty_profile_fraction=args.empty_profile_fraction,
            foreign_profile_fraction=args.foreign_profile_fraction,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    corpus = generate(cfg)
    paths = corpus.write(args.out)
    summary = {"posts": len(corpus.posts), "files": {k: str(v) for k, v in paths.items()}}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")


COMMANDS = {
    "resolve": cmd_resolve,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "timeline": cmd_timeline,
    "synth": cmd_synth,
}


def _fail(kind: str, code: int, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "code": code, "message": message}) + "\n")
    return code


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        _check_inputs(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, str(exc))
    except (DataError, *DATA_ERRORS) as exc:
        return _fail("data", EXIT_DATA, str(exc))
    except ValueError as exc:
        return _fail("data", EXIT_DATA, str(exc))
    except Exception as exc:  # noqa: BLE001
        return _fail("internal", EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
