"""Headless command-line driver for every pipeline stage.

Exit codes: 0 ok, 2 usage error, 3 data error, 4 generator/network error.
Every run appends a reproducibility line (argv, seeds, store hash) to the
journal in the store directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import classifier as clf
from . import features as feats
from .corpus import Dataset, load_dataset, merge_datasets, save_dataset, stratified_split
from .corpus import SplitAssignment, class_summary
from .errors import DataError, GeneratorError
from .gencorpus import CorpusSpec, generate_corpus, load_synonyms, save_synonyms
from .heatmap import (
    CorrectnessSample,
    DivisionLine,
    HalfPlane,
    RectRegion,
    rbf_error_field,
    save_error_field,
)
from .projection import fit_pca, fit_tsne, load_embedding, project_pca, save_embedding
from .synthesis import (
    GenerationParams,
    SynthesisRequest,
    make_generator,
    select_examples_by_keywords,
    select_examples_in_region,
    select_examples_random,
    synthesize,
)
from .svg import heatmap_svg, scatter_svg, treemap_svg
from .tagtreemap import build_tag_treemap
from .workbench import RunStore

DEFAULT_STORE = os.environ.get("IGAIVA_STORE", "./igaiva-store")


def _load_split(path: str) -> SplitAssignment:
    p = Path(path)
    if not p.exists():
        raise DataError(f"split file not found: {p}")
    return SplitAssignment.from_json(json.loads(p.read_text(encoding="utf-8")))


def _write_json(path: str, doc: dict) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, ensure_ascii=False, indent=2), encoding="utf-8")


def _features_sidecar(model_path: str) -> Path:
    return Path(model_path).with_suffix(".features.json")


def _collect_roles(dataset: Dataset, split, report: clf.EvalReport | None, focus: str | None):
    roles = {}
    for m in dataset.messages:
        if focus is not None and m.label != focus:
            roles[m.id] = "other"
        elif m.origin == "synthetic":
            roles[m.id] = "synthetic"
        elif split is not None and m.id in split.test_ids:
            if report is None:
                roles[m.id] = "test_correct"
            else:
                roles[m.id] = (
                    "test_correct" if report.predicted.get(m.id) == m.label else "test_incorrect"
                )
        else:
            roles[m.id] = "train"
    return roles


# -- subcommand handlers ------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    downsample = None
    if args.downsample:
        label, _, size = args.downsample.partition(":")
        if not size.isdigit():
            raise DataError(f"--downsample expects CLASS:N, got {args.downsample!r}")
        downsample = (label, int(size))
    sizes = tuple(int(s) for s in args.sizes.split(",")) if args.sizes else None
    spec = CorpusSpec(
        n_classes=args.classes,
        class_size=args.size,
        sizes=sizes,
        seed=args.seed,
        downsample=downsample,
        name=Path(args.out).stem,
    )
    dataset, synonyms = generate_corpus(spec)
    save_dataset(dataset, args.out)
    save_synonyms(synonyms, Path(args.out).with_suffix(".synonyms.json"))
    summary = class_summary(dataset)
    print(f"wrote {args.out}: {summary.total} messages in {len(summary.counts)} classes")
    return 0


def cmd_split(args) -> int:
    dataset = load_dataset(args.data)
    split = stratified_split(dataset, args.fraction, args.seed)
    _write_json(args.out, split.to_json())
    print(f"wrote {args.out}: train {len(split.train_ids)} / test {len(split.test_ids)}")
    return 0


def cmd_featurize(args) -> int:
    dataset = load_dataset(args.data)
    texts = [m.text for m in dataset.messages]
    fitted_on = dataset.name
    if args.split:
        split = _load_split(args.split)
        texts = [m.text for m in dataset.messages if m.id in split.train_ids]
        fitted_on = f"{dataset.name}/{Path(args.split).stem}"
    config = feats.TfidfConfig(
        min_df=args.min_df,
        max_features=args.max_features,
        stopwords=None if args.stopwords == "none" else args.stopwords,
    )
    model = feats.fit_tfidf(texts, config, fitted_on=fitted_on)
    feats.save_tfidf(model, args.out)
    print(f"wrote {args.out}: vocabulary of {model.dim} terms over {model.n_docs} documents")
    return 0


def cmd_project(args) -> int:
    dataset = load_dataset(args.data)
    model = feats.load_tfidf(args.features)
    fm = feats.featurize_messages(model, dataset.messages)
    if args.method == "pca":
        dims = tuple(int(p) for p in args.dims.split(","))
        pca = fit_pca(fm.matrix, min(args.components, len(dataset) - 1, model.dim))
        emb = project_pca(pca, fm, dims)
    else:
        emb = fit_tsne(fm, perplexity=args.perplexity, iterations=args.iterations, seed=args.seed)
    save_embedding(emb, args.out)
    print(f"wrote {args.out}: {len(emb.ids)} points ({emb.method})")
    if args.svg:
        split = _load_split(args.split) if args.split else None
        report = clf.load_report(args.report) if args.report else None
        roles = _collect_roles(dataset, split, report, args.focus_class)
        Path(args.svg).write_text(
            scatter_svg(emb, roles, title=f"{dataset.name} {emb.method}"), encoding="utf-8"
        )
        print(f"wrote {args.svg}")
    return 0


def cmd_heatmap(args) -> int:
    dataset = load_dataset(args.data)
    split = _load_split(args.split)
    report = clf.load_report(args.report)
    emb = load_embedding(args.embedding)
    samples = []
    for mid in sorted(split.test_ids):
        msg = dataset.get(mid)
        if args.focus_class is not None and msg.label != args.focus_class:
            continue
        x, y = emb.point_of(mid)
        samples.append(
            CorrectnessSample(id=mid, x=x, y=y, correct=report.predicted.get(mid) == msg.label)
        )
    w, _, h = args.grid.partition("x")
    field = rbf_error_field(samples, grid=(int(w), int(h or w)), epsilon=args.epsilon)
    save_error_field(field, args.out)
    print(f"wrote {args.out}: {field.width}x{field.height} grid, epsilon {field.epsilon}")
    if args.svg:
        Path(args.svg).write_text(heatmap_svg(field, samples), encoding="utf-8")
        print(f"wrote {args.svg}")
    return 0


def cmd_tagmap(args) -> int:
    dataset = load_dataset(args.data)
    messages = [m for m in dataset.messages if args.focus_class is None or m.label == args.focus_class]
    if args.group_by == "class":
        groups = [(label, [dataset.get(i) for i in ids]) for label, ids in dataset.class_index.items()]
        if args.focus_class:
            groups = [g for g in groups if g[0] == args.focus_class]
    elif args.group_by == "split":
        split = _load_split(args.split)
        groups = [
            ("train", [m for m in messages if m.id in split.train_ids]),
            ("test", [m for m in messages if m.id in split.test_ids]),
        ]
    elif args.group_by == "line":
        emb = load_embedding(args.embedding)
        a, b, c = (float(p) for p in args.line.split(","))
        line = DivisionLine(a, b, c)
        from .heatmap import partition_by_line

        pts = [(m.id, *emb.point_of(m.id)) for m in messages]
        side_a, side_b, _ = partition_by_line(pts, line)
        in_a, in_b = set(side_a), set(side_b)
        groups = [
            ("side_A", [m for m in messages if m.id in in_a]),
            ("side_B", [m for m in messages if m.id in in_b]),
        ]
    else:
        raise DataError(f"unknown --group-by {args.group_by!r}")
    layout = build_tag_treemap(groups, top_k=args.top_k, stopwords=args.stopwords)
    _write_json(args.out, layout.to_json())
    print(f"wrote {args.out}: {len(layout.cells)} cells")
    if args.svg:
        Path(args.svg).write_text(treemap_svg(layout), encoding="utf-8")
        print(f"wrote {args.svg}")
    return 0


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    split = _load_split(args.split)
    train_set = dataset.subset(split.train_ids, name=f"{dataset.name}-train")
    if args.add:
        additions = [load_dataset(p) for p in args.add]
        train_set = merge_datasets(train_set, additions, name=train_set.name)
    if args.features:
        model_feats = feats.load_tfidf(args.features)
    else:
        model_feats = feats.fit_tfidf(
            [m.text for m in train_set.messages], fitted_on=f"{dataset.name}/train"
        )
    config = clf.TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        l2=args.l2,
        batch_size=args.batch_size,
        seed=args.seed,
    )

    def sink(event):
        print(f"epoch {event['epoch'] + 1}/{config.epochs} loss {event['loss']:.6f}")

    model = clf.train(train_set, model_feats, config, progress_sink=sink)
    clf.save_model(model, args.out)
    feats.save_tfidf(model_feats, _features_sidecar(args.out))
    print(f"wrote {args.out} (+ features sidecar), trained on {len(train_set)} messages")
    return 0


def cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    split = _load_split(args.split)
    model = clf.load_model(args.model)
    features_path = args.features or _features_sidecar(args.model)
    model_feats = feats.load_tfidf(features_path)
    test_set = dataset.subset(split.test_ids, name=f"{dataset.name}-test")
    if frozenset(test_set.ids) != split.test_ids:
        raise DataError("test-set immutability violated: dataset is missing split test ids")
    report = clf.evaluate(model, test_set, model_feats, test_ids_hash=split.test_ids_hash())
    clf.save_report(report, args.out)
    print(f"wrote {args.out}: overall recall {report.overall_recall:.3f}")
    if args.csv:
        Path(args.csv).write_text(clf.report_csv(report), encoding="utf-8")
        print(f"wrote {args.csv}")
    if args.markdown:
        print(clf.report_markdown(report))
    return 0


def cmd_select(args) -> int:
    dataset = load_dataset(args.data)
    split = _load_split(args.split)
    if args.random:
        ids = select_examples_random(dataset, split.train_ids, args.focus_class, args.n, args.seed)
        mode = "random"
    elif args.keywords:
        terms = [t.strip() for t in args.keywords.split(",") if t.strip()]
        ids = select_examples_by_keywords(dataset, split.train_ids, args.focus_class, terms)
        mode = "keywords"
    elif args.rect or args.line:
        emb = load_embedding(args.embedding)
        if args.rect:
            x0, y0, x1, y1 = (float(p) for p in args.rect.split(","))
            region = RectRegion(x0, y0, x1, y1)
        else:
            a, b, c = (float(p) for p in args.line.split(","))
            region = HalfPlane(DivisionLine(a, b, c), args.side)
        ids = select_examples_in_region(dataset, split.train_ids, emb, region, args.focus_class)
        mode = "region"
    else:
        raise DataError("choose a selection mode: --random, --keywords, --rect, or --line")
    leaked = set(ids) & split.test_ids
    if leaked:
        raise DataError("selection produced test ids; refusing to write")
    doc = {
        "schema": 1,
        "kind": "selection",
        "mode": mode,
        "dataset": dataset.name,
        "class": args.focus_class,
        "ids": sorted(ids),
    }
    _write_json(args.out, doc)
    print(f"wrote {args.out}: {len(ids)} example(s)")
    return 0


def cmd_synth(args) -> int:
    dataset = load_dataset(args.data)
    split = _load_split(args.split)
    selection = json.loads(Path(args.examples).read_text(encoding="utf-8"))
    example_ids = tuple(selection["ids"])
    target = args.focus_class or selection.get("class")
    if not target:
        raise DataError("target class unknown: pass --class or use a class-filtered selection")
    request = SynthesisRequest(
        target_label=target,
        example_ids=example_ids,
        params=GenerationParams(per_example_count=args.k),
        generator="mock" if args.mock else "remote",
        run_id=args.run_id or Path(args.out).stem,
        seed=args.seed,
    )
    request.validate_against_split(split.train_ids)
    synonyms = load_synonyms(args.synonyms) if args.synonyms else None
    generator = make_generator(request.generator, synonyms=synonyms)
    batch = synthesize(request, dataset, generator=generator, parallelism=args.parallelism)
    from .synthesis import save_batch

    save_batch(batch, args.out)
    print(f"wrote {args.out}: {len(batch.messages)} synthetic message(s), {len(batch.rejected)} rejected")
    return 0


def cmd_merge(args) -> int:
    base = load_dataset(args.base)
    additions = [load_dataset(p) for p in args.add]
    merged = merge_datasets(base, additions, name=args.name or base.name)
    save_dataset(merged, args.out)
    print(f"wrote {args.out}: {len(merged)} messages")
    return 0


def cmd_compare(args) -> int:
    baseline = clf.load_report(args.reports[0])
    deltas = [
        clf.compare(clf.load_report(path), baseline, name=Path(path).stem)
        for path in args.reports[1:]
    ]
    doc = {
        "baseline": baseline.to_json(),
        "deltas": [d.to_json() for d in deltas],
    }
    if args.out:
        _write_json(args.out, doc)
        print(f"wrote {args.out}")
    if args.markdown or not args.out:
        print(clf.compare_markdown(baseline, deltas), end="")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    print(f"serving store {args.store} on http://{args.host}:{args.port}")
    serve(args.port, args.store, host=args.host)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igaiva",
        description="Targeted synthetic-data workbench for text classifiers",
    )
    parser.add_argument("--store", default=DEFAULT_STORE, help="store directory for the run journal")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="emit the deterministic template corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--size", type=int, default=200)
    p.add_argument("--sizes", default=None, help="comma-separated per-class sizes")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--downsample", default=None, metavar="CLASS:N")
    p.set_defaults(handler=cmd_gen_corpus)

    p = sub.add_parser("split", help="stratified train/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("featurize", help="fit TF-IDF on the training split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--max-features", type=int, default=30000)
    p.add_argument("--stopwords", default="none", choices=["none", "es", "en", "es+en"])
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_featurize)

    p = sub.add_parser("project", help="2-D embedding (PCA or t-SNE)")
    p.add_argument("--data", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--method", choices=["pca", "tsne"], default="pca")
    p.add_argument("--dims", default="0,1")
    p.add_argument("--components", type=int, default=20)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.add_argument("--split", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--class", dest="focus_class", default=None)
    p.set_defaults(handler=cmd_project)

    p = sub.add_parser("heatmap", help="recall-error field over an embedding")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--epsilon", type=float, default=0.125)
    p.add_argument("--grid", default="64x64")
    p.add_argument("--class", dest="focus_class", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(handler=cmd_heatmap)

    p = sub.add_parser("tagmap", help="tag-treemap over message groups")
    p.add_argument("--data", required=True)
    p.add_argument("--group-by", choices=["class", "split", "line"], default="class")
    p.add_argument("--split", default=None)
    p.add_argument("--embedding", default=None)
    p.add_argument("--line", default=None, metavar="A,B,C")
    p.add_argument("--top-k", type=int, default=12)
    p.add_argument("--stopwords", default="es+en")
    p.add_argument("--class", dest="focus_class", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(handler=cmd_tagmap)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--add", action="append", default=[], help="synthetic batch JSONL (repeatable)")
    p.add_argument("--features", default=None, help="reuse a fitted TF-IDF model")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on the test split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--markdown", action="store_true")
    p.add_argument("--csv", default=None, help="also write the report as CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("select", help="select training examples")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--class", dest="focus_class", default=None)
    p.add_argument("--random", action="store_true")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keywords", default=None, help="comma-separated terms")
    p.add_argument("--rect", default=None, metavar="X0,Y0,X1,Y1")
    p.add_argument("--line", default=None, metavar="A,B,C")
    p.add_argument("--side", choices=["A", "B"], default="A")
    p.add_argument("--embedding", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("synth", help="generate synthetic messages from a selection")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--examples", required=True, help="selection JSON from `select`")
    p.add_argument("--class", dest="focus_class", default=None)
    p.add_argument("-k", type=int, default=5, help="variants per example")
    p.add_argument("--seed", type=int, default=0)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--mock", action="store_true", help="offline deterministic generator")
    group.add_argument("--remote", action="store_true", help="chat-completions endpoint")
    p.add_argument("--synonyms", default=None)
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--run-id", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("merge", help="merge datasets / batches into one file")
    p.add_argument("--base", required=True)
    p.add_argument("--add", action="append", default=[], required=False)
    p.add_argument("--name", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_merge)

    p = sub.add_parser("compare", help="delta-recall table against a baseline report")
    p.add_argument("reports", nargs="+", help="baseline report first, then experiment reports")
    p.add_argument("--markdown", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(handler=cmd_serve)

    return parser


def _journal(args, argv: list[str]) -> None:
    try:
        store = RunStore(args.store)
        seeds = {k: v for k, v in vars(args).items() if k.endswith("seed") and v is not None}
        store.journal("cli_run", argv=argv, seeds=seeds, store_hash=store.store_hash())
    except OSError:
        pass  # journaling must never break a run


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _journal(args, argv)
    try:
        return args.handler(args)
    except GeneratorError as exc:
        print(f"generator error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
