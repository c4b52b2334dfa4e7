"""Command-line entry point: ``glassbox <subcommand> ...``.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import os
import shutil
import sys
import urllib.request
from pathlib import Path

from . import report
from ._seeding import derived_rng
from .data import DataError, schema_summary
from .fairness import DEFAULT_SENSITIVE, STRATEGIES, AuditConfig, audit, sibling_map
from .global_explain import fit_global_surrogate, permutation_importance, sp_lime
from .lime import LimeConfig, TabularSampler, explanation_matrix, lime_explain, run_seed, stability
from .models import GbtConfig, GbtModel, evaluate, train_gbt
from .pipeline import KEY_BACKGROUND, KEY_SHAP_ROWS, KEY_SP_ROWS, PipelineConfig, load_split, pick_rows, reproduce, sha256_file
from .report import hbar, write_json
from .shap import BackgroundSet, explain, shap_importance

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3

# sha256 of the 32,561-row adult.csv with dot-separated column names
ADULT_SHA256 = "0790474b6024ba34548c2add2514ec29c0d6c895d81e0fe38f3ea618bee066a8"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Usage(f"{self.prog}: error: {message}")


class _Usage(Exception):
    pass


def default_data_path() -> Path:
    return Path(os.environ.get("GLASSBOX_DATA_DIR", "data")) / "adult.csv"


def _common(p: argparse.ArgumentParser, model: bool = True) -> None:
    p.add_argument("--data", type=Path, default=None, help="census CSV (default: $GLASSBOX_DATA_DIR/adult.csv)")
    if model:
        p.add_argument("--model", type=Path, required=True, help="model JSON written by `train`")
    p.add_argument("--seed", type=int, default=42, help="split and sampling seed")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glassbox", description="Explainability and fairness audit toolkit for tabular classifiers.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="fetch or read the census CSV, verify it and write its schema")
    _common(p, model=False)
    p.add_argument("--fetch", metavar="URL_OR_PATH", help="download from a URL or copy a local file into --out")
    p.add_argument("--sha256", default=ADULT_SHA256, help="expected content hash ('' disables the check)")

    p = sub.add_parser("train", help="train the gradient-boosted model")
    _common(p, model=False)
    p.add_argument("--n-trees", type=int, default=GbtConfig.n_trees)
    p.add_argument("--max-depth", type=int, default=GbtConfig.max_depth)
    p.add_argument("--learning-rate", type=float, default=GbtConfig.learning_rate)
    p.add_argument("--min-child-weight", type=float, default=GbtConfig.min_child_weight)
    p.add_argument("--subsample-seed", type=int, default=GbtConfig.subsample_seed)

    p = sub.add_parser("eval", help="classification metrics on both splits")
    _common(p)
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("explain-shap", help="KernelSHAP or exact Shapley attributions for test rows")
    _common(p)
    p.add_argument("--instances", type=int, default=100, help="number of test rows to explain")
    p.add_argument("--background", type=int, default=100)
    p.add_argument("--method", choices=("kernel", "exact"), default="kernel")
    p.add_argument("--n-coalitions", type=int, default=2048)

    p = sub.add_parser("explain-lime", help="LIME explanation of one test row")
    _common(p)
    p.add_argument("--instance", type=int, default=0, help="position within the test split")
    p.add_argument("--n-samples", type=int, default=5000)
    p.add_argument("--top-k", type=int, default=6)
    p.add_argument("--kernel-width", type=float, default=None)
    p.add_argument("--runs", type=int, default=None, help="repeat with independent seeds and report stability")

    p = sub.add_parser("global-importance", help="permutation importance (AUC drop)")
    _common(p)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--split", choices=("train", "test"), default="test")

    p = sub.add_parser("surrogate", help="global surrogate with R^2 fidelity gate")
    _common(p)
    p.add_argument("--kind", choices=("tree", "logistic"), default="tree")
    p.add_argument("--max-depth", type=int, default=4)

    p = sub.add_parser("sp-lime", help="submodular pick over LIME explanations")
    _common(p)
    p.add_argument("--budget", type=int, default=5)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--top-k", type=int, default=8)
    p.add_argument("--n-samples", type=int, default=5000)

    p = sub.add_parser("audit", help="orthogonal-projection dependence audit")
    _common(p)
    p.add_argument("--sample-size", type=int, default=2000)
    p.add_argument("--sensitive", nargs="*", default=list(DEFAULT_SENSITIVE), help="name globs")
    p.add_argument("--strategy", choices=STRATEGIES, default="residual-shuffle")

    p = sub.add_parser("reproduce", help="run the whole pipeline and write a manifest")
    _common(p, model=False)
    return parser


def _data(args) -> Path:
    path = args.data or default_data_path()
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    return path


def _model(args) -> GbtModel:
    return GbtModel.loads(Path(args.model).read_text(encoding="utf-8"))


def _out(args) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_ingest(args) -> int:
    out = _out(args)
    if args.fetch:
        target = out / "adult.csv"
        if args.fetch.startswith(("http://", "https://")):
            with urllib.request.urlopen(args.fetch) as resp, open(target, "wb") as fh:
                shutil.copyfileobj(resp, fh)
        elif Path(args.fetch).resolve() != target.resolve():
            shutil.copyfile(args.fetch, target)
        path = target
    else:
        path = _data(args)
    digest = sha256_file(path)
    if args.sha256 and digest != args.sha256:
        raise DataError(f"content hash mismatch for {path}: got {digest}")
    schema, data, _ = load_split(path, args.seed)
    summary = schema_summary(schema, data)
    summary["sha256"] = digest
    write_json(summary, out / "schema.json")
    print(f"{len(data)} rows, {data.n_features} encoded features, sha256 {digest}")
    return EXIT_OK


def cmd_train(args) -> int:
    path = _data(args)
    _, data, split = load_split(path, args.seed)
    config = GbtConfig(args.n_trees, args.max_depth, args.learning_rate, args.min_child_weight,
                       subsample_seed=args.subsample_seed)
    model = train_gbt(split.train.matrix, split.train.labels, config, data.feature_names)
    model = GbtModel(model.trees, model.learning_rate, model.base_score, model.feature_names, config,
                     {"split_seed": args.seed, "ratio": 0.8, "data_sha256": sha256_file(path)})
    target = _out(args) / "model.json"
    target.write_text(model.dumps(), encoding="utf-8")
    print(f"wrote {target}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _model(args)
    _, _, split = load_split(_data(args), args.seed)
    m_train = evaluate(model, split.train, args.threshold)
    m_test = evaluate(model, split.test, args.threshold)
    out = _out(args)
    write_json({"train": m_train, "test": m_test}, out / "metrics.json")
    table = report.metrics_table([("Train", m_train), ("Test", m_test)])
    (out / "metrics.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_explain_shap(args) -> int:
    model = _model(args)
    _, _, split = load_split(_data(args), args.seed)
    rows = pick_rows(split.test, args.instances, args.seed, KEY_SHAP_ROWS)
    bg_seed = int(derived_rng(args.seed, KEY_BACKGROUND).integers(2**31))
    background = BackgroundSet.sample(split.train.matrix, args.background, bg_seed)
    attrs = explain(model, split.test.matrix[rows], background, model.feature_names, args.method, args.n_coalitions,
                    args.seed, instance_ids=split.test.row_ids[rows], threads=args.threads)
    out = _out(args)
    write_json(attrs, out / "shap_values.json")
    rank = shap_importance(attrs)
    write_json(rank, out / "shap_importance.json")
    report.emit_svg(hbar("Mean |SHAP value|", rank[:20]), out / "shap_importance.svg")
    for name, v in rank[:10]:
        print(f"{name:32s} {v:.4f}")
    return EXIT_OK


def cmd_explain_lime(args) -> int:
    model = _model(args)
    _, _, split = load_split(_data(args), args.seed)
    if not 0 <= args.instance < len(split.test):
        raise ValueError(f"--instance must be in [0, {len(split.test)})")
    sampler = TabularSampler(split.train)
    x = split.test.matrix[args.instance]
    iid = int(split.test.row_ids[args.instance])
    cfg = LimeConfig(n_samples=args.n_samples, top_k=args.top_k, kernel_width=args.kernel_width, seed=args.seed)
    out = _out(args)
    if args.runs:
        rep = stability(model, x, sampler, args.runs, cfg, instance_id=iid)
        write_json(rep, out / "lime_stability.json")
        print(f"runs={rep.runs} distinct top-k sets={rep.distinct_topk_sets} "
              f"mean jaccard={rep.mean_pairwise_jaccard_topk:.3f}")
    else:
        exp = lime_explain(model, x, sampler, cfg, instance_id=iid)
        write_json(exp, out / "lime_explanation.json")
        print(report.emit_text_table(list(exp.coefficients), ["feature", "weight"], precision=4), end="")
        print(f"local R^2 {exp.local_r2:.3f}")
    return EXIT_OK


def cmd_global_importance(args) -> int:
    model = _model(args)
    _, _, split = load_split(_data(args), args.seed)
    data = split.train if args.split == "train" else split.test
    rep = permutation_importance(model, data, args.repeats, args.seed, threads=args.threads)
    out = _out(args)
    write_json(rep, out / f"pi_{args.split}.json")
    report.emit_svg(hbar("Permutation importance (AUC drop)", [(n, m) for n, m, _ in rep.features]),
                    out / f"pi_{args.split}.svg")
    print(report.emit_text_table([list(f) for f in rep.features], ["feature", "mean drop", "std"], precision=4), end="")
    return EXIT_OK


def cmd_surrogate(args) -> int:
    model = _model(args)
    _, _, split = load_split(_data(args), args.seed)
    rep = fit_global_surrogate(model, split.train, split.test, args.kind, max_depth=args.max_depth)
    out = _out(args)
    write_json(rep, out / f"surrogate_{args.kind}.json")
    if rep.rendering:
        (out / f"surrogate_{args.kind}.txt").write_text(rep.rendering, encoding="utf-8")
        print(rep.rendering, end="")
    print(f"R^2 train {rep.r2_train:.3f}  test {rep.r2_test:.3f}  accepted {rep.accepted}")
    return EXIT_OK


def cmd_sp_lime(args) -> int:
    model = _model(args)
    _, _, split = load_split(_data(args), args.seed)
    rows = pick_rows(split.test, args.instances, args.seed, KEY_SP_ROWS)
    sampler = TabularSampler(split.train)
    ids = [int(split.test.row_ids[r]) for r in rows]
    explanations = [
        lime_explain(model, split.test.matrix[r], sampler,
                     LimeConfig(n_samples=args.n_samples, top_k=args.top_k, seed=run_seed(args.seed, i, 0)), instance_id=i)
        for r, i in zip(rows, ids)
    ]
    pick = sp_lime(explanation_matrix(explanations, model.feature_names), args.budget)
    write_json({"instance_ids": ids, "pick": pick, "picked_instance_ids": [ids[k] for k in pick.selected],
                "picked_explanations": [explanations[k] for k in pick.selected]}, _out(args) / "sp_lime.json")
    print(f"picked {[ids[k] for k in pick.selected]} coverage {pick.coverage:.4f}")
    return EXIT_OK


def cmd_audit(args) -> int:
    model = _model(args)
    _, data, split = load_split(_data(args), args.seed)
    cfg = AuditConfig(sample_size=min(args.sample_size, len(split.test)), seed=args.seed,
                      sensitive_features=tuple(args.sensitive), strategy=args.strategy)
    dep = audit(model, split.test.matrix, cfg, data.feature_names, sibling_map(data.groups), threads=args.threads)
    out = _out(args)
    write_json(dep, out / "audit.json")
    report.emit_svg(hbar(f"Dependence audit ({args.strategy})", dep.ranking()[:20]), out / "audit.svg")
    for name, s in dep.ranking()[:15]:
        flag = " *" if dep.sensitive[dep.feature_names.index(name)] else ""
        print(f"{name:32s} {s:+.3f}{flag}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    manifest = reproduce(_data(args), _out(args), PipelineConfig(seed=args.seed), threads=args.threads)
    print(f"wrote {len(manifest.artifacts)} artifacts and manifest.json to {args.out}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "explain-shap": cmd_explain_shap,
    "explain-lime": cmd_explain_lime,
    "global-importance": cmd_global_importance,
    "surrogate": cmd_surrogate,
    "sp-lime": cmd_sp_lime,
    "audit": cmd_audit,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if getattr(args, "threads", 1) < 1:
        print("glassbox: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"glassbox: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"glassbox: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
