"""End-to-end reproduction run writing every artifact plus a hashed manifest."""
from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import report
from ._seeding import derived_rng
from .data import EncodedDataset, SplitPair, load_census, train_test_split
from .fairness import AuditConfig, audit, compare_with_importance, sibling_map
from .global_explain import fit_global_surrogate, permutation_importance, sp_lime
from .lime import LimeConfig, TabularSampler, explanation_matrix, lime_explain, run_seed, stability
from .models import GbtConfig, GbtModel, evaluate, train_gbt
from .report import ChartSpec, Series, emit_svg, hbar, write_json
from .shap import BackgroundSet, decision_data, dependency_data, explain, force_data, shap_importance, summary_data

# Stream keys for derived_rng so each stage draws independently of the others.
KEY_SHAP_ROWS, KEY_LIME_ROWS, KEY_SP_ROWS, KEY_BACKGROUND = 1, 2, 3, 4

DEPENDENCY_FEATURES = ("age", "education.num", "capital.gain", "hours.per.week")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    ratio: float = 0.8
    gbt: GbtConfig = field(default_factory=GbtConfig)
    shap_instances: int = 100
    shap_background: int = 100
    n_coalitions: int = 2048
    pi_repeats: int = 5
    lime_instances: int = 5
    lime_runs: int = 10
    lime_samples: int = 5000
    lime_top_k: int = 6
    sp_instances: int = 200
    sp_top_k: int = 8
    sp_budget: int = 5
    audit_sample: int = 2000
    surrogate_depth: int = 4


@dataclass(frozen=True)
class RunManifest:
    config: dict
    seeds: dict
    inputs: tuple[tuple[str, str], ...]
    artifacts: tuple[tuple[str, str], ...]
    timings: tuple[tuple[str, float], ...]


report.register(RunManifest)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def pick_rows(data: EncodedDataset, n: int, seed: int, key: int) -> np.ndarray:
    """Sorted positions of ``n`` rows of ``data`` drawn without replacement."""
    n = min(n, len(data))
    return np.sort(derived_rng(seed, key).choice(len(data), size=n, replace=False))


class _Run:
    def __init__(self, out: Path):
        self.out = out
        self.timings: list[tuple[str, float]] = []
        self.files: list[str] = []

    def stage(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timings.append((name, round(time.perf_counter() - self.t, 3)))

        return _Timer()

    def json(self, name: str, product) -> None:
        write_json(product, self.out / name)
        self.files.append(name)

    def svg(self, name: str, spec: ChartSpec) -> None:
        emit_svg(spec, self.out / name)
        self.files.append(name)

    def text(self, name: str, content: str) -> None:
        (self.out / name).write_text(content, encoding="utf-8")
        self.files.append(name)


def reproduce(data_path, out, config: PipelineConfig = PipelineConfig(), threads: int = 1, log=print) -> RunManifest:
    """Run every analysis stage on the census file at ``data_path``.

    All outputs land in ``out``; the result depends only on the data file and
    ``config`` (never on ``threads``).
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(out)
    seed = config.seed

    with run.stage("ingest"):
        schema, data = load_census(data_path)
        split = train_test_split(data, config.ratio, seed)
        run.json("schema.json", schema.to_dict())
    log(f"ingest: {len(data)} rows, {data.n_features} encoded features")

    with run.stage("train"):
        model = train_gbt(split.train.matrix, split.train.labels, config.gbt, data.feature_names)
        model = GbtModel(model.trees, model.learning_rate, model.base_score, model.feature_names, model.config,
                         {"split_seed": seed, "ratio": config.ratio, "data_sha256": sha256_file(data_path)})
        (out / "model.json").write_text(model.dumps(), encoding="utf-8")
        run.files.append("model.json")
    log(f"train: {len(model.trees)} trees")

    with run.stage("metrics"):
        m_train, m_test = evaluate(model, split.train), evaluate(model, split.test)
        run.json("metrics.json", {"train": m_train, "test": m_test})
        run.text("metrics.txt", report.metrics_table([("Train", m_train), ("Test", m_test)]))
        gain = model.gain_importance()
        run.json("gain_importance.json", gain)
        run.svg("gain_importance.svg", hbar("Gain importance", gain[:20], "share of total gain"))
    log(f"metrics: test accuracy {m_test.accuracy:.4f}, auc {m_test.auc:.4f}")

    with run.stage("permutation_importance"):
        pi_train = permutation_importance(model, split.train, config.pi_repeats, seed, threads=threads)
        pi_test = permutation_importance(model, split.test, config.pi_repeats, seed, threads=threads)
        run.json("pi_train.json", pi_train)
        run.json("pi_test.json", pi_test)
        run.svg("pi_test.svg", hbar("Permutation importance (test AUC drop)", [(n, m) for n, m, _ in pi_test.features]))
    log(f"permutation importance: top {pi_train.ranking[0]} / {pi_test.ranking[0]}")

    with run.stage("shap"):
        attrs, shap_rank = _shap_stage(run, model, split, config, threads)
    log(f"shap: {len(attrs)} instances, top {shap_rank[0][0]}")

    with run.stage("lime_stability"):
        _lime_stage(run, model, split, attrs, config, threads)

    with run.stage("surrogates"):
        for kind in ("tree", "logistic"):
            rep = fit_global_surrogate(model, split.train, split.test, kind, max_depth=config.surrogate_depth)
            run.json(f"surrogate_{kind}.json", rep)
            if rep.rendering:
                run.text(f"surrogate_{kind}.txt", rep.rendering)
            log(f"surrogate {kind}: r2 {rep.r2_train:.3f} / {rep.r2_test:.3f}, accepted={rep.accepted}")

    with run.stage("sp_lime"):
        _sp_stage(run, model, split, config, threads)

    with run.stage("audit"):
        siblings = sibling_map(data.groups)
        reports = {}
        for strategy in ("projection", "residual-shuffle"):
            cfg = AuditConfig(sample_size=min(config.audit_sample, len(split.test)), seed=seed, strategy=strategy)
            dep = audit(model, split.test.matrix, cfg, data.feature_names, siblings, threads=threads)
            reports[strategy] = dep
            run.json(f"audit_{strategy}.json", dep)
            run.svg(f"audit_{strategy}.svg", hbar(f"Dependence audit ({strategy})", dep.ranking()[:20], "normalised dependence"))
            div = compare_with_importance(dep, shap_rank, pi_test.features, group_of=data.group_of())
            run.json(f"divergence_{strategy}.json", div)
            log(f"audit {strategy}: divergence {list(div.features)}")

    artifacts = tuple((name, sha256_file(out / name)) for name in sorted(run.files))
    cfg = asdict(config)
    manifest = RunManifest(
        config=cfg,
        seeds={"split": seed, "subsample": config.gbt.subsample_seed, "explain": seed, "audit": seed},
        inputs=((Path(data_path).name, sha256_file(data_path)),),
        artifacts=artifacts,
        timings=tuple(run.timings),
    )
    write_json(manifest, out / "manifest.json")
    return manifest


def _shap_stage(run: _Run, model, split: SplitPair, config: PipelineConfig, threads: int):
    seed = config.seed
    names = model.feature_names
    rows = pick_rows(split.test, config.shap_instances, seed, KEY_SHAP_ROWS)
    X = split.test.matrix[rows]
    background = BackgroundSet.sample(split.train.matrix, config.shap_background, int(derived_rng(seed, KEY_BACKGROUND).integers(2**31)))
    attrs = explain(model, X, background, names, "kernel", config.n_coalitions, seed,
                    instance_ids=split.test.row_ids[rows], threads=threads)
    run.json("shap_values.json", attrs)
    rank = shap_importance(attrs)
    run.json("shap_importance.json", rank)
    run.svg("shap_importance.svg", hbar("Mean |SHAP value|", rank[:20], "mean |phi|"))
    summary = summary_data(attrs, X)[:15]
    run.json("shap_summary.json", summary)
    run.svg("shap_summary.svg", ChartSpec(
        "beeswarm-lite", "SHAP summary",
        tuple(Series(r.feature, tuple(r.phi.tolist()), color=tuple(r.normalized_value.tolist())) for r in summary),
        x_label="SHAP value", color_rule="value",
    ))
    for feat in DEPENDENCY_FEATURES:
        dep = dependency_data(attrs, X, feat)
        slug = feat.replace(".", "_")
        run.json(f"shap_dependency_{slug}.json", dep)
        lo, hi = dep.interaction_values.min(), dep.interaction_values.max()
        col = (dep.interaction_values - lo) / (hi - lo) if hi > lo else np.full(len(dep.interaction_values), 0.5)
        run.svg(f"shap_dependency_{slug}.svg", ChartSpec(
            "scatter", f"SHAP dependence: {feat} (colour: {dep.interaction})",
            (Series(feat, tuple(dep.feature_values.tolist()), tuple(dep.phi_values.tolist()), tuple(col.tolist())),),
            x_label=feat, y_label="SHAP value", color_rule="value",
        ))
    return attrs, rank


def _lime_stage(run: _Run, model, split: SplitPair, attrs, config: PipelineConfig, threads: int):
    seed = config.seed
    names = model.feature_names
    sampler = TabularSampler(split.train)
    ids = [int(i) for i in attrs.instance_ids[: config.lime_instances]]
    lookup = {int(r): k for k, r in enumerate(split.test.row_ids)}
    cfg = LimeConfig(n_samples=config.lime_samples, top_k=config.lime_top_k, seed=seed)

    def one(iid):
        x = split.test.matrix[lookup[iid]]
        varied = stability(model, x, sampler, config.lime_runs, cfg, instance_id=iid)
        fixed = stability(model, x, sampler, config.lime_runs, cfg, instance_id=iid, reuse_seed=True)
        return {"instance_id": iid, "independent_seeds": varied, "fixed_seed": fixed}

    results = parallel_map(one, ids, threads)
    forces = []
    for iid in ids:
        attr = attrs.row(attrs.position(iid))
        repeats = [report.emit_json(force_data(attr, names)) for _ in range(config.lime_runs)]
        forces.append({"instance_id": iid, "force": force_data(attr, names), "identical_across_runs": len(set(repeats)) == 1})
    run.json("lime_stability.json", results)
    run.json("shap_force.json", forces)
    first = forces[0]["force"]
    run.svg("shap_force.svg", hbar(f"SHAP force, instance {ids[0]}", first.contributions[:15], "contribution"))
    dec = decision_data(attrs, ids)
    run.json("shap_decision.json", dec)
    run.svg("shap_decision.svg", ChartSpec(
        "path", "SHAP decision paths",
        tuple(Series(str(i), p[1:]) for i, p in dec.paths),
        labels=dec.feature_order, x_label="model output", baseline=dec.base_value,
    ))


def _sp_stage(run: _Run, model, split: SplitPair, config: PipelineConfig, threads: int):
    seed = config.seed
    rows = pick_rows(split.test, config.sp_instances, seed, KEY_SP_ROWS)
    sampler = TabularSampler(split.train)
    ids = [int(split.test.row_ids[r]) for r in rows]

    def one(k):
        cfg = LimeConfig(n_samples=config.lime_samples, top_k=config.sp_top_k, seed=run_seed(seed, ids[k], 0))
        return lime_explain(model, split.test.matrix[rows[k]], sampler, cfg, instance_id=ids[k])

    explanations = parallel_map(one, range(len(rows)), threads)
    W = explanation_matrix(explanations, model.feature_names)
    pick = sp_lime(W, config.sp_budget)
    picked = [explanations[k] for k in pick.selected]
    run.json("sp_lime.json", {
        "instance_ids": ids,
        "pick": pick,
        "picked_instance_ids": [ids[k] for k in pick.selected],
        "picked_explanations": picked,
    })


def load_split(data_path, seed: int = 42, ratio: float = 0.8) -> tuple[object, EncodedDataset, SplitPair]:
    schema, data = load_census(data_path)
    return schema, data, train_test_split(data, ratio, seed)
