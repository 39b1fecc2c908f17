"""End-to-end experiment orchestration: variants in, reports and plot data out.

Every emitted file is a pure function of the config, the input files and the
seeds: no timestamps, sorted keys, fixed float precision.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..corpus import coverage_filter, load_interactions
from ..encoding import EmbeddingTable, ModalityBundle, index_path_for, load_embedding_table
from ..errors import DataError
from ..fusion import TrainConfig, fuse_table, init_model, save_model, smore_lite, train_contrastive
from ..fusion.io import config_hash
from ..metrics import TABLE_COLUMNS, MetricReport, evaluate_run, metric_key, table_csv
from ..retrieval import recommend_users, write_recommendations
from .config import ExperimentConfig, variant_fusion, variant_inputs

logger = logging.getLogger(__name__)

VARIANT_GROUPS = {
    "text-grounded": "text-only", "text-title": "text-only", "vision-only": "vision-only",
    "concat": "naive fusion", "average": "naive fusion",
    "gating": "learned fusion", "attention": "learned fusion", "smore-lite": "graph fusion",
}


def variant_group(variant: str) -> str:
    return VARIANT_GROUPS.get(variant) or VARIANT_GROUPS[variant_fusion(variant)]


@dataclass
class RunOutputs:
    out_dir: Path
    reports: dict[str, Path] = field(default_factory=dict)
    recommendations: dict[str, Path] = field(default_factory=dict)
    table_csv: Path | None = None
    plots: list[Path] = field(default_factory=list)
    manifest: Path | None = None
    metric_reports: dict[str, MetricReport] = field(default_factory=dict)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_inputs(cfg: ExperimentConfig) -> dict[str, Path]:
    """Check every configured input; fail on the first missing one."""
    paths = {"interactions": cfg.path(cfg.data["interactions"])}
    configured = cfg.raw.get("embeddings", {})
    needed = {src for v in cfg.variants for src in variant_inputs(v)}
    missing = sorted(needed - set(configured))
    if missing:
        raise DataError(f"embeddings.{missing[0]} is required by the requested variants")
    # every configured table takes part, so the matched catalog does not
    # depend on which variants happen to be requested
    for src in sorted(configured):
        paths[src] = cfg.path(configured[src])
        paths[f"{src}_ids"] = index_path_for(paths[src])
    for name, p in paths.items():
        if not p.is_file():
            raise DataError(f"{name}: file not found: {p}")
    return paths


def build_variant_table(variant: str, tables: dict[str, EmbeddingTable], log, cfg: ExperimentConfig,
                        model_dir: Path | None = None) -> tuple[EmbeddingTable, dict]:
    """Item table a variant retrieves over, plus notes for its report."""
    fusion = variant_fusion(variant)
    if fusion is None:
        return tables[variant_inputs(variant)[0]], {}
    text_src = variant_inputs(variant)[0]
    bundle = ModalityBundle(tables[text_src], tables["vision"])
    tr = cfg.train
    seed = cfg.seed
    partial = not cfg.experiment["matched_subset"]
    if fusion in ("concat", "average"):
        fused = fuse_table(init_model(fusion, bundle.text_table.dim, bundle.vision_table.dim, seed),
                           bundle, include_partial=partial)
        return fused.table, {"missing_modality": len(fused.missing_modality)}
    if fusion == "smore-lite":
        tc = TrainConfig.for_bpr(epochs=tr["bpr_epochs"], learning_rate=tr["learning_rate"],
                                 batch_size=tr["batch_size"],
                                 negatives_per_positive=tr["negatives_per_positive"],
                                 l2=tr["l2"], seed=seed)
        res = smore_lite(bundle, log, tc, k=tr["knn_k"], layers=tr["gcn_layers"],
                         L_max=cfg.experiment["L_max"])
        return res.table, {"train_loss": [round(x, 10) for x in res.losses],
                           "train_config": tc.to_dict()}
    tc = TrainConfig(epochs=tr["contrastive_epochs"], learning_rate=tr["learning_rate"],
                     batch_size=tr["batch_size"], temperature=tr["temperature"], seed=seed)
    model = init_model(fusion, bundle.text_table.dim, bundle.vision_table.dim, seed)
    res = train_contrastive(model, bundle, log, tc, strict=False)
    if model_dir is not None:
        save_model(res.model, model_dir, tc.to_dict())
    fused = fuse_table(res.model, bundle, include_partial=partial)
    return fused.table, {"train_loss": [round(x, 10) for x in res.losses],
                         "train_config": tc.to_dict(),
                         "missing_modality": len(fused.missing_modality)}


@dataclass
class PreparedData:
    """Loaded inputs plus the evaluated user set and ground truth."""

    paths: dict[str, Path]
    log: object
    tables: dict[str, EmbeddingTable]
    catalog: set[str]
    users: list[str]
    truth: dict[str, set[str]]


def prepare(cfg: ExperimentConfig) -> PreparedData:
    exp = cfg.experiment
    paths = _resolve_inputs(cfg)
    log = load_interactions(paths["interactions"], cfg.data["format"])
    tables = {src: load_embedding_table(paths[src], paths[f"{src}_ids"])
              for src in ("grounded", "title", "vision") if src in paths}
    if not tables:
        raise DataError("no embedding tables requested")
    if exp["matched_subset"]:
        catalog = set.intersection(*(set(t.ids) for t in tables.values()))
        tables = {src: t.subset([i for i in t.ids if i in catalog]) for src, t in tables.items()}
    else:
        catalog = set().union(*(t.ids for t in tables.values()))
    eval_split = exp["eval_split"]
    users = sorted(coverage_filter(log, catalog, eval_split))
    truth = {u: log.items_of(u, eval_split) & catalog for u in users}
    return PreparedData(paths, log, tables, catalog, users, truth)


def retrieve_variant(variant: str, data: PreparedData, cfg: ExperimentConfig,
                     model_dir: Path | None = None):
    """Build the variant's table and run retrieval for the evaluated users."""
    exp = cfg.experiment
    table, notes = build_variant_table(variant, data.tables, data.log, cfg, model_dir)
    run = recommend_users(data.log, table, data.users, max(exp["Ks"]), L_max=exp["L_max"],
                          mask_policy=exp["mask_policy"], recency=cfg.data["recency"])
    notes = {"catalog_size": len(table), "dim": table.dim,
             "missing_history_items": run.missing_history_items, **notes}
    return run, notes


def evaluate_variant(variant: str, run, notes: dict, data: PreparedData, Ks) -> MetricReport:
    excluded = {}
    if run.cold_users:
        excluded["cold_profile"] = run.cold_users
    if run.no_candidates:
        excluded["no_candidates"] = run.no_candidates
    truth = {u: t for u, t in data.truth.items() if u in run.recommendations}
    report = evaluate_run(run.recommendations, truth, Ks, variant, excluded)
    report.notes = notes
    return report


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunOutputs:
    exp = cfg.experiment
    out = Path(out_dir if out_dir is not None else exp["out"])  # relative to the working dir
    data = prepare(cfg)

    for sub in ("reports", "recommendations", "plots"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    result = RunOutputs(out)
    for variant in cfg.variants:
        logger.info("variant %s", variant)
        model_dir = out / "models" / variant if variant_fusion(variant) in ("gating", "attention") else None
        run, notes = retrieve_variant(variant, data, cfg, model_dir)
        report = evaluate_variant(variant, run, notes, data, exp["Ks"])
        rp = out / "reports" / f"{variant}.json"
        rp.write_text(report.to_json(), encoding="utf-8")
        rec_path = out / "recommendations" / f"{variant}.jsonl"
        write_recommendations(run.recommendations, rec_path, variant)
        result.reports[variant] = rp
        result.recommendations[variant] = rec_path
        result.metric_reports[variant] = report

    reports = [result.metric_reports[v] for v in cfg.variants]
    result.table_csv = out / "table1.csv"
    result.table_csv.write_text(table_csv(reports, exp["baseline"]), encoding="utf-8")
    result.plots = write_plot_data(reports, out / "plots")

    # the output location is not part of what determines the results
    recorded = cfg.to_dict()
    recorded["experiment"].pop("out", None)
    manifest = {
        "semrec_version": __version__,
        "config": recorded,
        "config_hash": config_hash(recorded),
        "seeds": {"experiment": cfg.seed},
        "inputs": {name: _sha256(p) for name, p in sorted(data.paths.items())},
        "n_users_evaluated": len(data.users),
        "catalog_size": len(data.catalog),
        "variants": cfg.variants,
    }
    digest = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
    manifest["provenance"] = f"semrec-{__version__}-g{digest[:12]}"
    result.manifest = out / "manifest.json"
    result.manifest.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return result


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def write_plot_data(reports: list[MetricReport], plot_dir: Path) -> list[Path]:
    """CSV series behind the heatmap, metric-profile and full-set bar figures."""
    cols = [metric_key(m, K) for m, K in TABLE_COLUMNS]
    heat = [["variant", "group"] + cols]
    profile = [["group", "variant", "metric", "value"]]
    bars = [["variant", "n_users", "Recall@10", "Recall@10_std", "NDCG@10", "NDCG@10_std"]]
    for r in reports:
        group = variant_group(r.variant)
        heat.append([r.variant, group] + [f"{r.means[c]:.6f}" if c in r.means else "" for c in cols])
        for c in cols:
            if c in r.means:
                profile.append([group, r.variant, c, f"{r.means[c]:.6f}"])
        bars.append([r.variant, r.n_evaluated] + [
            f"{d.get(c, 0.0):.6f}" for c in ("Recall@10", "NDCG@10") for d in (r.means, r.stds)])
    paths = []
    for name, rows in (("heatmap.csv", heat), ("metric_profile.csv", profile),
                       ("fullset_bars.csv", bars)):
        p = plot_dir / name
        p.write_text(_csv(rows), encoding="utf-8")
        paths.append(p)
    return paths
