"""Command-line entry point: ``semrec <verb> [options]``.

Exit codes: 0 success, 1 check failed, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError, SemrecError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


def fixture_config_path() -> Path:
    return Path(str(resources.files("semrec") / "data" / "fixture" / "fixture.toml"))


def _overrides(args) -> dict:
    exp: dict = {}
    if getattr(args, "variant", None):
        exp["variants"] = args.variant
    if getattr(args, "k", None):
        exp["Ks"] = args.k
    if getattr(args, "mask_policy", None):
        exp["mask_policy"] = args.mask_policy
    if getattr(args, "seed", None) is not None:
        exp["seed"] = args.seed
    if getattr(args, "out", None) and getattr(args, "out_is_dir", False):
        exp["out"] = str(Path(args.out).resolve())
    return {"experiment": exp} if exp else {}


def _config(args):
    from .bench.config import load_config
    path = Path(args.config) if args.config else fixture_config_path()
    return load_config(path, _overrides(args))


def _single_variant(cfg, args) -> str:
    if len(cfg.variants) != 1:
        raise ConfigError("this command needs exactly one --variant")
    return cfg.variants[0]


def cmd_ground(args) -> int:
    from .grounding import (
        GroundingPrompt,
        HttpGroundingService,
        ServiceConfig,
        SemanticCache,
        StubGroundingService,
        build_semantic_cache,
        read_item_images,
        FAILURES_FILENAME,
    )
    items = read_item_images(args.items)
    out = Path(args.out)
    cache = SemanticCache.open(out)
    if args.stub:
        service = StubGroundingService()
    else:
        service = HttpGroundingService(ServiceConfig.from_env(model_id=args.model))
    res = build_semantic_cache(items, GroundingPrompt(), service, cache, parallelism=args.parallelism,
                               failures_path=out / FAILURES_FILENAME)
    print(json.dumps({"grounded": res.grounded, "skipped": res.skipped,
                      "failed": len(res.failures), "cache_size": len(res.cache)}, sort_keys=True))
    return EXIT_OK


def cmd_encode(args) -> int:
    from .encoding import HttpEncoder, StubEncoder, encode_descriptions, save_embedding_table
    from .grounding import SemanticCache
    cache = SemanticCache.open(args.cache)
    service = StubEncoder() if args.stub else HttpEncoder.from_env()
    table = encode_descriptions(cache, service, batch_size=args.batch_size)
    save_embedding_table(table, args.out)
    print(json.dumps({"items": len(table), "dim": table.dim}, sort_keys=True))
    return EXIT_OK


def cmd_fuse_train(args) -> int:
    from .bench.config import variant_fusion
    from .bench.runner import build_variant_table, prepare
    from .fusion.models import TRAINABLE
    cfg = _config(args)
    variant = _single_variant(cfg, args)
    if variant_fusion(variant) not in TRAINABLE:
        raise ConfigError(f"{variant} has no trainable fusion parameters")
    data = prepare(cfg)
    out = Path(args.out)
    _, notes = build_variant_table(variant, data.tables, data.log, cfg, out)
    print(json.dumps({"variant": variant, "model_dir": str(out),
                      "final_loss": notes["train_loss"][-1]}, sort_keys=True))
    return EXIT_OK


def cmd_recommend(args) -> int:
    from .bench.runner import prepare, retrieve_variant
    from .retrieval import write_recommendations
    cfg = _config(args)
    variant = _single_variant(cfg, args)
    run, _ = retrieve_variant(variant, prepare(cfg), cfg)
    write_recommendations(run.recommendations, args.out, variant)
    print(json.dumps({"variant": variant, "users": len(run.recommendations),
                      "cold_users": len(run.cold_users)}, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .bench.runner import prepare
    from .metrics import evaluate_run
    from .retrieval import read_recommendations
    cfg = _config(args)
    recs = read_recommendations(args.recs)
    data = prepare(cfg)
    truth = {u: t for u, t in data.truth.items() if u in recs}
    name = cfg.variants[0] if len(cfg.variants) == 1 else Path(args.recs).stem
    report = evaluate_run(recs, truth, cfg.experiment["Ks"], name)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run_all(args) -> int:
    from .bench.runner import run_experiment
    args.out_is_dir = True
    cfg = _config(args)
    res = run_experiment(cfg)
    print(res.table_csv.read_text(encoding="utf-8"), end="")
    print(f"wrote {len(res.reports)} reports to {res.out_dir}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .bench.synthetic import SyntheticSpec, generate_synthetic
    from .corpus import write_interactions
    from .encoding import save_embedding_table
    spec = SyntheticSpec(n_users=args.users, n_items=args.items, n_clusters=args.clusters,
                         dim=args.dim, sigma=args.sigma, seed=args.seed or 0)
    data = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_interactions(data.log, out / "interactions.tsv")
    save_embedding_table(data.table, out / "items.semv")
    (out / "synthetic.toml").write_text(
        '[data]\ninteractions = "interactions.tsv"\n\n'
        '[embeddings]\ngrounded = "items.semv"\n\n'
        f'[experiment]\nvariants = ["text-grounded"]\nbaseline = "text-grounded"\nseed = {spec.seed}\n'
        'out = "run"\n',
        encoding="utf-8")
    print(json.dumps({"users": spec.n_users, "items": spec.n_items, "dir": str(out)}, sort_keys=True))
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .bench.oracle import brute_force_oracle
    from .bench.synthetic import SyntheticSpec, generate_synthetic
    from .corpus import user_history
    from .retrieval import build_profile, mask_for, recommend_users
    mismatches = 0
    checked = 0
    for s in range(args.datasets):
        seed = (args.seed or 0) + s
        data = generate_synthetic(SyntheticSpec(n_users=50, n_items=200, dim=16, latent_dim=16,
                                                sigma=0.3, seed=seed))
        users = data.log.users_in("train")
        hists = {u: user_history(data.log, u) for u in users}
        profiles = {u: build_profile(h, data.table) for u, h in hists.items()}
        masks = {u: mask_for(data.log, h, args.mask_policy or "history") for u, h in hists.items()}
        for K in args.k or [1, 5, 10, 20]:
            engine = recommend_users(data.log, data.table, users, K,
                                     mask_policy=args.mask_policy or "history").recommendations
            oracle = brute_force_oracle(profiles, data.table, masks, K)
            for u in users:
                checked += 1
                if engine[u].items != oracle[u].items:
                    mismatches += 1
    print(json.dumps({"lists_checked": checked, "mismatches": mismatches}, sort_keys=True))
    return EXIT_OK if mismatches == 0 else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semrec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"semrec {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)

    def experiment_flags(sp, out_help):
        sp.add_argument("--config", help="experiment TOML (default: bundled fixture)")
        sp.add_argument("--variant", action="append", help="variant name; repeatable")
        sp.add_argument("--k", type=int, action="append", help="cutoff K; repeatable")
        sp.add_argument("--mask-policy", choices=["history", "train"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=out_help)

    sp = sub.add_parser("ground", help="build or extend the grounded-description cache")
    sp.add_argument("--items", required=True, help="TSV of item_id<TAB>image url or path")
    sp.add_argument("--out", required=True, help="cache directory")
    sp.add_argument("--parallelism", type=int, default=1)
    sp.add_argument("--model", help="model id sent to the service")
    sp.add_argument("--stub", action="store_true", help="use the offline stub service")
    sp.set_defaults(fn=cmd_ground)

    sp = sub.add_parser("encode", help="embed cached descriptions into a SEMV table")
    sp.add_argument("--cache", required=True, help="cache directory")
    sp.add_argument("--out", required=True, help="output .semv path (ids written alongside)")
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--stub", action="store_true", help="use the offline stub encoder")
    sp.set_defaults(fn=cmd_encode)

    sp = sub.add_parser("fuse-train", help="train a gating or attention fusion model")
    experiment_flags(sp, "model directory")
    sp.set_defaults(fn=cmd_fuse_train)

    sp = sub.add_parser("recommend", help="write top-K lists for one variant")
    experiment_flags(sp, "output JSONL")
    sp.set_defaults(fn=cmd_recommend)

    sp = sub.add_parser("evaluate", help="score a recommendations file")
    experiment_flags(sp, "output report JSON (default: stdout)")
    sp.add_argument("--recs", required=True, help="recommendations JSONL")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("run-all", help="run every configured variant end to end")
    experiment_flags(sp, "output directory")
    sp.set_defaults(fn=cmd_run_all)

    sp = sub.add_parser("synth", help="write a synthetic clustered dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--users", type=int, default=100)
    sp.add_argument("--items", type=int, default=300)
    sp.add_argument("--clusters", type=int, default=3)
    sp.add_argument("--dim", type=int, default=32)
    sp.add_argument("--sigma", type=float, default=0.05)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("oracle-check", help="compare engine top-K against the brute-force oracle")
    sp.add_argument("--datasets", type=int, default=5)
    sp.add_argument("--k", type=int, action="append")
    sp.add_argument("--mask-policy", choices=["history", "train"])
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SemrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
