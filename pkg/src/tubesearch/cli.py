"""Command-line interface.

Subcommands cover the whole pipeline: ``synth`` writes a seeded dataset,
``propose`` links detections into tubes, ``encode-text`` turns
descriptions into feature rows, ``features`` exports aggregated tube
features, ``train`` fits a scorer, and ``retrieve``/``eval``/``sweep``
run it.  Every subcommand accepts ``--seed`` and ``--config FILE``
(JSON); an explicit flag beats the config file, which beats the built-in
default, and a conflict logs a warning.  Exit codes: 0 success, 1 usage
error, 2 data error.  Set TUBESEARCH_LOG=DEBUG (or INFO, ...) for
verbose logging.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .embedding import DEFAULT_CCA_REG, EmbedTrainConfig, load_scorer, save_scorer
from .errors import TubeSearchError
from .evaluation import ClipIndex, rank_clips
from .io.records import (
    detections_by_clip,
    read_detections,
    read_queries,
    tube_to_record,
    write_records,
)
from .io.synth import SynthConfig, generate_synthetic
from .pipeline import (
    action_query,
    evaluate_split,
    load_dataset,
    run_queries,
    sweep_candidates,
    train_scorer,
)
from .proposal import DEFAULT_N_CANDIDATES, propose_clip, select_top_candidates
from .text.encoder import fit_text_encoder, load_text_encoder, save_text_encoder
from .text.wordvecs import load_word_vectors

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here reserves 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _field_defaults(cls, skip=()) -> Dict[str, object]:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip or f.default is dataclasses.MISSING:
            continue
        out[f.name] = f.default
    return out


SYNTH_DEFAULTS = _field_defaults(SynthConfig, skip=("seed", "block_dims"))
TRAIN_DEFAULTS = _field_defaults(EmbedTrainConfig, skip=("seed",))
TRAIN_DEFAULTS["cca_reg"] = DEFAULT_CCA_REG


def _load_config(path: Optional[str]) -> Dict[str, object]:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(config, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return config


def _resolve(args: argparse.Namespace, defaults: Dict[str, object]) -> Dict[str, object]:
    """Merge flag > config > default, warning on conflicts."""
    config = _load_config(args.config)
    unknown = set(config) - set(defaults) - {"seed", "block_dims"}
    if unknown:
        logger.warning("ignoring unknown config keys: %s", sorted(unknown))
    merged = {}
    for name, default in defaults.items():
        flag = getattr(args, name, None)
        if flag is not None:
            if name in config and config[name] != flag:
                logger.warning(
                    "flag --%s=%r overrides config value %r",
                    name.replace("_", "-"), flag, config[name],
                )
            merged[name] = flag
        elif name in config:
            merged[name] = config[name]
        else:
            merged[name] = default
    merged["seed"] = args.seed if args.seed is not None else config.get("seed", 0)
    if "block_dims" in config:
        merged["block_dims"] = config["block_dims"]
    return merged


def _grid(value) -> List[int]:
    if isinstance(value, (list, tuple)):
        items = [int(v) for v in value]
    else:
        try:
            items = [int(part) for part in str(value).split(",") if part.strip()]
        except ValueError:
            raise UsageError(f"bad pool-size grid {value!r}; expected e.g. 100,350,700")
    if not items or any(n < 1 for n in items):
        raise UsageError(f"pool-size grid must hold positive integers, got {value!r}")
    return items


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset_tubes(dataset, split: str):
    if split == "all":
        return list(dataset.tubes)
    return dataset.tubes_in(dataset.split_clips(split))


def _dataset_queries(dataset, split: str):
    if split == "all":
        return list(dataset.queries)
    return dataset.queries_in(dataset.split_clips(split))


# ---------------------------------------------------------------- handlers


def _cmd_synth(args) -> int:
    opts = _resolve(args, SYNTH_DEFAULTS)
    seed = opts.pop("seed")
    counts = generate_synthetic(SynthConfig(seed=seed, **opts), args.out)
    print(f"dataset written to {args.out}")
    for key in sorted(counts):
        print(f"  {key}: {counts[key]}")
    return 0


def _cmd_propose(args) -> int:
    opts = _resolve(args, {"iou_weight": 1.0, "n_candidates": DEFAULT_N_CANDIDATES})
    if opts["n_candidates"] < 1:
        raise UsageError("--n-candidates must be >= 1")
    if opts["iou_weight"] < 0:
        raise UsageError("--lambda must be >= 0")
    by_clip = detections_by_clip(read_detections(args.detections))
    tubes = []
    for clip_id in sorted(by_clip):
        proposed = propose_clip(by_clip[clip_id], iou_weight=opts["iou_weight"])
        for rank, tube in enumerate(proposed):
            tube.tube_id = f"{clip_id}:t{rank:03d}"
        tubes.extend(proposed)
    selected = select_top_candidates(tubes, opts["n_candidates"])
    write_records(args.out, [tube_to_record(t) for t in selected])
    print(f"kept {len(selected)} of {len(tubes)} tubes "
          f"from {len(by_clip)} clips -> {args.out}")
    return 0


def _cmd_encode_text(args) -> int:
    defaults = {"k_centers": 30, "pca_dim": None, "ica_components": None}
    opts = _resolve(args, defaults)
    root = Path(args.dataset)
    from .io.records import read_annotations, read_json

    table = load_word_vectors(args.wordvecs or root / "wordvecs.txt")
    queries = read_queries(root / "queries.jsonl")
    annotations = read_annotations(root / "annotations.jsonl")
    texts = []
    splits_path = root / "splits.json"
    if splits_path.exists():
        train_clips = set(read_json(splits_path).get("train", []))
        pool = [a for a in annotations if a.clip_id in train_clips]
    else:
        pool = annotations
    for ann in pool:
        texts.extend(ann.descriptions)
    encoder = fit_text_encoder(
        table,
        training_texts=texts,
        k_centers=opts["k_centers"],
        pca_dim=opts["pca_dim"],
        seed=opts["seed"],
        ica_components=opts["ica_components"],
    )
    out = _out_dir(args.out or args.dataset)
    features = encoder.encode_many([q.text for q in queries])
    from .io.fmat import write_fmat

    write_fmat(out / "desc_features.fmat", features)
    save_text_encoder(out / "text_encoder.fmat", encoder)
    print(f"encoded {len(queries)} queries to dim {encoder.out_dim} -> "
          f"{out / 'desc_features.fmat'}")
    return 0


def _cmd_features(args) -> int:
    from .features import FeatureStore
    from .io.fmat import write_fmat
    from .io.records import read_json, write_json

    store = FeatureStore.load(args.dataset)
    if args.layout:
        expected = read_json(args.layout)
        if expected != store.layout.dims:
            raise TubeSearchError(
                f"layout mismatch: expected {expected}, dataset has {store.layout.dims}"
            )
    ids = sorted(store.tube_ids())
    out = Path(args.out)
    write_fmat(out, np.stack([store.tube_vector(t) for t in ids])
               if ids else np.empty((0, store.layout.total_dim)))
    write_json(out.with_suffix(".ids.json"), ids)
    print(f"wrote {len(ids)} tube feature rows of dim {store.layout.total_dim} -> {out}")
    return 0


def _cmd_train(args) -> int:
    from .report import save_training_curves, write_training_csv

    opts = _resolve(args, TRAIN_DEFAULTS)
    cca_reg = opts.pop("cca_reg")
    seed = opts.pop("seed")
    dataset = load_dataset(args.dataset)
    config = EmbedTrainConfig(seed=seed, **opts)
    scorer, history = train_scorer(dataset, args.method, config=config, cca_reg=cca_reg)
    out = _out_dir(args.out)
    save_scorer(out / "model.fmat", scorer)
    write_training_csv(history, out / "training_log.csv")
    if history:
        save_training_curves(history, out / "training_curves.png")
        best = max(h.val_r_at_1 for h in history)
        print(f"trained {args.method} for {len(history)} epochs; "
              f"best holdout R@1 {best:.3f}")
    else:
        print(f"fit {args.method} model")
    print(f"model -> {out / 'model.fmat'}")
    return 0


def _cmd_retrieve(args) -> int:
    from .report import write_clip_csv, write_results_jsonl

    opts = _resolve(args, {"top_k": 10, "n_candidates": None})
    if args.query is None and args.query_file is None:
        raise UsageError("one of --query or --query-file is required")
    if args.query is not None and args.query_file is not None:
        raise UsageError("--query and --query-file are mutually exclusive")
    dataset = load_dataset(args.dataset)
    scorer = load_scorer(args.model)
    candidates = _dataset_tubes(dataset, args.split)
    if opts["n_candidates"] is not None:
        candidates = select_top_candidates(candidates, int(opts["n_candidates"]))
    if not candidates:
        raise TubeSearchError(f"no candidate tubes in split {args.split!r}")
    if args.query is not None:
        if args.encoder is None:
            raise UsageError("--query needs --encoder (a fitted text encoder bundle)")
        table = load_word_vectors(args.wordvecs or Path(args.dataset) / "wordvecs.txt")
        encoder = load_text_encoder(args.encoder, table)
        ids = [t.tube_id for t in candidates]
        feats = dataset.store.matrix(ids)
        results = [action_query(args.query, encoder, ids, feats, scorer)]
    else:
        queries = read_queries(args.query_file)
        results = run_queries(dataset, scorer, queries, candidates)
    out = _out_dir(args.out)
    write_results_jsonl(results, out / "results.jsonl", top_k=int(opts["top_k"]))
    if args.clips:
        index = ClipIndex.from_tubes(candidates)
        rows = []
        for r in results:
            ranking = rank_clips(dict(zip(r.tube_ids, r.scores)), index)
            rows.extend((f"{r.query_id}:{c}", s) for c, s in ranking)
        write_clip_csv(rows, out / "clips.csv")
    for r in results:
        top = r.top(1)[0]
        print(f"{r.query_id}: top tube {top} (score {r.scores[0]:.4f})")
    print(f"results -> {out / 'results.jsonl'}")
    return 0


def _cmd_eval(args) -> int:
    from .report import save_recall_bars, write_metrics_csv, write_results_jsonl

    opts = _resolve(args, {"threshold": 0.5, "n_candidates": None})
    dataset = load_dataset(args.dataset)
    scorer = load_scorer(args.model)
    n = opts["n_candidates"]
    outcome = evaluate_split(
        dataset,
        scorer,
        split=args.split,
        threshold=float(opts["threshold"]),
        n_candidates=None if n is None else int(n),
    )
    out = _out_dir(args.out)
    write_metrics_csv(outcome, out / "metrics.csv")
    write_results_jsonl(outcome.results, out / "results.jsonl")
    save_recall_bars(outcome.recalls, out / "recall.png",
                     title=f"{args.split} recall ({outcome.n_queries} queries)")
    for k in sorted(outcome.recalls):
        print(f"R@{k}: {outcome.recalls[k]:.4f}")
    print(f"metrics -> {out / 'metrics.csv'}")
    return 0


def _cmd_sweep(args) -> int:
    from .report import save_sweep_curves, write_sweep_csv

    opts = _resolve(args, {"threshold": 0.5, "nc_grid": "100,350,700"})
    grid = _grid(opts["nc_grid"])
    dataset = load_dataset(args.dataset)
    scorer = load_scorer(args.model)
    rows = sweep_candidates(
        dataset, scorer, grid, split=args.split, threshold=float(opts["threshold"])
    )
    out = _out_dir(args.out)
    write_sweep_csv(rows, out / "sweep.csv")
    save_sweep_curves(rows, out / "sweep.png")
    for row in rows:
        recalls = ", ".join(f"R@{k}={row.recalls[k]:.3f}" for k in sorted(row.recalls))
        print(f"N={row.n_candidates} (pool {row.pool_size}): {recalls}")
    print(f"sweep -> {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed for anything stochastic (default 0)")
    common.add_argument("--config", default=None,
                        help="JSON file of option values; explicit flags win")

    parser = _Parser(prog="tubesearch",
                     description="person tube retrieval from natural-language queries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    for name, default in SYNTH_DEFAULTS.items():
        flag = "--" + name.replace("_", "-")
        p.add_argument(flag, type=type(default), default=None,
                       help=f"default {default}")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("propose", parents=[common],
                       help="link detections into candidate tubes")
    p.add_argument("--detections", required=True, help="detections JSONL")
    p.add_argument("--out", required=True, help="output tubes JSONL")
    p.add_argument("--lambda", dest="iou_weight", type=float, default=None,
                   help="overlap weight in the linking score (default 1.0)")
    p.add_argument("--n-candidates", type=int, default=None,
                   help=f"keep the top-N tubes by energy (default {DEFAULT_N_CANDIDATES})")
    p.set_defaults(func=_cmd_propose)

    p = sub.add_parser("encode-text", parents=[common],
                       help="fit the text encoder and encode all queries")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--wordvecs", default=None,
                   help="word vector file (default <dataset>/wordvecs.txt)")
    p.add_argument("--out", default=None,
                   help="output directory (default: the dataset directory)")
    p.add_argument("--k-centers", dest="k_centers", type=int, default=None,
                   help="mixture components (default 30)")
    p.add_argument("--pca-dim", dest="pca_dim", type=int, default=None,
                   help="final projection dim (default: no projection)")
    p.add_argument("--ica-components", dest="ica_components", type=int, default=None,
                   help="ICA output dim (default: keep input dim)")
    p.set_defaults(func=_cmd_encode_text)

    p = sub.add_parser("features", parents=[common],
                       help="export aggregated per-tube feature rows")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output FMAT file")
    p.add_argument("--layout", default=None,
                   help="JSON file of expected block dims to validate against")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", parents=[common], help="fit a scorer on the train split")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--method", required=True, choices=("cca", "dspe", "dspepp"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cca-reg", dest="cca_reg", type=float, default=None,
                   help=f"covariance ridge for cca (default {DEFAULT_CCA_REG})")
    for name in ("margin", "alpha1", "alpha2", "alpha3", "alpha4",
                 "learning_rate", "momentum", "dropout"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float,
                       default=None, help=f"default {TRAIN_DEFAULTS[name]}")
    for name in ("batch_size", "epochs", "hidden_dim", "out_dim"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int,
                       default=None, help=f"default {TRAIN_DEFAULTS[name]}")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("retrieve", parents=[common], help="rank tubes for queries")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--model", required=True, help="trained scorer bundle")
    p.add_argument("--query", default=None, help="free-text query (needs --encoder)")
    p.add_argument("--query-file", dest="query_file", default=None,
                   help="queries JSONL with ids present in the dataset")
    p.add_argument("--encoder", default=None, help="text encoder bundle for --query")
    p.add_argument("--wordvecs", default=None,
                   help="word vector file (default <dataset>/wordvecs.txt)")
    p.add_argument("--top-k", dest="top_k", type=int, default=None,
                   help="ranked tubes to keep per query (default 10)")
    p.add_argument("--n-candidates", dest="n_candidates", type=int, default=None,
                   help="restrict to the top-N tube pool first (default: keep all)")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all",
                   help="clip pool to search (default all)")
    p.add_argument("--clips", action="store_true",
                   help="also rank whole clips by their best tube")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("eval", parents=[common], help="R@K over a split")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--model", required=True, help="trained scorer bundle")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--threshold", type=float, default=None,
                   help="overlap threshold for a true positive (default 0.5)")
    p.add_argument("--n-candidates", dest="n_candidates", type=int, default=None,
                   help="restrict to the top-N tube pool first (default: keep all)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", parents=[common],
                       help="retrieval accuracy across candidate pool sizes")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--model", required=True, help="trained scorer bundle")
    p.add_argument("--nc-grid", dest="nc_grid", default=None,
                   help="comma-separated pool sizes (default 100,350,700)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("TUBESEARCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TubeSearchError, FileNotFoundError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
