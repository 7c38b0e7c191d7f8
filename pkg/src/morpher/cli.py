"""Command-line entry point: train, eval, zeroshot, gradcheck, gen."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import evaluation
from .align import (
    MODE_MORPHER,
    TrainConfig,
    load_prompt_state,
    save_prompt_state,
    train_baseline,
    train_morpher,
)
from .config import ConfigError, RunConfig, load_config, write_manifest
from .evaluation import evaluate_split, write_history_csv, write_zero_curves_csv
from .gnn import init_gnn_random, load_gnn_weights
from .gradcheck import run_gradcheck
from .graphs import (
    ZeroShotSpec,
    few_shot_split,
    generate_homophily_dataset,
    generate_separable_dataset,
    generate_zero_dataset,
    load_dataset,
    load_edge_list,
    random_network_edges,
    save_dataset,
    save_edge_list,
)
from .text import PseudoEncoder, load_token_embeddings

log = logging.getLogger("morpher")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    raw = os.environ.get("MORPHER_LOG", "info").lower()
    if raw not in _LOG_LEVELS:
        raise ConfigError(f"MORPHER_LOG must be one of {sorted(_LOG_LEVELS)}, got {raw!r}")
    logging.basicConfig(level=_LOG_LEVELS[raw], format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morpher")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "zeroshot", "gradcheck", "gen"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML config (or a manifest.json)")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--threads", type=int, default=None, help="override [run] threads")
        p.add_argument("--deterministic", action="store_true",
                       help="force single-threaded deterministic execution")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> dict:
    overrides = {}
    run = cfg.tables.setdefault("run", {})
    if args.seed is not None:
        run["seed"] = args.seed
        overrides["seed"] = args.seed
    if args.threads is not None:
        run["threads"] = args.threads
        overrides["threads"] = args.threads
    if args.deterministic:
        run["deterministic"] = True
        overrides["deterministic"] = True
    if run.get("deterministic", True) and run.get("threads", 1) != 1:
        log.info("deterministic mode forces threads=1")
        run["threads"] = 1
    return overrides


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("run", "output_dir"))
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".writetest"
    probe.write_text("")
    probe.unlink()
    return out


def _resolve_bundle(cfg: RunConfig, seed: int):
    data_path = cfg.require("data", "dataset")
    labels_path = cfg.require("data", "labels")
    for p in (data_path, labels_path):
        if not Path(p).exists():
            raise ConfigError(f"referenced file does not exist: {p}")
    pad_to = cfg.get("data", "pad_to")
    bundle = load_dataset(data_path, labels_path, pad_to=pad_to if pad_to else None)
    shots = cfg.get("data", "shots_per_class")
    if shots:
        bundle = few_shot_split(bundle, shots, seed)
    return bundle


def _resolve_gnn(cfg: RunConfig, seed: int, feature_dim: int):
    weights = cfg.get("gnn", "weights")
    if weights:
        if not Path(weights).exists():
            raise ConfigError(f"referenced file does not exist: {weights}")
        return load_gnn_weights(weights, expect_dim=feature_dim)
    return init_gnn_random(
        feature_dim, cfg.get("gnn", "hidden"), cfg.get("gnn", "out_dim"), seed
    )


def _resolve_store(cfg: RunConfig, seed: int, label_texts):
    """Returns (store, phrase_encoder); pseudo mode can encode arbitrary phrases."""
    embeddings = cfg.get("text", "embeddings")
    if embeddings:
        if not Path(embeddings).exists():
            raise ConfigError(f"referenced file does not exist: {embeddings}")
        store = load_token_embeddings(embeddings)
        if not store.covers(label_texts):
            missing = [t for t in label_texts if t not in store]
            raise ConfigError(f"embedding store missing labels: {missing}")
        return store, store
    midpoint = cfg.get("text", "midpoint")
    if midpoint is not None and len(midpoint) != 3:
        raise ConfigError("[text] midpoint needs exactly three label strings")
    encoder = PseudoEncoder(
        d_t=cfg.get("text", "pseudo_d_t"),
        tokens_per_label=cfg.get("text", "pseudo_tokens"),
        seed=seed,
        midpoint=tuple(midpoint) if midpoint else None,
    )
    return encoder.build_store(label_texts), encoder


def _train_config(cfg: RunConfig) -> TrainConfig:
    phrase = cfg.get("text", "prompt_phrase")
    return TrainConfig(
        epochs=cfg.get("train", "epochs"),
        lr=cfg.get("train", "lr"),
        beta1=cfg.get("train", "beta1"),
        beta2=cfg.get("train", "beta2"),
        eps=cfg.get("train", "eps"),
        weight_decay=cfg.get("train", "weight_decay"),
        batch_size=cfg.get("train", "batch_size"),
        seed=cfg.get("run", "seed"),
        mode=cfg.get("run", "mode"),
        n_g=cfg.get("prompt", "n_g"),
        n_t=cfg.get("prompt", "n_t"),
        delta_inner=cfg.get("prompt", "delta_inner"),
        delta_cross=cfg.get("prompt", "delta_cross"),
        init_std_multiplier=cfg.get("prompt", "init_std_multiplier"),
        tau=cfg.get("train", "tau"),
        prompt_phrase=phrase or None,
        threads=cfg.get("run", "threads"),
    )


def cmd_train(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    seed = cfg.get("run", "seed")
    bundle = _resolve_bundle(cfg, seed)
    gnn = _resolve_gnn(cfg, seed, bundle.feature_dim)
    tconf = _train_config(cfg)
    if tconf.mode == MODE_MORPHER:
        store, encoder = _resolve_store(cfg, seed, bundle.label_texts)
        state, history = train_morpher(bundle, gnn, store, tconf, phrase_encoder=encoder)
        report = evaluate_split(bundle, bundle.test_idx, state, gnn, store,
                                with_silhouette=cfg.get("eval", "silhouette"))
    else:
        state, history = train_baseline(bundle, gnn, tconf)
        report = evaluation.evaluate_split_baseline(
            bundle, bundle.test_idx, state, gnn,
            with_silhouette=cfg.get("eval", "silhouette"))
    save_prompt_state(state, out / "state.mpst")
    write_history_csv(history, out / "history.csv")
    (out / "report.json").write_text(report.to_json())
    log.info("test accuracy %.4f macro-F1 %.4f (report: %s)",
             report.accuracy, report.macro_f1, out / "report.json")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    seed = cfg.get("run", "seed")
    state_path = cfg.require("eval", "state")
    if not Path(state_path).exists():
        raise ConfigError(f"referenced file does not exist: {state_path}")
    state = load_prompt_state(state_path)
    bundle = _resolve_bundle(cfg, seed)
    store, _ = _resolve_store(cfg, seed, bundle.label_texts)
    if store.dim != state.text_prompt.dim:
        raise ConfigError(
            f"embedding width mismatch: store d_t={store.dim}, "
            f"state d_t={state.text_prompt.dim}"
        )
    split = cfg.get("eval", "split")
    indices = {
        "train": bundle.train_idx,
        "val": bundle.val_idx,
        "test": bundle.test_idx,
        "all": list(range(len(bundle.graphs))),
    }.get(split)
    if indices is None:
        raise ConfigError(f"[eval] split must be train/val/test/all, got {split!r}")
    if not indices:
        raise ConfigError(f"split {split!r} is empty")
    gnn = _resolve_gnn(cfg, seed, bundle.feature_dim)
    report = evaluate_split(bundle, indices, state, gnn, store,
                            with_silhouette=cfg.get("eval", "silhouette"))
    (out / "report.json").write_text(report.to_json())
    log.info("accuracy %.4f macro-F1 %.4f on %s", report.accuracy, report.macro_f1, split)
    return 0


def _zero_spec(cfg: RunConfig) -> ZeroShotSpec:
    labels = cfg.get("zeroshot", "labels")
    if not labels or len(labels) != 3:
        raise ConfigError("[zeroshot] labels needs exactly three strings")
    edges_path = cfg.get("zeroshot", "base_edges")
    if edges_path:
        if not Path(edges_path).exists():
            raise ConfigError(f"referenced file does not exist: {edges_path}")
        edges = load_edge_list(edges_path)
    else:
        edges = random_network_edges(
            cfg.get("zeroshot", "network_nodes"),
            cfg.get("zeroshot", "network_extra_edges"),
            cfg.get("zeroshot", "network_seed"),
        )
    return ZeroShotSpec(
        base_edges=tuple(edges),
        label_texts=tuple(labels),
        seed=cfg.get("zeroshot", "dataset_seed"),
    )


def cmd_zeroshot(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    seed = cfg.get("run", "seed")
    spec = _zero_spec(cfg)
    if cfg.get("text", "embeddings") is None and cfg.get("text", "midpoint") is None:
        # pseudo mode defaults the unseen label to the midpoint geometry
        cfg.tables.setdefault("text", {})["midpoint"] = list(spec.label_texts)
    store, _ = _resolve_store(cfg, seed, list(spec.label_texts))
    gnn = _resolve_gnn(cfg, seed, 2)
    tconf = _train_config(cfg)
    if tconf.mode != MODE_MORPHER:
        raise ConfigError("the unseen-class protocol runs in morpher mode")
    state, history = evaluation.zero_shot_protocol(spec, gnn, store, tconf)
    save_prompt_state(state, out / "state.mpst")
    write_zero_curves_csv(history, out / "curves.csv")
    peak = max(history.curves["acc_test_zero"])
    log.info("unseen-class accuracy peak %.3f (curves: %s)", peak, out / "curves.csv")
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    _out_dir(cfg)
    worst = run_gradcheck(
        num_instances=cfg.get("gradcheck", "instances"),
        seed=cfg.get("run", "seed"),
        step=cfg.get("gradcheck", "step"),
    )
    tolerance = cfg.get("gradcheck", "tolerance")
    failed = False
    for block, err in sorted(worst.items()):
        status = "ok" if err < tolerance else "FAIL"
        print(f"{block:14s} worst relative error {err:.3e}  {status}")
        failed |= err >= tolerance
    return 1 if failed else 0


def cmd_gen(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    seed = cfg.get("run", "seed")
    kind = cfg.get("gen", "kind")
    if kind == "separable":
        bundle = generate_separable_dataset(
            cfg.get("gen", "n_graphs"),
            cfg.get("gen", "nodes_per_graph"),
            cfg.get("gen", "dim"),
            cfg.get("gen", "num_classes"),
            seed,
            noise=cfg.get("gen", "noise"),
            edge_prob=cfg.get("gen", "edge_prob"),
        )
        save_dataset(bundle, out / cfg.get("gen", "out_dataset", "data.jsonl"),
                     out / cfg.get("gen", "out_labels", "labels.json"))
    elif kind == "zero":
        spec = _zero_spec(cfg)
        bundle = generate_zero_dataset(spec)
        save_dataset(bundle, out / cfg.get("gen", "out_dataset", "data.jsonl"),
                     out / cfg.get("gen", "out_labels", "labels.json"))
    elif kind == "homophily":
        bundle = generate_homophily_dataset(
            cfg.get("gen", "n_graphs"), cfg.get("gen", "dim"), seed
        )
        save_dataset(bundle, out / cfg.get("gen", "out_dataset", "data.jsonl"),
                     out / cfg.get("gen", "out_labels", "labels.json"))
    elif kind == "network":
        edges = random_network_edges(
            cfg.get("gen", "network_nodes"), cfg.get("gen", "network_extra_edges"), seed
        )
        save_edge_list(edges, out / cfg.get("gen", "out_edges", "edges.txt"))
    else:
        raise ConfigError(f"[gen] kind must be separable/homophily/zero/network, got {kind!r}")
    log.info("wrote %s artifacts to %s", kind, out)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "zeroshot": cmd_zeroshot,
    "gradcheck": cmd_gradcheck,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _setup_logging()
        cfg = load_config(args.config)
        overrides = _apply_overrides(cfg, args)
        write_manifest(cfg, _out_dir(cfg), args.command, overrides)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
