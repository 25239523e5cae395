"""Command-line pipeline: synth, pretrain, pools, precompute, train, ablate, eval, report.

Every stage writes its artifact under ``--out`` and records it in
``manifest.json`` together with a sha256 content hash, the master seed, the
effective config and the hashes of the upstream artifacts it consumed. A
stage refuses to run when an upstream artifact changed after it was recorded
or was itself built from different inputs.

Config files are JSON objects with optional sections::

    {"synth": {...}, "pretrain": {...}, "pools": {...}, "similarity": {...},
     "model": {...}, "train": {...}}

Each section holds keyword arguments of the matching config dataclass
(``SynthConfig`` without task and seed, ``PretrainConfig``, ``PoolConfig`` with
nested ``sample_walk``/``encode_walk`` objects, ``SimilarityConfig``,
``ModelConfig`` with a possibly partial ``n_anchors`` and ``TrainConfig``).
Command-line flags override file values.

Exit codes: 0 success, 1 stage failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .anchors import PoolConfig, WalkConfig, build_pools, load_pools, save_pools
from .errors import DomainError, InputError, RunError
from .model import ComponentIndex, ModelConfig
from .nn.params import load_checkpoint, save_checkpoint
from .nn.tensor import ACTIVATIONS
from .pretrain import PretrainConfig, load_embeddings, pretrain_link_prediction, save_embeddings
from .similarity import SimilarityCache, SimilarityConfig, precompute
from .synth import TASKS, SynthConfig, load_dataset, make_dataset, save_dataset
from .train import (
    ARMS,
    Bundle,
    RunReport,
    TrainConfig,
    ablate,
    build_model,
    evaluate,
    format_csv,
    format_table,
    loss_kind,
    train,
)

SECTIONS = ("synth", "pretrain", "pools", "similarity", "model", "train")
LAYOUT = {
    "dataset": "dataset",
    "embeddings": "embeddings.sgem",
    "pools": "pools.jsonl",
    "cache": "cache.sgsc",
    "checkpoints": "checkpoints",
    "reports": "reports",
    "evals": "evals",
}
PRODUCER = {"dataset": "synth", "embeddings": "pretrain", "pools": "pools", "cache": "precompute"}
BUNDLE_PARTS = ("dataset", "embeddings", "pools", "cache")


class UsageError(Exception):
    """Bad flags or config file; maps to exit code 2."""


# ---------------------------------------------------------------- manifest


def sha256_path(path: Path) -> str:
    """Content hash of a file, or of a directory's relative names and file contents."""
    h = hashlib.sha256()
    if path.is_dir():
        for f in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(f.relative_to(path).as_posix().encode() + b"\0")
            h.update(hashlib.sha256(f.read_bytes()).digest())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


class Manifest:
    """``manifest.json`` under the pipeline root; all recorded paths are relative to it."""

    def __init__(self, root: Path):
        self.root = root
        self.path = root / "manifest.json"
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"tool_version": __version__, "master_seed": None, "layout": LAYOUT, "artifacts": {}}

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def record(self, name: str, rel: str, stage: str, seed: int | None, config: dict,
               upstream: dict[str, str], info: dict | None = None) -> str:
        digest = sha256_path(self.root / rel)
        entry = {"path": rel, "sha256": digest, "stage": stage, "seed": seed, "config": config,
                 "upstream": upstream}
        if info:
            entry["info"] = info
        self.data["artifacts"][name] = entry
        self.data["tool_version"] = __version__
        self.save()
        return digest

    def require(self, name: str, stage: str) -> str:
        """Current hash of a recorded upstream artifact, after checking it and its own inputs are fresh."""
        rel = LAYOUT[name]
        rerun = f"run `subgnn {PRODUCER[name]} --out {self.root}`"
        if not (self.root / rel).exists():
            raise RunError(f"missing {name} artifact {rel}; {rerun} first", stage=stage)
        entry = self.data["artifacts"].get(name)
        if entry is None:
            raise RunError(f"{rel} is not recorded in the manifest; {rerun}", stage=stage)
        current = sha256_path(self.root / rel)
        if current != entry["sha256"]:
            raise RunError(f"stale {name}: {rel} changed after it was recorded; {rerun} and the stages after it",
                           stage=stage)
        for up, digest in entry["upstream"].items():
            if self.require(up, stage) != digest:
                raise RunError(f"stale {name}: it was built from an older {up}; {rerun}", stage=stage)
        return current

    def check_hashes(self, hashes: dict[str, str], what: str, stage: str) -> None:
        for name, digest in hashes.items():
            if self.require(name, stage) != digest:
                raise RunError(f"stale {what}: it was built from an older {name}; retrain it", stage=stage)


# ------------------------------------------------------------------ config


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"--config {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"--config {path}: top level must be an object")
    unknown = sorted(set(cfg) - set(SECTIONS))
    if unknown:
        raise UsageError(f"--config {path}: unknown sections {unknown}; expected {list(SECTIONS)}")
    return cfg


def section(cfg: dict, name: str, overrides: dict) -> dict:
    out = dict(cfg.get(name, {}))
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def _make(cls, values: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**values)
    except (InputError, TypeError) as e:
        raise UsageError(f"{where}: {e}") from None


def synth_config(cfg: dict, args) -> SynthConfig:
    values = section(cfg, "synth", {"num_subgraphs": args.num_subgraphs, "base_nodes": args.base_nodes,
                                    "subgraph_size": args.subgraph_size})
    for k in ("task", "seed"):
        if k in values:
            raise UsageError(f"synth.{k} comes from --{k}")
    return _make(SynthConfig, {"task": args.task, "seed": args.seed, **values}, "synth")


def pool_config(cfg: dict, args) -> PoolConfig:
    values = section(cfg, "pools", {"pool_size": args.pool_size})
    defaults = PoolConfig()
    for k in ("sample_walk", "encode_walk"):
        if k in values:
            if not isinstance(values[k], dict):
                raise UsageError(f"pools.{k} must be an object")
            # partial walk settings keep this pool's defaults for the rest
            values[k] = _make(WalkConfig, {**asdict(getattr(defaults, k)), **values[k]}, f"pools.{k}")
    return _make(PoolConfig, values, "pools")


def model_config(cfg: dict, args) -> ModelConfig:
    values = section(cfg, "model", {"activation": getattr(args, "activation", None),
                                    "anchor_mode": getattr(args, "anchor_mode", None)})
    if getattr(args, "channels", None):
        values["channels"] = tuple(args.channels)
    if "n_anchors" in values:
        values["n_anchors"] = {**ModelConfig().n_anchors, **values["n_anchors"]}
    return _make(ModelConfig, values, "model")


def train_config(cfg: dict, args) -> TrainConfig:
    values = section(cfg, "train", {"epochs": args.epochs, "patience": args.patience,
                                    "batch_size": args.batch_size, "lr": args.lr, "model": args.model})
    if args.seeds is not None:
        values["seeds"] = args.seeds
    values.setdefault("seeds", [args.seed])
    return _make(TrainConfig, values, "train")


def parse_channels(text: str) -> list[str]:
    chans = list(text.upper())
    if not chans or any(c not in "PNS" for c in chans):
        raise argparse.ArgumentTypeError(f"channels are letters from p, n, s; got {text!r}")
    return chans


# ------------------------------------------------------------------ stages


def _root(args) -> Path:
    return Path(args.out)


def cmd_synth(args, cfg: dict) -> int:
    root, man = _root(args), Manifest(_root(args))
    if args.task == "custom":
        if not args.dataset:
            raise UsageError("--task custom needs --dataset DIR")
        ds = load_dataset(args.dataset)
        config = {"task": "custom", "source_sha256": sha256_path(Path(args.dataset))}
    else:
        if args.dataset:
            raise UsageError("--dataset only applies to --task custom")
        sc = synth_config(cfg, args)
        ds = make_dataset(sc)
        config = asdict(sc)
    save_dataset(ds, root / LAYOUT["dataset"])
    man.data["master_seed"] = args.seed
    digest = man.record("dataset", LAYOUT["dataset"], "synth", args.seed, config, {})
    print(f"dataset: {len(ds.subgraphs)} subgraphs on {ds.graph.num_nodes} nodes -> {LAYOUT['dataset']} "
          f"(sha256 {digest[:12]})")
    return 0


def cmd_pretrain(args, cfg: dict) -> int:
    root, man = _root(args), Manifest(_root(args))
    up = {"dataset": man.require("dataset", "pretrain")}
    ds = load_dataset(root / LAYOUT["dataset"])
    if args.embeddings:
        table = load_embeddings(args.embeddings, num_nodes=ds.graph.num_nodes)
        config, info = {"imported": True, "source_sha256": sha256_path(Path(args.embeddings))}, {}
    else:
        pc = _make(PretrainConfig, section(cfg, "pretrain", {"dim": args.dim, "epochs": args.epochs}), "pretrain")
        table, info = pretrain_link_prediction(ds.graph, pc, seed=args.seed)
        config = asdict(pc)
    save_embeddings(table, root / LAYOUT["embeddings"], binary=True)
    digest = man.record("embeddings", LAYOUT["embeddings"], "pretrain", args.seed, config, up, info)
    auroc = info.get("test_auroc")
    extra = f", held-out link AUROC {auroc:.3f}" if auroc is not None else ""
    print(f"embeddings: {table.vectors.shape[0]} x {table.vectors.shape[1]}{extra} (sha256 {digest[:12]})")
    return 0


def _index(root: Path) -> tuple:
    ds = load_dataset(root / LAYOUT["dataset"])
    return ds, ComponentIndex.build(ds.graph, [s.nodes for s in ds.subgraphs])


def cmd_pools(args, cfg: dict) -> int:
    root, man = _root(args), Manifest(_root(args))
    up = {"dataset": man.require("dataset", "pools")}
    pc = pool_config(cfg, args)
    ds, index = _index(root)
    pools = build_pools(ds.graph, index.nested(), pc, args.seed)
    save_pools(pools, root / LAYOUT["pools"])
    config = {"pool_size": pc.pool_size, "k": pc.k, "sample_walk": asdict(pc.sample_walk),
              "encode_walk": asdict(pc.encode_walk)}
    digest = man.record("pools", LAYOUT["pools"], "pools", args.seed, config, up)
    print(f"pools: size {pc.pool_size} for {len(index.components)} components (sha256 {digest[:12]})")
    return 0


def cmd_precompute(args, cfg: dict) -> int:
    root, man = _root(args), Manifest(_root(args))
    up = {n: man.require(n, "precompute") for n in ("dataset", "pools")}
    sc = _make(SimilarityConfig, section(cfg, "similarity", {"normalization": args.normalization}), "similarity")
    ds, index = _index(root)
    pools = load_pools(root / LAYOUT["pools"])
    if len(pools.neighborhood_internal) != len(index.components):
        raise RunError("pools do not match the dataset's components; re-run `subgnn pools`", stage="precompute")
    cache = precompute(ds.graph, index.components, index.owner, pools, sc)
    cache.save(root / LAYOUT["cache"])
    digest = man.record("cache", LAYOUT["cache"], "precompute", None, asdict(sc), up)
    print(f"cache: {cache.values.shape[0]} components x {cache.pool_size} patches (sha256 {digest[:12]})")
    return 0


def load_bundle(root: Path, man: Manifest, stage: str) -> tuple[Bundle, dict[str, str]]:
    hashes = {n: man.require(n, stage) for n in BUNDLE_PARTS}
    ds, index = _index(root)
    table = load_embeddings(root / LAYOUT["embeddings"], num_nodes=ds.graph.num_nodes)
    pools = load_pools(root / LAYOUT["pools"])
    cache = SimilarityCache.load(root / LAYOUT["cache"])
    if cache.num_components != len(index.components):
        raise RunError("cache does not match the dataset's components; re-run `subgnn precompute`", stage=stage)
    return Bundle(ds, table.vectors, index, pools, cache), hashes


def _checkpoint(man: Manifest, run: str, seed: int, store, mcfg: ModelConfig, tcfg: TrainConfig,
                hashes: dict[str, str], stage: str) -> str:
    rel = f"{LAYOUT['checkpoints']}/{run}-seed{seed}.ckpt"
    (man.root / LAYOUT["checkpoints"]).mkdir(parents=True, exist_ok=True)
    meta = {"run": run, "model": mcfg.to_dict(), "train": asdict(tcfg), "upstream": hashes}
    save_checkpoint(store, man.root / rel, meta)
    man.record(f"checkpoint/{run}/seed{seed}", rel, stage, seed, {"run": run}, hashes)
    return rel


def _report(man: Manifest, run: str, report: RunReport, hashes: dict[str, str], stage: str) -> str:
    rel = f"{LAYOUT['reports']}/{run}.json"
    (man.root / LAYOUT["reports"]).mkdir(parents=True, exist_ok=True)
    (man.root / rel).write_text(report.to_json())
    man.record(f"report/{run}", rel, stage, None, {"run": run}, hashes)
    return rel


def cmd_train(args, cfg: dict) -> int:
    root, man = _root(args), Manifest(_root(args))
    mcfg, tcfg = model_config(cfg, args), train_config(cfg, args)
    bundle, hashes = load_bundle(root, man, "train")
    models, report = train(bundle, mcfg, tcfg, extra={"run": args.name, "upstream": hashes})
    for seed, model in models.items():
        _checkpoint(man, args.name, seed, model.store, mcfg, tcfg, hashes, "train")
    rel = _report(man, args.name, report, hashes, "train")
    sys.stdout.write(format_table({args.name: report}))
    print(f"report -> {rel}")
    return 0


def cmd_ablate(args, cfg: dict) -> int:
    root, man = _root(args), Manifest(_root(args))
    mcfg, tcfg = model_config(cfg, args), train_config(cfg, args)
    bundle, hashes = load_bundle(root, man, "ablate")
    arms = {k: v for k, v in ARMS.items() if k in args.arms} if args.arms else ARMS
    reports, states = ablate(bundle, mcfg, tcfg, arms, jobs=args.jobs, extra={"upstream": hashes},
                             return_states=True)
    for arm, rep in reports.items():
        run = f"{args.name}-{arm}"
        rep.config["run"] = run
        arm_cfg = ModelConfig(**{**mcfg.to_dict(), "channels": ARMS[arm]})
        for seed, state in states[arm].items():
            model = build_model(bundle, arm_cfg, tcfg, seed)
            model.store.load_state(state)
            _checkpoint(man, run, seed, model.store, arm_cfg, tcfg, hashes, "ablate")
        _report(man, run, rep, hashes, "ablate")
    sys.stdout.write(format_table(reports))
    return 0


def cmd_eval(args, cfg: dict) -> int:
    root, man = _root(args), Manifest(_root(args))
    ckpt = Path(args.checkpoint)
    if not ckpt.exists() and (root / ckpt).exists():
        ckpt = root / ckpt
    if not ckpt.exists():
        raise RunError(f"checkpoint {args.checkpoint} not found", stage="eval")
    store, meta = load_checkpoint(ckpt)
    for key in ("model", "train", "upstream"):
        if key not in meta:
            raise RunError(f"{ckpt}: checkpoint metadata lacks {key!r}", stage="eval")
    man.check_hashes(meta["upstream"], f"checkpoint {ckpt.name}", "eval")
    bundle, _ = load_bundle(root, man, "eval")
    mcfg, tcfg = ModelConfig(**meta["model"]), TrainConfig(**meta["train"])
    model = build_model(bundle, mcfg, tcfg, store.seed)
    model.store.load_state(store.state())
    ids = bundle.split_ids(args.split)
    metrics = evaluate(model, bundle, ids, loss_kind(bundle, tcfg), tcfg.threshold, tcfg.auroc_average)
    out = {"checkpoint": ckpt.name, "split": args.split, "num_subgraphs": len(ids), **metrics}
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    (root / LAYOUT["evals"]).mkdir(parents=True, exist_ok=True)
    (root / LAYOUT["evals"] / f"{ckpt.stem}-{args.split}.json").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_report(args, cfg: dict) -> int:
    root = _root(args)
    paths = [Path(p) for p in args.reports] or sorted((root / LAYOUT["reports"]).glob("*.json"))
    if not paths:
        raise RunError(f"no reports under {root / LAYOUT['reports']}; run `subgnn train` first", stage="report")
    reports = {}
    for p in paths:
        try:
            d = json.loads(p.read_text())
            rep = RunReport.from_dict(d)
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
            raise RunError(f"{p}: not a run report ({e})", stage="report") from None
        reports[d["config"].get("run", p.stem)] = rep
    render = format_csv if args.format == "csv" else format_table
    sys.stdout.write(render(reports, args.split))
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (sections: " + ", ".join(SECTIONS) + ")")
    common.add_argument("--seed", type=int, default=0, help="master seed for every random stream (default 0)")
    common.add_argument("--out", default="subgnn-run", help="pipeline root directory (default subgnn-run)")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--epochs", type=int)
    training.add_argument("--patience", type=int)
    training.add_argument("--batch-size", type=int)
    training.add_argument("--lr", type=float)
    training.add_argument("--seeds", type=int, nargs="+", help="training seeds (default: --seed)")
    training.add_argument("--model", choices=["subgnn", "node_avg"])
    training.add_argument("--activation", choices=sorted(ACTIVATIONS))
    training.add_argument("--anchor-mode", choices=["fixed", "epoch"])

    p = argparse.ArgumentParser(prog="subgnn", description="Subgraph neural network pipeline.")
    p.add_argument("--version", action="version", version=f"subgnn {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset (or import one)")
    s.add_argument("--task", required=True, choices=[*TASKS, "custom"])
    s.add_argument("--dataset", help="dataset directory to import with --task custom")
    s.add_argument("--num-subgraphs", type=int)
    s.add_argument("--base-nodes", type=int)
    s.add_argument("--subgraph-size", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pretrain", parents=[common], help="learn node embeddings by link prediction")
    s.add_argument("--dim", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--embeddings", help="import an embedding file instead of training")
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("pools", parents=[common], help="sample anchor patch pools")
    s.add_argument("--pool-size", type=int)
    s.set_defaults(func=cmd_pools)

    s = sub.add_parser("precompute", parents=[common], help="fill the similarity cache")
    s.add_argument("--normalization", choices=["path_length", "max_length", "none"])
    s.set_defaults(func=cmd_precompute)

    s = sub.add_parser("train", parents=[common, training], help="train and checkpoint one configuration")
    s.add_argument("--channels", type=parse_channels, help="enabled channels, e.g. s or pns")
    s.add_argument("--name", default="train", help="run name used for checkpoints and the report")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("ablate", parents=[common, training], help="run the channel ablation arms")
    s.add_argument("--arms", nargs="+", choices=list(ARMS), help="subset of arms (default all)")
    s.add_argument("--jobs", type=int, default=1, help="parallel arm workers (default 1)")
    s.add_argument("--name", default="ablate")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("eval", parents=[common], help="score a checkpoint on a split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", choices=["train", "val", "test"], default="test")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", parents=[common], help="tabulate run reports")
    s.add_argument("reports", nargs="*", help="report JSON files (default: all under OUT/reports)")
    s.add_argument("--split", choices=["val", "test"], default="test")
    s.add_argument("--format", choices=["table", "csv"], default="table")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args, cfg)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"subgnn: error: {e}", file=sys.stderr)
        return 2
    except (RunError, InputError, DomainError, OSError) as e:
        stage = getattr(e, "stage", None) or args.command
        print(f"subgnn: {stage} failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
