"""Training loop, evaluation, run reports and the channel ablation."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import InputError, RunError
from .metrics import auroc, decisions, micro_f1
from .anchors import AnchorPools, PoolConfig, build_pools
from .model import ComponentIndex, ModelConfig, NodeAverage, SubGNN, classify
from .similarity import SimilarityCache, SimilarityConfig, precompute
from .nn import tensor as T
from .nn.optim import Adam
from .nn.tensor import log_softmax
from .synth import Dataset

ARMS = {"P": ("P",), "N": ("N",), "S": ("S",), "PNS": ("P", "N", "S")}


@dataclass
class TrainConfig:
    model: str = "subgnn"
    batch_size: int = 64
    lr: float = 1e-3
    grad_clip: float = 0.5
    epochs: int = 200
    patience: int = 30
    seeds: tuple[int, ...] = (0,)
    loss: str | None = None
    threshold: float = 0.5
    auroc_average: str = "macro"
    monitor_train: bool = False

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.model not in ("subgnn", "node_avg"):
            raise InputError("model must be 'subgnn' or 'node_avg'")
        if not self.seeds:
            raise InputError("at least one seed is required")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise InputError("batch_size >= 1, epochs >= 0 and patience >= 1 required")
        if self.lr <= 0 or self.grad_clip < 0:
            raise InputError("lr must be positive and grad_clip >= 0")
        if self.loss not in (None, "multiclass_ce", "multilabel_bce"):
            raise InputError("loss must be multiclass_ce or multilabel_bce")
        if self.auroc_average not in ("macro", "micro"):
            raise InputError("auroc_average must be macro or micro")


@dataclass
class Bundle:
    """Everything a run consumes: dataset, fixed embeddings, component index, pools and cache."""

    dataset: Dataset
    embeddings: np.ndarray
    index: ComponentIndex
    pools: AnchorPools
    cache: SimilarityCache

    @classmethod
    def build(cls, dataset: Dataset, embeddings: np.ndarray, pool_config: PoolConfig | None = None,
              sim_config: SimilarityConfig | None = None, seed: int = 0) -> "Bundle":
        """Sample pools and fill the similarity cache for ``dataset``."""
        E = np.asarray(embeddings, dtype=np.float64)
        if E.shape[0] != dataset.graph.num_nodes:
            raise InputError(f"{E.shape[0]} embeddings for a graph with {dataset.graph.num_nodes} nodes")
        index = ComponentIndex.build(dataset.graph, [s.nodes for s in dataset.subgraphs])
        pools = build_pools(dataset.graph, index.nested(), pool_config or PoolConfig(), seed)
        cache = precompute(dataset.graph, index.components, index.owner, pools, sim_config)
        return cls(dataset, E, index, pools, cache)

    def split_ids(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.dataset.subgraphs) if s.split == split]

    @property
    def num_labels(self) -> int:
        return len(self.dataset.label_names)

    def targets(self, ids: list[int]) -> np.ndarray:
        if self.dataset.multilabel:
            Y = np.zeros((len(ids), self.num_labels))
            for r, i in enumerate(ids):
                Y[r, self.dataset.subgraphs[i].labels] = 1.0
            return Y
        return np.array([self.dataset.subgraphs[i].labels[0] for i in ids], dtype=np.int64)


@dataclass
class SeedResult:
    seed: int
    val: dict
    test: dict
    best_epoch: int
    epochs_run: int
    train_loss: list[float] = field(default_factory=list)
    batch_log: list[list[int]] = field(default_factory=list)
    train_eval_loss: list[float] = field(default_factory=list)

    def to_dict(self, with_log: bool = False) -> dict:
        d = {"seed": self.seed, "val": self.val, "test": self.test, "best_epoch": self.best_epoch,
             "epochs_run": self.epochs_run, "train_loss": [round(x, 10) for x in self.train_loss]}
        if self.train_eval_loss:
            d["train_eval_loss"] = [round(x, 10) for x in self.train_eval_loss]
        if with_log:
            d["batch_log"] = self.batch_log
        return d


@dataclass
class RunReport:
    config: dict
    seeds: list[SeedResult]
    wall_time_s: float = 0.0

    def summary(self) -> tuple[dict, dict]:
        mean, std = {}, {}
        for split in ("val", "test"):
            mean[split], std[split] = {}, {}
            for key in ("micro_f1", "auroc"):
                vals = np.array([getattr(s, split)[key] for s in self.seeds], dtype=float)
                mean[split][key] = float(np.mean(vals))
                std[split][key] = float(np.std(vals)) if len(vals) > 1 else 0.0
        return mean, std

    def to_dict(self, with_timing: bool = False) -> dict:
        mean, std = self.summary()
        d = {"config": self.config, "seeds": [s.to_dict() for s in self.seeds], "mean": mean, "std": std}
        if with_timing:
            d["wall_time_s"] = self.wall_time_s
        return d

    def to_json(self, with_timing: bool = False) -> str:
        return json.dumps(self.to_dict(with_timing), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        seeds = [SeedResult(s["seed"], s["val"], s["test"], s["best_epoch"], s["epochs_run"],
                            s.get("train_loss", []), [], s.get("train_eval_loss", [])) for s in d["seeds"]]
        return cls(d["config"], seeds, d.get("wall_time_s", 0.0))


# ----------------------------------------------------------------- helpers


def loss_kind(bundle: Bundle, config: TrainConfig) -> str:
    kind = config.loss or ("multilabel_bce" if bundle.dataset.multilabel else "multiclass_ce")
    if (kind == "multilabel_bce") != bundle.dataset.multilabel:
        raise InputError(f"loss {kind} does not fit a {'multi' if bundle.dataset.multilabel else 'single'}-label dataset")
    return kind


def build_model(bundle: Bundle, model_cfg: ModelConfig, train_cfg: TrainConfig, seed: int):
    if train_cfg.model == "node_avg":
        return NodeAverage(model_cfg, bundle.embeddings, bundle.num_labels, seed)
    return SubGNN(model_cfg, bundle.embeddings, bundle.index, bundle.pools, bundle.cache, bundle.num_labels, seed)


def _features(model, bundle: Bundle, ids: list[int], anchors):
    if isinstance(model, NodeAverage):
        return model.features([bundle.dataset.subgraphs[i].nodes for i in ids])
    return model.forward([bundle.index.by_subgraph[i] for i in ids], anchors).z


def _loss(logits, targets, kind):
    if kind == "multilabel_bce":
        return T.sigmoid_bce(logits, targets)
    return T.softmax_cross_entropy(logits, targets)


def predict_scores(model, bundle: Bundle, ids: list[int], kind: str, chunk: int = 256) -> np.ndarray:
    anchors = model_anchor_eval(model)
    out = []
    for i in range(0, len(ids), chunk):
        part = ids[i:i + chunk]
        lg = model.logits(_features(model, bundle, part, anchors), train=False).data
        out.append(expit(lg) if kind == "multilabel_bce" else np.exp(log_softmax(lg)))
    return np.concatenate(out) if out else np.zeros((0, bundle.num_labels))


def train_split_loss(model, bundle: Bundle, ids: list[int], kind: str) -> float:
    """Loss of the current parameters on ``ids``: no dropout, standardization from those ids' own statistics.

    Running buffers are left untouched, so the value tracks the parameters
    alone rather than how far the buffers have caught up.
    """
    z = _features(model, bundle, ids, model_anchor_eval(model))
    saved = {k: p.data.copy() for k, p in model.store.items() if ".norm." in k}
    try:
        logits = classify(z, model.store, 0.0, train=True)
    finally:
        for k, v in saved.items():
            model.store[k].data = v
    return float(_loss(logits, bundle.targets(ids), kind).data)


def model_anchor_eval(model):
    return model.schedule.for_eval() if isinstance(model, SubGNN) else None


def evaluate(model, bundle: Bundle, ids: list[int], kind: str, threshold: float = 0.5,
             auroc_average: str = "macro") -> dict:
    """Micro-F1, AUROC and mean loss on ``ids``."""
    if not ids:
        raise RunError("evaluation split is empty", stage="eval")
    scores = predict_scores(model, bundle, ids, kind)
    y = bundle.targets(ids)
    multilabel = kind == "multilabel_bce"
    pred = decisions(scores, multilabel, threshold)
    truth = y.astype(np.int64)
    try:
        au = auroc(scores, truth, auroc_average)
    except Exception:  # noqa: BLE001 - single-class splits have no AUROC
        au = float("nan")
    eps = 1e-12
    if multilabel:
        loss = float(-np.mean(y * np.log(scores + eps) + (1 - y) * np.log(1 - scores + eps)))
    else:
        loss = float(-np.mean(np.log(scores[np.arange(len(ids)), truth] + eps)))
    return {"micro_f1": float(micro_f1(pred, truth)), "auroc": float(au), "loss": loss}


# -------------------------------------------------------------------- train


def train_seed(bundle: Bundle, model_cfg: ModelConfig, train_cfg: TrainConfig, seed: int,
               keep_log: bool = False):
    """One seeded run; returns the model with its best-validation parameters restored and the result."""
    kind = loss_kind(bundle, train_cfg)
    model = build_model(bundle, model_cfg, train_cfg, seed)
    train_ids, val_ids, test_ids = (bundle.split_ids(s) for s in ("train", "val", "test"))
    if not train_ids or not val_ids:
        raise RunError("train and val splits must be non-empty", stage="train")
    opt = Adam(lr=train_cfg.lr, clip=train_cfg.grad_clip)
    shuffle_rng = np.random.default_rng([seed, 501])
    drop_rng = np.random.default_rng([seed, 502])
    best = (-1.0, np.inf)
    best_state = model.store.state()
    best_epoch = 0
    stale = 0
    losses: list[float] = []
    log: list[list[int]] = []
    monitor: list[float] = []
    epochs_run = 0
    for epoch in range(train_cfg.epochs):
        epochs_run = epoch + 1
        anchors = model.schedule.for_epoch(epoch) if isinstance(model, SubGNN) else None
        order = shuffle_rng.permutation(len(train_ids))
        total, count = 0.0, 0
        for start in range(0, len(order), train_cfg.batch_size):
            ids = [train_ids[k] for k in order[start:start + train_cfg.batch_size].tolist()]
            if keep_log:
                log.append(ids)
            model.store.zero_grad()
            z = _features(model, bundle, ids, anchors)
            loss = _loss(model.logits(z, train=True, rng=drop_rng), bundle.targets(ids), kind)
            loss.backward()
            opt.step(model.store)
            total += float(loss.data) * len(ids)
            count += len(ids)
        losses.append(total / count)
        if train_cfg.monitor_train:
            monitor.append(train_split_loss(model, bundle, train_ids, kind))
        val = evaluate(model, bundle, val_ids, kind, train_cfg.threshold, train_cfg.auroc_average)
        key = (val["micro_f1"], -val["loss"])
        if key > (best[0], -best[1]):
            best = (val["micro_f1"], val["loss"])
            best_state = model.store.state()
            best_epoch = epoch + 1
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.patience:
                break
    model.store.load_state(best_state)
    metrics = {}
    for name, ids in (("val", val_ids), ("test", test_ids)):
        m = evaluate(model, bundle, ids, kind, train_cfg.threshold, train_cfg.auroc_average) if ids else \
            {"micro_f1": float("nan"), "auroc": float("nan")}
        metrics[name] = {"micro_f1": m["micro_f1"], "auroc": m["auroc"]}
    return model, SeedResult(seed, metrics["val"], metrics["test"], best_epoch, epochs_run, losses, log, monitor)


def run_config(model_cfg: ModelConfig, train_cfg: TrainConfig, extra: dict | None = None) -> dict:
    return {"model": model_cfg.to_dict(), "train": asdict(train_cfg), **(extra or {})}


def train(bundle: Bundle, model_cfg: ModelConfig, train_cfg: TrainConfig, keep_log: bool = False,
          extra: dict | None = None):
    """Train every configured seed; returns ``({seed: model}, RunReport)``."""
    t0 = time.perf_counter()
    models, results = {}, []
    for seed in train_cfg.seeds:
        model, res = train_seed(bundle, model_cfg, train_cfg, seed, keep_log)
        models[seed] = model
        results.append(res)
    return models, RunReport(run_config(model_cfg, train_cfg, extra), results, time.perf_counter() - t0)


def _arm_task(args):
    bundle, model_cfg, train_cfg, seed = args
    model, res = train_seed(bundle, model_cfg, train_cfg, seed)
    return res, model.store.state()


def ablate(bundle: Bundle, model_cfg: ModelConfig, train_cfg: TrainConfig, arms: dict | None = None,
           jobs: int = 1, extra: dict | None = None, return_states: bool = False):
    """Run each channel arm over the same seeds, dataset, embeddings, pools and cache.

    Returns ``{arm: RunReport}``; with ``return_states`` also
    ``{arm: {seed: parameter state}}`` for checkpointing.
    """
    arms = arms or ARMS
    t0 = time.perf_counter()
    tasks = [(name, seed, replace(model_cfg, channels=chans)) for name, chans in arms.items()
             for seed in train_cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_arm_task, [(bundle, cfg, train_cfg, seed) for _, seed, cfg in tasks]))
    else:
        outs = [_arm_task((bundle, cfg, train_cfg, seed)) for _, seed, cfg in tasks]
    wall = time.perf_counter() - t0
    reports, states = {}, {}
    for name, chans in arms.items():
        mine = [(seed, out) for (n, seed, _), out in zip(tasks, outs) if n == name]
        reports[name] = RunReport(run_config(replace(model_cfg, channels=chans), train_cfg, extra),
                                  [res for _, (res, _) in mine], wall)
        states[name] = {seed: st for seed, (_, st) in mine}
    return (reports, states) if return_states else reports


# ------------------------------------------------------------------ tables


def _fmt(mean: float, std: float) -> str:
    return f"{mean:.3f}±{std:.3f}"


def report_rows(reports: dict[str, RunReport], split: str = "test") -> list[tuple[str, str, str]]:
    rows = []
    for name, rep in reports.items():
        mean, std = rep.summary()
        rows.append((name, _fmt(mean[split]["micro_f1"], std[split]["micro_f1"]),
                     _fmt(mean[split]["auroc"], std[split]["auroc"])))
    return rows


def format_table(reports: dict[str, RunReport], split: str = "test") -> str:
    rows = [("run", "micro_f1", "auroc")] + report_rows(reports, split)
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_csv(reports: dict[str, RunReport], split: str = "test") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "split", "micro_f1_mean", "micro_f1_std", "auroc_mean", "auroc_std", "num_seeds"])
    for name, rep in reports.items():
        mean, std = rep.summary()
        w.writerow([name, split, f"{mean[split]['micro_f1']:.6f}", f"{std[split]['micro_f1']:.6f}",
                    f"{mean[split]['auroc']:.6f}", f"{std[split]['auroc']:.6f}", len(rep.seeds)])
    return buf.getvalue()
