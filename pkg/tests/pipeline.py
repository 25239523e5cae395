"""Standard task bundles and arm runs shared by the slow tests, computed once per session."""

import time
from dataclasses import replace
from functools import cache

from subgnn.model import ModelConfig
from subgnn.pretrain import PretrainConfig, pretrain_link_prediction
from subgnn.synth import SynthConfig, make_dataset
from subgnn.train import ARMS, Bundle, RunReport, TrainConfig, train

PRETRAIN = PretrainConfig()
SEEDS = (0, 1, 2)
BUILD_SECONDS: dict[str, float] = {}


@cache
def standard_bundle(task: str, seed: int = 0) -> Bundle:
    t0 = time.perf_counter()
    ds = make_dataset(SynthConfig(task, seed=seed))
    table, _ = pretrain_link_prediction(ds.graph, PRETRAIN, seed=seed)
    bundle = Bundle.build(ds, table.vectors, seed=seed)
    BUILD_SECONDS[task] = time.perf_counter() - t0
    return bundle


@cache
def standard_arm(task: str, arm: str) -> RunReport:
    """One channel arm (or ``node_avg``) with default configs over the shared seeds."""
    if arm == "node_avg":
        mcfg, tcfg = ModelConfig(), TrainConfig(model="node_avg", seeds=SEEDS)
    else:
        mcfg, tcfg = replace(ModelConfig(), channels=ARMS[arm]), TrainConfig(seeds=SEEDS)
    _, rep = train(standard_bundle(task), mcfg, tcfg)
    return rep


def standard_ablation(task: str) -> dict[str, RunReport]:
    return {arm: standard_arm(task, arm) for arm in ARMS}


def mean_test_f1(rep: RunReport) -> float:
    return rep.summary()[0]["test"]["micro_f1"]


def mean_val_f1(rep: RunReport) -> float:
    return rep.summary()[0]["val"]["micro_f1"]
