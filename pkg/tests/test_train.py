import json
from dataclasses import asdict

import numpy as np
import pytest

from subgnn.anchors import PoolConfig
from subgnn.errors import InputError, RunError
from subgnn.model import ModelConfig
from subgnn.synth import SynthConfig, make_dataset
from subgnn.train import (
    ARMS,
    Bundle,
    RunReport,
    TrainConfig,
    ablate,
    evaluate,
    format_csv,
    format_table,
    train,
    train_seed,
    train_split_loss,
)

from .pipeline import standard_bundle

SMALL = {"P_I": 4, "P_B": 6, "N_I": 3, "N_B": 4, "S": 6}


def small_model(**kw):
    return ModelConfig(**{"n_anchors": SMALL, "hidden": 8, "classifier_hidden": (16, 16), **kw})


@pytest.fixture(scope="module")
def density():
    ds = make_dataset(SynthConfig("density", seed=3, base_nodes=400, num_subgraphs=60, subgraph_size=10))
    E = np.random.default_rng(0).normal(size=(ds.graph.num_nodes, 8))
    return Bundle.build(ds, E, PoolConfig(pool_size=10), seed=0)


def fast(**kw):
    return TrainConfig(**{"batch_size": 16, "epochs": 4, "patience": 5, **kw})


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(model="gcn"), dict(seeds=()), dict(batch_size=0), dict(lr=0.0),
                                    dict(grad_clip=-1.0), dict(loss="mse"), dict(auroc_average="weighted")])
    def test_rejects(self, kw):
        with pytest.raises(InputError):
            TrainConfig(**kw)

    def test_defaults_inside_documented_ranges(self):
        t, m = TrainConfig(), ModelConfig()
        assert 16 <= t.batch_size <= 128 and 1e-4 <= t.lr <= 1e-3 and 0 <= t.grad_clip <= 0.5
        assert 1 <= m.layers <= 4 and 32 <= m.hidden <= 64 and 0 <= m.dropout <= 0.4
        n = m.n_anchors
        assert 25 <= n["P_I"] <= 75 and 50 <= n["P_B"] <= 200 and 10 <= n["N_I"] <= 25
        assert 25 <= n["N_B"] <= 75 and 15 <= n["S"] <= 45

    def test_loss_must_fit_dataset(self, density):
        with pytest.raises(InputError):
            train_seed(density, small_model(), fast(loss="multilabel_bce"), 0)


class TestTrain:
    def test_identical_seed_identical_report(self, density):
        _, a = train(density, small_model(), fast(seeds=(0, 1)))
        _, b = train(density, small_model(), fast(seeds=(0, 1)))
        assert a.to_json() == b.to_json()
        _, c = train(density, small_model(), fast(seeds=(2,)))
        assert c.to_json() != a.to_json()

    def test_loss_decreases_first_five_epochs(self):
        bundle = standard_bundle("density")
        ok = 0
        for seed in range(10):
            _, res = train_seed(bundle, ModelConfig(), TrainConfig(epochs=5, patience=10, monitor_train=True), seed)
            loss = res.train_eval_loss
            ok += len(loss) == 5 and all(b < a for a, b in zip(loss, loss[1:]))
        assert ok >= 8

    def test_overfits_small_slice(self, density):
        train_ids = density.split_ids("train")[:20]
        # validate on the training slice itself
        sub = Bundle(density.dataset, density.embeddings, density.index, density.pools, density.cache)
        sub.split_ids = lambda split: train_ids if split in ("train", "val") else []
        cfg = small_model(dropout=0.0, hidden=16, n_anchors={**SMALL, "S": 10, "P_B": 10})
        model, res = train_seed(sub, cfg, TrainConfig(batch_size=20, lr=1e-3, epochs=300, patience=300), 0)
        assert evaluate(model, sub, train_ids, "multiclass_ce")["micro_f1"] >= 0.95

    def test_test_ids_never_trained_on(self, density):
        _, res = train_seed(density, small_model(), fast(), 0, keep_log=True)
        seen = {i for batch in res.batch_log for i in batch}
        assert seen == set(density.split_ids("train"))
        assert not seen & set(density.split_ids("test")) and not seen & set(density.split_ids("val"))

    def test_best_epoch_restored(self, density):
        model, res = train_seed(density, small_model(), fast(epochs=6), 0)
        again = evaluate(model, density, density.split_ids("val"), "multiclass_ce")
        assert again["micro_f1"] == res.val["micro_f1"]
        assert 1 <= res.best_epoch <= res.epochs_run

    def test_single_seed_std_zero(self, density):
        _, rep = train(density, small_model(), fast(seeds=(4,)))
        _, std = rep.summary()
        assert std["test"]["micro_f1"] == 0.0 and std["val"]["auroc"] == 0.0
        d = rep.to_dict()
        assert 0.0 <= d["mean"]["test"]["micro_f1"] <= 1.0

    def test_report_round_trip(self, density):
        _, rep = train(density, small_model(), fast(epochs=2))
        back = RunReport.from_dict(json.loads(rep.to_json()))
        assert back.to_json() == rep.to_json()
        assert "wall_time_s" not in rep.to_dict() and "wall_time_s" in rep.to_dict(with_timing=True)

    def test_monitor_recorded_in_report(self, density):
        _, rep = train(density, small_model(), fast(epochs=3, monitor_train=True))
        assert len(rep.seeds[0].train_eval_loss) == rep.seeds[0].epochs_run
        back = RunReport.from_dict(json.loads(rep.to_json()))
        assert back.to_json() == rep.to_json()

    def test_train_split_loss_leaves_buffers(self, density):
        model, _ = train_seed(density, small_model(), fast(epochs=2), 0)
        before = model.store.state()
        ids = density.split_ids("train")
        loss = train_split_loss(model, density, ids, "multiclass_ce")
        after = model.store.state()
        assert all(np.array_equal(before[k], after[k]) for k in before)
        assert np.isfinite(loss) and loss > 0
        assert train_split_loss(model, density, ids, "multiclass_ce") == loss

    def test_node_average_runs(self, density):
        _, rep = train(density, small_model(), fast(model="node_avg"))
        assert rep.config["train"]["model"] == "node_avg"

    def test_empty_validation_split(self, density):
        sub = Bundle(density.dataset, density.embeddings, density.index, density.pools, density.cache)
        sub.split_ids = lambda split: density.split_ids("train") if split == "train" else []
        with pytest.raises(RunError):
            train_seed(sub, small_model(), fast(), 0)


@pytest.fixture(scope="module")
def reports(density):
    return ablate(density, small_model(), fast(epochs=2, seeds=(0, 1)))


class TestAblation:
    def test_arms_differ_only_in_channels(self, reports):
        assert list(reports) == list(ARMS)
        base = reports["PNS"].config
        for name, rep in reports.items():
            cfg = json.loads(json.dumps(rep.config))
            ref = json.loads(json.dumps(base))
            assert tuple(cfg["model"].pop("channels")) == ARMS[name]
            ref["model"].pop("channels")
            assert cfg == ref
            assert [s.seed for s in rep.seeds] == [0, 1]

    def test_full_arm_matches_plain_train(self, density, reports):
        _, rep = train(density, small_model(), fast(epochs=2, seeds=(0, 1)))
        assert [asdict(s)["test"] for s in rep.seeds] == [asdict(s)["test"] for s in reports["PNS"].seeds]

    def test_parallel_matches_serial(self, density, reports):
        par = ablate(density, small_model(), fast(epochs=2, seeds=(0, 1)), arms={"S": ("S",)}, jobs=2)
        assert par["S"].to_json() == reports["S"].to_json()

    def test_table_and_csv(self, reports):
        table = format_table(reports).splitlines()
        assert table[0].split() == ["run", "micro_f1", "auroc"]
        assert set(table[1]) <= {"-", " "}
        assert [r.split()[0] for r in table[2:]] == list(ARMS)
        rows = format_csv(reports).splitlines()
        assert rows[0].startswith("run,split,micro_f1_mean")
        assert len(rows) == 1 + len(ARMS)
        mean, _ = reports["S"].summary()
        assert f"{mean['test']['micro_f1']:.6f}" in rows[3]
