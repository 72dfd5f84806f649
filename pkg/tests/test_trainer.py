"""Training loop tests: plateau schedule, determinism, logging."""

import numpy as np
import pytest
import torch

from conftest import ConstantReader, StripReader
from platesr.errors import ConfigError, NonFiniteLossError
from platesr.loss import LossConfig, perceptual_loss
from platesr.network import ModelConfig, build_network, forward
from platesr.trainer import (
    LOG_COLUMNS,
    EpochRecord,
    PlateauScheduler,
    TrainConfig,
    TrainLog,
    batch_order,
    evaluate_epoch,
    train,
    write_log_csv,
)

TINY_MODEL = ModelConfig(channels=4, num_rcb=1, units_per_rcb=1, shuffle_factor=1,
                         recon_blocks=1)


def simulate_schedule(val_losses, lr0=1e-4, factor=0.8, lr_min=1e-7,
                      plateau_patience=1, early_stop_patience=5, tol=1e-8):
    """Independent state-machine transcription for oracle comparison."""
    lr, best, stale = lr0, float("inf"), 0
    out = []
    for v in val_losses:
        if v < best - tol:
            best, stale = v, 0
        else:
            stale += 1
            if stale >= plateau_patience:
                lr = max(lr * factor, lr_min)
        out.append((lr, stale >= early_stop_patience))
    return out


def make_pairs(n=4, size=16, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        hr = rng.random((3, size, size)).astype(np.float32)
        lr = np.clip(hr + rng.normal(0, 0.05, hr.shape), 0, 1).astype(np.float32)
        pairs.append((lr, hr))
    return pairs


class TestPlateauScheduler:
    def make(self, **kw):
        args = dict(lr0=1e-4, factor=0.8, lr_min=1e-7, plateau_patience=1,
                    early_stop_patience=5)
        args.update(kw)
        return PlateauScheduler(**args)

    def test_constant_loss_decays_then_stops(self):
        sched = self.make()
        observed = [sched.observe(1.0) for _ in range(6)]
        assert observed == simulate_schedule([1.0] * 6)
        assert observed[-1][1] is True
        assert all(stop is False for _, stop in observed[:-1])

    def test_improvement_resets(self):
        sched = self.make()
        vals = [1.0, 0.9, 0.9, 0.8, 0.8, 0.8, 0.7]
        assert [sched.observe(v) for v in vals] == simulate_schedule(vals)

    def test_within_tolerance_counts_as_stale(self):
        sched = self.make()
        first_lr, _ = sched.observe(1.0)
        second_lr, _ = sched.observe(1.0 - 1e-12)
        assert first_lr == 1e-4
        assert second_lr == pytest.approx(8e-5)

    def test_lr_floor(self):
        sched = self.make(lr0=2e-7, early_stop_patience=50)
        for _ in range(6):
            lr, _ = sched.observe(1.0)
        # Five decays take 2e-7 past the clamp: the fifth lands on it.
        assert lr == 1e-7
        lr, _ = sched.observe(1.0)
        assert lr == 1e-7

    def test_patience_two(self):
        sched = self.make(plateau_patience=2)
        vals = [1.0, 1.0, 1.0, 1.0]
        got = [sched.observe(v) for v in vals]
        assert got == simulate_schedule(vals, plateau_patience=2)
        assert got[0][0] == 1e-4
        assert got[1][0] == 1e-4
        assert got[2][0] == pytest.approx(8e-5)


class TestBatchOrder:
    def test_is_permutation_and_deterministic(self):
        a = batch_order(0, 1, 64)
        b = batch_order(0, 1, 64)
        assert np.array_equal(a, b)
        assert sorted(a.tolist()) == list(range(64))

    def test_epoch_and_seed_sensitivity(self):
        assert not np.array_equal(batch_order(0, 1, 64), batch_order(0, 2, 64))
        assert not np.array_equal(batch_order(0, 1, 64), batch_order(1, 1, 64))


class TestEvaluateEpoch:
    def test_mean_independent_of_batching(self):
        net = build_network(TINY_MODEL, seed=0)
        pairs = make_pairs(n=5)
        reader = StripReader()
        full = evaluate_epoch(net, pairs, reader, batch_size=16)
        chunked = evaluate_epoch(net, pairs, reader, batch_size=2)
        assert chunked == pytest.approx(full, rel=1e-6)

    def test_matches_direct_loss(self):
        net = build_network(TINY_MODEL, seed=0)
        pairs = make_pairs(n=3)
        reader = StripReader()
        got = evaluate_epoch(net, pairs, reader, batch_size=16)
        lr = torch.from_numpy(np.stack([p[0] for p in pairs]))
        hr = torch.from_numpy(np.stack([p[1] for p in pairs]))
        with torch.no_grad():
            direct = perceptual_loss(net(lr), hr, reader).scalar()
        assert got == pytest.approx(direct, rel=1e-6)

    def test_restores_train_mode(self):
        net = build_network(TINY_MODEL, seed=0)
        net.train()
        evaluate_epoch(net, make_pairs(n=2), StripReader())
        assert net.training

    def test_needs_pairs(self):
        net = build_network(TINY_MODEL, seed=0)
        with pytest.raises(ConfigError):
            evaluate_epoch(net, [], StripReader())


class TestTrainConfig:
    def test_default_valid(self):
        TrainConfig().validate()

    def test_rejects_bad_values(self):
        for kw in (
            {"lr0": 0.0},
            {"plateau_factor": 1.0},
            {"lr_min": 0.0},
            {"lr_min": 1.0},
            {"plateau_patience": 0},
            {"early_stop_patience": 0},
            {"batch_size": 0},
            {"max_epochs": 0},
            {"improve_tol": -1e-9},
        ):
            with pytest.raises(ConfigError):
                TrainConfig(**kw).validate()


class TestTrain:
    def small_cfg(self, **kw):
        args = dict(max_epochs=3, batch_size=2, seed=0,
                    loss=LossConfig(alpha=1.0))
        args.update(kw)
        return TrainConfig(**args)

    def test_log_and_best_state_contract(self):
        net = build_network(TINY_MODEL, seed=0)
        pairs = make_pairs(n=4)
        val = make_pairs(n=2, seed=1)
        reader = StripReader()
        cfg = self.small_cfg()
        best_state, log = train(net, pairs, val, reader, cfg)
        assert [r.epoch for r in log.epochs] == [1, 2, 3]
        assert log.stop_reason == "max_epochs"
        assert log.best_epoch in (1, 2, 3)
        assert log.best_val_loss == min(r.val_loss for r in log.epochs)
        # The epoch lrs must replay the plateau machine over the recorded
        # validation losses.
        expected = [cfg.lr0] + [
            lr for lr, _ in simulate_schedule([r.val_loss for r in log.epochs])
        ][:-1]
        assert [r.lr for r in log.epochs] == expected
        # The network must carry the best epoch's weights afterwards.
        for k, v in net.state_dict().items():
            assert torch.equal(v, best_state[k])
        assert evaluate_epoch(net, val, reader, cfg.loss, cfg.batch_size) == pytest.approx(
            log.best_val_loss, rel=1e-6
        )

    def test_deterministic(self):
        results = []
        for _ in range(2):
            net = build_network(TINY_MODEL, seed=7)
            _, log = train(
                net, make_pairs(n=4), make_pairs(n=2, seed=1), StripReader(),
                self.small_cfg(max_epochs=2),
            )
            results.append((log, net.state_dict()))
        log_a, sd_a = results[0]
        log_b, sd_b = results[1]
        assert [(r.train_loss, r.val_loss, r.lr) for r in log_a.epochs] == [
            (r.train_loss, r.val_loss, r.lr) for r in log_b.epochs
        ]
        for k in sd_a:
            assert torch.equal(sd_a[k], sd_b[k])

    def test_on_epoch_callback(self):
        seen = []
        net = build_network(TINY_MODEL, seed=0)
        train(
            net, make_pairs(n=2), make_pairs(n=2, seed=1), StripReader(),
            self.small_cfg(max_epochs=2), on_epoch=seen.append,
        )
        assert [r.epoch for r in seen] == [1, 2]
        assert all(isinstance(r, EpochRecord) for r in seen)

    def test_training_reduces_loss_on_denoising_task(self):
        net = build_network(
            ModelConfig(channels=8, num_rcb=1, units_per_rcb=1, shuffle_factor=2,
                        recon_blocks=1),
            seed=0,
        )
        pairs = make_pairs(n=8, seed=3)
        val = make_pairs(n=4, seed=4)
        _, log = train(net, pairs, val, StripReader(), self.small_cfg(max_epochs=5, lr0=1e-3))
        assert log.epochs[-1].train_loss < log.epochs[0].train_loss

    def test_non_finite_loss_raises(self):
        net = build_network(TINY_MODEL, seed=0)
        with torch.no_grad():
            next(iter(net.parameters())).fill_(float("nan"))
        with pytest.raises(NonFiniteLossError):
            train(
                net, make_pairs(n=2), make_pairs(n=2, seed=1), ConstantReader(),
                self.small_cfg(max_epochs=1, loss=LossConfig(alpha=0.0)),
            )

    def test_dataclass_pairs_accepted(self, tiny_dataset):
        out, manifest = tiny_dataset
        from platesr.degrade import load_pair

        recs = manifest.subset("0.50-0.75")[:3]
        pairs = [load_pair(r, out) for r in recs]
        net = build_network(
            ModelConfig(channels=4, num_rcb=1, units_per_rcb=1, shuffle_factor=1,
                        recon_blocks=1),
            seed=0,
        )
        _, log = train(net, pairs, pairs, StripReader(), self.small_cfg(max_epochs=1))
        assert len(log.epochs) == 1

    def test_needs_pairs(self):
        net = build_network(TINY_MODEL, seed=0)
        with pytest.raises(ConfigError):
            train(net, [], make_pairs(n=1), StripReader(), self.small_cfg())
        with pytest.raises(ConfigError):
            train(net, make_pairs(n=1), [], StripReader(), self.small_cfg())


class TestLogCsv:
    def test_exact_bytes(self, tmp_path):
        log = TrainLog(
            epochs=[
                EpochRecord(epoch=1, train_loss=0.5, val_loss=0.25, lr=1e-4,
                            wall_seconds=3.3),
                EpochRecord(epoch=2, train_loss=0.125, val_loss=0.0625, lr=8e-5,
                            wall_seconds=2.2),
            ],
            best_epoch=2,
            best_val_loss=0.0625,
            stop_reason="max_epochs",
        )
        path = tmp_path / "log.csv"
        write_log_csv(log, path)
        assert path.read_bytes() == (
            b"epoch,train_loss,val_loss,lr\r\n"
            b"1,0.5,0.25,0.0001\r\n"
            b"2,0.125,0.0625,8e-05\r\n"
        )
        assert "wall" not in ",".join(LOG_COLUMNS)

    def test_floats_round_trip(self, tmp_path):
        import csv

        vals = (1 / 3, 2 / 7, 1e-4)
        log = TrainLog(
            epochs=[EpochRecord(1, *vals, wall_seconds=0.0)],
        )
        path = tmp_path / "log.csv"
        write_log_csv(log, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert float(rows[0]["train_loss"]) == vals[0]
        assert float(rows[0]["val_loss"]) == vals[1]
        assert float(rows[0]["lr"]) == vals[2]
