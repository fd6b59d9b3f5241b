"""Training loop: determinism, schedules in logs, evaluation contracts."""

import math

import numpy as np
import pytest

from gazelab import dataset as ds
from gazelab import geometry as geo
from gazelab import training
from gazelab.arch import ModelConfig, build_from_model_config
from gazelab.dataset import generate_dataset, load_dataset, prepare_inputs, write_manifest
from gazelab.synth import SynthConfig
from gazelab.training import (TrainConfig, TrainingError, evaluate, lr_schedule,
                              train)


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    cfg = SynthConfig(resolution=128, noise_sigma=0.02, seed=11)
    sets = generate_dataset(cfg, 16, 8, 0, root / "raw")
    train_ds = prepare_inputs(sets["train"], root / "p/train", regions="face",
                              resolution=64)
    val_ds = prepare_inputs(sets["val"], root / "p/val", regions="face", resolution=64)
    return root, train_ds, val_ds


def _tiny_config(root, out=""):
    return TrainConfig(
        model=ModelConfig(arch="minires", resolution=64, width=8, blocks_per_stage=(1,)),
        train_dir=str(root / "p/train"), val_dir=str(root / "p/val"),
        epochs=2, base_lr=1e-3, batch_size=8, seed=0, out_dir=out)


class TestTrain:
    def test_loss_decreases_on_learnable_toy_config(self, prepared):
        root, train_ds, _ = prepared
        cfg = _tiny_config(root)
        cfg = TrainConfig(model=cfg.model, train_dir=cfg.train_dir, epochs=6,
                          base_lr=2e-3, batch_size=8, seed=1)
        result = train(cfg)
        losses = [r["train_loss"] for r in result.history]
        assert losses[-1] < losses[0]

    def test_same_config_seed_bit_identical_histories(self, prepared):
        root, _, _ = prepared
        h1 = train(_tiny_config(root)).history
        h2 = train(_tiny_config(root)).history
        assert [tuple(r.values()) for r in h1] == [tuple(r.values()) for r in h2]

    def test_lr_column_equals_schedule(self, prepared):
        root, _, _ = prepared
        cfg = TrainConfig(model=_tiny_config(root).model,
                          train_dir=str(root / "p/train"),
                          epochs=12, base_lr=1e-4, batch_size=8, seed=0)
        result = train(cfg)
        for row in result.history:
            assert row["lr"] == lr_schedule("cnn", row["epoch"], 1e-4, total_epochs=12)

    def test_epoch_log_written_and_bit_identical(self, prepared, tmp_path):
        root, _, _ = prepared
        r1 = train(_tiny_config(root, out=str(tmp_path / "a")))
        r2 = train(_tiny_config(root, out=str(tmp_path / "b")))
        a = open(r1.log_path, "rb").read()
        b = open(r2.log_path, "rb").read()
        assert a == b
        assert a.decode().splitlines()[0] == training.EPOCH_LOG_HEADER

    def test_resolution_mismatch_rejected_before_epoch_zero(self, prepared):
        root, _, _ = prepared
        cfg = _tiny_config(root)
        bad = TrainConfig(model=ModelConfig(arch="minires", resolution=128, width=8,
                                            blocks_per_stage=(1,)),
                          train_dir=cfg.train_dir, epochs=1, batch_size=8)
        with pytest.raises(TrainingError, match="resolution"):
            train(bad)

    def test_regions_mismatch_rejected(self, prepared):
        root, _, _ = prepared
        cfg = _tiny_config(root)
        bad = TrainConfig(model=ModelConfig(arch="multiregion", resolution=64,
                                            eye_resolution=32),
                          train_dir=cfg.train_dir, epochs=1, batch_size=8)
        with pytest.raises(TrainingError, match="region"):
            train(bad)

    def test_non_finite_loss_aborts_with_batch_index(self, prepared, tmp_path):
        root, train_ds, _ = prepared
        rows = [ds.GazeSample(s.filename, float("nan"), s.yaw, s.rotation, s.face_center)
                for s in train_ds.samples]
        import shutil
        shutil.copytree(train_ds.root, tmp_path / "poison")
        write_manifest(tmp_path / "poison" / "manifest.csv", rows)
        cfg = TrainConfig(model=_tiny_config(root).model,
                          train_dir=str(tmp_path / "poison"), epochs=1, batch_size=8)
        with pytest.raises(TrainingError, match=r"non-finite loss at epoch 0 batch 0"):
            train(cfg)


class TestEvaluate:
    def test_checkpoint_on_own_training_set_reproduces_logged_error(self, prepared, tmp_path):
        from gazelab.checkpoint import load_checkpoint
        root, train_ds, _ = prepared
        result = train(_tiny_config(root, out=str(tmp_path / "run")))
        logged = result.history[-1]["train_err_deg"]
        model, _ = load_checkpoint(result.checkpoint_path)
        res = evaluate(model, load_dataset(root / "p/train"))
        assert abs(res.mean_deg - logged) < 1e-6

    def test_constant_predictor_baseline_in_expected_band(self, prepared):
        """Zero-init head predicts exactly (0,0); compare with the
        Monte-Carlo expectation for uniform +-30 deg labels."""
        root, train_ds, _ = prepared
        rng = np.random.default_rng(0)
        mc_labels = rng.uniform(-0.5236, 0.5236, (200_000, 2))
        mc = float(np.mean(geo.angular_error_deg(
            mc_labels, np.zeros_like(mc_labels))))
        assert 15.0 < mc < 35.0

        model = build_from_model_config(
            ModelConfig(arch="minires", resolution=64, width=8, blocks_per_stage=(1,)),
            seed=0)
        head = model.trunk.layers[-1]
        head.weight.data[...] = 0.0
        head.bias.data[...] = 0.0
        res = evaluate(model, train_ds)
        preds = res.predictions
        assert (preds == 0.0).all()
        assert 15.0 < res.mean_deg < 35.0
        # small-sample mean should sit near the MC expectation
        assert abs(res.mean_deg - mc) < 6.0

    def test_empty_dataset_rejected(self, prepared, tmp_path):
        root, train_ds, _ = prepared
        (tmp_path / "empty" / "images").mkdir(parents=True)
        write_manifest(tmp_path / "empty" / "manifest.csv", [])
        empty = load_dataset(tmp_path / "empty")
        model = build_from_model_config(_tiny_config(root).model, seed=0)
        with pytest.raises(TrainingError, match="empty"):
            evaluate(model, empty)


def test_train_config_defaults_by_schedule():
    cnn = TrainConfig(schedule="cnn").resolved()
    assert (cnn.epochs, cnn.base_lr) == (30, 1e-4)
    tf = TrainConfig(schedule="transformer").resolved()
    assert (tf.epochs, tf.base_lr) == (50, 5e-4)


def test_train_config_from_file(tmp_path):
    text = """
[model]
arch = minires
resolution = 64
width = 8
blocks_per_stage = 1,1

[train]
epochs = 3
base_lr = 0.001
batch_size = 4
seed = 9

[data]
train = /tmp/nowhere
"""
    path = tmp_path / "t.cfg"
    path.write_text(text)
    cfg = training.train_config_from_file(path)
    assert cfg.model.width == 8
    assert cfg.epochs == 3 and cfg.seed == 9
    assert cfg.train_dir == "/tmp/nowhere"

    bad = tmp_path / "bad.cfg"
    bad.write_text("[train]\nnot_a_key = 1\n")
    from gazelab.config import ConfigError
    with pytest.raises(ConfigError, match="not_a_key"):
        training.train_config_from_file(bad)
