import dataclasses
import json

import numpy as np
import pytest
import torch

from svg2cad.checkpoint import CheckpointError, load_checkpoint, load_model, save_checkpoint
from svg2cad.config import (
    ConfigError,
    apply_overrides,
    parse_config_file,
    resolve_seed,
)
from svg2cad.model import ModelConfig, build_model
from svg2cad.synth import GenSpec, generate_dataset
from svg2cad.training import (
    Trainer,
    TrainConfig,
    TrainingError,
    dataset_fingerprint,
    evaluate_checkpoint,
    resume_trainer,
    run_inference,
    split_dataset,
    warmup_learning_rate,
)

TINY_MODEL = dict(embed_dim=16, num_blocks=1, num_heads=2, ff_dim=32,
                  view_mode="iso", tokens_per_view=100)


def tiny_trainer(tmp_path, **train_overrides):
    train = dict(batch_size=4, warmup_steps=10, epochs=2, seed=1, dropout=0.1)
    train.update(train_overrides)
    return Trainer(ModelConfig(**TINY_MODEL), TrainConfig(**train), tmp_path)


@pytest.fixture(scope="module")
def records():
    return generate_dataset(GenSpec(), 8, seed=21)


class TestProfiles:
    def test_paper_profile_values(self):
        from svg2cad.training import paper_model_config, paper_train_config

        model = paper_model_config()
        assert model.embed_dim == 256
        assert model.num_blocks == 4
        assert model.num_heads == 8
        assert model.ff_dim == 512
        assert model.dropout == 0.1
        assert model.tokens_per_view == 100
        assert model.param_categories == 257
        train = paper_train_config()
        assert train.learning_rate == 1e-3
        assert train.warmup_steps == 2000
        assert train.clip_norm == 1.0
        assert train.batch_size == 256
        assert train.epochs == 200

    def test_desk_profile_values(self):
        from svg2cad.training import desk_model_config, desk_train_config

        model = desk_model_config()
        assert model.embed_dim == 64
        assert model.num_blocks == 2
        assert model.num_heads == 4
        assert desk_train_config().batch_size == 32


class TestWarmup:
    def test_midpoint(self):
        assert warmup_learning_rate(1e-3, 1000, 2000) == pytest.approx(5e-4)

    def test_after_horizon(self):
        assert warmup_learning_rate(1e-3, 2000, 2000) == pytest.approx(1e-3)
        assert warmup_learning_rate(1e-3, 5000, 2000) == pytest.approx(1e-3)

    def test_closed_form_over_schedule(self):
        for step in range(1, 5001):
            want = 1e-3 * min(1.0, step / 2000)
            assert warmup_learning_rate(1e-3, step, 2000) == pytest.approx(want, abs=0)

    def test_zero_step_rejected(self):
        with pytest.raises(ValueError):
            warmup_learning_rate(1e-3, 0, 2000)


class TestSplit:
    def test_paper_ratios(self):
        records = list(range(1000))
        train, val, test = split_dataset(records, (0.9, 0.05, 0.05), seed=0)
        assert (len(train), len(val), len(test)) == (900, 50, 50)

    def test_deterministic(self):
        records = list(range(100))
        a = split_dataset(records, (0.8, 0.1, 0.1), seed=5)
        b = split_dataset(records, (0.8, 0.1, 0.1), seed=5)
        assert a == b

    def test_all_train(self):
        train, val, test = split_dataset(list(range(10)), (1.0, 0.0, 0.0), seed=0)
        assert len(train) == 10 and not val and not test

    def test_partition(self):
        records = list(range(97))
        train, val, test = split_dataset(records, (0.6, 0.2, 0.2), seed=3)
        assert sorted(train + val + test) == records

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            split_dataset([], (0.9, 0.05, 0.05), seed=0)

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            split_dataset([1], (0.5, 0.4, 0.2), seed=0)


class TestConfigFile:
    def test_parse_and_apply(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nlearning_rate = 0.01\nepochs = 5\n\nbatch_size=2\n")
        values = parse_config_file(path)
        config = apply_overrides(TrainConfig(), values, strict=True)
        assert config.learning_rate == 0.01
        assert config.epochs == 5
        assert config.batch_size == 2

    def test_bool_coercion(self):
        config = apply_overrides(ModelConfig(), {"guidance": "false"}, strict=True)
        assert config.guidance is False

    def test_unknown_key_strict(self):
        with pytest.raises(ConfigError):
            apply_overrides(TrainConfig(), {"learning_rte": "0.1"}, strict=True)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("just words\n")
        with pytest.raises(ConfigError):
            parse_config_file(path)

    def test_seed_env_override(self, monkeypatch):
        monkeypatch.setenv("D2C_SEED", "99")
        assert resolve_seed(5) == 99
        monkeypatch.delenv("D2C_SEED")
        assert resolve_seed(5) == 5
        assert resolve_seed(None, default=3) == 3


class TestCheckpointContainer:
    def test_round_trip(self, tmp_path):
        config = ModelConfig(**TINY_MODEL)
        tensors = {"model.a": np.arange(6, dtype=np.float32).reshape(2, 3),
                   "adam.a.exp_avg": np.zeros((2, 3), dtype=np.float32)}
        path = tmp_path / "c.svg2cad"
        save_checkpoint(path, config, tensors, {"step": 7, "epoch": 1})
        ckpt = load_checkpoint(path)
        assert ckpt.config == config
        assert ckpt.state["step"] == 7
        np.testing.assert_array_equal(ckpt.tensors["model.a"], tensors["model.a"])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTACKPT" + b"\0" * 32)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_shape_validation_against_config(self, tmp_path):
        config = ModelConfig(**TINY_MODEL)
        model = build_model(config, seed=0)
        tensors = {f"model.{k}": v.detach().numpy() for k, v in model.named_parameters()}
        first = next(iter(tensors))
        tensors[first] = np.zeros((1, 1), dtype=np.float32)
        path = tmp_path / "bad_shape.svg2cad"
        save_checkpoint(path, config, tensors, {})
        with pytest.raises(CheckpointError, match="shape"):
            load_model(path)

    def test_load_model_restores_weights(self, tmp_path):
        config = ModelConfig(**TINY_MODEL)
        model = build_model(config, seed=3)
        tensors = {f"model.{k}": v.detach().numpy() for k, v in model.named_parameters()}
        path = tmp_path / "ok.svg2cad"
        save_checkpoint(path, config, tensors, {})
        loaded, _ = load_model(path)
        for (name, a), (_, b) in zip(model.named_parameters(), loaded.named_parameters()):
            np.testing.assert_array_equal(a.detach().numpy(), b.detach().numpy())


class TestTrainer:
    def test_short_run_writes_manifest_and_checkpoint(self, tmp_path, records):
        trainer = tiny_trainer(tmp_path, epochs=2)
        final = trainer.train(records, records[:4])
        assert final.exists()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert len(manifest["epochs"]) == 2
        assert manifest["dataset_fingerprint"] == dataset_fingerprint(records)
        assert manifest["epochs"][0]["loss"] is not None

    def test_clipping_bound_recorded(self, tmp_path, records):
        trainer = tiny_trainer(tmp_path, epochs=3, clip_norm=0.05)
        trainer.train(records)
        for entry in trainer.manifest["epochs"]:
            assert entry["clipped_norm_max"] <= 0.05 + 1e-5

    def test_warmup_lr_applied(self, tmp_path, records):
        trainer = tiny_trainer(tmp_path, epochs=1, warmup_steps=100)
        trainer.train(records)
        # 8 records, batch 4: 2 steps; lr after step 2 = base * 2/100
        assert trainer.optimizer.param_groups[0]["lr"] == pytest.approx(1e-3 * 2 / 100)

    def test_batch_too_large_rejected(self, tmp_path, records):
        trainer = tiny_trainer(tmp_path, batch_size=64)
        with pytest.raises(TrainingError):
            trainer.train(records)

    def test_same_seed_same_weights(self, tmp_path, records):
        a = tiny_trainer(tmp_path / "a", epochs=2)
        a.train(records)
        b = tiny_trainer(tmp_path / "b", epochs=2)
        b.train(records)
        for (_, pa), (_, pb) in zip(a.model.named_parameters(), b.model.named_parameters()):
            assert torch.equal(pa, pb)

    def test_eval_interval_records_metrics(self, tmp_path, records):
        trainer = tiny_trainer(tmp_path, epochs=2, eval_interval=1)
        trainer.train(records, records[:4])
        assert "val_loss" in trainer.manifest["epochs"][0]
        assert "val_acc_cmd" in trainer.manifest["epochs"][1]

    def test_divergence_aborts_with_step_and_checkpoint(self, tmp_path, records):
        from svg2cad.training import TrainingDiverged

        trainer = tiny_trainer(tmp_path, epochs=2)
        trainer.train(records)  # leaves a known-good checkpoint behind
        good = trainer.last_checkpoint
        with torch.no_grad():
            trainer.model.cmd_head.weight[0, 0] = float("nan")
        trainer.train_config = dataclasses.replace(trainer.train_config, epochs=4)
        with pytest.raises(TrainingDiverged) as info:
            trainer.train(records)
        assert info.value.step == trainer.step + 1
        assert info.value.last_checkpoint == good


class TestResumeDeterminism:
    def test_split_run_bit_identical(self, tmp_path, records):
        full = tiny_trainer(tmp_path / "full", epochs=4)
        full.train(records)

        first = tiny_trainer(tmp_path / "half", epochs=2)
        first.train(records)
        ckpt = first.save(tmp_path / "half" / "mid.svg2cad")

        resumed = resume_trainer(ckpt, TrainConfig(batch_size=4, warmup_steps=10,
                                                   epochs=4, seed=1, dropout=0.1),
                                 tmp_path / "resumed")
        resumed.train(records)

        for (name, pa), (_, pb) in zip(full.model.named_parameters(),
                                       resumed.model.named_parameters()):
            fa = pa.detach().numpy()
            fb = pb.detach().numpy()
            assert np.array_equal(fa, fb), f"weights differ after resume: {name}"
            assert np.array_equal(fa.astype(np.float64), fb.astype(np.float64))


class TestInference:
    def test_run_inference_shapes(self, records):
        config = ModelConfig(**TINY_MODEL)
        model = build_model(config, seed=0)
        preds = run_inference(model, records, batch_size=3)
        assert len(preds) == len(records)
        assert all(len(p) == config.cad_len for p in preds)

    def test_random_model_mostly_invalid(self, tmp_path, records):
        trainer = tiny_trainer(tmp_path, epochs=1)
        final = trainer.train(records)
        report = evaluate_checkpoint(final, records, k=64, seed=0)
        # an untrained model essentially never emits grammatical sequences
        assert report.ir >= 0.8

    def test_empty_eval_rejected(self, tmp_path, records):
        trainer = tiny_trainer(tmp_path, epochs=1)
        final = trainer.train(records)
        with pytest.raises(ValueError):
            evaluate_checkpoint(final, [], k=16, seed=0)
