"""Training loop, dataset split, inference and evaluation over checkpoints.

The loop is Adam with linear warmup, per-step global-norm gradient clipping
and seeded per-epoch shuffling, fully deterministic for a given seed.
Checkpoints carry model weights, optimizer moments and the torch RNG state,
so a run split at an epoch boundary resumes bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch

from .cad import CadSequence
from .checkpoint import Checkpoint, load_model, save_checkpoint
from .drawing import UNUSED
from .losses import args_loss, cmd_loss, total_loss
from .metrics import DEFAULT_ETA, MetricsReport, evaluate_set
from .model import (
    DualDecoderModel,
    ModelConfig,
    build_model,
    cad_to_arrays,
    predict,
    views_to_arrays,
)
from .records import SampleRecord


class TrainingError(RuntimeError):
    """Unrecoverable training failure."""


class TrainingDiverged(TrainingError):
    def __init__(self, step: int, last_checkpoint: Optional[Path]) -> None:
        self.step = step
        self.last_checkpoint = last_checkpoint
        where = f"; last good checkpoint: {last_checkpoint}" if last_checkpoint else ""
        super().__init__(f"non-finite loss at step {step}{where}")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    warmup_steps: int = 2000
    clip_norm: float = 1.0
    dropout: float = 0.1
    batch_size: int = 256
    epochs: int = 200
    seed: int = 0
    beta: float = 2.0
    soft_alpha: float = 2.0
    soft_tol: int = 3
    checkpoint_interval: int = 0   # epochs between checkpoints; 0 keeps only the final one
    eval_interval: int = 0         # epochs between validation passes; 0 disables

    def __post_init__(self) -> None:
        for name in ("learning_rate", "clip_norm", "beta", "soft_alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("warmup_steps", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must sit in [0, 1)")
        if self.soft_tol < 0:
            raise ValueError("soft_tol must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def desk_model_config(view_mode: str = "iso", **overrides) -> ModelConfig:
    """Laptop-scale profile: small width, two blocks, four heads."""
    values = dict(embed_dim=64, num_blocks=2, num_heads=4, ff_dim=128,
                  dropout=0.1, view_mode=view_mode)
    values.update(overrides)
    return ModelConfig(**values)


def desk_train_config(**overrides) -> TrainConfig:
    values = dict(batch_size=32, warmup_steps=200, epochs=100, checkpoint_interval=0)
    values.update(overrides)
    return TrainConfig(**values)


def paper_model_config(view_mode: str = "all") -> ModelConfig:
    return ModelConfig(view_mode=view_mode)


def paper_train_config() -> TrainConfig:
    return TrainConfig()


def warmup_learning_rate(base_lr: float, step: int, warmup_steps: int) -> float:
    """Linear ramp over the first warmup_steps optimizer steps (1-indexed)."""
    if step < 1:
        raise ValueError("step counting starts at 1")
    return base_lr * min(1.0, step / warmup_steps)


def split_dataset(records: Sequence, ratios: tuple[float, float, float],
                  seed: int) -> tuple[list, list, list]:
    """Seeded shuffle then contiguous slicing into train/val/test."""
    if not records:
        raise ValueError("cannot split an empty dataset")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three nonnegative values summing to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(records))
    n = len(records)
    n_train = int(n * ratios[0] + 1e-9)
    n_val = int(n * ratios[1] + 1e-9)
    shuffled = [records[i] for i in order]
    return (shuffled[:n_train], shuffled[n_train:n_train + n_val],
            shuffled[n_train + n_val:])


def dataset_fingerprint(records: Sequence[SampleRecord]) -> str:
    digest = hashlib.sha256()
    for record in records:
        digest.update(record.id.encode("utf-8"))
        kinds, params = cad_to_arrays(record.cad)
        digest.update(kinds.tobytes())
        digest.update(params.tobytes())
    return digest.hexdigest()[:16]


@dataclass
class Batches:
    """Pre-tensorized dataset living on the CPU."""

    kinds: torch.Tensor       # (N, L)
    params: torch.Tensor      # (N, L, 8)
    view_ids: torch.Tensor    # (N, L)
    cad_kinds: torch.Tensor   # (N, N_c)
    cad_params: torch.Tensor  # (N, N_c, 15)

    def __len__(self) -> int:
        return self.kinds.shape[0]


def tensorize_records(records: Sequence[SampleRecord], config: ModelConfig) -> Batches:
    kinds, params, views, ck, cp = [], [], [], [], []
    for record in records:
        k, p, v = views_to_arrays(record.views, config)
        kinds.append(k)
        params.append(p)
        views.append(v)
        gk, gp = cad_to_arrays(record.cad)
        ck.append(gk)
        cp.append(gp)
    return Batches(
        kinds=torch.from_numpy(np.stack(kinds)),
        params=torch.from_numpy(np.stack(params)),
        view_ids=torch.from_numpy(np.stack(views)),
        cad_kinds=torch.from_numpy(np.stack(ck)),
        cad_params=torch.from_numpy(np.stack(cp)),
    )


class Trainer:
    """Deterministic single-process training over an in-memory dataset."""

    def __init__(self, model_config: ModelConfig, train_config: TrainConfig,
                 out_dir: Union[str, Path]) -> None:
        if model_config.dropout != train_config.dropout:
            model_config = ModelConfig(**{**model_config.to_dict(),
                                          "dropout": train_config.dropout})
        self.model_config = model_config
        self.train_config = train_config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.model = build_model(model_config, seed=train_config.seed)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=train_config.learning_rate,
            betas=(0.9, 0.999), eps=1e-8)
        self._param_names = [name for name, _ in self.model.named_parameters()]
        self.step = 0
        self.epoch = 0
        self.manifest: dict = {
            "model_config": model_config.to_dict(),
            "train_config": train_config.to_dict(),
            "adam": {"betas": [0.9, 0.999], "eps": 1e-8},
            "dataset_fingerprint": None,
            "epochs": [],
            "checkpoints": [],
        }
        self.last_checkpoint: Optional[Path] = None

    # -- batching ---------------------------------------------------------

    def _epoch_order(self, n: int, epoch: int) -> np.ndarray:
        rng = np.random.default_rng((self.train_config.seed, epoch))
        return rng.permutation(n)

    def _views_arg(self, view_ids: torch.Tensor) -> Optional[torch.Tensor]:
        return view_ids if self.model_config.uses_view_embedding else None

    def _losses(self, batches: Batches, idx: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        cfg = self.train_config
        cmd_logits, arg_logits = self.model(
            batches.kinds[idx], batches.params[idx], self._views_arg(batches.view_ids[idx]))
        l_cmd = cmd_loss(cmd_logits, batches.cad_kinds[idx])
        l_args = args_loss(arg_logits, batches.cad_params[idx],
                           alpha=cfg.soft_alpha, tol=cfg.soft_tol)
        return total_loss(l_cmd, l_args, beta=cfg.beta), l_cmd, l_args

    # -- checkpointing ----------------------------------------------------

    def _collect_tensors(self) -> dict[str, np.ndarray]:
        tensors = {}
        for name, param in self.model.named_parameters():
            tensors[f"model.{name}"] = param.detach().cpu().numpy()
        state = self.optimizer.state_dict()["state"]
        for i, name in enumerate(self._param_names):
            if i in state:
                tensors[f"adam.{name}.exp_avg"] = state[i]["exp_avg"].cpu().numpy()
                tensors[f"adam.{name}.exp_avg_sq"] = state[i]["exp_avg_sq"].cpu().numpy()
        return tensors

    def save(self, path: Union[str, Path]) -> Path:
        state = {
            "step": self.step,
            "epoch": self.epoch,
            "torch_rng": torch.get_rng_state().numpy().tobytes().hex(),
        }
        save_checkpoint(path, self.model_config, self._collect_tensors(), state)
        self.last_checkpoint = Path(path)
        self.manifest["checkpoints"].append(str(path))
        return Path(path)

    def restore(self, ckpt: Checkpoint) -> None:
        stored = ckpt.model_tensors()
        with torch.no_grad():
            for name, param in self.model.named_parameters():
                param.copy_(torch.from_numpy(stored[name]))
        adam_state = {}
        for i, name in enumerate(self._param_names):
            avg_key = f"adam.{name}.exp_avg"
            if avg_key in ckpt.tensors:
                adam_state[i] = {
                    "step": torch.tensor(float(ckpt.state["step"])),
                    "exp_avg": torch.from_numpy(ckpt.tensors[avg_key]),
                    "exp_avg_sq": torch.from_numpy(ckpt.tensors[f"adam.{name}.exp_avg_sq"]),
                }
        base = self.optimizer.state_dict()
        self.optimizer.load_state_dict({"state": adam_state,
                                        "param_groups": base["param_groups"]})
        self.step = int(ckpt.state["step"])
        self.epoch = int(ckpt.state["epoch"])
        rng_hex = ckpt.state.get("torch_rng")
        if rng_hex:
            torch.set_rng_state(torch.from_numpy(
                np.frombuffer(bytes.fromhex(rng_hex), dtype=np.uint8).copy()))

    # -- validation -------------------------------------------------------

    def _validation_metrics(self, batches: Batches) -> dict[str, float]:
        cfg = self.train_config
        self.model.eval()
        with torch.no_grad():
            cmd_logits, arg_logits = self.model(
                batches.kinds, batches.params, self._views_arg(batches.view_ids))
            l_cmd = cmd_loss(cmd_logits, batches.cad_kinds)
            l_args = args_loss(arg_logits, batches.cad_params,
                               alpha=cfg.soft_alpha, tol=cfg.soft_tol)
            pred_kinds = cmd_logits.argmax(dim=-1)
            kind_ok = pred_kinds == batches.cad_kinds
            acc_cmd = kind_ok.float().mean().item()
            pred_params = arg_logits.argmax(dim=-1)
            used = batches.cad_params != UNUSED
            counted = used & kind_ok.unsqueeze(-1)
            close = (pred_params - batches.cad_params).abs() < DEFAULT_ETA
            k = counted.sum().item()
            acc_param = ((close & counted).sum().item() / k) if k else float("nan")
        self.model.train()
        return {
            "val_loss": float(total_loss(l_cmd, l_args, beta=cfg.beta)),
            "val_acc_cmd": acc_cmd,
            "val_acc_param": acc_param,
        }

    # -- the loop ---------------------------------------------------------

    def train(self, records: Sequence[SampleRecord],
              val_records: Sequence[SampleRecord] = (),
              max_steps: Optional[int] = None) -> Path:
        """Run to the configured epoch count (or max_steps) and checkpoint."""
        cfg = self.train_config
        batches = tensorize_records(records, self.model_config)
        self.manifest["dataset_fingerprint"] = dataset_fingerprint(records)
        val_batches = tensorize_records(val_records, self.model_config) if val_records else None
        n = len(batches)
        if n < cfg.batch_size:
            raise TrainingError(
                f"dataset of {n} samples cannot fill one batch of {cfg.batch_size} "
                "(incomplete batches are dropped)")
        self.model.train()
        start = time.time()
        while self.epoch < cfg.epochs:
            order = self._epoch_order(n, self.epoch)
            epoch_losses = []
            epoch_cmd = []
            epoch_args = []
            grad_norms = []
            for lo in range(0, n - cfg.batch_size + 1, cfg.batch_size):
                if max_steps is not None and self.step >= max_steps:
                    break
                idx = torch.from_numpy(order[lo: lo + cfg.batch_size])
                loss, l_cmd, l_args = self._losses(batches, idx)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(self.step + 1, self.last_checkpoint)
                self.optimizer.zero_grad()
                loss.backward()
                norm = torch.nn.utils.clip_grad_norm_(
                    self.model.parameters(), cfg.clip_norm)
                post_norm = torch.sqrt(sum(
                    (p.grad ** 2).sum() for p in self.model.parameters()
                    if p.grad is not None))
                lr = warmup_learning_rate(cfg.learning_rate, self.step + 1, cfg.warmup_steps)
                for group in self.optimizer.param_groups:
                    group["lr"] = lr
                self.optimizer.step()
                self.step += 1
                epoch_losses.append(float(loss.detach()))
                epoch_cmd.append(float(l_cmd.detach()))
                epoch_args.append(float(l_args.detach()))
                grad_norms.append((float(norm), float(post_norm)))
            self.epoch += 1
            entry = {
                "epoch": self.epoch,
                "step": self.step,
                "loss": float(np.mean(epoch_losses)) if epoch_losses else None,
                "cmd_loss": float(np.mean(epoch_cmd)) if epoch_cmd else None,
                "args_loss": float(np.mean(epoch_args)) if epoch_args else None,
                "lr": warmup_learning_rate(cfg.learning_rate, max(self.step, 1),
                                           cfg.warmup_steps),
                "grad_norm_max": float(max(g for g, _ in grad_norms)) if grad_norms else None,
                "clipped_norm_max": float(max(g for _, g in grad_norms)) if grad_norms else None,
            }
            if val_batches is not None and cfg.eval_interval and \
                    self.epoch % cfg.eval_interval == 0:
                entry.update(self._validation_metrics(val_batches))
            self.manifest["epochs"].append(entry)
            if cfg.checkpoint_interval and self.epoch % cfg.checkpoint_interval == 0:
                self.save(self.out_dir / f"ckpt_epoch{self.epoch:05d}.svg2cad")
            if max_steps is not None and self.step >= max_steps:
                break
        self.manifest["wall_seconds"] = time.time() - start
        final = self.save(self.out_dir / "ckpt_final.svg2cad")
        self.write_manifest()
        return final

    def write_manifest(self) -> Path:
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(self.manifest, indent=2), encoding="utf-8")
        return path


def resume_trainer(ckpt_path: Union[str, Path], train_config: TrainConfig,
                   out_dir: Union[str, Path]) -> Trainer:
    """Trainer primed from a checkpoint; continues at the stored epoch."""
    from .checkpoint import load_checkpoint

    ckpt = load_checkpoint(ckpt_path)
    trainer = Trainer(ckpt.config, train_config, out_dir)
    trainer.restore(ckpt)
    return trainer


# ---------------------------------------------------------------------------
# Inference and evaluation


def run_inference(model: DualDecoderModel, records: Sequence[SampleRecord],
                  batch_size: int = 64) -> list[CadSequence]:
    """Greedy predictions for every record, in order."""
    config = model.config
    batches = tensorize_records(records, config)
    model.eval()
    out: list[CadSequence] = []
    views_all = batches.view_ids if config.uses_view_embedding else None
    with torch.no_grad():
        for lo in range(0, len(batches), batch_size):
            hi = min(lo + batch_size, len(batches))
            cmd_logits, arg_logits = model(
                batches.kinds[lo:hi], batches.params[lo:hi],
                views_all[lo:hi] if views_all is not None else None)
            for b in range(hi - lo):
                out.append(predict(cmd_logits[b], arg_logits[b]))
    return out


def evaluate_checkpoint(ckpt_path: Union[str, Path], records: Sequence[SampleRecord],
                        k: int = 2000, seed: int = 0) -> MetricsReport:
    if not records:
        raise ValueError("evaluation set is empty")
    model, _ = load_model(ckpt_path)
    preds = run_inference(model, records)
    return evaluate_set(preds, [r.cad for r in records], k=k, seed=seed)
