"""Evaluation metrics: command/parameter accuracy, invalidity ratio, Chamfer.

Chamfer distances are computed on cloud pairs rescaled so their joint
bounding box has unit diagonal (fitting a unit cube); at the fixed sampling
budget the raw distances are dominated by sampling density otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .cad import CAD_PARAM_MASKS, CadSequence
from .kernel import (
    DEFAULT_SAMPLE_COUNT,
    InvalidityReason,
    SamplingError,
    reconstruct,
    sample_shape,
)

DEFAULT_ETA = 3


class MetricsError(ValueError):
    """Invalid metric inputs."""


def acc_cmd(pred: CadSequence, gt: CadSequence) -> float:
    """Fraction of positions whose command kind matches, padding included."""
    if len(pred) != len(gt):
        raise MetricsError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    hits = sum(1 for p, g in zip(pred.commands, gt.commands) if p.kind is g.kind)
    return hits / len(gt)


def acc_param(pred: CadSequence, gt: CadSequence, eta: int = DEFAULT_ETA) -> Optional[float]:
    """Tolerance accuracy over ground-truth-used slots of correctly typed commands.

    Returns None when no command kind is predicted correctly or the correct
    ones carry no parameters (the metric is undefined there).
    """
    if len(pred) != len(gt):
        raise MetricsError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    if eta < 0:
        raise MetricsError("eta must be nonnegative")
    total = 0
    hits = 0
    for p, g in zip(pred.commands, gt.commands):
        if p.kind is not g.kind:
            continue
        mask = CAD_PARAM_MASKS[g.kind]
        for slot, used in enumerate(mask):
            if not used:
                continue
            total += 1
            if abs(p.params[slot] - g.params[slot]) < eta:
                hits += 1
    if total == 0:
        return None
    return hits / total


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of directed mean squared nearest-neighbor distances."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise MetricsError(f"point clouds must share dimensionality, got {a.shape} and {b.shape}")
    if len(a) == 0 or len(b) == 0:
        raise MetricsError("point clouds must be nonempty")
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float((da ** 2).mean() + (db ** 2).mean())


def normalize_cloud_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Translate and scale both clouds so their joint bounding box has unit diagonal."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    joint = np.concatenate([a, b])
    lo = joint.min(axis=0)
    hi = joint.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag <= 0.0:
        return a - lo, b - lo
    return (a - lo) / diag, (b - lo) / diag


@dataclass(frozen=True)
class MetricsReport:
    acc_cmd: float
    acc_param: Optional[float]
    ir: float
    mcd: Optional[float]
    n_samples: int
    n_valid: int
    n_invalid: int
    n_chamfer_pairs: int

    def scaled(self) -> dict[str, Optional[float]]:
        """Reporting convention: accuracies and IR x100, Chamfer x10^2."""
        return {
            "acc_cmd": self.acc_cmd * 100.0,
            "acc_param": None if self.acc_param is None else self.acc_param * 100.0,
            "ir": self.ir * 100.0,
            "mcd": None if self.mcd is None else self.mcd * 100.0,
        }


def report_to_text(report: MetricsReport) -> str:
    scaled = report.scaled()

    def fmt(v: Optional[float]) -> str:
        return "n/a" if v is None else f"{v:.4f}"

    lines = [
        f"samples = {report.n_samples}",
        f"valid = {report.n_valid}",
        f"invalid = {report.n_invalid}",
        f"chamfer_pairs = {report.n_chamfer_pairs}",
        f"acc_cmd = {fmt(scaled['acc_cmd'])}",
        f"acc_param = {fmt(scaled['acc_param'])}",
        f"ir = {fmt(scaled['ir'])}",
        f"mcd = {fmt(scaled['mcd'])}",
    ]
    return "\n".join(lines) + "\n"


def evaluate_set(preds: Sequence[CadSequence], gts: Sequence[CadSequence],
                 k: int = DEFAULT_SAMPLE_COUNT, seed: int = 0,
                 eta: int = DEFAULT_ETA) -> MetricsReport:
    """Aggregate metrics over paired predictions and ground truths.

    The invalidity ratio counts predictions whose reconstruction fails; the
    mean Chamfer averages over pairs where both sides reconstruct and sample
    successfully, using one derived seed per pair for both clouds.
    """
    if len(preds) != len(gts):
        raise MetricsError(f"got {len(preds)} predictions for {len(gts)} ground truths")
    if not preds:
        raise MetricsError("evaluation set is empty")
    cmd_scores = []
    param_scores = []
    chamfer_values = []
    n_invalid = 0
    for i, (pred, gt) in enumerate(zip(preds, gts)):
        cmd_scores.append(acc_cmd(pred, gt))
        p = acc_param(pred, gt, eta)
        if p is not None:
            param_scores.append(p)
        pred_solid = reconstruct(pred)
        if isinstance(pred_solid, InvalidityReason):
            n_invalid += 1
            continue
        gt_solid = reconstruct(gt)
        if isinstance(gt_solid, InvalidityReason):
            continue
        pair_seed = seed + i
        try:
            cloud_pred = sample_shape(pred_solid, k, pair_seed)
            cloud_gt = sample_shape(gt_solid, k, pair_seed)
        except SamplingError:
            continue
        na, nb = normalize_cloud_pair(cloud_gt, cloud_pred)
        chamfer_values.append(chamfer(na, nb))
    n = len(preds)
    return MetricsReport(
        acc_cmd=float(np.mean(cmd_scores)),
        acc_param=float(np.mean(param_scores)) if param_scores else None,
        ir=n_invalid / n,
        mcd=float(np.mean(chamfer_values)) if chamfer_values else None,
        n_samples=n,
        n_valid=n - n_invalid,
        n_invalid=n_invalid,
        n_chamfer_pairs=len(chamfer_values),
    )
