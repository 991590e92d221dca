"""Training objective: command cross-entropy plus soft-target parameter loss.

Parameter targets within a tolerance window of the true bin receive
exponentially decaying probability mass; everything outside the window is
zero. The UNUSED sentinel (category 256) is never smoothed: it is a marker,
not a magnitude, so bleeding mass into bins 253..255 would be wrong.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F

from .drawing import NUM_BINS, PARAM_CATEGORIES, UNUSED

DEFAULT_ALPHA = 2.0
DEFAULT_TOL = 3
DEFAULT_BETA = 2.0


def soft_target(y: int, num_categories: int = PARAM_CATEGORIES,
                alpha: float = DEFAULT_ALPHA, tol: int = DEFAULT_TOL) -> np.ndarray:
    """Smoothed target distribution for one true category.

    Numeric targets spread exp(-alpha*|k-y|) over the window
    [max(0, y-tol), min(255, y+tol)], renormalized after clipping. The
    UNUSED sentinel stays a hard one-hot.
    """
    if not 0 <= y < num_categories:
        raise ValueError(f"target {y} outside 0..{num_categories - 1}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    dist = np.zeros(num_categories, dtype=np.float64)
    if y == UNUSED:
        dist[y] = 1.0
        return dist
    lo = max(0, y - tol)
    hi = min(NUM_BINS - 1, y + tol)
    ks = np.arange(lo, hi + 1)
    weights = np.exp(-alpha * np.abs(ks - y))
    dist[lo:hi + 1] = weights / weights.sum()
    return dist


def build_soft_targets(targets: torch.Tensor, num_categories: int = PARAM_CATEGORIES,
                       alpha: float = DEFAULT_ALPHA, tol: int = DEFAULT_TOL,
                       dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Vectorized soft targets for an integer tensor of true categories."""
    y = targets.long().unsqueeze(-1)
    ks = torch.arange(num_categories, device=targets.device).view(
        *([1] * targets.dim()), num_categories)
    dist = torch.abs(ks - y).to(dtype)
    window = (dist <= tol) & (ks <= NUM_BINS - 1)
    weights = torch.where(window, torch.exp(-alpha * dist), torch.zeros((), dtype=dtype))
    numeric = weights / weights.sum(dim=-1, keepdim=True)
    hard = F.one_hot(y.squeeze(-1).clamp(max=num_categories - 1), num_categories).to(dtype)
    return torch.where(y == UNUSED, hard, numeric)


@lru_cache(maxsize=8)
def _window_tables(num_categories: int, alpha: float, tol: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-category support indices and weights of the smoothing window.

    Row y lists the (at most 2*tol+1) categories carrying mass for target y,
    padded with zero-weight entries; built from the scalar reference so the
    fast loss path matches it by construction.
    """
    width = 2 * tol + 1
    indices = np.zeros((num_categories, width), dtype=np.int64)
    weights = np.zeros((num_categories, width), dtype=np.float64)
    for y in range(num_categories):
        dist = soft_target(y, num_categories, alpha, tol)
        support = np.nonzero(dist)[0]
        indices[y, : len(support)] = support
        weights[y, : len(support)] = dist[support]
    return indices, weights


def args_loss(arg_logits: torch.Tensor, gt_params: torch.Tensor,
              alpha: float = DEFAULT_ALPHA, tol: int = DEFAULT_TOL) -> torch.Tensor:
    """Soft cross-entropy over all sequence positions and parameter slots.

    ``arg_logits`` has shape (..., N_c, N_p, C) and ``gt_params`` the matching
    (..., N_c, N_p) integer categories. Normalized by N_c * N_p (and any
    leading batch dimensions). Since the target has mass only inside the
    smoothing window, the sum over categories reduces to one logsumexp plus
    a gather over the window.
    """
    if arg_logits.shape[:-1] != gt_params.shape:
        raise ValueError(f"logits {tuple(arg_logits.shape)} do not match targets {tuple(gt_params.shape)}")
    num_categories = arg_logits.shape[-1]
    idx_np, w_np = _window_tables(num_categories, float(alpha), int(tol))
    device = arg_logits.device
    indices = torch.from_numpy(idx_np).to(device)[gt_params.long()]
    weights = torch.from_numpy(w_np).to(device=device, dtype=arg_logits.dtype)[gt_params.long()]
    log_z = torch.logsumexp(arg_logits, dim=-1)
    picked = torch.gather(arg_logits, -1, indices)
    return (log_z - (weights * picked).sum(dim=-1)).mean()


def cmd_loss(cmd_logits: torch.Tensor, gt_kinds: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over all positions, padding EOS included."""
    if cmd_logits.shape[:-1] != gt_kinds.shape:
        raise ValueError(f"logits {tuple(cmd_logits.shape)} do not match targets {tuple(gt_kinds.shape)}")
    num_kinds = cmd_logits.shape[-1]
    return F.cross_entropy(cmd_logits.reshape(-1, num_kinds), gt_kinds.reshape(-1).long())


def total_loss(cmd: torch.Tensor, args: torch.Tensor, beta: float = DEFAULT_BETA) -> torch.Tensor:
    """Composite objective: command loss plus beta times parameter loss."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return cmd + beta * args
