"""Loss checks built around independent brute-force oracles."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from svg2cad.drawing import UNUSED
from svg2cad.losses import (
    args_loss,
    build_soft_targets,
    cmd_loss,
    soft_target,
    total_loss,
)


def soft_target_oracle(y, alpha, tol, num_categories=257):
    """Direct evaluation of the smoothing rule, no vectorization shortcuts."""
    dist = [0.0] * num_categories
    if y == 256:
        dist[y] = 1.0
        return dist
    weights = {}
    for k in range(num_categories - 1):  # numeric bins only
        if abs(k - y) <= tol:
            weights[k] = math.exp(-alpha * abs(k - y))
    z = sum(weights.values())
    for k, w in weights.items():
        dist[k] = w / z
    return dist


def hard_cross_entropy_oracle(logits, targets):
    """Plain log-softmax lookup, averaged over every position and slot."""
    logits = np.asarray(logits, dtype=np.float64)
    flat_logits = logits.reshape(-1, logits.shape[-1])
    flat_targets = np.asarray(targets).reshape(-1)
    total = 0.0
    for row, t in zip(flat_logits, flat_targets):
        shifted = row - row.max()
        log_z = math.log(np.exp(shifted).sum())
        total += -(shifted[t] - log_z)
    return total / len(flat_targets)


class TestSoftTarget:
    def test_worked_example(self):
        # y=5, alpha=2, tol=3: the peak and the decay ring around it.
        dist = soft_target(5, alpha=2.0, tol=3)
        assert dist[5] == pytest.approx(0.76204, abs=1e-5)
        assert dist[4] == pytest.approx(0.10313, abs=1e-5)
        assert dist[6] == pytest.approx(0.10313, abs=1e-5)
        assert dist[3] == pytest.approx(0.01396, abs=1e-5)
        assert dist[7] == pytest.approx(0.01396, abs=1e-5)
        assert dist[2] == pytest.approx(0.00189, abs=1e-5)
        assert dist[8] == pytest.approx(0.00189, abs=1e-5)
        assert dist[9] == 0.0 and dist[1] == 0.0

    def test_window_clipped_at_zero(self):
        dist = soft_target(1, alpha=2.0, tol=3)
        assert dist[1] == pytest.approx(0.77431, abs=1e-5)
        assert np.count_nonzero(dist) == 5  # support {0..4}

    def test_tol_zero_is_one_hot(self):
        dist = soft_target(42, alpha=2.0, tol=0)
        assert dist[42] == 1.0
        assert dist.sum() == 1.0

    def test_unused_is_hard_one_hot(self):
        dist = soft_target(UNUSED, alpha=2.0, tol=3)
        assert dist[UNUSED] == 1.0
        assert np.count_nonzero(dist) == 1

    def test_never_bleeds_into_sentinel(self):
        dist = soft_target(255, alpha=2.0, tol=3)
        assert dist[UNUSED] == 0.0
        assert dist.sum() == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(min_value=0, max_value=256),
           st.floats(min_value=0.1, max_value=8.0),
           st.integers(min_value=0, max_value=10))
    @settings(max_examples=200, deadline=None)
    def test_matches_oracle(self, y, alpha, tol):
        got = soft_target(y, alpha=alpha, tol=tol)
        want = soft_target_oracle(y, alpha, tol)
        np.testing.assert_allclose(got, want, atol=1e-12)
        assert got.sum() == pytest.approx(1.0, abs=1e-9)

    @given(st.integers(min_value=10, max_value=245),
           st.floats(min_value=0.1, max_value=8.0),
           st.integers(min_value=0, max_value=8))
    @settings(max_examples=100, deadline=None)
    def test_symmetric_when_unclipped(self, y, alpha, tol):
        dist = soft_target(y, alpha=alpha, tol=tol)
        for d in range(1, tol + 1):
            assert dist[y - d] == pytest.approx(dist[y + d], rel=1e-12)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            soft_target(-1)
        with pytest.raises(ValueError):
            soft_target(257)
        with pytest.raises(ValueError):
            soft_target(5, alpha=0.0)
        with pytest.raises(ValueError):
            soft_target(5, tol=-1)


class TestBuildSoftTargets:
    def test_matches_scalar_version(self):
        rng = np.random.default_rng(3)
        ys = rng.integers(0, 257, size=(4, 15))
        got = build_soft_targets(torch.from_numpy(ys), dtype=torch.float64).numpy()
        for i in range(4):
            for j in range(15):
                np.testing.assert_allclose(got[i, j], soft_target(int(ys[i, j])), atol=1e-12)


class TestArgsLoss:
    def test_tol_zero_equals_hard_ce(self):
        rng = np.random.default_rng(11)
        logits = rng.normal(size=(6, 15, 257))
        targets = rng.integers(0, 257, size=(6, 15))
        got = args_loss(torch.from_numpy(logits), torch.from_numpy(targets), tol=0)
        want = hard_cross_entropy_oracle(logits, targets)
        assert float(got) == pytest.approx(want, abs=1e-9)

    def test_uniform_logits(self):
        logits = torch.zeros((4, 15, 257), dtype=torch.float64)
        targets = torch.randint(0, 257, (4, 15))
        assert float(args_loss(logits, targets)) == pytest.approx(math.log(257), abs=1e-9)

    def test_minimum_is_target_entropy(self):
        # Logits equal to log target distribution reach the entropy floor.
        target = soft_target(50, alpha=2.0, tol=3)
        with np.errstate(divide="ignore"):
            log_t = np.where(target > 0, np.log(np.maximum(target, 1e-300)), -1e9)
        logits = torch.from_numpy(np.tile(log_t, (1, 1, 1)))
        targets = torch.full((1, 1), 50)
        entropy = -np.sum(target[target > 0] * np.log(target[target > 0]))
        assert float(args_loss(logits, targets)) == pytest.approx(entropy, abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            args_loss(torch.zeros(3, 15, 257), torch.zeros(3, 14, dtype=torch.long))

    def test_windowed_path_matches_dense_formulation(self):
        rng = np.random.default_rng(17)
        logits = torch.from_numpy(rng.normal(size=(5, 15, 257)))
        targets = torch.from_numpy(rng.integers(0, 257, size=(5, 15)))
        got = args_loss(logits, targets, alpha=2.0, tol=3)
        dense = build_soft_targets(targets, dtype=torch.float64)
        want = -(dense * torch.log_softmax(logits, dim=-1)).sum(-1).mean()
        assert float(got) == pytest.approx(float(want), abs=1e-12)


class TestCmdLoss:
    def test_uniform_logits(self):
        logits = torch.zeros((5, 60, 6), dtype=torch.float64)
        kinds = torch.randint(0, 6, (5, 60))
        assert float(cmd_loss(logits, kinds)) == pytest.approx(math.log(6), abs=1e-9)

    def test_peaked_correct(self):
        kinds = torch.randint(0, 6, (60,))
        logits = torch.full((60, 6), -1e4, dtype=torch.float64)
        logits[torch.arange(60), kinds] = 1e4
        assert float(cmd_loss(logits, kinds)) == pytest.approx(0.0, abs=1e-8)

    def test_single_wrong_position_decomposes(self):
        n = 60
        kinds = torch.zeros(n, dtype=torch.long)
        logits = torch.full((n, 6), -1e4, dtype=torch.float64)
        logits[torch.arange(n), kinds] = 1e4
        # position 7 predicts uniformly: contributes CE = log 6 at weight 1/n
        logits[7] = 0.0
        assert float(cmd_loss(logits, kinds)) == pytest.approx(math.log(6) / n, abs=1e-9)


class TestTotalLoss:
    def test_arithmetic(self):
        assert float(total_loss(torch.tensor(1.0), torch.tensor(0.5), beta=2.0)) == pytest.approx(2.0)

    def test_zero_args(self):
        assert float(total_loss(torch.tensor(0.7), torch.tensor(0.0))) == pytest.approx(0.7)

    def test_beta_linearity(self):
        cmd = torch.tensor(1.0)
        args = torch.tensor(0.3)
        delta1 = float(total_loss(cmd, args, beta=2.0)) - float(cmd)
        delta2 = float(total_loss(cmd, args, beta=4.0)) - float(cmd)
        assert delta2 == pytest.approx(2 * delta1)

    def test_bad_beta(self):
        with pytest.raises(ValueError):
            total_loss(torch.tensor(1.0), torch.tensor(1.0), beta=0.0)
