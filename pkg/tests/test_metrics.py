"""Metric checks against brute-force counting and O(n^2) nearest-neighbor oracles."""

import numpy as np
import pytest

from svg2cad import cad
from svg2cad.cad import (
    CAD_PARAM_MASKS,
    NUM_CAD_PARAM_SLOTS,
    BoolOp,
    CadCommand,
    CadKind,
    ExtentMode,
    pad_cad,
)
from svg2cad.drawing import UNUSED
from svg2cad.metrics import (
    MetricsError,
    acc_cmd,
    acc_param,
    chamfer,
    evaluate_set,
    normalize_cloud_pair,
    report_to_text,
)


def chamfer_oracle(a, b):
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return d.min(axis=1).mean() + d.min(axis=0).mean()


def acc_cmd_oracle(pred, gt):
    n = len(gt.commands)
    return sum(int(p.kind == g.kind) for p, g in zip(pred.commands, gt.commands)) / n


def acc_param_oracle(pred, gt, eta):
    total, hits = 0, 0
    for p, g in zip(pred.commands, gt.commands):
        if p.kind != g.kind:
            continue
        for slot in range(NUM_CAD_PARAM_SLOTS):
            if CAD_PARAM_MASKS[g.kind][slot]:
                total += 1
                hits += int(abs(p.params[slot] - g.params[slot]) < eta)
    return None if total == 0 else hits / total


def random_sequence(rng, length=20):
    kinds = [CadKind(int(rng.integers(0, 5))) for _ in range(int(rng.integers(1, length)))]
    commands = []
    for kind in kinds:
        params = tuple(
            int(rng.integers(0, 257)) if used else UNUSED
            for used in CAD_PARAM_MASKS[kind]
        )
        commands.append(CadCommand(kind, params))
    return pad_cad(commands, length)


def simple_extrude(bool_op=int(BoolOp.NEW_BODY)):
    return cad.extrude(128, 128, 128, 128, 128, 64, 255, 128, bool_op, int(ExtentMode.ONE_SIDED))


def cube_sequence():
    return pad_cad([
        cad.sol(), cad.line(0, 0), cad.line(255, 0), cad.line(255, 255), cad.line(0, 255),
        simple_extrude(),
    ])


class TestAccCmd:
    def test_identical(self):
        seq = cube_sequence()
        assert acc_cmd(seq, seq) == 1.0

    def test_single_mismatch(self):
        gt = pad_cad([cad.sol(), cad.line(0, 0), cad.line(1, 1), simple_extrude()], 60)
        pred = pad_cad([cad.sol(), cad.line(0, 0), cad.arc(1, 1, 5, 0), simple_extrude()], 60)
        assert acc_cmd(pred, gt) == pytest.approx(59 / 60)

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            a, b = random_sequence(rng), random_sequence(rng)
            assert acc_cmd(a, b) == acc_cmd_oracle(a, b)

    def test_length_mismatch(self):
        with pytest.raises(MetricsError):
            acc_cmd(pad_cad([], 10), pad_cad([], 12))


class TestAccParam:
    def test_half_within_tolerance(self):
        gt = pad_cad([cad.line(10, 20)], 4)
        pred = pad_cad([cad.line(12, 24)], 4)
        assert acc_param(pred, gt, eta=3) == pytest.approx(0.5)

    def test_exact_match(self):
        seq = cube_sequence()
        assert acc_param(seq, seq) == 1.0

    def test_wrong_kind_excluded(self):
        gt = pad_cad([cad.line(10, 20), cad.line(0, 0)], 6)
        pred = pad_cad([cad.circle(10, 20, 5), cad.line(0, 0)], 6)
        # only the matching LINE at position 1 counts: 2 slots, both exact
        assert acc_param(pred, gt, eta=3) == 1.0

    def test_strict_inequality(self):
        gt = pad_cad([cad.line(10, 10)], 4)
        pred = pad_cad([cad.line(13, 10)], 4)
        assert acc_param(pred, gt, eta=3) == pytest.approx(0.5)

    def test_undefined_when_no_kind_matches(self):
        gt = pad_cad([cad.line(0, 0)], 4)
        pred = pad_cad([cad.circle(0, 0, 1)], 4)
        # padding EOS still matches but carries no parameters
        assert acc_param(pred, gt) is None

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            a, b = random_sequence(rng), random_sequence(rng)
            assert acc_param(a, b, eta=3) == acc_param_oracle(a, b, 3)


class TestChamfer:
    def test_self_distance_zero(self):
        pts = np.random.default_rng(0).normal(size=(100, 3))
        assert chamfer(pts, pts) == 0.0

    def test_unit_offset(self):
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[1.0, 0.0, 0.0]])
        assert chamfer(a, b) == pytest.approx(2.0)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(40, 3)), rng.normal(size=(60, 3))
        assert chamfer(a, b) == pytest.approx(chamfer(b, a), abs=0)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.normal(size=(rng.integers(1, 80), 3))
            b = rng.normal(size=(rng.integers(1, 80), 3))
            assert chamfer(a, b) == pytest.approx(chamfer_oracle(a, b), abs=1e-12)

    def test_monotone_under_translation(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(50, 3))
        b = rng.normal(size=(50, 3))
        values = [chamfer(a, b + np.array([dx, 0.0, 0.0])) for dx in np.linspace(5, 50, 8)]
        assert all(v1 <= v2 + 1e-12 for v1, v2 in zip(values, values[1:]))

    def test_empty_cloud_rejected(self):
        with pytest.raises(MetricsError):
            chamfer(np.zeros((0, 3)), np.zeros((5, 3)))


class TestNormalizePair:
    def test_unit_diagonal(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(0, 10, size=(100, 3))
        b = rng.uniform(-5, 3, size=(80, 3))
        na, nb = normalize_cloud_pair(a, b)
        joint = np.concatenate([na, nb])
        diag = np.linalg.norm(joint.max(axis=0) - joint.min(axis=0))
        assert diag == pytest.approx(1.0)
        assert joint.min() >= 0.0

    def test_scaling_invariance_of_relative_structure(self):
        a = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        b = np.array([[1.0, 0.0, 0.0]])
        na, nb = normalize_cloud_pair(a, b)
        assert chamfer(na, nb) == pytest.approx(chamfer(a, b) / 4.0)


class TestEvaluateSet:
    def test_perfect_predictions(self):
        gts = [cube_sequence() for _ in range(4)]
        report = evaluate_set(gts, gts, k=300, seed=0)
        assert report.acc_cmd == 1.0
        assert report.acc_param == 1.0
        assert report.ir == 0.0
        assert report.mcd == pytest.approx(0.0, abs=1e-12)
        assert report.n_valid == 4 and report.n_invalid == 0

    def test_half_invalid(self):
        good = cube_sequence()
        bad = pad_cad([simple_extrude()])
        report = evaluate_set([good, bad, good, bad], [good] * 4, k=200, seed=0)
        assert report.ir == pytest.approx(0.5)
        assert report.n_invalid == 2

    def test_empty_input_rejected(self):
        with pytest.raises(MetricsError):
            evaluate_set([], [], k=10, seed=0)

    def test_report_text_scaling(self):
        gts = [cube_sequence()]
        report = evaluate_set(gts, gts, k=100, seed=0)
        text = report_to_text(report)
        assert "acc_cmd = 100.0000" in text
        assert "ir = 0.0000" in text
        assert "samples = 1" in text
