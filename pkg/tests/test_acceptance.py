"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines
as they complete. Criteria 6 and 7 train real models at the default desk
scale; criterion 7 runs five full two-arm experiments and dominates the
runtime (roughly 1.5 h on a 2-core box, under 30 minutes per experiment).
"""

import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from conftest import gradcheck_all_params, random_one_hot

from funduseg.edges import extract_edges
from funduseg.losses import FocalConfig, focal_loss_elements, focal_loss_tensor
from funduseg.metrics import dice_score, hausdorff, hausdorff_one_sided
from funduseg.net import (
    AdamState,
    UNetConfig,
    adam_step,
    backward,
    clip_gradients,
    forward,
    init_params,
)
from funduseg.pipeline import ExperimentConfig, compare, crossval, dataset_ids, preprocess, train
from funduseg.raster import ChannelStack
from funduseg.synth import SynthConfig, generate_sample
from funduseg.targets import build_edge_stack, decode_prediction, mask_planes

pytestmark = pytest.mark.acceptance


def report(criterion, ok, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, file=sys.stderr, flush=True)
    assert ok, line


def test_criterion_1_paper_numbers_out_of_scope():
    # full-dataset numbers (REFUGE/Drishti-GS tables) are not reproducible at
    # desk scale; the README must say so rather than promise them
    readme = (Path(__file__).parent.parent / "README.md").read_text()
    ok = "not" in readme.lower() and "synthetic" in readme.lower()
    report(1, ok, "README documents that published full-dataset numbers are out of scope")


def test_criterion_2_edge_oracle():
    t0 = time.time()
    n = 65536
    bits = np.arange(n, dtype=np.uint32)
    masks = ((bits[:, None] >> np.arange(16)) & 1).astype(np.int64).reshape(n, 4, 4)
    # vectorized 8-neighborhood boundary oracle over the whole batch
    pad = np.zeros((n, 6, 6), dtype=np.int64)
    pad[:, 1:5, 1:5] = masks
    nonfg = pad == 0
    has_bg_neighbor = np.zeros((n, 4, 4), dtype=bool)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            if dy == 1 and dx == 1:
                continue
            has_bg_neighbor |= nonfg[:, dy:dy + 4, dx:dx + 4]
    oracle = ((masks == 1) & has_bg_neighbor).astype(np.uint8)
    mismatches = sum(
        not np.array_equal(extract_edges(masks[k]), oracle[k]) for k in range(n)
    )
    rng = np.random.default_rng(20240102)
    for _ in range(1000):
        m = (rng.random((32, 32)) < rng.uniform(0.1, 0.9)).astype(np.int64)
        mp = np.zeros((34, 34), dtype=np.int64)
        mp[1:33, 1:33] = m
        nb = np.zeros((32, 32), dtype=bool)
        for dy in (0, 1, 2):
            for dx in (0, 1, 2):
                if dy == 1 and dx == 1:
                    continue
                nb |= mp[dy:dy + 32, dx:dx + 32] == 0
        want = ((m == 1) & nb).astype(np.uint8)
        mismatches += not np.array_equal(extract_edges(m), want)
    elapsed = time.time() - t0
    ok = mismatches == 0 and elapsed < 10.0
    report(2, ok, f"edge oracle: 65,536 exhaustive + 1,000 random masks, "
                  f"{mismatches} mismatches, {elapsed:.1f}s (< 10s)")


def test_criterion_3_focal_loss():
    # (a) hand value
    p = np.array([0.5])
    y = np.array([1.0])
    got = focal_loss_elements(p, y, np.array([0.9]), 2.0)[0]
    ok_a = abs(got - 0.9 * 0.25 * math.log(2.0)) < 1e-9
    # (b) gamma=0, alpha=0.5 equals half of an independent BCE, elementwise
    rng = np.random.default_rng(7)
    pr = rng.uniform(0.02, 0.98, size=(5, 6, 5))
    ta = (rng.random((5, 6, 5)) < 0.4).astype(float)
    elems = focal_loss_elements(pr, ta, np.full(5, 0.5), 0.0)
    bce = -(ta * np.log(pr) + (1 - ta) * np.log(1 - pr))
    ok_b = np.abs(elems - 0.5 * bce).max() < 1e-9
    # (c) analytic gradient vs central differences, 100 random instances
    alphas = FocalConfig().alphas_for(UNetConfig().roles())
    h, worst = 1e-4, 0.0
    for _ in range(100):
        pr = rng.uniform(0.05, 0.95, size=(1, 3, 4, 5))
        ta = random_one_hot(rng, (1, 3, 4), 5)
        _, grad = focal_loss_tensor(pr, ta, alphas, 2.0)
        i = tuple(rng.integers(0, s) for s in pr.shape)
        pp, pm = pr.copy(), pr.copy()
        pp[i] += h
        pm[i] -= h
        fd = (focal_loss_tensor(pp, ta, alphas, 2.0)[0] - focal_loss_tensor(pm, ta, alphas, 2.0)[0]) / (2 * h)
        worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-12))
    ok_c = worst < 1e-5
    report(3, ok_a and ok_b and ok_c,
           f"focal loss: hand value ok={ok_a}, 0.5*BCE reduction ok={ok_b}, "
           f"gradient vs finite differences worst rel {worst:.2e} (< 1e-5)")


def test_criterion_4_metric_identities():
    a = np.zeros((6, 6), dtype=np.uint8)
    a[1:4, 1:5] = 1
    checks = [dice_score(a, a) == 1.0]
    b = np.zeros((6, 6), dtype=np.uint8)
    b[5, 5] = 1
    checks.append(dice_score(a, b) == 0.0)
    pred = np.zeros(70, dtype=np.uint8)
    target = np.zeros(70, dtype=np.uint8)
    pred[:60] = 1
    target[:50] = 1
    target[60:] = 1
    checks.append(abs(dice_score(pred.reshape(7, 10), target.reshape(7, 10)) - 100 / 120) < 1e-12)
    checks.append(hausdorff_one_sided([(0, 0)], [(3, 4)]) == 5.0)

    def brute(xm, ym):
        xs, ys = np.argwhere(xm), np.argwhere(ym)
        d = lambda ps, qs: max(min(math.dist(p, q) for q in qs) for p in ps)
        return max(d(xs, ys), d(ys, xs))

    rng = np.random.default_rng(20240103)
    worst_dev = 0.0
    tri_violations = 0
    for _ in range(200):
        planes = []
        for _ in range(3):
            m = (rng.random((16, 16)) < 0.15).astype(np.uint8)
            if not m.any():
                m[rng.integers(0, 16), rng.integers(0, 16)] = 1
            planes.append(m)
        pa, pb, pc = planes
        hab, hbc, hac = hausdorff(pa, pb), hausdorff(pb, pc), hausdorff(pa, pc)
        worst_dev = max(
            worst_dev,
            abs(hab - brute(pa, pb)),
            abs(hab - hausdorff(pb, pa)),  # symmetry
            abs(hausdorff(pa, pa)),  # zero on identity
        )
        tri_violations += hac > hab + hbc + 1e-9
    ok = all(checks) and worst_dev < 1e-9 and tri_violations == 0
    report(4, ok, f"metric identities: dice/hausdorff examples ok={all(checks)}, "
                  f"200 triples: max deviation from brute force {worst_dev:.2e}, "
                  f"triangle violations {tri_violations}")


def test_criterion_5_network_gradient_check():
    t0 = time.time()
    rng = np.random.default_rng(20240104)
    cfg = UNetConfig(depth=1, base_filters=2, in_channels=3, out_channels=5)
    x = rng.random((2, 8, 8, 3))
    y = random_one_hot(rng, (2, 8, 8), 5)
    worst = gradcheck_all_params(cfg, x, y, seed=11)
    elapsed = time.time() - t0
    ok = worst < 1e-4 and elapsed < 60.0
    report(5, ok, f"end-to-end gradient check, all parameters of the tiny net: "
                  f"worst rel {worst:.2e} (< 1e-4) in {elapsed:.1f}s (< 60s)")


def test_criterion_6_overfit_two_samples():
    # overfit sanity exercises the training machinery, so the two samples use
    # crisp margins and light noise; the default generator keeps wide
    # ambiguous rims on purpose (that is what the directional experiment is
    # about) and boundary-ambiguous pixels are not a machinery defect
    cfg = UNetConfig(depth=3, base_filters=16)
    samples = [generate_sample(SynthConfig(seed=7, rim=0.25, noise=0.05), i) for i in range(2)]
    x = np.stack([s[0].data for s in samples]).astype(np.float32)
    y = np.stack([build_edge_stack(s[1]).data for s in samples]).astype(np.float32)
    alphas = FocalConfig().alphas_for(cfg.roles())
    params = init_params(cfg, seed=7)
    state = AdamState.for_params(params)
    first = None
    for _ in range(200):
        probs, cache = forward(params, cfg, x)
        loss, dprobs = focal_loss_tensor(probs, y, alphas, 2.0)
        if first is None:
            first = loss
        grads = clip_gradients(backward(params, cfg, cache, dprobs), 0.05)
        params, state = adam_step(params, grads, state, lr=0.01)
    probs, _ = forward(params, cfg, x)
    final, _ = focal_loss_tensor(probs, y, alphas, 2.0)
    dices = []
    for k in range(2):
        pred = ChannelStack(cfg.roles(), np.clip(probs[k].astype(np.float64), 0.0, 1.0))
        pd, pc = decode_prediction(pred)
        td, tc = mask_planes(samples[k][1])
        dices += [dice_score(pd, td), dice_score(pc, tc)]
    ok = final < 0.1 * first and all(d >= 0.95 for d in dices)
    report(6, ok, f"overfit 2 samples, 200 Adam steps at lr 0.01: "
                  f"loss {first:.4f} -> {final:.4f} (ratio {final / first:.3f} < 0.1), "
                  f"dice {['%.3f' % d for d in dices]} (all >= 0.95)")


def test_criterion_8_crossval_table(tmp_path):
    cfg = ExperimentConfig(
        images=50, train_size=64, depth=2, base_filters=8, epochs=2, batch=8,
        seed=11, folds=5, out=str(tmp_path / "cv"),
        disc_radius=(12.0, 20.0), cup_ratio=(0.4, 0.7), center_jitter=6.0,
    )
    preprocess(cfg)
    plan, fold_dice = crossval(cfg)
    csv1 = (tmp_path / "cv" / "crossval.csv").read_bytes()
    flat = [i for f in plan.folds for i in f]
    partition_ok = sorted(flat) == dataset_ids(cfg) and len(plan.folds) == 5
    sizes_ok = max(len(f) for f in plan.folds) - min(len(f) for f in plan.folds) <= 1
    header = csv1.decode().splitlines()[0]
    shape_ok = header == "mode,fold_1,fold_2,fold_3,fold_4,fold_5,average,median"
    # determinism: an identical second run writes identical bytes
    cfg2 = replace(cfg, out=str(tmp_path / "cv2"))
    preprocess(cfg2)
    crossval(cfg2)
    deterministic = (tmp_path / "cv2" / "crossval.csv").read_bytes() == csv1
    ok = partition_ok and sizes_ok and shape_ok and deterministic and len(fold_dice) == 5
    report(8, ok, f"5-fold crossval on 50 images: 5 fold dice values + average/median, "
                  f"partition ok={partition_ok}, deterministic={deterministic}")


def test_criterion_9_byte_identical_reruns(tmp_path):
    runs = []
    for name in ("r1", "r2"):
        cfg = ExperimentConfig(
            images=15, train_size=64, depth=2, base_filters=8, epochs=3, batch=4,
            seed=21, out=str(tmp_path / name),
            disc_radius=(12.0, 20.0), cup_ratio=(0.4, 0.7), center_jitter=6.0,
        )
        preprocess(cfg)
        train(cfg)
        from funduseg.pipeline import evaluate, read_split

        _, _, test_ids = read_split(Path(cfg.out) / "split.csv")
        evaluate(cfg, Path(cfg.out) / "ckpt_best.bin", test_ids, Path(cfg.out) / "metrics_test.csv")
        runs.append(Path(cfg.out))
    compared = []
    for rel in ("train_log.csv", "split.csv", "metrics_test.csv", "ckpt_best.bin",
                "ckpt_final.bin", "data/manifest.txt"):
        compared.append((runs[0] / rel).read_bytes() == (runs[1] / rel).read_bytes())
    ok = all(compared)
    report(9, ok, f"two runs of the same config+seed: {sum(compared)}/{len(compared)} "
                  f"artifacts byte-identical (CSVs, checkpoints)")


def test_criterion_7_directional_replication(tmp_path):
    # the heavyweight one: five full two-arm experiments at the default desk
    # scale; the paper's direction must hold for at least 4 of 5 seeds
    outcomes = []
    details = []
    for seed in (1, 2, 3, 4, 5):
        t0 = time.time()
        cfg = ExperimentConfig(seed=seed, out=str(tmp_path / f"seed{seed}"))
        table = compare(cfg)
        elapsed = time.time() - t0
        hd_ok = all(
            table[("edges", s)][2] <= table[("regions", s)][2] for s in ("disc", "cup")
        )
        dice_ok = all(
            table[("edges", s)][0] >= table[("regions", s)][0] - 0.02 for s in ("disc", "cup")
        )
        time_ok = elapsed <= 1800.0
        outcomes.append(hd_ok and dice_ok and time_ok)
        detail = (
            f"seed {seed}: HD disc {table[('edges', 'disc')][2]:.2f} vs {table[('regions', 'disc')][2]:.2f}, "
            f"cup {table[('edges', 'cup')][2]:.2f} vs {table[('regions', 'cup')][2]:.2f}; "
            f"dice disc {table[('edges', 'disc')][0]:.3f} vs {table[('regions', 'disc')][0]:.3f}, "
            f"cup {table[('edges', 'cup')][0]:.3f} vs {table[('regions', 'cup')][0]:.3f}; "
            f"{elapsed / 60:.1f} min -> {'ok' if outcomes[-1] else 'MISS'}"
        )
        details.append(detail)
        print("  " + detail, file=sys.stderr, flush=True)
    ok = sum(outcomes) >= 4
    report(7, ok, f"edge-integrated vs regions-only at default scale: "
                  f"{sum(outcomes)}/5 seeds satisfy the directional claim (need >= 4)")
