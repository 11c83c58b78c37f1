"""Acceptance criteria; each test prints one PASS/FAIL line before asserting."""
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from stackvaeg import baselines as bl
from stackvaeg import cli, data, detector, trainer
from stackvaeg import graphlearn as gl
from stackvaeg import nn
from stackvaeg.model import StackVAEG
from stackvaeg.stackvae import StackVaeConfig, param_count_formula

from conftest import tiny_model
from test_baselines import grid_lasso, toy3
from test_detector import _oracle_adjust
from test_graphlearn import _sort_oracle


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return emit


def test_c1_gradient_suite(report):
    t0 = time.perf_counter()
    model, rng = tiny_model(seed=0, n=3, l=8, m=4, h=8, embed_dim=4, k=2)
    X = rng.uniform(size=(4, 3, 8))
    noise = rng.standard_normal((4, 3, 4))
    res = nn.gradient_check(lambda: model.loss_and_grads(X, noise), model.named_parameters(), h=1e-5)
    dt = time.perf_counter() - t0
    report("C1 gradient suite", res.max_rel_error < 1e-4 and dt < 10,
           f"max rel error {res.max_rel_error:.2e} at {res.worst_param}{res.worst_index}, {dt:.2f}s")


def test_c2_adjacency_algebra(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_sum, bad_sets, over = 0.0, 0, 0
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        k = int(rng.integers(1, n + 1))
        A = rng.uniform(0, 3, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.8)
        if rng.uniform() < 0.2:
            A = np.round(A)  # force ties
        adj = gl.sparsify_and_normalize(A, k)
        worst_sum = max(worst_sum, np.abs(adj.matrix.sum(axis=1) - 1).max())
        bad_sets += sum(adj.kept_indices[i] != _sort_oracle(A[i], k) for i in range(n))
        over += int(((adj.matrix != 0).sum(axis=1) > k + 1).sum())
    dt = time.perf_counter() - t0
    report("C2 adjacency algebra", worst_sum <= 1e-9 and bad_sets == 0 and over == 0 and dt < 5,
           f"max |row sum - 1| {worst_sum:.1e}, top-k mismatches {bad_sets}, rows over k+1 {over}, {dt:.2f}s")


def _confusion(labels, pred):
    tp = fp = fn = 0
    for a, b in zip(labels, pred):
        tp += a and b
        fp += (not a) and b
        fn += a and not b
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


def test_c3_point_adjust_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches = worse = 0
    for _ in range(1000):
        n = int(rng.integers(1, 61))
        labels = (rng.uniform(size=n) < rng.uniform(0.1, 0.6)).astype(int)
        scores = rng.uniform(size=n)
        c = float(rng.uniform())
        pred = (scores > c).astype(int)
        adj = _oracle_adjust(labels.tolist(), pred.tolist())
        mismatches += det_mismatch(labels, scores, c, pred, adj)
        worse += _confusion(labels.tolist(), adj)[2] < _confusion(labels.tolist(), pred.tolist())[2]
    dt = time.perf_counter() - t0
    report("C3 point-adjust oracle", mismatches == 0 and worse == 0 and dt < 5,
           f"mismatches {mismatches}, adjusted below raw {worse}, {dt:.2f}s")


def det_mismatch(labels, scores, c, pred, adj):
    got = detector.point_adjust(labels, pred).tolist() != adj
    rep = detector.evaluate(labels, scores, c, adjust=True)
    raw = detector.evaluate(labels, scores, c, adjust=False)
    got |= (rep.precision, rep.recall, rep.f1) != _confusion(labels.tolist(), adj)
    got |= (raw.precision, raw.recall, raw.f1) != _confusion(labels.tolist(), pred.tolist())
    return int(got)


def test_c4_f1_arithmetic(report):
    # tp=9538, fn=462 gives R=0.9538; fp=438 gives P=0.95610 (rounds to 0.9561)
    tp, fp, fn, tn = 9538, 438, 462, 5000
    labels = np.r_[np.ones(tp + fn, int), np.zeros(fp + tn, int)]
    pred = np.r_[np.ones(tp, int), np.zeros(fn, int), np.ones(fp, int), np.zeros(tn, int)]
    rep = detector.evaluate(labels, pred.astype(float), 0.5, adjust=False)
    ok = round(rep.precision, 4) == 0.9561 and round(rep.recall, 4) == 0.9538 and abs(rep.f1 - 0.9550) <= 5e-4
    report("C4 F1 arithmetic", ok, f"P {rep.precision:.5f} R {rep.recall:.5f} F1 {rep.f1:.5f} (target 0.9550)")


def test_c5_weight_sharing(report):
    cfg = StackVaeConfig(100, 20, 40)
    counts, totals = [], []
    for n in (5, 55):
        model = StackVAEG.init(np.random.default_rng(0), cfg, gl.GraphConfig(n, top_k=5))
        counts.append(model.n_vae_params())
        totals.append(model.n_params())
    formula = param_count_formula(100, 40, 20)
    ok = counts[0] == counts[1] == formula and all(1e4 <= t < 1e6 for t in totals)
    report("C5 weight sharing", ok, f"VAE params {counts} vs formula {formula}; totals {totals}")


# shared end-to-end runs for criteria 6 and 7
E2E_SEED = 0
VC = StackVaeConfig(40, 8, None, 1e-4, 0.5)
GC = gl.GraphConfig(8, 16, 2.0, 4, 1.0)
HYPER = nn.TrainHyper(epochs=50)


@pytest.fixture(scope="module")
def e2e():
    spec = data.default_synthetic_spec(n_channels=8, n_groups=2, train_length=4000, test_length=4000,
                                       n_anomalies=10, seed=E2E_SEED)
    ds, group_of = data.generate_synthetic(spec, E2E_SEED)
    train, test = ds.slice_steps(0, 4000), ds.slice_steps(4000, ds.n_steps)
    runs, times = {}, {}
    for name, vc, gc in (("full", VC, GC), ("gamma0", replace(VC, fusion_ratio=0.0), GC),
                         ("lambda0", VC, replace(GC, graph_weight=0.0))):
        t0 = time.perf_counter()
        runs[name] = trainer.train(train, vc, gc, HYPER, E2E_SEED)
        times[name] = time.perf_counter() - t0
    return train, test, group_of, runs, times


def _f1(run, test):
    t = data.apply_normalizer(test, run.norm_stats)
    return detector.best_f1_threshold(t.labels, detector.score_series(t.values, run.model).scores)[1]


def structure_check(run, group_of):
    """Precision of kept neighbors per channel; passes only if some edges exist."""
    adj = run.model.adjacency()
    per = []
    for i in range(adj.n):
        nb = adj.neighbors(i)
        if nb:
            per.append(np.mean([group_of[j] == group_of[i] for j in nb]))
    pooled, isolated = gl.neighbor_precision(adj, group_of)
    ok = bool(per) and min(per) >= 0.9
    return ok, f"pooled precision {pooled:.3f}, worst channel {min(per) if per else float('nan'):.3f}, isolated {isolated}"


def test_c6_synthetic_detection(report, e2e):
    train, test, _, runs, times = e2e
    run = runs["full"]
    rep = _f1(run, test)
    first, last = run.loss_history[0][2], run.loss_history[-1][2]
    ok = rep.f1 >= 0.90 and last < 0.5 * first and times["full"] < 300
    report("C6 synthetic detection", ok,
           f"best point-adjust F1 {rep.f1:.4f}, L_total {first:.1f} -> {last:.1f}, {times['full']:.1f}s")


def test_c7_graph_recovery(report, e2e):
    _, _, group_of, runs, _ = e2e
    ok, detail = structure_check(runs["full"], group_of)
    report("C7 graph recovery (full model)", ok, detail)


def test_c7_gamma0_ablation_fails(report, e2e):
    _, _, group_of, runs, _ = e2e
    ok, detail = structure_check(runs["gamma0"], group_of)
    report("C7 gamma=0 ablation fails check", not ok, detail)


def test_c7_lambda0_ablation_fails(report, e2e):
    _, _, group_of, runs, _ = e2e
    ok, detail = structure_check(runs["lambda0"], group_of)
    report("C7 lambda=0 ablation fails check", not ok, detail)


def test_supporting_clean_window_error(report, e2e):
    _, test, _, runs, _ = e2e
    run = runs["full"]
    t = data.apply_normalizer(test, run.norm_stats)
    windows = data.window_array(t.values, 40, 40)
    hit = data.window_array(t.labels[None].astype(float), 40, 40)[:, 0].sum(axis=1) > 0
    clean = windows[~hit]
    mse = float(((run.model.reconstruct(clean) - clean) ** 2).mean())
    # the bound is stated for the raw noise level; express it in normalized units per channel
    span = run.norm_stats[1] - run.norm_stats[0]
    bound = float(np.mean(4 * (0.02 / span) ** 2))
    report("supporting: clean-window reconstruction", mse < bound, f"MSE {mse:.2e} < {bound:.2e}")


def test_supporting_fixed_graph_close(report, e2e):
    train, test, _, runs, _ = e2e
    norm = data.apply_normalizer(train, data.fit_normalizer(train))
    A = bl.lasso_adjacency(norm.values, bl.LassoConfig()).matrix
    fixed = bl.train_fixed_graph(train, A, VC, GC, HYPER, E2E_SEED)
    f_full, f_fixed = _f1(runs["full"], test).f1, _f1(fixed, test).f1
    report("supporting: lasso fixed graph vs learned", abs(f_full - f_fixed) <= 0.05,
           f"F1 learned {f_full:.4f}, fixed lasso graph {f_fixed:.4f}")


def test_c8_lasso_oracle(report):
    t0 = time.perf_counter()
    S = toy3()
    cfg = bl.LassoConfig(l1_weight=0.1)
    worst = max(np.abs(bl.lasso_regress_channel(S, n, cfg) - grid_lasso(S, n, 0.1)).max() for n in range(3))
    x = np.random.default_rng(1).normal(size=200)
    dup = bl.lasso_coefficients(np.stack([x, x]), bl.LassoConfig(l1_weight=0.0))
    dt = time.perf_counter() - t0
    ok = worst <= 0.02 and abs(dup[0, 1] - 1) < 1e-6 and abs(dup[1, 0] - 1) < 1e-6 and dt < 30
    report("C8 lasso oracle", ok, f"max |cd - grid| {worst:.4f}, duplicate weight {dup[0, 1]:.6f}, {dt:.2f}s")


PIPE = """\
synth_train_length = 1500
synth_test_length = 1500
synth_anomalies = 5
latent_dim = 8
top_k = 4
epochs = 5
"""


def _pipeline(cfg_path, out):
    for cmd in ("synth", "train", "score", "eval"):
        assert cli.main([cmd, "--config", str(cfg_path), "--out", str(out)]) == 0


def test_c9_determinism(report, tmp_path):
    cfg = tmp_path / "pipe.cfg"
    cfg.write_text(PIPE)
    _pipeline(cfg, tmp_path / "a")
    _pipeline(cfg, tmp_path / "b")
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("checkpoint.bin", "scores.csv", "metrics.json", "train_log.tsv")}
    report("C9 determinism", all(same.values()), ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))


SMD_DIR = os.environ.get("STACKVAEG_SMD_DIR")


@pytest.mark.skipif(not SMD_DIR, reason="set STACKVAEG_SMD_DIR to an SMD layout (train/, test/, test_label/)")
def test_c10_smd_integration(report):
    root = Path(SMD_DIR)
    machine = os.environ.get("STACKVAEG_SMD_MACHINE", "machine-1-1")
    train = data.load_csv(root / "train" / f"{machine}.txt")
    test = data.load_csv(root / "test" / f"{machine}.txt", root / "test_label" / f"{machine}.txt")
    n = train.n_channels
    run = trainer.train(train, StackVaeConfig(40, 20), gl.GraphConfig(n, 16, 2.0, 10, 1.0), nn.TrainHyper(), 0)
    rep = _f1(run, test)
    report("C10 SMD integration", rep.f1 >= 0.90, f"{machine}: best point-adjust F1 {rep.f1:.4f}")
