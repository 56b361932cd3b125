"""End-to-end acceptance checks at their stated tolerances.

Every check prints one ``ACCEPTANCE <id> PASS|FAIL`` line (run with ``-s`` to
see them live; they are also echoed into the captured output of a failure).
"""

import math
import os
import time

import numpy as np
import pytest

from oamdetect.baseline import gradient_detect
from oamdetect.bpnn import residual_jacobian
from oamdetect.experiment import ExperimentConfig, run_experiment
from oamdetect.knn import knn_fit
from oamdetect.oam_signal import ModeSet, phase_features, receive_exact, receive_farfield, wrap_phase
from oamdetect.physics import LinkGeometry, UcaConfig, channel_matrix, offdiagonal_energy_ratio
from oamdetect.svm import kernel_matrix, solve_binary

from test_bpnn import random_model
from test_knn import random_set, scan_oracle
from test_svm import brute_force_dual


def verdict(cid, ok, detail):
    print(f"ACCEPTANCE {cid} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def timed_run(scenario, out_dir):
    cfg = ExperimentConfig.for_scenario(scenario, output_dir=str(out_dir))
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    res["elapsed"] = time.perf_counter() - t0
    res["cfg"] = cfg
    return res


@pytest.fixture(scope="module")
def single_run(tmp_path_factory):
    return timed_run("single-mode", tmp_path_factory.mktemp("single"))


@pytest.fixture(scope="module")
def multi_run(tmp_path_factory):
    return timed_run("multi-mode", tmp_path_factory.mktemp("multi"))


def accuracies(res):
    return {k: r.accuracy for k, r in res["reports"].items()}


def test_c1_single_mode_table(single_run):
    acc = accuracies(single_run)
    t = single_run["elapsed"]
    checks = [acc["bpnn"] >= 0.99, acc["svm"] >= 0.90, 0.80 <= acc["knn"] <= 1.00, t < 300]
    ok = verdict("1", all(checks),
                 f"BPNN={acc['bpnn']:.4f} (>=0.99) SVM={acc['svm']:.4f} (>=0.90) "
                 f"KNN={acc['knn']:.4f} (in [0.80,1.00]) runtime={t:.1f}s (<300s)")
    assert ok


def test_c2_multi_mode_table(multi_run):
    acc = accuracies(multi_run)
    checks = [acc["bpnn"] >= 0.99, acc["svm"] >= 0.90, 0.60 <= acc["knn"] <= 0.95]
    ok = verdict("2", all(checks),
                 f"BPNN={acc['bpnn']:.4f} (>=0.99) SVM={acc['svm']:.4f} (>=0.90) "
                 f"KNN={acc['knn']:.4f} (in [0.60,0.95])")
    assert ok


def test_c3_multi_mode_regression(multi_run):
    reg = multi_run["reports"]["bpnn"].regression
    ok = verdict("3", 0.95 <= reg["slope"] <= 1.05 and reg["r2"] >= 0.98,
                 f"slope={reg['slope']:.4f} (in [0.95,1.05]) R2={reg['r2']:.4f} (>=0.98)")
    assert ok


def test_c4_gradient_baseline_aligned_vs_tilted():
    cfg = ExperimentConfig()

    def geom(alpha_deg, theta0=0.0):
        return LinkGeometry(UcaConfig(8, 9.0), UcaConfig(10, cfg.r_rx, theta0), 300.0,
                            math.radians(alpha_deg))

    aligned = [gradient_detect(receive_exact(geom(0.0), ModeSet([m])), 10) for m in range(-3, 4)]
    aligned_ok = all(e.mode_estimate == m and e.is_valid() for e, m in zip(aligned, range(-3, 4)))
    failures = 0
    for m in range(-3, 4):
        for step in range(40):
            e = gradient_detect(receive_exact(geom(5.0, math.radians(9.0 * step)), ModeSet([m])), 10)
            failures += e.mode_estimate != m or not e.is_valid()
    ok = verdict("4", aligned_ok and failures > 0,
                 f"aligned exact for l=-3..3: {aligned_ok}; tilted 5deg failures: {failures}/280")
    assert ok


def test_c5_circulant_diagonalisation():
    g = LinkGeometry(UcaConfig(8, 9.0), UcaConfig(8, 9.0), 300.0, 0.0)
    ratio = offdiagonal_energy_ratio(channel_matrix(g).entries)
    ok = verdict("5", ratio < 1e-10, f"off-diagonal energy ratio={ratio:.3e} (<1e-10)")
    assert ok


def test_c6_far_field_validation():
    cfg = ExperimentConfig()
    rt, rr = cfg.r_tx, cfg.r_rx
    rows, ok_all, prev = [], True, math.inf
    for d in (600.0, 6000.0, 2e4):
        worst = 0.0
        for alpha in (0.0, 10.0, 25.0):
            g = LinkGeometry(UcaConfig(8, rt), UcaConfig(10, rr), d, math.radians(alpha))
            for modes in ([-3], [0], [2], [0, 1]):
                e = phase_features(receive_exact(g, ModeSet(modes)))
                f = phase_features(receive_farfield(g, ModeSet(modes)))
                worst = max(worst, float(np.max(np.abs(wrap_phase(e - f)))))
        bound = 2 * math.pi * (rt + rr) ** 2 / (2 * d)
        ok_all &= worst < bound and worst < prev
        prev = worst
        rows.append(f"D={d:g}: {worst:.3e} < {bound:.3e}")
    ok = verdict("6", ok_all, "; ".join(rows) + " (strictly decreasing)")
    assert ok


def test_c7_numerical_oracles():
    fd_worst = 0.0
    for seed in range(3):
        m = random_model(seed, d=10, h=10)
        u = np.random.default_rng(seed + 100).uniform(-1, 1, (6, 10))
        jac = residual_jacobian(m, u)
        w = m.params()
        for p in range(w.size):
            wp, wm = w.copy(), w.copy()
            wp[p] += 1e-6
            wm[p] -= 1e-6
            fd = (m.with_params(wp).forward_normalized(u)[0]
                  - m.with_params(wm).forward_normalized(u)[0]) / 2e-6
            fd_worst = max(fd_worst, float(np.max(np.abs(jac[:, p] - fd)) / max(np.max(np.abs(fd)), 1e-3)))

    rng = np.random.default_rng(42)
    x = rng.normal(size=(6, 2))
    y = np.array([1, 1, 1, -1, -1, -1], dtype=float)
    res = solve_binary(x, y, 1.0, "rbf", 0.7, tol=1e-10)
    qp_gap = abs(res.objective - brute_force_dual(y, kernel_matrix(x, x, "rbf", 0.7), 1.0))

    s = random_set(7)
    model = knn_fit(s, 1)
    q = np.random.default_rng(8).uniform(-math.pi, math.pi, (200, 10))
    knn_agree = all(g == scan_oracle(s.features, s.class_index, row, 1) for row, g in zip(q, model.predict(q)))

    ok = verdict("7", fd_worst < 1e-5 and qp_gap < 1e-6 and knn_agree,
                 f"jacobian rel err={fd_worst:.2e} (<1e-5) SVM dual gap={qp_gap:.2e} (<1e-6) "
                 f"KNN exhaustive agreement={knn_agree}")
    assert ok


def test_c8_deterministic_reports(multi_run, tmp_path):
    again = run_experiment(ExperimentConfig.for_scenario("multi-mode", output_dir=str(tmp_path)))
    assert again["reports"]
    first_dir = multi_run["cfg"].output_dir
    names = sorted(os.listdir(os.path.join(first_dir, "reports")))
    same = all(
        open(os.path.join(first_dir, "reports", n), "rb").read()
        == open(os.path.join(str(tmp_path), "reports", n), "rb").read()
        for n in names
    )
    ok = verdict("8", same and bool(names), f"{len(names)} JSON reports byte-identical: {same}")
    assert ok


def test_c9_training_properties(single_run, multi_run):
    parts, ok_all = [], True
    for name, res in (("single", single_run), ("multi", multi_run)):
        rep = res["detectors"]["bpnn"].report
        mono = all(after < before for before, after in rep.accepted)
        ok_all &= mono and rep.final_mse < 1e-3
        parts.append(f"{name}: monotone={mono} final_mse={rep.final_mse:.2e} (<1e-3)")
    ok = verdict("9", ok_all, "; ".join(parts))
    assert ok
