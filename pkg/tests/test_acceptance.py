"""End-to-end acceptance suite.

Each test checks one release criterion at its stated tolerance and prints
a single PASS line (run with ``pytest -s`` to see them inline); a pytest
failure is the corresponding FAIL line.
"""

import tempfile
import time

import numpy as np
import pytest

from facedyn import (
    alignment as al,
    curves,
    datasets,
    evaluation as ev,
    geometry as geo,
    reports,
    svr,
    trajectory as tj,
)
from facedyn.cache import KernelCache
from facedyn.config import ExperimentConfig
from facedyn.trajectory import Trajectory

from test_alignment import direct_dp, enumerate_paths, make_traj, random_traj
from test_svr import oracle_predictions, random_psd


def ok(n, text):
    print(f"\n[PASS] criterion {n}: {text}")


@pytest.fixture(scope="module")
def synth30():
    return datasets.synth(10, 3, n_landmarks=68, levels=5, seed=0, n_frames=24)


def test_criterion_01_distance_vs_rotation_grid():
    rng = np.random.default_rng(0)
    thetas = np.linspace(0.0, 2.0 * np.pi, 1_000_000, endpoint=False)
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    start = time.time()
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 41))
        a = rng.standard_normal((m, 2))
        b = rng.standard_normal((m, 2))
        d2 = geo.distance_squared(a, b)
        prod = a.T @ b
        apd = prod[0, 0] + prod[1, 1]
        cmb = prod[1, 0] - prod[0, 1]
        # min over the theta grid of ||a Q(theta) - b||^2
        grid_min = (
            float(np.sum(a * a) + np.sum(b * b))
            - 2.0 * float(np.max(apd * cos_t + cmb * sin_t))
        )
        worst = max(worst, abs(d2 - grid_min))
    elapsed = time.time() - start
    assert worst <= 1e-6
    assert elapsed < 10.0
    ok(1, f"closed-form distance matches theta-grid oracle "
          f"(1000 pairs, worst {worst:.2e}, {elapsed:.1f}s)")


def test_criterion_02_isometry_invariance():
    rng = np.random.default_rng(1)
    rm = tj.default_region_map(8)
    seqs = [
        tj.RawSequence(f"s{i}", f"u{i}", 0.0, rng.standard_normal((8, 8, 2)))
        for i in range(4)
    ]
    th = 1.234
    c, s = np.cos(th), np.sin(th)
    rot = np.array([[c, -s], [s, c]])
    shift = np.array([7.0, -2.0])
    moved = [
        tj.RawSequence(q.sequence_id, q.subject_id, q.label, q.frames @ rot.T + shift)
        for q in seqs
    ]
    base = [tj.build_trajectories(q, rm)["jaw"] for q in seqs]
    iso = [tj.build_trajectories(q, rm)["jaw"] for q in moved]
    worst = 0.0
    for a in range(4):
        for b in range(4):
            for i in range(len(base[a])):
                for j in range(len(base[b])):
                    d1 = geo.distance(base[a].points[i], base[b].points[j])
                    d2 = geo.distance(iso[a].points[i], iso[b].points[j])
                    worst = max(worst, abs(d1 - d2))
    assert worst < 1e-9
    flip = tj.build_trajectories(tj.flip_augment(seqs[0]), rm)["jaw"]
    change = sum(
        geo.distance(base[0].points[i], flip.points[i]) for i in range(len(flip))
    )
    assert change > 1e-3
    ok(2, f"rotation+translation invariant to {worst:.1e}; "
          f"reflection changes distances by {change:.2f}")


def test_criterion_03_gak_correctness():
    rng = np.random.default_rng(2)
    worst_enum = 0.0
    for _ in range(100):
        a = random_traj(rng, int(rng.integers(1, 7)), scale=0.5)
        b = random_traj(rng, int(rng.integers(1, 7)), scale=0.5)
        k = al.local_kernel(al.pairwise_distance_matrix(a, b), 0.7)
        got = al.gak_similarity(a, b, 0.7)
        want = enumerate_paths(k)
        worst_enum = max(worst_enum, abs(got - want) / abs(want))
    assert worst_enum <= 1e-9
    worst_dp = 0.0
    for _ in range(50):
        a = random_traj(rng, int(rng.integers(2, 21)), scale=0.4)
        b = random_traj(rng, int(rng.integers(2, 21)), scale=0.4)
        k = al.local_kernel(al.pairwise_distance_matrix(a, b), 0.7)
        got = al.gak_similarity(a, b, 0.7)
        want = direct_dp(k)
        worst_dp = max(worst_dp, abs(got - want) / abs(want))
    assert worst_dp <= 1e-6
    ok(3, f"GAK matches path enumeration (rel {worst_enum:.1e}) "
          f"and direct DP (rel {worst_dp:.1e})")


def test_criterion_04_kernel_psd(synth30):
    cfg = ExperimentConfig(strategy="late", lam=None)
    kernels = ev.compute_region_kernels(synth30, cfg)
    mats = dict(kernels)
    mats["early_fused"] = ev.early_fuse(
        kernels["jaw"], kernels["nose"], kernels["mouth"], kernels["eyes"]
    )
    worst = np.inf
    for name, mat in mats.items():
        eigs = np.linalg.eigvalsh(mat.values)
        assert eigs[0] >= -1e-8 * eigs[-1], name
        worst = min(worst, eigs[0] / eigs[-1])
    ok(4, f"4 region kernels + early fusion PSD "
          f"(worst min/max eigenvalue ratio {worst:.1e})")


def test_criterion_05_svr_vs_projected_gradient_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 11))
        k = random_psd(rng, n)
        y = rng.uniform(0, 5, n)
        model = svr.train(k, y, C=1.0, epsilon=0.1, tol=1e-6)
        pred = svr.predict_many(model, k)
        pred_oracle, _, _ = oracle_predictions(k, y, 1.0, 0.1)
        worst = max(worst, float(np.max(np.abs(pred - pred_oracle))))
    assert worst < 1e-3
    k = random_psd(rng, 8, jitter=1e-3)
    y = rng.uniform(0, 5, 8)
    model = svr.train(k, y, C=1e6, epsilon=0.5, tol=1e-6)
    residuals = np.abs(y - svr.predict_many(model, k))
    assert np.all(residuals <= 0.5 + 1e-3)
    ok(5, f"SVR matches projected-gradient oracle (max-norm {worst:.1e}); "
          f"epsilon-tube holds at C=1e6")


def test_criterion_06_curve_fitting_limits():
    rng = np.random.default_rng(4)
    worst_interp = 0.0
    for _ in range(5):
        pts = [rng.standard_normal((6, 2))]
        for _ in range(7):
            pts.append(pts[-1] + 0.1 * rng.standard_normal((6, 2)))
        traj = make_traj(np.stack(pts))
        curve = curves.fit(traj, 1e6)
        for i in range(len(traj)):
            d = geo.distance(curves.evaluate(curve, float(i)), traj.points[i])
            worst_interp = max(worst_interp, d)
    assert worst_interp < 1e-3
    violations = 0
    for _ in range(20):
        pts = [rng.standard_normal((6, 2))]
        for _ in range(6):
            pts.append(pts[-1] + 0.2 * rng.standard_normal((6, 2)))
        traj = make_traj(np.stack(pts))
        errs = []
        for lam in (10.0, 100.0, 1000.0):
            curve = curves.fit(traj, lam)
            errs.append(
                sum(
                    geo.distance_squared(
                        curves.evaluate(curve, float(i)), traj.points[i]
                    )
                    for i in range(len(traj))
                )
            )
        if not (errs[0] >= errs[1] - 1e-12 >= errs[2] - 2e-12):
            violations += 1
    assert violations == 0
    ok(6, f"lambda=1e6 interpolates to {worst_interp:.1e}; "
          f"fit error monotone in lambda on 20 trajectories")


def test_criterion_07_protocol_integrity(synth30):
    all_ids = sorted(s.sequence_id for s in synth30)
    for splits in (ev.loso_splits(synth30), ev.kfold_splits(synth30, 2)):
        tested = []
        for sp in splits:
            ev._assert_subject_disjoint(synth30, sp)
            tested.extend(sp.test_ids)
        assert sorted(tested) == all_ids
        assert len(tested) == len(set(tested))
    ok(7, "LOSO and k-fold splits subject-disjoint; "
          "every sequence tested exactly once")


def test_criterion_08_end_to_end_learning_signal():
    start = time.time()
    data = datasets.synth(20, 10, n_landmarks=68, levels=5, seed=0, n_frames=48)
    cache = KernelCache(tempfile.mkdtemp())
    cfg = ExperimentConfig(strategy="late", protocol="loso")
    best, table = ev.grid_search_hyperparams(
        data, cfg,
        sigma_grid=(0.5, 0.7), lam_grid=(None, 100.0), sampling_grid=(1.0,),
        cache=cache,
    )
    assert len(table) == 4
    report = ev.run_experiment(data, best, cache=cache)
    elapsed = time.time() - start
    ratio = report.mae / report.baseline_mae
    assert ratio <= 0.60
    assert elapsed < 600.0
    ok(8, f"late-fusion LOSO MAE {report.mae:.3f} = {100 * ratio:.0f}% of "
          f"constant-mean baseline {report.baseline_mae:.3f} in {elapsed:.0f}s")


def test_criterion_09_table_structures(tmp_path, synth30):
    # the published benchmark numbers come from access-restricted data and
    # unspecified SVR hyperparameters, so they are not reproducible here;
    # the emitted tables must match the published layouts so a user with
    # data access can slot in real results unchanged
    cfg = ExperimentConfig(strategy="whole_face", lam=None)
    best, table = ev.grid_search_hyperparams(
        synth30, cfg, sigma_grid=(0.7,), lam_grid=(None, 100.0),
        sampling_grid=(0.5, 1.0),
    )
    reports.write_hyperparam_table_csv(table, tmp_path / "hyper.csv")
    lines = (tmp_path / "hyper.csv").read_text().strip().splitlines()
    assert lines[0] == "sigma,lambda,sampling_0.5,sampling_1.0"
    assert len(lines) == 3  # one row per (sigma, lambda) pair
    report = ev.run_experiment(synth30, cfg)
    reports.write_results_table_csv({"whole_face": report}, tmp_path / "results.csv")
    rlines = (tmp_path / "results.csv").read_text().strip().splitlines()
    assert rlines[0] == "method,mae,rmse"
    assert len(rlines) == 2
    ok(9, "hyperparameter grid and method-comparison tables emitted in the "
          "published layouts (published MAE/RMSE not reproducible: "
          "restricted data, unspecified hyperparameters)")


def test_criterion_10_fusion_arithmetic():
    w = ev.FusionWeights(0.39, 0.56, 0.88, 0.94)
    fused = ev.late_fuse(4.0, 4.0, 4.0, 4.0, w)
    assert fused == 2.77
    ids = ["a", "b"]
    mats = [
        al.SimilarityMatrix(ids=list(ids), values=np.full((2, 2), v), region=r, sigma=0.7)
        for v, r in zip((1.0, 2.0, 3.0, 4.0), ("jaw", "nose", "mouth", "eyes"))
    ]
    early = ev.early_fuse(*mats)
    assert np.all(early.values == 2.5)
    ok(10, "late_fuse((4,4,4,4); w=(0.39,0.56,0.88,0.94)) == 2.77 exactly; "
           "early_fuse(1,2,3,4) == 2.5")
