"""Subject-independent evaluation: splits, fusion, grid searches, reports."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import alignment, curves, svr, trajectory as traj_mod

REGION_ORDER = ("jaw", "nose", "mouth", "eyes")  # late-fusion weight order


@dataclass(frozen=True)
class Split:
    """One cross-validation round; the three sets are subject-disjoint."""

    train_ids: tuple
    val_ids: tuple
    test_ids: tuple


@dataclass(frozen=True)
class FusionWeights:
    w_jaw: float
    w_nose: float
    w_mouth: float
    w_eyes: float

    def as_tuple(self):
        return (self.w_jaw, self.w_nose, self.w_mouth, self.w_eyes)


@dataclass
class ExperimentReport:
    """Predictions and error summary for one full protocol run."""

    sequence_ids: list
    subjects: list
    y_true: np.ndarray
    y_pred: np.ndarray
    mae: float
    rmse: float
    per_intensity_mae: dict
    fold_details: list
    strategy: str
    baseline_mae: float


def mae(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.size == 0 or y.shape != y_hat.shape:
        raise ValueError("mae needs equal-length nonempty inputs")
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.size == 0 or y.shape != y_hat.shape:
        raise ValueError("rmse needs equal-length nonempty inputs")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def _subjects_in_order(dataset):
    """Distinct subject ids in first-appearance order (evaluable subjects only)."""
    seen = []
    for seq in dataset:
        if seq.augmented:
            continue
        if seq.subject_id not in seen:
            seen.append(seq.subject_id)
    return seen


def _ids_for_subjects(dataset, subjects, include_augmented):
    subjects = set(subjects)
    return tuple(
        s.sequence_id
        for s in dataset
        if s.subject_id in subjects and (include_augmented or not s.augmented)
    )


def loso_splits(dataset) -> list:
    """One split per subject as test; validation is the next subject
    in dataset order (wrapping)."""
    subjects = _subjects_in_order(dataset)
    if len(subjects) < 3:
        raise ValueError(f"LOSO needs at least 3 subjects, got {len(subjects)}")
    splits = []
    for i, test_subj in enumerate(subjects):
        val_subj = subjects[(i + 1) % len(subjects)]
        train_subjs = [s for s in subjects if s not in (test_subj, val_subj)]
        splits.append(
            Split(
                train_ids=_ids_for_subjects(dataset, train_subjs, True),
                val_ids=_ids_for_subjects(dataset, [val_subj], False),
                test_ids=_ids_for_subjects(dataset, [test_subj], False),
            )
        )
    return splits


def kfold_splits(dataset, k: int) -> list:
    """Subjects split into consecutive blocks of k; each block is tested
    once with the cyclically preceding block as validation."""
    subjects = _subjects_in_order(dataset)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(subjects) < 3 * k:
        raise ValueError(
            f"k-fold with k={k} needs at least {3 * k} subjects, got {len(subjects)}"
        )
    blocks = [subjects[i : i + k] for i in range(0, len(subjects), k)]
    splits = []
    for b, test_block in enumerate(blocks):
        val_block = blocks[(b - 1) % len(blocks)]
        holdout = set(test_block) | set(val_block)
        train_subjs = [s for s in subjects if s not in holdout]
        splits.append(
            Split(
                train_ids=_ids_for_subjects(dataset, train_subjs, True),
                val_ids=_ids_for_subjects(dataset, val_block, False),
                test_ids=_ids_for_subjects(dataset, test_block, False),
            )
        )
    return splits


def early_fuse(k_jaw, k_nose, k_mouth, k_eyes) -> alignment.SimilarityMatrix:
    """Entrywise mean of the four region kernels (equal weights)."""
    mats = [k_jaw, k_nose, k_mouth, k_eyes]
    ids = mats[0].ids
    for m in mats[1:]:
        if m.ids != ids:
            raise ValueError("early fusion requires identical id ordering")
    values = sum(m.values for m in mats) / 4.0
    return alignment.SimilarityMatrix(
        ids=list(ids), values=values, region="early_fused", sigma=mats[0].sigma
    )


def late_fuse(y_jaw, y_nose, y_mouth, y_eyes, w: FusionWeights) -> float:
    """Weighted combination divided by 4 (literal formula, not by sum w)."""
    return (
        w.w_jaw * y_jaw + w.w_nose * y_nose + w.w_mouth * y_mouth + w.w_eyes * y_eyes
    ) / 4.0


WEIGHT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))


def grid_search_weights(
    region_preds: dict,
    y_val: np.ndarray,
    grid=WEIGHT_GRID,
    clamp: tuple | None = None,
) -> FusionWeights:
    """Exhaustive fusion-weight search minimizing validation MAE.

    ``region_preds`` maps region name -> predictions on the validation
    set.  Ties break to the lexicographically smallest tuple (the grid is
    enumerated in lexicographic order and the first minimum wins).
    """
    y_val = np.asarray(y_val, dtype=float)
    if y_val.size == 0:
        raise ValueError("empty validation set")
    p = np.stack([np.asarray(region_preds[r], dtype=float) for r in REGION_ORDER])
    combos = np.array(list(itertools.product(grid, repeat=4)))  # lex order
    fused = (combos @ p) / 4.0  # (n_combos, n_val)
    if clamp is not None:
        fused = np.clip(fused, clamp[0], clamp[1])
    maes = np.mean(np.abs(fused - y_val[None, :]), axis=1)
    best = int(np.argmin(maes))  # first occurrence = lexicographic smallest
    return FusionWeights(*combos[best])


def per_intensity_mae(y, y_hat) -> dict:
    """MAE per rounded ground-truth intensity level."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    out = {}
    levels = np.rint(y).astype(int)
    for lvl in sorted(set(levels.tolist())):
        mask = levels == lvl
        out[lvl] = float(np.mean(np.abs(y[mask] - y_hat[mask])))
    return out


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


def compute_region_kernels(dataset, cfg, cache=None):
    """Per-region (or product/whole-face) similarity matrices for a dataset.

    Returns a dict region -> SimilarityMatrix covering every sequence in
    ``dataset`` (augmented included), honoring the optional kernel cache.
    """
    regions = cfg.region_map(dataset[0].n_landmarks)
    if cfg.strategy == "whole_face":
        regions = regions.whole_face()
    names = regions.names

    def build_trajs(name_filter):
        per_seq = []
        for seq in dataset:
            trajs = traj_mod.build_trajectories(
                seq, regions, sampling_rate=cfg.sampling_rate, scale=cfg.scale_normalize
            )
            per_seq.append(
                {n: curves.smooth(t, cfg.lam) for n, t in trajs.items() if n in name_filter}
            )
        return per_seq

    kernels = {}
    if cfg.strategy == "product":
        key = None if cache is None else cache.key(cfg, dataset, "product")
        mat = None if cache is None else cache.get(key)
        if mat is None:
            per_seq = build_trajs(set(names))
            lists = [[d[n] for n in names] for d in per_seq]
            mat = alignment.build_similarity_matrix(
                lists, cfg.sigma, mode=cfg.distance_mode, region="product"
            )
            if cfg.normalize_kernel:
                mat.values = alignment.normalize_kernel(mat.values)
            if cache is not None:
                cache.put(key, mat)
        kernels["product"] = mat
        return kernels

    missing = []
    for name in names:
        key = None if cache is None else cache.key(cfg, dataset, name)
        mat = None if cache is None else cache.get(key)
        if mat is None:
            missing.append((name, key))
        else:
            kernels[name] = mat
    if missing:
        per_seq = build_trajs({n for n, _ in missing})
        for name, key in missing:
            trajs = [d[name] for d in per_seq]
            mat = alignment.build_similarity_matrix(trajs, cfg.sigma, mode=cfg.distance_mode)
            if cfg.normalize_kernel:
                mat.values = alignment.normalize_kernel(mat.values)
            if cache is not None:
                cache.put(key, mat)
            kernels[name] = mat
    return kernels


def _labels_for(dataset, ids):
    lab = {s.sequence_id: s.label for s in dataset}
    return np.array([lab[i] for i in ids])


def _train_and_predict(kernel, dataset, train_ids, out_ids, cfg, region=""):
    """Train one SVR on the train block and predict the out block."""
    k_train = kernel.submatrix(list(train_ids))
    y_train = _labels_for(dataset, train_ids)
    model = svr.train(
        k_train,
        y_train,
        C=cfg.svr_c,
        epsilon=cfg.svr_epsilon,
        tol=cfg.svr_tol,
        max_iter=cfg.svr_max_iter,
        training_ids=list(train_ids),
        region=region,
    )
    rows = kernel.submatrix(list(out_ids), list(train_ids))
    return svr.predict_many(model, rows), model


def run_experiment(dataset, cfg, cache=None) -> ExperimentReport:
    """Full protocol run for one configuration.

    Per fold: train per-strategy SVR(s) on the training block of the
    precomputed kernel(s), pick fusion weights on validation (late
    strategy only), and predict each test sequence exactly once.
    """
    splits = make_splits(dataset, cfg)
    for sp in splits:
        _assert_subject_disjoint(dataset, sp)
    kernels = compute_region_kernels(dataset, cfg, cache=cache)
    clamp = (cfg.label_lo, cfg.label_hi) if cfg.clamp_predictions else None

    all_ids, all_subj, all_true, all_pred, fold_details = [], [], [], [], []
    subj_of = {s.sequence_id: s.subject_id for s in dataset}
    baseline_abs = []
    for fold_idx, sp in enumerate(splits):
        y_train = _labels_for(dataset, sp.train_ids)
        y_test = _labels_for(dataset, sp.test_ids)
        detail = {"fold": fold_idx, "test_subjects": sorted({subj_of[i] for i in sp.test_ids})}
        if cfg.strategy == "late":
            val_preds, test_preds = {}, {}
            for region in REGION_ORDER:
                pv, _ = _train_and_predict(
                    kernels[region], dataset, sp.train_ids, sp.val_ids, cfg, region
                )
                pt, _ = _train_and_predict(
                    kernels[region], dataset, sp.train_ids, sp.test_ids, cfg, region
                )
                val_preds[region] = pv
                test_preds[region] = pt
            weights = grid_search_weights(
                val_preds, _labels_for(dataset, sp.val_ids), clamp=clamp
            )
            detail["weights"] = weights.as_tuple()
            y_hat = np.array(
                [
                    late_fuse(
                        test_preds["jaw"][i],
                        test_preds["nose"][i],
                        test_preds["mouth"][i],
                        test_preds["eyes"][i],
                        weights,
                    )
                    for i in range(len(sp.test_ids))
                ]
            )
        else:
            kernel = _strategy_kernel(kernels, cfg.strategy)
            y_hat, _ = _train_and_predict(
                kernel, dataset, sp.train_ids, sp.test_ids, cfg, cfg.strategy
            )
        if clamp is not None:
            y_hat = np.clip(y_hat, clamp[0], clamp[1])
        all_ids.extend(sp.test_ids)
        all_subj.extend(subj_of[i] for i in sp.test_ids)
        all_true.extend(y_test)
        all_pred.extend(y_hat)
        baseline_abs.extend(np.abs(y_test - y_train.mean()))
        fold_details.append(detail)

    y_true = np.array(all_true)
    y_pred = np.array(all_pred)
    return ExperimentReport(
        sequence_ids=all_ids,
        subjects=all_subj,
        y_true=y_true,
        y_pred=y_pred,
        mae=mae(y_true, y_pred),
        rmse=rmse(y_true, y_pred),
        per_intensity_mae=per_intensity_mae(y_true, y_pred),
        fold_details=fold_details,
        strategy=cfg.strategy,
        baseline_mae=float(np.mean(baseline_abs)),
    )


def _strategy_kernel(kernels, strategy):
    if strategy == "early":
        return early_fuse(
            kernels["jaw"], kernels["nose"], kernels["mouth"], kernels["eyes"]
        )
    if strategy in ("product", "whole_face"):
        return kernels["product" if strategy == "product" else "whole_face"]
    raise ValueError(f"unknown strategy {strategy!r}")


def make_splits(dataset, cfg):
    if cfg.protocol == "loso":
        return loso_splits(dataset)
    if cfg.protocol == "kfold":
        return kfold_splits(dataset, cfg.kfold_k)
    raise ValueError(f"unknown protocol {cfg.protocol!r}")


def _assert_subject_disjoint(dataset, sp: Split):
    subj = {s.sequence_id: s.subject_id for s in dataset}
    tr = {subj[i] for i in sp.train_ids}
    va = {subj[i] for i in sp.val_ids}
    te = {subj[i] for i in sp.test_ids}
    if tr & va or tr & te or va & te:
        raise AssertionError("split is not subject-disjoint")


def validation_mae(dataset, cfg, cache=None) -> float:
    """Pooled validation-set MAE across folds for one configuration.

    For the late strategy the best fusion weights found on the validation
    set itself are applied (this is a model-selection score, not a test
    score); other strategies use the raw single-model predictions.
    """
    splits = make_splits(dataset, cfg)
    kernels = compute_region_kernels(dataset, cfg, cache=cache)
    clamp = (cfg.label_lo, cfg.label_hi) if cfg.clamp_predictions else None
    y_all, p_all = [], []
    for sp in splits:
        y_val = _labels_for(dataset, sp.val_ids)
        if cfg.strategy == "late":
            val_preds = {}
            for region in REGION_ORDER:
                pv, _ = _train_and_predict(
                    kernels[region], dataset, sp.train_ids, sp.val_ids, cfg, region
                )
                val_preds[region] = pv
            w = grid_search_weights(val_preds, y_val, clamp=clamp)
            y_hat = np.array(
                [
                    late_fuse(
                        val_preds["jaw"][i],
                        val_preds["nose"][i],
                        val_preds["mouth"][i],
                        val_preds["eyes"][i],
                        w,
                    )
                    for i in range(len(sp.val_ids))
                ]
            )
        else:
            kernel = _strategy_kernel(kernels, cfg.strategy)
            y_hat, _ = _train_and_predict(
                kernel, dataset, sp.train_ids, sp.val_ids, cfg, cfg.strategy
            )
        if clamp is not None:
            y_hat = np.clip(y_hat, clamp[0], clamp[1])
        y_all.extend(y_val)
        p_all.extend(y_hat)
    return mae(y_all, p_all)


def grid_search_hyperparams(dataset, cfg, sigma_grid, lam_grid, sampling_grid, cache=None):
    """Validation MAE over the (sigma, lambda, sampling) grid.

    Returns (best_config, table) where table rows are dicts with the three
    hyperparameters and the pooled validation MAE; the minimizer breaks
    ties toward the earliest grid entry.
    """
    if not sigma_grid or not lam_grid or not sampling_grid:
        raise ValueError("empty hyperparameter grid")
    table = []
    best = None
    for sigma in sigma_grid:
        for lam in lam_grid:
            for rate in sampling_grid:
                c = cfg.with_updates(sigma=sigma, lam=lam, sampling_rate=rate)
                score = validation_mae(dataset, c, cache=cache)
                row = {
                    "sigma": sigma,
                    "lambda": "no_fitting" if lam is None else lam,
                    "sampling": rate,
                    "val_mae": score,
                }
                table.append(row)
                if best is None or score < best[0]:
                    best = (score, c)
    return best[1], table
