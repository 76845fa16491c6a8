"""Batch command-line interface.

Subcommands: validate, synth, kernel, gridsearch, evaluate, predict.
Each reads a flat key-value config file (``--config``) plus ``--set
key=value`` overrides and writes machine-readable CSV output.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import alignment, curves, datasets, evaluation, reports, svr
from . import trajectory as traj_mod
from .cache import KernelCache
from .config import ConfigError, load_config


def _load_cfg(config, overrides, seed=None):
    cfg = load_config(config, overrides)
    if seed is not None:
        cfg = cfg.with_updates(seed=seed)
    return cfg


def _load_dataset(manifest, cfg):
    dataset = datasets.ingest(manifest)
    if cfg.augment:
        dataset = traj_mod.augment_minority_classes(
            dataset, rule=cfg.augment_rule, labels=cfg.augment_labels
        )
    return dataset


def _cache_for(cfg, out=None):
    if cfg.cache_dir:
        return KernelCache(cfg.cache_dir)
    if out is not None:
        return KernelCache(Path(out) / "kernel_cache")
    return None


config_opt = click.option(
    "--config", type=click.Path(exists=True), default=None, help="flat key=value config file"
)
set_opt = click.option(
    "--set", "overrides", multiple=True, help="override a config key, e.g. alignment.sigma=0.5"
)
seed_opt = click.option("--seed", type=int, default=None, help="random seed override")
out_opt = click.option("--out", type=click.Path(), required=True, help="output directory")


@click.group()
def main():
    """Landmark-trajectory intensity estimation pipeline."""


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
def validate(manifest):
    """Check a manifest and every referenced landmark file."""
    try:
        dataset = datasets.ingest(manifest)
    except datasets.IngestError as exc:
        for problem in exc.problems:
            click.echo(f"ERROR: {problem}", err=True)
        sys.exit(1)
    subjects = {s.subject_id for s in dataset}
    click.echo(f"ok: {len(dataset)} sequences, {len(subjects)} subjects")


@main.command()
@click.option("--subjects", type=int, default=20)
@click.option("--seqs-per-subject", type=int, default=10)
@click.option("--landmarks", type=int, default=68)
@click.option("--levels", type=int, default=5)
@click.option("--frames", type=int, default=48)
@seed_opt
@out_opt
def synth(subjects, seqs_per_subject, landmarks, levels, frames, seed, out):
    """Generate a deterministic synthetic dataset plus manifest."""
    dataset = datasets.synth(
        subjects,
        seqs_per_subject,
        n_landmarks=landmarks,
        levels=levels,
        seed=seed if seed is not None else 0,
        n_frames=frames,
    )
    manifest = datasets.write_dataset(dataset, out)
    click.echo(f"wrote {len(dataset)} sequences to {manifest}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@config_opt
@set_opt
@seed_opt
@out_opt
def kernel(manifest, config, overrides, seed, out):
    """Compute (and cache) the per-region similarity kernels."""
    try:
        cfg = _load_cfg(config, overrides, seed)
    except ConfigError as exc:
        click.echo(f"ERROR: {exc}", err=True)
        sys.exit(1)
    dataset = _load_dataset(manifest, cfg)
    cache = _cache_for(cfg, out) or KernelCache(Path(out) / "kernel_cache")
    kernels = evaluation.compute_region_kernels(dataset, cfg, cache=cache)
    total = cache.hits + cache.misses
    for name, mat in kernels.items():
        click.echo(f"kernel {name}: {mat.values.shape[0]}x{mat.values.shape[1]}")
    click.echo(f"cache: {cache.hits}/{total} hits")


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@config_opt
@set_opt
@seed_opt
@out_opt
def gridsearch(manifest, config, overrides, seed, out):
    """Validation-MAE grid over (sigma, lambda, sampling)."""
    try:
        cfg = _load_cfg(config, overrides, seed)
    except ConfigError as exc:
        click.echo(f"ERROR: {exc}", err=True)
        sys.exit(1)
    dataset = _load_dataset(manifest, cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cache = _cache_for(cfg, out)
    best, table = evaluation.grid_search_hyperparams(
        dataset, cfg, cfg.sigma_grid, cfg.lam_grid, cfg.sampling_grid, cache=cache
    )
    reports.write_hyperparam_table_csv(table, out / "hyperparam_table.csv")
    lam = "no_fitting" if best.lam is None else best.lam
    click.echo(
        f"best: sigma={best.sigma} lambda={lam} sampling={best.sampling_rate}"
    )


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@config_opt
@set_opt
@seed_opt
@out_opt
@click.option("--save-models", is_flag=True, help="also fit and save full-dataset models")
def evaluate(manifest, config, overrides, seed, out, save_models):
    """Run the full cross-validation protocol and write the report."""
    try:
        cfg = _load_cfg(config, overrides, seed)
    except ConfigError as exc:
        click.echo(f"ERROR: {exc}", err=True)
        sys.exit(1)
    dataset = _load_dataset(manifest, cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cache = _cache_for(cfg, out)
    report = evaluation.run_experiment(dataset, cfg, cache=cache)
    reports.write_predictions_csv(report, out / "predictions.csv")
    reports.write_summary_csv(report, out / "summary.csv")
    reports.write_fold_details_csv(report, out / "folds.csv")
    reports.write_results_table_csv({cfg.strategy: report}, out / "results_table.csv")
    if save_models:
        _fit_and_save_models(dataset, cfg, cache, out / "models")
    click.echo(f"mae={report.mae:.4f} rmse={report.rmse:.4f}")


def _fit_and_save_models(dataset, cfg, cache, model_dir):
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    kernels = evaluation.compute_region_kernels(dataset, cfg, cache=cache)
    ids = [s.sequence_id for s in dataset]
    y = np.array([s.label for s in dataset])
    if cfg.strategy == "late":
        names = evaluation.REGION_ORDER
    else:
        names = [next(iter(kernels))] if cfg.strategy != "early" else ["early"]
        if cfg.strategy == "early":
            kernels = {"early": evaluation.early_fuse(
                kernels["jaw"], kernels["nose"], kernels["mouth"], kernels["eyes"]
            )}
    for name in names:
        model = svr.train(
            kernels[name].submatrix(ids),
            y,
            C=cfg.svr_c,
            epsilon=cfg.svr_epsilon,
            tol=cfg.svr_tol,
            max_iter=cfg.svr_max_iter,
            training_ids=ids,
            region=name,
        )
        reports.save_model(model, model_dir / f"model_{name}.json")


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--train-manifest", type=click.Path(exists=True), required=True)
@click.option("--models", "models_dir", type=click.Path(exists=True), required=True)
@config_opt
@set_opt
@seed_opt
@out_opt
def predict(manifest, train_manifest, models_dir, config, overrides, seed, out):
    """Apply saved models to new sequences."""
    try:
        cfg = _load_cfg(config, overrides, seed)
    except ConfigError as exc:
        click.echo(f"ERROR: {exc}", err=True)
        sys.exit(1)
    train_ds = _load_dataset(train_manifest, cfg)
    test_ds = datasets.ingest(manifest)
    models = {}
    for path in sorted(Path(models_dir).glob("model_*.json")):
        model = reports.load_model(path)
        models[model.region] = model
    if not models:
        click.echo("ERROR: no model_*.json files found", err=True)
        sys.exit(1)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    preds = _predict_new(train_ds, test_ds, models, cfg)
    with open(out / "predictions.csv", "w", newline="") as fh:
        fh.write("sequence_id,y_pred\n")
        for sid, val in preds:
            fh.write(f"{sid},{val!r}\n")
    click.echo(f"predicted {len(preds)} sequences")


def _predict_new(train_ds, test_ds, models, cfg):
    regions = cfg.region_map(train_ds[0].n_landmarks)
    if "whole_face" in models:
        regions = regions.whole_face()

    def trajs_for(ds, name):
        out = []
        for seq in ds:
            t = traj_mod.build_trajectories(
                seq, regions, sampling_rate=cfg.sampling_rate, scale=cfg.scale_normalize
            )[name]
            out.append(curves.smooth(t, cfg.lam))
        return out

    region_preds = {}
    for name, model in models.items():
        kernel_region = name if name != "early" else None
        names = [kernel_region] if kernel_region else list(regions.names)
        rows_by_region = []
        for rname in names:
            train_trajs = {t.sequence_id: t for t in trajs_for(train_ds, rname)}
            ordered = [train_trajs[sid] for sid in model.training_ids]
            test_trajs = trajs_for(test_ds, rname)
            rows = np.empty((len(test_trajs), len(ordered)))
            for i, tt in enumerate(test_trajs):
                for j, tr in enumerate(ordered):
                    rows[i, j] = alignment.gak_similarity(
                        tt, tr, cfg.sigma, mode=cfg.distance_mode
                    )
                if cfg.normalize_kernel:
                    self_t = alignment.gak_similarity(tt, tt, cfg.sigma, mode=cfg.distance_mode)
                    selfs = np.array(
                        [
                            alignment.gak_similarity(tr, tr, cfg.sigma, mode=cfg.distance_mode)
                            for tr in ordered
                        ]
                    )
                    rows[i] /= np.sqrt(self_t * selfs)
            rows_by_region.append(rows)
        rows = sum(rows_by_region) / len(rows_by_region)
        region_preds[name] = svr.predict_many(model, rows)

    n_test = len(test_ds)
    if set(region_preds) >= set(evaluation.REGION_ORDER):
        w = evaluation.FusionWeights(1.0, 1.0, 1.0, 1.0)
        fused = [
            evaluation.late_fuse(
                region_preds["jaw"][i],
                region_preds["nose"][i],
                region_preds["mouth"][i],
                region_preds["eyes"][i],
                w,
            )
            for i in range(n_test)
        ]
    else:
        only = next(iter(region_preds.values()))
        fused = list(only)
    if cfg.clamp_predictions:
        fused = [svr.clamp_prediction(v, cfg.label_lo, cfg.label_hi) for v in fused]
    return [(seq.sequence_id, float(v)) for seq, v in zip(test_ds, fused)]


if __name__ == "__main__":
    main()
