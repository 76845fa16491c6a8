"""CSV report writers and SVR model (de)serialization.

All outputs use '.' decimal, ',' separator, newline-terminated rows.
Float round-trips through these files are lossless (repr encoding).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .evaluation import ExperimentReport
from .svr import SvrModel


def write_predictions_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence_id", "subject_id", "y_true", "y_pred", "abs_error"])
        for sid, subj, yt, yp in zip(
            report.sequence_ids, report.subjects, report.y_true, report.y_pred
        ):
            w.writerow([sid, subj, repr(float(yt)), repr(float(yp)), repr(abs(float(yt - yp)))])


def write_summary_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        w.writerow(["strategy", report.strategy])
        w.writerow(["mae", repr(report.mae)])
        w.writerow(["rmse", repr(report.rmse)])
        w.writerow(["baseline_mae", repr(report.baseline_mae)])
        w.writerow(["n_sequences", len(report.sequence_ids)])
        for lvl, val in sorted(report.per_intensity_mae.items()):
            w.writerow([f"mae_intensity_{lvl}", repr(val)])


def write_fold_details_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "test_subjects", "w_jaw", "w_nose", "w_mouth", "w_eyes"])
        for d in report.fold_details:
            weights = d.get("weights", ("", "", "", ""))
            w.writerow([d["fold"], ";".join(d["test_subjects"]), *weights])


def write_hyperparam_table_csv(table, path) -> None:
    """Grid-search table: one row per (sigma, lambda), one column per
    sampling rate, best cell per row usable downstream."""
    rates = []
    for row in table:
        if row["sampling"] not in rates:
            rates.append(row["sampling"])
    cells = {(r["sigma"], r["lambda"], r["sampling"]): r["val_mae"] for r in table}
    pairs = []
    for row in table:
        key = (row["sigma"], row["lambda"])
        if key not in pairs:
            pairs.append(key)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sigma", "lambda"] + [f"sampling_{r}" for r in rates])
        for sigma, lam in pairs:
            w.writerow(
                [sigma, lam]
                + [repr(cells[(sigma, lam, r)]) for r in rates if (sigma, lam, r) in cells]
            )


def write_results_table_csv(reports: dict, path) -> None:
    """Method-comparison table: one row per strategy with MAE and RMSE."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "mae", "rmse"])
        for name, rep in reports.items():
            w.writerow([name, repr(rep.mae), repr(rep.rmse)])


def save_model(model: SvrModel, path) -> None:
    payload = {
        "training_ids": model.training_ids,
        "beta": [repr(float(b)) for b in model.beta],
        "bias": repr(float(model.bias)),
        "C": model.C,
        "epsilon": model.epsilon,
        "region": model.region,
        "kernel_hash": model.kernel_hash,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_model(path) -> SvrModel:
    payload = json.loads(Path(path).read_text())
    return SvrModel(
        training_ids=list(payload["training_ids"]),
        beta=np.array([float(b) for b in payload["beta"]]),
        bias=float(payload["bias"]),
        C=float(payload["C"]),
        epsilon=float(payload["epsilon"]),
        region=payload.get("region", ""),
        kernel_hash=payload.get("kernel_hash", ""),
    )
