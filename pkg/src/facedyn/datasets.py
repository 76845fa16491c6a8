"""Dataset ingestion, writing, and the synthetic generator.

Manifest CSV columns: sequence_id, subject_id, label, landmark_file_path,
n_landmarks.  Landmark CSV: one row per frame, columns x1,y1,...,xn,yn
(header optional), '.' decimal and ',' separator.
"""

from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path

import numpy as np

from .trajectory import RawSequence, default_region_map

MANIFEST_COLUMNS = ("sequence_id", "subject_id", "label", "landmark_file_path", "n_landmarks")


class IngestError(ValueError):
    """Aggregated per-file ingestion failures."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _read_landmark_csv(path: Path, n_landmarks: int) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for rowno, row in enumerate(reader, 1):
            row = [c for c in row if c.strip()]
            if not row:
                continue
            if rowno == 1 and any(not _is_number(c) for c in row):
                continue  # header row like x1,y1,...
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{rowno}: {exc}")
            if len(vals) != 2 * n_landmarks:
                raise ValueError(
                    f"{path}:{rowno}: expected {2 * n_landmarks} values, got {len(vals)}"
                )
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{rowno}: non-finite coordinate")
            rows.append(vals)
    if len(rows) < 2:
        raise ValueError(f"{path}: fewer than 2 frames")
    return np.array(rows).reshape(len(rows), n_landmarks, 2)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def ingest(manifest_path) -> list:
    """Load a dataset from a manifest; reports every offending file at once."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    problems = []
    dataset = []
    seen_ids = set()
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise IngestError([f"manifest missing columns: {sorted(missing)}"])
        for rowno, row in enumerate(reader, 2):
            sid = row["sequence_id"].strip()
            try:
                if sid in seen_ids:
                    raise ValueError(f"duplicate sequence_id {sid!r}")
                seen_ids.add(sid)
                label = float(row["label"])
                if not math.isfinite(label):
                    raise ValueError(f"non-finite label for {sid!r}")
                n = int(row["n_landmarks"])
                lm_path = Path(row["landmark_file_path"])
                if not lm_path.is_absolute():
                    lm_path = base / lm_path
                if not lm_path.exists():
                    raise ValueError(f"missing landmark file {lm_path}")
                frames = _read_landmark_csv(lm_path, n)
                dataset.append(
                    RawSequence(
                        sequence_id=sid,
                        subject_id=row["subject_id"].strip(),
                        label=label,
                        frames=frames,
                    )
                )
            except ValueError as exc:
                problems.append(f"manifest row {rowno} ({sid!r}): {exc}")
    if problems:
        raise IngestError(problems)
    if not dataset:
        raise IngestError(["manifest contains no sequences"])
    return dataset


def write_dataset(dataset, out_dir) -> Path:
    """Write landmark CSVs plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as mh:
        writer = csv.writer(mh)
        writer.writerow(MANIFEST_COLUMNS)
        for seq in dataset:
            fname = f"{seq.sequence_id}.csv"
            n = seq.n_landmarks
            with open(out_dir / fname, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([f"{a}{i + 1}" for i in range(n) for a in ("x", "y")])
                for frame in seq.frames:
                    w.writerow([repr(float(v)) for v in frame.reshape(-1)])
            writer.writerow([seq.sequence_id, seq.subject_id, repr(float(seq.label)), fname, n])
    return manifest_path


def dataset_hash(dataset) -> str:
    """Content hash covering ids, subjects, labels, and every coordinate."""
    h = hashlib.sha256()
    for seq in dataset:
        h.update(seq.sequence_id.encode())
        h.update(seq.subject_id.encode())
        h.update(np.float64(seq.label).tobytes())
        h.update(np.ascontiguousarray(seq.frames, dtype=np.float64).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


def _template_face(n_landmarks: int, rng) -> np.ndarray:
    """Neutral landmark layout: each region's points on its own arc."""
    regions = default_region_map(n_landmarks)
    centers = {
        "jaw": (0.0, -0.3),
        "eyes": (0.0, 0.35),
        "nose": (0.0, 0.05),
        "mouth": (0.0, -0.45),
    }
    radii = {"jaw": 0.9, "eyes": 0.45, "nose": 0.15, "mouth": 0.3}
    pts = np.zeros((n_landmarks, 2))
    for name in regions.names:
        idx = regions[name]
        cx, cy = centers.get(name, (0.0, 0.0))
        r = radii.get(name, 0.3)
        ang = np.linspace(-np.pi, 0.0, len(idx))
        pts[idx, 0] = cx + r * np.cos(ang)
        pts[idx, 1] = cy + r * np.sin(ang) * 0.6
    return pts


def synth(
    n_subjects: int,
    seqs_per_subject: int,
    n_landmarks: int = 68,
    levels: int = 5,
    seed: int = 0,
    n_frames: int = 48,
):
    """Deterministic synthetic dataset with label-dependent dynamics.

    Every sequence deforms a per-subject face template with
    region-localized oscillations whose amplitude and frequency grow
    monotonically with the integer label, plus small additive noise.
    """
    if min(n_subjects, seqs_per_subject, n_landmarks, levels) < 1:
        raise ValueError("all synth counts must be positive")
    rng = np.random.default_rng(seed)
    regions = default_region_map(n_landmarks)
    template = _template_face(n_landmarks, rng)
    dataset = []
    for s in range(n_subjects):
        subject_id = f"subj{s:03d}"
        subj_face = template + 0.03 * rng.standard_normal(template.shape)
        subj_scale = 1.0 + 0.1 * rng.standard_normal()
        for q in range(seqs_per_subject):
            label = (s * seqs_per_subject + q) % levels
            amp = 0.01 + 0.05 * label
            freq = 1.0 + 0.75 * label
            t = np.arange(n_frames)[:, None, None] / n_frames
            frames = np.repeat(subj_face[None] * subj_scale, n_frames, axis=0)
            for name in regions.names:
                idx = np.asarray(regions[name])
                phase = rng.uniform(0, 2 * np.pi)
                direction = rng.standard_normal((len(idx), 2))
                direction /= np.linalg.norm(direction, axis=1, keepdims=True)
                wave = amp * np.sin(2 * np.pi * freq * t[:, 0, 0] + phase)
                frames[:, idx, :] += wave[:, None, None] * direction[None]
            frames += 0.002 * rng.standard_normal(frames.shape)
            frames += rng.uniform(-5, 5, size=(1, 1, 2))  # arbitrary placement
            dataset.append(
                RawSequence(
                    sequence_id=f"{subject_id}_seq{q:03d}",
                    subject_id=subject_id,
                    label=float(label),
                    frames=frames,
                )
            )
    return dataset
