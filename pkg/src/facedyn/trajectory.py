"""From raw landmark sequences to per-region factor trajectories.

Pipeline order is fixed: center -> (scale normalize) -> subsample ->
velocities -> region split -> stack.  Velocities are displacements between
retained frames, so subsampling changes their meaning consistently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

# 68-point layout: jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, mouth 48-67.
# The 66-point variant drops the two inner-lip corners (mouth ends at 65).
_REGIONS_68 = {
    "jaw": list(range(0, 17)),
    "eyes": list(range(17, 27)) + list(range(36, 48)),
    "nose": list(range(27, 36)),
    "mouth": list(range(48, 68)),
}

REGION_NAMES = ("jaw", "eyes", "nose", "mouth")


class RegionMapError(ValueError):
    pass


@dataclass(frozen=True)
class RegionMap:
    """Named, disjoint landmark index sets covering the four face regions."""

    regions: dict

    def __post_init__(self):
        seen = set()
        for name, idx in self.regions.items():
            if len(idx) == 0:
                raise RegionMapError(f"region {name!r} is empty")
            s = set(idx)
            if s & seen:
                raise RegionMapError(f"region {name!r} overlaps another region")
            if min(idx) < 0:
                raise RegionMapError(f"region {name!r} has negative indices")
            seen |= s

    def __getitem__(self, name):
        return self.regions[name]

    @property
    def names(self):
        return tuple(self.regions.keys())

    def validate_for(self, n_landmarks: int) -> None:
        for name, idx in self.regions.items():
            if max(idx) >= n_landmarks:
                raise RegionMapError(
                    f"region {name!r} index {max(idx)} out of range for "
                    f"{n_landmarks} landmarks"
                )

    def whole_face(self) -> "RegionMap":
        """Single all-landmark region, used by the whole-face baseline."""
        allidx = sorted(i for idx in self.regions.values() for i in idx)
        return RegionMap({"whole_face": allidx})


def default_region_map(n_landmarks: int) -> RegionMap:
    """Standard map for 68/66-point layouts; contiguous quarters otherwise."""
    if n_landmarks == 68:
        return RegionMap(dict(_REGIONS_68))
    if n_landmarks == 66:
        regions = dict(_REGIONS_68)
        regions["mouth"] = list(range(48, 66))
        return RegionMap(regions)
    if n_landmarks < 4:
        raise RegionMapError(f"need at least 4 landmarks, got {n_landmarks}")
    bounds = [round(i * n_landmarks / 4) for i in range(5)]
    return RegionMap(
        {
            name: list(range(bounds[i], bounds[i + 1]))
            for i, name in enumerate(REGION_NAMES)
        }
    )


@dataclass(frozen=True)
class RawSequence:
    """One video's landmark track with its per-sequence intensity label."""

    sequence_id: str
    subject_id: str
    label: float
    frames: np.ndarray  # (n_frames, n_landmarks, 2)
    augmented: bool = False

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=float)
        if f.ndim != 3 or f.shape[2] != 2:
            raise ValueError(f"frames must be (T, n, 2), got {f.shape}")
        if f.shape[0] < 2:
            raise ValueError("a sequence needs at least 2 frames")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"non-finite coordinates in {self.sequence_id}")
        object.__setattr__(self, "frames", f)

    @property
    def n_landmarks(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered factor sequence for one region of one raw sequence."""

    sequence_id: str
    subject_id: str
    label: float
    region: str
    points: np.ndarray  # (tau, m, 2), m = 2 * region landmark count
    times: np.ndarray  # strictly increasing, original frame indices

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]


def center_frame(z: np.ndarray) -> np.ndarray:
    """Remove the landmark center of mass from one frame."""
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        raise ValueError("empty frame")
    return z - z.mean(axis=0, keepdims=True)


def scale_normalize(z_centered: np.ndarray) -> np.ndarray:
    """Rescale a centered frame to unit Frobenius norm (zero stays zero)."""
    nrm = np.linalg.norm(z_centered)
    if nrm == 0.0:
        return z_centered
    return z_centered / nrm


def velocities(frames: np.ndarray) -> np.ndarray:
    """Per-frame displacements V_i = Z_{i+1} - Z_i; one shorter than input."""
    frames = np.asarray(frames, dtype=float)
    if frames.shape[0] < 2:
        raise ValueError("need at least 2 frames to form velocities")
    return frames[1:] - frames[:-1]


def subsample(frames: np.ndarray, rate: float) -> np.ndarray:
    """Keep every k-th frame, k = round(1/rate); frame 0 always kept."""
    frames = np.asarray(frames)
    if frames.shape[0] == 0:
        raise ValueError("no frames to subsample")
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"unsupported sampling rate {rate}")
    k = round(1.0 / rate)
    if k < 1 or abs(1.0 / k - rate) > 1e-9:
        raise ValueError(f"unsupported sampling rate {rate}")
    return frames[::k]


def subsample_indices(n_frames: int, rate: float) -> np.ndarray:
    k = round(1.0 / rate)
    return np.arange(n_frames)[::k]


def build_trajectories(
    seq: RawSequence,
    regions: RegionMap,
    sampling_rate: float = 1.0,
    scale: bool = True,
) -> dict:
    """Per-region factor trajectories [Z_region ; V_region] for one sequence.

    Returns a dict region name -> Trajectory of length tau (one less than
    the number of retained frames; the last retained frame only feeds the
    final velocity).
    """
    regions.validate_for(seq.n_landmarks)
    frames = np.stack([center_frame(z) for z in seq.frames])
    if scale:
        frames = np.stack([scale_normalize(z) for z in frames])
    idx = subsample_indices(frames.shape[0], sampling_rate)
    frames = frames[idx]
    if frames.shape[0] < 2:
        raise ValueError(
            f"sequence {seq.sequence_id}: fewer than 2 frames after subsampling"
        )
    vel = velocities(frames)
    pos = frames[:-1]
    times = idx[:-1].astype(float)
    out = {}
    for name in regions.names:
        ridx = np.asarray(regions[name], dtype=int)
        # positions rows first, velocity rows second: F = [Z ; V]
        points = np.concatenate([pos[:, ridx, :], vel[:, ridx, :]], axis=1)
        out[name] = Trajectory(
            sequence_id=seq.sequence_id,
            subject_id=seq.subject_id,
            label=seq.label,
            region=name,
            points=points,
            times=times,
        )
    return out


def flip_augment(seq: RawSequence) -> RawSequence:
    """Mirror a sequence along the horizontal axis (x -> -x)."""
    flipped = seq.frames.copy()
    flipped[:, :, 0] *= -1.0
    return replace(
        seq,
        sequence_id=seq.sequence_id + "+flip",
        frames=flipped,
        augmented=True,
    )


def augment_minority_classes(dataset, rule="below_mean", labels=None):
    """Add flipped copies of sequences in under-represented label classes.

    ``rule`` is either ``"below_mean"`` (classes with fewer sequences than
    the mean count per class) or ``"labels"`` (explicit label values passed
    via ``labels``).  Originals are kept untouched.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if rule == "below_mean":
        counts = {}
        for seq in dataset:
            counts[seq.label] = counts.get(seq.label, 0) + 1
        mean_count = len(dataset) / len(counts)
        target = {lab for lab, c in counts.items() if c < mean_count}
    elif rule == "labels":
        target = set(labels or [])
    else:
        raise ValueError(f"unknown augmentation rule {rule!r}")
    out = list(dataset)
    for seq in dataset:
        if seq.label in target and not seq.augmented:
            out.append(flip_augment(seq))
    return out
