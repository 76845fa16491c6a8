"""Flat key-value experiment configuration.

Config files are plain ``key = value`` lines with dotted namespaces
(``alignment.sigma = 0.7``); '#' starts a comment.  Every key can also be
overridden from the command line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .trajectory import RegionMap, default_region_map


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # trajectory construction
    scale_normalize: bool = True
    sampling_rate: float = 1.0
    # curve fitting; None = no fitting
    lam: float | None = 100.0
    # alignment
    sigma: float = 0.7
    distance_mode: str = "squared"  # or "metric"
    normalize_kernel: bool = True
    # SVR
    svr_c: float = 1.0
    svr_epsilon: float = 0.1
    svr_tol: float = 1e-3
    svr_max_iter: int = 100_000
    # fusion / protocol
    strategy: str = "late"  # late | early | product | whole_face
    protocol: str = "loso"  # loso | kfold
    kfold_k: int = 5
    # labels
    label_lo: float = 0.0
    label_hi: float = 10.0
    clamp_predictions: bool = True
    # augmentation
    augment: bool = False
    augment_rule: str = "below_mean"  # below_mean | labels
    augment_labels: tuple = ()
    # explicit region override, e.g. {"jaw": "0-16", ...}; empty = default map
    region_spec: tuple = ()
    # hyperparameter grids
    sigma_grid: tuple = (0.5, 0.7, 0.9)
    lam_grid: tuple = (None, 10.0, 100.0, 1000.0)
    sampling_grid: tuple = (0.25, 0.5, 1.0)
    # misc
    cache_dir: str = ""
    seed: int = 0

    def with_updates(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)

    def region_map(self, n_landmarks: int) -> RegionMap:
        if self.region_spec:
            regions = {
                name: _parse_index_spec(spec) for name, spec in self.region_spec
            }
            rm = RegionMap(regions)
            rm.validate_for(n_landmarks)
            return rm
        return default_region_map(n_landmarks)

    def kernel_params(self, region: str) -> tuple:
        """Every parameter that affects a cached kernel's values."""
        return (
            region,
            self.sigma,
            self.lam,
            self.sampling_rate,
            self.distance_mode,
            self.normalize_kernel,
            self.scale_normalize,
            self.region_spec,
        )


def _parse_index_spec(spec: str):
    """'0-16' or '17-26,36-47' -> sorted index list (ranges inclusive)."""
    idx = []
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            idx.extend(range(int(lo), int(hi) + 1))
        elif part:
            idx.append(int(part))
    return sorted(idx)


def _parse_bool(key, raw):
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_lambda(raw):
    low = raw.strip().lower()
    if low in ("none", "no_fitting", "nofitting"):
        return None
    return float(raw)


def _parse_float_list(raw):
    return tuple(float(v) for v in raw.split(",") if v.strip())


def _parse_lambda_list(raw):
    return tuple(_parse_lambda(v) for v in raw.split(",") if v.strip())


# key -> (attribute, parser)
_KEYS = {
    "data.scale_normalize": ("scale_normalize", _parse_bool),
    "trajectory.sampling_rate": ("sampling_rate", lambda k, v: float(v)),
    "curve.lambda": ("lam", lambda k, v: _parse_lambda(v)),
    "alignment.sigma": ("sigma", lambda k, v: float(v)),
    "alignment.distance_mode": ("distance_mode", lambda k, v: v.strip()),
    "alignment.normalize_kernel": ("normalize_kernel", _parse_bool),
    "svr.c": ("svr_c", lambda k, v: float(v)),
    "svr.epsilon": ("svr_epsilon", lambda k, v: float(v)),
    "svr.tol": ("svr_tol", lambda k, v: float(v)),
    "svr.max_iter": ("svr_max_iter", lambda k, v: int(v)),
    "fusion.strategy": ("strategy", lambda k, v: v.strip()),
    "protocol.name": ("protocol", lambda k, v: v.strip()),
    "protocol.k": ("kfold_k", lambda k, v: int(v)),
    "labels.lo": ("label_lo", lambda k, v: float(v)),
    "labels.hi": ("label_hi", lambda k, v: float(v)),
    "labels.clamp": ("clamp_predictions", _parse_bool),
    "augment.enabled": ("augment", _parse_bool),
    "augment.rule": ("augment_rule", lambda k, v: v.strip()),
    "augment.labels": (
        "augment_labels",
        lambda k, v: tuple(float(x) for x in v.split(",") if x.strip()),
    ),
    "grid.sigma": ("sigma_grid", lambda k, v: _parse_float_list(v)),
    "grid.lambda": ("lam_grid", lambda k, v: _parse_lambda_list(v)),
    "grid.sampling": ("sampling_grid", lambda k, v: _parse_float_list(v)),
    "cache.dir": ("cache_dir", lambda k, v: v.strip()),
    "seed": ("seed", lambda k, v: int(v)),
}

_VALID_CHOICES = {
    "distance_mode": ("squared", "metric"),
    "strategy": ("late", "early", "product", "whole_face"),
    "protocol": ("loso", "kfold"),
    "augment_rule": ("below_mean", "labels"),
}


def parse_assignments(pairs, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key = value`` assignments on top of a base config."""
    cfg = base or ExperimentConfig()
    updates = {}
    region_spec = dict(cfg.region_spec)
    for key, raw in pairs:
        key = key.strip()
        if key.startswith("region."):
            region_spec[key[len("region.") :]] = raw.strip()
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        attr, parser = _KEYS[key]
        try:
            updates[attr] = parser(key, raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: invalid value {raw!r} ({exc})") from exc
    if region_spec:
        updates["region_spec"] = tuple(sorted(region_spec.items()))
    cfg = cfg.with_updates(**updates)
    for attr, choices in _VALID_CHOICES.items():
        if getattr(cfg, attr) not in choices:
            raise ConfigError(
                f"{attr}: must be one of {choices}, got {getattr(cfg, attr)!r}"
            )
    if cfg.sigma <= 0:
        raise ConfigError("alignment.sigma: must be positive")
    if cfg.lam is not None and cfg.lam <= 0:
        raise ConfigError("curve.lambda: must be positive or no_fitting")
    if cfg.label_lo > cfg.label_hi:
        raise ConfigError("labels.lo must not exceed labels.hi")
    return cfg


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a flat key-value file, then apply ``key=value`` overrides."""
    pairs = []
    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = line.split("=", 1)
            pairs.append((key, raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected 'key=value'")
        key, raw = item.split("=", 1)
        pairs.append((key, raw))
    return parse_assignments(pairs)
