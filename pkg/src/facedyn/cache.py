"""On-disk kernel cache keyed by every kernel-affecting parameter.

Entries are npz files named by a SHA-256 key; writes go through a
temporary file plus rename so concurrent folds never observe a partial
entry.  A stored key string is checked on read; any mismatch or corrupt
file counts as a miss.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .alignment import SimilarityMatrix
from .datasets import dataset_hash

CACHE_DIR_ENV = "FACEDYN_CACHE_DIR"


class KernelCache:
    def __init__(self, directory):
        env = os.environ.get(CACHE_DIR_ENV)
        self.directory = Path(env if env else directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._dataset_hashes = {}

    def key(self, cfg, dataset, region: str) -> str:
        ds_id = id(dataset)
        if ds_id not in self._dataset_hashes:
            self._dataset_hashes[ds_id] = dataset_hash(dataset)
        parts = repr((cfg.kernel_params(region), self._dataset_hashes[ds_id]))
        return hashlib.sha256(parts.encode()).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"kernel_{key}.npz"

    def get(self, key: str) -> SimilarityMatrix | None:
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            with np.load(path, allow_pickle=False) as data:
                if str(data["key"]) != key:
                    raise ValueError("key mismatch")
                mat = SimilarityMatrix(
                    ids=[str(s) for s in data["ids"]],
                    values=np.array(data["values"], dtype=float),
                    region=str(data["region"]),
                    sigma=float(data["sigma"]),
                )
        except Exception as exc:  # corrupt entry: treat as miss
            warnings.warn(f"ignoring unreadable cache entry {path.name}: {exc}")
            self.misses += 1
            return None
        self.hits += 1
        return mat

    def put(self, key: str, mat: SimilarityMatrix) -> None:
        path = self._path(key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        os.close(fd)
        try:
            with open(tmp, "wb") as fh:
                np.savez(
                    fh,
                    key=key,
                    ids=np.array(mat.ids, dtype=str),
                    values=mat.values,
                    region=mat.region,
                    sigma=mat.sigma,
                )
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
