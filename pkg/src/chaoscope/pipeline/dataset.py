"""Labeled trajectory datasets on the standard-map phase-space grid."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import (
    ContainerError,
    GridSpec,
    MapId,
    StandardMapParams,
    grid_array,
    iterate_many,
    pack_container,
    unpack_container,
)
from ..lyapunov import (
    DEFAULT_BINS,
    DEFAULT_N_REF,
    HistogramSpec,
    labels_from_lambdas,
    standard_lyapunov_grid,
)
from ..seeds import sub_rng

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


def k_values(k_min, k_max, m_k):
    """Equidistant K grid, rounded to 12 decimals so 1.0..2.0 / 11 gives 1.1, 1.2, ..."""
    if m_k == 1:
        return np.array([float(k_min)])
    return np.round(np.linspace(k_min, k_max, m_k), 12)


@dataclass
class DatasetSpec:
    k_min: float
    k_max: float | None = None
    m_k: int = 1
    m_tr: int = 2081
    m_tt: int = 520
    n_k: int = 20
    n_ref: int = DEFAULT_N_REF
    seed: int = 0
    grid_size: int = 51
    bins: int = DEFAULT_BINS
    jacobian: str = "exact"

    def __post_init__(self):
        if self.k_max is None:
            self.k_max = self.k_min
        grid = self.grid_size ** 2
        problems = []
        if self.k_min > self.k_max:
            problems.append("k_min must not exceed k_max")
        if self.m_k < 1:
            problems.append("m_k must be >= 1")
        if self.m_k == 1 and self.k_min != self.k_max:
            problems.append("m_k = 1 requires k_min == k_max")
        if self.n_k < 1:
            problems.append("n_k must be >= 1")
        if min(self.m_tr, self.m_tt) < 0 or self.m_tr + self.m_tt > grid:
            problems.append(f"m_tr + m_tt must lie in [0, {grid}]")
        if self.n_ref < 2:
            problems.append("n_ref must be >= 2")
        if problems:
            raise DatasetError("; ".join(problems))

    @property
    def grid(self):
        return GridSpec(self.grid_size, self.grid_size, 1.0 / (self.grid_size - 1))

    @property
    def ks(self):
        return k_values(self.k_min, self.k_max, self.m_k)

    def to_dict(self):
        return asdict(self)


class ReferenceCache:
    """Memoizes reference exponents per (K, n_ref, grid, tangent mode).

    With a ``directory`` the arrays are also stored as .npy files there, so
    later runs skip the long tangent integrations. ``CHAOSCOPE_CACHE``
    supplies a default directory.
    """

    def __init__(self, directory=None):
        if directory is None:
            directory = os.environ.get("CHAOSCOPE_CACHE") or None
        self.directory = Path(directory) if directory else None
        self._mem = {}

    def _key(self, K, n_ref, grid, jacobian):
        return f"standard_K{K:.12g}_N{n_ref}_g{grid.rows}x{grid.cols}_s{grid.spacing:.12g}_{jacobian}"

    def cached(self, key, compute):
        """Return the array stored under ``key``, computing and storing it on a miss."""
        if key in self._mem:
            return self._mem[key]
        path = self.directory / f"{key}.npy" if self.directory else None
        if path is not None and path.exists():
            arr = np.load(path)
        else:
            arr = np.asarray(compute())
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp.npy")
                np.save(tmp, arr)
                tmp.replace(path)
        self._mem[key] = arr
        return arr

    def lambdas(self, K, n_ref, grid=GridSpec(), jacobian="exact"):
        def compute():
            S, _ = grid_array(grid)
            log.info("reference exponents K=%s N=%d (%d orbits)", K, n_ref, len(S))
            return standard_lyapunov_grid(K, S, [n_ref], jacobian=jacobian)[:, 0]

        return self.cached(self._key(K, n_ref, grid, jacobian), compute)


_DEFAULT_CACHE = None


def default_cache():
    global _DEFAULT_CACHE
    if _DEFAULT_CACHE is None:
        _DEFAULT_CACHE = ReferenceCache()
    return _DEFAULT_CACHE


@dataclass
class LabeledDataset:
    """Flat per-trajectory arrays; row order is grouped by parameter value.

    ``y`` holds 0 (regular), 1 (chaotic) or -1 (not scored). ``train`` marks
    the training partition; the rest is the test partition.
    """

    map_id: str
    param_name: str
    X: np.ndarray
    y: np.ndarray
    param: np.ndarray
    index: np.ndarray
    init: np.ndarray
    lam: np.ndarray
    train: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    @property
    def n_k(self):
        return self.X.shape[1]

    @property
    def channels(self):
        return self.X.shape[2]

    @property
    def params(self):
        return np.unique(self.param)

    def subset(self, mask):
        mask = np.asarray(mask)
        return LabeledDataset(self.map_id, self.param_name, self.X[mask], self.y[mask],
                              self.param[mask], self.index[mask], self.init[mask], self.lam[mask],
                              self.train[mask], dict(self.provenance))

    def partition(self, which):
        if which == "all":
            return self
        if which not in ("train", "test"):
            raise ValueError(f"partition must be train, test or all, not {which!r}")
        return self.subset(self.train if which == "train" else ~self.train)

    def with_trajectories(self, X):
        """Same labels and partitions, different inputs (e.g. projected channels)."""
        if len(X) != len(self):
            raise ValueError("replacement trajectories must keep the dataset size")
        return LabeledDataset(self.map_id, self.param_name, np.asarray(X), self.y, self.param,
                              self.index, self.init, self.lam, self.train, dict(self.provenance))

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        arrays = ("X", "y", "param", "index", "init", "lam", "train")
        return (self.map_id == other.map_id and self.param_name == other.param_name
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays))


def concat(datasets):
    ds = list(datasets)
    first = ds[0]
    return LabeledDataset(
        first.map_id, first.param_name,
        *(np.concatenate([getattr(d, a) for d in ds]) for a in
          ("X", "y", "param", "index", "init", "lam", "train")),
        provenance=dict(first.provenance),
    )


def build_dataset(spec: DatasetSpec, cache: ReferenceCache | None = None):
    """Grid trajectories at every K with reference labels and a seeded split.

    Per K: reference exponents at n_ref for all grid points, one histogram
    threshold, then a seeded permutation of the grid selects m_tr training and
    the next m_tt test points. Unselected points are dropped.
    """
    cache = cache or default_cache()
    grid = spec.grid
    S, idx = grid_array(grid)
    parts, thresholds = [], {}
    for K in spec.ks:
        lam = cache.lambdas(float(K), spec.n_ref, grid, spec.jacobian)
        ref = labels_from_lambdas(lam, float(K), HistogramSpec(spec.bins))
        thresholds[repr(float(K))] = ref.threshold
        perm = sub_rng(spec.seed, "split", repr(float(K))).permutation(len(S))
        chosen = np.sort(perm[:spec.m_tr + spec.m_tt])
        is_train = np.zeros(len(S), dtype=bool)
        is_train[perm[:spec.m_tr]] = True
        X = iterate_many(MapId.STANDARD, StandardMapParams(float(K)), S[chosen], spec.n_k)
        parts.append(LabeledDataset(
            "standard", "K", X, ref.labels[chosen].astype(np.int8), np.full(len(chosen), float(K)),
            idx[chosen], S[chosen], lam[chosen], is_train[chosen],
        ))
    out = concat(parts)
    out.provenance = {"spec": spec.to_dict(), "thresholds": thresholds}
    return out


# -- persistence ----------------------------------------------------------

_TRAJ = "trajectories.chsc"
_LABELS = "labels.csv"
_META = "dataset.json"


def _labels_csv(ds):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d0 = ds.init.shape[1]
    w.writerow(["row", ds.param_name, "i", "j"] + [f"s{c}" for c in range(d0)]
               + ["lambda_ref", "label", "partition"])
    for r in range(len(ds)):
        w.writerow([r, repr(float(ds.param[r])), int(ds.index[r, 0]), int(ds.index[r, 1])]
                   + [repr(float(v)) for v in ds.init[r]]
                   + [repr(float(ds.lam[r])), int(ds.y[r]), "train" if ds.train[r] else "test"])
    return buf.getvalue().encode()


def save_dataset(ds, directory):
    """Write container + label sidecar + metadata into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    blob = pack_container(ds.X)
    labels = _labels_csv(ds)
    (d / _TRAJ).write_bytes(blob)
    (d / _LABELS).write_bytes(labels)
    meta = {
        "format": "chaoscope-dataset",
        "version": DATASET_FORMAT_VERSION,
        "map": ds.map_id,
        "param_name": ds.param_name,
        "n": len(ds),
        "provenance": ds.provenance,
        "sha256": {_TRAJ: hashlib.sha256(blob).hexdigest(), _LABELS: hashlib.sha256(labels).hexdigest()},
    }
    (d / _META).write_text(json.dumps(meta, sort_keys=True, indent=1, default=float) + "\n")
    return d


def load_dataset(directory):
    d = Path(directory)
    for name in (_TRAJ, _LABELS, _META):
        if not (d / name).exists():
            raise DatasetError(f"dataset file {name} missing in {d}")
    meta = json.loads((d / _META).read_text())
    if meta.get("version") != DATASET_FORMAT_VERSION:
        raise DatasetError(f"dataset version {meta.get('version')} not supported")
    blob = (d / _TRAJ).read_bytes()
    labels = (d / _LABELS).read_bytes()
    for name, data in ((_TRAJ, blob), (_LABELS, labels)):
        if hashlib.sha256(data).hexdigest() != meta["sha256"][name]:
            raise DatasetError(f"checksum mismatch in {name}")
    try:
        X = unpack_container(blob)
    except ContainerError as exc:
        raise DatasetError(str(exc)) from None
    rows = list(csv.reader(io.StringIO(labels.decode())))[1:]
    if len(rows) != len(X):
        raise DatasetError("label sidecar and trajectory container disagree in length")
    n_state = len(rows[0]) - 7 if rows else X.shape[2]
    param = np.array([float(r[1]) for r in rows])
    index = np.array([[int(r[2]), int(r[3])] for r in rows], dtype=np.int64).reshape(-1, 2)
    init = np.array([[float(v) for v in r[4:4 + n_state]] for r in rows]).reshape(-1, n_state)
    lam = np.array([float(r[4 + n_state]) for r in rows])
    y = np.array([int(r[5 + n_state]) for r in rows], dtype=np.int8)
    train = np.array([r[6 + n_state] == "train" for r in rows], dtype=bool)
    return LabeledDataset(meta["map"], meta["param_name"], X, y, param, index, init, lam, train,
                          meta.get("provenance", {}))
