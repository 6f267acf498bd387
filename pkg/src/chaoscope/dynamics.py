"""Discrete maps, trajectories, and phase-space grids.

Three maps are supported: the standard (kicked rotor) map on the unit torus,
the logistic map on [0, 1] and a discretized Lorenz system. Everything here
runs in float64.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class MapId(str, Enum):
    STANDARD = "standard"
    LOGISTIC = "logistic"
    LORENZ = "lorenz"


class PhaseState2D(NamedTuple):
    p: float
    x: float


@dataclass(frozen=True)
class StandardMapParams:
    K: float

    def __post_init__(self):
        if not self.K >= 0:
            raise ValueError(f"kick strength must be >= 0, got {self.K}")

    def to_dict(self):
        return {"K": self.K}


@dataclass(frozen=True)
class LogisticParams:
    r: float

    def __post_init__(self):
        if not 0.0 <= self.r <= 4.0:
            raise ValueError(f"logistic r must lie in [0, 4], got {self.r}")

    def to_dict(self):
        return {"r": self.r}


@dataclass(frozen=True)
class LorenzParams:
    """Discrete Lorenz parameters.

    ``form="printed"`` (default) iterates the Y update with a ``-delta*Z``
    damping term; ``form="euler"`` switches to the conventional explicit Euler step
    ``Y + delta*(rho*X - X*Z - Y)``.
    """

    rho: float = 28.0
    sigma: float = 10.0
    beta: float = 8.0 / 3.0
    delta: float = 0.001
    form: str = "printed"

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.form not in ("printed", "euler"):
            raise ValueError(f"unknown Lorenz form {self.form!r}")

    def to_dict(self):
        return {"rho": self.rho, "sigma": self.sigma, "beta": self.beta,
                "delta": self.delta, "form": self.form}


_PARAM_TYPES = {
    MapId.STANDARD: StandardMapParams,
    MapId.LOGISTIC: LogisticParams,
    MapId.LORENZ: LorenzParams,
}
_CHANNELS = {MapId.STANDARD: 2, MapId.LOGISTIC: 1, MapId.LORENZ: 3}


def params_from_dict(map_id, d):
    return _PARAM_TYPES[MapId(map_id)](**d)


@dataclass
class Trajectory:
    """A length-N series of d-dimensional states, row n being the n-th iterate."""

    map_id: MapId
    params: object
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.map_id = MapId(self.map_id)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2:
            raise ValueError("trajectory values must be an N x d matrix")

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.map_id == other.map_id and self.params == other.params
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class GridSpec:
    rows: int = 51
    cols: int = 51
    spacing: float = 1.0 / 50.0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("grid needs at least 2 rows and 2 columns")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def size(self):
        return self.rows * self.cols


def wrap_unit(v):
    """Reduce modulo 1 onto the half-open interval [0, 1)."""
    r = np.mod(v, 1.0)
    # np.mod of a tiny negative number rounds up to exactly 1.0
    return np.where(r >= 1.0, 0.0, r)


def _wrap_scalar(v):
    r = v % 1.0
    return 0.0 if r >= 1.0 else r


def standard_map_step(state, params):
    p, x = state
    K = params.K if isinstance(params, StandardMapParams) else float(params)
    p_new = _wrap_scalar(p + K / TWO_PI * math.sin(TWO_PI * x))
    x_new = _wrap_scalar(x + p_new)
    return PhaseState2D(p_new, x_new)


def logistic_step(x, params):
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"logistic state must lie in [0, 1], got {x}")
    r = params.r if isinstance(params, LogisticParams) else float(params)
    return min(max(r * x * (1.0 - x), 0.0), 1.0)


def lorenz_step(state, params):
    X, Y, Z = state
    s, r, b, d = params.sigma, params.rho, params.beta, params.delta
    X_new = X + s * d * (Y - X)
    if params.form == "printed":
        Y_new = Y + r * d * X - d * X * Z - d * Z
    else:
        Y_new = Y + d * (r * X - X * Z - Y)
    Z_new = Z + d * X * Y - b * d * Z
    return (X_new, Y_new, Z_new)


def _step_many(map_id, params, S):
    """One vectorized step for a batch of states S of shape (M, d)."""
    if map_id is MapId.STANDARD:
        p, x = S[:, 0], S[:, 1]
        p_new = wrap_unit(p + params.K / TWO_PI * np.sin(TWO_PI * x))
        x_new = wrap_unit(x + p_new)
        return np.stack([p_new, x_new], axis=1)
    if map_id is MapId.LOGISTIC:
        x = S[:, 0]
        # clip guards a one-ulp overshoot past 1 near x = 0.5
        return np.clip(params.r * x * (1.0 - x), 0.0, 1.0)[:, None]
    X, Y, Z = S[:, 0], S[:, 1], S[:, 2]
    s, r, b, d = params.sigma, params.rho, params.beta, params.delta
    X_new = X + s * d * (Y - X)
    if params.form == "printed":
        Y_new = Y + r * d * X - d * X * Z - d * Z
    else:
        Y_new = Y + d * (r * X - X * Z - Y)
    Z_new = Z + d * X * Y - b * d * Z
    return np.stack([X_new, Y_new, Z_new], axis=1)


def _check_params(map_id, params):
    map_id = MapId(map_id)
    expected = _PARAM_TYPES[map_id]
    if not isinstance(params, expected):
        raise TypeError(f"{map_id.value} map needs {expected.__name__}, got {type(params).__name__}")
    return map_id


def iterate_many(map_id, params, initial_states, N):
    """Iterate M initial states for N rows; returns an (M, N, d) array."""
    map_id = _check_params(map_id, params)
    if N < 1:
        raise ValueError("trajectory length N must be >= 1")
    S = np.array(initial_states, dtype=np.float64, ndmin=2)
    d = _CHANNELS[map_id]
    if map_id is MapId.LOGISTIC and S.shape[0] == 1 and S.shape[1] != 1:
        S = S.T
    if S.shape[1] != d:
        raise ValueError(f"{map_id.value} states have {d} coordinates, got {S.shape[1]}")
    if map_id is MapId.LOGISTIC and ((S < 0) | (S > 1)).any():
        raise ValueError("logistic initial states must lie in [0, 1]")
    out = np.empty((S.shape[0], N, d))
    out[:, 0] = S
    for n in range(1, N):
        S = _step_many(map_id, params, S)
        out[:, n] = S
    return out


def iterate(map_id, params, initial_state, N):
    """Trajectory of length N whose row 0 is ``initial_state``."""
    values = iterate_many(map_id, params, [np.atleast_1d(np.asarray(initial_state, float))], N)[0]
    return Trajectory(MapId(map_id), params, values)


def grid_initial_conditions(spec=GridSpec()):
    """Row-major grid points (p_i, x_j) = (i*spacing, j*spacing), i, j from 0."""
    return [PhaseState2D(i * spec.spacing, j * spec.spacing)
            for i in range(spec.rows) for j in range(spec.cols)]


def grid_array(spec=GridSpec()):
    """Grid as an (rows*cols, 2) array plus the matching (i, j) index array."""
    i, j = np.meshgrid(np.arange(spec.rows), np.arange(spec.cols), indexing="ij")
    idx = np.stack([i.ravel(), j.ravel()], axis=1)
    return idx * spec.spacing, idx


def project_channels(t, channel_indices):
    idx = list(channel_indices)
    if len(set(idx)) != len(idx):
        raise ValueError("channel indices must be distinct")
    for c in idx:
        if not 0 <= c < t.channels:
            raise IndexError(f"channel {c} out of range for {t.channels}-channel trajectory")
    return Trajectory(t.map_id, t.params, t.values[:, idx])


def normalize_values(values, axis=-2):
    """Min-max scale each channel onto [0, 1] along the time axis.

    Constant channels map to 0.5.
    """
    v = np.asarray(values, dtype=np.float64)
    lo = v.min(axis=axis, keepdims=True)
    hi = v.max(axis=axis, keepdims=True)
    span = hi - lo
    flat = span == 0
    scaled = (v - lo) / np.where(flat, 1.0, span)
    return np.where(flat, 0.5, scaled)


def normalize_trajectory(t):
    return Trajectory(t.map_id, t.params, normalize_values(t.values))


# -- export ---------------------------------------------------------------

def trajectory_to_csv(t, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["map", "param_json", "step"] + [f"c{c}" for c in range(t.channels)])
    pj = json.dumps(t.params.to_dict(), sort_keys=True)
    for n, row in enumerate(t.values):
        w.writerow([t.map_id.value, pj, n] + [repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def trajectory_from_csv(path_or_text):
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if header[:3] != ["map", "param_json", "step"]:
        raise ValueError("not a trajectory CSV")
    map_id = MapId(body[0][0])
    params = params_from_dict(map_id, json.loads(body[0][1]))
    values = np.array([[float(v) for v in r[3:]] for r in body])
    return Trajectory(map_id, params, values)


CONTAINER_MAGIC = b"CHSC"
CONTAINER_VERSION = 1
# magic, version u16, channels u16, length u32, count u32, crc32 u32
_CONTAINER_HEADER = struct.Struct("<4sHHIII")


class ContainerError(ValueError):
    """Corrupt, truncated, or version-mismatched binary container."""


def pack_container(values):
    """Serialize a (count, length, channels) float64 block."""
    a = np.asarray(values, dtype="<f8")
    if a.ndim == 2:
        a = a[None]
    count, length, channels = a.shape
    payload = np.ascontiguousarray(a).tobytes()
    head = _CONTAINER_HEADER.pack(CONTAINER_MAGIC, CONTAINER_VERSION, channels, length,
                                  count, zlib.crc32(payload))
    return head + payload


def unpack_container(blob):
    if len(blob) < _CONTAINER_HEADER.size:
        raise ContainerError("container truncated before header end")
    magic, version, channels, length, count, crc = _CONTAINER_HEADER.unpack_from(blob)
    if magic != CONTAINER_MAGIC:
        raise ContainerError("bad magic bytes")
    if version != CONTAINER_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    payload = blob[_CONTAINER_HEADER.size:]
    if len(payload) != 8 * channels * length * count:
        raise ContainerError("container payload has the wrong size")
    if zlib.crc32(payload) != crc:
        raise ContainerError("container checksum mismatch")
    return np.frombuffer(payload, dtype="<f8").reshape(count, length, channels).astype(np.float64)


def save_trajectories(path, values):
    Path(path).write_bytes(pack_container(values))


def load_trajectories(path):
    return unpack_container(Path(path).read_bytes())


def poincare_points(K, initial_states, n_steps):
    """Raw (p, x) section points for plotting elsewhere; shape (M*n_steps, 2)."""
    vals = iterate_many(MapId.STANDARD, StandardMapParams(K), initial_states, n_steps)
    return vals.reshape(-1, 2)


def default_channels(map_id) -> int:
    return _CHANNELS[MapId(map_id)]


def as_state_array(states: Sequence) -> np.ndarray:
    return np.array([tuple(s) for s in states], dtype=np.float64)
