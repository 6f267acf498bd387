"""Finite-time Lyapunov exponents and the histogram-threshold labeling protocol.

Exponents are measured per map iteration. The tangent vector is renormalized
after every step and the log stretch factors are accumulated, so

    lambda_N = (1/N) * sum_{n=2..N} ln(|v_n| / |v_{n-1}|)

where N counts trajectory rows and v_1 is the initial tangent vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np
from scipy.signal import find_peaks, peak_prominences

from . import _kernels
from .dynamics import (
    LogisticParams,
    LorenzParams,
    MapId,
    PhaseState2D,
    StandardMapParams,
    TWO_PI,
)

# Tangent modes for the standard map. "exact" is the analytic linearization
# (the K/2pi prefactor cancels the chain-rule 2pi, leaving K*cos(2pi x)).
# "extra_2pi" multiplies the cosine term by 2pi; it is *not* the Jacobian of
# the map and exists only to audit that reading of the tangent equations.
JACOBIAN_MODES = {"exact": 1.0, "extra_2pi": TWO_PI}

DEFAULT_N_REF = 300_000
DEFAULT_BINS = 61


class ChaosLabel(IntEnum):
    REGULAR = 0
    CHAOTIC = 1


# label used for points a caller decides not to score (e.g. lambda inside a dead-band)
UNDETERMINED = -1


class NoThresholdError(ValueError):
    """The histogram has fewer than two separated peaks."""


class NonFiniteLyapunovError(FloatingPointError):
    pass


class TangentVector2D(NamedTuple):
    delta: float
    zeta: float


def _scale(jacobian):
    try:
        return JACOBIAN_MODES[jacobian]
    except KeyError:
        raise ValueError(f"unknown jacobian mode {jacobian!r}; use one of {sorted(JACOBIAN_MODES)}")


def tangent_step(state, tv, params, jacobian="exact"):
    """Advance a tangent vector one step along ``state`` (which is x_n, not x_{n+1})."""
    K = params.K if isinstance(params, StandardMapParams) else float(params)
    delta, zeta = tv
    delta_new = delta + _scale(jacobian) * K * zeta * math.cos(TWO_PI * state[1])
    return TangentVector2D(delta_new, zeta + delta_new)


def standard_map_jacobian(state, params, jacobian="exact"):
    """One-step tangent matrix acting on (delta, zeta)."""
    c = _scale(jacobian) * params.K * math.cos(TWO_PI * state[1])
    return np.array([[1.0, c], [1.0, 1.0 + c]])


def lorenz_jacobian(state, params):
    X, Y, Z = state
    s, r, b, D = params.sigma, params.rho, params.beta, params.delta
    dy_dy = 1.0 if params.form == "printed" else 1.0 - D
    dy_dz = -D * X - D if params.form == "printed" else -D * X
    return np.array([
        [1.0 - s * D, s * D, 0.0],
        [r * D - D * Z, dy_dy, dy_dz],
        [D * Y, D * X, 1.0 - b * D],
    ])


@dataclass
class LyapunovSeries:
    """Running exponents lambda_N for N = 2..N_max."""

    values: np.ndarray

    @property
    def final(self):
        return float(self.values[-1])

    @property
    def n_max(self):
        return len(self.values) + 1

    @property
    def lyapunov_time(self):
        return 1.0 / self.final

    def at(self, N):
        return float(self.values[N - 2])


def lyapunov_series(map_id, params, initial_state, N, tangent=None, jacobian="exact"):
    map_id = MapId(map_id)
    if N < 2:
        raise ValueError("lambda_N needs N >= 2")
    if map_id is MapId.STANDARD:
        d, z = tangent if tangent is not None else (1.0, 0.0)
        p, x = initial_state
        vals = _kernels.standard_lyapunov_series(float(p), float(x), float(params.K),
                                                 _scale(jacobian), float(d), float(z), int(N))
    elif map_id is MapId.LOGISTIC:
        x = float(np.ravel(initial_state)[0])
        vals = _kernels.logistic_lyapunov_series(x, float(params.r), int(N))
    else:
        v = tangent if tangent is not None else (1.0, 0.0, 0.0)
        X, Y, Z = initial_state
        vals = _kernels.lorenz_lyapunov_series(
            float(X), float(Y), float(Z), params.sigma, params.rho, params.beta, params.delta,
            params.form == "printed", float(v[0]), float(v[1]), float(v[2]), int(N))
    if not np.isfinite(vals).all():
        bad = int(np.argmin(np.isfinite(vals))) + 2
        raise NonFiniteLyapunovError(f"non-finite lambda_N first at N={bad}")
    return LyapunovSeries(vals)


def _checkpoints(checkpoints):
    ck = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if ck.size == 0 or ck[0] < 2:
        raise ValueError("checkpoints must be >= 2")
    return ck


def standard_lyapunov_grid(K, initial_states, checkpoints, jacobian="exact", tangents=None):
    """lambda_N at each checkpoint for many standard-map orbits.

    Returns an array of shape (M, len(checkpoints)) with checkpoints sorted
    ascending and deduplicated.
    """
    S = np.asarray(initial_states, dtype=np.float64).reshape(-1, 2)
    ck = _checkpoints(checkpoints)
    if tangents is None:
        d0, z0 = np.ones(len(S)), np.zeros(len(S))
    else:
        T = np.asarray(tangents, dtype=np.float64).reshape(-1, 2)
        nrm = np.hypot(T[:, 0], T[:, 1])
        d0, z0 = T[:, 0] / nrm, T[:, 1] / nrm
    out = _kernels.standard_lyapunov(np.ascontiguousarray(S[:, 0]), np.ascontiguousarray(S[:, 1]),
                                     float(K), _scale(jacobian), d0, z0, ck)
    return out


def logistic_lyapunov_grid(r, x0, checkpoints):
    """lambda_N for many logistic orbits.

    A vanishing derivative (orbit landing exactly on x = 0.5) is floored at
    1e-300 so the exponent stays finite and strongly negative.
    """
    x = np.ascontiguousarray(np.ravel(x0), dtype=np.float64)
    return _kernels.logistic_lyapunov(x, float(r), _checkpoints(checkpoints), True)


def lorenz_lyapunov_grid(params, initial_states, checkpoints, tangents=None):
    S = np.ascontiguousarray(np.asarray(initial_states, dtype=np.float64).reshape(-1, 3))
    if tangents is None:
        V = np.zeros_like(S)
        V[:, 0] = 1.0
    else:
        V = np.asarray(tangents, dtype=np.float64).reshape(-1, 3)
        V = np.ascontiguousarray(V / np.linalg.norm(V, axis=1, keepdims=True))
    return _kernels.lorenz_lyapunov(S, params.sigma, params.rho, params.beta, params.delta,
                                    params.form == "printed", V, _checkpoints(checkpoints))


def lyapunov_fit(K):
    """Empirical chaotic-sea exponent ln(0.7 + 0.42 K)."""
    arg = 0.7 + 0.42 * K
    if not arg > 0:
        raise ValueError(f"fit undefined for K={K}: 0.7 + 0.42K = {arg} <= 0")
    return math.log(arg)


# -- histogram threshold --------------------------------------------------

@dataclass(frozen=True)
class HistogramSpec:
    bin_count: int = DEFAULT_BINS
    range: tuple | None = None

    def __post_init__(self):
        if self.bin_count < 3:
            raise ValueError("histogram needs at least 3 bins")
        if self.range is not None and not self.range[0] < self.range[1]:
            raise ValueError("histogram range must satisfy lo < hi")


def histogram(lambda_values, spec=HistogramSpec()):
    """Bin centers and counts over ``spec.range`` (default: observed min..max)."""
    lam = np.asarray(lambda_values, dtype=np.float64).ravel()
    rng = spec.range
    if rng is None:
        lo, hi = float(lam.min()), float(lam.max())
        if not lo < hi:
            raise NoThresholdError("all lambda values are identical; histogram is degenerate")
        rng = (lo, hi)
    counts, edges = np.histogram(lam, bins=spec.bin_count, range=rng)
    return 0.5 * (edges[:-1] + edges[1:]), counts


def _two_peaks(counts):
    """Indices (low, high) of the two most prominent peaks.

    Bins are zero-padded on both sides so edge bins can be peaks. Peaks are
    ranked by prominence (height above the higher of the two bounding
    valleys), which keeps noise spikes sitting on one broad hump from being
    chosen as the second peak. Ties go to the smaller lambda.
    """
    padded = np.concatenate([[0], np.asarray(counts), [0]])
    peaks, _ = find_peaks(padded)
    if len(peaks) < 2:
        raise NoThresholdError(f"histogram has {len(peaks)} peak(s); need two")
    prom = peak_prominences(padded, peaks)[0]
    order = np.lexsort((peaks, -prom))
    a, b = sorted(peaks[order[:2]] - 1)
    if b - a < 2:
        raise NoThresholdError("the two largest peaks are adjacent; no bin between them")
    return a, b


def threshold_from_counts(centers, counts):
    """Center of the deepest bin strictly between the two largest peaks.

    Among equally deep minima the one at smallest lambda wins.
    """
    counts = np.asarray(counts)
    a, b = _two_peaks(counts)
    between = counts[a + 1:b]
    m = a + 1 + int(np.argmin(between))  # argmin returns the first (smallest-lambda) minimum
    return float(np.asarray(centers)[m])


def threshold_from_histogram(lambda_values, spec=HistogramSpec()):
    lam = np.asarray(lambda_values, dtype=np.float64).ravel()
    if lam.size < 2:
        raise NoThresholdError("need at least two lambda values")
    if not np.isfinite(lam).all():
        raise ValueError("lambda values must be finite")
    centers, counts = histogram(lam, spec)
    return threshold_from_counts(centers, counts)


def label_by_threshold(lambda_value, threshold):
    """Chaotic iff lambda > threshold; works elementwise on arrays."""
    lam = np.asarray(lambda_value)
    labels = np.where(lam > threshold, ChaosLabel.CHAOTIC, ChaosLabel.REGULAR).astype(np.int8)
    if labels.ndim == 0:
        return ChaosLabel(int(labels))
    return labels


@dataclass
class ReferenceLabels:
    lambdas: np.ndarray
    labels: np.ndarray
    threshold: float
    fallback: bool = False


# floor for the unimodal fallback split, so that a K with a negative fitted
# exponent still labels near-zero exponents regular
FALLBACK_FLOOR = 1e-3


def labels_from_lambdas(lambdas, K=None, spec=HistogramSpec(), fallback=True):
    """Threshold protocol on precomputed exponents.

    When the histogram has no two separated peaks and ``fallback`` is on, the
    whole set takes one label: chaotic when the mean exponent exceeds
    max(lyapunov_fit(K) / 2, 1e-3), regular otherwise.
    """
    lam = np.asarray(lambdas, dtype=np.float64).ravel()
    try:
        thr = threshold_from_histogram(lam, spec)
        return ReferenceLabels(lam, label_by_threshold(lam, thr), thr, False)
    except NoThresholdError:
        if not fallback:
            raise
        cut = FALLBACK_FLOOR
        if K is not None:
            cut = max(lyapunov_fit(K) / 2.0, FALLBACK_FLOOR)
        label = ChaosLabel.CHAOTIC if lam.mean() > cut else ChaosLabel.REGULAR
        return ReferenceLabels(lam, np.full(lam.shape, int(label), dtype=np.int8), cut, True)


def reference_labels(K, initial_states, n_ref=DEFAULT_N_REF, spec=HistogramSpec(),
                     jacobian="exact", fallback=True):
    """Label every orbit from lambda_{n_ref} and one shared histogram threshold."""
    lam = standard_lyapunov_grid(K, initial_states, [n_ref], jacobian=jacobian)[:, 0]
    return labels_from_lambdas(lam, K, spec, fallback)


def dead_band_labels(lambdas, band=1e-3):
    """Sign-of-lambda labels with points inside |lambda| <= band marked UNDETERMINED."""
    lam = np.asarray(lambdas, dtype=np.float64)
    out = np.full(lam.shape, UNDETERMINED, dtype=np.int8)
    out[lam > band] = ChaosLabel.CHAOTIC
    out[lam < -band] = ChaosLabel.REGULAR
    return out


# -- success rates --------------------------------------------------------

@dataclass(frozen=True)
class SuccessRates:
    """Per-class and total success rates; an empty class has rate NaN."""

    a_c: int
    a_r: int
    b_c: int
    b_r: int

    def __post_init__(self):
        if not (0 <= self.b_c <= self.a_c and 0 <= self.b_r <= self.a_r):
            raise ValueError("need 0 <= b_c <= a_c and 0 <= b_r <= a_r")

    @property
    def p_c(self):
        return self.b_c / self.a_c if self.a_c else math.nan

    @property
    def p_r(self):
        return self.b_r / self.a_r if self.a_r else math.nan

    @property
    def p_tot(self):
        n = self.a_c + self.a_r
        return (self.b_c + self.b_r) / n if n else math.nan

    @property
    def n_errors(self):
        return (self.a_c - self.b_c) + (self.a_r - self.b_r)

    def __add__(self, other):
        return SuccessRates(self.a_c + other.a_c, self.a_r + other.a_r,
                            self.b_c + other.b_c, self.b_r + other.b_r)

    def as_dict(self):
        return {"P_C": self.p_c, "P_R": self.p_r, "P_tot": self.p_tot,
                "A_C": self.a_c, "A_R": self.a_r, "B_C": self.b_c, "B_R": self.b_r}


def success_rates(predicted, reference):
    """Confusion counts of ``predicted`` against ``reference``.

    Reference entries equal to UNDETERMINED are left out of the counts.
    """
    pred = np.asarray(predicted).ravel()
    ref = np.asarray(reference).ravel()
    if pred.shape != ref.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {ref.size} references")
    chaotic = ref == ChaosLabel.CHAOTIC
    regular = ref == ChaosLabel.REGULAR
    return SuccessRates(
        a_c=int(chaotic.sum()), a_r=int(regular.sum()),
        b_c=int((chaotic & (pred == ChaosLabel.CHAOTIC)).sum()),
        b_r=int((regular & (pred == ChaosLabel.REGULAR)).sum()),
    )


def baseline_curve(lambda_table, checkpoints, reference, spec=HistogramSpec()):
    """Success rates of the threshold protocol applied at each N.

    ``lambda_table`` holds lambda_N per orbit (rows) and checkpoint (columns).
    The threshold is recomputed from the histogram at every N. Returns a list
    of (N, threshold, SuccessRates); an N whose histogram has no threshold is
    reported with threshold NaN and every orbit labeled by the fallback rule.
    """
    rows = []
    for j, N in enumerate(checkpoints):
        lam = lambda_table[:, j]
        try:
            thr = threshold_from_histogram(lam, spec)
            pred = label_by_threshold(lam, thr)
        except NoThresholdError:
            thr = math.nan
            pred = np.full(lam.shape, int(lam.mean() > FALLBACK_FLOOR), dtype=np.int8)
        rows.append((int(N), thr, success_rates(pred, reference)))
    return rows


__all__ = [
    "ChaosLabel", "UNDETERMINED", "NoThresholdError", "NonFiniteLyapunovError",
    "TangentVector2D", "tangent_step", "standard_map_jacobian", "lorenz_jacobian",
    "LyapunovSeries", "lyapunov_series", "standard_lyapunov_grid", "logistic_lyapunov_grid",
    "lorenz_lyapunov_grid", "lyapunov_fit", "HistogramSpec", "histogram",
    "threshold_from_counts", "threshold_from_histogram", "label_by_threshold",
    "ReferenceLabels", "labels_from_lambdas", "reference_labels", "dead_band_labels",
    "SuccessRates", "success_rates", "baseline_curve", "PhaseState2D",
    "LogisticParams", "LorenzParams", "StandardMapParams",
]
