"""End-to-end experiments: training sweeps and cross-map tests.

Each ``run_*`` function returns a result dict whose ``"rows"`` entry is a list
of flat records; with ``out_dir`` set it also writes those records as CSV
plus a ``manifest.json`` next to them.
"""
from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..dynamics import (
    GridSpec,
    LogisticParams,
    LorenzParams,
    MapId,
    grid_array,
    iterate_many,
    normalize_values,
)
from ..estimators import ChaosNetClassifier
from ..lyapunov import (
    DEFAULT_N_REF,
    HistogramSpec,
    UNDETERMINED,
    baseline_curve,
    dead_band_labels,
    histogram,
    labels_from_lambdas,
    logistic_lyapunov_grid,
    lorenz_lyapunov_grid,
    standard_lyapunov_grid,
    success_rates,
)
from ..seeds import sub_rng, sub_seed
from .dataset import DatasetSpec, LabeledDataset, build_dataset, default_cache
from .evaluation import evaluate

log = logging.getLogger(__name__)

EXPERIMENTS = ("nk_sweep", "k_generalization", "logistic_cross", "lorenz_cross",
               "classifier_compare", "lyapunov_baseline")

TRAIN_SPEC = DatasetSpec(k_min=1.0, k_max=2.0, m_k=11, m_tr=2081, m_tt=520, n_k=20)
TEST_SPEC = DatasetSpec(k_min=3.0, k_max=3.5, m_k=6, m_tr=0, m_tt=2601, n_k=20)
TABLE_I_NK = (20, 18, 16, 14, 12, 10, 2, 1)
COUNT_VARIANT = ((0.1, 3.1, 4), (0.1, 3.1, 7), (0.1, 3.1, 16), (0.1, 3.1, 31))
RANGE_VARIANT = ((1.0, 3.7, 28), (1.0, 3.0, 21), (1.0, 2.5, 16), (1.0, 2.0, 11))
DEAD_BAND = 1e-3
# errors with |lambda_ref| below this count as "at the chaos boundary"
BOUNDARY_BAND = 0.05


# -- shared helpers -------------------------------------------------------

def select_inputs(X, preset):
    """Shape trajectories for a preset: cnn1d keeps channel 0, cnn2d/fcn need
    two channels and duplicate a lone channel."""
    X = np.asarray(X)
    if preset == "cnn1d":
        return X[:, :, :1]
    if X.shape[2] == 1:
        return np.concatenate([X, X], axis=2)
    return X


def preset_of(spec):
    """Preset name matching a ModelSpec's input layout."""
    if spec.kind == "fcn":
        return "fcn"
    return "cnn1d" if spec.input_shape[1] == 1 else "cnn2d"


def train_model(dataset, preset="cnn2d", seed=0, partition="train", **model_params):
    """Fit a ChaosNetClassifier on one partition of ``dataset``.

    Returns the fitted estimator; ``est.history_`` is the loss curve.
    """
    ds = dataset.partition(partition)
    est = ChaosNetClassifier(preset=preset, random_state=seed, **model_params)
    mask = ds.y != UNDETERMINED
    return est.fit(select_inputs(ds.X[mask], preset), ds.y[mask])


def predictor(est, preset=None, normalize=False):
    """Callable that feeds raw trajectories to ``est`` with the right channels."""
    preset = preset or est.preset

    def predict(X):
        X = select_inputs(X, preset)
        if normalize:
            X = normalize_values(X, axis=1)
        return est.predict(X)

    return predict


def write_rows(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return path


def write_manifest(out_dir, experiment, config, seed, started, files):
    import numba
    import scipy
    import sklearn

    manifest = {
        "experiment": experiment,
        "config": config,
        "seed": seed,
        "versions": {"chaoscope": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__, "scikit-learn": sklearn.__version__},
        "wall_time_s": round(time.time() - started, 3),
        "files": sorted(str(f) for f in files),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")
    return path


def _finish(result, out_dir, experiment, config, seed, started, tables):
    if out_dir is None:
        return result
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_rows(out / name, rows).name for name, rows in tables.items()]
    write_manifest(out, experiment, config, seed, started, written)
    result["out_dir"] = str(out)
    return result


def _rates(sr):
    return {"P_C": sr.p_c, "P_R": sr.p_r, "P_tot": sr.p_tot}


def _spec_dict(spec):
    return spec.to_dict() if hasattr(spec, "to_dict") else spec


# -- standard map ---------------------------------------------------------

def run_nk_sweep(nk_list=TABLE_I_NK, train_spec=TRAIN_SPEC, test_spec=TEST_SPEC, preset="cnn2d",
                 seed=0, cache=None, out_dir=None, **model_params):
    """One model per trajectory length N_K, scored at each test K."""
    started = time.time()
    cache = cache or default_cache()
    rows, models = [], {}
    for nk in nk_list:
        tr = build_dataset(replace(train_spec, n_k=nk, seed=seed), cache)
        tt = build_dataset(replace(test_spec, n_k=nk, seed=seed), cache)
        est = train_model(tr, preset, sub_seed(seed, "model", "nk_sweep", nk), **model_params)
        models[nk] = est
        rep = evaluate(predictor(est), tt, "test")
        for K, sr in rep.per_param.items():
            rows.append({"K": K, "N_K": nk, **_rates(sr)})
        log.info("nk_sweep N_K=%d aggregate P_tot=%.3f", nk, rep.aggregate.p_tot)
    table = []
    for K in sorted({r["K"] for r in rows}):
        cells = {"K": K}
        for nk in nk_list:
            r = next(r for r in rows if r["K"] == K and r["N_K"] == nk)
            cells[f"N_K={nk}"] = f"{r['P_C']:.2f}/{r['P_R']:.2f}"
        table.append(cells)
    result = {"rows": rows, "table": table, "models": models}
    config = {"nk_list": list(nk_list), "train": _spec_dict(train_spec), "test": _spec_dict(test_spec),
              "preset": preset, "model": model_params}
    return _finish(result, out_dir, "nk_sweep", config, seed, started,
                   {"nk_sweep.csv": rows, "table_I.csv": table})


def run_k_generalization(variant="count", eval_ks=None, n_k=20, m_tr=2081, configs=None,
                         preset="cnn2d", seed=0, cache=None, out_dir=None, **model_params):
    """Accuracy versus K for networks trained on different sets of K values.

    ``variant="count"`` varies how many K values fill [0.1, 3.1];
    ``variant="range"`` varies K_max at K_min = 1.0. Each curve is scored on
    all grid points at every K in ``eval_ks``.
    """
    started = time.time()
    cache = cache or default_cache()
    if configs is None:
        configs = {"count": COUNT_VARIANT, "range": RANGE_VARIANT}[variant]
    if eval_ks is None:
        eval_ks = np.round(np.arange(0.1, 3.7 + 1e-9, 0.1), 10)
    evals = {}
    for K in eval_ks:
        ds = build_dataset(DatasetSpec(float(K), m_tr=0, m_tt=2601, n_k=n_k, seed=seed), cache)
        evals[float(K)] = ds
    rows, summary = [], []
    for k_min, k_max, m_k in configs:
        spec = DatasetSpec(k_min, k_max, m_k, m_tr=m_tr, m_tt=0, n_k=n_k, seed=seed)
        tr = build_dataset(spec, cache)
        est = train_model(tr, preset, sub_seed(seed, "model", variant, k_min, k_max, m_k), **model_params)
        pred = predictor(est)
        curve = []
        for K, ds in evals.items():
            sr = evaluate(pred, ds, "test").aggregate
            curve.append(sr)
            rows.append({"variant": variant, "k_min": k_min, "k_max": k_max, "m_k": m_k, "K": K,
                         **_rates(sr)})
        untrained = [sr for K, sr in zip(evals, curve) if not np.isclose(spec.ks, K).any()]
        summary.append({"variant": variant, "k_min": k_min, "k_max": k_max, "m_k": m_k,
                        "mean_P_tot": float(np.nanmean([sr.p_tot for sr in curve])),
                        "mean_P_tot_untrained": float(np.nanmean([sr.p_tot for sr in untrained]))
                        if untrained else float("nan"),
                        "mean_P_C": float(np.nanmean([sr.p_c for sr in curve]))})
    result = {"rows": rows, "summary": summary}
    config = {"variant": variant, "eval_ks": [float(k) for k in eval_ks], "n_k": n_k, "m_tr": m_tr,
              "configs": [list(c) for c in configs], "preset": preset, "model": model_params}
    return _finish(result, out_dir, "k_generalization", config, seed, started,
                   {f"k_generalization_{variant}.csv": rows,
                    f"k_generalization_{variant}_summary.csv": summary})


def run_lyapunov_baseline(K=2.5, n_list=None, n_ref=DEFAULT_N_REF, bins=61, grid=GridSpec(),
                          jacobian="exact", seed=0, out_dir=None):
    """Threshold-protocol success rates versus N against the n_ref labels."""
    started = time.time()
    if n_list is None:
        decades = np.log10(n_ref) - 1
        n_list = np.unique(np.round(np.logspace(1, np.log10(n_ref), int(round(10 * decades)) + 1)))
    n_list = sorted({int(n) for n in n_list} | {n_ref})
    S, idx = grid_array(grid)
    table = standard_lyapunov_grid(K, S, n_list, jacobian=jacobian)
    spec = HistogramSpec(bins)
    ref = labels_from_lambdas(table[:, -1], K, spec)
    curve = baseline_curve(table, n_list, ref.labels, spec)
    rows = [{"N": N, "threshold": thr, **_rates(sr)} for N, thr, sr in curve]
    hist_rows = []
    for N in sorted({20, n_ref} & set(n_list)):
        centers, counts = histogram(table[:, n_list.index(N)], spec)
        hist_rows += [{"N": N, "bin_center": float(c), "count": int(n)} for c, n in zip(centers, counts)]
    label_rows = [{"i": int(i), "j": int(j), "p0": float(p), "x0": float(x),
                   "lambda_N": float(l), "label": int(lab)}
                  for (i, j), (p, x), l, lab in zip(idx, S, ref.lambdas, ref.labels)]
    result = {"rows": rows, "reference": ref, "lambda_table": table, "n_list": n_list}
    config = {"K": K, "n_list": n_list, "n_ref": n_ref, "bins": bins, "jacobian": jacobian}
    return _finish(result, out_dir, "lyapunov_baseline", config, seed, started,
                   {"lyapunov_baseline.csv": rows, "histograms.csv": hist_rows,
                    "reference_labels.csv": label_rows})


def run_classifier_compare(train_spec=None, test_spec=None, presets=("fcn", "cnn2d"), seed=0,
                           cache=None, out_dir=None, models=None, **model_params):
    """Different architectures trained and tested on identical data."""
    started = time.time()
    cache = cache or default_cache()
    train_spec = train_spec or replace(TRAIN_SPEC, m_tr=2601, m_tt=0)
    test_spec = test_spec or TEST_SPEC
    tr = build_dataset(replace(train_spec, seed=seed), cache)
    tt = build_dataset(replace(test_spec, seed=seed), cache)
    rows, trained = [], dict(models or {})
    for preset in presets:
        if preset not in trained:
            trained[preset] = train_model(tr, preset, sub_seed(seed, "model", "compare", preset),
                                          **model_params)
        sr = evaluate(predictor(trained[preset], preset), tt, "test").aggregate
        rows.append({"classifier": preset, "P_tot": sr.p_tot, "P_C": sr.p_c, "P_R": sr.p_r})
    result = {"rows": rows, "models": trained}
    config = {"train": _spec_dict(train_spec), "test": _spec_dict(test_spec), "presets": list(presets),
              "model": model_params}
    return _finish(result, out_dir, "classifier_compare", config, seed, started,
                   {"classifier_compare.csv": rows})


# -- cross-map tests ------------------------------------------------------

def train_cross_models(seed=0, cache=None, train_spec=TRAIN_SPEC, **model_params):
    """The 2D (p, x) and 1D (p only) networks used by the cross-map tests."""
    tr = build_dataset(replace(train_spec, seed=seed), cache or default_cache())
    return (train_model(tr, "cnn2d", sub_seed(seed, "model", "cross", "cnn2d"), **model_params),
            train_model(tr, "cnn1d", sub_seed(seed, "model", "cross", "cnn1d"), **model_params))


def logistic_dataset(r_values, n_x0=20, n_k=20, n_ref=DEFAULT_N_REF, band=DEAD_BAND, cache=None):
    """Logistic trajectories on an (r, x0) grid with dead-band reference labels.

    x0 runs over cell midpoints (j + 0.5) / n_x0, which avoids the fixed
    points 0 and 1 and the critical point 0.5.
    """
    cache = cache or default_cache()
    x0 = (np.arange(n_x0) + 0.5) / n_x0
    parts = []
    for ri, r in enumerate(r_values):
        r = float(r)
        key = f"logistic_r{r:.12g}_N{n_ref}_n{n_x0}"
        lam = cache.cached(key, lambda: logistic_lyapunov_grid(r, x0, [n_ref])[:, 0])
        X = iterate_many(MapId.LOGISTIC, LogisticParams(r), x0[:, None], n_k)
        parts.append((X, dead_band_labels(lam, band), np.full(n_x0, r),
                      np.stack([np.full(n_x0, ri), np.arange(n_x0)], axis=1), x0[:, None], lam))
    X, y, param, index, init, lam = (np.concatenate(a) for a in zip(*parts))
    return LabeledDataset("logistic", "r", X, y, param, index, init, lam,
                          np.zeros(len(y), dtype=bool),
                          {"n_x0": n_x0, "n_k": n_k, "n_ref": n_ref, "band": band})


def boundary_error_fraction(report, band=BOUNDARY_BAND):
    err = report.errors
    if not err.any():
        return float("nan")
    return float((np.abs(report.lam[err]) < band).mean())


def run_logistic_cross(model_2d=None, model_1d=None, r_values=None, n_x0=20, n_k=20,
                       n_ref=DEFAULT_N_REF, band=DEAD_BAND, seed=0, cache=None, out_dir=None,
                       **model_params):
    """Standard-map networks applied to logistic-map trajectories."""
    started = time.time()
    cache = cache or default_cache()
    if model_2d is None or model_1d is None:
        model_2d, model_1d = train_cross_models(seed, cache, replace(TRAIN_SPEC, n_k=n_k), **model_params)
    if r_values is None:
        r_values = np.round(np.arange(2.5, 4.0 + 1e-9, 0.01), 10)
    ds = logistic_dataset(r_values, n_x0, n_k, n_ref, band, cache)
    rows, per_r, reports = [], [], {}
    for name, est, preset in (("2D", model_2d, "cnn2d"), ("1D", model_1d, "cnn1d")):
        rep = evaluate(predictor(est, preset), ds, "all")
        reports[name] = rep
        rows.append({"model": name, "accuracy": rep.aggregate.p_tot, **_rates(rep.aggregate),
                     "errors": rep.aggregate.n_errors,
                     "boundary_error_fraction": boundary_error_fraction(rep)})
        for r, sr in rep.per_param.items():
            per_r.append({"model": name, "r": r, **_rates(sr)})
    result = {"rows": rows, "per_r": per_r, "reports": reports, "dataset": ds}
    config = {"r_values": [float(r) for r in r_values], "n_x0": n_x0, "n_k": n_k, "n_ref": n_ref,
              "band": band}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        for name, rep in reports.items():
            rep.error_map_csv(Path(out_dir) / f"logistic_error_map_{name}.csv")
    return _finish(result, out_dir, "logistic_cross", config, seed, started,
                   {"logistic_cross.csv": rows, "logistic_cross_per_r.csv": per_r})


def lorenz_initial_conditions(rho, n_ic, seed, index):
    """Seeded uniform points in [-1, 1]^3 scaled by 1 + sqrt(rho)."""
    u = sub_rng(seed, "lorenz_ic", index).uniform(-1.0, 1.0, size=(n_ic, 3))
    return u * (1.0 + np.sqrt(rho))


def lorenz_dataset(rho_values, n_ic=200, n_k=20, n_ref=DEFAULT_N_REF, band=DEAD_BAND, seed=0,
                   form="printed", cache=None):
    """Discrete Lorenz trajectories with dead-band labels.

    The exponent used for labeling is per unit time (per-step value divided
    by delta) so that the dead-band is independent of the step size.
    """
    cache = cache or default_cache()
    parts = []
    for ri, rho in enumerate(rho_values):
        params = LorenzParams(rho=float(rho), form=form)
        S0 = lorenz_initial_conditions(float(rho), n_ic, seed, ri)
        key = f"lorenz_{form}_rho{float(rho):.12g}_N{n_ref}_n{n_ic}_s{seed}_i{ri}"
        lam = cache.cached(key, lambda: lorenz_lyapunov_grid(params, S0, [n_ref])[:, 0]) / params.delta
        X = iterate_many(MapId.LORENZ, params, S0, n_k)
        parts.append((X, dead_band_labels(lam, band), np.full(n_ic, float(rho)),
                      np.stack([np.full(n_ic, ri), np.arange(n_ic)], axis=1), S0, lam))
    X, y, param, index, init, lam = (np.concatenate(a) for a in zip(*parts))
    return LabeledDataset("lorenz", "rho", X, y, param, index, init, lam,
                          np.zeros(len(y), dtype=bool),
                          {"n_ic": n_ic, "n_k": n_k, "n_ref": n_ref, "band": band, "form": form})


LORENZ_PROJECTIONS = {"XY": (0, 1), "XZ": (0, 2), "YZ": (1, 2), "X": (0,), "Y": (1,), "Z": (2,)}


def run_lorenz_cross(model_2d=None, model_1d=None, rho_values=None, n_ic=200, n_k=20,
                     n_ref=DEFAULT_N_REF, band=DEAD_BAND, form="printed", seed=0, cache=None,
                     out_dir=None, **model_params):
    """Standard-map networks on 2- and 1-coordinate projections of Lorenz data,
    with raw and min-max normalized inputs."""
    started = time.time()
    cache = cache or default_cache()
    if model_2d is None or model_1d is None:
        model_2d, model_1d = train_cross_models(seed, cache, replace(TRAIN_SPEC, n_k=n_k), **model_params)
    if rho_values is None:
        rho_values = np.round(np.arange(0.0, 39.8 + 1e-9, 0.2), 10)
    ds = lorenz_dataset(rho_values, n_ic, n_k, n_ref, band, seed, form, cache)
    rows = []
    for name, chans in LORENZ_PROJECTIONS.items():
        est, preset = (model_2d, "cnn2d") if len(chans) == 2 else (model_1d, "cnn1d")
        proj = ds.with_trajectories(ds.X[:, :, list(chans)])
        for normalized in (False, True):
            sr = evaluate(predictor(est, preset, normalize=normalized), proj, "all").aggregate
            rows.append({"projection": name, "normalized": normalized, "accuracy": sr.p_tot,
                         **_rates(sr), "A_C": sr.a_c, "A_R": sr.a_r})
    result = {"rows": rows, "dataset": ds}
    config = {"rho_values": [float(r) for r in rho_values], "n_ic": n_ic, "n_k": n_k,
              "n_ref": n_ref, "band": band, "form": form}
    return _finish(result, out_dir, "lorenz_cross", config, seed, started,
                   {"lorenz_cross.csv": rows})


RUNNERS = {
    "nk_sweep": run_nk_sweep,
    "k_generalization": run_k_generalization,
    "logistic_cross": run_logistic_cross,
    "lorenz_cross": run_lorenz_cross,
    "classifier_compare": run_classifier_compare,
    "lyapunov_baseline": run_lyapunov_baseline,
}


def run_experiment(name, out_dir=None, **overrides):
    if name not in RUNNERS:
        raise KeyError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    return RUNNERS[name](out_dir=out_dir, **overrides)
