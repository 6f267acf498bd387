"""Scoring predictions against reference labels."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np

from ..lyapunov import UNDETERMINED, SuccessRates, success_rates


@dataclass
class EvalReport:
    param_name: str
    per_param: dict
    aggregate: SuccessRates
    # one row per scored trajectory
    param: np.ndarray
    index: np.ndarray
    init: np.ndarray
    lam: np.ndarray
    true: np.ndarray
    pred: np.ndarray

    @property
    def errors(self):
        return self.true != self.pred

    def to_csv(self, path=None, extra=None):
        """``<param>,A_C,A_R,B_C,B_R,P_C,P_R,P_tot`` rows plus an ``all`` row."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        extra = extra or {}
        w.writerow(list(extra) + [self.param_name, "A_C", "A_R", "B_C", "B_R", "P_C", "P_R", "P_tot"])
        for value, sr in list(self.per_param.items()) + [("all", self.aggregate)]:
            w.writerow(list(extra.values()) + [value, sr.a_c, sr.a_r, sr.b_c, sr.b_r,
                                               _fmt(sr.p_c), _fmt(sr.p_r), _fmt(sr.p_tot)])
        return _emit(buf, path)

    def error_map_csv(self, path=None):
        """``i,j,<initial coordinates>,true,pred`` per scored trajectory."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = {1: ["x0"], 2: ["p0", "x0"], 3: ["X0", "Y0", "Z0"]}[self.init.shape[1]]
        w.writerow([self.param_name, "i", "j"] + names + ["lambda_ref", "true", "pred"])
        for r in range(len(self.true)):
            w.writerow([repr(float(self.param[r])), int(self.index[r, 0]), int(self.index[r, 1])]
                       + [repr(float(v)) for v in self.init[r]]
                       + [repr(float(self.lam[r])), int(self.true[r]), int(self.pred[r])])
        return _emit(buf, path)


def _fmt(v):
    return "nan" if np.isnan(v) else f"{v:.6f}"


def _emit(buf, path):
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def predictions_for(predictor, X):
    if hasattr(predictor, "predict"):
        return np.asarray(predictor.predict(X))
    if callable(predictor):
        return np.asarray(predictor(X))
    return np.asarray(predictor)


def evaluate(predictor, dataset, partition="test"):
    """Per-parameter and aggregate success rates.

    ``predictor`` is a fitted estimator, a callable on trajectory batches, or
    a precomputed prediction array aligned with the chosen partition.
    Trajectories whose reference label is UNDETERMINED are not scored.
    """
    ds = dataset.partition(partition)
    pred = predictions_for(predictor, ds.X).astype(np.int8).ravel()
    if len(pred) != len(ds):
        raise ValueError(f"{len(pred)} predictions for {len(ds)} trajectories")
    scored = ds.y != UNDETERMINED
    per = {}
    for value in ds.params:
        m = ds.param == value
        per[float(value)] = success_rates(pred[m], ds.y[m])
    agg = reduce(lambda a, b: a + b, per.values(), SuccessRates(0, 0, 0, 0))
    return EvalReport(ds.param_name, per, agg, ds.param[scored], ds.index[scored], ds.init[scored],
                      ds.lam[scored], ds.y[scored], pred[scored])
