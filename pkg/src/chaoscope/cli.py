"""``chaoscope`` command line.

Exit codes: 0 success, 2 config or usage error, 3 runtime failure,
4 degenerate data (e.g. a histogram without two peaks).
"""
from __future__ import annotations

import argparse
import csv
import inspect
import json
import logging
import os
import sys
import time
from pathlib import Path

from .config import ConfigError, RunConfig
from .dynamics import GridSpec, grid_array, poincare_points
from .lyapunov import HistogramSpec, NoThresholdError, labels_from_lambdas
from .pipeline import experiments as ex
from .pipeline.dataset import DatasetError, DatasetSpec, ReferenceCache, build_dataset, load_dataset, save_dataset
from .pipeline.evaluation import evaluate

log = logging.getLogger("chaoscope")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_DEGENERATE = 0, 2, 3, 4


class UsageError(Exception):
    pass


# -- stage bookkeeping ----------------------------------------------------

def _out_root(cfg):
    return Path(cfg.doc.get("out") or os.environ.get("CHAOSCOPE_OUT") or "chaoscope_out")


def _cache(cfg):
    return ReferenceCache(cfg.doc.get("cache"))


def _completed(stage_dir, cfg):
    """True when ``stage_dir`` holds a manifest for this exact config and all its files."""
    m = stage_dir / "manifest.json"
    if not m.exists():
        return False
    try:
        manifest = json.loads(m.read_text())
    except ValueError:
        return False
    same = json.loads(json.dumps(manifest.get("config"))) == json.loads(json.dumps(cfg.doc))
    return same and all((stage_dir / f).exists() for f in manifest.get("files", []))


def _stage(name, cfg, stage_dir, resume, work):
    """Run ``work(stage_dir) -> files`` unless ``--resume`` finds it already done."""
    stage_dir.mkdir(parents=True, exist_ok=True)
    if resume and _completed(stage_dir, cfg):
        log.info("%s: up to date in %s, skipped", name, stage_dir)
        return stage_dir
    started = time.time()
    files = work(stage_dir)
    ex.write_manifest(stage_dir, name, cfg.doc, cfg.seed, started, files)
    log.info("%s: wrote %s", name, stage_dir)
    return stage_dir


def _dataset_spec(cfg):
    try:
        return cfg.dataset_spec()
    except DatasetError as exc:
        raise ConfigError(f"dataset: {exc}") from None


def _estimator_params(cfg):
    try:
        params = cfg.estimator_params()
        ex.ChaosNetClassifier(**params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return params


# -- commands -------------------------------------------------------------

def cmd_generate(cfg, resume=False):
    spec = _dataset_spec(cfg)

    def work(d):
        ds = build_dataset(spec, _cache(cfg))
        save_dataset(ds, d)
        return ["trajectories.chsc", "labels.csv", "dataset.json"]

    return _stage("generate", cfg, _out_root(cfg) / "dataset", resume, work)


def cmd_label(cfg, resume=False):
    spec = _dataset_spec(cfg)
    fallback = cfg.section("label").get("fallback", True)

    def work(d):
        S, idx = grid_array(spec.grid)
        rows, thresholds = [], {}
        cache = _cache(cfg)
        for K in spec.ks:
            lam = cache.lambdas(float(K), spec.n_ref, spec.grid, spec.jacobian)
            ref = labels_from_lambdas(lam, float(K), HistogramSpec(spec.bins), fallback)
            thresholds[repr(float(K))] = {"threshold": ref.threshold, "fallback": ref.fallback}
            rows += [{"K": float(K), "i": int(i), "j": int(j), "p0": float(p), "x0": float(x),
                      "lambda_ref": float(l), "label": int(lab)}
                     for (i, j), (p, x), l, lab in zip(idx, S, lam, ref.labels)]
        ex.write_rows(d / "labels.csv", rows)
        (d / "thresholds.json").write_text(json.dumps(thresholds, indent=1, sort_keys=True) + "\n")
        return ["labels.csv", "thresholds.json"]

    return _stage("label", cfg, _out_root(cfg) / "labels", resume, work)


def cmd_train(cfg, resume=False):
    from .tensornet import save_model

    section = cfg.section("train")
    source = Path(section.get("dataset") or _out_root(cfg) / "dataset")
    params = _estimator_params(cfg)

    def work(d):
        ds = load_dataset(source)
        preset = params.get("preset", "cnn2d")
        est = ex.train_model(ds, preset, seed=cfg.seed, partition=section.get("partition", "train"),
                             **{k: v for k, v in params.items() if k not in ("preset", "random_state")})
        save_model(est.model_, d / "model.chsm", seed=cfg.seed, training=est.training_config().to_dict())
        ex.write_rows(d / "loss_curve.csv", est.history_ or [{"epoch": 0, "train_loss": "", "val_loss": ""}])
        return ["model.chsm", "loss_curve.csv"]

    return _stage("train", cfg, _out_root(cfg) / "model", resume, work)


def cmd_eval(cfg, resume=False):
    from .tensornet import load_model

    section = cfg.section("eval")
    source = Path(section.get("dataset") or _out_root(cfg) / "dataset")
    ckpt = Path(section.get("checkpoint") or _out_root(cfg) / "model" / "model.chsm")
    partition = section.get("partition", "test")

    def work(d):
        ds = load_dataset(source)
        model = load_model(ckpt)
        preset = ex.preset_of(model.spec)
        est = ex.ChaosNetClassifier.from_model(model, preset=preset)
        rep = evaluate(ex.predictor(est, preset), ds, partition)
        rep.to_csv(d / "report.csv", extra={"N": ds.n_k})
        rep.error_map_csv(d / "error_map.csv")
        return ["report.csv", "error_map.csv"]

    return _stage("eval", cfg, _out_root(cfg) / "eval", resume, work)


def cmd_export_poincare(cfg, resume=False):
    section = cfg.require("poincare")
    n_side, n_steps = section.get("n_side", 11), section.get("n_steps", 1000)

    def work(d):
        S, _ = grid_array(GridSpec(n_side, n_side, 1.0 / max(n_side - 1, 1)))
        pts = poincare_points(section["K"], S, n_steps).reshape(len(S), n_steps, 2)
        with (d / "poincare.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["orbit", "step", "p", "x"])
            for o in range(len(S)):
                for s in range(n_steps):
                    w.writerow([o, s, repr(float(pts[o, s, 0])), repr(float(pts[o, s, 1]))])
        return ["poincare.csv"]

    return _stage("export-poincare", cfg, _out_root(cfg) / "poincare", resume, work)


_CLASSIFIER_KEYS = set(inspect.signature(ex.ChaosNetClassifier).parameters) - {"random_state", "preset"}


def experiment_kwargs(name, cfg):
    """Runner keyword arguments: experiment params, then model/training sections."""
    runner = ex.RUNNERS[name]
    sig = inspect.signature(runner)
    named = {k for k, p in sig.parameters.items() if p.kind is not p.VAR_KEYWORD}
    takes_model = any(p.kind is p.VAR_KEYWORD for p in sig.parameters.values())
    params = dict(cfg.section("experiment").get("params", {}))
    unknown = sorted(set(params) - named - (_CLASSIFIER_KEYS if takes_model else set()))
    if unknown:
        raise ConfigError(f"unknown key experiment.params.{unknown[0]} for {name}")
    for k, v in list(params.items()):
        if k.endswith("_spec") and isinstance(v, dict):
            try:
                params[k] = DatasetSpec(**v)
            except (TypeError, DatasetError) as exc:
                raise ConfigError(f"experiment.params.{k}: {exc}") from None
        elif k == "grid" and isinstance(v, dict):
            params[k] = GridSpec(**v)
        elif isinstance(v, list) and k in ("configs",):
            params[k] = [tuple(c) for c in v]
    if takes_model:
        model = {k: v for k, v in _estimator_params(cfg).items() if k in _CLASSIFIER_KEYS}
        params = {**model, **params}
    params["seed"] = cfg.seed
    if "cache" in named:
        params["cache"] = _cache(cfg)
    return params


def cmd_experiment(name, cfg, resume=False):
    if name not in ex.RUNNERS:
        raise UsageError(f"unknown experiment {name!r}; choose from {', '.join(ex.EXPERIMENTS)}")
    kwargs = experiment_kwargs(name, cfg)
    stage_dir = _out_root(cfg) / "experiment" / name
    if resume and _completed(stage_dir, cfg):
        log.info("experiment %s: up to date in %s, skipped", name, stage_dir)
        return stage_dir
    result = ex.run_experiment(name, out_dir=stage_dir, **kwargs)
    # the runner's manifest records its own resolved config; keep the run config alongside
    manifest = json.loads((stage_dir / "manifest.json").read_text())
    manifest["resolved"], manifest["config"] = manifest["config"], cfg.doc
    (stage_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")
    for row in result["rows"][:20]:
        log.info("%s", row)
    return stage_dir


# -- entry point ----------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run config")
    common.add_argument("--out", metavar="DIR", help="output root (default $CHAOSCOPE_OUT)")
    common.add_argument("--seed", type=int, metavar="N", help="global seed")
    common.add_argument("--threads", type=int, metavar="N", help="cap parallel workers")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                        help="override a config key (dotted path); repeatable")
    common.add_argument("--resume", action="store_true", help="skip stages whose manifest matches")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="chaoscope", description="Chaos detection on short trajectories.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("generate", "build and save a labeled dataset"),
                       ("label", "reference exponents and labels on the grid"),
                       ("train", "train a network on a saved dataset"),
                       ("eval", "score a checkpoint on a saved dataset"),
                       ("export-poincare", "raw standard-map section points")):
        sub.add_parser(name, parents=[common], help=text)
    e = sub.add_parser("experiment", parents=[common], help="run one experiment sweep")
    e.add_argument("name", help=" | ".join(ex.EXPERIMENTS))
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads is not None:
            import numba

            if not 1 <= args.threads <= numba.config.NUMBA_NUM_THREADS:
                raise ConfigError(f"--threads must lie in [1, {numba.config.NUMBA_NUM_THREADS}]")
            numba.set_num_threads(args.threads)
        cfg = RunConfig.load(args.config, args.overrides, args.seed, args.out)
        if args.command == "experiment":
            out = cmd_experiment(args.name, cfg, args.resume)
        else:
            out = COMMANDS[args.command](cfg, args.resume)
    except (ConfigError, UsageError) as exc:
        print(f"chaoscope: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoThresholdError as exc:
        print(f"chaoscope: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except Exception as exc:  # noqa: BLE001  stable exit-code contract
        log.debug("failure", exc_info=True)
        print(f"chaoscope: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "label": cmd_label,
    "train": cmd_train,
    "eval": cmd_eval,
    "export-poincare": cmd_export_poincare,
}

if __name__ == "__main__":
    sys.exit(main())
