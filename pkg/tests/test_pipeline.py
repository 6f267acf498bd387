import json
import math

import numpy as np
import pytest

from chaoscope.dynamics import GridSpec
from chaoscope.lyapunov import UNDETERMINED, ChaosLabel
from chaoscope.pipeline import (
    DatasetError,
    DatasetSpec,
    ReferenceCache,
    build_dataset,
    evaluate,
    k_values,
    load_dataset,
    logistic_dataset,
    lorenz_dataset,
    run_classifier_compare,
    run_experiment,
    run_k_generalization,
    run_lyapunov_baseline,
    run_nk_sweep,
    save_dataset,
)
from chaoscope.pipeline.experiments import (
    boundary_error_fraction,
    predictor,
    run_logistic_cross,
    run_lorenz_cross,
    select_inputs,
    train_cross_models,
)

TINY = dict(n_ref=2000, grid_size=11)
FAST = dict(conv_widths=(4,), fc_widths=(3, 1), epochs=1)


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return ReferenceCache(tmp_path_factory.mktemp("cache"))


def test_k_values():
    np.testing.assert_allclose(k_values(1.0, 2.0, 11), [1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0])
    assert k_values(2.5, 2.5, 1).tolist() == [2.5]


def test_spec_validation():
    with pytest.raises(DatasetError):
        DatasetSpec(2.0, 1.0, 2)
    with pytest.raises(DatasetError):
        DatasetSpec(1.0, 2.0, 1)
    with pytest.raises(DatasetError):
        DatasetSpec(1.0, m_tr=2600, m_tt=2)
    with pytest.raises(DatasetError):
        DatasetSpec(1.0, n_k=0)
    assert DatasetSpec(2.5).k_max == 2.5


def test_build_dataset_partitions(cache):
    spec = DatasetSpec(1.0, 2.0, 3, m_tr=80, m_tt=41, n_k=7, **TINY)
    ds = build_dataset(spec, cache)
    assert len(ds) == 3 * 121
    assert ds.X.shape == (363, 7, 2) and ds.n_k == 7
    for K in ds.params:
        m = ds.param == K
        assert ds.train[m].sum() == 80 and (~ds.train[m]).sum() == 41
        cells = {tuple(c) for c in ds.index[m]}
        assert len(cells) == 121  # exhaustive and disjoint
    assert set(np.unique(ds.y)) <= {0, 1}
    np.testing.assert_array_equal(ds.X[:, 0, :], ds.init)
    assert set(ds.provenance["thresholds"]) == {"1.0", "1.5", "2.0"}


def test_build_dataset_is_stable(cache):
    spec = DatasetSpec(2.5, m_tr=60, m_tt=30, n_k=5, seed=3, **TINY)
    a, b = build_dataset(spec, cache), build_dataset(spec, cache)
    assert a == b
    c = build_dataset(DatasetSpec(2.5, m_tr=60, m_tt=30, n_k=5, seed=4, **TINY), cache)
    assert not np.array_equal(a.train, c.train) or not np.array_equal(a.index, c.index)


def test_default_grid_size_matches_table_grid(cache):
    spec = DatasetSpec(2.5, m_tr=2081, m_tt=520, n_k=20, n_ref=50)
    ds = build_dataset(spec, cache)
    assert len(ds) == 2601 and ds.train.sum() == 2081
    assert ds.X.shape[1] == 20


def test_cache_hits_disk(tmp_path):
    c1 = ReferenceCache(tmp_path)
    a = c1.lambdas(2.0, 500, GridSpec(5, 5, 0.25))
    assert len(list(tmp_path.glob("*.npy"))) == 1
    calls = []
    b = ReferenceCache(tmp_path).cached(next(tmp_path.glob("*.npy")).stem, lambda: calls.append(1))
    np.testing.assert_array_equal(a, b)
    assert not calls


def test_save_load_round_trip(tmp_path, cache):
    ds = build_dataset(DatasetSpec(2.5, m_tr=50, m_tt=20, n_k=6, **TINY), cache)
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back == ds
    assert back.provenance["spec"]["n_k"] == 6


def test_load_detects_problems(tmp_path, cache):
    ds = build_dataset(DatasetSpec(2.5, m_tr=10, m_tt=5, n_k=4, **TINY), cache)
    d = save_dataset(ds, tmp_path / "d")
    text = (d / "labels.csv").read_text()
    (d / "labels.csv").write_text(text.replace(",train", ",test", 1))
    with pytest.raises(DatasetError, match="checksum"):
        load_dataset(d)
    (d / "labels.csv").unlink()
    with pytest.raises(DatasetError, match="missing"):
        load_dataset(d)
    save_dataset(ds, d)
    meta = json.loads((d / "dataset.json").read_text())
    meta["version"] = 99
    (d / "dataset.json").write_text(json.dumps(meta))
    with pytest.raises(DatasetError, match="version"):
        load_dataset(d)


def test_evaluate_reference_as_prediction(cache):
    ds = build_dataset(DatasetSpec(1.0, 2.0, 2, m_tr=50, m_tt=71, n_k=5, **TINY), cache)
    test = ds.partition("test")
    rep = evaluate(test.y, ds, "test")
    for sr in list(rep.per_param.values()) + [rep.aggregate]:
        assert sr.n_errors == 0
        assert sr.p_tot == 1.0
    agg = rep.aggregate
    assert agg.a_c == sum(s.a_c for s in rep.per_param.values())
    assert agg.b_r == sum(s.b_r for s in rep.per_param.values())


def test_evaluate_all_chaotic_and_error_map(cache):
    ds = build_dataset(DatasetSpec(2.0, m_tr=0, m_tt=121, n_k=5, **TINY), cache)
    rep = evaluate(lambda X: np.ones(len(X)), ds, "test")
    assert rep.aggregate.p_c == 1.0 and rep.aggregate.p_r == 0.0
    assert rep.errors.sum() == rep.aggregate.n_errors
    lines = rep.error_map_csv().splitlines()
    assert lines[0] == "K,i,j,p0,x0,lambda_ref,true,pred"
    assert len(lines) - 1 == len(ds)
    wrong = sum(1 for ln in lines[1:] if ln.split(",")[-2] != ln.split(",")[-1])
    assert wrong == (rep.aggregate.a_c - rep.aggregate.b_c) + (rep.aggregate.a_r - rep.aggregate.b_r)
    csv = rep.to_csv().splitlines()
    assert csv[0] == "K,A_C,A_R,B_C,B_R,P_C,P_R,P_tot" and csv[-1].startswith("all,")


def test_evaluate_balanced_all_chaotic():
    from chaoscope.pipeline import LabeledDataset

    y = np.array([0, 1] * 10, dtype=np.int8)
    ds = LabeledDataset("standard", "K", np.zeros((20, 3, 2)), y, np.full(20, 1.0),
                        np.zeros((20, 2), int), np.zeros((20, 2)), np.zeros(20), np.zeros(20, bool))
    sr = evaluate(np.ones(20), ds, "test").aggregate
    assert (sr.p_c, sr.p_r, sr.p_tot) == (1.0, 0.0, 0.5)
    with pytest.raises(ValueError):
        evaluate(np.ones(3), ds, "test")


def test_select_inputs():
    X = np.zeros((2, 4, 1))
    assert select_inputs(X, "cnn2d").shape == (2, 4, 2)
    assert select_inputs(np.zeros((2, 4, 2)), "cnn1d").shape == (2, 4, 1)


def test_logistic_reference_sanity(cache):
    ds = logistic_dataset([3.2, 4.0], n_x0=20, n_k=5, n_ref=20_000, cache=cache)
    assert (ds.y[ds.param == 3.2] == ChaosLabel.REGULAR).all()
    assert (ds.y[ds.param == 4.0] == ChaosLabel.CHAOTIC).all()
    np.testing.assert_allclose(ds.lam[ds.param == 4.0], math.log(2), atol=0.02)
    assert ds.X.shape == (40, 5, 1)


def test_lorenz_dataset_shapes(cache):
    ds = lorenz_dataset([5.0, 28.0], n_ic=6, n_k=5, n_ref=5000, cache=cache)
    assert ds.X.shape == (12, 5, 3) and ds.init.shape == (12, 3)
    assert set(np.unique(ds.y)) <= {UNDETERMINED, 0, 1}
    # rho = 5 lies below the chaotic regime: the orbits settle on a fixed point
    assert (ds.y[ds.param == 5.0] != ChaosLabel.CHAOTIC).all()


# -- experiment runners on toy sizes --------------------------------------

TR = DatasetSpec(1.0, 2.0, 2, m_tr=60, m_tt=0, n_k=5, **TINY)
TT = DatasetSpec(3.0, 3.5, 2, m_tr=0, m_tt=121, n_k=5, **TINY)


def test_nk_sweep_outputs(tmp_path, cache):
    res = run_nk_sweep([5, 1], TR, TT, cache=cache, out_dir=tmp_path, **FAST)
    assert len(res["rows"]) == 4
    head = (tmp_path / "nk_sweep.csv").read_text().splitlines()[0]
    assert head == "K,N_K,P_C,P_R,P_tot"
    table = (tmp_path / "table_I.csv").read_text().splitlines()
    assert table[0] == "K,N_K=5,N_K=1" and len(table) == 3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["experiment"] == "nk_sweep" and "numpy" in manifest["versions"]
    assert manifest["wall_time_s"] >= 0


def test_k_generalization_runs(tmp_path, cache):
    res = run_k_generalization("count", eval_ks=[0.5, 2.0], n_k=5, m_tr=40, configs=[(0.1, 3.1, 2), (2.5, 2.5, 1)],
                               cache=cache, out_dir=tmp_path, **FAST)
    assert len(res["summary"]) == 2 and len(res["rows"]) == 4
    assert (tmp_path / "k_generalization_count.csv").exists()


def test_lyapunov_baseline_runs(tmp_path):
    res = run_lyapunov_baseline(2.5, n_list=[20, 200], n_ref=2000, grid=GridSpec(11, 11, 0.1), out_dir=tmp_path)
    last = res["rows"][-1]
    assert last["N"] == 2000 and last["P_tot"] == 1.0
    assert (tmp_path / "histograms.csv").read_text().startswith("N,bin_center,count")
    assert (tmp_path / "reference_labels.csv").read_text().startswith("i,j,p0,x0,lambda_N,label")


def test_classifier_compare_is_deterministic(tmp_path, cache):
    a = run_classifier_compare(TR, TT, cache=cache, **FAST)
    b = run_classifier_compare(TR, TT, cache=cache, out_dir=tmp_path, **FAST)
    assert a["rows"] == b["rows"]
    assert [r["classifier"] for r in a["rows"]] == ["fcn", "cnn2d"]
    for r in a["rows"]:
        assert all(0.0 <= r[k] <= 1.0 for k in ("P_tot", "P_C", "P_R"))


def test_cross_tests_run(tmp_path, cache):
    m2, m1 = train_cross_models(0, cache, TR, **FAST)
    lc = run_logistic_cross(m2, m1, r_values=[3.2, 4.0], n_x0=4, n_k=5, n_ref=2000, cache=cache,
                            out_dir=tmp_path / "lc")
    assert [r["model"] for r in lc["rows"]] == ["2D", "1D"]
    assert (tmp_path / "lc" / "logistic_error_map_1D.csv").exists()
    frac = boundary_error_fraction(lc["reports"]["2D"])
    assert math.isnan(frac) or 0.0 <= frac <= 1.0
    lz = run_lorenz_cross(m2, m1, rho_values=[5.0, 28.0], n_ic=4, n_k=5, n_ref=2000, cache=cache,
                          out_dir=tmp_path / "lz")
    assert len(lz["rows"]) == 12
    assert {(r["projection"], r["normalized"]) for r in lz["rows"]} == {
        (p, n) for p in ("XY", "XZ", "YZ", "X", "Y", "Z") for n in (False, True)}


def test_predictor_normalizes(cache):
    m2, _ = train_cross_models(0, cache, TR, **FAST)
    X = np.random.default_rng(0).normal(size=(5, 5, 2)) * 100
    from chaoscope.dynamics import normalize_values

    np.testing.assert_array_equal(predictor(m2, "cnn2d", normalize=True)(X), m2.predict(normalize_values(X, axis=1)))


def test_unknown_experiment():
    with pytest.raises(KeyError):
        run_experiment("nope")
