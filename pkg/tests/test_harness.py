import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varvar import ppc
from varvar.dists import Normal, StudentT, uniform_mixture
from varvar.harness import cli, data, experiment
from varvar.harness.experiment import ConfigError, ExperimentConfig


def test_toy_generator_examples():
    assert data.toy_true_std(0.0) == pytest.approx(0.3)
    assert data.toy_true_std(9.0) == pytest.approx(3.0)
    assert data.toy_true_mean(0.0) == 0.0
    rng = np.random.default_rng(0)
    draws = data.toy_sample(np.full(10**5, 4.0), rng) - data.toy_true_mean(4.0)
    sd = draws.std(ddof=1)
    # standard error of a sample std is about sd / sqrt(2(n-1))
    assert abs(sd - 1.5) < 4 * sd / np.sqrt(2 * (10**5 - 1))


def test_toy_dataset_layout():
    ds = data.toy_generate(500, np.random.default_rng(1))
    assert ds.shape == (500, 1, 1)
    assert ds.x.min() >= 0 and ds.x.max() <= 10
    assert ds.val is None
    np.testing.assert_allclose(ds.x_test[[0, -1], 0], [-4, 14])
    assert np.allclose(np.diff(ds.x_test[:, 0]), np.diff(ds.x_test[:, 0])[0])
    with pytest.raises(data.DataError):
        data.toy_generate(0)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(12, 80), st.integers(1, 4))
def test_whitening_invariants(seed, n, d):
    rng = np.random.default_rng(seed)
    x = rng.normal(3, 5, size=(n, d))
    x[:, 0] = 7.0
    y = rng.normal(-2, 0.1, size=(n, 1))
    ds = data.make_dataset(x, y, 0.1, rng, "csv")
    assert len(ds.val_idx) == round(0.1 * n)
    xt, yt = ds.train
    np.testing.assert_allclose(xt.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(xt[:, 1:].var(axis=0), 1, atol=1e-6)
    assert ds.x_scale[0] == 1.0
    np.testing.assert_allclose(yt.var(axis=0), 1, atol=1e-6)
    # idempotence and inverse
    m2, s2 = data.whiten_stats(yt)
    np.testing.assert_allclose((yt - m2) / s2, yt, atol=1e-9)
    np.testing.assert_allclose(ds.dewhiten_y(yt), y[ds.train_idx], atol=1e-9)


def test_load_csv(tmp_path):
    rng = np.random.default_rng(2)
    rows = rng.normal(size=(506, 14))
    path = write_csv(tmp_path / "boston.csv", [f"f{i}" for i in range(13)] + ["medv"], rows)
    ds = data.load_csv(path, "medv", rng=rng)
    assert ds.shape == (506, 13, 1) and ds.provenance == "csv" and ds.name == "boston"
    assert len(ds.val_idx) == 51
    np.testing.assert_array_equal(data.load_csv(path, [13]).y[:, 0], rows[:, 13])


def test_csv_errors(tmp_path):
    with pytest.raises(data.DataError, match="no such file"):
        data.load_csv(tmp_path / "missing.csv", "y")
    path = write_csv(tmp_path / "a.csv", ["a", "y"], [[1, 2], [3, 4]])
    with pytest.raises(data.DataError, match="missing target column 'z'"):
        data.load_csv(path, "z")
    path = write_csv(tmp_path / "b.csv", ["a", "y"], [[1, 2], [3, "oops"]])
    with pytest.raises(data.DataError, match="row 3, column 2"):
        data.load_csv(path, "y")
    path = write_csv(tmp_path / "c.csv", ["a", "y"], [[1, 2], [3]])
    with pytest.raises(data.DataError, match="row 3"):
        data.load_csv(path, "y")


def test_dewhiten_examples():
    rng = np.random.default_rng(3)
    p = StudentT(rng.uniform(3, 8, (10, 2)), rng.normal(size=(10, 2)), rng.uniform(0.5, 2, (10, 2)))
    same = experiment.dewhiten_predictive(p, [1.0, 1.0], [0.0, 0.0])
    np.testing.assert_array_equal(same.mean(), p.mean())
    scales, means = np.array([2.0, 0.5]), np.array([10.0, -1.0])
    q = experiment.dewhiten_predictive(p, scales, means)
    np.testing.assert_allclose(q.variance(), p.variance() * scales ** 2)
    y = rng.normal(size=(10, 2))
    y_orig = y * scales + means
    np.testing.assert_allclose(q.joint_log_prob(y_orig), p.joint_log_prob(y) - np.log(scales).sum(), atol=1e-12)
    # direct density in original space
    from scipy import stats
    direct = stats.t.logpdf(y_orig, p.df, p.loc * scales + means, p.scale * scales).sum(axis=1)
    np.testing.assert_allclose(q.joint_log_prob(y_orig), direct, atol=1e-10)
    with pytest.raises(ValueError):
        experiment.dewhiten_predictive(p, [1.0, 0.0], [0.0, 0.0])


def test_dewhiten_mixture_componentwise():
    rng = np.random.default_rng(4)
    m = uniform_mixture(Normal(rng.normal(size=(5, 3, 4)), rng.uniform(0.5, 1, (5, 3, 4))))
    q = experiment.dewhiten_predictive(m, 3.0, 1.0)
    np.testing.assert_allclose(q.mean(), 3 * m.mean() + 1)
    np.testing.assert_allclose(q.variance(), 9 * m.variance())


def test_evaluate_after_dewhitening_matches_whitened_report():
    rng = np.random.default_rng(5)
    p = StudentT(rng.uniform(3, 8, (40, 1)), rng.normal(size=(40, 1)), rng.uniform(0.5, 2, (40, 1)))
    y = rng.normal(size=(40, 1))
    scale, mean = 4.0, 2.0
    white = ppc.evaluate(p, y, np.random.default_rng(9))
    orig = ppc.evaluate(experiment.dewhiten_predictive(p, [scale], [mean]), y * scale + mean, np.random.default_rng(9))
    assert orig.ll == pytest.approx(white.ll - np.log(scale), abs=1e-8)
    for k in ("mean", "sample"):
        np.testing.assert_allclose(orig.residuals[k], scale * white.residuals[k], atol=1e-8)
    np.testing.assert_allclose(orig.residuals["var"], scale ** 2 * white.residuals["var"], atol=1e-8)


def test_idx_and_image_csv_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    imgs = rng.integers(0, 256, size=(7, 4, 5)).astype(np.uint8)
    data.write_idx(tmp_path / "imgs.idx", imgs)
    np.testing.assert_array_equal(data.load_idx(tmp_path / "imgs.idx"), imgs)
    (tmp_path / "bad.idx").write_bytes(b"\x01\x02\x03")
    with pytest.raises(data.DataError):
        data.load_idx(tmp_path / "bad.idx")
    d = tmp_path / "csvimgs"
    d.mkdir()
    for i, im in enumerate(imgs):
        np.savetxt(d / f"img{i:02d}.csv", im, delimiter=",")
    np.testing.assert_array_equal(data.load_image_csv_dir(d), imgs)
    x = data.to_unit_interval(imgs)
    assert x.shape == (7, 20) and x.max() <= 1


def test_grid_csv_layout(tmp_path):
    a = np.random.default_rng(7).uniform(-0.5, 1.5, size=(3, 4))
    data.write_grid_csv(tmp_path / "g.csv", a, a, a, a)
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["block", "example", "p0", "p1", "p2", "p3"]
    assert [r[0] for r in rows[1:]] == ["data"] * 3 + ["mean"] * 3 + ["variance"] * 3 + ["sample"] * 3
    vals = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
    assert vals.min() >= 0 and vals.max() <= 1


def test_digits_desk_dataset():
    x, y = data.digits_16x16()
    assert x.shape == (1797, 256) and 0 <= x.min() and x.max() <= 1


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="trial"):
        ExperimentConfig("toy", ["normal"], trials=0)
    with pytest.raises(ConfigError, match="unknown model"):
        ExperimentConfig("toy", ["cauchy"])
    with pytest.raises(ConfigError):
        ExperimentConfig("toy", [{"model": "variational", "prior": "horseshoe"}])
    with pytest.raises(ConfigError, match="takes no prior"):
        ExperimentConfig("toy", [{"model": "normal", "prior": "VAP"}])
    with pytest.raises(ConfigError, match="duplicate"):
        ExperimentConfig("toy", ["normal", "normal"])
    with pytest.raises(ConfigError, match="dataset.path"):
        ExperimentConfig("uci", ["normal"])
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"task": "toy", "methods": ["normal"], "epochs": 3})
    with pytest.raises(ConfigError, match="unknown task"):
        ExperimentConfig("images", ["normal"])
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        ExperimentConfig.from_json(tmp_path / "bad.json")
    cfg = ExperimentConfig("regression", [{"model": "variational", "prior": "vampstar"}], dataset={"path": "x.csv"})
    assert cfg.task == "uci" and cfg.train["batch_size"] == 256
    assert experiment.method_label(cfg.methods[0]) == "Variational-VAMPstar"


def test_protocol_defaults():
    toy = ExperimentConfig("toy", ["normal"])
    assert toy.train["batch_size"] is None and toy.train["epochs"] == 6000 and toy.train["learning_rate"] == 5e-3
    uci = ExperimentConfig("uci", ["normal"], dataset={"path": "x.csv"})
    assert experiment._regression_train_config(uci, 455).epochs == 79
    assert experiment._regression_train_config(uci, 10000).epochs == 391
    uci.train["iterations"] = 1000
    assert experiment._regression_train_config(uci, 455).epochs == 4


def test_seed_streams_are_stable_under_more_trials():
    cfg = ExperimentConfig("toy", ["normal"], trials=2)
    a = experiment.trial_rngs(cfg, 1, "Normal-NA")[0].random(3)
    cfg.trials = 50
    b = experiment.trial_rngs(cfg, 1, "Normal-NA")[0].random(3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, experiment.trial_rngs(cfg, 2, "Normal-NA")[0].random(3))


@pytest.fixture
def small_csv(tmp_path):
    rng = np.random.default_rng(8)
    x = rng.normal(size=(60, 3))
    y = x @ [1.0, -2.0, 0.5] + 0.3 * rng.normal(size=60)
    return write_csv(tmp_path / "lin.csv", ["a", "b", "c", "y"], np.c_[x, y])


def small_uci(path, out, trials=2, methods=("normal", "student", {"model": "variational", "prior": "VAP"})):
    return ExperimentConfig.from_dict({
        "task": "uci", "methods": list(methods), "dataset": {"path": str(path)}, "trials": trials,
        "train": {"epochs": 3, "batch_size": 16}, "architecture": {"hidden": [8]}, "out": str(out)})


def test_trial_json_is_deterministic(small_csv, tmp_path):
    cfg = small_uci(small_csv, tmp_path / "r1", trials=1)
    (p1, s1), = experiment.run_experiment(small_uci(small_csv, tmp_path / "r1", 1, ["student"]))
    (p2, s2), = experiment.run_experiment(small_uci(small_csv, tmp_path / "r2", 1, ["student"]))
    assert s1 == s2 == "ok"
    assert open(p1, "rb").read() == open(p2, "rb").read()
    assert p1.endswith("uci/lin/Student-NA/trial-0.json")
    assert cfg.to_dict()["task"] == "uci"


def test_summary_tables(small_csv, tmp_path):
    out = tmp_path / "res"
    cfg = small_uci(small_csv, out)
    results = experiment.run_experiment(cfg)
    assert len(results) == 6 and all(s == "ok" for _, s in results)
    rows = list(csv.reader(open(out / "uci" / "lin" / "summary.csv")))
    assert rows[0] == ["method", "trials"] + list(ppc.REGRESSION_METRICS)
    assert [r[0] for r in rows[1:]] == ["Normal-NA", "Student-NA", "Variational-VAP"]
    assert all(r[1] == "2" and "±" in r[2] for r in rows[1:])
    tally = list(csv.reader(open(out / "uci" / "tally.csv")))
    assert len(tally) == 4 and len(tally[0]) == 1 + 2 * 7
    flat = list(csv.reader(open(out / "uci" / "trials.csv")))
    assert len(flat) == 7
    assert experiment.summarize(out, "uci") == experiment.summarize(out)


def test_failed_trial_is_recorded(small_csv, tmp_path):
    cfg = small_uci(small_csv, tmp_path / "res", trials=1, methods=["normal"])
    cfg.train["learning_rate"] = float("nan")
    (path, status), = experiment.run_experiment(cfg)
    rec = json.loads(open(path).read())
    assert status == "failed" and rec["status"] == "failed" and rec["error"]
    rows = list(csv.reader(open(tmp_path / "res" / "uci" / "trials.csv")))
    assert rows[1][3] == "failed"


def test_cli(small_csv, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": "regress", "methods": ["normal"], "dataset": {"path": str(small_csv)},
                               "train": {"epochs": 2}, "architecture": {"hidden": [4]}}))
    out = tmp_path / "cli"
    assert cli.main(["regress", "--config", str(cfg), "--trials", "2", "--seed", "3", "--out", str(out)]) == 0
    assert (out / "uci" / "lin" / "Normal-NA" / "trial-1.json").exists()
    assert json.loads((out / "uci" / "lin" / "Normal-NA" / "trial-1.json").read_text())["seed"] == 3
    assert cli.main(["summarize", "--out", str(out)]) == 0
    assert cli.main(["toy", "--config", str(cfg)]) == 2
    assert "does not match" in capsys.readouterr().err
    bad = tmp_path / "nan.json"
    bad.write_text(json.dumps({"task": "uci", "methods": ["normal"], "dataset": {"path": str(small_csv)},
                               "train": {"epochs": 2, "learning_rate": float("nan")}}))
    assert cli.main(["regress", "--config", str(bad), "--out", str(tmp_path / "nan")]) == 1


def test_tiny_vae_trial_writes_grid(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "task": "vae", "methods": [{"model": "v3ae", "prior": "Standard"}], "out": str(tmp_path),
        "dataset": {"max_examples": 60}, "train": {"epochs": 1, "mc_samples": 3},
        "architecture": {"hidden": [8], "dim_z": 2}, "grid_examples": 2})
    (path, status), = experiment.run_experiment(cfg)
    rec = json.loads(open(path).read())
    assert status == "ok" and rec["num_components"] == 3
    grid = list(csv.reader(open(tmp_path / "vae" / "digits16" / "V3AE-Standard" / "grid-trial-0.csv")))
    assert len(grid) == 1 + 4 * 2 and len(grid[0]) == 2 + 256
    rows = list(csv.reader(open(tmp_path / "vae" / "digits16" / "summary.csv")))
    assert len(rows[0]) == 2 + 4
