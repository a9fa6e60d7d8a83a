"""Experiment configs, per-trial runs, result files and aggregation."""
import csv
import json
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import ppc, regress, v3ae
from ..priors import PriorConfig, canonical_kind
from . import data

TASKS = ("toy", "uci", "vae")
TASK_ALIASES = {"regress": "uci", "regression": "uci"}
METHOD_NAMES = {
    "normal": "Normal", "student": "Student", "variational": "Variational",
    "fixed": "FixedVar", "vae": "VAE", "vae_split": "VAESplit", "map": "MAP", "v3ae": "V3AE",
}
# beta1, beta2, eps
ADAM = (0.9, 0.999, 1e-7)
# per-task defaults; anything in a config file overrides these key by key
DEFAULTS = {
    "toy": {
        "dataset": {"name": "toy", "n_train": 500, "n_test": 1000},
        "train": {"learning_rate": 5e-3, "batch_size": None, "epochs": 6000, "patience": None},
        "architecture": {"hidden": [50], "activation": "sigmoid", "init": "uniform", "init_gain": 1.0,
                         "input_gain": 6.0},
        "prior": {"num_components": 20, "pseudo_range": [-4.0, 14.0], "mc_samples": 1},
        "val_fraction": 0.0,
    },
    "uci": {
        "dataset": {},
        "train": {"learning_rate": 1e-3, "batch_size": 256, "iterations": None, "epochs": None, "patience": 50},
        "architecture": {"hidden": [50], "activation": "elu", "init": "glorot", "init_gain": 1.0,
                         "input_gain": None},
        "prior": {"a": 1.0, "b": 0.001, "num_components": 100, "mc_samples": 1},
        "val_fraction": 0.1,
    },
    "vae": {
        "dataset": {},
        "train": {"learning_rate": 1e-3, "batch_size": 256, "epochs": 100, "patience": 50, "mc_samples": 20},
        "architecture": {"hidden": [128, 64], "dim_z": 8, "activation": "elu", "batch_norm": False},
        "prior": {"a": 1.0, "b": 0.001, "num_components": 100, "mc_samples": 1},
        "val_fraction": 0.1,
    },
}


class ConfigError(ValueError):
    pass


def canonical_task(task):
    task = TASK_ALIASES.get(task, task)
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    return task


@dataclass
class ExperimentConfig:
    task: str
    methods: list
    dataset: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    train: dict = field(default_factory=dict)
    architecture: dict = field(default_factory=dict)
    prior: dict = field(default_factory=dict)
    val_fraction: float = None
    out: str = "results"
    workers: int = 1
    grid_examples: int = 10

    def __post_init__(self):
        self.task = canonical_task(self.task)
        base = DEFAULTS[self.task]
        self.dataset = {**base["dataset"], **(self.dataset or {})}
        self.train = {**base["train"], **(self.train or {})}
        self.architecture = {**base["architecture"], **(self.architecture or {})}
        self.prior = {**base["prior"], **(self.prior or {})}
        if self.val_fraction is None:
            self.val_fraction = base["val_fraction"]
        if int(self.trials) < 1:
            raise ConfigError(f"trial count must be >= 1, got {self.trials}")
        if int(self.workers) < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")
        if not self.methods:
            raise ConfigError("config lists no methods")
        self.methods = [normalize_method(m, self.task) for m in self.methods]
        labels = [method_label(m) for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate method labels {labels}")
        if self.task == "uci" and "path" not in self.dataset:
            raise ConfigError("regression task needs dataset.path (numeric CSV)")

    @classmethod
    def from_dict(cls, d):
        # top-level keys starting with "_" are annotations
        d = {k: v for k, v in d.items() if not k.startswith("_")}
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "task" not in d or "methods" not in d:
            raise ConfigError("config needs 'task' and 'methods'")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from None

    def to_dict(self):
        return asdict(self)


def normalize_method(method, task):
    m = {"model": method} if isinstance(method, str) else dict(method)
    kind = m.get("model")
    allowed = v3ae.VAE_KINDS if task == "vae" else regress.MODEL_KINDS
    if kind not in allowed:
        raise ConfigError(f"unknown model {kind!r} for task {task!r}; expected one of {allowed}")
    has_prior = kind in ("variational", "v3ae")
    if has_prior:
        try:
            m["prior"] = canonical_kind(m.get("prior", "Standard"))
        except ValueError as err:
            raise ConfigError(str(err)) from None
    elif m.get("prior") not in (None, "NA"):
        raise ConfigError(f"model {kind!r} takes no prior")
    else:
        m["prior"] = None
    return m


def method_label(method):
    name = method.get("name") or METHOD_NAMES[method["model"]]
    if method.get("batch_norm"):
        name += "+BN"
    prior = method["prior"] or "NA"
    return f"{name}-{prior.replace('*', 'star')}"


# ------------------------------------------------------------------ seeding

def trial_seed(master, trial, *key):
    """Independent stream per (master seed, trial, key); stable under adding trials."""
    return np.random.SeedSequence(int(master), spawn_key=(int(trial),) + tuple(key))


def trial_rngs(config, trial, label):
    data_rng = np.random.default_rng(trial_seed(config.seed, trial, 0))
    model_rng = np.random.default_rng(trial_seed(config.seed, trial, 1, zlib.crc32(label.encode())))
    return data_rng, model_rng


# ------------------------------------------------------------------ data

def build_dataset(config, rng):
    ds = config.dataset
    if config.task == "toy":
        return data.toy_generate(int(ds.get("n_train", 500)), rng, int(ds.get("n_test", 1000)))
    if config.task == "uci":
        targets = ds.get("targets") or _last_column(ds["path"])
        return data.load_csv(ds["path"], targets, config.val_fraction, rng, ds.get("name"))
    return build_images(ds, config.val_fraction, rng)


def _last_column(path):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    return [header[-1].strip()]


def build_images(ds, val_fraction, rng):
    """(train, validation) pixel matrices in [0, 1]."""
    if "idx" in ds:
        x = data.to_unit_interval(data.load_idx(ds["idx"]))
    elif "image_csv_dir" in ds:
        x = data.to_unit_interval(data.load_image_csv_dir(ds["image_csv_dir"]))
    elif ds.get("name", "digits16") == "digits16" and "path" not in ds:
        x, _ = data.digits_16x16()
    else:
        raise ConfigError(f"image dataset needs 'idx' or 'image_csv_dir', got {ds}")
    if "max_examples" in ds:
        x = x[rng.permutation(len(x))[:int(ds["max_examples"])]]
    return data.image_split(x, val_fraction, rng)


def dataset_name(config):
    ds = config.dataset
    if "name" in ds:
        return ds["name"]
    for key in ("path", "idx", "image_csv_dir"):
        if key in ds:
            return Path(ds[key]).name.split(".")[0]
    return "digits16" if config.task == "vae" else config.task


def dewhiten_predictive(p, scales, means):
    """Map a whitened-target predictive back to original units."""
    scales = np.asarray(scales, dtype=np.float64)
    if np.any(~(scales > 0)):
        raise ValueError(f"target scales must be positive, got {scales}")
    return p.affine(np.asarray(means, dtype=np.float64), scales)


# ------------------------------------------------------------------ trials

def _prior_config(config, method, dataset=None):
    params = {**config.prior, **method.get("prior_params", {})}
    params["kind"] = method["prior"]
    if config.task == "toy":
        if params["kind"] == "Standard" and "a" not in params:
            a, b = data.toy_precision_prior()
            # precision of whitened targets is lam * y_scale^2
            params["a"], params["b"] = a, b / float(dataset.y_scale[0]) ** 2
        if params.get("pseudo_range") is not None:
            lo, hi = params["pseudo_range"]
            params["pseudo_range"] = ((lo - dataset.x_mean[0]) / dataset.x_scale[0],
                                      (hi - dataset.x_mean[0]) / dataset.x_scale[0])
    params = {k: v for k, v in params.items() if k in PriorConfig.__dataclass_fields__}
    if params.get("pi_hidden") is not None:
        params["pi_hidden"] = tuple(params["pi_hidden"])
    return PriorConfig(**params)


def _regression_train_config(config, n_train):
    t = config.train
    bs = t.get("batch_size")
    if t.get("epochs"):
        epochs = int(t["epochs"])
    else:
        iters = t.get("iterations") or regress.uci_iterations(n_train)
        epochs = regress.epochs_from_iterations(iters, bs or n_train)
    return regress.TrainConfig(t["learning_rate"], bs, epochs, t.get("patience"), tuple(t.get("adam", ADAM)))


def toy_grid_metrics(x, mean, std):
    """Fit diagnostics on the toy test grid, in original units."""
    x = np.ravel(x)
    mean, std = np.ravel(mean), np.ravel(std)
    inside = (x >= 0) & (x <= 10)
    interior = (x >= 2) & (x <= 8)
    outside = (x <= -1) | (x >= 11)
    return {
        "mean_rmse_0_10": float(np.sqrt(np.mean((mean[inside] - data.toy_true_mean(x[inside])) ** 2))),
        "std_mae_2_8": float(np.mean(np.abs(std[interior] - data.toy_true_std(x[interior])))),
        "std_outside": float(np.mean(std[outside])),
        "true_std_outside": float(np.mean(data.toy_true_std(x[outside]))),
    }


def run_regression_trial(config, method, trial):
    label = method_label(method)
    data_rng, rng = trial_rngs(config, trial, label)
    ds = build_dataset(config, data_rng)
    x_tr, y_tr = ds.train
    arch = config.architecture
    prior = _prior_config(config, method, ds) if method["prior"] else None
    model = regress.RegressionModel(
        method["model"], x_tr.shape[1], y_tr.shape[1], rng, hidden=tuple(arch["hidden"]),
        activation=arch["activation"], prior=prior, training_inputs=x_tr,
        init=arch.get("init", "glorot"), init_gain=arch.get("init_gain", 1.0),
        input_gain=arch.get("input_gain"), shared_trunk=bool(arch.get("shared_trunk", True)))
    tcfg = _regression_train_config(config, len(x_tr))
    model, history = regress.train(model, (x_tr, y_tr), ds.val, tcfg, rng)
    if config.task == "toy":
        x_eval, y_eval = ds.x_test, ds.y_test
    else:
        x_eval, y_eval = ds.val_raw
    pred = dewhiten_predictive(regress.posterior_predictive(model, ds.whiten_x(x_eval)), ds.y_scale, ds.y_mean)
    report = ppc.evaluate(pred, y_eval, rng)
    out = {"metrics": report.to_dict(), "epochs_trained": len(history),
           "final": history[-1] if history else {}, "data_shape": list(ds.shape)}
    if config.task == "toy":
        mean, std = pred.mean(), pred.stddev()
        out["grid"] = {"x": np.ravel(x_eval).tolist(), "mean": np.ravel(mean).tolist(),
                       "std": np.ravel(std).tolist()}
        out["toy"] = toy_grid_metrics(x_eval, mean, std)
    return out


def run_vae_trial(config, method, trial, grid_path=None):
    label = method_label(method)
    data_rng, rng = trial_rngs(config, trial, label)
    train_x, val_x = build_images(config.dataset, config.val_fraction, data_rng)
    arch, t = config.architecture, config.train
    prior = _prior_config(config, method) if method["prior"] else None
    model = v3ae.VaeModel(
        method["model"], train_x.shape[1], int(arch["dim_z"]), rng, hidden=tuple(arch["hidden"]),
        batch_norm=bool(method.get("batch_norm", arch.get("batch_norm", False))),
        fixed_variance=float(method.get("fixed_variance", 1.0)), prior=prior,
        activation=arch["activation"])
    vcfg = v3ae.VaeConfig(t["learning_rate"], t["batch_size"], int(t["epochs"]), t.get("patience"),
                          tuple(arch["hidden"]), int(arch["dim_z"]), int(t["mc_samples"]), tuple(t.get("adam", ADAM)))
    model, history = v3ae.train_vae(model, train_x, val_x if len(val_x) else None, vcfg, rng)
    pred = v3ae.posterior_predictive_vae(model, val_x, vcfg.mc_samples, rng)
    report = ppc.evaluate(pred, val_x, rng)
    ell = float(np.mean(v3ae.expected_log_likelihood_vae(pred, val_x)))
    out = {"metrics": report.to_dict(), "expected_log_likelihood": ell, "epochs_trained": len(history),
           "final": history[-1] if history else {}, "num_components": pred.num_components}
    if grid_path is not None:
        k = min(config.grid_examples, len(val_x))
        sub = val_x[:k]
        data.write_grid_csv(grid_path, sub, pred.mean()[:k], pred.variance()[:k], pred.sample(rng)[:k])
    return out


def trial_path(out, task, dataset, label, trial):
    return Path(out) / task / dataset / label / f"trial-{trial}.json"


def run_trial(config, method_index, trial):
    """Run one (method, trial) cell and write its JSON; failures are recorded, not raised."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    method = config.methods[method_index]
    label = method_label(method)
    path = trial_path(config.out, config.task, dataset_name(config), label, trial)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {"task": config.task, "dataset": dataset_name(config), "method": label,
              "model": method["model"], "prior": method["prior"] or "NA",
              "trial": trial, "seed": config.seed}
    try:
        if config.task == "vae":
            grid = path.with_name(f"grid-trial-{trial}.csv")
            record.update(run_vae_trial(config, method, trial, grid))
        else:
            record.update(run_regression_trial(config, method, trial))
        record["status"] = "ok"
    except Exception as err:  # recorded per trial so the remaining trials still run
        record["status"] = "failed"
        record["error"] = f"{type(err).__name__}: {err}"
        record["traceback"] = traceback.format_exc(limit=5)
    path.write_text(json.dumps(record, sort_keys=True, indent=1) + "\n")
    return str(path), record["status"]


def run_experiment(config, summarize_after=True):
    """Run every (method, trial) cell, then aggregate. Returns [(path, status)]."""
    cells = [(i, k) for k in range(int(config.trials)) for i in range(len(config.methods))]
    if int(config.workers) > 1:
        payload = config.to_dict()
        with ProcessPoolExecutor(max_workers=int(config.workers)) as pool:
            futures = [pool.submit(run_trial, payload, i, k) for i, k in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_trial(config, i, k) for i, k in cells]
    if summarize_after:
        summarize(config.out, config.task)
    return results


# ------------------------------------------------------------------ aggregation

def load_trials(out, task):
    root = Path(out) / task
    records = []
    for p in sorted(root.glob("*/*/trial-*.json")):
        records.append(json.loads(p.read_text()))
    return records


def _fmt(mean, std):
    return f"{mean:.6g} ± {std:.6g}"


def summarize(out, task=None):
    """Write per-task flat trial CSV, mean ± std tables, tallies and plot data.

    Returns the list of files written.
    """
    tasks = [canonical_task(task)] if task else [t for t in TASKS if (Path(out) / t).is_dir()]
    written = []
    for task in tasks:
        records = load_trials(out, task)
        if not records:
            continue
        root = Path(out) / task
        metrics = list(ppc.VAE_METRICS if task == "vae" else ppc.REGRESSION_METRICS)
        ok = [r for r in records if r.get("status") == "ok"]
        written.append(_write_flat(root / "trials.csv", records, ppc.REGRESSION_METRICS))

        by_ds = {}
        for r in ok:
            by_ds.setdefault(r["dataset"], {}).setdefault(r["method"], []).append(r)
        for ds, per_method in sorted(by_ds.items()):
            path = root / ds / "summary.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["method", "trials"] + metrics)
                for label in sorted(per_method):
                    rs = per_method[label]
                    row = [label, len(rs)]
                    for m in metrics:
                        row.append(_fmt(*ppc.mean_std([r["metrics"][m] for r in rs])))
                    w.writerow(row)
            written.append(path)
            if task == "toy":
                written.append(write_toy_plot_data(root / ds / "plot_data.csv", per_method))

        tally = _tally(by_ds, metrics)
        if tally is not None:
            path = root / "tally.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["method"] + [f"{m}_wins" for m in metrics] + [f"{m}_ties" for m in metrics])
                for label in sorted(tally[metrics[0]]):
                    w.writerow([label] + [tally[m][label][0] for m in metrics] + [tally[m][label][1] for m in metrics])
            written.append(path)
        # overall summary across datasets, one row per (dataset, method)
        path = root / "summary.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "method", "trials", "failed"] + metrics)
            failed = {}
            for r in records:
                if r.get("status") != "ok":
                    failed[(r["dataset"], r["method"])] = failed.get((r["dataset"], r["method"]), 0) + 1
            for ds, per_method in sorted(by_ds.items()):
                for label in sorted(per_method):
                    rs = per_method[label]
                    w.writerow([ds, label, len(rs), failed.get((ds, label), 0)]
                               + [_fmt(*ppc.mean_std([r["metrics"][m] for r in rs])) for m in metrics])
        written.append(path)
    return written


def _write_flat(path, records, metrics):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "method", "trial", "status"] + list(metrics))
        for r in sorted(records, key=lambda r: (r["dataset"], r["method"], r["trial"])):
            vals = [r["metrics"][m] for m in metrics] if r.get("status") == "ok" else [""] * len(metrics)
            w.writerow([r["dataset"], r["method"], r["trial"], r["status"]] + [repr(v) if v != "" else v for v in vals])
    return path


def _tally(by_ds, metrics):
    cells = [rs for per in by_ds.values() for rs in per.values()]
    if not cells or min(len(rs) for rs in cells) < 2:
        return None
    out = {}
    for m in metrics:
        results = {ds: {label: [r["metrics"][m] for r in rs] for label, rs in per.items()}
                   for ds, per in by_ds.items()}
        out[m] = ppc.tally_wins(results, better=ppc.METRIC_DIRECTION[m])
    return out


def write_toy_plot_data(path, per_method):
    """x grid, true mean/std and per-method mean/std bands (mean over trials
    plus across-trial deviation)."""
    labels = sorted(per_method)
    x = np.asarray(per_method[labels[0]][0]["grid"]["x"])
    cols = {"x": x, "true_mean": data.toy_true_mean(x), "true_std": data.toy_true_std(x)}
    for label in labels:
        means = np.array([r["grid"]["mean"] for r in per_method[label]])
        stds = np.array([r["grid"]["std"] for r in per_method[label]])
        m, s = means.mean(axis=0), stds.mean(axis=0)
        cols[f"{label}:mean"] = m
        cols[f"{label}:lower"] = m - 2.0 * s
        cols[f"{label}:upper"] = m + 2.0 * s
        cols[f"{label}:std"] = s
        cols[f"{label}:std_sd"] = stds.std(axis=0, ddof=1) if len(stds) > 1 else np.zeros_like(s)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([repr(float(v)) for v in row])
    return path
