"""Heteroscedastic regression: Normal (MLE), Student-t and variational-variance models."""
import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import ndcore as nd
from .dists import (GammaParams, Normal, StudentT, StudentTParams, normal_log_prob,
                    student_t_log_prob)
from .priors import PriorConfig, PriorSpec, init_prior, kl_term

MODEL_KINDS = ("normal", "student", "variational")
LOG_2PI = float(np.log(2.0 * np.pi))
# added to alpha - 1 so 1 + softplus cannot round to exactly 1 (df = 2, infinite variance)
ALPHA_OFFSET_FLOOR = 1e-8
# keeps beta and the Normal variance positive where softplus underflows on extreme inputs
SCALE_FLOOR = 1e-12


def epochs_from_iterations(iterations, batch_size):
    return int(math.ceil(iterations / batch_size))


def uci_iterations(n_observations):
    return 100_000 if n_observations > 9000 else 20_000


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 100
    patience: int = 50
    adam: tuple = (0.9, 0.999, 1e-7)

    @classmethod
    def toy(cls, epochs=6000):
        return cls(learning_rate=5e-3, batch_size=None, epochs=epochs, patience=None)

    @classmethod
    def uci(cls, n_observations, batch_size=256):
        iters = uci_iterations(n_observations)
        return cls(learning_rate=1e-3, batch_size=batch_size,
                   epochs=epochs_from_iterations(iters, batch_size), patience=50)


def expected_log_likelihood(y, mu, q):
    """E_{lam ~ Gam(alpha, beta)}[log N(y | mu, 1/lam)], elementwise."""
    a, b = q.alpha, q.beta
    resid2 = nd.square(nd.as_tensor(y) - mu)
    return 0.5 * (nd.digamma(a) - nd.log(b) - LOG_2PI - (a / b) * resid2)


def gamma_heads(a_raw, b_raw):
    """alpha = 1 + softplus, beta = softplus, from unconstrained head outputs."""
    return GammaParams((1.0 + ALPHA_OFFSET_FLOOR) + nd.softplus(a_raw), nd.softplus(b_raw) + SCALE_FLOOR)


class RegressionModel:
    """Mean network plus a variance (Normal) or alpha/beta (Student, variational) head.

    The alpha/beta heads share one hidden trunk when ``shared_trunk`` is set.
    alpha is offset by one so the predictive variance beta / (alpha - 1) exists.
    ``head_init="zeros"`` starts the alpha/beta output layers at zero, i.e. the
    same Gamma everywhere; a random start gives precisions spanning orders of
    magnitude whose early collapse stalls Adam on the mean network.
    """

    def __init__(self, kind, dim_x, dim_y, rng, hidden=(50,), activation="elu",
                 prior=None, shared_trunk=True, training_inputs=None, store=None,
                 init="glorot", init_gain=1.0, input_gain=None, head_init="zeros"):
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
        self.kind = kind
        self.dim_x, self.dim_y = dim_x, dim_y
        self.hidden = tuple(hidden)
        self.activation = activation
        self.shared_trunk = shared_trunk
        self.store = store if store is not None else nd.ParamStore()
        s = self.store
        self.mean_net = nd.MLP(s, "mu", (dim_x,) + self.hidden + (dim_y,), rng, act=activation, init=init, gain=init_gain, input_gain=input_gain)
        if kind == "normal":
            self.var_net = nd.MLP(s, "var", (dim_x,) + self.hidden + (dim_y,), rng,
                                  act=activation, out_act="softplus", init=init, gain=init_gain, input_gain=input_gain)
        elif shared_trunk:
            self.trunk = nd.MLP(s, "precision/trunk", (dim_x,) + self.hidden, rng,
                                act=activation, out_act=activation, init=init, gain=init_gain, input_gain=input_gain)
            head = init if head_init is None else head_init
            self.alpha_out = nd.Dense(s, "precision/alpha", self.hidden[-1], dim_y, rng, head, init_gain)
            self.beta_out = nd.Dense(s, "precision/beta", self.hidden[-1], dim_y, rng, head, init_gain)
        else:
            self.alpha_net = nd.MLP(s, "alpha", (dim_x,) + self.hidden + (dim_y,), rng, act=activation, init=init, gain=init_gain, input_gain=input_gain)
            self.beta_net = nd.MLP(s, "beta", (dim_x,) + self.hidden + (dim_y,), rng, act=activation, init=init, gain=init_gain, input_gain=input_gain)
            if head_init is not None:
                for net in (self.alpha_net, self.beta_net):
                    last = net.layers[-1]
                    fresh = nd.Dense(nd.ParamStore(), "tmp", *last.w.shape, rng, head_init, init_gain)
                    last.w.data, last.b.data = fresh.w.data, fresh.b.data

        self.prior = None
        if kind == "variational":
            if prior is None:
                prior = PriorConfig("Standard")
            if isinstance(prior, PriorSpec):
                self.prior = prior
            else:
                self.prior = init_prior(prior.kind, prior, training_inputs, rng, s, cond_dim=dim_x)
        self.prior_config = prior if isinstance(prior, PriorConfig) else None

    # ---- heads
    def mean(self, x):
        return self.mean_net(x)

    def variance(self, x):
        return self.var_net(x) + SCALE_FLOOR

    def gamma_params(self, x):
        if self.kind == "normal":
            raise ValueError("Normal model has no Gamma heads")
        if self.shared_trunk:
            h = self.trunk(x)
            a_raw, b_raw = self.alpha_out(h), self.beta_out(h)
        else:
            a_raw, b_raw = self.alpha_net(x), self.beta_net(x)
        return gamma_heads(a_raw, b_raw)

    # ---- objectives
    def objective(self, x, y, rng):
        """Quantity to maximize for this kind (summed over the batch)."""
        if self.kind == "normal":
            return -nll_normal(self, x, y)
        if self.kind == "student":
            return -nll_student(self, x, y)
        return elbo(self, x, y, rng)

    def predictive(self, x):
        return posterior_predictive(self, x)

    def manifest(self, config=None):
        cfg = {} if config is None else (asdict(config) if hasattr(config, "__dataclass_fields__") else config)
        blob = json.dumps(cfg, sort_keys=True, default=str).encode()
        return {
            "model": "regression",
            "kind": self.kind,
            "dim_x": self.dim_x,
            "dim_y": self.dim_y,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "prior": None if self.prior is None else self.prior.kind,
            "config_hash": hashlib.sha256(blob).hexdigest(),
        }

    def save(self, path, config=None):
        self.store.save(path, self.manifest(config))

    def load(self, path):
        return self.store.load(path)


def _as_2d(a):
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def elbo(model, x, y, rng):
    if model.kind != "variational":
        raise ValueError(f"elbo needs a variational model, got {model.kind!r}")
    x, y = _as_2d(x), _as_2d(y)
    if not len(x):
        raise ValueError("empty batch")
    mu = model.mean(x)
    q = model.gamma_params(x)
    ell = expected_log_likelihood(y, mu, q).sum(axis=-1)
    kl = kl_term(model.prior, q, x, rng, precision_fn=model.gamma_params)
    return (ell - kl).sum()


def nll_normal(model, x, y):
    if model.kind != "normal":
        raise ValueError(f"nll_normal needs a normal model, got {model.kind!r}")
    x, y = _as_2d(x), _as_2d(y)
    mu, var = model.mean(x), model.variance(x)
    return -normal_log_prob(y, mu, 1.0 / var).sum()


def nll_student(model, x, y):
    if model.kind != "student":
        raise ValueError(f"nll_student needs a student model, got {model.kind!r}")
    x, y = _as_2d(x), _as_2d(y)
    mu = model.mean(x)
    params = StudentTParams.from_gamma(mu, model.gamma_params(x))
    return -student_t_log_prob(y, params).sum()


def posterior_predictive(model, x):
    x = _as_2d(x)
    with nd.no_grad():
        mu = model.mean(x).data
        if model.kind == "normal":
            return Normal(mu, np.sqrt(model.variance(x).data))
        q = model.gamma_params(x)
        return StudentT.from_gamma(mu, q.alpha.data, q.beta.data)


def mean_log_predictive(model, x, y):
    return float(np.mean(posterior_predictive(model, x).joint_log_prob(_as_2d(y))))


def train(model, train_set, val_set, config, rng, callback=None):
    """Minibatch Adam on the model's objective with optional early stopping.

    ``train_set``/``val_set`` are (x, y) pairs; ``val_set`` may be None, in which
    case no early stopping happens. Returns (model, history).
    """
    x, y = (_as_2d(a) for a in train_set)
    n = len(x)
    if n == 0:
        raise ValueError("empty training split")
    if val_set is not None:
        xv, yv = (_as_2d(a) for a in val_set)
        if len(xv) == 0:
            raise ValueError("empty validation split")
    bs = n if not config.batch_size else min(config.batch_size, n)
    history = []
    best, best_metric, since_best = None, -np.inf, 0
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            obj = model.objective(x[idx], y[idx], rng)
            loss = -obj / len(idx)
            try:
                nd.backward(loss)
            except nd.DivergenceError as err:
                raise nd.DivergenceError(f"{model.kind} training diverged at epoch {epoch}: {err}", step) from None
            nd.adam_step(model.store, config.learning_rate, *config.adam)
            total += float(obj.data)
            step += 1
        record = {"epoch": epoch, "objective": total / n}
        if val_set is not None:
            metric = mean_log_predictive(model, xv, yv)
            record["val_log_predictive"] = metric
            if metric > best_metric:
                best, best_metric, since_best = model.store.snapshot(), metric, 0
            else:
                since_best += 1
        history.append(record)
        if callback is not None:
            callback(model, record)
        if val_set is not None and config.patience is not None and since_best >= config.patience:
            break
    if best is not None:
        model.store.restore(best)
    return model, history
