"""VAE family with Gaussian decoders: fixed variance, heteroscedastic (shared or
split decoder, optional batch norm), Student-t, MAP precision and V3AE (Gamma
variational posterior over decoder precision).

Posterior predictives are uniform mixtures over S latent draws; V3AE
components are Student-t after integrating the precision out analytically.
"""
from dataclasses import dataclass

import numpy as np

from . import ndcore as nd
from .dists import (GammaParams, Normal, StudentT, StudentTParams, gamma_log_prob,
                    normal_log_prob, student_t_log_prob, uniform_mixture)
from .priors import PriorConfig, PriorSpec, init_prior, kl_term
from .regress import expected_log_likelihood, gamma_heads

VAE_KINDS = ("fixed", "vae", "vae_split", "student", "map", "v3ae")
# keeps the Student-VAE's df strictly above its offset when softplus underflows
DF_FLOOR = 1e-8


@dataclass
class VaeConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 100
    patience: int = 50
    hidden: tuple = (128, 64)
    dim_z: int = 8
    mc_samples: int = 20
    adam: tuple = (0.9, 0.999, 1e-7)

    @classmethod
    def desk(cls, **overrides):
        """16x16 images, encoder 128-64, dim(z)=8, at most 100 epochs."""
        return cls(**overrides)

    @classmethod
    def full_scale(cls, dataset="fashion_mnist", double_mc=False):
        """Full-scale settings; ``double_mc`` for priors that also sample lambda."""
        dim_z = 25 if dataset == "fashion_mnist" else 10
        if double_mc:
            return cls(5e-5, 125, 500, 25, (512, 256, 128), dim_z, 20)
        return cls(5e-5, 256, 1000, 50, (512, 256, 128), dim_z, 20)


def latent_kl(mu, var):
    """KL(N(mu, var) || N(0, I)) summed over the latent axis."""
    return 0.5 * (var + nd.square(mu) - 1.0 - nd.log(var)).sum(axis=-1)


class VaeModel:
    def __init__(self, kind, dim_x, dim_z, rng, hidden=(128, 64), batch_norm=False,
                 fixed_variance=1.0, prior=None, map_a=1.0, map_b=0.001,
                 activation="elu", nu_offset=3.0, store=None):
        if kind not in VAE_KINDS:
            raise ValueError(f"unknown VAE kind {kind!r}; expected one of {VAE_KINDS}")
        self.kind = kind
        self.dim_x, self.dim_z = dim_x, dim_z
        self.hidden = tuple(hidden)
        self.fixed_variance = fixed_variance
        self.map_a, self.map_b = map_a, map_b
        self.nu_offset = nu_offset
        self.store = store if store is not None else nd.ParamStore()
        s = self.store
        bn = batch_norm
        enc = (dim_x,) + self.hidden + (2 * dim_z,)
        dec = (dim_z,) + self.hidden[::-1]
        self.encoder = nd.MLP(s, "encoder", enc, rng, act=activation, batch_norm=bn)
        self.nets = []

        def net(name, out):
            m = nd.MLP(s, name, dec + (out,), rng, act=activation, batch_norm=bn)
            self.nets.append(m)
            return m

        if kind in ("vae", "map"):
            self.decoder = net("decoder", 2 * dim_x)
        else:
            self.mu_net = net("decoder/mu", dim_x)
            if kind == "vae_split":
                self.var_net = net("decoder/var", dim_x)
            elif kind == "student":
                self.lam_net = net("decoder/precision", dim_x)
                self.nu_net = net("decoder/dof", dim_x)
            elif kind == "v3ae":
                self.gamma_net = net("decoder/gamma", 2 * dim_x)

        self.prior = None
        if kind == "v3ae":
            prior = prior if prior is not None else PriorConfig("Standard")
            if isinstance(prior, PriorSpec):
                self.prior = prior
            else:
                self.prior = init_prior(prior.kind, prior, None, rng, s, cond_dim=dim_z, latent=True)

    def train(self, mode=True):
        self.encoder.train(mode)
        for m in self.nets:
            m.train(mode)

    # ---- encoder / decoder heads
    def encode(self, x):
        h = self.encoder(x)
        mu = h[:, :self.dim_z]
        var = nd.softplus(h[:, self.dim_z:])
        return mu, var

    def sample_z(self, mu, var, rng, n=None):
        shape = mu.shape if n is None else (n,) + mu.shape
        eps = rng.standard_normal(shape)
        return mu + nd.sqrt(var) * eps

    def gamma_params(self, z):
        h = self.gamma_net(z)
        d = self.dim_x
        return gamma_heads(h[..., :d], h[..., d:])

    def decode(self, z):
        """Kind-specific decoder parameters as a dict of tensors."""
        d = self.dim_x
        if self.kind in ("vae", "map"):
            h = self.decoder(z)
            mu, pos = h[..., :d], nd.softplus(h[..., d:])
            return {"mu": mu, "var" if self.kind == "vae" else "precision": pos}
        out = {"mu": self.mu_net(z)}
        if self.kind == "fixed":
            out["var"] = nd.Tensor(self.fixed_variance)
        elif self.kind == "vae_split":
            out["var"] = nd.softplus(self.var_net(z))
        elif self.kind == "student":
            out["precision"] = nd.softplus(self.lam_net(z))
            out["df"] = (self.nu_offset + DF_FLOOR) + nd.softplus(self.nu_net(z))
        elif self.kind == "v3ae":
            out["gamma"] = self.gamma_params(z)
        return out

    # ---- objectives
    def elbo(self, x, rng):
        if self.kind == "student":
            return elbo_student_vae(self, x, rng)
        if self.kind in ("v3ae", "map"):
            return elbo_v3ae(self, x, self.prior, rng)
        return elbo_vae(self, x, rng)


def _encode_sample(model, x, rng):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim_x:
        raise ValueError(f"expected input of shape (n, {model.dim_x}), got {x.shape}")
    mu_z, var_z = model.encode(x)
    z = model.sample_z(mu_z, var_z, rng)
    return x, z, latent_kl(mu_z, var_z)


def elbo_vae(model, x, rng):
    if model.kind not in ("fixed", "vae", "vae_split"):
        raise ValueError(f"elbo_vae does not apply to {model.kind!r}")
    x, z, kl_z = _encode_sample(model, x, rng)
    p = model.decode(z)
    rec = normal_log_prob(x, p["mu"], 1.0 / p["var"], event_dims=1)
    return (rec - kl_z).sum()


def elbo_student_vae(model, x, rng):
    if model.kind != "student":
        raise ValueError(f"elbo_student_vae does not apply to {model.kind!r}")
    x, z, kl_z = _encode_sample(model, x, rng)
    p = model.decode(z)
    params = StudentTParams(p["df"], p["mu"], 1.0 / nd.sqrt(p["precision"]))
    rec = student_t_log_prob(x, params, event_dims=1)
    return (rec - kl_z).sum()


def elbo_v3ae(model, x, prior, rng):
    """V3AE objective; for ``kind="map"`` the inner term is the MAP log joint."""
    if model.kind not in ("v3ae", "map"):
        raise ValueError(f"elbo_v3ae does not apply to {model.kind!r}")
    x, z, kl_z = _encode_sample(model, x, rng)
    p = model.decode(z)
    if model.kind == "map":
        lam = p["precision"]
        log_prior = gamma_log_prob(lam, GammaParams(nd.Tensor(model.map_a), nd.Tensor(model.map_b)))
        inner = normal_log_prob(x, p["mu"], lam, event_dims=1) + log_prior.sum(axis=-1)
    else:
        q = p["gamma"]
        ell = expected_log_likelihood(x, p["mu"], q).sum(axis=-1)
        inner = ell - kl_term(prior, q, z, rng, precision_fn=model.gamma_params)
    return (inner - kl_z).sum()


def _decode_flat(model, z):
    s, n, dz = z.shape
    p = model.decode(nd.Tensor(z.reshape(s * n, dz)))
    out = {}
    for k, v in p.items():
        if isinstance(v, GammaParams):
            out["alpha"] = v.alpha.data.reshape(s, n, -1)
            out["beta"] = v.beta.data.reshape(s, n, -1)
        elif v.ndim == 0:
            out[k] = np.full((s, n, model.dim_x), float(v.data))
        else:
            out[k] = v.data.reshape(s, n, -1)
    return out


def predictive_components(model, x, num_samples, rng):
    """Per-z-sample decoder distributions with a leading component axis."""
    if num_samples < 1:
        raise ValueError("posterior predictive needs at least one latent sample")
    x = np.asarray(x, dtype=np.float64)
    with nd.no_grad():
        model.train(False)
        try:
            mu_z, var_z = model.encode(x)
            z = model.sample_z(mu_z, var_z, rng, n=num_samples).data
            p = _decode_flat(model, z)
        finally:
            model.train(True)
    if model.kind in ("fixed", "vae", "vae_split"):
        return Normal(p["mu"], np.sqrt(p["var"]))
    if model.kind == "map":
        return Normal(p["mu"], 1.0 / np.sqrt(p["precision"]))
    if model.kind == "student":
        return StudentT(p["df"], p["mu"], 1.0 / np.sqrt(p["precision"]))
    return StudentT.from_gamma(p["mu"], p["alpha"], p["beta"])


def posterior_predictive_vae(model, x, num_samples=20, rng=None):
    rng = rng if rng is not None else np.random.default_rng(0)
    return uniform_mixture(predictive_components(model, x, num_samples, rng), event_ndims=1)


def expected_log_likelihood_vae(predictive, x):
    """E_q(z|x)[log p(x* | z)] over the mixture's own components (Jensen lower bound)."""
    return predictive.components.log_prob(np.asarray(x)).sum(axis=-1).mean(axis=0)


def mean_log_predictive_vae(model, x, num_samples, rng):
    return float(np.mean(posterior_predictive_vae(model, x, num_samples, rng).joint_log_prob(x)))


def train_vae(model, train_x, val_x, config, rng, callback=None):
    """Adam on the kind's ELBO; early stopping on validation log p(x* | x).

    Validation draws its latent samples from one fixed seed (``eval_seed`` in
    every history record), so the metric is a function of the parameters alone.
    """
    x = np.asarray(train_x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim_x:
        raise ValueError(f"training data must be (n, {model.dim_x}), got {x.shape}")
    n = len(x)
    if n == 0:
        raise ValueError("empty training split")
    if val_x is not None:
        val_x = np.asarray(val_x, dtype=np.float64)
        if val_x.ndim != 2 or val_x.shape[1] != model.dim_x:
            raise ValueError(f"validation data must be (n, {model.dim_x}), got {val_x.shape}")
    bs = min(config.batch_size or n, n)
    eval_seed = int(rng.integers(2**63))
    history = []
    best, best_metric, since_best = None, -np.inf, 0
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            obj = model.elbo(x[idx], rng)
            try:
                nd.backward(-obj / len(idx))
            except nd.DivergenceError as err:
                raise nd.DivergenceError(f"{model.kind} VAE diverged at epoch {epoch}: {err}", step) from None
            nd.adam_step(model.store, config.learning_rate, *config.adam)
            total += float(obj.data)
            step += 1
        record = {"epoch": epoch, "elbo": total / n}
        if val_x is not None:
            metric = mean_log_predictive_vae(model, val_x, config.mc_samples, np.random.default_rng(eval_seed))
            record["val_log_predictive"] = metric
            record["eval_seed"] = eval_seed
            if metric > best_metric:
                best = (model.store.snapshot(), _bn_state(model))
                best_metric, since_best = metric, 0
            else:
                since_best += 1
        history.append(record)
        if callback is not None:
            callback(model, record)
        if val_x is not None and config.patience is not None and since_best >= config.patience:
            break
    if best is not None:
        model.store.restore(best[0])
        _load_bn_state(model, best[1])
    return model, history


def _norms(model):
    for m in [model.encoder] + model.nets:
        yield from m.norms


def _bn_state(model):
    return [bn.state() for bn in _norms(model)]


def _load_bn_state(model, states):
    for bn, st in zip(_norms(model), states):
        bn.load_state(st)
