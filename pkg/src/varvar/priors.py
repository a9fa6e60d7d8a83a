"""Precision priors and their KL contributions to the ELBO.

Eight kinds are supported. ``VAP`` sets the prior equal to the variational
posterior (zero penalty). ``Standard`` is a fixed Gam(a, b). ``VAMP`` is the
aggregate posterior over K pseudo-inputs and ``xVAMP`` reweights the same
components with a learned simplex map pi(x). ``VBEM`` mixes fixed Gamma
components with weights pi(x). Starred kinds make the pseudo-inputs (or the
VBEM component parameters) trainable.

KL terms are returned per datum, summed over output dimensions. For the
mixture kinds the cross term E_q[log p(lam)] is a Monte-Carlo estimate; the
mixture is taken jointly over the precision vector of each datum.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import ndcore as nd
from .dists import GammaParams, gamma_entropy, gamma_kl, gamma_log_prob, gamma_sample

KINDS = ("VAP", "Standard", "VAMP", "VAMP*", "xVAMP", "xVAMP*", "VBEM", "VBEM*")
_ALIASES = {k.lower().replace("*", "star"): k for k in KINDS}
_ALIASES.update({"gamma": "Standard", "standard-gamma": "Standard"})

VBEM_GRID = (0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
LOG_DENSITY_FLOOR = float(np.log(1e-300))


def canonical_kind(kind):
    try:
        return _ALIASES[str(kind).lower().replace("*", "star")]
    except KeyError:
        raise ValueError(f"unknown prior kind {kind!r}; expected one of {KINDS}") from None


def is_starred(kind):
    return kind.endswith("*")


def uses_pseudo_inputs(kind):
    return kind in ("VAMP", "VAMP*", "xVAMP", "xVAMP*")


def uses_mixture_head(kind):
    return kind in ("xVAMP", "xVAMP*", "VBEM", "VBEM*")


@dataclass
class PriorConfig:
    kind: str = "Standard"
    a: float = 1.0
    b: float = 0.001
    num_components: int = 100
    pseudo_range: tuple = None
    mc_samples: int = 1
    pi_hidden: tuple = (50,)
    pi_activation: str = "elu"

    def __post_init__(self):
        self.kind = canonical_kind(self.kind)


@dataclass
class PriorSpec:
    kind: str
    a: float = 1.0
    b: float = 0.001
    pseudo_inputs: nd.Tensor = None
    vbem_a: nd.Tensor = None
    vbem_b: nd.Tensor = None
    trainable: bool = False
    pi_head: nd.MLP = None
    mc_samples: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def num_components(self):
        if self.pseudo_inputs is not None:
            return self.pseudo_inputs.shape[0]
        if self.vbem_a is not None:
            return self.vbem_a.shape[0]
        return 0

    def vbem_params(self):
        """Effective (a_j, b_j); softplus of the raw values for VBEM*."""
        if self.kind == "VBEM*":
            return nd.softplus(self.vbem_a), nd.softplus(self.vbem_b)
        return self.vbem_a, self.vbem_b

    def log_weights(self, cond, n=None):
        """Log mixture proportions, shape (n, K)."""
        k = self.num_components
        if self.kind in ("VAMP", "VAMP*"):
            return nd.Tensor(np.full((len(cond) if n is None else n, k), -np.log(k)))
        if self.pi_head is None:
            raise ValueError(f"{self.kind} prior has no mixture head")
        logits = self.pi_head(cond)
        with nd.no_grad():
            pi = nd.softmax(logits).data
        if not np.allclose(pi.sum(axis=-1), 1.0, atol=1e-9) or np.any(pi < 0):
            raise ValueError("mixture head output is off the simplex")
        return nd.log_softmax(logits)


def vbem_grid():
    pairs = np.array(list(itertools.product(VBEM_GRID, VBEM_GRID)))
    return pairs[:, 0], pairs[:, 1]


def init_prior(kind, config=None, training_inputs=None, rng=None, store=None,
               cond_dim=None, latent=False, name="prior"):
    """Build a :class:`PriorSpec`; trainable pieces are registered in ``store``."""
    config = config or PriorConfig(kind)
    kind = canonical_kind(kind)
    rng = rng if rng is not None else np.random.default_rng(0)
    if training_inputs is not None:
        training_inputs = np.asarray(training_inputs, dtype=np.float64)
        if training_inputs.ndim == 1:
            training_inputs = training_inputs[:, None]
        cond_dim = cond_dim or training_inputs.shape[1]
    spec = PriorSpec(kind=kind, a=config.a, b=config.b, trainable=is_starred(kind),
                     mc_samples=config.mc_samples)
    if kind == "Standard" and not (config.a > 0 and config.b > 0):
        raise ValueError(f"Standard prior needs a, b > 0, got a={config.a}, b={config.b}")
    k = config.num_components

    if uses_pseudo_inputs(kind):
        if cond_dim is None and training_inputs is None:
            raise ValueError(f"{kind} prior needs the input dimension (cond_dim) or training inputs")
        if latent:
            u = rng.standard_normal((k, cond_dim))
        elif config.pseudo_range is not None:
            lo, hi = config.pseudo_range
            u = rng.uniform(lo, hi, size=(k, cond_dim))
        else:
            if training_inputs is None:
                raise ValueError(f"{kind} prior needs training inputs to draw pseudo-inputs")
            n = len(training_inputs)
            if k > n:
                raise ValueError(f"cannot draw {k} pseudo-inputs without replacement from {n} rows")
            u = training_inputs[rng.choice(n, size=k, replace=False)]
        if spec.trainable:
            spec.pseudo_inputs = _register(store, f"{name}/pseudo_inputs", u)
        else:
            spec.pseudo_inputs = nd.Tensor(u)
    elif kind == "VBEM":
        a, b = vbem_grid()
        spec.vbem_a, spec.vbem_b = nd.Tensor(a), nd.Tensor(b)
    elif kind == "VBEM*":
        spec.vbem_a = _register(store, f"{name}/a_raw", rng.uniform(-3, 3, size=k))
        spec.vbem_b = _register(store, f"{name}/b_raw", rng.uniform(-3, 3, size=k))

    if uses_mixture_head(kind):
        if cond_dim is None:
            raise ValueError(f"{kind} prior needs the conditioning dimension for its mixture head")
        if store is None:
            raise ValueError(f"{kind} prior needs a ParamStore for its mixture head")
        sizes = (cond_dim,) + tuple(config.pi_hidden) + (spec.num_components,)
        spec.pi_head = nd.MLP(store, f"{name}/pi", sizes, rng, act=config.pi_activation)
    return spec


def _register(store, name, value):
    if store is None:
        raise ValueError(f"trainable prior parameter {name!r} needs a ParamStore")
    return store.add(name, value)


def component_params(prior, precision_fn=None):
    """Mixture component Gammas with a leading K axis."""
    if uses_pseudo_inputs(prior.kind):
        if prior.pseudo_inputs is None:
            raise ValueError(f"{prior.kind} prior has uninitialized pseudo-inputs")
        if precision_fn is None:
            raise ValueError(f"{prior.kind} prior needs the model's precision heads")
        return precision_fn(prior.pseudo_inputs)
    if prior.kind in ("VBEM", "VBEM*"):
        a, b = prior.vbem_params()
        return GammaParams(nd.reshape(a, (-1, 1)), nd.reshape(b, (-1, 1)))
    raise ValueError(f"{prior.kind} prior has no mixture components")


def kl_term(prior, q, cond, rng, precision_fn=None, samples=None):
    """Per-datum KL(q(lam | cond) || p(lam)), shape (n,).

    ``q`` holds (n, D) shape/rate tensors. ``precision_fn`` maps pseudo-inputs
    to their GammaParams (VAMP families). ``samples`` optionally supplies
    lam ~ q of shape (S, n, D) to reuse.
    """
    kind = prior.kind
    n = q.shape[0]
    if kind == "VAP":
        return nd.Tensor(np.zeros(n))
    if kind == "Standard":
        p = GammaParams(nd.Tensor(prior.a), nd.Tensor(prior.b))
        return gamma_kl(q, p).sum(axis=-1)

    neg_entropy = -gamma_entropy(q).sum(axis=-1)
    lam = samples if samples is not None else gamma_sample(q, prior.mc_samples, rng)
    comps = component_params(prior, precision_fn)
    # lam (S, n, 1, D) against components (1, 1, K, D|1)
    lam4 = nd.expand_dims(lam, 2)
    k = comps.alpha.shape[0]
    c_a = nd.reshape(comps.alpha, (1, 1, k, -1))
    c_b = nd.reshape(comps.beta, (1, 1, k, -1))
    log_comp = gamma_log_prob(lam4, GammaParams(c_a, c_b)).sum(axis=-1)
    log_comp = nd.maximum(log_comp, LOG_DENSITY_FLOOR)
    log_w = prior.log_weights(cond, n)
    cross = nd.log_sum_exp(log_comp + nd.expand_dims(log_w, 0), axis=-1)
    return neg_entropy - cross.mean(axis=0)
