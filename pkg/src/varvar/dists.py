"""Normal, Gamma, Student-t and finite-mixture distributions.

The ``*_log_prob`` / ``gamma_*`` functions operate on :class:`Tensor` values and
are differentiable. :class:`Normal`, :class:`StudentT` and :class:`MixtureDist`
are frozen numpy-backed predictive distributions used for evaluation.

Gamma is always parameterized by shape ``alpha`` and *rate* ``beta`` (mean
alpha / beta).
"""
from dataclasses import dataclass

import numpy as np
from scipy import special as sps

from . import ndcore as nd
from .ndcore import special

LOG_2PI = float(np.log(2.0 * np.pi))


def _require_positive(label, *values):
    for v in values:
        data = v.data if isinstance(v, nd.Tensor) else np.asarray(v)
        if not np.all(data > 0):
            raise ValueError(f"{label}: parameters must be positive")


def _sum_trailing(x, event_dims):
    for _ in range(event_dims):
        x = x.sum(axis=-1)
    return x


# ------------------------------------------------------------------- Normal

def normal_log_prob(y, mu, lam, event_dims=0):
    """Gaussian log density in precision form; sums ``event_dims`` trailing axes."""
    resid = nd.as_tensor(y) - mu
    out = 0.5 * (nd.log(lam) - LOG_2PI - lam * nd.square(resid))
    return _sum_trailing(out, event_dims)


# -------------------------------------------------------------------- Gamma

@dataclass(frozen=True)
class GammaParams:
    alpha: nd.Tensor
    beta: nd.Tensor

    def __post_init__(self):
        object.__setattr__(self, "alpha", nd.as_tensor(self.alpha))
        object.__setattr__(self, "beta", nd.as_tensor(self.beta))

    @property
    def shape(self):
        return np.broadcast_shapes(self.alpha.shape, self.beta.shape)

    def mean(self):
        return self.alpha.data / self.beta.data


def gamma_log_prob(lam, q):
    a, b = q.alpha, q.beta
    return a * nd.log(b) - nd.lgamma(a) + (a - 1.0) * nd.log(lam) - b * lam


def gamma_entropy(q):
    _require_positive("gamma_entropy", q.alpha, q.beta)
    a, b = q.alpha, q.beta
    return a - nd.log(b) + nd.lgamma(a) + (1.0 - a) * nd.digamma(a)


def gamma_kl(q, p):
    """KL(q || p) between two Gamma distributions, elementwise."""
    _require_positive("gamma_kl", q.alpha, q.beta, p.alpha, p.beta)
    a1, b1, a2, b2 = q.alpha, q.beta, p.alpha, p.beta
    return ((a1 - a2) * nd.digamma(a1) - nd.lgamma(a1) + nd.lgamma(a2)
            + a2 * (nd.log(b1) - nd.log(b2)) + a1 * (b2 - b1) / b1)


def _dgammainc_dalpha(alpha, x):
    h = np.minimum(1e-5 * np.maximum(1.0, alpha), 0.5 * alpha)
    return (sps.gammainc(alpha + h, x) - sps.gammainc(alpha - h, x)) / (2.0 * h)


def standard_gamma_implicit_grad(alpha, x):
    """dx/dalpha for x ~ Gam(alpha, 1) by implicit differentiation of the CDF."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_pdf = (alpha - 1.0) * np.log(x) - x - special.lgamma(alpha)
        grad = -_dgammainc_dalpha(alpha, x) / np.exp(log_pdf)
    return np.where(np.isfinite(grad), grad, 0.0)


def gamma_sample(q, n, rng):
    """Draw ``n`` samples (leading axis) with pathwise gradients to alpha and beta.

    ``n=None`` draws one sample of the parameter shape without the leading axis.
    """
    _require_positive("gamma_sample", q.alpha, q.beta)
    shape = q.shape
    alpha = np.broadcast_to(q.alpha.data, shape)
    beta = np.broadcast_to(q.beta.data, shape)
    out_shape = shape if n is None else (int(n),) + shape
    std = rng.standard_gamma(np.broadcast_to(alpha, out_shape))
    z = std / beta
    if not z.size:
        return nd.Tensor(z)
    dz_dalpha = standard_gamma_implicit_grad(np.broadcast_to(alpha, out_shape), std) / beta
    a_t, b_t = q.alpha, q.beta

    def bw(g):
        ga = g * dz_dalpha
        gb = -g * z / beta
        if n is not None:
            ga, gb = ga.sum(axis=0), gb.sum(axis=0)
        return nd.tensor._unbroadcast(ga, a_t.shape), nd.tensor._unbroadcast(gb, b_t.shape)
    return nd.make_node(z, (a_t, b_t), bw)


# --------------------------------------------------------------- Student-t

@dataclass(frozen=True)
class StudentTParams:
    df: nd.Tensor
    loc: nd.Tensor
    scale: nd.Tensor

    @classmethod
    def from_gamma(cls, mu, q):
        """Student-t obtained by integrating N(y | mu, lam) against Gam(lam | alpha, beta)."""
        return cls(2.0 * q.alpha, mu, nd.sqrt(q.beta / q.alpha))


def student_t_log_prob(y, params, event_dims=0):
    df, loc, scale = (nd.as_tensor(v) for v in (params.df, params.loc, params.scale))
    _require_positive("student_t_log_prob", df, scale)
    t = (nd.as_tensor(y) - loc) / scale
    half = 0.5 * (df + 1.0)
    out = (nd.lgamma(half) - nd.lgamma(0.5 * df) - 0.5 * nd.log(df * np.pi) - nd.log(scale)
           - half * nd.log1p(nd.square(t) / df))
    return _sum_trailing(out, event_dims)


# ------------------------------------------------------ predictive (numpy)

class _Predictive:
    def joint_log_prob(self, y):
        """Log density summed over the last (event) axis."""
        return self.log_prob(y).sum(axis=-1)

    def stddev(self):
        return np.sqrt(self.variance())


@dataclass(frozen=True)
class Normal(_Predictive):
    loc: np.ndarray
    scale: np.ndarray

    def log_prob(self, y):
        z = (np.asarray(y) - self.loc) / self.scale
        return -0.5 * (LOG_2PI + z * z) - np.log(self.scale)

    def mean(self):
        return np.asarray(self.loc)

    def variance(self):
        return np.broadcast_to(np.square(self.scale), np.shape(self.loc)).copy()

    def sample(self, rng):
        return self.loc + self.scale * rng.standard_normal(np.broadcast_shapes(np.shape(self.loc), np.shape(self.scale)))

    def affine(self, shift, scale):
        return Normal(self.loc * scale + shift, self.scale * scale)

    def take(self, index):
        shape = np.broadcast_shapes(np.shape(self.loc), np.shape(self.scale))
        return Normal(np.broadcast_to(self.loc, shape)[index], np.broadcast_to(self.scale, shape)[index])


@dataclass(frozen=True)
class StudentT(_Predictive):
    df: np.ndarray
    loc: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_gamma(cls, mu, alpha, beta):
        return cls(2.0 * alpha, mu, np.sqrt(beta / alpha))

    def log_prob(self, y):
        df = self.df
        t = (np.asarray(y) - self.loc) / self.scale
        half = 0.5 * (df + 1.0)
        return (special.lgamma(half) - special.lgamma(0.5 * df) - 0.5 * np.log(df * np.pi)
                - np.log(self.scale) - half * np.log1p(t * t / df))

    def mean(self):
        return np.asarray(self.loc)

    def variance(self):
        df = np.broadcast_to(self.df, np.shape(self.loc))
        if np.any(df <= 2):
            bad = np.argwhere(df <= 2)[0]
            raise ValueError(f"Student-t variance undefined (df <= 2) at index {tuple(int(i) for i in bad)}")
        return np.square(self.scale) * df / (df - 2.0)

    def sample(self, rng):
        shape = np.broadcast_shapes(np.shape(self.df), np.shape(self.loc), np.shape(self.scale))
        return self.loc + self.scale * rng.standard_t(np.broadcast_to(self.df, shape))

    def affine(self, shift, scale):
        return StudentT(self.df, self.loc * scale + shift, self.scale * scale)

    def take(self, index):
        df = np.broadcast_to(self.df, np.shape(self.loc))
        return StudentT(df[index], self.loc[index], self.scale[index])


@dataclass(frozen=True)
class MixtureDist(_Predictive):
    """Finite mixture; component parameters carry the component index on axis 0.

    With ``event_ndims=1`` a single component is shared by all entries of the
    last axis (e.g. one latent draw generates a whole image); ``log_prob``
    always returns the per-entry marginal density.
    """
    components: _Predictive
    weights: np.ndarray
    event_ndims: int = 1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be a nonnegative vector summing to 1")
        if len(w) != np.shape(self.components.loc)[0]:
            raise ValueError(f"{len(w)} weights for {np.shape(self.components.loc)[0]} components")
        object.__setattr__(self, "weights", w)

    @property
    def num_components(self):
        return len(self.weights)

    def _log_w(self, ndim):
        with np.errstate(divide="ignore"):
            return np.log(self.weights).reshape((-1,) + (1,) * (ndim - 1))

    def log_prob(self, y):
        lp = self.components.log_prob(y)
        return _lse0(lp + self._log_w(lp.ndim))

    def joint_log_prob(self, y):
        lp = _sum_axes(self.components.log_prob(y), self.event_ndims)
        return _lse0(lp + self._log_w(lp.ndim))

    def mean(self):
        w = self._w_like()
        return (w * self.components.mean()).sum(axis=0)

    def variance(self):
        w = self._w_like()
        mu = self.components.mean()
        second = (w * (self.components.variance() + mu * mu)).sum(axis=0)
        return second - np.square((w * mu).sum(axis=0))

    def _w_like(self):
        return self.weights.reshape((-1,) + (1,) * (np.ndim(self.components.loc) - 1))

    def sample(self, rng):
        full = np.shape(self.components.loc)
        batch = full[1:len(full) - self.event_ndims]
        u = rng.uniform(size=batch)
        cdf = np.cumsum(self.weights)
        idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1)
        grid = np.indices(batch) if batch else ()
        index = (idx,) + tuple(grid)
        return self.components.take(index).sample(rng)

    def affine(self, shift, scale):
        return MixtureDist(self.components.affine(shift, scale), self.weights, self.event_ndims)


def _lse0(a):
    m = a.max(axis=0)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.exp(a - m).sum(axis=0)) + m


def _sum_axes(a, k):
    for _ in range(k):
        a = a.sum(axis=-1)
    return a


def mixture_log_prob(m, y):
    return m.log_prob(y)


def mixture_mean(m):
    return m.mean()


def mixture_variance(m):
    return m.variance()


def mixture_sample(m, rng):
    return m.sample(rng)


def uniform_mixture(components, event_ndims=1):
    s = np.shape(components.loc)[0]
    return MixtureDist(components, np.full(s, 1.0 / s), event_ndims)
