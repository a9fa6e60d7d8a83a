"""Posterior predictive checks, the two-sample KS test and win/tie tallies."""
from dataclasses import dataclass, field

import numpy as np

REGRESSION_METRICS = ("ll", "mean_bias", "mean_rmse", "var_bias", "var_rmse", "sample_bias", "sample_rmse")
VAE_METRICS = ("ll", "mean_rmse", "var_bias", "sample_rmse")
# how a metric's winner is chosen in tally_wins
METRIC_DIRECTION = {
    "ll": "max",
    "mean_bias": "absmin", "var_bias": "absmin", "sample_bias": "absmin",
    "mean_rmse": "min", "var_rmse": "min", "sample_rmse": "min",
}


@dataclass
class PpcReport:
    ll: float
    mean_bias: float
    mean_rmse: float
    var_bias: float
    var_rmse: float
    sample_bias: float
    sample_rmse: float
    n: int
    residuals: dict = field(default_factory=dict, repr=False)

    def metrics(self):
        return {k: getattr(self, k) for k in REGRESSION_METRICS}

    def to_dict(self, include_residuals=False):
        out = dict(self.metrics(), n=self.n)
        if include_residuals:
            out["residuals"] = {k: v.tolist() for k, v in self.residuals.items()}
        return out


def bias_rmse(residuals):
    r = np.ravel(residuals)
    return float(np.mean(r)), float(np.sqrt(np.mean(r * r)))


def evaluate(predictive, targets, rng):
    """PPC metrics of one predictive distribution against its targets.

    ``predictive`` exposes ``mean()``, ``variance()``, ``sample(rng)`` and
    ``joint_log_prob(y)`` with targets shaped (n, d). Residuals are pooled over
    all target dimensions before computing bias and RMSE; the log likelihood
    is the per-datum joint log density averaged over data.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    mean = np.asarray(predictive.mean())
    var = np.asarray(predictive.variance())
    if not np.all(np.isfinite(var)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(var))[0])
        raise ValueError(f"predictive variance undefined at datum {bad}")
    err = mean - y
    res = {
        "mean": err,
        "var": var - err * err,
        "sample": predictive.sample(rng) - y,
    }
    ll = np.asarray(predictive.joint_log_prob(y))
    mb, mr = bias_rmse(res["mean"])
    vb, vr = bias_rmse(res["var"])
    sb, sr = bias_rmse(res["sample"])
    return PpcReport(ll=float(np.mean(ll)), mean_bias=mb, mean_rmse=mr, var_bias=vb, var_rmse=vr,
                     sample_bias=sb, sample_rmse=sr, n=len(y),
                     residuals={k: np.ravel(v) for k, v in res.items()} | {"ll": ll})


# ------------------------------------------------------------- KS testing

def kolmogorov_sf(lam, terms=100):
    """P(K > lam) for the Kolmogorov distribution."""
    lam = float(lam)
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # small-argument form converges where the alternating series does not
        k = np.arange(1, terms + 1)
        cdf = np.sqrt(2 * np.pi) / lam * np.sum(np.exp(-((2 * k - 1) ** 2) * np.pi ** 2 / (8 * lam ** 2)))
        return float(min(1.0, max(0.0, 1.0 - cdf)))
    k = np.arange(1, terms + 1)
    p = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k ** 2 * lam ** 2))
    return float(min(1.0, max(0.0, p)))


def ks_two_sample(a, b):
    """Two-sided two-sample KS test; returns (D, asymptotic p-value)."""
    a = np.sort(np.ravel(np.asarray(a, dtype=np.float64)))
    b = np.sort(np.ravel(np.asarray(b, dtype=np.float64)))
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_two_sample needs two nonempty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    return d, kolmogorov_sf(d * np.sqrt(n_eff))


# ------------------------------------------------------------- tallies

def _score(values, better):
    m = float(np.mean(values))
    if better == "max":
        return -m
    if better == "min":
        return m
    if better == "absmin":
        return abs(m)
    raise ValueError(f"better must be 'max', 'min' or 'absmin', got {better!r}")


def tally_wins(results, better="max", alpha=0.05):
    """Count wins and statistical ties per method.

    ``results`` maps dataset -> method -> per-trial metric values. Per dataset
    the method with the best mean wins (ties in the mean go to the
    lexicographically first method name); every method whose trials a KS test
    cannot distinguish from the winner's (p > alpha) scores a tie, the winner
    included. Returns {method: (wins, ties)}.
    """
    if not results:
        raise ValueError("no datasets to tally")
    methods = sorted({m for per in results.values() for m in per})
    if not methods:
        raise ValueError("no methods to tally")
    wins = dict.fromkeys(methods, 0)
    ties = dict.fromkeys(methods, 0)
    for per_method in results.values():
        if not per_method:
            continue
        for m, v in per_method.items():
            if np.size(v) < 2:
                raise ValueError(f"method {m!r} needs at least 2 trials, got {np.size(v)}")
        winner = min(sorted(per_method), key=lambda m: _score(per_method[m], better))
        wins[winner] += 1
        for m, v in per_method.items():
            if m == winner or ks_two_sample(v, per_method[winner])[1] > alpha:
                ties[m] += 1
    return {m: (wins[m], ties[m]) for m in methods}


def mean_std(values):
    """Mean and sample (n-1) standard deviation; std is 0 for one value."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0
