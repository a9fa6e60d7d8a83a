import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varvar import ndcore as nd
from varvar import ppc
from varvar.dists import Normal, StudentT, StudentTParams, student_t_log_prob


def test_point_mass_predictive():
    y = np.random.default_rng(0).normal(size=(50, 1))
    sigma2 = 1e-12
    rep = ppc.evaluate(Normal(y, np.sqrt(sigma2)), y, np.random.default_rng(1))
    assert rep.mean_bias == 0 and rep.mean_rmse == 0
    assert rep.var_bias == pytest.approx(sigma2, rel=1e-9)


def test_standard_normal_predictive():
    n = 10**5
    rng = np.random.default_rng(2)
    y = rng.normal(size=(n, 1))
    rep = ppc.evaluate(Normal(np.zeros((n, 1)), np.ones((n, 1))), y, rng)
    se = rep.residuals["var"].std() / np.sqrt(n)
    assert abs(rep.var_bias) < 4 * se
    ll_se = rep.residuals["ll"].std() / np.sqrt(n)
    assert abs(rep.ll + 0.5 * (np.log(2 * np.pi) + 1)) < 4 * ll_se


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 40), st.integers(1, 3))
def test_bias_rmse_identities(seed, n, d):
    rng = np.random.default_rng(seed)
    pred = StudentT(rng.uniform(2.5, 10, (n, d)), rng.normal(size=(n, d)), rng.uniform(0.1, 2, (n, d)))
    rep = ppc.evaluate(pred, rng.normal(size=(n, d)), rng)
    for fam in ("mean", "var", "sample"):
        r = rep.residuals[fam]
        bias, rmse = getattr(rep, f"{fam}_bias"), getattr(rep, f"{fam}_rmse")
        assert rmse >= abs(bias) - 1e-12
        assert rmse ** 2 == pytest.approx(bias ** 2 + r.var(), abs=1e-10 * max(1.0, rmse ** 2))
    assert all(np.isfinite(v) for v in rep.metrics().values())
    assert rep.n == n


def test_evaluate_is_deterministic():
    rng = np.random.default_rng(3)
    pred = Normal(rng.normal(size=(30, 2)), rng.uniform(0.5, 1, (30, 2)))
    y = rng.normal(size=(30, 2))
    a = ppc.evaluate(pred, y, np.random.default_rng(9)).to_dict(True)
    b = ppc.evaluate(pred, y, np.random.default_rng(9)).to_dict(True)
    assert a == b


def test_undefined_variance_names_datum():
    pred = StudentT(np.array([[5.0], [1.5]]), np.zeros((2, 1)), np.ones((2, 1)))
    with pytest.raises(ValueError, match=r"\(1, 0\)"):
        ppc.evaluate(pred, np.zeros((2, 1)), np.random.default_rng(0))


def test_student_ll_matches_dists():
    rng = np.random.default_rng(4)
    df, loc, scale = rng.uniform(3, 9, (20, 1)), rng.normal(size=(20, 1)), rng.uniform(0.3, 2, (20, 1))
    y = rng.normal(size=(20, 1))
    rep = ppc.evaluate(StudentT(df, loc, scale), y, rng)
    ref = student_t_log_prob(y, StudentTParams(nd.Tensor(df), nd.Tensor(loc), nd.Tensor(scale))).data
    assert rep.ll == np.mean(ref)


def test_ks_examples():
    a = np.random.default_rng(5).normal(size=200)
    assert ppc.ks_two_sample(a, a) == (0.0, 1.0)
    rng = np.random.default_rng(6)
    u, v = rng.uniform(size=1000), rng.uniform(0.5, 1.5, size=1000)
    d, p = ppc.ks_two_sample(u, v)
    # brute-force empirical CDFs on a fine grid
    grid = np.sort(np.r_[u, v])
    brute = max(abs((u <= t).mean() - (v <= t).mean()) for t in grid)
    assert d == pytest.approx(brute, abs=1e-15)
    assert p < 1e-6
    with pytest.raises(ValueError):
        ppc.ks_two_sample([], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_ks_invariant_to_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=40), rng.normal(0.3, size=60)
    d1, _ = ppc.ks_two_sample(a, b)
    d2, _ = ppc.ks_two_sample(np.exp(a) * 3 + 1, np.exp(b) * 3 + 1)
    assert d1 == d2


def test_kolmogorov_distribution_values():
    from scipy.stats import kstwobign
    for lam in (0.2, 0.5, 0.9, 1.0, 1.36, 2.5):
        assert ppc.kolmogorov_sf(lam) == pytest.approx(kstwobign.sf(lam), abs=1e-12)


def test_tally_examples():
    rng = np.random.default_rng(7)
    v = rng.normal(size=10)
    assert ppc.tally_wins({"d": {"A": v}}) == {"A": (1, 1)}
    assert ppc.tally_wins({"d": {"A": v, "B": v.copy()}}) == {"A": (1, 1), "B": (0, 1)}
    res = ppc.tally_wins({"d": {"A": v, "B": v + 100}}, better="min")
    assert res == {"A": (1, 1), "B": (0, 0)}
    assert ppc.tally_wins({"d": {"A": v - 0.01, "B": v}}, better="absmin")["A"][1] == 1
    with pytest.raises(ValueError):
        ppc.tally_wins({})
    with pytest.raises(ValueError):
        ppc.tally_wins({"d": {"A": [1.0]}})
    # mismatched trial counts are allowed
    ppc.tally_wins({"d": {"A": v, "B": v[:5]}})


def test_tally_permutation_invariant():
    rng = np.random.default_rng(8)
    results = {f"ds{k}": {m: rng.normal(i * 0.3, 1, size=8) for i, m in enumerate("ABCDE")} for k in range(6)}
    base = ppc.tally_wins(results)
    for _ in range(5):
        order = rng.permutation(list("ABCDE"))
        shuffled = {d: {m: per[m] for m in order} for d, per in results.items()}
        assert ppc.tally_wins(shuffled) == base


def test_mean_std_uses_sample_std():
    assert ppc.mean_std([1.0, 3.0]) == (2.0, pytest.approx(np.sqrt(2)))
    assert ppc.mean_std([4.0]) == (4.0, 0.0)
