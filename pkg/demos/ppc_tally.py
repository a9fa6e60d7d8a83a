"""Posterior predictive checks on a known answer, then a win/tie tally over
made-up per-trial scores."""
import numpy as np

from varvar import ppc
from varvar.dists import Normal, StudentT

rng = np.random.default_rng(0)
y = rng.normal(size=(5000, 1))
for name, pred in (("calibrated", Normal(np.zeros_like(y), np.ones_like(y))),
                   ("too wide", Normal(np.zeros_like(y), 2 * np.ones_like(y))),
                   ("heavy tails", StudentT(np.full_like(y, 3.0), np.zeros_like(y), np.ones_like(y)))):
    r = ppc.evaluate(pred, y, rng)
    print(f"{name:12s} ll {r.ll:7.3f}  var bias {r.var_bias:6.3f}  sample rmse {r.sample_rmse:5.3f}")

scores = {ds: {"A": rng.normal(-1.0, 0.1, 20), "B": rng.normal(-1.02, 0.1, 20), "C": rng.normal(-1.5, 0.1, 20)}
          for ds in ("d1", "d2", "d3")}
for method, (wins, ties) in ppc.tally_wins(scores, better="max").items():
    print(f"{method}: {wins} wins ({ties})")
