"""Fit the toy x sin(x) process with a Normal network and two variational
priors, then print how each predictive std compares with the truth inside
and outside the training range.

Runs in about a minute; pass an epoch count to change the training length.
"""
import sys

import numpy as np

from varvar import regress
from varvar.harness import data
from varvar.harness.experiment import dewhiten_predictive, toy_grid_metrics
from varvar.priors import PriorConfig

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
rng = np.random.default_rng(0)
ds = data.toy_generate(500, rng)
x_train, y_train = ds.train
lo, hi = ds.whiten_x(np.array([[-4.0], [14.0]]))[:, 0]
a, b = data.toy_precision_prior()

models = {
    "Normal": regress.RegressionModel("normal", 1, 1, rng, activation="sigmoid", init="uniform", input_gain=6.0),
    "VAP": regress.RegressionModel("variational", 1, 1, rng, activation="sigmoid", init="uniform", input_gain=6.0,
                                   prior=PriorConfig("VAP")),
    "Standard": regress.RegressionModel("variational", 1, 1, rng, activation="sigmoid", init="uniform",
                                        input_gain=6.0, prior=PriorConfig("Standard", a=a, b=b / ds.y_scale[0] ** 2)),
    "xVAMP": regress.RegressionModel("variational", 1, 1, rng, activation="sigmoid", init="uniform", input_gain=6.0,
                                     prior=PriorConfig("xVAMP", num_components=20, pseudo_range=(lo, hi))),
}
print(f"{'method':10s} {'mean rmse [0,10]':>17s} {'std mae [2,8]':>14s} {'std outside':>12s}")
for name, model in models.items():
    regress.train(model, (x_train, y_train), None, regress.TrainConfig(5e-3, None, epochs, None), rng)
    pred = dewhiten_predictive(regress.posterior_predictive(model, ds.whiten_x(ds.x_test)), ds.y_scale, ds.y_mean)
    m = toy_grid_metrics(ds.x_test, pred.mean(), pred.stddev())
    print(f"{name:10s} {m['mean_rmse_0_10']:17.3f} {m['std_mae_2_8']:14.3f} {m['std_outside']:12.2f}")
print(f"true std outside the training range averages {m['true_std_outside']:.2f}")
