"""Train a fixed-variance VAE and a V3AE on 16x16 digits and compare their
posterior predictive checks. The fixed variance of 1 is far too large for
pixels in [0, 1], which shows up as a variance bias near 1."""
import numpy as np

from varvar import ppc, v3ae
from varvar.harness import data
from varvar.priors import PriorConfig

x, _ = data.digits_16x16()
train_x, val_x = data.image_split(x, 0.1, np.random.default_rng(0))
cfg = v3ae.VaeConfig.desk(epochs=30)
print(f"{'model':8s} " + " ".join(f"{m:>11s}" for m in ppc.VAE_METRICS))
for kind in ("fixed", "vae", "v3ae"):
    rng = np.random.default_rng(1)
    model = v3ae.VaeModel(kind, x.shape[1], cfg.dim_z, rng, hidden=cfg.hidden,
                          prior=PriorConfig("Standard") if kind == "v3ae" else None)
    model, history = v3ae.train_vae(model, train_x, val_x, cfg, rng)
    pred = v3ae.posterior_predictive_vae(model, val_x, cfg.mc_samples, rng)
    report = ppc.evaluate(pred, val_x, rng)
    print(f"{kind:8s} " + " ".join(f"{getattr(report, m):11.4f}" for m in ppc.VAE_METRICS))
    if kind == "v3ae":
        data.write_grid_csv("results/demo_v3ae_grid.csv", val_x[:8], pred.mean()[:8],
                            pred.variance()[:8], pred.sample(rng)[:8])
print("image grid for plotting: results/demo_v3ae_grid.csv")
