"""Write a small heteroscedastic regression CSV for trying ``varvar regress``.

y = 2 x0 - x1 + 0.5 sin(3 x2) + noise whose std grows with |x0|; x3 is a
nuisance column. Usage: python demos/make_synthetic_csv.py [path] [rows]
"""
import csv
import sys

import numpy as np


def make(path="configs/data/synthetic.csv", rows=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, size=(rows, 4))
    noise = (0.1 + 0.4 * np.abs(x[:, 0])) * rng.standard_normal(rows)
    y = 2 * x[:, 0] - x[:, 1] + 0.5 * np.sin(3 * x[:, 2]) + noise
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x0", "x1", "x2", "x3", "y"])
        for row, target in zip(x, y):
            w.writerow([f"{v:.6f}" for v in row] + [f"{target:.6f}"])
    return path


if __name__ == "__main__":
    args = sys.argv[1:]
    print(make(*args[:1], *(int(a) for a in args[1:2])))
