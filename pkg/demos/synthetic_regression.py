"""Write the synthetic CSV and run the regression command on it, as a user would
from the shell: ``varvar regress --config configs/regress.json``."""
import os
from pathlib import Path

from make_synthetic_csv import make

from varvar.harness import cli

root = Path(__file__).resolve().parents[1]
os.chdir(root)
make("configs/data/synthetic.csv")
code = cli.main(["regress", "--config", "configs/regress.json", "--trials", "2", "--out", "results/demo"])
print(Path("results/demo/uci/synthetic/summary.csv").read_text())
raise SystemExit(code)
