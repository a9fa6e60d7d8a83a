from . import data, experiment
from .data import Dataset, load_csv, toy_generate
from .experiment import ExperimentConfig, dewhiten_predictive, run_experiment, summarize
