"""Model problems, experiment drivers, CSV reports and the command line."""

from .experiments import ExperimentConfig, run_variants, write_reports
from .problems import Problem, make_problem, make_reference
