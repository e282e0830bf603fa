"""Causal anomaly root-cause analysis with measurement / mechanistic outlier classification."""

from .assign import AssignConfig, Assignment, Report, explain, mle_assign
from .graph import Dag, InterventionPattern, read_dag, write_dag
from .likelihood import OutlierPriors, Rates, log_joint
from .model import FittedScm, fit_scm
from .synth import GroundTruth, SynthSpec, default_rates, generate

__version__ = "0.1.0"

__all__ = [
    "AssignConfig", "Assignment", "Dag", "FittedScm", "GroundTruth", "InterventionPattern",
    "OutlierPriors", "Rates", "Report", "SynthSpec", "default_rates", "explain", "fit_scm",
    "generate", "log_joint", "mle_assign", "read_dag", "write_dag",
]
