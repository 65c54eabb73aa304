"""Numerical experiments: reference fields, sweeps, minimisation and reports."""
from .report import ExperimentReport, ReportRow, Verdict
from .sweep import EXPERIMENTS, SweepPlan, run_sweep

__all__ = ["EXPERIMENTS", "ExperimentReport", "ReportRow", "SweepPlan", "Verdict", "run_sweep"]
