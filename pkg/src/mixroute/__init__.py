"""mixroute: per-sample adaptive routing over modality paths and task
paradigms for multitask heteroscedastic regression, with synthetic
benchmarks, tabular synthesis, and routing diagnostics."""

__version__ = "0.1.0"
