"""fairrep: fairness-aware patient representation learning on tabular data."""

__version__ = "0.1.0"
