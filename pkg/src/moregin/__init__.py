"""Multi-objective re-ranking for provider-fair, genre-calibrated recommendation lists."""

__version__ = "0.1.0"
